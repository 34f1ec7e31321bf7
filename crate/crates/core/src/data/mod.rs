//! Interaction data model, encodings, splits and augmentation.
//!
//! Exercise, student and KC identifiers from input files are re-indexed to
//! contiguous `usize` values on load; the original names are kept on the
//! [`Dataset`] for export.

mod csv_io;
pub mod synthetic;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use csv_io::{load_csv, read_aux_csv, write_aux_csv, write_csv, CsvFormat};
pub use synthetic::{
    generate_synthetic, GroundTruth, PriorRanges, SkillParams, StudentState, SyntheticConfig,
};

/// Sequences longer than this are cut into consecutive windows.
pub const MAX_SEQUENCE_LEN: usize = 200;
/// Shorter sequences (and trailing windows) are dropped.
pub const MIN_SEQUENCE_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub exercise: usize,
    pub correct: bool,
    /// Time surrogate, strictly increasing within a student.
    pub order: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentSequence {
    pub student: usize,
    pub interactions: Vec<Interaction>,
}

impl StudentSequence {
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }
}

/// Exercise → sorted set of KC indices in `[0, n_kcs)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMatrix {
    n_kcs: usize,
    tags: Vec<Vec<usize>>,
}

impl QMatrix {
    pub fn new(n_kcs: usize, tags: Vec<Vec<usize>>) -> Result<Self> {
        let mut clean = Vec::with_capacity(tags.len());
        for set in tags {
            let set: BTreeSet<usize> = set.into_iter().collect();
            if let Some(&bad) = set.iter().find(|&&k| k >= n_kcs) {
                return Err(Error::UnknownKc(bad));
            }
            clean.push(set.into_iter().collect());
        }
        Ok(QMatrix { n_kcs, tags: clean })
    }

    pub fn n_kcs(&self) -> usize {
        self.n_kcs
    }

    pub fn n_exercises(&self) -> usize {
        self.tags.len()
    }

    pub fn kcs(&self, exercise: usize) -> Result<&[usize]> {
        self.tags
            .get(exercise)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownExercise(exercise.to_string()))
    }

    pub fn tags(&self) -> &[Vec<usize>] {
        &self.tags
    }

    /// Exercises tagged with `kc`, ascending.
    pub fn exercises_with(&self, kc: usize) -> Vec<usize> {
        self.tags
            .iter()
            .enumerate()
            .filter(|(_, t)| t.binary_search(&kc).is_ok())
            .map(|(e, _)| e)
            .collect()
    }
}

/// Exercise → sorted set of auxiliary KC indices in `[0, n_aux)`, each set
/// holding at most `c_max` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxQMatrix {
    n_aux: usize,
    c_max: usize,
    tags: Vec<Vec<usize>>,
}

impl AuxQMatrix {
    pub fn new(n_aux: usize, c_max: usize, tags: Vec<Vec<usize>>) -> Result<Self> {
        let q = QMatrix::new(n_aux, tags).map_err(|e| match e {
            Error::UnknownKc(k) => {
                Error::invalid(format!("auxiliary KC {k} out of range (M = {n_aux})"))
            }
            other => other,
        })?;
        if let Some((e, t)) = q.tags.iter().enumerate().find(|(_, t)| t.len() > c_max) {
            return Err(Error::invalid(format!(
                "exercise {e} has {} auxiliary KCs, more than C_max = {c_max}",
                t.len()
            )));
        }
        Ok(AuxQMatrix {
            n_aux,
            c_max,
            tags: q.tags,
        })
    }

    pub fn empty(n_aux: usize, c_max: usize, n_exercises: usize) -> Self {
        AuxQMatrix {
            n_aux,
            c_max,
            tags: vec![Vec::new(); n_exercises],
        }
    }

    pub fn n_aux(&self) -> usize {
        self.n_aux
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    /// Exercises beyond the table have no auxiliary KCs.
    pub fn kcs(&self, exercise: usize) -> &[usize] {
        self.tags.get(exercise).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tags(&self) -> &[Vec<usize>] {
        &self.tags
    }

    /// The auxiliary tags viewed as a plain Q-matrix over `M` KCs.
    pub fn as_qmatrix(&self, n_exercises: usize) -> QMatrix {
        QMatrix {
            n_kcs: self.n_aux,
            tags: (0..n_exercises).map(|e| self.kcs(e).to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<StudentSequence>,
    pub qmatrix: QMatrix,
    /// Auxiliary tags folded into `qmatrix` by [`augment_with_aux`].
    pub aux: Option<AuxQMatrix>,
    /// Number of human-defined KCs; augmented KCs occupy `[n_human_kcs, ..)`.
    pub n_human_kcs: usize,
    pub exercise_names: Vec<String>,
    pub student_names: Vec<String>,
    pub kc_names: Vec<String>,
}

impl Dataset {
    /// Dataset with generated names: exercises `e{i}`, students `s{i}` and
    /// KCs by index.
    pub fn from_parts(sequences: Vec<StudentSequence>, qmatrix: QMatrix) -> Dataset {
        let n_students = sequences.iter().map(|s| s.student + 1).max().unwrap_or(0);
        Dataset {
            exercise_names: (0..qmatrix.n_exercises()).map(|e| format!("e{e}")).collect(),
            student_names: (0..n_students).map(|s| format!("s{s}")).collect(),
            kc_names: (0..qmatrix.n_kcs()).map(|k| k.to_string()).collect(),
            n_human_kcs: qmatrix.n_kcs(),
            sequences,
            qmatrix,
            aux: None,
        }
    }

    pub fn n_kcs(&self) -> usize {
        self.qmatrix.n_kcs()
    }

    pub fn n_exercises(&self) -> usize {
        self.qmatrix.n_exercises()
    }

    pub fn n_aux(&self) -> usize {
        self.aux.as_ref().map_or(0, AuxQMatrix::n_aux)
    }

    pub fn n_interactions(&self) -> usize {
        self.sequences.iter().map(StudentSequence::len).sum()
    }

    /// Distinct students, ascending.
    pub fn students(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.sequences.iter().map(|s| s.student).collect();
        set.into_iter().collect()
    }

    pub fn exercise_index(&self, name: &str) -> Option<usize> {
        self.exercise_names.iter().position(|n| n == name)
    }

    /// Same vocabulary, different sequences.
    pub fn with_sequences(&self, sequences: Vec<StudentSequence>) -> Dataset {
        Dataset {
            sequences,
            ..self.clone_without_sequences()
        }
    }

    fn clone_without_sequences(&self) -> Dataset {
        Dataset {
            sequences: Vec::new(),
            qmatrix: self.qmatrix.clone(),
            aux: self.aux.clone(),
            n_human_kcs: self.n_human_kcs,
            exercise_names: self.exercise_names.clone(),
            student_names: self.student_names.clone(),
            kc_names: self.kc_names.clone(),
        }
    }

    /// Cuts sequences into windows of at most `max_len` and drops windows
    /// shorter than `min_len`.
    pub fn windowed(&self, max_len: usize, min_len: usize) -> Dataset {
        let mut out = Vec::new();
        for seq in &self.sequences {
            for chunk in seq.interactions.chunks(max_len.max(1)) {
                if chunk.len() >= min_len {
                    out.push(StudentSequence {
                        student: seq.student,
                        interactions: chunk.to_vec(),
                    });
                }
            }
        }
        self.with_sequences(out)
    }

    /// The default preprocessing: windows of ≤ 200, minimum length 3.
    pub fn preprocessed(&self) -> Dataset {
        self.windowed(MAX_SEQUENCE_LEN, MIN_SEQUENCE_LEN)
    }

    /// Interactions whose exercise has at least one KC; sequences that end
    /// up empty are removed.
    pub fn drop_untagged(&self) -> Dataset {
        let seqs = self
            .sequences
            .iter()
            .map(|s| StudentSequence {
                student: s.student,
                interactions: s
                    .interactions
                    .iter()
                    .filter(|i| !self.qmatrix.tags[i.exercise].is_empty())
                    .copied()
                    .collect(),
            })
            .filter(|s| !s.is_empty())
            .collect();
        self.with_sequences(seqs)
    }
}

/// `u_kc ∈ {0,1}^N`: 1 at every KC tagged on the exercise.
pub fn encode_multihot(exercise: usize, qmatrix: &QMatrix) -> Result<Vec<f64>> {
    let mut u = vec![0.0; qmatrix.n_kcs()];
    for &k in qmatrix.kcs(exercise)? {
        u[k] = 1.0;
    }
    Ok(u)
}

/// `y·u ⊕ (1−y)·u`: the first half carries `u` for a correct answer, the
/// second half for an incorrect one.
pub fn encode_labeled(u: &[f64], correct: bool) -> Vec<f64> {
    let mut out = vec![0.0; 2 * u.len()];
    let offset = if correct { 0 } else { u.len() };
    out[offset..offset + u.len()].copy_from_slice(u);
    out
}

/// Train/validation/test partition of whole students.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Splits by student (all windows of a student stay together). Partition
/// sizes are `round(r_train·n)`, `round(r_val·n)` and the remainder, each
/// at least one student.
pub fn split(dataset: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (a, b, c) = ratios;
    if (a + b + c - 1.0).abs() > 1e-9 || a < 0.0 || b < 0.0 || c < 0.0 {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut students = dataset.students();
    let n = students.len();
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 students to split, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    students.shuffle(&mut rng);
    let n_train = ((a * n as f64).round() as usize).clamp(1, n - 2);
    let n_val = ((b * n as f64).round() as usize).clamp(1, n - n_train - 1);
    let pick = |ids: &[usize]| {
        let set: BTreeSet<usize> = ids.iter().copied().collect();
        dataset.with_sequences(
            dataset
                .sequences
                .iter()
                .filter(|s| set.contains(&s.student))
                .cloned()
                .collect(),
        )
    };
    Ok(Split {
        train: pick(&students[..n_train]),
        val: pick(&students[n_train..n_train + n_val]),
        test: pick(&students[n_train + n_val..]),
    })
}

/// Appends auxiliary KCs after the human ones: the KC universe becomes
/// `[0, N)` human plus `[N, N+M)` auxiliary, and each exercise's tag set is
/// the union.
pub fn augment_with_aux(dataset: &Dataset, aux: &AuxQMatrix) -> Dataset {
    let n = dataset.n_kcs();
    let tags = dataset
        .qmatrix
        .tags()
        .iter()
        .enumerate()
        .map(|(e, human)| {
            human
                .iter()
                .copied()
                .chain(aux.kcs(e).iter().map(|a| n + a))
                .collect()
        })
        .collect();
    let mut kc_names = dataset.kc_names.clone();
    kc_names.extend((0..aux.n_aux()).map(|a| format!("aux{a}")));
    Dataset {
        qmatrix: QMatrix {
            n_kcs: n + aux.n_aux(),
            tags,
        },
        aux: Some(aux.clone()),
        kc_names,
        ..dataset.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> Dataset {
        let q = QMatrix::new(5, vec![vec![1], vec![0, 2], vec![]]).unwrap();
        let seqs = (0..10)
            .map(|s| StudentSequence {
                student: s,
                interactions: (0..4)
                    .map(|t| Interaction {
                        exercise: t % 3,
                        correct: t % 2 == 0,
                        order: t as u64,
                    })
                    .collect(),
            })
            .collect();
        Dataset {
            sequences: seqs,
            qmatrix: q,
            aux: None,
            n_human_kcs: 5,
            exercise_names: vec!["a".into(), "b".into(), "c".into()],
            student_names: (0..10).map(|s| format!("s{s}")).collect(),
            kc_names: (0..5).map(|k| k.to_string()).collect(),
        }
    }

    #[test]
    fn multihot_examples() {
        let q = QMatrix::new(4, vec![vec![0, 2], vec![]]).unwrap();
        assert_eq!(encode_multihot(0, &q).unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(encode_multihot(1, &q).unwrap(), vec![0.0; 4]);
        assert!(matches!(encode_multihot(2, &q), Err(Error::UnknownExercise(_))));
    }

    #[test]
    fn labeled_examples() {
        let u = [1.0, 0.0, 1.0];
        assert_eq!(encode_labeled(&u, true), vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(encode_labeled(&u, false), vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn qmatrix_rejects_out_of_range_kc() {
        assert!(matches!(QMatrix::new(2, vec![vec![2]]), Err(Error::UnknownKc(2))));
    }

    #[test]
    fn aux_rejects_oversized_sets() {
        assert!(AuxQMatrix::new(8, 2, vec![vec![0, 1, 2]]).is_err());
        assert!(AuxQMatrix::new(8, 2, vec![vec![8]]).is_err());
    }

    #[test]
    fn split_ten_students() {
        let d = tiny();
        let s = split(&d, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(
            (s.train.students().len(), s.val.students().len(), s.test.students().len()),
            (8, 1, 1)
        );
        let again = split(&d, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(s.train.students(), again.train.students());
        assert_eq!(s.test.students(), again.test.students());
    }

    #[test]
    fn split_needs_three_students() {
        let mut d = tiny();
        d.sequences.truncate(2);
        assert!(split(&d, (0.8, 0.1, 0.1), 0).is_err());
        assert!(split(&tiny(), (0.5, 0.1, 0.1), 0).is_err());
    }

    #[test]
    fn augment_offsets_aux_indices() {
        let d = tiny();
        let aux = AuxQMatrix::new(4, 4, vec![vec![0, 3]]).unwrap();
        let a = augment_with_aux(&d, &aux);
        assert_eq!(a.qmatrix.kcs(0).unwrap(), &[1, 5, 8]);
        assert_eq!(a.qmatrix.kcs(1).unwrap(), &[0, 2]);
        assert_eq!(a.n_kcs(), 9);
        assert_eq!(a.n_human_kcs, 5);
    }

    #[test]
    fn augment_with_empty_aux_only_records_m() {
        let d = tiny();
        let aux = AuxQMatrix::empty(32, 4, d.n_exercises());
        let a = augment_with_aux(&d, &aux);
        assert_eq!(a.qmatrix.tags(), d.qmatrix.tags());
        assert_eq!(a.sequences, d.sequences);
        assert_eq!(a.n_aux(), 32);
    }

    #[test]
    fn windowing_chunks_and_drops() {
        let mut d = tiny();
        d.sequences[0].interactions = (0..7)
            .map(|t| Interaction {
                exercise: 0,
                correct: true,
                order: t,
            })
            .collect();
        let w = d.windowed(3, 3);
        // 7 → 3 + 3 (+1 dropped); the other nine length-4 sequences → 3 (+1 dropped)
        assert_eq!(w.sequences.len(), 2 + 9);
        assert!(w.sequences.iter().all(|s| s.len() == 3));
    }

    proptest! {
        #[test]
        fn multihot_count_matches_tag_count(
            tags in proptest::collection::vec(proptest::collection::btree_set(0usize..12, 0..6), 1..20)
        ) {
            let tags: Vec<Vec<usize>> = tags.into_iter().map(|s| s.into_iter().collect()).collect();
            let q = QMatrix::new(12, tags.clone()).unwrap();
            for (e, t) in tags.iter().enumerate() {
                let u = encode_multihot(e, &q).unwrap();
                prop_assert_eq!(u.iter().sum::<f64>() as usize, t.len());
            }
        }

        #[test]
        fn labeled_preserves_support_and_halves_are_disjoint(
            u in proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), -3.0..3.0f64], 0..16)
        ) {
            let nz = |v: &[f64]| v.iter().filter(|x| **x != 0.0).count();
            let pos = encode_labeled(&u, true);
            let neg = encode_labeled(&u, false);
            prop_assert_eq!(nz(&pos), nz(&u));
            prop_assert_eq!(nz(&neg), nz(&u));
            prop_assert!(pos.iter().zip(&neg).all(|(a, b)| *a == 0.0 || *b == 0.0));
        }

        #[test]
        fn split_is_a_partition(n in 3usize..60, seed in any::<u64>()) {
            let mut d = tiny();
            d.sequences = (0..n).map(|s| StudentSequence { student: s, interactions: vec![] }).collect();
            let s = split(&d, (0.8, 0.1, 0.1), seed).unwrap();
            let mut all: Vec<usize> = s.train.students();
            all.extend(s.val.students());
            all.extend(s.test.students());
            let len = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), len);
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn augmented_size_is_sum(
            aux_tags in proptest::collection::vec(proptest::collection::btree_set(0usize..8, 0..5), 3)
        ) {
            let d = tiny();
            let aux = AuxQMatrix::new(8, 4, aux_tags.into_iter().map(|s| s.into_iter().collect()).collect()).unwrap();
            let a = augment_with_aux(&d, &aux);
            for e in 0..3 {
                prop_assert_eq!(a.qmatrix.kcs(e).unwrap().len(), d.qmatrix.kcs(e).unwrap().len() + aux.kcs(e).len());
                prop_assert_eq!(&a.qmatrix.kcs(e).unwrap()[..d.qmatrix.kcs(e).unwrap().len()], d.qmatrix.kcs(e).unwrap());
            }
        }
    }
}
