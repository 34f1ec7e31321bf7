//! Synthetic students with known latent sub-skills.
//!
//! Every visible KC owns a family of hidden sub-skills. Each exercise is
//! tagged with one or two visible KCs and carries between one and `c_max`
//! hidden sub-skills drawn from those families. A student holds a binary
//! mastery state per sub-skill that evolves as a BKT-with-forgetting chain
//! on every practice opportunity:
//!
//! * answer: correct with probability `1 − slip_e` when every sub-skill of
//!   the exercise is mastered, otherwise with probability `guess_e`, where
//!   `guess_e`/`slip_e` average the student's sub-skill guess/slip values;
//! * then each practiced sub-skill moves unmastered → mastered with its
//!   learning probability and mastered → unmastered with its forgetting
//!   probability.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Interaction, QMatrix, StudentSequence};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillParams {
    pub init: f64,
    pub learn: f64,
    pub guess: f64,
    pub slip: f64,
    pub forget: f64,
}

/// Sampling ranges for per-sub-skill population parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorRanges {
    pub init: (f64, f64),
    pub learn: (f64, f64),
    pub guess: (f64, f64),
    pub slip: (f64, f64),
    pub forget: (f64, f64),
}

impl Default for PriorRanges {
    fn default() -> Self {
        PriorRanges {
            init: (0.05, 0.7),
            learn: (0.05, 0.3),
            guess: (0.05, 0.35),
            slip: (0.02, 0.15),
            forget: (0.0, 0.03),
        }
    }
}

impl PriorRanges {
    /// Every parameter pinned to one value.
    pub fn fixed(p: SkillParams) -> Self {
        PriorRanges {
            init: (p.init, p.init),
            learn: (p.learn, p.learn),
            guess: (p.guess, p.guess),
            slip: (p.slip, p.slip),
            forget: (p.forget, p.forget),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_students: usize,
    pub n_exercises: usize,
    pub n_visible_kcs: usize,
    pub n_hidden_subskills: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub c_max: usize,
    pub priors: PriorRanges,
    /// A student's learning probabilities are the population values scaled
    /// by a factor drawn from `[1 − spread, 1 + spread]`.
    pub ability_spread: f64,
    /// Exercises are practiced in blocks on one visible KC.
    pub block_len: (usize, usize),
    /// Probability that an exercise carries a second visible KC.
    pub second_kc_prob: f64,
}

impl SyntheticConfig {
    pub fn new(
        n_students: usize,
        n_exercises: usize,
        n_visible_kcs: usize,
        n_hidden_subskills: usize,
        seq_len: usize,
        seed: u64,
    ) -> Self {
        SyntheticConfig {
            n_students,
            n_exercises,
            n_visible_kcs,
            n_hidden_subskills,
            seq_len,
            seed,
            c_max: 4,
            priors: PriorRanges::default(),
            ability_spread: 0.4,
            block_len: (3, 7),
            second_kc_prob: 0.3,
        }
    }

    /// 300 students, 60 exercises, 6 visible KCs, 18 sub-skills, 50 steps.
    pub fn small(seed: u64) -> Self {
        Self::new(300, 60, 6, 18, 50, seed)
    }
}

/// The generative model behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Exercise → hidden sub-skills.
    pub latent_tags: Vec<Vec<usize>>,
    /// Sub-skill → owning visible KC.
    pub subskill_kc: Vec<usize>,
    /// Population parameters per sub-skill.
    pub priors: Vec<SkillParams>,
    /// Per student, per sub-skill parameters used to generate the data.
    pub student_params: Vec<Vec<SkillParams>>,
    pub ability_spread: f64,
}

/// A student's latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentState {
    pub params: Vec<SkillParams>,
    pub mastered: Vec<bool>,
}

fn draw<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

impl GroundTruth {
    pub fn n_subskills(&self) -> usize {
        self.priors.len()
    }

    pub fn n_exercises(&self) -> usize {
        self.latent_tags.len()
    }

    /// Per-sub-skill parameters for a new student drawn from the population.
    pub fn sample_params<R: Rng>(&self, rng: &mut R) -> Vec<SkillParams> {
        let spread = self.ability_spread;
        let ability = if spread > 0.0 {
            rng.random_range(1.0 - spread..=1.0 + spread)
        } else {
            1.0
        };
        self.priors
            .iter()
            .map(|p| SkillParams {
                learn: (p.learn * ability).clamp(0.0, 1.0),
                ..*p
            })
            .collect()
    }

    /// Samples initial mastery for the given parameters.
    pub fn new_student<R: Rng>(&self, params: Vec<SkillParams>, rng: &mut R) -> StudentState {
        let mastered = params.iter().map(|p| rng.random::<f64>() < p.init).collect();
        StudentState { params, mastered }
    }

    pub fn guess_slip(&self, params: &[SkillParams], exercise: usize) -> (f64, f64) {
        let tags = &self.latent_tags[exercise];
        if tags.is_empty() {
            return (0.0, 0.0);
        }
        let n = tags.len() as f64;
        let g = tags.iter().map(|&k| params[k].guess).sum::<f64>() / n;
        let s = tags.iter().map(|&k| params[k].slip).sum::<f64>() / n;
        (g, s)
    }

    /// True probability of a correct answer in the current latent state.
    pub fn answer_probability(&self, student: &StudentState, exercise: usize) -> f64 {
        let (g, s) = self.guess_slip(&student.params, exercise);
        if self.latent_tags[exercise].iter().all(|&k| student.mastered[k]) {
            1.0 - s
        } else {
            g
        }
    }

    /// Closed-form probability of a correct answer given independent
    /// per-sub-skill mastery probabilities.
    pub fn expected_answer_probability(
        &self,
        params: &[SkillParams],
        mastery: &[f64],
        exercise: usize,
    ) -> f64 {
        let (g, s) = self.guess_slip(params, exercise);
        let all: f64 = self.latent_tags[exercise].iter().map(|&k| mastery[k]).product();
        all * (1.0 - s) + (1.0 - all) * g
    }

    pub fn respond<R: Rng>(&self, student: &StudentState, exercise: usize, rng: &mut R) -> bool {
        rng.random::<f64>() < self.answer_probability(student, exercise)
    }

    /// Learning/forgetting transition on the exercise's sub-skills.
    pub fn practice<R: Rng>(&self, student: &mut StudentState, exercise: usize, rng: &mut R) {
        for &k in &self.latent_tags[exercise] {
            let p = student.params[k];
            let u: f64 = rng.random();
            student.mastered[k] = if student.mastered[k] {
                u >= p.forget
            } else {
                u < p.learn
            };
        }
    }
}

/// Generates a dataset together with the process that produced it.
/// Deterministic in `config.seed`. Counts of zero are raised to one.
pub fn generate_synthetic(config: &SyntheticConfig) -> (Dataset, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_vis = config.n_visible_kcs.max(1);
    let n_hid = config.n_hidden_subskills.max(1);
    let n_ex = config.n_exercises.max(1);
    let c_max = config.c_max.max(1);

    let subskill_kc: Vec<usize> = (0..n_hid).map(|j| j % n_vis).collect();
    let family: Vec<Vec<usize>> = (0..n_vis)
        .map(|v| (0..n_hid).filter(|&j| subskill_kc[j] == v).collect())
        .collect();
    let priors: Vec<SkillParams> = (0..n_hid)
        .map(|_| SkillParams {
            init: draw(&mut rng, config.priors.init),
            learn: draw(&mut rng, config.priors.learn),
            guess: draw(&mut rng, config.priors.guess),
            slip: draw(&mut rng, config.priors.slip),
            forget: draw(&mut rng, config.priors.forget),
        })
        .collect();

    let mut visible = Vec::with_capacity(n_ex);
    let mut latent = Vec::with_capacity(n_ex);
    for e in 0..n_ex {
        // Round-robin first KC so every visible KC has exercises.
        let first = e % n_vis;
        let mut kcs = vec![first];
        if n_vis > 1 && rng.random::<f64>() < config.second_kc_prob {
            let mut other = rng.random_range(0..n_vis - 1);
            if other >= first {
                other += 1;
            }
            kcs.push(other);
        }
        kcs.sort_unstable();
        let mut pool: Vec<usize> = kcs.iter().flat_map(|&v| family[v].iter().copied()).collect();
        if pool.is_empty() {
            pool = (0..n_hid).collect();
        }
        let k = rng.random_range(1..=c_max.min(pool.len()));
        let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, k).copied().collect();
        chosen.sort_unstable();
        visible.push(kcs);
        latent.push(chosen);
    }

    let mut truth = GroundTruth {
        latent_tags: latent,
        subskill_kc,
        priors,
        student_params: Vec::with_capacity(config.n_students),
        ability_spread: config.ability_spread,
    };
    let qmatrix = QMatrix::new(n_vis, visible).expect("visible KCs are in range");
    let by_kc: Vec<Vec<usize>> = (0..n_vis).map(|v| qmatrix.exercises_with(v)).collect();

    let mut sequences = Vec::with_capacity(config.n_students);
    for s in 0..config.n_students {
        let params = truth.sample_params(&mut rng);
        let mut student = truth.new_student(params.clone(), &mut rng);
        truth.student_params.push(params);
        let mut interactions = Vec::with_capacity(config.seq_len);
        while interactions.len() < config.seq_len {
            let kc = rng.random_range(0..n_vis);
            let (lo, hi) = config.block_len;
            let len = rng.random_range(lo.max(1)..=hi.max(lo.max(1)));
            for _ in 0..len {
                if interactions.len() == config.seq_len {
                    break;
                }
                let exercise = *by_kc[kc].choose(&mut rng).expect("every KC has an exercise");
                let correct = truth.respond(&student, exercise, &mut rng);
                truth.practice(&mut student, exercise, &mut rng);
                interactions.push(Interaction {
                    exercise,
                    correct,
                    order: interactions.len() as u64,
                });
            }
        }
        sequences.push(StudentSequence {
            student: s,
            interactions,
        });
    }

    let dataset = Dataset {
        sequences,
        n_human_kcs: n_vis,
        qmatrix,
        aux: None,
        exercise_names: (0..n_ex).map(|e| format!("e{e}")).collect(),
        student_names: (0..config.n_students).map(|s| format!("s{s}")).collect(),
        kc_names: (0..n_vis).map(|v| v.to_string()).collect(),
    };
    (dataset, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pinned(p: SkillParams) -> SyntheticConfig {
        let mut c = SyntheticConfig::new(20, 12, 3, 6, 30, 1);
        c.priors = PriorRanges::fixed(p);
        c.ability_spread = 0.0;
        c
    }

    #[test]
    fn perfect_students_always_answer_correctly() {
        let cfg = pinned(SkillParams {
            init: 1.0,
            learn: 0.5,
            guess: 0.0,
            slip: 0.0,
            forget: 0.0,
        });
        let (d, _) = generate_synthetic(&cfg);
        assert!(d.sequences.iter().flat_map(|s| &s.interactions).all(|i| i.correct));
    }

    #[test]
    fn guess_one_answers_correctly_regardless() {
        let cfg = pinned(SkillParams {
            init: 0.0,
            learn: 0.0,
            guess: 1.0,
            slip: 0.3,
            forget: 0.0,
        });
        let (d, _) = generate_synthetic(&cfg);
        assert!(d.sequences.iter().flat_map(|s| &s.interactions).all(|i| i.correct));
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SyntheticConfig::new(15, 20, 4, 8, 25, 9);
        assert_eq!(generate_synthetic(&cfg), generate_synthetic(&cfg));
        let other = SyntheticConfig { seed: 10, ..cfg.clone() };
        assert_ne!(generate_synthetic(&cfg).0, generate_synthetic(&other).0);
    }

    #[test]
    fn structure_respects_bounds() {
        let cfg = SyntheticConfig::new(5, 40, 5, 15, 10, 3);
        let (d, t) = generate_synthetic(&cfg);
        for e in 0..d.n_exercises() {
            let vis = d.qmatrix.kcs(e).unwrap();
            assert!((1..=2).contains(&vis.len()));
            let hid = &t.latent_tags[e];
            assert!((1..=4).contains(&hid.len()));
            assert!(hid.iter().all(|h| vis.contains(&t.subskill_kc[*h])));
        }
        assert!(t.n_subskills() >= 2 * d.n_kcs());
        assert!(d.sequences.iter().all(|s| s.len() == 10));
    }

    #[test]
    fn practiced_once_stays_mastered_without_forgetting() {
        let cfg = pinned(SkillParams {
            init: 0.0,
            learn: 1.0,
            guess: 0.2,
            slip: 0.1,
            forget: 0.0,
        });
        let (_, t) = generate_synthetic(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = t.new_student(t.sample_params(&mut rng), &mut rng);
        t.practice(&mut s, 0, &mut rng);
        for step in 0..50 {
            t.practice(&mut s, (step * 7) % t.n_exercises(), &mut rng);
            assert!(t.latent_tags[0].iter().all(|&k| s.mastered[k]));
        }
    }

    #[test]
    fn first_response_rate_matches_closed_form() {
        let cfg = SyntheticConfig::new(1, 10, 3, 9, 1, 21);
        let (_, t) = generate_synthetic(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let params = t.sample_params(&mut rng);
        let init: Vec<f64> = params.iter().map(|p| p.init).collect();
        for e in 0..t.n_exercises() {
            let n = 10_000;
            let hits = (0..n)
                .filter(|_| {
                    let s = t.new_student(params.clone(), &mut rng);
                    t.respond(&s, e, &mut rng)
                })
                .count();
            let mc = hits as f64 / n as f64;
            let exact = t.expected_answer_probability(&params, &init, e);
            assert!((mc - exact).abs() < 0.02, "exercise {e}: {mc} vs {exact}");
        }
    }
}
