//! Depth-one expectimax over KCs.
//!
//! A candidate KC `k` is scored by the expected mean predicted correctness
//! over the scoring KCs after one hypothetical practice step on `k`:
//! `p_k·S(h + (k, ✓)) + (1 − p_k)·S(h + (k, ✗))`.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::data::QMatrix;
use crate::dkt::{Dkt, DktState};
use crate::error::{Error, Result};
use crate::sbrkt::{Sbrkt, SbrktState};

/// A knowledge-tracing model that can be rolled forward hypothetically.
/// States are values: observing never mutates the caller's state.
pub trait KcModel {
    type State: Clone;

    /// Width of the probability vector.
    fn n_kcs(&self) -> usize;
    fn initial_state(&self) -> Self::State;
    /// Predicted probability of answering an item on each single KC.
    fn kc_probs(&self, state: &Self::State) -> Result<Vec<f64>>;
    /// State after a hypothetical practice step on one KC.
    fn observe_kc(&self, state: &Self::State, kc: usize, correct: bool) -> Result<Self::State>;
    /// State after a real interaction with an exercise.
    fn observe_exercise(&self, state: &Self::State, exercise: usize, correct: bool) -> Result<Self::State>;
}

/// DKT with the Q-matrix that defines its KC space.
#[derive(Debug, Clone, Copy)]
pub struct DktKt<'a> {
    pub model: &'a Dkt,
    pub qmatrix: &'a QMatrix,
}

impl KcModel for DktKt<'_> {
    type State = DktState;

    fn n_kcs(&self) -> usize {
        self.model.n_kcs()
    }

    fn initial_state(&self) -> DktState {
        self.model.initial_state()
    }

    fn kc_probs(&self, state: &DktState) -> Result<Vec<f64>> {
        self.model.probs(state)
    }

    fn observe_kc(&self, state: &DktState, kc: usize, correct: bool) -> Result<DktState> {
        Ok(self.model.step(state, &[kc], correct)?.0)
    }

    /// Exercises without KCs in this space leave the state unchanged.
    fn observe_exercise(&self, state: &DktState, exercise: usize, correct: bool) -> Result<DktState> {
        let kcs = self.qmatrix.kcs(exercise)?;
        if kcs.is_empty() {
            return Ok(state.clone());
        }
        Ok(self.model.step(state, kcs, correct)?.0)
    }
}

/// SBRKT over its joint space: human KCs `[0, N)` and auxiliary KCs
/// `[N, N + M)`. A hypothetical step on a human KC feeds that KC with an
/// empty code; a step on auxiliary KC `a` feeds no human KC and a code with
/// only bit `a` set.
#[derive(Debug, Clone, Copy)]
pub struct SbrktKt<'a> {
    pub model: &'a Sbrkt,
    pub qmatrix: &'a QMatrix,
}

impl KcModel for SbrktKt<'_> {
    type State = SbrktState;

    fn n_kcs(&self) -> usize {
        self.model.n_kcs() + self.model.n_aux()
    }

    fn initial_state(&self) -> SbrktState {
        self.model.initial_state()
    }

    fn kc_probs(&self, state: &SbrktState) -> Result<Vec<f64>> {
        Ok(state.o.iter().map(|&z| crate::tensor::sigmoid(z)).collect())
    }

    fn observe_kc(&self, state: &SbrktState, kc: usize, correct: bool) -> Result<SbrktState> {
        let n = self.model.n_kcs();
        let mut code = vec![false; self.model.n_aux()];
        if kc < n {
            self.model.forward_code(state, &[kc], &code, correct)
        } else if kc < self.n_kcs() {
            code[kc - n] = true;
            self.model.forward_code(state, &[], &code, correct)
        } else {
            Err(Error::UnknownKc(kc))
        }
    }

    fn observe_exercise(&self, state: &SbrktState, exercise: usize, correct: bool) -> Result<SbrktState> {
        self.model.forward_step(state, exercise, self.qmatrix.kcs(exercise)?, correct)
    }
}

fn mean_over(probs: &[f64], kcs: &[usize]) -> Result<f64> {
    let mut s = 0.0;
    for &k in kcs {
        s += *probs.get(k).ok_or(Error::UnknownKc(k))?;
    }
    Ok(s / kcs.len().max(1) as f64)
}

/// Expected post-step score of every candidate, best first (ties to the
/// lowest KC index).
pub fn rank_kcs<M: KcModel>(
    model: &M,
    state: &M::State,
    candidates: &[usize],
    scoring: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if candidates.is_empty() {
        return Err(Error::invalid("expectimax needs at least one candidate KC"));
    }
    if scoring.is_empty() {
        return Err(Error::invalid("expectimax needs at least one scoring KC"));
    }
    let now = model.kc_probs(state)?;
    let mut scored = Vec::with_capacity(candidates.len());
    for &k in candidates {
        let p = *now.get(k).ok_or(Error::UnknownKc(k))?;
        let right = mean_over(&model.kc_probs(&model.observe_kc(state, k, true)?)?, scoring)?;
        let wrong = mean_over(&model.kc_probs(&model.observe_kc(state, k, false)?)?, scoring)?;
        scored.push((k, p * right + (1.0 - p) * wrong));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

pub fn expectimax_kc<M: KcModel>(
    model: &M,
    state: &M::State,
    candidates: &[usize],
    scoring: &[usize],
) -> Result<usize> {
    Ok(rank_kcs(model, state, candidates, scoring)?[0].0)
}

/// Best-ranked KC that tags at least one exercise, with its exercises.
fn best_practicable<M: KcModel>(
    model: &M,
    state: &M::State,
    candidates: &[usize],
    scoring: &[usize],
    qmatrix: &QMatrix,
) -> Result<Option<(usize, Vec<usize>)>> {
    for (k, _) in rank_kcs(model, state, candidates, scoring)? {
        let ex = qmatrix.exercises_with(k);
        if !ex.is_empty() {
            return Ok(Some((k, ex)));
        }
    }
    Ok(None)
}

/// Uniform pick among exercises of the best KC; KCs without exercises are
/// passed over for the next best. Returns `(exercise, kc)`.
pub fn expectimax_exercise<M: KcModel, R: Rng>(
    model: &M,
    state: &M::State,
    candidates: &[usize],
    scoring: &[usize],
    qmatrix: &QMatrix,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let (k, ex) = best_practicable(model, state, candidates, scoring, qmatrix)?
        .ok_or_else(|| Error::invalid("no candidate KC tags any exercise"))?;
    Ok((*ex.choose(rng).expect("non-empty"), k))
}

/// One KC planner: a model, the KCs it may recommend, the KCs it scores
/// on, and the Q-matrix mapping its KCs to exercises.
#[derive(Debug, Clone)]
pub struct Planner<M> {
    pub model: M,
    pub candidates: Vec<usize>,
    pub scoring: Vec<usize>,
    pub qmatrix: QMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualChoice {
    pub exercise: usize,
    pub human_kc: usize,
    pub aux_kc: Option<usize>,
    /// The intersection was empty and the human KC's exercises were used.
    pub fallback: bool,
    pub n_candidates: usize,
    pub n_human_candidates: usize,
}

/// Plans independently over human and auxiliary KCs and recommends an
/// exercise tagged with both winners, falling back to the human winner's
/// exercises when no exercise carries both.
pub fn expectimax_dual<H: KcModel, A: KcModel, R: Rng>(
    human: &Planner<H>,
    human_state: &H::State,
    aux: &Planner<A>,
    aux_state: &A::State,
    rng: &mut R,
) -> Result<DualChoice> {
    let (kh, ex_h) = best_practicable(&human.model, human_state, &human.candidates, &human.scoring, &human.qmatrix)?
        .ok_or_else(|| Error::invalid("no human KC tags any exercise"))?;
    let aux_best = best_practicable(&aux.model, aux_state, &aux.candidates, &aux.scoring, &aux.qmatrix)?;
    let both: Vec<usize> = match &aux_best {
        Some((_, ex_a)) => ex_h.iter().copied().filter(|e| ex_a.contains(e)).collect(),
        None => Vec::new(),
    };
    let fallback = both.is_empty();
    let pool = if fallback { &ex_h } else { &both };
    Ok(DualChoice {
        exercise: *pool.choose(rng).expect("non-empty"),
        human_kc: kh,
        aux_kc: aux_best.map(|(k, _)| k),
        fallback,
        n_candidates: pool.len(),
        n_human_candidates: ex_h.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Practicing KC `k` adds `lift[k]` to every output (either outcome).
    struct Lift {
        base: Vec<f64>,
        lift: Vec<f64>,
    }

    impl KcModel for Lift {
        type State = Vec<f64>;
        fn n_kcs(&self) -> usize {
            self.base.len()
        }
        fn initial_state(&self) -> Vec<f64> {
            self.base.clone()
        }
        fn kc_probs(&self, s: &Vec<f64>) -> Result<Vec<f64>> {
            Ok(s.clone())
        }
        fn observe_kc(&self, s: &Vec<f64>, kc: usize, _: bool) -> Result<Vec<f64>> {
            Ok(s.iter().map(|p| (p + self.lift[kc]).min(1.0)).collect())
        }
        fn observe_exercise(&self, s: &Vec<f64>, _: usize, _: bool) -> Result<Vec<f64>> {
            Ok(s.clone())
        }
    }

    #[test]
    fn picks_the_lifting_kc() {
        let m = Lift { base: vec![0.4, 0.5], lift: vec![0.1, 0.0] };
        let s = m.initial_state();
        assert_eq!(expectimax_kc(&m, &s, &[0, 1], &[0, 1]).unwrap(), 0);
        assert_eq!(expectimax_kc(&m, &s, &[1], &[0, 1]).unwrap(), 1);
        assert!(expectimax_kc(&m, &s, &[], &[0, 1]).is_err());
        assert_eq!(s, m.initial_state());
    }

    #[test]
    fn ties_go_to_the_lowest_kc() {
        let m = Lift { base: vec![0.5; 3], lift: vec![0.0; 3] };
        assert_eq!(expectimax_kc(&m, &m.initial_state(), &[2, 1, 0], &[0, 1, 2]).unwrap(), 0);
    }

    #[test]
    fn kc_without_exercises_falls_through() {
        let m = Lift { base: vec![0.4, 0.5], lift: vec![0.1, 0.0] };
        let q = QMatrix::new(2, vec![vec![1], vec![1]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (e, k) = expectimax_exercise(&m, &m.initial_state(), &[0, 1], &[0, 1], &q, &mut rng).unwrap();
        assert_eq!(k, 1);
        assert!(q.kcs(e).unwrap().contains(&1));
    }

    #[test]
    fn dual_filter_narrows_or_falls_back() {
        let h = Planner {
            model: Lift { base: vec![0.4, 0.5], lift: vec![0.1, 0.0] },
            candidates: vec![0, 1],
            scoring: vec![0, 1],
            qmatrix: QMatrix::new(2, vec![vec![0], vec![0], vec![1], vec![0]]).unwrap(),
        };
        let a = Planner {
            model: Lift { base: vec![0.4, 0.5], lift: vec![0.0, 0.2] },
            candidates: vec![0, 1],
            scoring: vec![0, 1],
            qmatrix: QMatrix::new(2, vec![vec![0], vec![1], vec![1], vec![0]]).unwrap(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = expectimax_dual(&h, &h.model.initial_state(), &a, &a.model.initial_state(), &mut rng).unwrap();
        assert_eq!((c.human_kc, c.aux_kc, c.exercise, c.fallback), (0, Some(1), 1, false));
        assert_eq!((c.n_candidates, c.n_human_candidates), (1, 3));

        let disjoint = Planner { qmatrix: QMatrix::new(2, vec![vec![], vec![], vec![1], vec![]]).unwrap(), ..a };
        let c = expectimax_dual(&h, &h.model.initial_state(), &disjoint, &disjoint.model.initial_state(), &mut rng).unwrap();
        assert!(c.fallback);
        assert!(h.qmatrix.kcs(c.exercise).unwrap().contains(&0));
    }
}
