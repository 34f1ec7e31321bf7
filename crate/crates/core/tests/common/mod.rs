//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use auxkc::bkt::KcProbs;
use auxkc::data::{Interaction, StudentSequence};
use auxkc::eval::ScoredPrediction;

/// Joint probability of an observation string for one KC, summing over all
/// 2^T hidden mastery paths.
pub fn bkt_path_enumeration(p: &KcProbs, obs: &[bool]) -> f64 {
    let t = obs.len();
    let mut total = 0.0;
    for path in 0u32..(1 << t) {
        let state = |i: usize| path >> i & 1 == 1;
        let mut prob = if state(0) { p.init } else { 1.0 - p.init };
        for (i, &y) in obs.iter().enumerate() {
            let correct = if state(i) { 1.0 - p.slip } else { p.guess };
            prob *= if y { correct } else { 1.0 - correct };
            if i + 1 < t {
                prob *= match (state(i), state(i + 1)) {
                    (true, true) => 1.0 - p.forget,
                    (true, false) => p.forget,
                    (false, true) => p.learn,
                    (false, false) => 1.0 - p.learn,
                };
            }
        }
        total += prob;
    }
    total
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counted half.
pub fn pairwise_auc(preds: &[ScoredPrediction]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for a in preds.iter().filter(|p| p.label) {
        for b in preds.iter().filter(|p| !p.label) {
            den += 1.0;
            if a.prob > b.prob {
                num += 1.0;
            } else if a.prob == b.prob {
                num += 0.5;
            }
        }
    }
    num / den
}

pub fn sequence(student: usize, obs: &[(usize, bool)]) -> StudentSequence {
    StudentSequence {
        student,
        interactions: obs
            .iter()
            .enumerate()
            .map(|(t, &(exercise, correct))| Interaction {
                exercise,
                correct,
                order: t as u64,
            })
            .collect(),
    }
}
