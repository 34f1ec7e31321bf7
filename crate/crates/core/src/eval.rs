//! Metrics: rank-based AUC, normalized learning gain and reward summaries.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPrediction {
    pub prob: f64,
    pub label: bool,
}

impl ScoredPrediction {
    pub fn new(prob: f64, label: bool) -> Self {
        ScoredPrediction { prob, label }
    }
}

/// Area under the ROC curve via the Mann-Whitney U statistic with average
/// ranks for ties: `P(score_pos > score_neg) + ½·P(score_pos = score_neg)`.
pub fn auc(predictions: &[ScoredPrediction]) -> Result<f64> {
    if predictions.iter().any(|p| p.prob.is_nan()) {
        return Err(Error::invalid("AUC: NaN score"));
    }
    let n_pos = predictions.iter().filter(|p| p.label).count();
    let n_neg = predictions.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(format!(
            "AUC needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].prob.total_cmp(&predictions[b].prob));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && predictions[order[j + 1]].prob == predictions[order[i]].prob {
            j += 1;
        }
        // ranks are 1-based: i+1 ..= j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if predictions[k].label {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// `G1 = (s_post − s_pre) / (1 − s_pre)`.
pub fn normalized_gain(s_pre: f64, s_post: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&s_pre) {
        return Err(Error::invalid(format!(
            "normalized gain undefined for pre-test score {s_pre}"
        )));
    }
    if !(0.0..=1.0).contains(&s_post) {
        return Err(Error::invalid(format!("post-test score {s_post} outside [0, 1]")));
    }
    Ok((s_post - s_pre) / (1.0 - s_pre))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentOutcome {
    pub s_pre: f64,
    pub s_post: f64,
    pub rewards: Vec<f64>,
}

impl StudentOutcome {
    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            0.0
        } else {
            self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlSummary {
    /// Mean normalized gain over students.
    pub gain: f64,
    /// Mean over students of each student's mean per-step reward.
    pub mean_reward: f64,
    /// Population standard deviation of per-student mean reward.
    pub std_reward: f64,
    pub n_students: usize,
}

/// Sum of values taken in sorted order, so the result does not depend on
/// the order students were listed in.
fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn aggregate_rl(per_student: &[StudentOutcome]) -> Result<RlSummary> {
    if per_student.is_empty() {
        return Err(Error::invalid("no students to aggregate"));
    }
    let gains = per_student
        .iter()
        .map(|s| normalized_gain(s.s_pre, s.s_post))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = per_student.iter().map(StudentOutcome::mean_reward).collect();
    let mean_reward = sorted_mean(means.clone());
    let var = sorted_mean(means.iter().map(|m| (m - mean_reward).powi(2)).collect());
    Ok(RlSummary {
        gain: sorted_mean(gains),
        mean_reward,
        std_reward: var.sqrt(),
        n_students: per_student.len(),
    })
}

/// Plain comma-separated table with a header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: ToString>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(ToString::to_string).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: &[S]) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row.iter().map(ToString::to_string).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn preds(v: &[(f64, bool)]) -> Vec<ScoredPrediction> {
        v.iter().map(|&(p, l)| ScoredPrediction::new(p, l)).collect()
    }

    #[test]
    fn perfect_and_constant() {
        assert_eq!(auc(&preds(&[(0.1, false), (0.2, false), (0.8, true), (0.9, true)])).unwrap(), 1.0);
        assert_eq!(auc(&preds(&[(0.5, false), (0.5, true), (0.5, true)])).unwrap(), 0.5);
        assert_eq!(auc(&preds(&[(0.9, false), (0.1, true)])).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auc(&preds(&[(0.3, true), (0.4, true)])).is_err());
        assert!(auc(&[]).is_err());
    }

    #[test]
    fn gain_examples() {
        assert_eq!(normalized_gain(0.5, 0.75).unwrap(), 0.5);
        assert_eq!(normalized_gain(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(normalized_gain(0.2, 1.0).unwrap(), 1.0);
        assert!(normalized_gain(1.0, 1.0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let one = StudentOutcome {
            s_pre: 0.2,
            s_post: 0.4,
            rewards: vec![0.7; 140],
        };
        let s = aggregate_rl(std::slice::from_ref(&one)).unwrap();
        assert!((s.mean_reward - 0.7).abs() < 1e-12);
        assert_eq!(s.std_reward, 0.0);
        let a = StudentOutcome { s_pre: 0.0, s_post: 0.2, rewards: vec![0.1] };
        let b = StudentOutcome { s_pre: 0.0, s_post: 0.6, rewards: vec![0.3] };
        let s = aggregate_rl(&[a, b]).unwrap();
        assert!((s.gain - 0.4).abs() < 1e-12);
        assert!(aggregate_rl(&[]).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(
            raw in proptest::collection::vec((0.0..0.99f64, 0.0..1.0f64, proptest::collection::vec(0.0..1.0f64, 1..10)), 1..12),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut v: Vec<StudentOutcome> = raw.into_iter().map(|(a, b, r)| StudentOutcome { s_pre: a, s_post: b, rewards: r }).collect();
            let base = aggregate_rl(&v).unwrap();
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate_rl(&v).unwrap(), base);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in proptest::collection::vec((-3.0..3.0f64, any::<bool>()), 2..60)
        ) {
            prop_assume!(raw.iter().any(|r| r.1) && raw.iter().any(|r| !r.1));
            let a = auc(&preds(&raw)).unwrap();
            let t: Vec<(f64, bool)> = raw.iter().map(|&(x, l)| (x.exp() * 3.0 + 1.0, l)).collect();
            prop_assert_eq!(a, auc(&preds(&t)).unwrap());
        }

        #[test]
        fn gain_is_linear_in_post(pre in 0.0..0.99f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let ga = normalized_gain(pre, a).unwrap();
            let gb = normalized_gain(pre, b).unwrap();
            let slope = 1.0 / (1.0 - pre);
            prop_assert!((ga - gb - slope * (a - b)).abs() < 1e-9 * slope.max(1.0));
        }
    }
}
