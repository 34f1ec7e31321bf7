//! Bayesian Knowledge Tracing with forgetting.
//!
//! Each KC is an independent two-state hidden Markov chain (mastered or
//! not) with five parameters: initial mastery `P(L0)`, learning `P(T)`,
//! guess `P(G)`, slip `P(S)` and forgetting `P(F)`. Parameters are stored
//! as logits so gradient steps never leave `(0, 1)`.
//!
//! An interaction on a multi-KC exercise is predicted by the mean of the
//! per-KC predictions and then updates every tagged KC's chain on its own.
//! The likelihood has one Bernoulli term per interaction.
//!
//! Gradients are exact: each chain carries the derivative of its mastery
//! belief with respect to its own five logits alongside the belief itself.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, QMatrix, StudentSequence};
use crate::error::{Error, Result};
use crate::eval::{auc, ScoredPrediction};
use crate::tensor::{logit, sigmoid};

const INIT: usize = 0;
const LEARN: usize = 1;
const GUESS: usize = 2;
const SLIP: usize = 3;
const FORGET: usize = 4;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcProbs {
    pub init: f64,
    pub learn: f64,
    pub guess: f64,
    pub slip: f64,
    pub forget: f64,
}

impl KcProbs {
    pub const DEFAULT: KcProbs = KcProbs {
        init: 0.3,
        learn: 0.3,
        guess: 0.2,
        slip: 0.1,
        forget: 0.05,
    };

    fn to_array(self) -> [f64; 5] {
        [self.init, self.learn, self.guess, self.slip, self.forget]
    }

    fn from_array(a: [f64; 5]) -> Self {
        KcProbs {
            init: a[INIT],
            learn: a[LEARN],
            guess: a[GUESS],
            slip: a[SLIP],
            forget: a[FORGET],
        }
    }
}

/// Per-KC logits of `(P(L0), P(T), P(G), P(S), P(F))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BktParams {
    logits: Vec<[f64; 5]>,
}

impl BktParams {
    pub fn new(n_kcs: usize) -> Self {
        Self::from_probs(vec![KcProbs::DEFAULT; n_kcs])
    }

    pub fn from_probs(probs: Vec<KcProbs>) -> Self {
        BktParams {
            logits: probs
                .into_iter()
                .map(|p| p.to_array().map(|x| logit(x.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))))
                .collect(),
        }
    }

    pub fn from_logits(logits: Vec<[f64; 5]>) -> Self {
        BktParams { logits }
    }

    pub fn logits(&self) -> &[[f64; 5]] {
        &self.logits
    }

    pub fn n_kcs(&self) -> usize {
        self.logits.len()
    }

    pub fn probs(&self, kc: usize) -> Result<KcProbs> {
        self.logits
            .get(kc)
            .map(|l| KcProbs::from_array(l.map(sigmoid)))
            .ok_or(Error::UnknownKc(kc))
    }

    /// Structured text: a header row, then per KC the five probabilities
    /// followed by the five logits (the logits make import bit-exact).
    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "kc,p_init,p_learn,p_guess,p_slip,p_forget,\
             logit_init,logit_learn,logit_guess,logit_slip,logit_forget\n",
        );
        for (k, l) in self.logits.iter().enumerate() {
            let p = l.map(sigmoid);
            let _ = write!(out, "{k}");
            for v in p.iter().chain(l.iter()) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<bkt parameters>".into(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.starts_with("kc,p_init") => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut logits = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(bad(i + 1, "expected 11 fields"));
            }
            let k: usize = f[0].parse().map_err(|_| bad(i + 1, "bad KC index"))?;
            if k != logits.len() {
                return Err(bad(i + 1, "KC rows must be consecutive from 0"));
            }
            let mut l = [0.0; 5];
            for (j, slot) in l.iter_mut().enumerate() {
                *slot = f[6 + j].parse().map_err(|_| bad(i + 1, "bad logit"))?;
            }
            logits.push(l);
        }
        Ok(BktParams { logits })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Mastery beliefs of one student, one per KC.
#[derive(Debug, Clone, PartialEq)]
pub struct BktState {
    pub mastery: Vec<f64>,
}

impl BktState {
    pub fn new(params: &BktParams) -> Self {
        BktState {
            mastery: params.logits.iter().map(|l| sigmoid(l[INIT])).collect(),
        }
    }
}

/// `p_L·(1 − P(S)) + (1 − p_L)·P(G)`.
pub fn predict_correct(params: &BktParams, state: &BktState, kc: usize) -> Result<f64> {
    let p = params.probs(kc)?;
    let m = *state.mastery.get(kc).ok_or(Error::UnknownKc(kc))?;
    Ok(m * (1.0 - p.slip) + (1.0 - m) * p.guess)
}

/// Bayes posterior given the observation, then the learn/forget transition.
pub fn observe(params: &BktParams, state: &mut BktState, kc: usize, correct: bool) -> Result<()> {
    let p = params.probs(kc)?;
    let m = *state.mastery.get(kc).ok_or(Error::UnknownKc(kc))?;
    let post = if correct {
        let num = m * (1.0 - p.slip);
        let den = num + (1.0 - m) * p.guess;
        if den > 0.0 { num / den } else { m }
    } else {
        let num = m * p.slip;
        let den = num + (1.0 - m) * (1.0 - p.guess);
        if den > 0.0 { num / den } else { m }
    };
    state.mastery[kc] = (post * (1.0 - p.forget) + (1.0 - post) * p.learn).clamp(0.0, 1.0);
    Ok(())
}

/// Mean of the per-KC predictions over the exercise's KCs.
pub fn predict_exercise(params: &BktParams, state: &BktState, kcs: &[usize]) -> Result<f64> {
    if kcs.is_empty() {
        return Err(Error::invalid("BKT prediction for an exercise without KCs"));
    }
    let mut s = 0.0;
    for &k in kcs {
        s += predict_correct(params, state, k)?;
    }
    Ok(s / kcs.len() as f64)
}

/// Mastery belief plus its derivative with respect to the KC's own logits.
#[derive(Clone, Copy)]
struct Tracked {
    m: f64,
    dm: [f64; 5],
}

fn scale(a: [f64; 5], s: f64) -> [f64; 5] {
    a.map(|x| x * s)
}

fn axpy(a: [f64; 5], s: f64, b: [f64; 5]) -> [f64; 5] {
    let mut out = b;
    for i in 0..5 {
        out[i] += s * a[i];
    }
    out
}

/// Walks one sequence, optionally accumulating the gradient of the
/// log-likelihood into `grad`. Interactions on untagged exercises are
/// skipped. `score` receives `(index, prediction, label)` for every
/// predicted interaction.
fn walk(
    params: &BktParams,
    seq: &StudentSequence,
    qmatrix: &QMatrix,
    mut grad: Option<&mut [[f64; 5]]>,
    mut score: impl FnMut(usize, f64, bool),
) -> Result<f64> {
    let probs: Vec<[f64; 5]> = params.logits.iter().map(|l| l.map(sigmoid)).collect();
    let mut chains: Vec<Option<Tracked>> = vec![None; params.n_kcs()];
    let mut ll = 0.0;
    for (t, it) in seq.interactions.iter().enumerate() {
        let kcs = qmatrix.kcs(it.exercise)?;
        if kcs.is_empty() {
            continue;
        }
        let w = 1.0 / kcs.len() as f64;
        let mut pred = 0.0;
        let mut dpred: Vec<[f64; 5]> = Vec::with_capacity(kcs.len());
        for &k in kcs {
            let p = probs.get(k).ok_or(Error::UnknownKc(k))?;
            let c = chains[k].get_or_insert(Tracked {
                m: p[INIT],
                dm: {
                    let mut d = [0.0; 5];
                    d[INIT] = p[INIT] * (1.0 - p[INIT]);
                    d
                },
            });
            let (g, s) = (p[GUESS], p[SLIP]);
            pred += w * (c.m * (1.0 - s) + (1.0 - c.m) * g);
            let mut d = scale(c.dm, 1.0 - s - g);
            d[GUESS] += (1.0 - c.m) * g * (1.0 - g);
            d[SLIP] -= c.m * s * (1.0 - s);
            dpred.push(d);
        }
        let pc = pred.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        ll += if it.correct { pc.ln() } else { (1.0 - pc).ln() };
        score(t, pred, it.correct);
        if let Some(grad) = grad.as_deref_mut() {
            let dl = if it.correct { 1.0 / pc } else { -1.0 / (1.0 - pc) };
            for (&k, d) in kcs.iter().zip(&dpred) {
                grad[k] = axpy(*d, dl * w, grad[k]);
            }
        }
        for (&k, dp) in kcs.iter().zip(&dpred) {
            let p = probs[k];
            let (tr, g, s, f) = (p[LEARN], p[GUESS], p[SLIP], p[FORGET]);
            let c = chains[k].as_mut().expect("initialized above");
            let pk = c.m * (1.0 - s) + (1.0 - c.m) * g;
            let (num, den, mut dnum, dden) = if it.correct {
                let mut dn = scale(c.dm, 1.0 - s);
                dn[SLIP] -= c.m * s * (1.0 - s);
                (c.m * (1.0 - s), pk, dn, *dp)
            } else {
                let mut dn = scale(c.dm, s);
                dn[SLIP] += c.m * s * (1.0 - s);
                (c.m * s, 1.0 - pk, dn, scale(*dp, -1.0))
            };
            let (post, dpost) = if den > 0.0 {
                for i in 0..5 {
                    dnum[i] = (dnum[i] * den - num * dden[i]) / (den * den);
                }
                (num / den, dnum)
            } else {
                (c.m, c.dm)
            };
            let mut dnew = scale(dpost, 1.0 - f - tr);
            dnew[LEARN] += (1.0 - post) * tr * (1.0 - tr);
            dnew[FORGET] -= post * f * (1.0 - f);
            c.m = post * (1.0 - f) + (1.0 - post) * tr;
            c.dm = dnew;
        }
    }
    Ok(ll)
}

/// Sum over interactions of the log predicted probability of the observed
/// answer (forward filtering, one-step-ahead). Empty sequences give 0.
pub fn sequence_loglik(params: &BktParams, seq: &StudentSequence, qmatrix: &QMatrix) -> Result<f64> {
    walk(params, seq, qmatrix, None, |_, _, _| {})
}

/// Log-likelihood and its gradient with respect to every KC's logits.
pub fn sequence_loglik_grad(
    params: &BktParams,
    seq: &StudentSequence,
    qmatrix: &QMatrix,
) -> Result<(f64, Vec<[f64; 5]>)> {
    let mut grad = vec![[0.0; 5]; params.n_kcs()];
    let ll = walk(params, seq, qmatrix, Some(&mut grad), |_, _, _| {})?;
    Ok((ll, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BktTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for BktTrainConfig {
    fn default() -> Self {
        BktTrainConfig {
            lr: 0.01,
            epochs: 30,
            batch: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BktTrainReport {
    /// Mean train log-likelihood per interaction, one entry per epoch.
    pub train_loglik: Vec<f64>,
    /// Validation AUC per epoch when a validation set was given.
    pub val_auc: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Stochastic gradient ascent on the log-likelihood. Each step uses the
/// gradient summed over a batch of sequences divided by the batch size.
/// With a validation set, the parameters of the epoch with the best
/// validation AUC are returned.
pub fn train(
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &BktTrainConfig,
) -> Result<(BktParams, BktTrainReport)> {
    if train_set.sequences.is_empty() {
        return Err(Error::invalid("BKT training set is empty"));
    }
    let mut params = BktParams::new(train_set.n_kcs());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.sequences.len()).collect();
    let n_inter = train_set.n_interactions().max(1) as f64;
    let mut report = BktTrainReport {
        train_loglik: Vec::new(),
        val_auc: Vec::new(),
        best_epoch: None,
    };
    let mut best = (f64::NEG_INFINITY, params.clone());
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch.max(1)) {
            let mut grad = vec![[0.0; 5]; params.n_kcs()];
            for &i in batch {
                let (ll, g) = sequence_loglik_grad(&params, &train_set.sequences[i], &train_set.qmatrix)?;
                total += ll;
                for (acc, gk) in grad.iter_mut().zip(&g) {
                    for j in 0..5 {
                        acc[j] += gk[j];
                    }
                }
            }
            let step = config.lr / batch.len() as f64;
            for (l, g) in params.logits.iter_mut().zip(&grad) {
                for j in 0..5 {
                    l[j] += step * g[j];
                }
            }
        }
        report.train_loglik.push(total / n_inter);
        if let Some(val) = val_set {
            let a = evaluate_auc(&params, val)?;
            report.val_auc.push(a);
            if a > best.0 {
                best = (a, params.clone());
                report.best_epoch = Some(epoch);
            }
        }
    }
    if report.best_epoch.is_some() {
        params = best.1;
    }
    Ok((params, report))
}

/// One-step-ahead predictions for every interaction after the first of each
/// sequence, skipping untagged exercises.
pub fn predictions(params: &BktParams, dataset: &Dataset) -> Result<Vec<ScoredPrediction>> {
    let mut out = Vec::new();
    for seq in &dataset.sequences {
        walk(params, seq, &dataset.qmatrix, None, |t, p, y| {
            if t > 0 {
                out.push(ScoredPrediction::new(p, y));
            }
        })?;
    }
    Ok(out)
}

pub fn evaluate_auc(params: &BktParams, dataset: &Dataset) -> Result<f64> {
    auc(&predictions(params, dataset)?)
}
