//! Deep knowledge tracing with mean-of-KC-embedding inputs.
//!
//! Interaction `t` on an exercise with KC set `K` and answer `y` feeds the
//! LSTM with the mean of embedding rows `i` (if `y = 1`) or `N + i` (if
//! `y = 0`) over `i ∈ K`. The output layer gives one sigmoid probability per
//! KC, read as the prediction for the next interaction; an exercise is
//! scored by the mean over its KCs. The first interaction of a sequence is
//! never scored.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, QMatrix, StudentSequence};
use crate::error::{Error, Result};
use crate::eval::{auc, ScoredPrediction};
use crate::tensor::{Adam, Checkpoint, Graph, Linear, Lstm, ParamId, ParamStore, Shape, TensorId};

#[derive(Debug, Clone, PartialEq)]
pub struct DktConfig {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub batch: usize,
    /// Epochs without a validation AUC improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for DktConfig {
    fn default() -> Self {
        DktConfig {
            emb_dim: 32,
            hidden_dim: 128,
            lr: 0.001,
            batch: 128,
            patience: 5,
            max_epochs: 100,
            seed: 0,
        }
    }
}

/// Labeled KC embedding table (`2N` rows) feeding an LSTM.
#[derive(Debug, Clone, Copy)]
pub struct LabeledKcBody {
    pub emb: ParamId,
    pub lstm: Lstm,
    pub n_kcs: usize,
}

impl LabeledKcBody {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        n_kcs: usize,
        emb_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (emb_dim.max(1) as f64).sqrt();
        let emb = store.uniform(format!("{name}.emb"), Shape::new(2 * n_kcs, emb_dim), bound, rng);
        let lstm = Lstm::new(store, &format!("{name}.lstm"), emb_dim, hidden, rng);
        LabeledKcBody { emb, lstm, n_kcs }
    }

    pub fn from_store(store: &ParamStore, name: &str) -> Option<Self> {
        let emb = store.id(&format!("{name}.emb"))?;
        let lstm = Lstm::from_store(store, &format!("{name}.lstm"))?;
        Some(LabeledKcBody {
            emb,
            lstm,
            n_kcs: store.get(emb).shape.rows / 2,
        })
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    /// Embedding rows for one interaction: `i` if correct, `N + i` if not.
    pub fn rows(&self, kcs: &[usize], correct: bool) -> Result<Vec<usize>> {
        kcs.iter()
            .map(|&k| {
                if k >= self.n_kcs {
                    Err(Error::UnknownKc(k))
                } else {
                    Ok(if correct { k } else { self.n_kcs + k })
                }
            })
            .collect()
    }

    /// One batched step; an empty row list gives a zero input.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        rows: Vec<Vec<usize>>,
        h: TensorId,
        c: TensorId,
    ) -> Result<(TensorId, TensorId)> {
        let emb = g.param(store, self.emb);
        let x = g.mean_rows(emb, rows)?;
        Ok(self.lstm.step(g, store, x, h, c)?)
    }
}

/// LSTM carry for one student.
#[derive(Debug, Clone, PartialEq)]
pub struct DktState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Dkt {
    store: ParamStore,
    body: LabeledKcBody,
    out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per scored interaction, one entry per epoch.
    pub train_loss: Vec<f64>,
    pub val_auc: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Mean of `probs` over the KC set.
pub fn predict_exercise(probs: &[f64], kcs: &[usize]) -> Result<f64> {
    if kcs.is_empty() {
        return Err(Error::invalid("prediction for an exercise without KCs"));
    }
    let mut s = 0.0;
    for &k in kcs {
        s += *probs.get(k).ok_or(Error::UnknownKc(k))?;
    }
    Ok(s / kcs.len() as f64)
}

/// Output of a batched unroll: the summed loss node (if any interaction was
/// scored) and per-sequence predictions in time order.
pub(crate) struct Unrolled {
    pub loss: Option<TensorId>,
    pub scored: usize,
    pub preds: Vec<Vec<ScoredPrediction>>,
}

impl Dkt {
    pub fn new(n_kcs: usize, config: &DktConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(n_kcs, config, &mut rng)
    }

    fn with_rng<R: Rng>(n_kcs: usize, config: &DktConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let body = LabeledKcBody::new(&mut store, "dkt", n_kcs, config.emb_dim, config.hidden_dim, rng);
        let out = Linear::new(&mut store, "dkt.out", config.hidden_dim, n_kcs, rng);
        Dkt { store, body, out }
    }

    pub fn n_kcs(&self) -> usize {
        self.body.n_kcs
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn initial_state(&self) -> DktState {
        DktState {
            h: vec![0.0; self.body.hidden()],
            c: vec![0.0; self.body.hidden()],
        }
    }

    fn probs_from(&self, g: &mut Graph, h: TensorId) -> Result<Vec<f64>> {
        let logits = self.out.forward(g, &self.store, h)?;
        let p = g.sigmoid(logits);
        Ok(g.value(p).to_vec())
    }

    /// Per-KC probabilities for the next interaction given the state.
    pub fn probs(&self, state: &DktState) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let h = g.constant(Shape::row(state.h.len()), state.h.clone());
        self.probs_from(&mut g, h)
    }

    /// Advances one interaction and returns the new state with per-KC
    /// probabilities for the next interaction.
    pub fn step(&self, state: &DktState, kcs: &[usize], correct: bool) -> Result<(DktState, Vec<f64>)> {
        if kcs.is_empty() {
            return Err(Error::invalid("DKT step needs a non-empty KC set"));
        }
        let rows = self.body.rows(kcs, correct)?;
        let mut g = Graph::new();
        let d = self.body.hidden();
        let h = g.constant(Shape::row(d), state.h.clone());
        let c = g.constant(Shape::row(d), state.c.clone());
        let (h, c) = self.body.step(&mut g, &self.store, vec![rows], h, c)?;
        let probs = self.probs_from(&mut g, h)?;
        Ok((
            DktState {
                h: g.value(h).to_vec(),
                c: g.value(c).to_vec(),
            },
            probs,
        ))
    }

    /// Runs a batch of sequences through the model. Interaction `t + 1` is
    /// scored from the state after interaction `t`.
    pub(crate) fn unroll(
        &self,
        g: &mut Graph,
        seqs: &[&StudentSequence],
        qmatrix: &QMatrix,
    ) -> Result<Unrolled> {
        let b = seqs.len();
        let n = self.n_kcs();
        let d = self.body.hidden();
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut h = g.zeros(Shape::new(b, d));
        let mut c = g.zeros(Shape::new(b, d));
        let mut loss: Option<TensorId> = None;
        let mut scored = 0;
        let mut preds = vec![Vec::new(); b];
        for t in 0..max_len.saturating_sub(1) {
            let mut rows = Vec::with_capacity(b);
            for s in seqs {
                rows.push(match s.interactions.get(t) {
                    Some(it) => self.body.rows(qmatrix.kcs(it.exercise)?, it.correct)?,
                    None => Vec::new(),
                });
            }
            let (h2, c2) = self.body.step(g, &self.store, rows, h, c)?;
            h = h2;
            c = c2;
            let mut select = vec![0.0; b * n];
            let mut targets = vec![0.0; b];
            let mut weights = vec![0.0; b];
            for (r, s) in seqs.iter().enumerate() {
                let Some(next) = s.interactions.get(t + 1) else { continue };
                let kcs = qmatrix.kcs(next.exercise)?;
                if kcs.is_empty() {
                    continue;
                }
                for &k in kcs {
                    select[r * n + k] = 1.0 / kcs.len() as f64;
                }
                targets[r] = f64::from(u8::from(next.correct));
                weights[r] = 1.0;
            }
            if weights.iter().all(|&w| w == 0.0) {
                continue;
            }
            let logits = self.out.forward(g, &self.store, h)?;
            let probs = g.sigmoid(logits);
            let picked = g.mul_const(probs, select)?;
            let p = g.row_sums(picked);
            for r in 0..b {
                if weights[r] > 0.0 {
                    preds[r].push(ScoredPrediction::new(g.value(p)[r], targets[r] == 1.0));
                    scored += 1;
                }
            }
            let step_loss = g.bce(p, targets, weights)?;
            loss = Some(match loss {
                Some(l) => g.add(l, step_loss)?,
                None => step_loss,
            });
        }
        Ok(Unrolled { loss, scored, preds })
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.n_kcs() != self.n_kcs() {
            return Err(Error::invalid(format!(
                "model has {} KCs but the dataset has {}",
                self.n_kcs(),
                dataset.n_kcs()
            )));
        }
        Ok(())
    }

    /// One-step-ahead predictions for every scored interaction, in
    /// sequence order.
    pub fn predictions(&self, dataset: &Dataset) -> Result<Vec<ScoredPrediction>> {
        self.check_dataset(dataset)?;
        let mut out = Vec::new();
        let seqs: Vec<&StudentSequence> = dataset.sequences.iter().collect();
        for chunk in seqs.chunks(128) {
            let mut g = Graph::new();
            let u = self.unroll(&mut g, chunk, &dataset.qmatrix)?;
            out.extend(u.preds.into_iter().flatten());
        }
        Ok(out)
    }

    pub fn evaluate_auc(&self, dataset: &Dataset) -> Result<f64> {
        auc(&self.predictions(dataset)?)
    }

    /// Mean loss per scored interaction over a batch, with gradients
    /// accumulated into the parameter store.
    pub fn loss_and_grad(&mut self, seqs: &[&StudentSequence], qmatrix: &QMatrix) -> Result<Option<f64>> {
        let mut g = Graph::new();
        let u = self.unroll(&mut g, seqs, qmatrix)?;
        let Some(loss) = u.loss else { return Ok(None) };
        let mean = g.scale(loss, 1.0 / u.scored as f64);
        g.backward(mean)?;
        self.store.zero_grads();
        g.accumulate_param_grads(&mut self.store);
        Ok(Some(g.scalar(mean)))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(&self.store)
            .with_meta("model", "dkt")
            .with_meta("n_kcs", self.n_kcs())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta("model")? != "dkt" {
            return Err(Error::Checkpoint(format!("expected a dkt checkpoint, got {}", ckpt.meta("model")?)));
        }
        let store = ckpt.to_store();
        let missing = || Error::Checkpoint("dkt checkpoint is missing arrays".into());
        let body = LabeledKcBody::from_store(&store, "dkt").ok_or_else(missing)?;
        let out = Linear::from_store(&store, "dkt.out").ok_or_else(missing)?;
        if body.n_kcs != ckpt.meta_usize("n_kcs")? || out.d_out != body.n_kcs {
            return Err(Error::Checkpoint("dkt checkpoint shapes disagree".into()));
        }
        Ok(Dkt { store, body, out })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Adam on the mean BCE of one-step-ahead predictions. With a validation
/// set, training stops after `patience` epochs without a validation AUC
/// improvement and the best epoch's weights are returned.
pub fn train(train_set: &Dataset, val_set: Option<&Dataset>, config: &DktConfig) -> Result<(Dkt, TrainReport)> {
    if train_set.sequences.is_empty() {
        return Err(Error::invalid("DKT training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Dkt::with_rng(train_set.n_kcs(), config, &mut rng);
    let mut opt = Adam::new(config.lr);
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_auc: Vec::new(),
        best_epoch: None,
    };
    let mut best: Option<(f64, ParamStore)> = None;
    let mut order: Vec<usize> = (0..train_set.sequences.len()).collect();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch.max(1)) {
            let seqs: Vec<&StudentSequence> = chunk.iter().map(|&i| &train_set.sequences[i]).collect();
            if let Some(l) = model.loss_and_grad(&seqs, &train_set.qmatrix)? {
                opt.step(&mut model.store);
                total += l;
                batches += 1;
            }
        }
        report.train_loss.push(total / batches.max(1) as f64);
        if let Some(val) = val_set {
            let a = model.evaluate_auc(val)?;
            report.val_auc.push(a);
            if best.as_ref().is_none_or(|(b, _)| a > *b) {
                best = Some((a, model.store.clone()));
                report.best_epoch = Some(epoch);
            } else if report.best_epoch.is_some_and(|b| epoch - b >= config.patience) {
                break;
            }
        }
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interaction;

    fn tiny() -> DktConfig {
        DktConfig {
            emb_dim: 4,
            hidden_dim: 6,
            max_epochs: 3,
            ..Default::default()
        }
    }

    fn zero(model: &mut Dkt) {
        for p in model.store.iter_mut() {
            p.values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn seq(obs: &[(usize, bool)]) -> StudentSequence {
        StudentSequence {
            student: 0,
            interactions: obs
                .iter()
                .enumerate()
                .map(|(t, &(exercise, correct))| Interaction { exercise, correct, order: t as u64 })
                .collect(),
        }
    }

    #[test]
    fn zero_weights_give_half() {
        let mut m = Dkt::new(3, &tiny());
        zero(&mut m);
        let (_, p) = m.step(&m.initial_state(), &[0, 2], true).unwrap();
        assert_eq!(p, vec![0.5; 3]);
    }

    #[test]
    fn singleton_and_pair_inputs() {
        let m = Dkt::new(3, &tiny());
        let emb = m.store.get(m.body.emb);
        let d = emb.shape.cols;
        let mut g = Graph::new();
        let t = g.param(&m.store, m.body.emb);
        let x = g.mean_rows(t, vec![m.body.rows(&[1], false).unwrap(), m.body.rows(&[0, 2], true).unwrap()]).unwrap();
        let v = g.value(x);
        assert_eq!(&v[..d], &emb.values[4 * d..5 * d]);
        for j in 0..d {
            let avg = (emb.values[j] + emb.values[2 * d + j]) / 2.0;
            assert!((v[d + j] - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_kc_set_is_an_error() {
        let m = Dkt::new(2, &tiny());
        assert!(m.step(&m.initial_state(), &[], true).is_err());
        assert!(predict_exercise(&[0.1], &[]).is_err());
        assert_eq!(predict_exercise(&[0.2, 0.8], &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn prediction_does_not_see_its_own_label() {
        let m = Dkt::new(2, &tiny());
        let q = QMatrix::new(2, vec![vec![0], vec![1], vec![0, 1]]).unwrap();
        let base = [(0, true), (1, false), (2, true), (0, false)];
        let run = |obs: &[(usize, bool)]| {
            let mut g = Graph::new();
            let s = seq(obs);
            m.unroll(&mut g, &[&s], &q).unwrap().preds.remove(0)
        };
        let a = run(&base);
        let mut flipped = base;
        flipped[2].1 = false;
        let b = run(&flipped);
        // prediction for interaction 2 is preds[1]
        assert_eq!(a[1].prob, b[1].prob);
        assert_ne!(a[2].prob, b[2].prob);
    }

    #[test]
    fn step_matches_batched_unroll() {
        let m = Dkt::new(2, &tiny());
        let q = QMatrix::new(2, vec![vec![0], vec![1]]).unwrap();
        let obs = [(0, true), (1, false), (1, true)];
        let mut g = Graph::new();
        let s = seq(&obs);
        let preds = m.unroll(&mut g, &[&s], &q).unwrap().preds.remove(0);
        let mut state = m.initial_state();
        for (t, &(e, y)) in obs.iter().enumerate().take(2) {
            let (s2, p) = m.step(&state, q.kcs(e).unwrap(), y).unwrap();
            state = s2;
            let next = obs[t + 1].0;
            assert!((predict_exercise(&p, q.kcs(next).unwrap()).unwrap() - preds[t].prob).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Dkt::new(3, &tiny());
        let back = Dkt::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap()).unwrap();
        let s = m.initial_state();
        assert_eq!(m.step(&s, &[1], true).unwrap(), back.step(&s, &[1], true).unwrap());
    }
}
