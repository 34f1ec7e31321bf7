//! Knowledge tracing with learned sparse binary exercise codes.
//!
//! Every exercise owns an embedding `x_q ∈ R^d`. A linear encoder maps it
//! to `e_q = W x_q + b ∈ R^M`, which is quantized: the `C_max` largest
//! entries that are also positive become `α`, every other entry `β`, with
//! `α = c(1 + σ(p_α))` and `β = c·σ(p_β)`. The quantizer passes gradients
//! straight through.
//!
//! Interaction `t` is encoded as `v_t = u_{kc,y} ⊕ u_{q,y}` (the labeled
//! concatenation of the human multi-hot vector and the quantized code),
//! projected to `z_t = W_proj v_t`, and fed to an LSTM whose output layer
//! emits logits `o_t ∈ R^{N+M}`. The next interaction is predicted by
//! `σ(u_{t+1}ᵀ o_t)` where `u_{t+1}` is the multi-hot vector followed by the
//! code mapped to `{0, 1}`.
//!
//! After training, the `{0, 1}` codes are the auxiliary KCs of each
//! exercise.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{AuxQMatrix, Dataset, QMatrix, StudentSequence};
use crate::error::{Error, Result};
use crate::eval::{auc, ScoredPrediction};
use crate::tensor::{
    sigmoid, top_k_mask, Adam, Checkpoint, Graph, Linear, Lstm, ParamId, ParamStore, Shape,
    TensorId,
};

/// Scale of the binary mapping.
pub const SCALE_C: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SbrktConfig {
    pub emb_dim: usize,
    pub n_aux: usize,
    pub c_max: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub batch: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for SbrktConfig {
    fn default() -> Self {
        SbrktConfig {
            emb_dim: 32,
            n_aux: 32,
            c_max: 4,
            hidden_dim: 128,
            lr: 0.001,
            batch: 128,
            patience: 5,
            max_epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sbrkt {
    store: ParamStore,
    n_kcs: usize,
    c_max: usize,
    embedding: ParamId,
    encoder: Linear,
    p_alpha: ParamId,
    p_beta: ParamId,
    proj: ParamId,
    lstm: Lstm,
    out: Linear,
}

/// LSTM carry plus the latest output logits `o_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SbrktState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub o: Vec<f64>,
}

pub use crate::dkt::TrainReport;

/// Per-step symbolic pieces of a batched unroll.
struct Codes {
    /// `{0, 1}` code, `B × M`.
    q: TensorId,
    /// `{α, β}` code, `B × M`.
    u: TensorId,
}

impl Sbrkt {
    pub fn new(n_kcs: usize, n_exercises: usize, config: &SbrktConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(n_kcs, n_exercises, config, &mut rng)
    }

    fn with_rng<R: Rng>(n_kcs: usize, n_exercises: usize, config: &SbrktConfig, rng: &mut R) -> Result<Self> {
        if config.c_max == 0 || config.c_max > config.n_aux {
            return Err(Error::invalid(format!(
                "c_max must lie in 1..={}, got {}",
                config.n_aux, config.c_max
            )));
        }
        let (d, m, h) = (config.emb_dim, config.n_aux, config.hidden_dim);
        let mut store = ParamStore::new();
        let embedding = store.uniform(
            "sbrkt.exercise_emb",
            Shape::new(n_exercises, d),
            1.0 / (d.max(1) as f64).sqrt(),
            rng,
        );
        let encoder = Linear::new(&mut store, "sbrkt.encoder", d, m, rng);
        let p_alpha = store.zeros("sbrkt.p_alpha", Shape::SCALAR);
        let p_beta = store.zeros("sbrkt.p_beta", Shape::SCALAR);
        let v = 2 * n_kcs + 2 * m;
        let proj = store.uniform("sbrkt.proj", Shape::new(v, h), 1.0 / (v.max(1) as f64).sqrt(), rng);
        let lstm = Lstm::new(&mut store, "sbrkt.lstm", h, h, rng);
        let out = Linear::new(&mut store, "sbrkt.out", h, n_kcs + m, rng);
        Ok(Sbrkt {
            store,
            n_kcs,
            c_max: config.c_max,
            embedding,
            encoder,
            p_alpha,
            p_beta,
            proj,
            lstm,
            out,
        })
    }

    pub fn n_kcs(&self) -> usize {
        self.n_kcs
    }

    pub fn n_aux(&self) -> usize {
        self.encoder.d_out
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    pub fn n_exercises(&self) -> usize {
        self.store.get(self.embedding).shape.rows
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    /// `(α, β)`.
    pub fn alpha_beta(&self) -> (f64, f64) {
        let pa = self.store.get(self.p_alpha).values[0];
        let pb = self.store.get(self.p_beta).values[0];
        (SCALE_C * (1.0 + sigmoid(pa)), SCALE_C * sigmoid(pb))
    }

    fn check_exercise(&self, e: usize) -> Result<()> {
        if e >= self.n_exercises() {
            return Err(Error::UnknownExercise(format!("index {e}")));
        }
        Ok(())
    }

    /// `e_q = W x_q + b`.
    pub fn encoder_output(&self, exercise: usize) -> Result<Vec<f64>> {
        self.check_exercise(exercise)?;
        let d = self.store.get(self.embedding).shape.cols;
        let x = &self.store.get(self.embedding).values[exercise * d..(exercise + 1) * d];
        let w = self.store.get(self.encoder.weight);
        let b = self.store.get(self.encoder.bias);
        let m = self.n_aux();
        let mut e = b.values.clone();
        for (i, xi) in x.iter().enumerate() {
            for j in 0..m {
                e[j] += xi * w.values[i * m + j];
            }
        }
        Ok(e)
    }

    /// `{0, 1}` code of an exercise: positive entries among the top `C_max`.
    pub fn binary_code(&self, exercise: usize) -> Result<Vec<bool>> {
        let e = self.encoder_output(exercise)?;
        Ok(top_k_mask(&e, self.c_max)
            .into_iter()
            .zip(&e)
            .map(|(m, &x)| m && x > 0.0)
            .collect())
    }

    /// `u_q ∈ {α, β}^M`.
    pub fn encode_exercise(&self, exercise: usize) -> Result<Vec<f64>> {
        let (a, b) = self.alpha_beta();
        Ok(self
            .binary_code(exercise)?
            .into_iter()
            .map(|q| if q { a } else { b })
            .collect())
    }

    /// Auxiliary KC sets for exercises `0..n`.
    pub fn export_aux(&self) -> Result<AuxQMatrix> {
        let tags = (0..self.n_exercises())
            .map(|e| {
                Ok(self
                    .binary_code(e)?
                    .into_iter()
                    .enumerate()
                    .filter_map(|(j, q)| q.then_some(j))
                    .collect())
            })
            .collect::<Result<Vec<Vec<usize>>>>()?;
        AuxQMatrix::new(self.n_aux(), self.c_max, tags)
    }

    fn alpha_beta_nodes(&self, g: &mut Graph) -> Result<(TensorId, TensorId)> {
        let pa = g.param(&self.store, self.p_alpha);
        let pb = g.param(&self.store, self.p_beta);
        let sa = g.sigmoid(pa);
        let one = g.constant(Shape::SCALAR, vec![1.0]);
        let a = g.add(one, sa)?;
        let a = g.scale(a, SCALE_C);
        let sb = g.sigmoid(pb);
        let b = g.scale(sb, SCALE_C);
        Ok((a, b))
    }

    fn codes(&self, g: &mut Graph, exercises: &[usize], ab: (TensorId, TensorId)) -> Result<Codes> {
        let emb = g.param(&self.store, self.embedding);
        let x = g.gather_rows(emb, exercises)?;
        let e = self.encoder.forward(g, &self.store, x)?;
        let q = g.ste_binarize(e, self.c_max)?;
        let u = g.binary_map(q, ab.0, ab.1)?;
        Ok(Codes { q, u })
    }

    /// `v_t` for a batch: labeled human multi-hot ⊕ labeled code. Rows with
    /// `labels[r] = None` (padding) are all zero.
    fn inputs(
        &self,
        g: &mut Graph,
        kcs: &[&[usize]],
        labels: &[Option<bool>],
        u: TensorId,
    ) -> Result<TensorId> {
        let (b, n, m) = (kcs.len(), self.n_kcs, self.n_aux());
        let mut human = vec![0.0; b * 2 * n];
        let mut right = vec![0.0; b * m];
        let mut wrong = vec![0.0; b * m];
        for r in 0..b {
            let Some(y) = labels[r] else { continue };
            let off = if y { 0 } else { n };
            for &k in kcs[r] {
                if k >= n {
                    return Err(Error::UnknownKc(k));
                }
                human[r * 2 * n + off + k] = 1.0;
            }
            let dst = if y { &mut right } else { &mut wrong };
            dst[r * m..(r + 1) * m].iter_mut().for_each(|v| *v = 1.0);
        }
        let human = g.constant(Shape::new(b, 2 * n), human);
        let ur = g.mul_const(u, right)?;
        let uw = g.mul_const(u, wrong)?;
        let aux = g.concat_cols(ur, uw)?;
        Ok(g.concat_cols(human, aux)?)
    }

    /// `u_t`: multi-hot human KCs ⊕ `{0, 1}` code.
    fn targets_mask(&self, g: &mut Graph, kcs: &[&[usize]], q: TensorId) -> Result<TensorId> {
        let (b, n) = (kcs.len(), self.n_kcs);
        let mut human = vec![0.0; b * n];
        for (r, ks) in kcs.iter().enumerate() {
            for &k in *ks {
                if k >= n {
                    return Err(Error::UnknownKc(k));
                }
                human[r * n + k] = 1.0;
            }
        }
        let human = g.constant(Shape::new(b, n), human);
        Ok(g.concat_cols(human, q)?)
    }

    fn advance(
        &self,
        g: &mut Graph,
        v: TensorId,
        h: TensorId,
        c: TensorId,
    ) -> Result<(TensorId, TensorId, TensorId)> {
        let w = g.param(&self.store, self.proj);
        let z = g.matmul(v, w)?;
        let (h, c) = self.lstm.step(g, &self.store, z, h, c)?;
        let o = self.out.forward(g, &self.store, h)?;
        Ok((h, c, o))
    }

    pub fn initial_state(&self) -> SbrktState {
        let d = self.hidden();
        SbrktState {
            h: vec![0.0; d],
            c: vec![0.0; d],
            o: self.store.get(self.out.bias).values.clone(),
        }
    }

    /// Consumes one interaction and returns the new state; `state.o` holds
    /// the logits for the next interaction.
    pub fn forward_step(
        &self,
        state: &SbrktState,
        exercise: usize,
        kcs: &[usize],
        correct: bool,
    ) -> Result<SbrktState> {
        let code = self.binary_code(exercise)?;
        self.forward_code(state, kcs, &code, correct)
    }

    /// [`Sbrkt::forward_step`] with an explicit `{0, 1}` code in place of an
    /// exercise's learned one.
    pub fn forward_code(
        &self,
        state: &SbrktState,
        kcs: &[usize],
        code: &[bool],
        correct: bool,
    ) -> Result<SbrktState> {
        let m = self.n_aux();
        if code.len() != m {
            return Err(Error::invalid(format!("code has {} entries, expected {m}", code.len())));
        }
        let mut g = Graph::new();
        let ab = self.alpha_beta_nodes(&mut g)?;
        let q = g.constant(Shape::row(m), code.iter().map(|&b| f64::from(u8::from(b))).collect());
        let u = g.binary_map(q, ab.0, ab.1)?;
        let v = self.inputs(&mut g, &[kcs], &[Some(correct)], u)?;
        let d = self.hidden();
        let h = g.constant(Shape::row(d), state.h.clone());
        let c = g.constant(Shape::row(d), state.c.clone());
        let (h, c, o) = self.advance(&mut g, v, h, c)?;
        Ok(SbrktState {
            h: g.value(h).to_vec(),
            c: g.value(c).to_vec(),
            o: g.value(o).to_vec(),
        })
    }

    /// `σ(u_tᵀ o_prev)` with the multi-hot KC vector and the `{0, 1}` code.
    pub fn predict(&self, o_prev: &[f64], exercise: usize, kcs: &[usize]) -> Result<f64> {
        let code = self.binary_code(exercise)?;
        let mut z = 0.0;
        for &k in kcs {
            if k >= self.n_kcs {
                return Err(Error::UnknownKc(k));
            }
            z += o_prev[k];
        }
        for (j, q) in code.into_iter().enumerate() {
            if q {
                z += o_prev[self.n_kcs + j];
            }
        }
        Ok(sigmoid(z))
    }

    /// Batched unroll over padded sequences. Returns the summed BCE node,
    /// the number of scored interactions and per-sequence predictions.
    pub(crate) fn unroll(
        &self,
        g: &mut Graph,
        seqs: &[&StudentSequence],
        qmatrix: &QMatrix,
    ) -> Result<crate::dkt::Unrolled> {
        let b = seqs.len();
        let d = self.hidden();
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let ab = self.alpha_beta_nodes(g)?;
        let mut h = g.zeros(Shape::new(b, d));
        let mut c = g.zeros(Shape::new(b, d));
        let mut o: Option<TensorId> = None;
        let mut loss: Option<TensorId> = None;
        let mut scored = 0;
        let mut preds = vec![Vec::new(); b];
        let empty: &[usize] = &[];
        for t in 0..max_len {
            let mut exercises = Vec::with_capacity(b);
            let mut kcs: Vec<&[usize]> = Vec::with_capacity(b);
            let mut labels = Vec::with_capacity(b);
            for s in seqs {
                match s.interactions.get(t) {
                    Some(it) => {
                        self.check_exercise(it.exercise)?;
                        exercises.push(it.exercise);
                        kcs.push(qmatrix.kcs(it.exercise)?);
                        labels.push(Some(it.correct));
                    }
                    None => {
                        exercises.push(0);
                        kcs.push(empty);
                        labels.push(None);
                    }
                }
            }
            let codes = self.codes(g, &exercises, ab)?;
            if let Some(o_prev) = o {
                let mask = self.targets_mask(g, &kcs, codes.q)?;
                let prod = g.mul(mask, o_prev)?;
                let z = g.row_sums(prod);
                let p = g.sigmoid(z);
                let targets: Vec<f64> = labels.iter().map(|l| f64::from(u8::from(*l == Some(true)))).collect();
                let weights: Vec<f64> = labels.iter().map(|l| f64::from(u8::from(l.is_some()))).collect();
                for r in 0..b {
                    if let Some(y) = labels[r] {
                        preds[r].push(ScoredPrediction::new(g.value(p)[r], y));
                        scored += 1;
                    }
                }
                let step_loss = g.bce(p, targets, weights)?;
                loss = Some(match loss {
                    Some(l) => g.add(l, step_loss)?,
                    None => step_loss,
                });
            }
            if t + 1 < max_len {
                let v = self.inputs(g, &kcs, &labels, codes.u)?;
                let (h2, c2, o2) = self.advance(g, v, h, c)?;
                h = h2;
                c = c2;
                o = Some(o2);
            }
        }
        Ok(crate::dkt::Unrolled { loss, scored, preds })
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.n_kcs() != self.n_kcs || dataset.n_exercises() != self.n_exercises() {
            return Err(Error::invalid(format!(
                "model covers {} KCs and {} exercises but the dataset has {} and {}",
                self.n_kcs,
                self.n_exercises(),
                dataset.n_kcs(),
                dataset.n_exercises()
            )));
        }
        Ok(())
    }

    pub fn predictions(&self, dataset: &Dataset) -> Result<Vec<ScoredPrediction>> {
        self.check_dataset(dataset)?;
        let seqs: Vec<&StudentSequence> = dataset.sequences.iter().collect();
        let mut out = Vec::new();
        for chunk in seqs.chunks(128) {
            let mut g = Graph::new();
            out.extend(self.unroll(&mut g, chunk, &dataset.qmatrix)?.preds.into_iter().flatten());
        }
        Ok(out)
    }

    pub fn evaluate_auc(&self, dataset: &Dataset) -> Result<f64> {
        auc(&self.predictions(dataset)?)
    }

    /// Mean loss per scored interaction, with gradients left in the store.
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
            .with_meta("model", "sbrkt")
            .with_meta("n_kcs", self.n_kcs)
            .with_meta("c_max", self.c_max)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta("model")? != "sbrkt" {
            return Err(Error::Checkpoint(format!(
                "expected an sbrkt checkpoint, got {}",
                ckpt.meta("model")?
            )));
        }
        let store = ckpt.to_store();
        let missing = |what: &str| Error::Checkpoint(format!("sbrkt checkpoint is missing {what}"));
        let id = |name: &str| store.id(name).ok_or_else(|| missing(name));
        let model = Sbrkt {
            n_kcs: ckpt.meta_usize("n_kcs")?,
            c_max: ckpt.meta_usize("c_max")?,
            embedding: id("sbrkt.exercise_emb")?,
            encoder: Linear::from_store(&store, "sbrkt.encoder").ok_or_else(|| missing("encoder"))?,
            p_alpha: id("sbrkt.p_alpha")?,
            p_beta: id("sbrkt.p_beta")?,
            proj: id("sbrkt.proj")?,
            lstm: Lstm::from_store(&store, "sbrkt.lstm").ok_or_else(|| missing("lstm"))?,
            out: Linear::from_store(&store, "sbrkt.out").ok_or_else(|| missing("output layer"))?,
            store,
        };
        let m = model.n_aux();
        if model.out.d_out != model.n_kcs + m
            || model.store.get(model.proj).shape.rows != 2 * model.n_kcs + 2 * m
            || model.c_max == 0
            || model.c_max > m
        {
            return Err(Error::Checkpoint("sbrkt checkpoint shapes disagree".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Adam on the mean BCE of one-step-ahead predictions with the same early
/// stopping rule as DKT.
pub fn train(
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &SbrktConfig,
) -> Result<(Sbrkt, TrainReport)> {
    if train_set.sequences.is_empty() {
        return Err(Error::invalid("SBRKT training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Sbrkt::with_rng(train_set.n_kcs(), train_set.n_exercises(), config, &mut rng)?;
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

    fn tiny() -> SbrktConfig {
        SbrktConfig {
            emb_dim: 4,
            n_aux: 8,
            c_max: 4,
            hidden_dim: 6,
            ..Default::default()
        }
    }

    fn set_encoder(m: &mut Sbrkt, e: &[f64]) {
        let (w, b) = (m.encoder.weight, m.encoder.bias);
        m.store.get_mut(w).values.iter_mut().for_each(|v| *v = 0.0);
        m.store.get_mut(b).values.copy_from_slice(e);
    }

    #[test]
    fn two_stage_selection_example() {
        let mut m = Sbrkt::new(2, 3, &tiny()).unwrap();
        set_encoder(&mut m, &[0.9, -0.2, 0.4, 0.1, -1.0, -0.5, -0.3, -0.7]);
        let pa = m.p_alpha;
        let pb = m.p_beta;
        // α = 1.6, β = 0.4
        m.store.get_mut(pa).values[0] = crate::tensor::logit(0.6);
        m.store.get_mut(pb).values[0] = crate::tensor::logit(0.4);
        let u = m.encode_exercise(1).unwrap();
        for (j, v) in u.iter().enumerate() {
            let want = if [0, 2, 3].contains(&j) { 1.6 } else { 0.4 };
            assert!((v - want).abs() < 1e-12, "{u:?}");
        }
    }

    #[test]
    fn zero_encoder_gives_beta_and_empty_aux() {
        let mut m = Sbrkt::new(2, 3, &tiny()).unwrap();
        set_encoder(&mut m, &[0.0; 8]);
        assert_eq!(m.encode_exercise(0).unwrap(), vec![0.5; 8]);
        let aux = m.export_aux().unwrap();
        assert!(aux.tags().iter().all(Vec::is_empty));
        assert_eq!(aux, m.export_aux().unwrap());
    }

    #[test]
    fn initial_alpha_beta() {
        let m = Sbrkt::new(1, 1, &tiny()).unwrap();
        assert_eq!(m.alpha_beta(), (1.5, 0.5));
        assert!(Sbrkt::new(1, 1, &SbrktConfig { c_max: 9, ..tiny() }).is_err());
    }

    #[test]
    fn zero_weights_give_zero_logits_and_half() {
        let mut m = Sbrkt::new(2, 3, &tiny()).unwrap();
        for p in m.store.iter_mut() {
            p.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let s = m.forward_step(&m.initial_state(), 1, &[0], true).unwrap();
        assert!(s.o.iter().all(|&v| v == 0.0));
        assert_eq!(m.predict(&s.o, 2, &[1]).unwrap(), 0.5);
        assert_eq!(m.predict(&vec![0.3; 10], 2, &[]).unwrap(), 0.5);
    }

    #[test]
    fn predict_is_the_dot_over_active_entries() {
        let m = Sbrkt::new(3, 4, &tiny()).unwrap();
        let o: Vec<f64> = (0..11).map(|i| 0.1 * i as f64 - 0.4).collect();
        for e in 0..4 {
            let code = m.binary_code(e).unwrap();
            let mut z = o[0] + o[2];
            for j in 0..8 {
                if code[j] {
                    z += o[3 + j];
                }
            }
            assert!((m.predict(&o, e, &[0, 2]).unwrap() - sigmoid(z)).abs() < 1e-15);
            assert_eq!(m.predict(&o, e, &[0, 2]).unwrap(), m.predict(&o, e, &[2, 0]).unwrap());
        }
    }

    #[test]
    fn step_matches_batched_unroll_and_has_no_leakage() {
        let m = Sbrkt::new(2, 3, &tiny()).unwrap();
        let q = QMatrix::new(2, vec![vec![0], vec![1], vec![0, 1]]).unwrap();
        let mk = |obs: &[(usize, bool)]| StudentSequence {
            student: 0,
            interactions: obs
                .iter()
                .enumerate()
                .map(|(t, &(exercise, correct))| Interaction { exercise, correct, order: t as u64 })
                .collect(),
        };
        let obs = [(0, true), (2, false), (1, true), (2, true)];
        let run = |o: &[(usize, bool)]| {
            let mut g = Graph::new();
            let s = mk(o);
            m.unroll(&mut g, &[&s], &q).unwrap().preds.remove(0)
        };
        let preds = run(&obs);
        let mut state = m.initial_state();
        for t in 0..3 {
            let (e, y) = obs[t];
            state = m.forward_step(&state, e, q.kcs(e).unwrap(), y).unwrap();
            let next = obs[t + 1].0;
            let p = m.predict(&state.o, next, q.kcs(next).unwrap()).unwrap();
            assert!((p - preds[t].prob).abs() < 1e-12);
        }
        let mut flipped = obs;
        flipped[2].1 = false;
        let other = run(&flipped);
        assert_eq!(preds[1].prob, other[1].prob);
        assert_ne!(preds[2].prob, other[2].prob);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Sbrkt::new(2, 5, &tiny()).unwrap();
        let back = Sbrkt::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(m.export_aux().unwrap(), back.export_aux().unwrap());
        let s = m.initial_state();
        assert_eq!(m.forward_step(&s, 3, &[1], false).unwrap(), back.forward_step(&s, 3, &[1], false).unwrap());
    }
}
