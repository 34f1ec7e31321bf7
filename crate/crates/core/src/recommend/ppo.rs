//! Recurrent PPO recommendation policy.
//!
//! The body is the labeled-KC embedding plus LSTM used by DKT. Before every
//! decision the LSTM consumes the previous observation (the recommended
//! exercise's KCs labeled with the simulated answer; a zero input before
//! the first decision). Two linear heads read the hidden state: an actor
//! over all exercises and a scalar critic. Updates use the clipped
//! surrogate with GAE, backpropagating through whole episodes.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::QMatrix;
use crate::dkt::LabeledKcBody;
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::simenv::{EnvStep, Environment};
use crate::tensor::{Adam, Checkpoint, Graph, Linear, ParamId, ParamStore, Shape, TensorId};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub update_epochs: usize,
    pub minibatches: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    /// Multiplies rewards before advantage and return estimation, keeping
    /// value targets near unit scale.
    pub reward_scale: f64,
    /// Train on reward increments weighted by the steps left in the
    /// episode instead of on raw rewards. Undiscounted, both give the same
    /// episode return up to a term no action can change, but increments drop
    /// the current-level term that dominates raw returns.
    pub increments: bool,
    /// Decay the learning rate linearly to zero over the run.
    pub anneal_lr: bool,
    /// Episodes collected per update.
    pub n_envs: usize,
    pub updates: usize,
    /// Checkpoint candidates are scored every `eval_every` updates (and
    /// after the last) on a fixed set of `eval_students` validation students.
    pub eval_every: usize,
    pub eval_students: usize,
    /// Trailing KCs of the observation Q-matrix that are auxiliary (0 for
    /// a human-KC-only policy).
    pub n_aux: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            emb_dim: 32,
            hidden_dim: 64,
            lr: 2.5e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            update_epochs: 4,
            minibatches: 4,
            ent_coef: 0.01,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            increments: true,
            anneal_lr: true,
            n_envs: 8,
            updates: 100,
            eval_every: 50,
            eval_students: 32,
            n_aux: 0,
            seed: 0,
        }
    }
}

/// Policy weights: recurrent body, actor head and critic head.
#[derive(Debug, Clone)]
pub struct Policy {
    store: ParamStore,
    body: LabeledKcBody,
    actor: Linear,
    critic: Linear,
    /// Labeled auxiliary-KC embedding (`2M` rows), added to the human-KC
    /// input.
    aux_emb: Option<ParamId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Output of one batched decision step.
struct Heads {
    h: TensorId,
    c: TensorId,
    log_probs: TensorId,
    value: TensorId,
}

/// `min(r·A, clip(r, 1 − ε, 1 + ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

impl Policy {
    /// A fresh policy over `n_obs_kcs` observation KCs, the last
    /// `config.n_aux` of them auxiliary.
    pub fn new<R: Rng>(n_obs_kcs: usize, n_actions: usize, config: &PpoConfig, rng: &mut R) -> Result<Self> {
        if config.n_aux > n_obs_kcs {
            return Err(Error::invalid(format!(
                "{} auxiliary KCs but only {n_obs_kcs} observation KCs",
                config.n_aux
            )));
        }
        let mut store = ParamStore::new();
        let n_human = n_obs_kcs - config.n_aux;
        let body = LabeledKcBody::new(&mut store, "policy", n_human, config.emb_dim, config.hidden_dim, rng);
        let actor = Linear::new(&mut store, "policy.actor", config.hidden_dim, n_actions, rng);
        let critic = Linear::new(&mut store, "policy.critic", config.hidden_dim, 1, rng);
        // a small actor start keeps the initial policy close to uniform
        for id in [actor.weight, actor.bias] {
            store.get_mut(id).values.iter_mut().for_each(|v| *v *= 0.01);
        }
        // zero start: the aux policy begins as the human-KC policy and
        // only moves away where the extra input helps
        let aux_emb = (config.n_aux > 0)
            .then(|| store.zeros("policy.aux_emb", Shape::new(2 * config.n_aux, config.emb_dim)));
        Ok(Policy {
            store,
            body,
            actor,
            critic,
            aux_emb,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.actor.d_out
    }

    pub fn n_obs_kcs(&self) -> usize {
        self.body.n_kcs + self.n_aux()
    }

    pub fn n_aux(&self) -> usize {
        self.aux_emb.map_or(0, |id| self.store.get(id).shape.rows / 2)
    }

    pub fn use_aux(&self) -> bool {
        self.aux_emb.is_some()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn initial_state(&self) -> PolicyState {
        let d = self.body.hidden();
        PolicyState {
            h: vec![0.0; d],
            c: vec![0.0; d],
        }
    }

    /// Embedding rows for an observation under the observation Q-matrix.
    /// Rows below `2N` index the human-KC table; the rest, offset by `2N`,
    /// index the auxiliary table.
    pub fn observation_rows(&self, qmatrix: &QMatrix, exercise: usize, correct: bool) -> Result<Vec<usize>> {
        let (n, m) = (self.body.n_kcs, self.n_aux());
        qmatrix
            .kcs(exercise)?
            .iter()
            .map(|&k| match k {
                k if k < n => Ok(if correct { k } else { n + k }),
                k if k < n + m => Ok(2 * n + if correct { k - n } else { m + k - n }),
                k => Err(Error::UnknownKc(k)),
            })
            .collect()
    }

    fn heads(&self, g: &mut Graph, rows: Vec<Vec<usize>>, h: TensorId, c: TensorId) -> Result<Heads> {
        let split = 2 * self.body.n_kcs;
        let (human, aux): (Vec<Vec<usize>>, Vec<Vec<usize>>) = rows
            .into_iter()
            .map(|r| {
                let (a, b): (Vec<usize>, Vec<usize>) = r.into_iter().partition(|&i| i < split);
                (a, b.into_iter().map(|i| i - split).collect())
            })
            .unzip();
        let emb = g.param(&self.store, self.body.emb);
        let mut x = g.mean_rows(emb, human)?;
        if let Some(id) = self.aux_emb {
            let table = g.param(&self.store, id);
            let extra = g.mean_rows(table, aux)?;
            x = g.add(x, extra)?;
        }
        let (h, c) = self.body.lstm.step(g, &self.store, x, h, c)?;
        let logits = self.actor.forward(g, &self.store, h)?;
        let log_probs = g.log_softmax(logits);
        let value = self.critic.forward(g, &self.store, h)?;
        Ok(Heads { h, c, log_probs, value })
    }

    /// Consumes an observation (`rows`, empty before the first decision)
    /// and returns the new state, action log-probabilities and value.
    pub fn act(&self, state: &PolicyState, rows: Vec<usize>) -> Result<(PolicyState, Vec<f64>, f64)> {
        let out = self.act_batch(&[state.clone()], vec![rows])?;
        Ok(out.into_iter().next().expect("one row"))
    }

    fn act_batch(
        &self,
        states: &[PolicyState],
        rows: Vec<Vec<usize>>,
    ) -> Result<Vec<(PolicyState, Vec<f64>, f64)>> {
        let (b, d) = (states.len(), self.body.hidden());
        let mut g = Graph::new();
        let h = g.constant(Shape::new(b, d), states.iter().flat_map(|s| s.h.iter().copied()).collect());
        let c = g.constant(Shape::new(b, d), states.iter().flat_map(|s| s.c.iter().copied()).collect());
        let heads = self.heads(&mut g, rows, h, c)?;
        let a = self.n_actions();
        Ok((0..b)
            .map(|r| {
                (
                    PolicyState {
                        h: g.value(heads.h)[r * d..(r + 1) * d].to_vec(),
                        c: g.value(heads.c)[r * d..(r + 1) * d].to_vec(),
                    },
                    g.value(heads.log_probs)[r * a..(r + 1) * a].to_vec(),
                    g.value(heads.value)[r],
                )
            })
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(&self.store).with_meta("model", "ppo_policy")
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta("model")? != "ppo_policy" {
            return Err(Error::Checkpoint(format!("expected a ppo_policy checkpoint, got {}", ckpt.meta("model")?)));
        }
        let store = ckpt.to_store();
        let missing = || Error::Checkpoint("policy checkpoint is missing arrays".into());
        let body = LabeledKcBody::from_store(&store, "policy").ok_or_else(missing)?;
        let actor = Linear::from_store(&store, "policy.actor").ok_or_else(missing)?;
        let critic = Linear::from_store(&store, "policy.critic").ok_or_else(missing)?;
        let aux_emb = store.id("policy.aux_emb");
        let emb_dim = store.get(body.emb).shape.cols;
        if actor.d_in != body.hidden()
            || critic.d_in != body.hidden()
            || critic.d_out != 1
            || aux_emb.is_some_and(|id| store.get(id).shape.cols != emb_dim)
        {
            return Err(Error::Checkpoint("policy checkpoint shapes disagree".into()));
        }
        Ok(Policy {
            store,
            body,
            actor,
            critic,
            aux_emb,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Shannon entropy of a log-probability vector.
pub fn entropy(log_probs: &[f64]) -> f64 {
    -log_probs.iter().map(|&l| l.exp() * l).sum::<f64>()
}

fn sample<R: Rng>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, l) in log_probs.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One collected episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Observation rows consumed before each decision.
    pub inputs: Vec<Vec<usize>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Trajectory {
    fn new() -> Self {
        Trajectory {
            inputs: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Generalized advantage estimates and returns for a terminated episode.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Rewards as seen by the advantage estimator.
fn training_rewards(rewards: &[f64], config: &PpoConfig) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let r = if config.increments {
                let prev = if t == 0 { 0.0 } else { rewards[t - 1] };
                (n - t) as f64 * (rewards[t] - prev)
            } else {
                rewards[t]
            };
            r * config.reward_scale
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoReport {
    /// Mean per-step reward of the collected episodes, one entry per update.
    pub mean_reward: Vec<f64>,
    /// (updates completed, mean validation reward) at each checkpoint.
    pub validation: Vec<(usize, f64)>,
    /// Updates completed by the returned weights.
    pub best_update: usize,
}

/// Runs one episode per environment in lockstep, sampling actions.
fn collect<E: Environment, R: Rng>(
    policy: &Policy,
    envs: &mut [E],
    obs: &QMatrix,
    student_seeds: &[u64],
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    let n = envs.len();
    let horizon = envs[0].horizon();
    for (env, &s) in envs.iter_mut().zip(student_seeds) {
        env.reset(s)?;
    }
    let mut states = vec![policy.initial_state(); n];
    let mut inputs = vec![Vec::new(); n];
    let mut trajs = vec![Trajectory::new(); n];
    for _ in 0..horizon {
        let out = policy.act_batch(&states, inputs.clone())?;
        for (i, (state, log_probs, value)) in out.into_iter().enumerate() {
            let action = sample(&log_probs, rng);
            let step = envs[i].step(action)?;
            let tr = &mut trajs[i];
            tr.inputs.push(std::mem::take(&mut inputs[i]));
            tr.actions.push(action);
            tr.log_probs.push(log_probs[action]);
            tr.values.push(value);
            tr.rewards.push(step.reward);
            tr.dones.push(step.done);
            inputs[i] = policy.observation_rows(obs, step.exercise, step.correct)?;
            states[i] = state;
        }
    }
    Ok(trajs)
}

/// Clipped-surrogate loss over a minibatch of equal-length episodes; leaves
/// gradients in the policy's store.
fn update_minibatch(
    policy: &mut Policy,
    batch: &[(&Trajectory, &[f64], &[f64])],
    config: &PpoConfig,
) -> Result<()> {
    let b = batch.len();
    let d = policy.body.hidden();
    let horizon = batch[0].0.len();
    let mut adv_all: Vec<f64> = batch.iter().flat_map(|x| x.1.iter().copied()).collect();
    let mean = adv_all.iter().sum::<f64>() / adv_all.len() as f64;
    let var = adv_all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv_all.len() as f64;
    let std = var.sqrt() + 1e-8;
    adv_all.iter_mut().for_each(|a| *a = (*a - mean) / std);

    let mut g = Graph::new();
    let mut h = g.zeros(Shape::new(b, d));
    let mut c = g.zeros(Shape::new(b, d));
    let mut pg_sum: Option<TensorId> = None;
    let mut ent_sum: Option<TensorId> = None;
    let mut v_sum: Option<TensorId> = None;
    let acc = |g: &mut Graph, slot: &mut Option<TensorId>, x: TensorId| -> Result<()> {
        *slot = Some(match *slot {
            Some(s) => g.add(s, x)?,
            None => x,
        });
        Ok(())
    };
    for t in 0..horizon {
        let rows = batch.iter().map(|x| x.0.inputs[t].clone()).collect();
        let heads = policy.heads(&mut g, rows, h, c)?;
        h = heads.h;
        c = heads.c;
        let actions = batch.iter().map(|x| x.0.actions[t]).collect();
        let new_lp = g.pick_cols(heads.log_probs, actions)?;
        let old_lp = g.constant(Shape::new(b, 1), batch.iter().map(|x| x.0.log_probs[t]).collect());
        let diff = g.sub(new_lp, old_lp)?;
        let ratio = g.exp(diff);
        let adv: Vec<f64> = (0..b).map(|r| adv_all[r * horizon + t]).collect();
        let s1 = g.mul_const(ratio, adv.clone())?;
        let clipped = g.clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
        let s2 = g.mul_const(clipped, adv)?;
        let surr = g.minimum(s1, s2)?;
        let surr = g.sum(surr);
        acc(&mut g, &mut pg_sum, surr)?;

        let p = g.exp(heads.log_probs);
        let plogp = g.mul(p, heads.log_probs)?;
        let neg_ent = g.sum(plogp);
        acc(&mut g, &mut ent_sum, neg_ent)?;

        let ret = g.constant(Shape::new(b, 1), batch.iter().map(|x| x.2[t]).collect());
        let err = g.sub(heads.value, ret)?;
        let sq = g.mul(err, err)?;
        let sq = g.sum(sq);
        acc(&mut g, &mut v_sum, sq)?;
    }
    let n = (b * horizon) as f64;
    let (pg, neg_ent, v) = (pg_sum.expect("horizon ≥ 1"), ent_sum.expect("horizon ≥ 1"), v_sum.expect("horizon ≥ 1"));
    // loss = −surrogate − c_ent·entropy + c_v·½·(V − R)²
    let pg = g.scale(pg, -1.0 / n);
    let ent = g.scale(neg_ent, config.ent_coef / n);
    let v = g.scale(v, 0.5 * config.vf_coef / n);
    let loss = g.add(pg, ent)?;
    let loss = g.add(loss, v)?;
    g.backward(loss)?;
    policy.store.zero_grads();
    g.accumulate_param_grads(&mut policy.store);
    policy.store.clip_grad_norm(config.max_grad_norm);
    Ok(())
}

/// Trains a policy on episodes from clones of `env`. The observation
/// Q-matrix maps exercises to the KCs the policy sees (human KCs, or human
/// plus auxiliary KCs). Returns the checkpoint with the highest mean reward
/// on the validation students.
pub fn ppo_train<E: Environment + Clone>(
    env: &E,
    obs: &QMatrix,
    config: &PpoConfig,
) -> Result<(Policy, PpoReport)> {
    ppo_train_with(env, obs, config, |_, _, _| Ok(()))
}

/// [`ppo_train`] with a callback after every update, receiving the update
/// index, the mean reward of its rollouts and the updated policy.
pub fn ppo_train_with<E: Environment + Clone>(
    env: &E,
    obs: &QMatrix,
    config: &PpoConfig,
    mut on_update: impl FnMut(usize, f64, &Policy) -> Result<()>,
) -> Result<(Policy, PpoReport)> {
    if obs.n_exercises() != env.n_exercises() {
        return Err(Error::invalid(format!(
            "observation Q-matrix covers {} exercises, environment has {}",
            obs.n_exercises(),
            env.n_exercises()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "ppo/init"));
    let mut policy = Policy::new(obs.n_kcs(), env.n_exercises(), config, &mut rng)?;
    let mut opt = Adam::new(config.lr);
    let mut envs = vec![env.clone(); config.n_envs.max(1)];
    let mut report = PpoReport {
        mean_reward: Vec::new(),
        validation: Vec::new(),
        best_update: 0,
    };
    let val_seeds: Vec<u64> = (0..config.eval_students.max(1) as u64)
        .map(|i| derive_seed(config.seed, &format!("ppo/validation/{i}")))
        .collect();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut episode = 0u64;
    for update in 0..config.updates {
        if config.anneal_lr {
            opt.lr = config.lr * (1.0 - update as f64 / config.updates as f64);
        }
        let seeds: Vec<u64> = (0..envs.len() as u64)
            .map(|i| derive_seed(config.seed, &format!("ppo/student/{}", episode + i)))
            .collect();
        episode += envs.len() as u64;
        let trajs = collect(&policy, &mut envs, obs, &seeds, &mut rng)?;
        let total: f64 = trajs.iter().flat_map(|t| t.rewards.iter()).sum();
        let steps: usize = trajs.iter().map(Trajectory::len).sum();
        let mean_reward = total / steps.max(1) as f64;
        report.mean_reward.push(mean_reward);
        let targets: Vec<(Vec<f64>, Vec<f64>)> = trajs
            .iter()
            .map(|t| {
                let scaled = training_rewards(&t.rewards, config);
                gae(&scaled, &t.values, &t.dones, config.gamma, config.gae_lambda)
            })
            .collect();
        let mut order: Vec<usize> = (0..trajs.len()).collect();
        let mb = trajs.len().div_ceil(config.minibatches.max(1));
        for _ in 0..config.update_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(mb.max(1)) {
                let batch: Vec<(&Trajectory, &[f64], &[f64])> = chunk
                    .iter()
                    .map(|&i| (&trajs[i], targets[i].0.as_slice(), targets[i].1.as_slice()))
                    .collect();
                update_minibatch(&mut policy, &batch, config)?;
                opt.step(&mut policy.store);
            }
        }
        on_update(update, mean_reward, &policy)?;
        let done = update + 1;
        if done % config.eval_every.max(1) == 0 || done == config.updates {
            let val = validate(&policy, env, obs, &val_seeds, config.seed)?;
            report.validation.push((done, val));
            if best.as_ref().is_none_or(|(b, _)| val > *b) {
                best = Some((val, policy.store.clone()));
                report.best_update = done;
            }
        }
    }
    if let Some((_, store)) = best {
        policy.store = store;
    }
    Ok((policy, report))
}

/// Mean per-step reward of sampled episodes on fixed students, with a fixed
/// action stream per student so checkpoints are compared like for like.
fn validate<E: Environment + Clone>(policy: &Policy, env: &E, obs: &QMatrix, students: &[u64], seed: u64) -> Result<f64> {
    let mut env = env.clone();
    let mut total = 0.0;
    let mut steps = 0usize;
    for &student in students {
        env.reset(student)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("ppo/validation-actions/{student}")));
        let mut state = policy.initial_state();
        let mut rows = Vec::new();
        loop {
            let (next, log_probs, _) = policy.act(&state, std::mem::take(&mut rows))?;
            state = next;
            let step = env.step(sample(&log_probs, &mut rng))?;
            total += step.reward;
            steps += 1;
            rows = policy.observation_rows(obs, step.exercise, step.correct)?;
            if step.done {
                break;
            }
        }
    }
    Ok(total / steps.max(1) as f64)
}

/// Greedy or sampling recommender driven by a trained policy.
#[derive(Debug, Clone)]
pub struct PolicyRecommender<'a> {
    pub policy: &'a Policy,
    pub obs: &'a QMatrix,
    pub greedy: bool,
    pub seed: u64,
    state: PolicyState,
    pending: Vec<usize>,
    rng: ChaCha8Rng,
}

impl<'a> PolicyRecommender<'a> {
    pub fn new(policy: &'a Policy, obs: &'a QMatrix, greedy: bool, seed: u64) -> Self {
        PolicyRecommender {
            policy,
            obs,
            greedy,
            seed,
            state: policy.initial_state(),
            pending: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl super::Recommender for PolicyRecommender<'_> {
    fn start(&mut self, student: u64) -> Result<()> {
        self.state = self.policy.initial_state();
        self.pending.clear();
        self.rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("ppo/eval/{student}")));
        Ok(())
    }

    fn recommend(&mut self) -> Result<usize> {
        let (state, log_probs, _) = self.policy.act(&self.state, std::mem::take(&mut self.pending))?;
        self.state = state;
        Ok(if self.greedy {
            argmax(&log_probs)
        } else {
            sample(&log_probs, &mut self.rng)
        })
    }

    fn observe(&mut self, step: &EnvStep) -> Result<()> {
        self.pending = self.policy.observation_rows(self.obs, step.exercise, step.correct)?;
        Ok(())
    }
}
