//! Exercise recommendation: expectimax planners and a PPO policy, plus the
//! episode loop that evaluates any recommender against an environment.

mod expectimax;
mod ppo;

pub use expectimax::{
    expectimax_dual, expectimax_exercise, expectimax_kc, rank_kcs, DktKt, DualChoice, KcModel,
    Planner, SbrktKt,
};
pub use ppo::{
    argmax, clipped_surrogate, entropy, gae, ppo_train, ppo_train_with, Policy, PolicyRecommender, PolicyState,
    PpoConfig, PpoReport, Trajectory,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::eval::{aggregate_rl, normalized_gain, RlSummary, StudentOutcome, Table};
use crate::seed::derive_seed;
use crate::simenv::{EnvStep, Environment};

/// Anything that picks the next exercise from the history it has observed.
pub trait Recommender {
    /// Called before each student's episode.
    fn start(&mut self, student: u64) -> Result<()>;
    fn recommend(&mut self) -> Result<usize>;
    fn observe(&mut self, step: &EnvStep) -> Result<()>;
}

#[derive(Debug, Clone)]
pub struct RandomRecommender {
    n_exercises: usize,
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomRecommender {
    pub fn new(n_exercises: usize, seed: u64) -> Self {
        RandomRecommender {
            n_exercises,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Recommender for RandomRecommender {
    fn start(&mut self, student: u64) -> Result<()> {
        self.rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("random/{student}")));
        Ok(())
    }

    fn recommend(&mut self) -> Result<usize> {
        Ok(self.rng.random_range(0..self.n_exercises))
    }

    fn observe(&mut self, _: &EnvStep) -> Result<()> {
        Ok(())
    }
}

/// Single-planner expectimax over one KC space.
#[derive(Debug, Clone)]
pub struct ExpectimaxRecommender<M: KcModel> {
    pub planner: Planner<M>,
    seed: u64,
    state: M::State,
    rng: ChaCha8Rng,
}

impl<M: KcModel> ExpectimaxRecommender<M> {
    pub fn new(planner: Planner<M>, seed: u64) -> Self {
        let state = planner.model.initial_state();
        ExpectimaxRecommender {
            planner,
            seed,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<M: KcModel> Recommender for ExpectimaxRecommender<M> {
    fn start(&mut self, student: u64) -> Result<()> {
        self.state = self.planner.model.initial_state();
        self.rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("expectimax/{student}")));
        Ok(())
    }

    fn recommend(&mut self) -> Result<usize> {
        let p = &self.planner;
        Ok(expectimax_exercise(&p.model, &self.state, &p.candidates, &p.scoring, &p.qmatrix, &mut self.rng)?.0)
    }

    fn observe(&mut self, step: &EnvStep) -> Result<()> {
        self.state = self.planner.model.observe_exercise(&self.state, step.exercise, step.correct)?;
        Ok(())
    }
}

/// Counters kept by the dual-filter recommender.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DualStats {
    pub steps: usize,
    pub fallbacks: usize,
    /// Steps where the dual pool was larger than the human pool.
    pub widened: usize,
    pub dual_candidates: usize,
    pub human_candidates: usize,
}

impl DualStats {
    pub fn fallback_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.fallbacks as f64 / self.steps as f64
        }
    }
}

/// Expectimax over human and auxiliary KCs with the intersection filter.
#[derive(Debug, Clone)]
pub struct DualRecommender<H: KcModel, A: KcModel> {
    pub human: Planner<H>,
    pub aux: Planner<A>,
    pub stats: DualStats,
    seed: u64,
    human_state: H::State,
    aux_state: A::State,
    rng: ChaCha8Rng,
}

impl<H: KcModel, A: KcModel> DualRecommender<H, A> {
    pub fn new(human: Planner<H>, aux: Planner<A>, seed: u64) -> Self {
        let human_state = human.model.initial_state();
        let aux_state = aux.model.initial_state();
        DualRecommender {
            human,
            aux,
            stats: DualStats::default(),
            seed,
            human_state,
            aux_state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<H: KcModel, A: KcModel> Recommender for DualRecommender<H, A> {
    fn start(&mut self, student: u64) -> Result<()> {
        self.human_state = self.human.model.initial_state();
        self.aux_state = self.aux.model.initial_state();
        self.rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("dual/{student}")));
        Ok(())
    }

    fn recommend(&mut self) -> Result<usize> {
        let c = expectimax_dual(&self.human, &self.human_state, &self.aux, &self.aux_state, &mut self.rng)?;
        self.stats.steps += 1;
        self.stats.fallbacks += usize::from(c.fallback);
        self.stats.widened += usize::from(c.n_candidates > c.n_human_candidates);
        self.stats.dual_candidates += c.n_candidates;
        self.stats.human_candidates += c.n_human_candidates;
        Ok(c.exercise)
    }

    fn observe(&mut self, step: &EnvStep) -> Result<()> {
        self.human_state = self.human.model.observe_exercise(&self.human_state, step.exercise, step.correct)?;
        self.aux_state = self.aux.model.observe_exercise(&self.aux_state, step.exercise, step.correct)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub students: Vec<u64>,
    pub outcomes: Vec<StudentOutcome>,
    pub summary: RlSummary,
}

impl EvalReport {
    /// One row per student followed by a summary row.
    pub fn to_table(&self) -> Result<Table> {
        let mut t = Table::new(&["student", "s_pre", "s_post", "gain", "mean_reward"]);
        for (s, o) in self.students.iter().zip(&self.outcomes) {
            let gain = normalized_gain(o.s_pre, o.s_post)?;
            t.push(&[s.to_string(), fmt(o.s_pre), fmt(o.s_post), fmt(gain), fmt(o.mean_reward())]);
        }
        t.push(&[
            "summary".to_string(),
            String::new(),
            String::new(),
            fmt(self.summary.gain),
            format!("{} ± {}", fmt(self.summary.mean_reward), fmt(self.summary.std_reward)),
        ]);
        Ok(t)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

/// Runs one full episode per student (`first_student..first_student + n`).
pub fn run_episodes(
    env: &mut dyn Environment,
    recommender: &mut dyn Recommender,
    n_students: usize,
    first_student: u64,
) -> Result<EvalReport> {
    let mut outcomes = Vec::with_capacity(n_students);
    let mut students = Vec::with_capacity(n_students);
    for i in 0..n_students as u64 {
        let student = first_student + i;
        let s_pre = env.reset(student)?;
        recommender.start(student)?;
        let mut rewards = Vec::with_capacity(env.horizon());
        loop {
            let exercise = recommender.recommend()?;
            let step = env.step(exercise)?;
            rewards.push(step.reward);
            recommender.observe(&step)?;
            if step.done {
                break;
            }
        }
        outcomes.push(StudentOutcome {
            s_pre,
            s_post: env.post_test()?,
            rewards,
        });
        students.push(student);
    }
    let summary = aggregate_rl(&outcomes)?;
    Ok(EvalReport {
        students,
        outcomes,
        summary,
    })
}

/// Evaluates a trained policy by sampling its actions; `seed` fixes the
/// per-student action streams.
pub fn ppo_evaluate(
    policy: &Policy,
    obs: &crate::data::QMatrix,
    env: &mut dyn Environment,
    n_students: usize,
    first_student: u64,
    seed: u64,
) -> Result<EvalReport> {
    let mut rec = PolicyRecommender::new(policy, obs, false, seed);
    run_episodes(env, &mut rec, n_students, first_student)
}
