use auxkc::data::QMatrix;
use auxkc::recommend::{entropy, ppo_train, run_episodes, PolicyRecommender, PpoConfig, RandomRecommender};
use auxkc::simenv::{EnvStep, Environment};
use auxkc::Result;

/// Pays 1 for one fixed exercise, 0 otherwise.
#[derive(Clone)]
struct Bandit {
    n: usize,
    good: usize,
    horizon: usize,
    t: usize,
}

impl Environment for Bandit {
    fn n_exercises(&self) -> usize {
        self.n
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn reset(&mut self, _: u64) -> Result<f64> {
        self.t = 0;
        Ok(0.0)
    }
    fn step(&mut self, exercise: usize) -> Result<EnvStep> {
        self.t += 1;
        let hit = exercise == self.good;
        Ok(EnvStep { exercise, correct: hit, reward: f64::from(u8::from(hit)), done: self.t >= self.horizon })
    }
    fn post_test(&self) -> Result<f64> {
        Ok(0.0)
    }
}

fn bandit() -> (Bandit, QMatrix) {
    let env = Bandit { n: 6, good: 4, horizon: 10, t: 0 };
    let q = QMatrix::new(3, (0..6).map(|e| vec![e % 3]).collect()).unwrap();
    (env, q)
}

#[test]
fn untrained_policy_is_near_uniform() {
    let (env, q) = bandit();
    let (policy, _) = ppo_train(&env, &q, &PpoConfig { updates: 0, ..Default::default() }).unwrap();
    let (_, lp, _) = policy.act(&policy.initial_state(), Vec::new()).unwrap();
    assert!((entropy(&lp) - 6f64.ln()).abs() < 0.01);
}

#[test]
fn ppo_solves_a_bandit() {
    let (env, q) = bandit();
    let cfg = PpoConfig { lr: 0.01, updates: 40, hidden_dim: 16, emb_dim: 8, ..Default::default() };
    let (policy, report) = ppo_train(&env, &q, &cfg).unwrap();
    let mut state = policy.initial_state();
    let mut rows = Vec::new();
    for _ in 0..10 {
        let (s, lp, _) = policy.act(&state, rows).unwrap();
        assert!(lp[4].exp() > 0.9, "p = {} after {:?}", lp[4].exp(), report.mean_reward);
        rows = policy.observation_rows(&q, 4, true).unwrap();
        state = s;
    }
}

#[test]
fn constant_reward_environment_gives_that_mean() {
    let mut env = Bandit { n: 1, good: 0, horizon: 7, t: 0 };
    let mut rec = RandomRecommender::new(1, 0);
    let r = run_episodes(&mut env, &mut rec, 3, 0).unwrap();
    assert_eq!(r.summary.mean_reward, 1.0);
    assert_eq!(r.summary.gain, 0.0);
    assert_eq!(r.summary.std_reward, 0.0);
}

#[test]
fn greedy_evaluation_is_reproducible() {
    let (env, q) = bandit();
    let (policy, _) = ppo_train(&env, &q, &PpoConfig { updates: 2, hidden_dim: 8, emb_dim: 4, ..Default::default() }).unwrap();
    let mut e1 = env.clone();
    let a = run_episodes(&mut e1, &mut PolicyRecommender::new(&policy, &q, true, 0), 4, 0).unwrap();
    let b = run_episodes(&mut e1, &mut PolicyRecommender::new(&policy, &q, true, 0), 4, 0).unwrap();
    assert_eq!(a, b);
}
