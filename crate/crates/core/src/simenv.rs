//! Simulated students for evaluating recommendation policies.
//!
//! A [`StudentEnv`] draws a fresh student from a synthetic [`GroundTruth`]
//! on every reset. Each step answers the recommended exercise, applies the
//! learning/forgetting transition to that exercise's sub-skills, and pays a
//! reward measured on a probe set of exercises. Only practiced sub-skills
//! change.
//!
//! Environment config files hold `key = value` lines:
//!
//! ```text
//! horizon = 140
//! reward_mode = threshold   # or mean_prob
//! probe = all               # or a ;-separated exercise list, e.g. 0;4;7
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{GroundTruth, StudentState};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const DEFAULT_HORIZON: usize = 140;

/// Answer probability at or above which a probe exercise counts as solved.
pub const CAN_ANSWER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Fraction of probe exercises with true answer probability ≥ 0.5.
    Threshold,
    /// Mean true answer probability over the probe set.
    MeanProb,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Probe {
    All,
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub horizon: usize,
    pub reward_mode: RewardMode,
    pub probe: Probe,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            horizon: DEFAULT_HORIZON,
            reward_mode: RewardMode::Threshold,
            probe: Probe::All,
            seed: 0,
        }
    }
}

pub const ENV_KEYS: [&str; 3] = ["horizon", "reward_mode", "probe"];

impl EnvConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::invalid(format!("bad value {value:?} for env key {key}"));
        match key {
            "horizon" => {
                self.horizon = value.parse().map_err(|_| bad())?;
                if self.horizon == 0 {
                    return Err(bad());
                }
            }
            "reward_mode" => {
                self.reward_mode = match value {
                    "threshold" => RewardMode::Threshold,
                    "mean_prob" => RewardMode::MeanProb,
                    _ => return Err(bad()),
                }
            }
            "probe" => {
                self.probe = if value == "all" {
                    Probe::All
                } else {
                    let list = value
                        .split(';')
                        .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?;
                    if list.is_empty() {
                        return Err(bad());
                    }
                    Probe::List(list)
                }
            }
            _ => {
                return Err(Error::invalid(format!(
                    "unknown env key {key:?}; valid keys: {}",
                    ENV_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parses a config file body; `#` starts a comment.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let mut cfg = EnvConfig {
            seed,
            ..Default::default()
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("env config line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub exercise: usize,
    pub correct: bool,
    pub reward: f64,
    pub done: bool,
}

/// Episode interface shared by simulated students and test stubs.
pub trait Environment {
    fn n_exercises(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Starts a new episode and returns the pre-test score.
    fn reset(&mut self, student_seed: u64) -> Result<f64>;
    fn step(&mut self, exercise: usize) -> Result<EnvStep>;
    /// Post-test score; only available once the episode is done.
    fn post_test(&self) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct StudentEnv {
    truth: GroundTruth,
    config: EnvConfig,
    probe: Vec<usize>,
    student: Option<StudentState>,
    rng: ChaCha8Rng,
    t: usize,
}

impl StudentEnv {
    pub fn new(truth: GroundTruth, config: EnvConfig) -> Result<Self> {
        let probe = match &config.probe {
            Probe::All => (0..truth.n_exercises()).collect(),
            Probe::List(list) => list.clone(),
        };
        if probe.is_empty() {
            return Err(Error::invalid("probe set is empty"));
        }
        if let Some(&e) = probe.iter().find(|&&e| e >= truth.n_exercises()) {
            return Err(Error::UnknownExercise(format!("probe exercise {e}")));
        }
        if config.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(StudentEnv {
            truth,
            config,
            probe,
            student: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
        })
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn probe(&self) -> &[usize] {
        &self.probe
    }

    pub fn student(&self) -> Option<&StudentState> {
        self.student.as_ref()
    }

    /// Mutable latent state, for constructing test scenarios.
    pub fn student_mut(&mut self) -> Option<&mut StudentState> {
        self.student.as_mut()
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    fn active(&self) -> Result<&StudentState> {
        self.student.as_ref().ok_or(Error::Env {
            step: self.t,
            msg: "no active student; call reset first".into(),
        })
    }

    /// Mean true answer probability over the probe set.
    pub fn probe_score(&self) -> Result<f64> {
        let s = self.active()?;
        Ok(self.probe.iter().map(|&e| self.truth.answer_probability(s, e)).sum::<f64>() / self.probe.len() as f64)
    }

    /// Reward for the current latent state.
    pub fn reward(&self) -> Result<f64> {
        match self.config.reward_mode {
            RewardMode::MeanProb => self.probe_score(),
            RewardMode::Threshold => {
                let s = self.active()?;
                let solved = self
                    .probe
                    .iter()
                    .filter(|&&e| self.truth.answer_probability(s, e) >= CAN_ANSWER)
                    .count();
                Ok(solved as f64 / self.probe.len() as f64)
            }
        }
    }
}

impl Environment for StudentEnv {
    fn n_exercises(&self) -> usize {
        self.truth.n_exercises()
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, student_seed: u64) -> Result<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &format!("env/student/{student_seed}")));
        let params = self.truth.sample_params(&mut self.rng);
        self.student = Some(self.truth.new_student(params, &mut self.rng));
        self.t = 0;
        self.probe_score()
    }

    fn step(&mut self, exercise: usize) -> Result<EnvStep> {
        let step = self.t;
        if self.student.is_none() {
            return Err(Error::Env {
                step,
                msg: "no active student; call reset first".into(),
            });
        }
        if self.t >= self.config.horizon {
            return Err(Error::Env {
                step,
                msg: "episode is over".into(),
            });
        }
        if exercise >= self.truth.n_exercises() {
            return Err(Error::Env {
                step,
                msg: format!("unknown exercise {exercise}"),
            });
        }
        let student = self.student.as_mut().expect("checked above");
        let correct = self.truth.respond(student, exercise, &mut self.rng);
        self.truth.practice(student, exercise, &mut self.rng);
        self.t += 1;
        Ok(EnvStep {
            exercise,
            correct,
            reward: self.reward()?,
            done: self.t >= self.config.horizon,
        })
    }

    fn post_test(&self) -> Result<f64> {
        if self.t < self.config.horizon {
            return Err(Error::Env {
                step: self.t,
                msg: format!("post-test requested after {} of {} steps", self.t, self.config.horizon),
            });
        }
        self.probe_score()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, PriorRanges, SkillParams, SyntheticConfig};

    fn truth_with(p: SkillParams) -> GroundTruth {
        let mut cfg = SyntheticConfig::new(2, 12, 3, 6, 5, 1);
        cfg.priors = PriorRanges::fixed(p);
        cfg.ability_spread = 0.0;
        generate_synthetic(&cfg).1
    }

    const BASE: SkillParams = SkillParams {
        init: 0.0,
        learn: 0.2,
        guess: 0.2,
        slip: 0.1,
        forget: 0.0,
    };

    #[test]
    fn mastered_priors_give_one_minus_slip() {
        let t = truth_with(SkillParams { init: 1.0, ..BASE });
        let mut env = StudentEnv::new(t, EnvConfig::default()).unwrap();
        assert!((env.reset(0).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn reset_is_reproducible_and_seed_sensitive() {
        let t = truth_with(SkillParams { init: 0.5, ..BASE });
        let mut env = StudentEnv::new(t, EnvConfig::default()).unwrap();
        env.reset(3).unwrap();
        let a = env.student().unwrap().clone();
        env.reset(3).unwrap();
        assert_eq!(&a, env.student().unwrap());
        let mut differ = 0;
        for s in 0..100u64 {
            env.reset(2 * s).unwrap();
            let x = env.student().unwrap().clone();
            env.reset(2 * s + 1).unwrap();
            differ += usize::from(&x != env.student().unwrap());
        }
        assert!(differ >= 95);
    }

    #[test]
    fn absorbing_mastery_under_repetition() {
        let t = truth_with(SkillParams { learn: 1.0, slip: 0.0, ..BASE });
        let cfg = EnvConfig { probe: Probe::List(vec![4]), horizon: 10, ..Default::default() };
        let mut env = StudentEnv::new(t, cfg).unwrap();
        env.reset(0).unwrap();
        assert_eq!(env.reward().unwrap(), 0.0);
        for _ in 0..10 {
            assert_eq!(env.step(4).unwrap().reward, 1.0);
        }
    }

    #[test]
    fn forgetting_collapses_mastery() {
        let t = truth_with(SkillParams { init: 1.0, learn: 0.0, forget: 1.0, ..BASE });
        let cfg = EnvConfig { probe: Probe::List(vec![2]), horizon: 3, ..Default::default() };
        let mut env = StudentEnv::new(t, cfg).unwrap();
        env.reset(0).unwrap();
        assert_eq!(env.reward().unwrap(), 1.0);
        assert_eq!(env.step(2).unwrap().reward, 0.0);
    }

    #[test]
    fn post_test_only_after_episode() {
        let t = truth_with(SkillParams { init: 0.4, ..BASE });
        let cfg = EnvConfig { horizon: 3, ..Default::default() };
        let mut env = StudentEnv::new(t, cfg).unwrap();
        env.reset(1).unwrap();
        env.step(0).unwrap();
        assert!(env.post_test().is_err());
        env.step(1).unwrap();
        let last = env.step(2).unwrap();
        assert!(last.done);
        let post = env.post_test().unwrap();
        assert!((0.0..=1.0).contains(&post));
        assert!(env.step(0).is_err());
        assert!(env.step(99).is_err());
    }

    #[test]
    fn untouched_probe_keeps_its_score() {
        let t = truth_with(SkillParams { init: 0.5, forget: 0.3, ..BASE });
        // an exercise whose sub-skills are disjoint from the practiced one
        let practiced = 0;
        let probe = (0..t.n_exercises())
            .find(|&e| t.latent_tags[e].iter().all(|k| !t.latent_tags[practiced].contains(k)))
            .unwrap();
        let cfg = EnvConfig { probe: Probe::List(vec![probe]), horizon: 20, ..Default::default() };
        let mut env = StudentEnv::new(t, cfg).unwrap();
        let pre = env.reset(5).unwrap();
        for _ in 0..20 {
            env.step(practiced).unwrap();
        }
        assert_eq!(env.post_test().unwrap(), pre);
    }

    #[test]
    fn config_parsing() {
        let c = EnvConfig::parse("horizon = 20\nreward_mode = mean_prob # smooth\nprobe = 1;3\n", 7).unwrap();
        assert_eq!(c, EnvConfig { horizon: 20, reward_mode: RewardMode::MeanProb, probe: Probe::List(vec![1, 3]), seed: 7 });
        let err = EnvConfig::parse("horizn = 3", 0).unwrap_err().to_string();
        assert!(err.contains("horizon, reward_mode, probe"), "{err}");
        assert!(EnvConfig::parse("horizon = 0", 0).is_err());
    }
}
