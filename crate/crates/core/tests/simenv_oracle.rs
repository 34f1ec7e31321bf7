use auxkc::data::{generate_synthetic, GroundTruth, PriorRanges, SkillParams, SyntheticConfig};
use auxkc::simenv::{EnvConfig, Environment, RewardMode, StudentEnv};

fn truth() -> GroundTruth {
    let mut cfg = SyntheticConfig::new(2, 20, 4, 10, 5, 9);
    cfg.priors = PriorRanges::fixed(SkillParams { init: 0.3, learn: 0.25, guess: 0.2, slip: 0.1, forget: 0.05 });
    cfg.ability_spread = 0.0;
    generate_synthetic(&cfg).1
}

/// Expected reward after each step of a fixed script, from exact per
/// sub-skill mastery marginals (sub-skills evolve independently).
fn exact_rewards(t: &GroundTruth, script: &[usize], mode: RewardMode) -> Vec<f64> {
    let p = t.priors[0];
    let mut m = vec![p.init; t.n_subskills()];
    let n_ex = t.n_exercises();
    script
        .iter()
        .map(|&e| {
            for &k in &t.latent_tags[e] {
                m[k] = m[k] * (1.0 - p.forget) + (1.0 - m[k]) * p.learn;
            }
            let per: f64 = (0..n_ex)
                .map(|x| match mode {
                    // guess < 0.5 ≤ 1 − slip: solved iff every sub-skill mastered
                    RewardMode::Threshold => t.latent_tags[x].iter().map(|&k| m[k]).product::<f64>(),
                    RewardMode::MeanProb => t.expected_answer_probability(&t.priors, &m, x),
                })
                .sum();
            per / n_ex as f64
        })
        .collect()
}

#[test]
fn monte_carlo_rewards_match_exact_marginals() {
    let t = truth();
    let script: Vec<usize> = (0..20).map(|i| (i * 7) % 20).collect();
    for mode in [RewardMode::Threshold, RewardMode::MeanProb] {
        let exact = exact_rewards(&t, &script, mode);
        let cfg = EnvConfig { horizon: script.len(), reward_mode: mode, seed: 4, ..Default::default() };
        let mut env = StudentEnv::new(t.clone(), cfg).unwrap();
        let n = 10_000;
        let mut mc = vec![0.0; script.len()];
        for s in 0..n {
            env.reset(s).unwrap();
            for (i, &e) in script.iter().enumerate() {
                mc[i] += env.step(e).unwrap().reward / n as f64;
            }
        }
        for (i, (a, b)) in mc.iter().zip(&exact).enumerate() {
            assert!((a - b).abs() < 0.02, "{mode:?} step {i}: MC {a} vs exact {b}");
        }
    }
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let mut a = StudentEnv::new(truth(), EnvConfig { horizon: 30, seed: 2, ..Default::default() }).unwrap();
    let mut b = a.clone();
    for s in 0..5 {
        a.reset(s).unwrap();
        b.reset(s).unwrap();
        for i in 0..30 {
            assert_eq!(a.step(i % 20).unwrap(), b.step(i % 20).unwrap());
        }
    }
}

#[test]
fn reward_is_monotone_in_mastery() {
    let t = truth();
    let mut env = StudentEnv::new(t.clone(), EnvConfig::default()).unwrap();
    for s in 0..50 {
        env.reset(s).unwrap();
        for k in 0..t.n_subskills() {
            let before = env.reward().unwrap();
            env.student_mut().unwrap().mastered[k] = true;
            assert!(env.reward().unwrap() >= before);
        }
    }
}
