//! Trains a PPO recommendation policy on simulated students and compares
//! it with random recommendations on held-out students.

use auxkc::data::{generate_synthetic, SyntheticConfig};
use auxkc::recommend::{ppo_evaluate, ppo_train_with, run_episodes, PpoConfig, RandomRecommender};
use auxkc::simenv::{EnvConfig, Environment, StudentEnv};

fn main() -> auxkc::Result<()> {
    let updates = std::env::args().nth(1).map_or(Ok(200), |s| s.parse()).expect("updates must be a number");
    let (data, truth) = generate_synthetic(&SyntheticConfig::small(0));
    let env = StudentEnv::new(truth, EnvConfig::default())?;
    let config = PpoConfig {
        updates,
        lr: 1e-3,
        ..Default::default()
    };
    let (policy, report) = ppo_train_with(&env, &data.qmatrix, &config, |u, reward, _| {
        if (u + 1) % 25 == 0 {
            println!("update {:>4}: rollout mean reward {reward:.3}", u + 1);
        }
        Ok(())
    })?;
    println!("kept weights from update {}", report.best_update);

    let mut eval_env = env.clone();
    let trained = ppo_evaluate(&policy, &data.qmatrix, &mut eval_env, 24, 1_000, 0)?.summary;
    let mut random = RandomRecommender::new(env.n_exercises(), 0);
    let baseline = run_episodes(&mut eval_env, &mut random, 24, 1_000)?.summary;
    println!("random  mean reward {:.3}, gain {:.3}", baseline.mean_reward, baseline.gain);
    println!("PPO     mean reward {:.3}, gain {:.3}", trained.mean_reward, trained.gain);
    Ok(())
}
