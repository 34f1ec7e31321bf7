//! Walks one simulated student through a short episode, printing answers,
//! latent mastery and the reward after every step.

use auxkc::data::{generate_synthetic, SyntheticConfig};
use auxkc::recommend::{run_episodes, RandomRecommender};
use auxkc::simenv::{EnvConfig, Environment, StudentEnv};

fn main() -> auxkc::Result<()> {
    let (_, truth) = generate_synthetic(&SyntheticConfig::small(0));
    let mut env = StudentEnv::new(truth, EnvConfig::default())?;

    let pre = env.reset(0)?;
    println!("pre-test {pre:.3}");
    for exercise in [3, 3, 3, 17, 17, 42] {
        let step = env.step(exercise)?;
        let mastered = env.student().map_or(0, |s| s.mastered.iter().filter(|&&m| m).count());
        println!(
            "exercise {exercise:>2} correct {:<5} mastered {mastered:>2} reward {:.3}",
            step.correct, step.reward
        );
    }

    let mut random = RandomRecommender::new(env.n_exercises(), 0);
    let report = run_episodes(&mut env, &mut random, 24, 0)?;
    let s = report.summary;
    println!("random policy over 24 students: mean reward {:.3} ± {:.3}, gain {:.3}", s.mean_reward, s.std_reward, s.gain);
    Ok(())
}
