//! Plans exercises with one-step expectimax over human KCs, then with the
//! dual filter that also consults the auxiliary KCs, and compares both on
//! simulated students.

use auxkc::data::{augment_with_aux, generate_synthetic, split, SyntheticConfig};
use auxkc::recommend::{run_episodes, DualRecommender, ExpectimaxRecommender, Planner, SbrktKt};
use auxkc::sbrkt::{self, SbrktConfig};
use auxkc::simenv::{EnvConfig, StudentEnv};

fn main() -> auxkc::Result<()> {
    let (data, truth) = generate_synthetic(&SyntheticConfig::small(0));
    let s = split(&data.preprocessed(), (0.8, 0.1, 0.1), 0)?;
    let config = SbrktConfig {
        hidden_dim: 64,
        max_epochs: 15,
        ..Default::default()
    };
    let (model, _) = sbrkt::train(&s.train, Some(&s.val), &config)?;
    let aux = model.export_aux()?;

    let q = &data.qmatrix;
    let n = q.n_kcs();
    let kt = SbrktKt { model: &model, qmatrix: q };
    let human_kcs: Vec<usize> = (0..n).collect();
    let aux_kcs: Vec<usize> = (n..n + model.n_aux()).collect();
    let human = Planner {
        model: kt,
        candidates: human_kcs.clone(),
        scoring: human_kcs,
        qmatrix: q.clone(),
    };
    let aux_planner = Planner {
        model: kt,
        candidates: aux_kcs.clone(),
        scoring: aux_kcs,
        qmatrix: augment_with_aux(&data, &aux).qmatrix,
    };

    let mut env = StudentEnv::new(truth, EnvConfig::default())?;
    let mut single = ExpectimaxRecommender::new(human.clone(), 0);
    let plain = run_episodes(&mut env, &mut single, 8, 0)?.summary;
    let mut dual = DualRecommender::new(human, aux_planner, 0);
    let both = run_episodes(&mut env, &mut dual, 8, 0)?.summary;

    println!("expectimax       mean reward {:.3}, gain {:.3}", plain.mean_reward, plain.gain);
    println!("expectimax-dual  mean reward {:.3}, gain {:.3}", both.mean_reward, both.gain);
    println!(
        "dual filter: {} steps, fallback rate {:.3}",
        dual.stats.steps,
        dual.stats.fallback_rate()
    );
    Ok(())
}
