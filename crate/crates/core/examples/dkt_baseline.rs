//! Trains the DKT baseline and traces one student's per-KC mastery
//! estimates through their first few answers.

use auxkc::data::{generate_synthetic, split, SyntheticConfig};
use auxkc::dkt::{self, DktConfig};

fn main() -> auxkc::Result<()> {
    let (data, _) = generate_synthetic(&SyntheticConfig::small(0));
    let s = split(&data.preprocessed(), (0.8, 0.1, 0.1), 0)?;
    let config = DktConfig {
        hidden_dim: 64,
        max_epochs: 20,
        ..Default::default()
    };
    let (model, report) = dkt::train(&s.train, Some(&s.val), &config)?;
    println!("epochs run {}, test AUC {:.4}", report.val_auc.len(), model.evaluate_auc(&s.test)?);

    let seq = &s.test.sequences[0];
    let mut state = model.initial_state();
    for it in seq.interactions.iter().take(8) {
        let kcs = s.test.qmatrix.kcs(it.exercise)?;
        let (next, probs) = model.step(&state, kcs, it.correct)?;
        let shown: Vec<String> = probs.iter().map(|p| format!("{p:.2}")).collect();
        println!("ex {:>3} kcs {kcs:?} correct {:<5} -> [{}]", it.exercise, it.correct, shown.join(" "));
        state = next;
    }
    Ok(())
}
