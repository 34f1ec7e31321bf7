//! Fits BKT with forgetting to synthetic data and prints the learned
//! per-KC probabilities next to the test AUC.

use auxkc::bkt::{self, BktTrainConfig};
use auxkc::data::{generate_synthetic, split, SyntheticConfig};

fn main() -> auxkc::Result<()> {
    let (data, _) = generate_synthetic(&SyntheticConfig::small(0));
    let s = split(&data.preprocessed(), (0.8, 0.1, 0.1), 0)?;
    let (params, report) = bkt::train(&s.train, Some(&s.val), &BktTrainConfig::default())?;

    println!("kc  init   learn  guess  slip   forget");
    for kc in 0..params.n_kcs() {
        let p = params.probs(kc)?;
        println!(
            "{kc:<3} {:.3}  {:.3}  {:.3}  {:.3}  {:.3}",
            p.init, p.learn, p.guess, p.slip, p.forget
        );
    }
    println!("best epoch {:?}", report.best_epoch);
    println!("test AUC {:.4}", bkt::evaluate_auc(&params, &s.test)?);
    Ok(())
}
