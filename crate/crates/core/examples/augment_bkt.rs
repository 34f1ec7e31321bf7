//! Compares plain BKT with BKT trained on human plus auxiliary KCs. The
//! auxiliary KCs come from an SBRKT model trained on the same split.

use auxkc::bkt::{self, BktTrainConfig};
use auxkc::data::{augment_with_aux, generate_synthetic, split, SyntheticConfig};
use auxkc::sbrkt::{self, SbrktConfig};

fn main() -> auxkc::Result<()> {
    let (data, _) = generate_synthetic(&SyntheticConfig::small(1));
    let s = split(&data.preprocessed(), (0.8, 0.1, 0.1), 1)?;
    let config = SbrktConfig {
        max_epochs: 30,
        ..Default::default()
    };
    let (model, _) = sbrkt::train(&s.train, Some(&s.val), &config)?;
    let aux = model.export_aux()?;

    let cfg = BktTrainConfig::default();
    let (plain, _) = bkt::train(&s.train, Some(&s.val), &cfg)?;
    let aug = |d: &auxkc::data::Dataset| augment_with_aux(d, &aux);
    let (joint, _) = bkt::train(&aug(&s.train), Some(&aug(&s.val)), &cfg)?;

    println!("BKT      test AUC {:.4}", bkt::evaluate_auc(&plain, &s.test)?);
    println!("BKT+aux  test AUC {:.4}", bkt::evaluate_auc(&joint, &aug(&s.test))?);
    Ok(())
}
