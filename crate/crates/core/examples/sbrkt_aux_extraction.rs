//! Trains SBRKT on synthetic data with planted sub-skills and shows the
//! auxiliary KCs it extracts for a few exercises beside the hidden truth.

use auxkc::data::{generate_synthetic, split, write_aux_csv, SyntheticConfig};
use auxkc::sbrkt::{self, SbrktConfig};

fn main() -> auxkc::Result<()> {
    let (data, truth) = generate_synthetic(&SyntheticConfig::small(0));
    let s = split(&data.preprocessed(), (0.8, 0.1, 0.1), 0)?;
    let config = SbrktConfig {
        hidden_dim: 64,
        max_epochs: 20,
        ..Default::default()
    };
    let (model, _) = sbrkt::train(&s.train, Some(&s.val), &config)?;
    println!("test AUC {:.4}", model.evaluate_auc(&s.test)?);
    let (alpha, beta) = model.alpha_beta();
    println!("alpha {alpha:.3}, beta {beta:.3}");

    let aux = model.export_aux()?;
    for e in 0..10 {
        println!(
            "exercise {e}: human {:?} hidden {:?} aux {:?}",
            data.qmatrix.kcs(e)?,
            truth.latent_tags[e],
            aux.kcs(e)
        );
    }
    let path = std::env::temp_dir().join("auxkc_example_aux.csv");
    write_aux_csv(&aux, &data.exercise_names, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
