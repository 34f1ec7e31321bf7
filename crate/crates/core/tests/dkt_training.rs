mod common;

use auxkc::data::{generate_synthetic, Dataset, QMatrix, StudentSequence, SyntheticConfig};
use auxkc::dkt::{self, Dkt, DktConfig};
use common::sequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> DktConfig {
    DktConfig { emb_dim: 8, hidden_dim: 16, batch: 32, ..Default::default() }
}

#[test]
fn loss_approaches_entropy_of_base_rate() {
    let rate: f64 = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let seqs = (0..200)
        .map(|s| {
            let obs: Vec<(usize, bool)> = (0..20).map(|_| (rng.random_range(0..3), rng.random::<f64>() < rate)).collect();
            sequence(s, &obs)
        })
        .collect();
    let data = Dataset::from_parts(seqs, QMatrix::new(2, vec![vec![0], vec![1], vec![0, 1]]).unwrap());
    let cfg = DktConfig { lr: 0.01, max_epochs: 15, ..small() };
    let (_, report) = dkt::train(&data, None, &cfg).unwrap();
    let entropy = -(rate * rate.ln() + (1.0 - rate) * (1.0 - rate).ln());
    let last = *report.train_loss.last().unwrap();
    assert!(last < entropy + 0.02 && last > entropy - 0.05, "loss {last} vs entropy {entropy}");
}

#[test]
fn small_step_decreases_batch_loss() {
    let (data, _) = generate_synthetic(&SyntheticConfig::new(40, 20, 4, 8, 15, 3));
    let mut model = Dkt::new(data.n_kcs(), &small());
    let seqs: Vec<&StudentSequence> = data.sequences.iter().collect();
    let before = model.loss_and_grad(&seqs, &data.qmatrix).unwrap().unwrap();
    let lr = 1e-3;
    for p in model.store_mut().iter_mut() {
        for (v, g) in p.values.iter_mut().zip(&p.grad) {
            *v -= lr * g;
        }
    }
    let after = model.loss_and_grad(&seqs, &data.qmatrix).unwrap().unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn seeded_training_is_deterministic() {
    let (data, _) = generate_synthetic(&SyntheticConfig::new(30, 20, 4, 8, 12, 5));
    let cfg = DktConfig { max_epochs: 2, seed: 3, ..small() };
    let (a, _) = dkt::train(&data, None, &cfg).unwrap();
    let (b, _) = dkt::train(&data, None, &cfg).unwrap();
    assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
}

#[test]
fn early_stopping_returns_best_epoch() {
    let (data, _) = generate_synthetic(&SyntheticConfig::new(60, 20, 4, 8, 15, 6));
    let split = auxkc::data::split(&data, (0.8, 0.1, 0.1), 1).unwrap();
    let cfg = DktConfig { max_epochs: 12, patience: 2, ..small() };
    let (model, report) = dkt::train(&split.train, Some(&split.val), &cfg).unwrap();
    let best = report.best_epoch.unwrap();
    assert_eq!(model.evaluate_auc(&split.val).unwrap(), report.val_auc[best]);
    assert!(report.val_auc.len() <= best + 1 + cfg.patience);
}

#[test]
fn probabilities_are_open_unit_interval() {
    let (data, _) = generate_synthetic(&SyntheticConfig::new(20, 10, 3, 6, 10, 2));
    let model = Dkt::new(data.n_kcs(), &small());
    for p in model.predictions(&data).unwrap() {
        assert!(p.prob > 0.0 && p.prob < 1.0);
    }
}
