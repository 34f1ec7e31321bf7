mod common;

use auxkc::bkt::{self, BktParams, BktTrainConfig, KcProbs};
use auxkc::data::{Dataset, QMatrix};
use common::{bkt_path_enumeration, sequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_probs(rng: &mut ChaCha8Rng) -> KcProbs {
    let mut p = || rng.random_range(0.01..0.99);
    KcProbs { init: p(), learn: p(), guess: p(), slip: p(), forget: p() }
}

fn bits(t: usize, mask: u32) -> Vec<(usize, bool)> {
    (0..t).map(|i| (0, mask >> i & 1 == 1)).collect()
}

#[test]
fn forward_filter_matches_path_enumeration() {
    let q = QMatrix::new(1, vec![vec![0]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let probs = random_probs(&mut rng);
        let params = BktParams::from_probs(vec![probs]);
        let probs = params.probs(0).unwrap();
        let t = rng.random_range(1..=8);
        let mask = rng.random_range(0..1u32 << t);
        let obs = bits(t, mask);
        let ll = bkt::sequence_loglik(&params, &sequence(0, &obs), &q).unwrap();
        let oracle = bkt_path_enumeration(&probs, &obs.iter().map(|o| o.1).collect::<Vec<_>>());
        assert!((ll.exp() - oracle).abs() < 1e-10, "{} vs {oracle}", ll.exp());
    }
}

#[test]
fn observation_strings_sum_to_one() {
    let q = QMatrix::new(1, vec![vec![0]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in 1..=8 {
        let params = BktParams::from_probs(vec![random_probs(&mut rng)]);
        let total: f64 = (0..1u32 << t)
            .map(|m| bkt::sequence_loglik(&params, &sequence(0, &bits(t, m)), &q).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "T={t}: {total}");
    }
}

fn simulate(truth: KcProbs, n_students: usize, len: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs = (0..n_students)
        .map(|s| {
            let mut mastered = rng.random::<f64>() < truth.init;
            let obs: Vec<(usize, bool)> = (0..len)
                .map(|_| {
                    let pc = if mastered { 1.0 - truth.slip } else { truth.guess };
                    let y = rng.random::<f64>() < pc;
                    mastered = if mastered {
                        rng.random::<f64>() >= truth.forget
                    } else {
                        rng.random::<f64>() < truth.learn
                    };
                    (0, y)
                })
                .collect();
            sequence(s, &obs)
        })
        .collect();
    Dataset::from_parts(seqs, QMatrix::new(1, vec![vec![0]]).unwrap())
}

#[test]
fn training_recovers_guess_and_slip() {
    let truth = KcProbs { init: 0.2, learn: 0.15, guess: 0.25, slip: 0.08, forget: 0.02 };
    let data = simulate(truth, 1000, 30, 11);
    let cfg = BktTrainConfig { epochs: 40, seed: 4, ..Default::default() };
    let (params, report) = bkt::train(&data, None, &cfg).unwrap();
    let got = params.probs(0).unwrap();
    assert!((got.guess - truth.guess).abs() < 0.05, "guess {got:?}");
    assert!((got.slip - truth.slip).abs() < 0.05, "slip {got:?}");
    // epoch averages improve up to noise
    let ll = &report.train_loglik;
    assert!(ll.last().unwrap() > ll.first().unwrap());
    for w in ll.windows(2) {
        assert!(w[1] >= w[0] - 1e-3, "{ll:?}");
    }
}

#[test]
fn seeded_training_is_deterministic() {
    let truth = KcProbs { init: 0.3, learn: 0.2, guess: 0.2, slip: 0.1, forget: 0.0 };
    let data = simulate(truth, 200, 20, 1);
    let cfg = BktTrainConfig { epochs: 3, seed: 9, ..Default::default() };
    assert_eq!(bkt::train(&data, None, &cfg).unwrap(), bkt::train(&data, None, &cfg).unwrap());
}

#[test]
fn constant_predictions_give_half_auc() {
    // a single exercise whose KC never updates the belief meaningfully:
    // guess = 1 − slip makes every prediction identical
    let p = BktParams::from_probs(vec![KcProbs { init: 0.4, learn: 0.3, guess: 0.7, slip: 0.3, forget: 0.1 }]);
    let data = simulate(KcProbs::DEFAULT, 50, 10, 3);
    assert_eq!(bkt::evaluate_auc(&p, &data).unwrap(), 0.5);
}
