//! Builds a small LSTM loss on the autodiff graph, runs backward, and
//! compares every parameter gradient with central finite differences.

use auxkc::tensor::gradcheck::check_params;
use auxkc::tensor::{Graph, Lstm, ParamStore, Shape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> auxkc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let lstm = Lstm::new(&mut store, "demo", 3, 4, &mut rng);
    let inputs = [vec![0.5, -1.0, 0.2], vec![1.5, 0.3, -0.7]];

    let report = check_params(&store, usize::MAX, |_| true, |g: &mut Graph, s: &ParamStore| {
        let mut h = g.zeros(Shape::new(1, 4));
        let mut c = g.zeros(Shape::new(1, 4));
        for x in &inputs {
            let x = g.constant(Shape::new(1, 3), x.clone());
            (h, c) = lstm.step(g, s, x, h, c)?;
        }
        let y = g.sigmoid(h);
        Ok(g.sum(y))
    })?;
    println!("checked {} parameter entries", report.probes);
    println!("max relative error {:.2e}", report.max_rel_error);
    Ok(())
}
