use rand::Rng;

use super::{Graph, ParamId, ParamStore, Shape, TensorId};
use crate::error::TensorError;

/// Dense layer `y = x·W + b` with `W: in × out`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (d_in.max(1) as f64).sqrt();
        let weight = store.uniform(format!("{name}.weight"), Shape::new(d_in, d_out), bound, rng);
        let bias = store.uniform(format!("{name}.bias"), Shape::row(d_out), bound, rng);
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn from_store(store: &ParamStore, name: &str) -> Option<Self> {
        let weight = store.id(&format!("{name}.weight"))?;
        let bias = store.id(&format!("{name}.bias"))?;
        let s = store.get(weight).shape;
        Some(Linear {
            weight,
            bias,
            d_in: s.rows,
            d_out: s.cols,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: TensorId,
    ) -> Result<TensorId, TensorError> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

/// LSTM cell. Gate blocks in the fused weight are ordered input, forget,
/// candidate, output; the weight acts on `[x, h_prev]`.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        let weight = store.uniform(
            format!("{name}.weight"),
            Shape::new(d_in + hidden, 4 * hidden),
            bound,
            rng,
        );
        let bias = store.uniform(format!("{name}.bias"), Shape::row(4 * hidden), bound, rng);
        Lstm {
            weight,
            bias,
            d_in,
            hidden,
        }
    }

    pub fn from_store(store: &ParamStore, name: &str) -> Option<Self> {
        let weight = store.id(&format!("{name}.weight"))?;
        let bias = store.id(&format!("{name}.bias"))?;
        let s = store.get(weight).shape;
        let hidden = s.cols / 4;
        Some(Lstm {
            weight,
            bias,
            d_in: s.rows.checked_sub(hidden)?,
            hidden,
        })
    }

    /// One step over a batch: `x: B × d_in`, `h, c: B × hidden`.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: TensorId,
        h_prev: TensorId,
        c_prev: TensorId,
    ) -> Result<(TensorId, TensorId), TensorError> {
        let (sx, sh) = (g.shape(x), g.shape(h_prev));
        if sx.cols != self.d_in || sh.cols != self.hidden || sx.rows != sh.rows {
            return Err(TensorError::ShapeMismatch {
                op: "lstm_step",
                left: sx,
                right: sh,
            });
        }
        if g.shape(c_prev) != sh {
            return Err(TensorError::ShapeMismatch {
                op: "lstm_step",
                left: sh,
                right: g.shape(c_prev),
            });
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xh = g.concat_cols(x, h_prev)?;
        let pre = g.matmul(xh, w)?;
        let pre = g.add_row(pre, b)?;
        let d = self.hidden;
        let i = g.slice_cols(pre, 0, d)?;
        let f = g.slice_cols(pre, d, d)?;
        let cand = g.slice_cols(pre, 2 * d, d)?;
        let o = g.slice_cols(pre, 3 * d, d)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = Lstm::new(&mut store, "lstm", 3, 4, &mut rng);
        for p in store.iter_mut() {
            p.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let x = g.constant(Shape::new(1, 3), vec![0.3, -1.2, 2.0]);
        let h = g.zeros(Shape::new(1, 4));
        let c = g.zeros(Shape::new(1, 4));
        let (h, c) = lstm.step(&mut g, &store, x, h, c).unwrap();
        assert_eq!(g.value(h), &[0.0; 4]);
        assert_eq!(g.value(c), &[0.0; 4]);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = Lstm::new(&mut store, "lstm", 3, 4, &mut rng);
        let mut g = Graph::new();
        let x = g.zeros(Shape::new(1, 2));
        let h = g.zeros(Shape::new(1, 4));
        let c = g.zeros(Shape::new(1, 4));
        assert!(lstm.step(&mut g, &store, x, h, c).is_err());
    }

    #[test]
    fn from_store_recovers_dims() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Lstm::new(&mut store, "body", 5, 7, &mut rng);
        let l = Lstm::from_store(&store, "body").unwrap();
        assert_eq!((l.d_in, l.hidden), (5, 7));
    }
}
