//! Minimal reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! Every value is a row-major `rows × cols` matrix of `f64`; vectors are
//! `1 × n`. A [`Graph`] is built fresh for each forward pass (define-by-run),
//! records one node per operation and runs the backward pass in reverse
//! insertion order. Trainable weights live in a [`ParamStore`] outside the
//! graph and are pulled in with [`Graph::param`]; after
//! [`Graph::backward`] their gradients are pushed back with
//! [`Graph::accumulate_param_grads`].
//!
//! ```
//! use auxkc::tensor::{Graph, Shape};
//!
//! let mut g = Graph::new();
//! let a = g.leaf(Shape::new(1, 2), vec![1.0, 2.0]);
//! let b = g.leaf(Shape::new(2, 1), vec![3.0, 4.0]);
//! let c = g.matmul(a, b).unwrap();
//! assert_eq!(g.value(c), &[11.0]);
//! g.backward(c).unwrap();
//! assert_eq!(g.grad(a), &[3.0, 4.0]);
//! ```

mod checkpoint;
pub mod gradcheck;
mod graph;
mod lstm;
mod optim;
mod param;

use std::fmt;

pub use checkpoint::Checkpoint;
pub use graph::{top_k_mask, Graph, Tensor, TensorId};
pub use lstm::{Linear, Lstm};
pub use optim::Adam;
pub use param::{Param, ParamId, ParamStore};

/// Row-major matrix shape. Vectors use a single row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { rows: 1, cols: 1 };

    pub const fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub const fn row(cols: usize) -> Self {
        Shape { rows: 1, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}x{}]", self.rows, self.cols)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
