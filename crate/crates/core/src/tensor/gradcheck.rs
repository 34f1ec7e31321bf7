//! Central finite-difference oracle for checking backward rules.
//!
//! The oracle only ever reads forward values, so it stays independent of the
//! gradient code it checks.

use super::{Graph, ParamStore, Shape, TensorId};
use crate::error::TensorError;

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a small absolute floor so that two near-zero
/// gradients compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

/// Builds the scalar function `build(inputs)` once for backward and
/// `2 · Σ|input|` more times for central differences.
pub fn check<F>(inputs: &[(Shape, Vec<f64>)], build: F) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Graph, &[TensorId]) -> Result<TensorId, TensorError>,
{
    let eval = |vals: &[(Shape, Vec<f64>)]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = vals.iter().map(|(s, v)| g.leaf(*s, v.clone())).collect();
        let out = build(&mut g, &ids)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let ids: Vec<TensorId> = inputs.iter().map(|(s, v)| g.leaf(*s, v.clone())).collect();
    let out = build(&mut g, &ids)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| g.grad(id).to_vec()).collect();

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut col = Vec::with_capacity(inputs[k].1.len());
        for i in 0..inputs[k].1.len() {
            let orig = work[k].1[i];
            work[k].1[i] = orig + FD_STEP;
            let up = eval(&work)?;
            work[k].1[i] = orig - FD_STEP;
            let down = eval(&work)?;
            work[k].1[i] = orig;
            col.push((up - down) / (2.0 * FD_STEP));
        }
        numeric.push(col);
    }

    let mut res = GradCheck {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        analytic,
        numeric,
    };
    for k in 0..inputs.len() {
        for i in 0..inputs[k].1.len() {
            let e = relative_error(res.analytic[k][i], res.numeric[k][i]);
            if e > res.max_rel_error {
                res.max_rel_error = e;
                res.worst_input = k;
                res.worst_index = i;
            }
        }
    }
    Ok(res)
}

/// Finite-difference check over the parameters of a store. `build` must
/// pull weights into the graph with [`Graph::param`]. At most
/// `max_per_param` evenly spaced entries of each parameter are probed;
/// parameters whose name is rejected by `include` are skipped.
pub fn check_params<F>(
    store: &ParamStore,
    max_per_param: usize,
    include: impl Fn(&str) -> bool,
    build: F,
) -> Result<ParamGradCheck, TensorError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<TensorId, TensorError>,
{
    let mut g = Graph::new();
    let out = build(&mut g, store)?;
    g.backward(out)?;
    let mut with_grads = store.clone();
    with_grads.zero_grads();
    g.accumulate_param_grads(&mut with_grads);

    let mut work = store.clone();
    let mut res = ParamGradCheck {
        max_rel_error: 0.0,
        worst: None,
        probes: 0,
    };
    for pid in store.ids() {
        let p = store.get(pid);
        if !include(&p.name) || p.values.is_empty() {
            continue;
        }
        let n = p.values.len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let orig = p.values[i];
            work.get_mut(pid).values[i] = orig + FD_STEP;
            let mut gu = Graph::new();
            let top = build(&mut gu, &work)?;
            let up = gu.scalar(top);
            work.get_mut(pid).values[i] = orig - FD_STEP;
            let mut gd = Graph::new();
            let bottom = build(&mut gd, &work)?;
            let down = gd.scalar(bottom);
            work.get_mut(pid).values[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = with_grads.get(pid).grad[i];
            let e = relative_error(analytic, numeric);
            res.probes += 1;
            if e > res.max_rel_error {
                res.max_rel_error = e;
                res.worst = Some((p.name.clone(), i, analytic, numeric));
            }
        }
    }
    Ok(res)
}

#[derive(Debug, Clone)]
pub struct ParamGradCheck {
    pub max_rel_error: f64,
    /// (parameter, flat index, analytic, numeric) of the worst probe.
    pub worst: Option<(String, usize, f64, f64)>,
    pub probes: usize,
}
