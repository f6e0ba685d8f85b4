//! Separation of single-neuron convex hull inequalities.
//!
//! For `y = max(0, w·x + b)` with `x` in a box, each subset `S` of the support
//! of `w` gives
//!
//! ```text
//! y ≤ Σ_{i∈S} w_i (x_i − L̂_i (1 − z)) + (b + Σ_{i∉S} w_i Û_i) z
//! ```
//!
//! where `L̂_i`/`Û_i` are the box ends minimizing/maximizing `w_i x_i`. The
//! family is exponential, so it is only used through separation.

use crate::mip::{HullNeuron, VarId};

/// Violation threshold below which no cut is reported.
pub const CUT_VIOLATION_TOL: f64 = 1e-7;

/// A separated inequality `Σ terms ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullCut {
    /// Positions (into the neuron's input list) of the chosen subset.
    pub subset: Vec<usize>,
    pub terms: Vec<(VarId, f64)>,
    pub rhs: f64,
    pub violation: f64,
}

fn l_hat(w: f64, lo: f64, hi: f64) -> f64 {
    if w >= 0.0 {
        lo
    } else {
        hi
    }
}

fn u_hat(w: f64, lo: f64, hi: f64) -> f64 {
    if w >= 0.0 {
        hi
    } else {
        lo
    }
}

/// Right-hand side of the inequality for `subset` evaluated at `(x, z)`.
pub fn hull_cut_rhs(w: &[f64], b: f64, lo: &[f64], hi: &[f64], subset: &[bool], x: &[f64], z: f64) -> f64 {
    let mut rhs = b * z;
    for i in 0..w.len() {
        if w[i] == 0.0 {
            continue;
        }
        if subset[i] {
            rhs += w[i] * (x[i] - l_hat(w[i], lo[i], hi[i]) * (1.0 - z));
        } else {
            rhs += w[i] * u_hat(w[i], lo[i], hi[i]) * z;
        }
    }
    rhs
}

/// Greedy separation on raw values: index `i` joins `S` when its in-`S` term
/// is strictly smaller than its out-of-`S` term. Returns the chosen subset as
/// a mask and the violation `y − rhs(S)`.
pub fn separate_hull_values(
    w: &[f64],
    b: f64,
    lo: &[f64],
    hi: &[f64],
    x: &[f64],
    z: f64,
    y: f64,
) -> (Vec<bool>, f64) {
    let subset: Vec<bool> = (0..w.len())
        .map(|i| {
            w[i] != 0.0 && w[i] * (x[i] - l_hat(w[i], lo[i], hi[i]) * (1.0 - z)) < w[i] * u_hat(w[i], lo[i], hi[i]) * z
        })
        .collect();
    let rhs = hull_cut_rhs(w, b, lo, hi, &subset, x, z);
    (subset, y - rhs)
}

/// Most violated hull inequality of `neuron` at the point `point` (indexed by
/// variable id), if it is violated by more than [`CUT_VIOLATION_TOL`].
pub fn separate_hull_cut(neuron: &HullNeuron, point: &[f64]) -> Option<HullCut> {
    let w = &neuron.weights;
    let xs: Vec<f64> = neuron.inputs.iter().map(|v| point[v.0]).collect();
    let z = point[neuron.indicator.0];
    let y = point[neuron.output.0];
    let (mask, violation) = separate_hull_values(w, neuron.bias, &neuron.input_lower, &neuron.input_upper, &xs, z, y);
    if violation <= CUT_VIOLATION_TOL {
        return None;
    }
    // y − Σ_S w_i x_i − (b + Σ_S w_i L̂_i + Σ_{∉S} w_i Û_i) z ≤ −Σ_S w_i L̂_i
    let mut terms = vec![(neuron.output, 1.0)];
    let mut zcoef = neuron.bias;
    let mut rhs = 0.0;
    for i in 0..w.len() {
        if w[i] == 0.0 {
            continue;
        }
        let (lo, hi) = (neuron.input_lower[i], neuron.input_upper[i]);
        if mask[i] {
            let lh = l_hat(w[i], lo, hi);
            terms.push((neuron.inputs[i], -w[i]));
            zcoef += w[i] * lh;
            rhs -= w[i] * lh;
        } else {
            zcoef += w[i] * u_hat(w[i], lo, hi);
        }
    }
    terms.push((neuron.indicator, -zcoef));
    Some(HullCut {
        subset: mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect(),
        terms,
        rhs,
        violation,
    })
}
