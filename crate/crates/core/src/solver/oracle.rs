//! Brute-force optimum over activation patterns.
//!
//! Each pattern fixes every unstable ReLU to one linear regime and every max
//! pool to one argmax member, which turns the network into a polyhedron. The
//! best LP optimum over all patterns is the exact optimum. This is the ground
//! truth for the branch-and-bound cross-checks; it shares the simplex with the
//! solver but none of the encodings.

use crate::bounds::{bounds_interval_bunel, Stability};
use crate::error::{Error, Result};
use crate::mip::{MipModel, ObjSense, Sense, VarId};
use crate::network::{Activation, Layer, Network};

use super::{solve_lp, SolveStatus, SolverParams};

/// One pattern's linear model. The callback adds the objective and any extra
/// constraints using `inputs` and `layers`.
pub struct PatternModel {
    pub model: MipModel,
    pub inputs: Vec<VarId>,
    /// `layers[l - 1]` are the outputs of layer `l`.
    pub layers: Vec<Vec<VarId>>,
}

impl PatternModel {
    pub fn outputs(&self, l: usize) -> &[VarId] {
        if l == 0 {
            &self.inputs
        } else {
            &self.layers[l - 1]
        }
    }

    pub fn logits(&self) -> &[VarId] {
        self.outputs(self.layers.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best objective over all feasible patterns, `None` if none is feasible.
    pub optimum: Option<f64>,
    /// Number of patterns (LPs) enumerated.
    pub patterns: u128,
    /// Input part of an optimal point.
    pub best_input: Option<Vec<f64>>,
}

enum Choice {
    /// Unstable ReLU `(layer, neuron)`.
    Relu(usize, usize),
    /// Max pool `(layer, pool, width)`.
    Pool(usize, usize, usize),
}

/// Enumerates every activation pattern of `net` (unstable ReLUs by interval
/// bounds, every max pool member) and returns the best LP optimum.
pub fn pattern_oracle<F>(net: &Network, max_patterns: u128, mut build: F) -> Result<OracleResult>
where
    F: FnMut(&mut PatternModel) -> Result<()>,
{
    let bounds = bounds_interval_bunel(net);
    let mut choices = Vec::new();
    let mut stability = vec![Vec::new(); net.depth()];
    for (li, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Dense {
                activation: Activation::Relu,
                bias,
                ..
            } => {
                for i in 0..bias.len() {
                    let st = bounds.layers[li].stability[i];
                    stability[li].push(st);
                    if st == Stability::Unstable {
                        choices.push(Choice::Relu(li, i));
                    }
                }
            }
            Layer::Dense {
                activation: Activation::Step | Activation::Sign,
                ..
            } => return Err(Error::InvalidFormulation("pattern oracle supports relu and linear units".into())),
            Layer::MaxPool { pools } => {
                for (p, pool) in pools.iter().enumerate() {
                    if pool.len() > 1 {
                        choices.push(Choice::Pool(li, p, pool.len()));
                    }
                }
            }
            _ => {}
        }
    }
    let radix: Vec<u128> = choices
        .iter()
        .map(|c| match c {
            Choice::Relu(..) => 2,
            Choice::Pool(_, _, w) => *w as u128,
        })
        .collect();
    let total = radix
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r))
        .unwrap_or(u128::MAX);
    if total > max_patterns {
        return Err(Error::PatternBudget {
            patterns: total,
            budget: max_patterns,
        });
    }

    let params = SolverParams::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut digits = vec![0u128; choices.len()];
    for _ in 0..total {
        let mut relu_on: Vec<Vec<bool>> = stability
            .iter()
            .map(|l| l.iter().map(|s| *s == Stability::StablyActive).collect())
            .collect();
        let mut pool_pick = vec![Vec::new(); net.depth()];
        for (li, layer) in net.layers().iter().enumerate() {
            if let Layer::MaxPool { pools } = layer {
                pool_pick[li] = vec![0usize; pools.len()];
            }
        }
        for (c, &d) in choices.iter().zip(&digits) {
            match *c {
                Choice::Relu(l, i) => {
                    relu_on[l][i] = d == 1;
                }
                Choice::Pool(l, p, _) => pool_pick[l][p] = d as usize,
            }
        }
        let mut pm = pattern_model(net, &relu_on, &pool_pick)?;
        build(&mut pm)?;
        let sense = pm.model.objective().sense;
        let r = solve_lp(&pm.model, &params);
        match r.status {
            SolveStatus::Optimal => {
                let obj = r.objective.expect("optimal LP has an objective");
                let better = match (&best, sense) {
                    (None, _) => true,
                    (Some((b, _)), ObjSense::Minimize) => obj < *b,
                    (Some((b, _)), ObjSense::Maximize) => obj > *b,
                };
                if better {
                    let x = r.incumbent.expect("optimal LP has a point");
                    best = Some((obj, pm.inputs.iter().map(|v| x[v.0]).collect()));
                }
            }
            SolveStatus::Infeasible => {}
            SolveStatus::Unbounded => return Err(Error::Solver("pattern LP is unbounded".into())),
            _ => return Err(Error::Solver(format!("pattern LP failed: {:?}", r.warnings))),
        }
        // Mixed-radix increment.
        for (d, &r) in digits.iter_mut().zip(&radix) {
            *d += 1;
            if *d < r {
                break;
            }
            *d = 0;
        }
    }
    Ok(OracleResult {
        optimum: best.as_ref().map(|b| b.0),
        patterns: total,
        best_input: best.map(|b| b.1),
    })
}

fn pattern_model(net: &Network, relu_on: &[Vec<bool>], pool_pick: &[Vec<usize>]) -> Result<PatternModel> {
    let mut model = MipModel::new("pattern");
    let inputs: Vec<VarId> = net
        .input_box()
        .iter()
        .enumerate()
        .map(|(i, iv)| model.add_continuous(format!("in{i}"), iv.lo, iv.hi))
        .collect::<Result<_>>()?;
    let mut layers: Vec<Vec<VarId>> = Vec::with_capacity(net.depth());
    for (li, layer) in net.layers().iter().enumerate() {
        let prev = if li == 0 { inputs.clone() } else { layers[li - 1].clone() };
        let l = li + 1;
        let mut out = Vec::new();
        match layer {
            Layer::Dense {
                weights,
                bias,
                activation,
            } => {
                for i in 0..bias.len() {
                    let y = model.add_continuous(format!("y{l}_{i}"), f64::NEG_INFINITY, f64::INFINITY)?;
                    let mut terms: Vec<(VarId, f64)> = prev.iter().enumerate().map(|(j, &v)| (v, weights[j][i])).collect();
                    terms.push((y, -1.0));
                    model.add_row(&terms, Sense::Eq, -bias[i])?;
                    let x = match activation {
                        Activation::Linear => y,
                        _ if relu_on[li][i] => {
                            model.set_bounds(y, 0.0, f64::INFINITY)?;
                            y
                        }
                        _ => {
                            model.set_bounds(y, f64::NEG_INFINITY, 0.0)?;
                            model.add_continuous(format!("x{l}_{i}"), 0.0, 0.0)?
                        }
                    };
                    out.push(x);
                }
            }
            Layer::MaxPool { pools } => {
                for (p, pool) in pools.iter().enumerate() {
                    let pick = prev[pool[pool_pick[li][p]]];
                    for &j in pool {
                        if prev[j] != pick {
                            model.add_row(&[(pick, 1.0), (prev[j], -1.0)], Sense::Ge, 0.0)?;
                        }
                    }
                    out.push(pick);
                }
            }
            Layer::AvgPool { pools } => {
                for (p, pool) in pools.iter().enumerate() {
                    let x = model.add_continuous(format!("x{l}_{p}"), f64::NEG_INFINITY, f64::INFINITY)?;
                    let k = pool.len() as f64;
                    let mut terms: Vec<(VarId, f64)> = pool.iter().map(|&j| (prev[j], 1.0 / k)).collect();
                    terms.push((x, -1.0));
                    model.add_row(&terms, Sense::Eq, 0.0)?;
                    out.push(x);
                }
            }
        }
        layers.push(out);
    }
    Ok(PatternModel { model, inputs, layers })
}
