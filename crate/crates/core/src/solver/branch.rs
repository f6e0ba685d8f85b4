//! Branch-and-bound with optional hull-cut rounds near the root.

use std::time::Instant;

use super::simplex::{LpData, LpStatus};
use super::{bounds_of, relative_gap, sense_sign, SolveResult, SolveStatus, SolverParams};
use crate::encodings::separate_hull_cut;
use crate::mip::{MipModel, Sense};

/// Hull cuts are separated at nodes up to this depth (the root is depth 0).
const CUT_DEPTH: usize = 2;
/// Nodes up to this depth also try rounding the LP point to an incumbent.
const HEURISTIC_DEPTH: usize = 2;
const DUPLICATE_TOL: f64 = 1e-12;

struct Node {
    id: usize,
    depth: usize,
    /// Relaxation value of the parent (minimization form).
    bound: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

struct CutPool {
    cuts: Vec<(Vec<(usize, f64)>, f64)>,
}

impl CutPool {
    fn contains(&self, terms: &[(usize, f64)], rhs: f64) -> bool {
        self.cuts.iter().any(|(t, r)| {
            (r - rhs).abs() <= DUPLICATE_TOL
                && t.len() == terms.len()
                && t.iter().zip(terms).all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() <= DUPLICATE_TOL)
        })
    }
}

struct Search<'a> {
    model: &'a MipModel,
    params: &'a SolverParams,
    lp: LpData,
    sign: f64,
    integers: Vec<usize>,
    pool: CutPool,
    incumbent: Option<(f64, Vec<f64>)>,
    result: SolveResult,
}

enum LpOutcome {
    Solved { obj: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
    Failed(String),
}

impl Search<'_> {
    fn solve_node_lp(&mut self, lower: &[f64], upper: &[f64]) -> LpOutcome {
        let out = self.lp.solve(lower, upper, self.params.max_lp_iterations);
        self.result.lp_iterations += out.iterations;
        match out.status {
            LpStatus::Optimal => LpOutcome::Solved {
                obj: out.objective,
                x: out.x,
            },
            LpStatus::Infeasible => LpOutcome::Infeasible,
            LpStatus::Unbounded => LpOutcome::Unbounded,
            LpStatus::Failed => LpOutcome::Failed(out.detail.unwrap_or_default()),
        }
    }

    /// One separation round. Returns how many cuts were added.
    fn separate(&mut self, x: &[f64]) -> usize {
        let Some(plan) = self.model.hull_cuts() else {
            return 0;
        };
        let mut found: Vec<(f64, usize, Vec<(usize, f64)>, f64)> = Vec::new();
        for (k, neuron) in plan.neurons.iter().enumerate() {
            if let Some(cut) = separate_hull_cut(neuron, x) {
                let terms: Vec<(usize, f64)> = cut.terms.iter().map(|(v, c)| (v.0, *c)).collect();
                found.push((cut.violation, k, terms, cut.rhs));
            }
        }
        found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut added = 0;
        for (_, _, terms, rhs) in found {
            if added >= plan.max_cuts_per_round {
                break;
            }
            if self.pool.contains(&terms, rhs) {
                continue;
            }
            self.lp.push_row(&terms, Sense::Le, rhs);
            self.pool.cuts.push((terms, rhs));
            added += 1;
        }
        self.result.cuts += added;
        added
    }

    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let tol = self.params.integrality_tolerance;
        let mut best: Option<(usize, f64)> = None;
        for &j in &self.integers {
            let f = x[j] - x[j].floor();
            let dist = f.min(1.0 - f);
            if dist > tol && best.is_none_or(|(_, d)| dist > d) {
                best = Some((j, dist));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Fixes the rounded integer values and re-solves for the continuous part.
    fn try_incumbent(&mut self, x: &[f64], lower: &[f64], upper: &[f64]) -> bool {
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        let mut rounded = x.to_vec();
        for &j in &self.integers {
            let r = x[j].round();
            lo[j] = r;
            hi[j] = r;
            rounded[j] = r;
        }
        let tol = self.params.feasibility_tolerance;
        let candidate = match self.solve_node_lp(&lo, &hi) {
            LpOutcome::Solved { x: polished, .. } if self.model.max_violation(&polished) <= tol => Some(polished),
            _ if self.model.max_violation(&rounded) <= tol => Some(rounded),
            _ => None,
        };
        let Some(point) = candidate else {
            return false;
        };
        let obj = self.sign * self.model.objective().value(&point);
        if self.incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
            self.incumbent = Some((obj, point));
        }
        true
    }

    fn prune_threshold(&self) -> f64 {
        match &self.incumbent {
            Some((inc, _)) => inc - self.params.gap_tolerance * inc.abs().max(1e-10),
            None => f64::INFINITY,
        }
    }
}

/// Solves `model` by LP-based branch-and-bound.
pub fn solve_mip(model: &MipModel, params: &SolverParams) -> SolveResult {
    let start = Instant::now();
    let sense = model.objective().sense;
    let sign = sense_sign(model);
    if let Err(e) = params.validate() {
        let mut r = SolveResult::empty(SolveStatus::LimitNoIncumbent, sense);
        r.warnings.push(e.to_string());
        return r;
    }
    let Some(lp) = LpData::from_model(model) else {
        return SolveResult::empty(SolveStatus::Infeasible, sense);
    };
    let integers: Vec<usize> = (0..model.num_vars())
        .filter(|&j| model.variables()[j].kind.is_integral())
        .collect();
    let mut s = Search {
        model,
        params,
        lp,
        sign,
        integers,
        pool: CutPool { cuts: Vec::new() },
        incumbent: None,
        result: SolveResult::empty(SolveStatus::LimitNoIncumbent, sense),
    };
    let (lower, upper) = bounds_of(model);
    for &j in &s.integers {
        if !lower[j].is_finite() || !upper[j].is_finite() {
            s.result
                .warnings
                .push(format!("integer variable '{}' is unbounded", model.variables()[j].name));
        }
    }

    let mut open: Vec<Node> = vec![Node {
        id: 0,
        depth: 0,
        bound: f64::NEG_INFINITY,
        lower,
        upper,
    }];
    let mut next_id = 1;
    // Monotone global bound in minimization form.
    let mut global_bound = f64::NEG_INFINITY;
    let mut limit_hit = false;
    let mut unbounded = false;

    while !open.is_empty() {
        // Global bound and termination test.
        let open_min = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        let inc = s.incumbent.as_ref().map(|(v, _)| *v);
        let bound_now = inc.map_or(open_min, |v| open_min.min(v));
        global_bound = global_bound.max(bound_now);
        if let Some(v) = inc {
            if relative_gap(v, global_bound) <= params.gap_tolerance {
                break;
            }
        }
        if params.node_limit.is_some_and(|lim| s.result.nodes >= lim)
            || params.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() >= t)
        {
            limit_hit = true;
            break;
        }

        let pick = if open.len() > params.node_queue_cap {
            // Depth-first: newest node.
            open.iter().enumerate().max_by_key(|(_, n)| n.id).map(|(k, _)| k).unwrap()
        } else {
            let mut k = 0;
            for (idx, n) in open.iter().enumerate() {
                let b = &open[k];
                if n.bound < b.bound || (n.bound == b.bound && n.id < b.id) {
                    k = idx;
                }
            }
            k
        };
        let node = open.swap_remove(pick);
        if node.bound >= s.prune_threshold() {
            continue;
        }
        s.result.nodes += 1;

        let mut outcome = s.solve_node_lp(&node.lower, &node.upper);
        if node.depth <= CUT_DEPTH && model.hull_cuts().is_some() {
            let rounds = params.cut_rounds.min(model.hull_cuts().map_or(0, |p| p.max_rounds));
            for _ in 0..rounds {
                let LpOutcome::Solved { x, .. } = &outcome else { break };
                if s.most_fractional(x).is_none() {
                    break;
                }
                let x = x.clone();
                if s.separate(&x) == 0 {
                    break;
                }
                outcome = s.solve_node_lp(&node.lower, &node.upper);
            }
        }

        let (obj, x) = match outcome {
            LpOutcome::Solved { obj, x } => (obj, x),
            LpOutcome::Infeasible => continue,
            LpOutcome::Unbounded => {
                unbounded = true;
                break;
            }
            LpOutcome::Failed(detail) => {
                log::warn!("node {} LP failed ({detail}); pruned", node.id);
                s.result.inexact = true;
                s.result
                    .warnings
                    .push(format!("node {} LP failed ({detail}); pruned", node.id));
                continue;
            }
        };
        let obj = obj.max(node.bound);
        if obj >= s.prune_threshold() {
            continue;
        }
        match s.most_fractional(&x) {
            None => {
                if !s.try_incumbent(&x, &node.lower, &node.upper) {
                    s.result.inexact = true;
                    s.result.warnings.push(format!(
                        "node {}: integral LP point could not be made feasible; pruned",
                        node.id
                    ));
                }
            }
            Some(j) => {
                if node.depth <= HEURISTIC_DEPTH {
                    // Rounding heuristic; failure is not an error here.
                    s.try_incumbent(&x, &node.lower, &node.upper);
                    if obj >= s.prune_threshold() {
                        continue;
                    }
                }
                let v = x[j];
                let mut down_hi = node.upper.clone();
                down_hi[j] = v.floor();
                let mut up_lo = node.lower.clone();
                up_lo[j] = v.ceil();
                open.push(Node {
                    id: next_id,
                    depth: node.depth + 1,
                    bound: obj,
                    lower: node.lower.clone(),
                    upper: down_hi,
                });
                open.push(Node {
                    id: next_id + 1,
                    depth: node.depth + 1,
                    bound: obj,
                    lower: up_lo,
                    upper: node.upper,
                });
                next_id += 2;
            }
        }
    }

    let mut r = s.result;
    if unbounded {
        let mut u = SolveResult::empty(SolveStatus::Unbounded, sense);
        u.nodes = r.nodes;
        u.cuts = r.cuts;
        u.lp_iterations = r.lp_iterations;
        u.warnings = r.warnings;
        r = u;
    } else {
        if open.is_empty() && !limit_hit {
            // Tree exhausted: the incumbent (if any) is optimal.
            global_bound = s.incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        }
        match s.incumbent {
            Some((v, x)) => {
                let gap = relative_gap(v, global_bound);
                r.status = if limit_hit && gap > params.gap_tolerance {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Optimal
                };
                r.objective = Some(sign * v);
                r.best_bound = sign * global_bound.min(v);
                r.gap = Some(relative_gap(v, global_bound.min(v)));
                r.incumbent = Some(x);
            }
            None => {
                r.status = if limit_hit {
                    SolveStatus::LimitNoIncumbent
                } else {
                    SolveStatus::Infeasible
                };
                r.best_bound = sign * global_bound;
            }
        }
    }
    if params.record_time {
        r.time_seconds = Some(start.elapsed().as_secs_f64());
    }
    log::debug!(
        "{}: {:?} after {} nodes, {} cuts, {} LP iterations",
        model.name,
        r.status,
        r.nodes,
        r.cuts,
        r.lp_iterations
    );
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{ObjSense, VarKind};

    #[test]
    fn knapsack() {
        let mut m = MipModel::new("k");
        let a = m.add_binary("a").unwrap();
        let b = m.add_binary("b").unwrap();
        m.add_row(&[(a, 1.0), (b, 1.0)], Sense::Le, 1.0).unwrap();
        m.set_objective(ObjSense::Maximize, &[(a, 3.0), (b, 2.0)]).unwrap();
        let r = solve_mip(&m, &SolverParams::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, Some(3.0));
        assert!(r.nodes <= 3);
    }

    #[test]
    fn infeasible_model() {
        let mut m = MipModel::new("i");
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_row(&[(x, 1.0)], Sense::Ge, 2.0).unwrap();
        m.add_row(&[(x, 1.0)], Sense::Le, 1.0).unwrap();
        assert_eq!(solve_mip(&m, &SolverParams::default()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn general_integers_branch() {
        // max x + y, 2x + 2y ≤ 7, x, y ∈ {0..5}  → 3
        let mut m = MipModel::new("g");
        let x = m.add_variable("x", VarKind::Integer, 0.0, 5.0).unwrap();
        let y = m.add_variable("y", VarKind::Integer, 0.0, 5.0).unwrap();
        m.add_row(&[(x, 2.0), (y, 2.0)], Sense::Le, 7.0).unwrap();
        m.set_objective(ObjSense::Maximize, &[(x, 1.0), (y, 1.0)]).unwrap();
        let r = solve_mip(&m, &SolverParams::default());
        assert_eq!(r.objective, Some(3.0));
        assert!(r.best_bound >= 3.0 - 1e-9);
    }

    #[test]
    fn node_limit_reports_incumbent_or_not() {
        let mut m = MipModel::new("n");
        let vars: Vec<_> = (0..8).map(|i| m.add_binary(format!("b{i}")).unwrap()).collect();
        let terms: Vec<_> = vars.iter().enumerate().map(|(i, &v)| (v, 2.0 + i as f64 * 0.1)).collect();
        m.add_row(&terms, Sense::Le, 7.3).unwrap();
        let obj: Vec<_> = vars.iter().enumerate().map(|(i, &v)| (v, 1.0 + (i % 3) as f64)).collect();
        m.set_objective(ObjSense::Maximize, &obj).unwrap();
        let p = SolverParams {
            node_limit: Some(1),
            ..SolverParams::default()
        };
        let r = solve_mip(&m, &p);
        assert!(matches!(r.status, SolveStatus::Feasible | SolveStatus::LimitNoIncumbent | SolveStatus::Optimal));
        let full = solve_mip(&m, &SolverParams::default());
        assert_eq!(full.status, SolveStatus::Optimal);
        assert_eq!(solve_mip(&m, &SolverParams::default()), full);
    }
}
