//! Bounded-variable primal simplex.
//!
//! Every row `r` gets a logical variable `s_r = a_r·x` whose bounds encode the
//! row sense, so the working system is `[A | -I] (x, s) = 0` with bounds on all
//! `n + m` variables. The basis inverse is kept dense and refactored from
//! scratch every `REFACTOR_EVERY` pivots. Phase 1 minimizes the sum of bound
//! violations of basic variables; phase 2 the real objective.

use crate::mip::{MipModel, Sense};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
const BLAND_AFTER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit or a singular basis.
    Failed,
}

#[derive(Debug, Clone)]
pub(crate) struct LpOutcome {
    pub status: LpStatus,
    /// Values of the structural variables.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub detail: Option<String>,
}

/// Column-major LP in minimization form. Row bounds are stored as bounds of
/// the logical variables.
#[derive(Debug, Clone)]
pub(crate) struct LpData {
    pub n: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
}

impl LpData {
    /// Relaxation of `model` (integrality dropped). Maximization objectives are
    /// negated. Rows without terms are dropped; `None` when such a row is
    /// violated by its right-hand side alone.
    pub fn from_model(model: &MipModel) -> Option<Self> {
        let n = model.num_vars();
        let sign = match model.objective().sense {
            crate::mip::ObjSense::Minimize => 1.0,
            crate::mip::ObjSense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; n];
        for &(v, c) in &model.objective().terms {
            cost[v.0] += sign * c;
        }
        let mut lp = LpData {
            n,
            cols: vec![Vec::new(); n],
            cost,
            row_lower: Vec::new(),
            row_upper: Vec::new(),
        };
        for c in model.constraints() {
            if c.terms.is_empty() {
                let ok = match c.sense {
                    Sense::Le => 0.0 <= c.rhs + PRIMAL_TOL,
                    Sense::Ge => 0.0 >= c.rhs - PRIMAL_TOL,
                    Sense::Eq => c.rhs.abs() <= PRIMAL_TOL,
                };
                if !ok {
                    return None;
                }
                continue;
            }
            lp.push_row(&c.terms.iter().map(|(v, a)| (v.0, *a)).collect::<Vec<_>>(), c.sense, c.rhs);
        }
        Some(lp)
    }

    pub fn m(&self) -> usize {
        self.row_lower.len()
    }

    pub fn push_row(&mut self, terms: &[(usize, f64)], sense: Sense, rhs: f64) {
        let r = self.m();
        for &(j, a) in terms {
            self.cols[j].push((r, a));
        }
        let (lo, hi) = match sense {
            Sense::Le => (f64::NEG_INFINITY, rhs),
            Sense::Ge => (rhs, f64::INFINITY),
            Sense::Eq => (rhs, rhs),
        };
        self.row_lower.push(lo);
        self.row_upper.push(hi);
    }

    pub fn solve(&self, lower: &[f64], upper: &[f64], max_iterations: usize) -> LpOutcome {
        Simplex::new(self, lower, upper).run(max_iterations)
    }
}

struct Simplex<'a> {
    lp: &'a LpData,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    /// `basis[i]` is the variable basic in row position `i`.
    basis: Vec<usize>,
    /// Position in `basis`, or `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    binv: Vec<f64>,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LpData, lower_x: &[f64], upper_x: &[f64]) -> Self {
        let n = lp.n;
        let m = lp.m();
        let mut lower = lower_x.to_vec();
        let mut upper = upper_x.to_vec();
        lower.extend_from_slice(&lp.row_lower);
        upper.extend_from_slice(&lp.row_upper);
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            x[j] = if lower[j].is_finite() {
                lower[j]
            } else if upper[j].is_finite() {
                upper[j]
            } else {
                0.0
            };
        }
        let basis: Vec<usize> = (n..n + m).collect();
        let mut pos = vec![usize::MAX; n + m];
        for (i, &b) in basis.iter().enumerate() {
            pos[b] = i;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        let mut s = Simplex {
            lp,
            m,
            lower,
            upper,
            x,
            basis,
            pos,
            binv,
            since_refactor: 0,
        };
        s.recompute_basic();
        s
    }

    fn n_total(&self) -> usize {
        self.lp.n + self.m
    }

    /// Adds `scale * column(j)` to `acc` (dense, length m).
    fn axpy_column(&self, j: usize, scale: f64, acc: &mut [f64]) {
        if j < self.lp.n {
            for &(r, a) in &self.lp.cols[j] {
                acc[r] += scale * a;
            }
        } else {
            acc[j - self.lp.n] -= scale;
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.lp.n {
            self.lp.cols[j].iter().map(|&(r, a)| a * y[r]).sum()
        } else {
            -y[j - self.lp.n]
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        if j < self.lp.n {
            for &(r, a) in &self.lp.cols[j] {
                for i in 0..m {
                    out[i] += self.binv[i * m + r] * a;
                }
            }
        } else {
            let r = j - self.lp.n;
            for i in 0..m {
                out[i] = -self.binv[i * m + r];
            }
        }
        out
    }

    fn recompute_basic(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n_total() {
            if self.pos[j] == usize::MAX && self.x[j] != 0.0 {
                self.axpy_column(j, self.x[j], &mut rhs);
            }
        }
        for i in 0..m {
            let mut v = 0.0;
            let row = &self.binv[i * m..(i + 1) * m];
            for (b, r) in row.iter().zip(&rhs) {
                v += b * r;
            }
            let var = self.basis[i];
            self.x[var] = -v;
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            let mut col = vec![0.0; m];
            self.axpy_column(j, 1.0, &mut col);
            for r in 0..m {
                a[r * m + k] = col[r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = a[c * m + c].abs();
            for r in c + 1..m {
                let v = a[r * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return false;
            }
            if piv != c {
                for k in 0..m {
                    a.swap(c * m + k, piv * m + k);
                    inv.swap(c * m + k, piv * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_basic();
        true
    }

    fn infeasibility_costs(&self) -> (Vec<f64>, f64) {
        let mut cb = vec![0.0; self.m];
        let mut sum = 0.0;
        for (i, &j) in self.basis.iter().enumerate() {
            let v = self.x[j];
            if v < self.lower[j] - PRIMAL_TOL {
                cb[i] = -1.0;
                sum += self.lower[j] - v;
            } else if v > self.upper[j] + PRIMAL_TOL {
                cb[i] = 1.0;
                sum += v - self.upper[j];
            }
        }
        (cb, sum)
    }

    fn cost(&self, j: usize) -> f64 {
        if j < self.lp.n {
            self.lp.cost[j]
        } else {
            0.0
        }
    }

    fn objective(&self) -> f64 {
        (0..self.lp.n).map(|j| self.lp.cost[j] * self.x[j]).sum()
    }

    fn outcome(&self, status: LpStatus, iterations: usize, detail: Option<String>) -> LpOutcome {
        LpOutcome {
            status,
            x: self.x[..self.lp.n].to_vec(),
            objective: self.objective(),
            iterations,
            detail,
        }
    }

    fn run(mut self, max_iterations: usize) -> LpOutcome {
        let m = self.m;
        let total = self.n_total();
        let mut iterations = 0;
        let mut stalled = 0usize;
        let mut bland = false;
        let mut verified = false;

        loop {
            if iterations >= max_iterations {
                return self.outcome(LpStatus::Failed, iterations, Some("iteration limit".into()));
            }
            if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                return self.outcome(LpStatus::Failed, iterations, Some("singular basis".into()));
            }

            let (infeas_cost, infeas_sum) = self.infeasibility_costs();
            let phase1 = infeas_sum > 0.0;
            let cb: Vec<f64> = if phase1 {
                infeas_cost
            } else {
                self.basis.iter().map(|&j| self.cost(j)).collect()
            };
            let mut y = vec![0.0; m];
            for (i, &c) in cb.iter().enumerate() {
                if c != 0.0 {
                    let row = &self.binv[i * m..(i + 1) * m];
                    for (yk, b) in y.iter_mut().zip(row) {
                        *yk += c * b;
                    }
                }
            }

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                if self.pos[j] != usize::MAX || self.lower[j] == self.upper[j] {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { self.cost(j) };
                let d = cj - self.dot_column(j, &y);
                let can_up = self.x[j] < self.upper[j];
                let can_down = self.x[j] > self.lower[j];
                let eligible = (d < -DUAL_TOL && can_up) || (d > DUAL_TOL && can_down);
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d.abs() > best.abs()) {
                    entering = Some((j, d));
                }
            }

            let Some((q, dq)) = entering else {
                if !verified {
                    // Confirm on a fresh factorization before declaring the result.
                    if !self.refactor() {
                        return self.outcome(LpStatus::Failed, iterations, Some("singular basis".into()));
                    }
                    verified = true;
                    continue;
                }
                let status = if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal };
                return self.outcome(status, iterations, None);
            };
            verified = false;
            iterations += 1;

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);

            // Harris two-pass ratio test. Pass 1: relaxed step bound.
            let mut t_relaxed = f64::INFINITY;
            for i in 0..m {
                let rate = -dir * alpha[i];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[i];
                let v = self.x[j];
                let (lo, hi) = (self.lower[j], self.upper[j]);
                let limit = if rate > 0.0 {
                    if v < lo - PRIMAL_TOL {
                        (lo - v) / rate
                    } else if hi.is_finite() && v <= hi + PRIMAL_TOL {
                        (hi + PRIMAL_TOL - v) / rate
                    } else {
                        continue;
                    }
                } else if v > hi + PRIMAL_TOL {
                    (v - hi) / -rate
                } else if lo.is_finite() && v >= lo - PRIMAL_TOL {
                    (v - lo + PRIMAL_TOL) / -rate
                } else {
                    continue;
                };
                t_relaxed = t_relaxed.min(limit);
            }
            // Pass 2: among rows blocking within the relaxed bound, the largest pivot.
            let mut leave: Option<(usize, f64, f64)> = None; // (row, step, bound)
            if t_relaxed.is_finite() {
                let mut best_piv = 0.0;
                for i in 0..m {
                    let rate = -dir * alpha[i];
                    if rate.abs() <= PIVOT_TOL {
                        continue;
                    }
                    let j = self.basis[i];
                    let v = self.x[j];
                    let (lo, hi) = (self.lower[j], self.upper[j]);
                    let (step, bound) = if rate > 0.0 {
                        if v < lo - PRIMAL_TOL {
                            ((lo - v) / rate, lo)
                        } else if hi.is_finite() && v <= hi + PRIMAL_TOL {
                            ((hi - v) / rate, hi)
                        } else {
                            continue;
                        }
                    } else if v > hi + PRIMAL_TOL {
                        ((v - hi) / -rate, hi)
                    } else if lo.is_finite() && v >= lo - PRIMAL_TOL {
                        ((v - lo) / -rate, lo)
                    } else {
                        continue;
                    };
                    if step > t_relaxed {
                        continue;
                    }
                    let piv = alpha[i].abs();
                    let better = match leave {
                        None => true,
                        Some((r, _, _)) => {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                piv > best_piv
                            }
                        }
                    };
                    if better {
                        best_piv = piv;
                        leave = Some((i, step.max(0.0), bound));
                    }
                }
            }

            let flip = self.upper[q] - self.lower[q];
            let step_pivot = leave.map(|(_, t, _)| t).unwrap_or(f64::INFINITY);
            if flip.is_finite() && flip <= step_pivot {
                // Bound flip: the entering variable crosses to its other bound.
                let t = flip;
                for i in 0..m {
                    let j = self.basis[i];
                    self.x[j] -= dir * t * alpha[i];
                }
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                stalled = 0;
                continue;
            }
            let Some((r, t, bound)) = leave else {
                if phase1 {
                    return self.outcome(
                        LpStatus::Failed,
                        iterations,
                        Some("unbounded ray in phase 1".into()),
                    );
                }
                return self.outcome(LpStatus::Unbounded, iterations, None);
            };

            if t * dq.abs() <= 1e-12 {
                stalled += 1;
                if stalled >= BLAND_AFTER {
                    bland = true;
                }
            } else {
                stalled = 0;
            }

            for i in 0..m {
                let j = self.basis[i];
                self.x[j] -= dir * t * alpha[i];
            }
            self.x[q] += dir * t;
            let leaving = self.basis[r];
            self.x[leaving] = bound;

            // Product-form update of the inverse.
            let piv = alpha[r];
            for k in 0..m {
                self.binv[r * m + k] /= piv;
            }
            for i in 0..m {
                if i == r || alpha[i] == 0.0 {
                    continue;
                }
                let f = alpha[i];
                for k in 0..m {
                    let v = self.binv[r * m + k];
                    if v != 0.0 {
                        self.binv[i * m + k] -= f * v;
                    }
                }
            }
            self.basis[r] = q;
            self.pos[q] = r;
            self.pos[leaving] = usize::MAX;
            self.since_refactor += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{MipModel, ObjSense, Sense};

    fn solve(model: &MipModel) -> LpOutcome {
        let lp = LpData::from_model(model).unwrap();
        let lo: Vec<f64> = model.variables().iter().map(|v| v.lower).collect();
        let hi: Vec<f64> = model.variables().iter().map(|v| v.upper).collect();
        lp.solve(&lo, &hi, 10_000)
    }

    #[test]
    fn single_lower_bound_row() {
        let mut m = MipModel::new("t");
        let x = m.add_continuous("x", 0.0, 10.0).unwrap();
        m.add_row(&[(x, 1.0)], Sense::Ge, 1.0).unwrap();
        m.set_objective(ObjSense::Minimize, &[(x, 1.0)]).unwrap();
        let out = solve(&m);
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_two_variable_case() {
        let mut m = MipModel::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_row(&[(x, 1.0), (y, 1.0)], Sense::Le, 1.0).unwrap();
        m.set_objective(ObjSense::Minimize, &[(x, -1.0), (y, -1.0)]).unwrap();
        let out = solve(&m);
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = MipModel::new("t");
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_row(&[(x, 1.0)], Sense::Ge, 2.0).unwrap();
        m.add_row(&[(x, 1.0)], Sense::Le, 1.0).unwrap();
        assert_eq!(solve(&m).status, LpStatus::Infeasible);
    }

    #[test]
    fn free_direction_is_unbounded() {
        let mut m = MipModel::new("t");
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_row(&[(x, 1.0), (y, 1.0)], Sense::Le, 4.0).unwrap();
        m.set_objective(ObjSense::Minimize, &[(x, 1.0)]).unwrap();
        assert_eq!(solve(&m).status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_system_with_free_variables() {
        // x + y = 3, x - y = 1  =>  x = 2, y = 1
        let mut m = MipModel::new("t");
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_row(&[(x, 1.0), (y, 1.0)], Sense::Eq, 3.0).unwrap();
        m.add_row(&[(x, 1.0), (y, -1.0)], Sense::Eq, 1.0).unwrap();
        m.set_objective(ObjSense::Maximize, &[(x, 1.0)]).unwrap();
        let out = solve(&m);
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.x[0] - 2.0).abs() < 1e-12 && (out.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Klee-Minty-like degenerate cube corner: many rows tight at the origin.
        let mut m = MipModel::new("t");
        let n = 6;
        let xs: Vec<_> = (0..n).map(|i| m.add_continuous(format!("x{i}"), 0.0, f64::INFINITY).unwrap()).collect();
        for i in 0..n {
            let mut terms: Vec<_> = (0..i).map(|k| (xs[k], 2f64.powi((i - k + 1) as i32))).collect();
            terms.push((xs[i], 1.0));
            m.add_row(&terms, Sense::Le, 5f64.powi(i as i32 + 1)).unwrap();
            m.add_row(&[(xs[i], 1.0), (xs[(i + 1) % n], -1.0)], Sense::Le, 1e3).unwrap();
        }
        let obj: Vec<_> = (0..n).map(|i| (xs[i], 2f64.powi((n - 1 - i) as i32))).collect();
        m.set_objective(ObjSense::Maximize, &obj).unwrap();
        let out = solve(&m);
        assert_eq!(out.status, LpStatus::Optimal);
        assert!(m.max_violation(&out.x) < 1e-7);
    }
}
