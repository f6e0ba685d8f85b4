//! LP and branch-and-bound solver for [`MipModel`]s.

mod branch;
mod oracle;
pub(crate) mod simplex;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use branch::solve_mip;
pub use oracle::{pattern_oracle, OracleResult, PatternModel};

use crate::error::{Error, Result};
use crate::mip::{MipModel, ObjSense};
use simplex::{LpData, LpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchingRule {
    /// Variable closest to half-integral; ties go to the smallest id.
    MostFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSelection {
    /// Lowest relaxation bound first, depth-first once the queue exceeds the cap.
    BestBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Wall-clock limit in seconds. Runs that hit it are not reproducible.
    pub time_limit: Option<f64>,
    pub gap_tolerance: f64,
    pub integrality_tolerance: f64,
    pub feasibility_tolerance: f64,
    pub node_limit: Option<usize>,
    /// Hull-cut rounds at the root; nodes of depth 1 and 2 use the same count.
    pub cut_rounds: usize,
    pub branching: BranchingRule,
    pub node_selection: NodeSelection,
    /// Open-node count above which selection switches to depth-first.
    pub node_queue_cap: usize,
    pub max_lp_iterations: usize,
    /// Unused by the current deterministic rules; recorded for reproducibility.
    pub seed: u64,
    /// Include wall time in results. Off by default so result documents are
    /// byte-for-byte reproducible.
    pub record_time: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            time_limit: None,
            gap_tolerance: 1e-6,
            integrality_tolerance: 1e-6,
            feasibility_tolerance: 1e-7,
            node_limit: None,
            cut_rounds: 10,
            branching: BranchingRule::MostFractional,
            node_selection: NodeSelection::BestBound,
            node_queue_cap: 20_000,
            max_lp_iterations: 100_000,
            seed: 0,
            record_time: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let tols = [self.gap_tolerance, self.integrality_tolerance, self.feasibility_tolerance];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Solver("tolerances must be positive".into()));
        }
        if matches!(self.time_limit, Some(t) if !(t >= 0.0)) {
            return Err(Error::Solver("time limit must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// A limit was reached with an incumbent.
    Feasible,
    Infeasible,
    Unbounded,
    LimitNoIncumbent,
}

mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else if *v > 0.0 {
            Repr::Text("inf".into()).serialize(s)
        } else if *v < 0.0 {
            Repr::Text("-inf".into()).serialize(s)
        } else {
            Repr::Text("nan".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad number '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective of the incumbent, in the model's own sense.
    pub objective: Option<f64>,
    /// Proven bound on the optimum, in the model's own sense.
    #[serde(with = "extended_f64")]
    pub best_bound: f64,
    pub gap: Option<f64>,
    /// Incumbent values indexed by variable id.
    pub incumbent: Option<Vec<f64>>,
    pub nodes: usize,
    pub cuts: usize,
    pub lp_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_seconds: Option<f64>,
    /// Set when some node LP failed and was pruned without proof.
    #[serde(default)]
    pub inexact: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SolveResult {
    pub(crate) fn empty(status: SolveStatus, sense: ObjSense) -> Self {
        let best_bound = match (status, sense) {
            (SolveStatus::Infeasible, ObjSense::Minimize) => f64::INFINITY,
            (SolveStatus::Infeasible, ObjSense::Maximize) => f64::NEG_INFINITY,
            (_, ObjSense::Minimize) => f64::NEG_INFINITY,
            (_, ObjSense::Maximize) => f64::INFINITY,
        };
        Self {
            status,
            objective: None,
            best_bound,
            gap: None,
            incumbent: None,
            nodes: 0,
            cuts: 0,
            lp_iterations: 0,
            time_seconds: None,
            inexact: false,
            warnings: Vec::new(),
        }
    }

    pub fn has_incumbent(&self) -> bool {
        self.incumbent.is_some()
    }

    /// Incumbent value of one variable.
    pub fn value(&self, v: crate::mip::VarId) -> Option<f64> {
        self.incumbent.as_ref().map(|x| x[v.0])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// `|obj − bound| / max(1e-10, |obj|)`.
pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    if objective == bound {
        return 0.0;
    }
    (objective - bound).abs() / objective.abs().max(1e-10)
}

pub(crate) fn bounds_of(model: &MipModel) -> (Vec<f64>, Vec<f64>) {
    let lo = model.variables().iter().map(|v| v.lower).collect();
    let hi = model.variables().iter().map(|v| v.upper).collect();
    (lo, hi)
}

pub(crate) fn sense_sign(model: &MipModel) -> f64 {
    match model.objective().sense {
        ObjSense::Minimize => 1.0,
        ObjSense::Maximize => -1.0,
    }
}

/// Solves the LP relaxation: binaries and integers become continuous over
/// their bounds.
pub fn solve_lp(model: &MipModel, params: &SolverParams) -> SolveResult {
    let start = Instant::now();
    let sense = model.objective().sense;
    let mut res = match LpData::from_model(model) {
        None => SolveResult::empty(SolveStatus::Infeasible, sense),
        Some(lp) => {
            let (lo, hi) = bounds_of(model);
            let out = lp.solve(&lo, &hi, params.max_lp_iterations);
            match out.status {
                LpStatus::Optimal => {
                    let obj = model.objective().value(&out.x);
                    let mut r = SolveResult::empty(SolveStatus::Optimal, sense);
                    r.objective = Some(obj);
                    r.best_bound = obj;
                    r.gap = Some(0.0);
                    r.incumbent = Some(out.x);
                    r.lp_iterations = out.iterations;
                    r
                }
                LpStatus::Infeasible => {
                    let mut r = SolveResult::empty(SolveStatus::Infeasible, sense);
                    r.lp_iterations = out.iterations;
                    r
                }
                LpStatus::Unbounded => {
                    let mut r = SolveResult::empty(SolveStatus::Unbounded, sense);
                    r.lp_iterations = out.iterations;
                    r
                }
                LpStatus::Failed => {
                    let mut r = SolveResult::empty(SolveStatus::LimitNoIncumbent, sense);
                    r.lp_iterations = out.iterations;
                    r.inexact = true;
                    r.warnings.push(format!(
                        "LP numerical failure: {}",
                        out.detail.unwrap_or_else(|| "unknown".into())
                    ));
                    r
                }
            }
        }
    };
    if params.record_time {
        res.time_seconds = Some(start.elapsed().as_secs_f64());
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::Sense;

    #[test]
    fn lp_examples() {
        let mut m = MipModel::new("t");
        let x = m.add_continuous("X", 0.0, 10.0).unwrap();
        m.add_row(&[(x, 1.0)], Sense::Ge, 1.0).unwrap();
        m.set_objective(ObjSense::Minimize, &[(x, 1.0)]).unwrap();
        let r = solve_lp(&m, &SolverParams::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, Some(1.0));

        let mut m = MipModel::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_row(&[(x, 1.0), (y, 1.0)], Sense::Le, 1.0).unwrap();
        m.set_objective(ObjSense::Minimize, &[(x, -1.0), (y, -1.0)]).unwrap();
        assert_eq!(solve_lp(&m, &SolverParams::default()).objective, Some(-1.0));
    }

    #[test]
    fn binaries_are_relaxed() {
        let mut m = MipModel::new("t");
        let a = m.add_binary("a").unwrap();
        let b = m.add_binary("b").unwrap();
        m.add_row(&[(a, 2.0), (b, 2.0)], Sense::Le, 1.0).unwrap();
        m.set_objective(ObjSense::Maximize, &[(a, 1.0), (b, 1.0)]).unwrap();
        let r = solve_lp(&m, &SolverParams::default());
        assert!((r.objective.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gap_formula() {
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert_eq!(relative_gap(2.0, 1.0), 0.5);
        assert_eq!(relative_gap(5.0, 0.0), 1.0);
    }

    #[test]
    fn infinite_bound_round_trips() {
        let r = SolveResult::empty(SolveStatus::Infeasible, ObjSense::Minimize);
        let text = r.to_json();
        assert!(text.contains("\"inf\""));
        assert_eq!(SolveResult::from_json(&text).unwrap(), r);
    }

    #[test]
    fn time_is_opt_in() {
        let m = MipModel::new("t");
        assert!(solve_lp(&m, &SolverParams::default()).time_seconds.is_none());
        let p = SolverParams {
            record_time: true,
            ..SolverParams::default()
        };
        assert!(solve_lp(&m, &p).time_seconds.is_some());
    }
}
