use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
    /// Integer variable; its (integral) range lives in the variable bounds.
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * x[v.0]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub sense: ObjSense,
    pub terms: Vec<(VarId, f64)>,
}

impl Objective {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * x[v.0]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// `x`: unit output (layer 0 is the network input).
    UnitOutput,
    /// `x̄`: negative part in the extended formulation.
    Complement,
    /// `z`: ReLU (or step) indicator.
    Indicator,
    DisjunctA { part: usize },
    DisjunctB { part: usize },
    PoolIndicator { member: usize },
    /// `d`: L1 distance (attack) or per-output loss slack (training).
    Distance,
    TrainingWeight { row: usize },
    TrainingProduct { row: usize, sample: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarMeta {
    pub layer: usize,
    pub neuron: usize,
    pub role: Role,
}

/// Data needed to separate single-neuron convex hull cuts for one ReLU encoded
/// with big-M: `y = max(0, w·x + b)` with `x` in a box and indicator `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullNeuron {
    pub layer: usize,
    pub neuron: usize,
    pub inputs: Vec<VarId>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Box of each input, `[L_i, U_i]`.
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub output: VarId,
    pub indicator: VarId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullCutPlan {
    pub neurons: Vec<HullNeuron>,
    pub max_rounds: usize,
    pub max_cuts_per_round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub continuous: usize,
    pub binary: usize,
    pub integer: usize,
    pub constraints: usize,
}

/// Formulation-agnostic mixed-integer linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct MipModel {
    pub name: String,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
    meta: BTreeMap<VarId, VarMeta>,
    hull_cuts: Option<HullCutPlan>,
    var_names: HashMap<String, VarId>,
    con_names: HashMap<String, ConstraintId>,
}

impl Default for MipModel {
    fn default() -> Self {
        Self::new("model")
    }
}

impl MipModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Objective {
                sense: ObjSense::Minimize,
                terms: Vec::new(),
            },
            meta: BTreeMap::new(),
            hull_cuts: None,
            var_names: HashMap::new(),
            con_names: HashMap::new(),
        }
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<VarId> {
        let name = name.into();
        check_name(&name)?;
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvertedBounds {
                name,
                lo: lower,
                hi: upper,
            });
        }
        if lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::InvalidVariable {
                name,
                detail: "bound range is empty".into(),
            });
        }
        match kind {
            VarKind::Binary if lower < 0.0 || upper > 1.0 => {
                return Err(Error::InvalidVariable {
                    name,
                    detail: format!("binary bounds [{lower}, {upper}] outside [0, 1]"),
                })
            }
            VarKind::Integer | VarKind::Binary
                if (lower.is_finite() && lower.fract() != 0.0)
                    || (upper.is_finite() && upper.fract() != 0.0) =>
            {
                return Err(Error::InvalidVariable {
                    name,
                    detail: format!("integer bounds [{lower}, {upper}] are not integral"),
                })
            }
            _ => {}
        }
        if self.var_names.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        let id = VarId(self.variables.len());
        self.var_names.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        Ok(id)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<VarId> {
        self.add_variable(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId> {
        self.add_variable(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn set_meta(&mut self, var: VarId, meta: VarMeta) -> Result<()> {
        self.check_var(var)?;
        self.meta.insert(var, meta);
        Ok(())
    }

    /// Adds `Σ terms (sense) rhs`. Repeated variables are summed and exact
    /// zeros dropped; terms keep the order of first appearance.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: &[(VarId, f64)],
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstraintId> {
        let name = name.into();
        check_name(&name)?;
        if self.con_names.contains_key(&name) || name == OBJECTIVE_ROW {
            return Err(Error::DuplicateName(name));
        }
        if !rhs.is_finite() {
            return Err(Error::InvalidFormulation(format!(
                "constraint '{name}' has non-finite right-hand side {rhs}"
            )));
        }
        let terms = self.coalesce(terms)?;
        let id = ConstraintId(self.constraints.len());
        self.con_names.insert(name.clone(), id);
        self.constraints.push(Constraint {
            name,
            terms,
            sense,
            rhs,
        });
        Ok(id)
    }

    /// Adds a constraint named `C{n}` with `n` the 1-based row number.
    pub fn add_row(&mut self, terms: &[(VarId, f64)], sense: Sense, rhs: f64) -> Result<ConstraintId> {
        let name = format!("C{}", self.constraints.len() + 1);
        self.add_constraint(name, terms, sense, rhs)
    }

    pub fn set_objective(&mut self, sense: ObjSense, terms: &[(VarId, f64)]) -> Result<()> {
        let terms = self.coalesce(terms)?;
        self.objective = Objective { sense, terms };
        Ok(())
    }

    fn coalesce(&self, terms: &[(VarId, f64)]) -> Result<Vec<(VarId, f64)>> {
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        let mut pos: HashMap<VarId, usize> = HashMap::new();
        for &(v, c) in terms {
            self.check_var(v)?;
            if !c.is_finite() {
                return Err(Error::InvalidFormulation(format!(
                    "non-finite coefficient {c} on variable '{}'",
                    self.variables[v.0].name
                )));
            }
            match pos.get(&v) {
                Some(&k) => out[k].1 += c,
                None => {
                    pos.insert(v, out.len());
                    out.push((v, c));
                }
            }
        }
        out.retain(|(_, c)| *c != 0.0);
        Ok(out)
    }

    fn check_var(&self, v: VarId) -> Result<()> {
        if v.0 < self.variables.len() {
            Ok(())
        } else {
            Err(Error::UnknownVariable(v.0))
        }
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) -> Result<()> {
        self.check_var(var)?;
        if lower > upper {
            return Err(Error::InvertedBounds {
                name: self.variables[var.0].name.clone(),
                lo: lower,
                hi: upper,
            });
        }
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
        Ok(())
    }

    pub fn set_hull_cuts(&mut self, plan: Option<HullCutPlan>) {
        self.hull_cuts = plan;
    }

    pub fn hull_cuts(&self) -> Option<&HullCutPlan> {
        self.hull_cuts.as_ref()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn meta(&self) -> &BTreeMap<VarId, VarMeta> {
        &self.meta
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn constraint_by_name(&self, name: &str) -> Option<&Constraint> {
        self.con_names.get(name).map(|c| &self.constraints[c.0])
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn stats(&self) -> ModelStats {
        let mut s = ModelStats {
            continuous: 0,
            binary: 0,
            integer: 0,
            constraints: self.constraints.len(),
        };
        for v in &self.variables {
            match v.kind {
                VarKind::Continuous => s.continuous += 1,
                VarKind::Binary => s.binary += 1,
                VarKind::Integer => s.integer += 1,
            }
        }
        s
    }

    /// Largest violation of any bound or row by `x`; integrality is not checked.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xv)| (v.lower - xv).max(xv - v.upper).max(0.0));
        let rows = self.constraints.iter().map(|c| c.violation(x));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    /// Largest distance of an integer variable's value from the nearest integer.
    pub fn max_fractionality(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .filter(|(v, _)| v.kind.is_integral())
            .map(|(_, &xv)| (xv - xv.round()).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) const OBJECTIVE_ROW: &str = "OBJ";

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace()) || name.starts_with('$') {
        return Err(Error::InvalidFormulation(format!(
            "invalid name '{name}': names must be non-empty without whitespace"
        )));
    }
    Ok(())
}
