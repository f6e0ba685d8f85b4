//! Minimum-L1 targeted adversarial examples.
//!
//! Given a reference input classified as `d̃`, find the closest input (in L1)
//! whose target logit exceeds every other logit by the margin factor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encodings::EncodedNetwork;
use crate::error::{Error, Result};
use crate::mip::{MipModel, ObjSense, Role, Sense, VarId, VarMeta};
use crate::network::{argmax, Network};

/// Tolerance of the margin and distance checks in [`verify_attack`].
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Reference input `x̃⁰`.
    pub reference: Vec<f64>,
    /// True class `d̃`.
    pub true_class: usize,
    /// Explicit target; `None` means `(d̃ + 5) mod 10`.
    #[serde(default)]
    pub target: Option<usize>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    1.2
}

impl AttackSpec {
    pub fn new(reference: Vec<f64>, true_class: usize) -> Self {
        Self {
            reference,
            true_class,
            target: None,
            margin: default_margin(),
        }
    }

    /// Target class: the explicit one or `(d̃ + 5) mod 10`.
    pub fn target_class(&self) -> usize {
        self.target.unwrap_or((self.true_class + 5) % 10)
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let classes = net.output_dim();
        if classes < 2 {
            return Err(Error::InvalidAttack(format!("logits layer has {classes} outputs, need at least 2")));
        }
        let d = self.target_class();
        if d >= classes || self.true_class >= classes {
            return Err(Error::InvalidAttack(format!(
                "classes (true {}, target {d}) must be below {classes}",
                self.true_class
            )));
        }
        if d == self.true_class {
            return Err(Error::InvalidAttack("target equals the true class".into()));
        }
        if !(self.margin > 1.0) {
            return Err(Error::InvalidAttack(format!("margin {} must exceed 1", self.margin)));
        }
        if self.reference.len() != net.input_dim() {
            return Err(Error::InputLength {
                expected: net.input_dim(),
                got: self.reference.len(),
            });
        }
        for (j, (v, iv)) in self.reference.iter().zip(net.input_box()).enumerate() {
            if !iv.contains(*v, 0.0) {
                return Err(Error::InvalidAttack(format!("reference coordinate {j} = {v} lies outside {iv}")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// An attack model with handles to the variables needed for reporting.
#[derive(Debug, Clone)]
pub struct AttackModel {
    pub model: MipModel,
    pub inputs: Vec<VarId>,
    pub logits: Vec<VarId>,
    pub distances: Vec<VarId>,
    pub target: usize,
}

/// Adds the margin rows `x_d − margin·x_j ≥ 0`, the distance variables
/// `d_n{j}` with `−d_j ≤ x⁰_j − x̃⁰_j ≤ d_j`, and the objective `min Σ d_j`.
///
/// The margin row is used literally, so a negative `x_j` makes it looser.
pub fn build_attack(enc: &EncodedNetwork, net: &Network, spec: &AttackSpec) -> Result<AttackModel> {
    spec.validate(net)?;
    let mut model = enc.model.clone();
    model.name = format!("{}_attack", model.name);
    let logits = enc.logits().to_vec();
    let d = spec.target_class();
    for (j, &xj) in logits.iter().enumerate() {
        if j == d {
            continue;
        }
        model.add_constraint(
            format!("margin_c{j}_eq3.1"),
            &[(logits[d], 1.0), (xj, -spec.margin)],
            Sense::Ge,
            0.0,
        )?;
    }
    let mut distances = Vec::with_capacity(enc.inputs.len());
    for (j, (&x, &r)) in enc.inputs.iter().zip(&spec.reference).enumerate() {
        let iv = net.input_box()[j];
        let dist = model.add_continuous(format!("d_n{j}"), 0.0, (r - iv.lo).max(iv.hi - r))?;
        model.set_meta(
            dist,
            VarMeta {
                layer: 0,
                neuron: j,
                role: Role::Distance,
            },
        )?;
        // x − d ≤ x̃ and x + d ≥ x̃
        model.add_constraint(format!("dist_hi_n{j}_eq3.2"), &[(x, 1.0), (dist, -1.0)], Sense::Le, r)?;
        model.add_constraint(format!("dist_lo_n{j}_eq3.2"), &[(x, 1.0), (dist, 1.0)], Sense::Ge, r)?;
        distances.push(dist);
    }
    let obj: Vec<(VarId, f64)> = distances.iter().map(|&v| (v, 1.0)).collect();
    model.set_objective(ObjSense::Minimize, &obj)?;
    Ok(AttackModel {
        model,
        inputs: enc.inputs.clone(),
        logits,
        distances,
        target: d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub true_class: usize,
    pub target: usize,
    pub margin: f64,
    /// The perturbed input.
    pub input: Vec<f64>,
    /// Logits of `input` by the exact forward pass.
    pub logits: Vec<f64>,
    pub predicted: usize,
    pub l1_distance: f64,
    /// `min_j (x_d − margin·x_j)`; non-negative when the margin holds.
    pub margin_slack: f64,
    pub margin_ok: bool,
    /// Set when the report was checked against a solver objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_matches_objective: Option<bool>,
}

impl AttackReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Records whether the L1 distance equals `objective` within [`VERIFY_TOL`].
    pub fn with_objective(mut self, objective: f64) -> Self {
        self.objective = Some(objective);
        self.distance_matches_objective = Some((self.l1_distance - objective).abs() <= VERIFY_TOL);
        self
    }
}

/// Checks the margin on the true logits of `x0` and reports its L1 distance
/// from the reference. A failed check is a report outcome, not an error.
pub fn verify_attack(net: &Network, spec: &AttackSpec, x0: &[f64]) -> Result<AttackReport> {
    let acts = net.forward(x0)?;
    let logits = acts.output().to_vec();
    let d = spec.target_class();
    let margin_slack = logits
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != d)
        .map(|(_, &v)| logits[d] - spec.margin * v)
        .fold(f64::INFINITY, f64::min);
    let l1_distance = x0.iter().zip(&spec.reference).map(|(a, b)| (a - b).abs()).sum();
    Ok(AttackReport {
        true_class: spec.true_class,
        target: d,
        margin: spec.margin,
        input: x0.to_vec(),
        predicted: argmax(&logits).unwrap_or(0),
        logits,
        l1_distance,
        margin_ok: margin_slack >= -VERIFY_TOL,
        margin_slack,
        objective: None,
        distance_matches_objective: None,
    })
}
