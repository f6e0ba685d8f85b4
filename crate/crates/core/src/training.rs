//! MIP training of small networks with discrete activations.
//!
//! Two variants share one model layout. `BinaryStep` learns continuous
//! weights in `[−1, 1]` for `{0, 1}` step units; `Binarized` learns weights in
//! `{−P, 0, P}` for `±1` sign units. Weight variables are shared by all
//! samples; activations and weight-activation products are per sample. Row 0
//! of every weight matrix is the bias (its input is the constant 1).

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mip::{MipModel, ObjSense, Role, Sense, VarId, VarKind, VarMeta};
use crate::network::{argmax, Activation, Interval, Layer, Network};
use crate::solver::SolveResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TrainingVariant {
    BinaryStep,
    Binarized { p: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `Σ |ŷ − y|` against one-hot targets (a 0/1 target for one output).
    L1,
    /// `Σ max(0, ½ − y·ŷ)` with `y ∈ {−1, +1}`.
    Hinge,
}

impl FromStr for Loss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Loss::L1),
            "hinge" => Ok(Loss::Hinge),
            other => Err(Error::UnsupportedLoss(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Dataset = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if d.inputs.len() != d.labels.len() {
            return Err(Error::Parse(format!(
                "{} inputs but {} labels",
                d.inputs.len(),
                d.labels.len()
            )));
        }
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    /// Layer sizes `n⁰, …, n^L`.
    pub arch: Vec<usize>,
    pub variant: TrainingVariant,
    pub loss: Loss,
    /// Inputs must lie in `[−r, r]`.
    pub radius: f64,
    /// Margin replacing the strict side of each activation test.
    pub epsilon: f64,
}

impl TrainingSpec {
    pub fn new(arch: Vec<usize>, variant: TrainingVariant, loss: Loss) -> Self {
        Self {
            arch,
            variant,
            loss,
            radius: 1.0,
            epsilon: 1e-4,
        }
    }

    fn depth(&self) -> usize {
        self.arch.len() - 1
    }

    fn p(&self) -> f64 {
        match self.variant {
            TrainingVariant::BinaryStep => 1.0,
            TrainingVariant::Binarized { p } => f64::from(p),
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTraining(m));
        if self.arch.len() < 2 || self.arch.contains(&0) {
            return bad("architecture needs at least two non-empty layers".into());
        }
        if let TrainingVariant::Binarized { p: 0 } = self.variant {
            return bad("P must be a positive integer".into());
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("radius {} must be positive", self.radius));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if data.inputs.len() != data.labels.len() {
            return bad("inputs and labels differ in length".into());
        }
        let classes = self.arch[self.depth()].max(2);
        for (s, (x, &y)) in data.inputs.iter().zip(&data.labels).enumerate() {
            if x.len() != self.arch[0] {
                return bad(format!("sample {s} has {} features, expected {}", x.len(), self.arch[0]));
            }
            if x.iter().any(|v| !(v.abs() <= self.radius)) {
                return bad(format!("sample {s} leaves [-{r}, {r}]", r = self.radius));
            }
            if y >= classes {
                return bad(format!("sample {s} has label {y}, expected below {classes}"));
            }
        }
        Ok(())
    }

    /// Target of output `i` for `label` under the loss convention.
    fn target(&self, label: usize, i: usize) -> f64 {
        let n_out = self.arch[self.depth()];
        let hit = if n_out == 1 { label == 1 } else { label == i };
        match (self.loss, hit) {
            (Loss::L1, true) => 1.0,
            (Loss::L1, false) => 0.0,
            (Loss::Hinge, true) => 1.0,
            (Loss::Hinge, false) => -1.0,
        }
    }

    /// Class predicted from an output vector.
    pub fn predict(&self, output: &[f64]) -> usize {
        if output.len() == 1 {
            let threshold = match self.loss {
                Loss::L1 => 0.5,
                Loss::Hinge => 0.0,
            };
            usize::from(output[0] >= threshold)
        } else {
            argmax(output).unwrap_or(0)
        }
    }

    /// Loss of one sample.
    pub fn sample_loss(&self, output: &[f64], label: usize) -> f64 {
        output
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                let t = self.target(label, i);
                match self.loss {
                    Loss::L1 => (o - t).abs(),
                    Loss::Hinge => (0.5 - t * o).max(0.0),
                }
            })
            .sum()
    }

    /// Output scale of the binarized head, `2 / (P (n^{L−1} + 1))`.
    fn head_scale(&self) -> f64 {
        match self.variant {
            TrainingVariant::BinaryStep => 1.0,
            TrainingVariant::Binarized { p } => 2.0 / (f64::from(p) * (self.arch[self.depth() - 1] as f64 + 1.0)),
        }
    }
}

/// A training model with handles for decoding.
#[derive(Debug, Clone)]
pub struct TrainingModel {
    pub model: MipModel,
    pub spec: TrainingSpec,
    /// `weights[l - 1][j][i]`; row `j = 0` is the bias.
    pub weights: Vec<Vec<Vec<VarId>>>,
    /// `activations[s][l - 1][i]` for hidden layers `l = 1..L−1`.
    pub activations: Vec<Vec<Vec<VarId>>>,
    /// `products[s][l - 2][j - 1][i]` for layers `l ≥ 2` and `j ≥ 1`.
    pub products: Vec<Vec<Vec<Vec<VarId>>>>,
    /// `outputs[s][i]`.
    pub outputs: Vec<Vec<VarId>>,
}

/// Encodes the training problem for `spec` on `data`.
pub fn encode_training(spec: &TrainingSpec, data: &Dataset) -> Result<TrainingModel> {
    spec.validate(data)?;
    match spec.variant {
        TrainingVariant::BinaryStep => encode_binary_training(spec, data),
        TrainingVariant::Binarized { .. } => encode_binarized_training(spec, data),
    }
}

/// Step-activation training: weights in `[−1, 1]`, activations in `{0, 1}`,
/// and a linear output head.
pub fn encode_binary_training(spec: &TrainingSpec, data: &Dataset) -> Result<TrainingModel> {
    if spec.variant != TrainingVariant::BinaryStep {
        return Err(Error::InvalidTraining("expected the binary-step variant".into()));
    }
    spec.validate(data)?;
    build(spec, data)
}

/// Binarized training: weights `P·t` with `t ∈ {−1, 0, 1}`, activations
/// `(2z − 1)` and the scaled linear output head.
pub fn encode_binarized_training(spec: &TrainingSpec, data: &Dataset) -> Result<TrainingModel> {
    if !matches!(spec.variant, TrainingVariant::Binarized { .. }) {
        return Err(Error::InvalidTraining("expected the binarized variant".into()));
    }
    spec.validate(data)?;
    build(spec, data)
}

fn build(spec: &TrainingSpec, data: &Dataset) -> Result<TrainingModel> {
    let depth = spec.depth();
    let binarized = matches!(spec.variant, TrainingVariant::Binarized { .. });
    let p = spec.p();
    let eps = spec.epsilon;
    let mut model = MipModel::new(if binarized { "train_bnn" } else { "train_step" });

    // Shared weights. Binarized weights are the integers t; the physical weight is P·t.
    let mut weights = Vec::with_capacity(depth);
    for l in 1..=depth {
        let mut layer = Vec::with_capacity(spec.arch[l - 1] + 1);
        for j in 0..=spec.arch[l - 1] {
            let mut row = Vec::with_capacity(spec.arch[l]);
            for i in 0..spec.arch[l] {
                let kind = if binarized { VarKind::Integer } else { VarKind::Continuous };
                let w = model.add_variable(format!("w_l{l}_r{j}_c{i}"), kind, -1.0, 1.0)?;
                model.set_meta(
                    w,
                    VarMeta {
                        layer: l,
                        neuron: i,
                        role: Role::TrainingWeight { row: j },
                    },
                )?;
                row.push(w);
            }
            layer.push(row);
        }
        weights.push(layer);
    }

    let mut activations = Vec::with_capacity(data.len());
    let mut products = Vec::with_capacity(data.len());
    let mut outputs = Vec::with_capacity(data.len());
    let mut objective = Vec::new();

    for (s, (x0, &label)) in data.inputs.iter().zip(&data.labels).enumerate() {
        let mut acts: Vec<Vec<VarId>> = Vec::with_capacity(depth.saturating_sub(1));
        let mut prods: Vec<Vec<Vec<VarId>>> = Vec::new();
        let mut out = Vec::new();
        for l in 1..=depth {
            let n_prev = spec.arch[l - 1];
            // Pre-activation terms of every unit in this layer (scaled units for
            // the binarized variant: u = w·(2z − 1) with w = P·t).
            let mut pre: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); spec.arch[l]];
            if l == 1 {
                for (i, terms) in pre.iter_mut().enumerate() {
                    terms.push((weights[0][0][i], p));
                    for j in 1..=n_prev {
                        if x0[j - 1] != 0.0 {
                            terms.push((weights[0][j][i], p * x0[j - 1]));
                        }
                    }
                }
            } else {
                let mut layer_prods = Vec::with_capacity(n_prev);
                for j in 1..=n_prev {
                    let a = acts[l - 2][j - 1];
                    let mut row = Vec::with_capacity(spec.arch[l]);
                    for (i, terms) in pre.iter_mut().enumerate() {
                        let utag = format!("l{l}_r{j}_c{i}_s{s}");
                        let w = weights[l - 1][j][i];
                        let u = model.add_continuous(format!("u_{utag}"), -p, p)?;
                        model.set_meta(
                            u,
                            VarMeta {
                                layer: l,
                                neuron: i,
                                role: Role::TrainingProduct { row: j, sample: s },
                            },
                        )?;
                        if binarized {
                            // u = P·t·(2z − 1)
                            let tp = 2.0 * p;
                            model.add_constraint(format!("bnn_prod1_{utag}_eq2.43c"), &[(u, 1.0), (w, -p), (a, tp)], Sense::Le, tp)?;
                            model.add_constraint(format!("bnn_prod2_{utag}_eq2.43d"), &[(u, 1.0), (w, p), (a, -tp)], Sense::Le, 0.0)?;
                            model.add_constraint(format!("bnn_prod3_{utag}_eq2.43e"), &[(u, 1.0), (w, -p), (a, -tp)], Sense::Ge, -tp)?;
                            model.add_constraint(format!("bnn_prod4_{utag}_eq2.43f"), &[(u, 1.0), (w, p), (a, tp)], Sense::Ge, 0.0)?;
                        } else {
                            // u = w·x with x ∈ {0, 1}
                            model.add_constraint(format!("prod_a_{utag}_eq2.31a"), &[(u, 1.0), (a, -1.0)], Sense::Le, 0.0)?;
                            model.add_constraint(format!("prod_b_{utag}_eq2.31b"), &[(u, 1.0), (a, 1.0)], Sense::Ge, 0.0)?;
                            model.add_constraint(format!("prod_c_{utag}_eq2.31c"), &[(u, 1.0), (w, -1.0), (a, 1.0)], Sense::Le, 1.0)?;
                            model.add_constraint(format!("prod_d_{utag}_eq2.31d"), &[(u, 1.0), (w, -1.0), (a, -1.0)], Sense::Ge, -1.0)?;
                        }
                        terms.push((u, 1.0));
                        row.push(u);
                    }
                    layer_prods.push(row);
                }
                for (i, terms) in pre.iter_mut().enumerate() {
                    terms.insert(0, (weights[l - 1][0][i], p));
                }
                prods.push(layer_prods);
            }

            if l < depth {
                // M¹ covers |w·x⁰| ≤ n⁰r + 1 and Mˡ covers n^{l−1} + 1 products, each scaled by P.
                let m = if l == 1 {
                    p * (n_prev as f64 * spec.radius + 1.0)
                } else {
                    p * (n_prev as f64 + 1.0)
                };
                let mut layer_acts = Vec::with_capacity(spec.arch[l]);
                for (i, terms) in pre.iter().enumerate() {
                    let tag = format!("l{l}_n{i}_s{s}");
                    let name = if binarized { format!("z_{tag}") } else { format!("x_{tag}") };
                    let a = model.add_binary(name)?;
                    model.set_meta(
                        a,
                        VarMeta {
                            layer: l,
                            neuron: i,
                            role: Role::Indicator,
                        },
                    )?;
                    // Inactive side: Σ ≤ (M + ε)·a − ε, active side: Σ ≥ −M(1 − a).
                    let (lt, ge) = if binarized {
                        (format!("bnn_gate_hi_{tag}_eq2.43a"), format!("bnn_gate_lo_{tag}_eq2.43a"))
                    } else if l == 1 {
                        (format!("step_lt_{tag}_eq2.33a"), format!("step_ge_{tag}_eq2.33b"))
                    } else {
                        (format!("step_lt_{tag}_eq2.33c"), format!("step_ge_{tag}_eq2.33d"))
                    };
                    let mut hi = terms.clone();
                    hi.push((a, -(m + eps)));
                    model.add_constraint(lt, &hi, Sense::Le, -eps)?;
                    let mut lo = terms.clone();
                    lo.push((a, -m));
                    model.add_constraint(ge, &lo, Sense::Ge, -m)?;
                    layer_acts.push(a);
                }
                acts.push(layer_acts);
            } else {
                let scale = spec.head_scale();
                let bound = scale * p * (n_prev as f64 * if l == 1 { spec.radius } else { 1.0 } + 1.0);
                for (i, terms) in pre.iter().enumerate() {
                    let tag = format!("l{l}_n{i}_s{s}");
                    let x = model.add_continuous(format!("x_{tag}"), -bound, bound)?;
                    model.set_meta(
                        x,
                        VarMeta {
                            layer: l,
                            neuron: i,
                            role: Role::UnitOutput,
                        },
                    )?;
                    let mut row: Vec<(VarId, f64)> = terms.iter().map(|&(v, c)| (v, scale * c)).collect();
                    row.push((x, -1.0));
                    let name = if binarized {
                        format!("bnn_out_{tag}_eq2.43g")
                    } else {
                        format!("head_{tag}")
                    };
                    model.add_constraint(name, &row, Sense::Eq, 0.0)?;
                    out.push(x);
                }
            }
        }

        for (i, &x) in out.iter().enumerate() {
            let t = spec.target(label, i);
            let tag = format!("s{s}_n{i}");
            let d = model.add_continuous(format!("d_{tag}"), 0.0, f64::INFINITY)?;
            model.set_meta(
                d,
                VarMeta {
                    layer: depth,
                    neuron: i,
                    role: Role::Distance,
                },
            )?;
            match spec.loss {
                Loss::L1 => {
                    model.add_constraint(format!("loss_hi_{tag}"), &[(d, 1.0), (x, -1.0)], Sense::Ge, -t)?;
                    model.add_constraint(format!("loss_lo_{tag}"), &[(d, 1.0), (x, 1.0)], Sense::Ge, t)?;
                }
                Loss::Hinge => {
                    model.add_constraint(format!("loss_hinge_{tag}"), &[(d, 1.0), (x, t)], Sense::Ge, 0.5)?;
                }
            }
            objective.push((d, 1.0));
        }
        activations.push(acts);
        products.push(prods);
        outputs.push(out);
    }
    model.set_objective(ObjSense::Minimize, &objective)?;
    Ok(TrainingModel {
        model,
        spec: spec.clone(),
        weights,
        activations,
        products,
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub label: usize,
    pub predicted: usize,
    pub mip_output: Vec<f64>,
    pub forward_output: Vec<f64>,
    pub loss: f64,
    /// Hidden activations of the model agree with the discrete forward pass.
    pub activations_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Learned weights `weights[l - 1][j][i]` on the variant's lattice; row 0 is the bias.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub samples: Vec<SampleReport>,
    pub total_loss: f64,
    pub objective: Option<f64>,
    pub accuracy: f64,
    /// Largest |MIP output − forward output| over all samples.
    pub max_output_error: f64,
}

impl TrainingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Decodes the incumbent of `result` into a runnable network and compares it
/// with the model's own activations on every training sample.
pub fn decode_trained(tm: &TrainingModel, data: &Dataset, result: &SolveResult) -> Result<(Network, TrainingReport)> {
    let x = result.incumbent.as_ref().ok_or(Error::NoIncumbent)?;
    let spec = &tm.spec;
    let depth = spec.depth();
    let p = spec.p();
    let binarized = matches!(spec.variant, TrainingVariant::Binarized { .. });

    let lattice: Vec<Vec<Vec<f64>>> = tm
        .weights
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|v| {
                            let w = x[v.0].clamp(-1.0, 1.0);
                            if binarized {
                                p * w.round()
                            } else {
                                w
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    // Hidden units output ±1 (sign) or 0/1 (step); the binarized head folds in its scale.
    let hidden = if binarized { Activation::Sign } else { Activation::Step };
    let mut layers = Vec::with_capacity(depth);
    for (li, w) in lattice.iter().enumerate() {
        let l = li + 1;
        let scale = if l == depth { spec.head_scale() } else { 1.0 };
        let bias: Vec<f64> = w[0].iter().map(|b| scale * b).collect();
        let weights: Vec<Vec<f64>> = w[1..].iter().map(|row| row.iter().map(|c| scale * c).collect()).collect();
        let act = if l == depth { Activation::Linear } else { hidden };
        layers.push(Layer::dense(weights, bias, act));
    }
    let net = Network::new(spec.arch[0], vec![Interval::new(-spec.radius, spec.radius); spec.arch[0]], layers)?;

    let mut samples = Vec::with_capacity(data.len());
    let mut max_err: f64 = 0.0;
    let mut correct = 0;
    for (s, (x0, &label)) in data.inputs.iter().zip(&data.labels).enumerate() {
        let acts = net.forward(x0)?;
        let forward_output = acts.output().to_vec();
        let mip_output: Vec<f64> = tm.outputs[s].iter().map(|v| x[v.0]).collect();
        let mut activations_match = true;
        for (li, layer) in tm.activations[s].iter().enumerate() {
            for (i, v) in layer.iter().enumerate() {
                let z = x[v.0].round();
                let mip = if binarized { 2.0 * z - 1.0 } else { z };
                if mip != acts.layers[li].post[i] {
                    activations_match = false;
                }
            }
        }
        for (a, b) in mip_output.iter().zip(&forward_output) {
            max_err = max_err.max((a - b).abs());
        }
        let predicted = spec.predict(&forward_output);
        correct += usize::from(predicted == label);
        samples.push(SampleReport {
            label,
            predicted,
            loss: spec.sample_loss(&forward_output, label),
            mip_output,
            forward_output,
            activations_match,
        });
    }
    let total_loss = samples.iter().map(|s| s.loss).sum();
    let report = TrainingReport {
        weights: lattice,
        total_loss,
        objective: result.objective,
        accuracy: if data.is_empty() { 1.0 } else { correct as f64 / data.len() as f64 },
        max_output_error: max_err,
        samples,
    };
    Ok((net, report))
}
