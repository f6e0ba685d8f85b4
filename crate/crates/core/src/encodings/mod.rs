//! MILP formulations of a trained network.
//!
//! Every formulation shares the same variable skeleton: `x_l0_n{i}` for the
//! inputs and `x_l{l}_n{i}` for each unit output. Formulation-specific
//! auxiliaries (indicators, complements, disjunct copies, pool indicators) are
//! added per neuron, and each constraint name ends with the label of the
//! equation that emits it.

mod hull;

use serde::{Deserialize, Serialize};

pub use hull::{hull_cut_rhs, separate_hull_cut, separate_hull_values, HullCut};

use crate::bounds::{BoundMethod, BoundSet, LayerBounds, Stability};
use crate::error::{Error, Result};
use crate::mip::{HullCutPlan, HullNeuron, MipModel, ObjSense, Role, Sense, VarId, VarMeta};
use crate::network::{argmax, Activation, Interval, Layer, Network};
use crate::solver::{solve_lp, SolveStatus, SolverParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionBounds {
    /// Interval arithmetic over each partition's subset sum.
    Interval,
    /// Four LP solves per partition over the relaxed prefix encoding.
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReluFormulation {
    BigM,
    Extended {
        valid_inequalities: bool,
    },
    Disjunctive {
        partitions: usize,
        partition_bounds: PartitionBounds,
    },
    /// Big-M plus single-neuron hull cuts separated during branch-and-bound.
    HullCuts {
        max_rounds: usize,
        max_cuts_per_round: usize,
    },
}

impl ReluFormulation {
    pub fn label(&self) -> String {
        match self {
            ReluFormulation::BigM => "bigm".into(),
            ReluFormulation::Extended {
                valid_inequalities: false,
            } => "extended".into(),
            ReluFormulation::Extended {
                valid_inequalities: true,
            } => "extended+vi".into(),
            ReluFormulation::Disjunctive { partitions, .. } => format!("disjunctive(K={partitions})"),
            ReluFormulation::HullCuts { .. } => "hullcuts".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulationSpec {
    pub relu: ReluFormulation,
    /// Fix stably inactive units to 0 and encode stably active ones as equations.
    pub simplify_stable: bool,
}

impl FormulationSpec {
    pub fn new(relu: ReluFormulation) -> Self {
        Self {
            relu,
            simplify_stable: false,
        }
    }

    pub fn validate(&self, method: BoundMethod) -> Result<()> {
        match self.relu {
            ReluFormulation::Disjunctive { partitions: 0, .. } => {
                Err(Error::InvalidFormulation("partition count must be at least 1".into()))
            }
            ReluFormulation::Extended { .. } => Ok(()),
            _ if method == BoundMethod::Serra => Err(Error::InvalidFormulation(
                "serra bounds are only defined for the extended formulation".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A network encoded into a model, with the variables of every layer output.
#[derive(Debug, Clone)]
pub struct EncodedNetwork {
    pub model: MipModel,
    pub inputs: Vec<VarId>,
    /// `layers[l - 1]` are the output variables of layer `l`.
    pub layers: Vec<Vec<VarId>>,
    pub spec: FormulationSpec,
}

impl EncodedNetwork {
    /// Output variables of layer `l`; `l = 0` gives the inputs.
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

    /// Full model assignment induced by the forward pass at `x0`: indicators
    /// follow the sign of the pre-activation, complements and disjunct copies
    /// follow the sign split, and pool indicators pick the first maximizer.
    pub fn assignment_from_forward(&self, net: &Network, x0: &[f64]) -> Result<Vec<f64>> {
        let acts = net.forward(x0)?;
        let mut x = vec![0.0; self.model.num_vars()];
        let disjunctive = matches!(self.spec.relu, ReluFormulation::Disjunctive { .. });
        for (&v, meta) in self.model.meta() {
            let l = meta.layer;
            let i = meta.neuron;
            let y = if l == 0 { 0.0 } else { acts.layers[l - 1].pre[i] };
            x[v.0] = match meta.role {
                Role::UnitOutput => acts.post(l)[i],
                Role::Complement => (-y).max(0.0),
                Role::Indicator => {
                    let on = if disjunctive { y < 0.0 } else { y > 0.0 };
                    f64::from(u8::from(on))
                }
                Role::DisjunctA { part } | Role::DisjunctB { part } => {
                    let Layer::Dense { weights, .. } = &net.layers()[l - 1] else {
                        return Err(Error::InvalidFormulation("disjunct on a non-dense layer".into()));
                    };
                    let k = match self.spec.relu {
                        ReluFormulation::Disjunctive { partitions, .. } => partitions,
                        _ => 1,
                    };
                    let prev = acts.post(l - 1);
                    let groups = partition_indices(prev.len(), k);
                    let s: f64 = groups[part].iter().map(|&j| weights[j][i] * prev[j]).sum();
                    let inactive = y < 0.0;
                    match (meta.role, inactive) {
                        (Role::DisjunctA { .. }, true) | (Role::DisjunctB { .. }, false) => s,
                        _ => 0.0,
                    }
                }
                Role::PoolIndicator { member } => {
                    let Layer::MaxPool { pools } = &net.layers()[l - 1] else {
                        return Err(Error::InvalidFormulation("pool indicator on a non-maxpool layer".into()));
                    };
                    let prev = acts.post(l - 1);
                    let vals: Vec<f64> = pools[i].iter().map(|&j| prev[j]).collect();
                    f64::from(u8::from(argmax(&vals) == Some(member)))
                }
                _ => 0.0,
            };
        }
        Ok(x)
    }
}

/// Contiguous equal-size groups of `0..n`; earlier groups take the remainder.
pub fn partition_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        out.push((start..start + size).collect());
        start += size;
    }
    out
}

fn meta(model: &mut MipModel, v: VarId, layer: usize, neuron: usize, role: Role) -> Result<()> {
    model.set_meta(v, VarMeta { layer, neuron, role })
}

fn require_finite(iv: Interval, layer: usize, neuron: usize) -> Result<()> {
    if iv.lo.is_finite() && iv.hi.is_finite() {
        Ok(())
    } else {
        Err(Error::InfiniteBound { layer, neuron })
    }
}

/// Encodes `net` with the given bounds. The model objective is left empty.
pub fn encode_network(net: &Network, bounds: &BoundSet, spec: &FormulationSpec) -> Result<EncodedNetwork> {
    bounds.check_shape(net)?;
    spec.validate(bounds.method)?;
    let mut model = MipModel::new(format!("relu_{}", spec.relu.label().replace(['(', ')', '='], "")));
    let mut inputs = Vec::with_capacity(net.input_dim());
    for (i, iv) in net.input_box().iter().enumerate() {
        let v = model.add_continuous(format!("x_l0_n{i}"), iv.lo, iv.hi)?;
        meta(&mut model, v, 0, i, Role::UnitOutput)?;
        inputs.push(v);
    }
    let mut enc = EncodedNetwork {
        model,
        inputs,
        layers: Vec::with_capacity(net.depth()),
        spec: *spec,
    };
    let mut hull_plan: Vec<HullNeuron> = Vec::new();

    for (idx, layer) in net.layers().iter().enumerate() {
        let l = idx + 1;
        let lb = bounds.layer(l);
        let prev_vars = enc.outputs(l - 1).to_vec();
        let prev_box = bounds.post(l - 1).to_vec();
        let outs = match layer {
            Layer::Dense {
                weights,
                bias,
                activation,
            } => {
                let mut outs = Vec::with_capacity(bias.len());
                for i in 0..bias.len() {
                    let ctx = NeuronCtx {
                        net,
                        bounds,
                        l,
                        i,
                        weights,
                        bias: bias[i],
                        prev_vars: &prev_vars,
                        prev_box: &prev_box,
                        lb,
                    };
                    let x = match activation {
                        Activation::Linear => encode_linear(&mut enc.model, &ctx)?,
                        Activation::Relu => encode_relu(&mut enc, &ctx, &mut hull_plan)?,
                        other => {
                            return Err(Error::InvalidFormulation(format!(
                                "{other:?} units are only supported by the training encoders"
                            )))
                        }
                    };
                    outs.push(x);
                }
                outs
            }
            Layer::MaxPool { pools } => {
                let mut outs = Vec::with_capacity(pools.len());
                for (i, pool) in pools.iter().enumerate() {
                    outs.push(encode_maxpool(&mut enc.model, l, i, pool, &prev_vars, &prev_box, lb.post[i])?);
                }
                outs
            }
            Layer::AvgPool { pools } => {
                let mut outs = Vec::with_capacity(pools.len());
                for (i, pool) in pools.iter().enumerate() {
                    outs.push(encode_avgpool(&mut enc.model, l, i, pool, &prev_vars, lb.post[i])?);
                }
                outs
            }
        };
        enc.layers.push(outs);
    }

    if let ReluFormulation::HullCuts {
        max_rounds,
        max_cuts_per_round,
    } = spec.relu
    {
        enc.model.set_hull_cuts(Some(HullCutPlan {
            neurons: hull_plan,
            max_rounds,
            max_cuts_per_round,
        }));
    }
    Ok(enc)
}

struct NeuronCtx<'a> {
    net: &'a Network,
    bounds: &'a BoundSet,
    l: usize,
    i: usize,
    weights: &'a [Vec<f64>],
    bias: f64,
    prev_vars: &'a [VarId],
    prev_box: &'a [Interval],
    lb: &'a LayerBounds,
}

impl NeuronCtx<'_> {
    /// `Σ_j w_j x'_j` with zero weights dropped, scaled by `scale`.
    fn affine_terms(&self, scale: f64) -> Vec<(VarId, f64)> {
        self.prev_vars
            .iter()
            .zip(self.weights)
            .filter(|(_, row)| row[self.i] != 0.0)
            .map(|(&v, row)| (v, scale * row[self.i]))
            .collect()
    }

    fn fan_in(&self) -> usize {
        self.weights.iter().filter(|row| row[self.i] != 0.0).count()
    }

    fn tag(&self) -> String {
        format!("l{}_n{}", self.l, self.i)
    }
}

fn encode_linear(model: &mut MipModel, ctx: &NeuronCtx) -> Result<VarId> {
    let pre = ctx.lb.pre[ctx.i];
    let tag = ctx.tag();
    let x = model.add_continuous(format!("x_{tag}"), pre.lo, pre.hi)?;
    meta(model, x, ctx.l, ctx.i, Role::UnitOutput)?;
    let mut terms = vec![(x, 1.0)];
    terms.extend(ctx.affine_terms(-1.0));
    model.add_constraint(format!("lin_{tag}_eq2.7"), &terms, Sense::Eq, ctx.bias)?;
    Ok(x)
}

fn encode_relu(enc: &mut EncodedNetwork, ctx: &NeuronCtx, hull_plan: &mut Vec<HullNeuron>) -> Result<VarId> {
    let (l, i) = (ctx.l, ctx.i);
    let tag = ctx.tag();
    let pre = ctx.lb.pre[i];
    let model = &mut enc.model;

    if ctx.fan_in() == 0 {
        let c = ctx.bias.max(0.0);
        let x = model.add_continuous(format!("x_{tag}"), c, c)?;
        meta(model, x, l, i, Role::UnitOutput)?;
        return Ok(x);
    }

    let simplify = enc.spec.simplify_stable || ctx.bounds.method == BoundMethod::Cheng;
    let stability = ctx.lb.stability[i];
    if simplify && stability == Stability::StablyInactive {
        let x = model.add_continuous(format!("x_{tag}"), 0.0, 0.0)?;
        meta(model, x, l, i, Role::UnitOutput)?;
        return Ok(x);
    }
    if simplify && stability == Stability::StablyActive {
        require_finite(pre, l, i)?;
        let x = model.add_continuous(format!("x_{tag}"), pre.lo.max(0.0), pre.hi.max(0.0))?;
        meta(model, x, l, i, Role::UnitOutput)?;
        let mut terms = vec![(x, 1.0)];
        terms.extend(ctx.affine_terms(-1.0));
        model.add_constraint(format!("relu_active_{tag}_eq2.7"), &terms, Sense::Eq, ctx.bias)?;
        return Ok(x);
    }

    match enc.spec.relu {
        ReluFormulation::BigM => encode_relu_bigm(model, ctx),
        ReluFormulation::HullCuts { .. } => {
            let (x, z) = encode_relu_bigm_vars(model, ctx)?;
            let mut inputs = Vec::new();
            let mut weights = Vec::new();
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for (j, row) in ctx.weights.iter().enumerate() {
                if row[i] != 0.0 {
                    inputs.push(ctx.prev_vars[j]);
                    weights.push(row[i]);
                    lo.push(ctx.prev_box[j].lo);
                    hi.push(ctx.prev_box[j].hi);
                }
            }
            hull_plan.push(HullNeuron {
                layer: l,
                neuron: i,
                inputs,
                weights,
                bias: ctx.bias,
                input_lower: lo,
                input_upper: hi,
                output: x,
                indicator: z,
            });
            Ok(x)
        }
        ReluFormulation::Extended { valid_inequalities } => {
            let x = encode_relu_extended(model, ctx)?;
            if valid_inequalities && l >= 2 {
                add_valid_inequalities(model, ctx)?;
            }
            Ok(x)
        }
        ReluFormulation::Disjunctive {
            partitions,
            partition_bounds,
        } => encode_relu_disjunctive(model, ctx, partitions, partition_bounds),
    }
}

/// Big-M coefficients for constraints (2.8c) and (2.8d). Under the Cheng
/// convention `M = U` only covers (2.8d); (2.8c) needs `-L` to stay valid.
fn bigm_coefficients(ctx: &NeuronCtx) -> Result<(f64, f64)> {
    let pre = ctx.lb.pre[ctx.i];
    require_finite(pre, ctx.l, ctx.i)?;
    let m = ctx.lb.big_m[ctx.i];
    if !m.is_finite() {
        return Err(Error::InfiniteBound {
            layer: ctx.l,
            neuron: ctx.i,
        });
    }
    if ctx.bounds.method == BoundMethod::Cheng {
        Ok(((-pre.lo).max(0.0), m))
    } else {
        Ok((m, m))
    }
}

/// Emits (2.8b)-(2.8d) and returns `(x, z)`.
fn encode_relu_bigm_vars(model: &mut MipModel, ctx: &NeuronCtx) -> Result<(VarId, VarId)> {
    let (l, i) = (ctx.l, ctx.i);
    let tag = ctx.tag();
    let (mc, md) = bigm_coefficients(ctx)?;
    let x = model.add_continuous(format!("x_{tag}"), 0.0, f64::INFINITY)?;
    meta(model, x, l, i, Role::UnitOutput)?;
    let z = model.add_binary(format!("z_{tag}"))?;
    meta(model, z, l, i, Role::Indicator)?;

    let mut t = vec![(x, 1.0)];
    t.extend(ctx.affine_terms(-1.0));
    model.add_constraint(format!("relu_lb_{tag}_eq2.8b"), &t, Sense::Ge, ctx.bias)?;
    t.push((z, mc));
    model.add_constraint(format!("relu_ub_{tag}_eq2.8c"), &t, Sense::Le, ctx.bias + mc)?;
    model.add_constraint(format!("relu_gate_{tag}_eq2.8d"), &[(x, 1.0), (z, -md)], Sense::Le, 0.0)?;
    Ok((x, z))
}

fn encode_relu_bigm(model: &mut MipModel, ctx: &NeuronCtx) -> Result<VarId> {
    Ok(encode_relu_bigm_vars(model, ctx)?.0)
}

fn encode_relu_extended(model: &mut MipModel, ctx: &NeuronCtx) -> Result<VarId> {
    let (l, i) = (ctx.l, ctx.i);
    let tag = ctx.tag();
    let mp = ctx.lb.m_plus[i];
    let mm = ctx.lb.m_minus[i];
    if !mp.is_finite() || !mm.is_finite() {
        return Err(Error::InfiniteBound { layer: l, neuron: i });
    }
    let x = model.add_continuous(format!("x_{tag}"), 0.0, mp)?;
    meta(model, x, l, i, Role::UnitOutput)?;
    let xb = model.add_continuous(format!("xb_{tag}"), 0.0, mm)?;
    meta(model, xb, l, i, Role::Complement)?;
    let z = model.add_binary(format!("z_{tag}"))?;
    meta(model, z, l, i, Role::Indicator)?;

    let mut t = vec![(x, 1.0), (xb, -1.0)];
    t.extend(ctx.affine_terms(-1.0));
    model.add_constraint(format!("ext_split_{tag}_eq2.16a"), &t, Sense::Eq, ctx.bias)?;
    model.add_constraint(format!("ext_pos_{tag}_eq2.16b"), &[(x, 1.0), (z, -mp)], Sense::Le, 0.0)?;
    model.add_constraint(format!("ext_neg_{tag}_eq2.16c"), &[(xb, 1.0), (z, mm)], Sense::Le, mm)?;
    Ok(x)
}

/// (ve1) for `b ≤ 0` and (ve2) for `b > 0`, over the previous layer's
/// indicators. Stable predecessors act as constant indicators.
fn add_valid_inequalities(model: &mut MipModel, ctx: &NeuronCtx) -> Result<()> {
    let (l, i) = (ctx.l, ctx.i);
    let prev_layer = &ctx.net.layers()[l - 2];
    if !matches!(prev_layer, Layer::Dense { activation: Activation::Relu, .. }) {
        return Ok(());
    }
    let Some(zi) = model.var_by_name(&format!("z_l{l}_n{i}")) else {
        return Ok(());
    };
    let b = ctx.bias;
    // Sign of the incoming weights the inequality sums over.
    let positive = b <= 0.0;
    let mut terms = Vec::new();
    for (j, row) in ctx.weights.iter().enumerate() {
        let w = row[i];
        if (positive && w <= 0.0) || (!positive && w >= 0.0) {
            continue;
        }
        match model.var_by_name(&format!("z_l{}_n{j}", l - 1)) {
            Some(zj) => terms.push((zj, -1.0)),
            None => {
                // No indicator: the unit is constant. An active one satisfies
                // the inequality outright; an inactive one contributes 0.
                if ctx.bounds.layer(l - 1).stability[j] != Stability::StablyInactive {
                    return Ok(());
                }
            }
        }
    }
    let tag = ctx.tag();
    if positive {
        terms.push((zi, 1.0));
        model.add_constraint(format!("vi_on_{tag}_eqve1"), &terms, Sense::Le, 0.0)?;
    } else {
        terms.push((zi, -1.0));
        model.add_constraint(format!("vi_off_{tag}_eqve2"), &terms, Sense::Le, -1.0)?;
    }
    Ok(())
}

/// Range of each partition's subset sum `Σ_{j∈S_k} w_j x'_j`.
fn partition_ranges(ctx: &NeuronCtx, groups: &[Vec<usize>]) -> Vec<Interval> {
    groups
        .iter()
        .map(|g| {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for &j in g {
                let w = ctx.weights[j][ctx.i];
                let iv = ctx.prev_box[j];
                if w >= 0.0 {
                    lo += w * iv.lo;
                    hi += w * iv.hi;
                } else {
                    lo += w * iv.hi;
                    hi += w * iv.lo;
                }
            }
            Interval::new(lo, hi)
        })
        .collect()
}

/// Per-partition disjunct bounds `(La, Ua, Lb, Ub)`; the inactive copy
/// carries `Σ s ≤ -b`, the active copy `Σ s ≥ -b`.
type DisjunctBounds = (f64, f64, f64, f64);

fn interval_disjunct_bounds(ranges: &[Interval], b: f64) -> Vec<DisjunctBounds> {
    let sum_lo: f64 = ranges.iter().map(|r| r.lo).sum();
    let sum_hi: f64 = ranges.iter().map(|r| r.hi).sum();
    ranges
        .iter()
        .map(|r| {
            let others_lo = sum_lo - r.lo;
            let others_hi = sum_hi - r.hi;
            (r.lo, r.hi.min(-b - others_lo), r.lo.max(-b - others_hi), r.hi)
        })
        .collect()
}

fn widen(v: f64, dir: f64) -> f64 {
    v + dir * 1e-9 * v.abs().max(1.0)
}

/// LP-based disjunct bounds over the relaxed big-M encoding of the layers
/// before `ctx.l`. Returns `None` for a disjunct whose LP is infeasible.
fn lp_disjunct_bounds(
    ctx: &NeuronCtx,
    groups: &[Vec<usize>],
    fallback: &[DisjunctBounds],
) -> Result<(Vec<DisjunctBounds>, bool, bool)> {
    let prefix_net = Network::new(
        ctx.net.input_dim(),
        ctx.net.input_box().to_vec(),
        ctx.net.layers()[..ctx.l - 1].to_vec(),
    )?;
    let mut pb = ctx.bounds.clone();
    pb.layers.truncate(ctx.l - 1);
    if pb.method == BoundMethod::Serra {
        pb.method = BoundMethod::Bunel;
        crate::bounds::classify_stability(&mut pb);
    }
    let base = encode_network(&prefix_net, &pb, &FormulationSpec::new(ReluFormulation::BigM))?;
    let prev = base.outputs(ctx.l - 1).to_vec();
    let params = SolverParams::default();
    let full: Vec<(VarId, f64)> = prev
        .iter()
        .zip(ctx.weights)
        .filter(|(_, row)| row[ctx.i] != 0.0)
        .map(|(&v, row)| (v, row[ctx.i]))
        .collect();

    let mut out = fallback.to_vec();
    let mut feasible = [true, true];
    for (side, sense) in [Sense::Le, Sense::Ge].into_iter().enumerate() {
        let mut model = base.model.clone();
        model.add_constraint("disjunct_side", &full, sense, -ctx.bias)?;
        for (k, g) in groups.iter().enumerate() {
            let terms: Vec<(VarId, f64)> = g
                .iter()
                .filter(|&&j| ctx.weights[j][ctx.i] != 0.0)
                .map(|&j| (prev[j], ctx.weights[j][ctx.i]))
                .collect();
            let mut vals = [0.0; 2];
            for (d, osense) in [ObjSense::Minimize, ObjSense::Maximize].into_iter().enumerate() {
                model.set_objective(osense, &terms)?;
                let res = solve_lp(&model, &params);
                match res.status {
                    SolveStatus::Optimal => vals[d] = widen(res.objective.unwrap_or(0.0), if d == 0 { -1.0 } else { 1.0 }),
                    SolveStatus::Infeasible => {
                        feasible[side] = false;
                        break;
                    }
                    _ => {
                        let fb = fallback[k];
                        vals = if side == 0 { [fb.0, fb.1] } else { [fb.2, fb.3] };
                        break;
                    }
                }
            }
            if !feasible[side] {
                break;
            }
            let fb = fallback[k];
            let (flo, fhi) = if side == 0 { (fb.0, fb.1) } else { (fb.2, fb.3) };
            let (lo, hi) = (vals[0].max(flo), vals[1].min(fhi));
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (flo, fhi) };
            if side == 0 {
                out[k].0 = lo;
                out[k].1 = hi;
            } else {
                out[k].2 = lo;
                out[k].3 = hi;
            }
        }
    }
    Ok((out, feasible[0], feasible[1]))
}

fn encode_relu_disjunctive(
    model: &mut MipModel,
    ctx: &NeuronCtx,
    k: usize,
    partition_bounds: PartitionBounds,
) -> Result<VarId> {
    let (l, i) = (ctx.l, ctx.i);
    let tag = ctx.tag();
    let n_prev = ctx.prev_vars.len();
    if k > n_prev {
        return Err(Error::PartitionCount {
            layer: l,
            neuron: i,
            k,
            fan_in: n_prev,
        });
    }
    require_finite(ctx.lb.pre[i], l, i)?;
    let groups = partition_indices(n_prev, k);
    let ranges = partition_ranges(ctx, &groups);
    let b = ctx.bias;
    let mut db = interval_disjunct_bounds(&ranges, b);
    let (mut inactive_ok, mut active_ok) = (true, true);
    if partition_bounds == PartitionBounds::Lp && l >= 2 {
        (db, inactive_ok, active_ok) = lp_disjunct_bounds(ctx, &groups, &db)?;
    }

    let x = model.add_continuous(format!("x_{tag}"), 0.0, f64::INFINITY)?;
    meta(model, x, l, i, Role::UnitOutput)?;
    let z = model.add_binary(format!("z_{tag}"))?;
    meta(model, z, l, i, Role::Indicator)?;
    match (inactive_ok, active_ok) {
        (false, true) => model.set_bounds(z, 0.0, 0.0)?,
        (true, false) => model.set_bounds(z, 1.0, 1.0)?,
        _ => {}
    }

    let suffix = |kk: usize| if k == 1 { String::new() } else { format!("_k{kk}") };
    let mut ya = Vec::with_capacity(k);
    let mut yb = Vec::with_capacity(k);
    for (kk, g) in groups.iter().enumerate() {
        let (la, ua, lb, ub) = db[kk];
        let a = model.add_continuous(format!("ya_{tag}{}", suffix(kk)), f64::NEG_INFINITY, f64::INFINITY)?;
        meta(model, a, l, i, Role::DisjunctA { part: kk })?;
        let bb = model.add_continuous(format!("yb_{tag}{}", suffix(kk)), f64::NEG_INFINITY, f64::INFINITY)?;
        meta(model, bb, l, i, Role::DisjunctB { part: kk })?;
        let mut t: Vec<(VarId, f64)> = g
            .iter()
            .filter(|&&j| ctx.weights[j][i] != 0.0)
            .map(|&j| (ctx.prev_vars[j], ctx.weights[j][i]))
            .collect();
        t.push((a, -1.0));
        t.push((bb, -1.0));
        let eq = if k == 1 { "eq2.21a" } else { "eq2.22a" };
        model.add_constraint(format!("dj_split_{tag}{}_{eq}", suffix(kk)), &t, Sense::Eq, 0.0)?;
        let eq = if k == 1 { "eq2.21e" } else { "eq2.22e" };
        model.add_constraint(format!("dj_a_lo_{tag}{}_{eq}", suffix(kk)), &[(a, 1.0), (z, -la)], Sense::Ge, 0.0)?;
        model.add_constraint(format!("dj_a_hi_{tag}{}_{eq}", suffix(kk)), &[(a, 1.0), (z, -ua)], Sense::Le, 0.0)?;
        let eq = if k == 1 { "eq2.21f" } else { "eq2.22f" };
        model.add_constraint(format!("dj_b_lo_{tag}{}_{eq}", suffix(kk)), &[(bb, 1.0), (z, lb)], Sense::Ge, lb)?;
        model.add_constraint(format!("dj_b_hi_{tag}{}_{eq}", suffix(kk)), &[(bb, 1.0), (z, ub)], Sense::Le, ub)?;
        ya.push(a);
        yb.push(bb);
    }
    let p = if k == 1 { "eq2.21" } else { "eq2.22" };
    let mut t: Vec<(VarId, f64)> = ya.iter().map(|&a| (a, 1.0)).collect();
    t.push((z, b));
    model.add_constraint(format!("dj_inactive_{tag}_{p}b"), &t, Sense::Le, 0.0)?;
    let mut t: Vec<(VarId, f64)> = yb.iter().map(|&v| (v, 1.0)).collect();
    t.push((z, -b));
    model.add_constraint(format!("dj_active_{tag}_{p}c"), &t, Sense::Ge, -b)?;
    t.push((x, -1.0));
    model.add_constraint(format!("dj_out_{tag}_{p}d"), &t, Sense::Eq, -b)?;
    Ok(x)
}

fn encode_maxpool(
    model: &mut MipModel,
    l: usize,
    i: usize,
    pool: &[usize],
    prev_vars: &[VarId],
    prev_box: &[Interval],
    out: Interval,
) -> Result<VarId> {
    let tag = format!("l{l}_n{i}");
    for &j in pool {
        require_finite(prev_box[j], l, i)?;
    }
    let x = model.add_continuous(format!("x_{tag}"), out.lo, out.hi)?;
    meta(model, x, l, i, Role::UnitOutput)?;
    let u_max = pool.iter().map(|&j| prev_box[j].hi).fold(f64::NEG_INFINITY, f64::max);
    let mut deltas = Vec::with_capacity(pool.len());
    for (p, &j) in pool.iter().enumerate() {
        let d = model.add_binary(format!("delta_{tag}_p{p}"))?;
        meta(model, d, l, i, Role::PoolIndicator { member: p })?;
        deltas.push((d, 1.0));
        let xj = prev_vars[j];
        model.add_constraint(format!("pool_ge_{tag}_p{p}_eqmaxpool"), &[(x, 1.0), (xj, -1.0)], Sense::Ge, 0.0)?;
        let m = u_max - prev_box[j].lo;
        model.add_constraint(
            format!("pool_le_{tag}_p{p}_eqmaxpool"),
            &[(x, 1.0), (xj, -1.0), (d, m)],
            Sense::Le,
            m,
        )?;
    }
    model.add_constraint(format!("pool_one_{tag}_eqmaxpool"), &deltas, Sense::Eq, 1.0)?;
    Ok(x)
}

fn encode_avgpool(
    model: &mut MipModel,
    l: usize,
    i: usize,
    pool: &[usize],
    prev_vars: &[VarId],
    out: Interval,
) -> Result<VarId> {
    let tag = format!("l{l}_n{i}");
    let x = model.add_continuous(format!("x_{tag}"), out.lo, out.hi)?;
    meta(model, x, l, i, Role::UnitOutput)?;
    let k = pool.len() as f64;
    let mut t = vec![(x, 1.0)];
    t.extend(pool.iter().map(|&j| (prev_vars[j], -1.0 / k)));
    model.add_constraint(format!("avgpool_{tag}_eq2.25"), &t, Sense::Eq, 0.0)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{bounds_interval_bunel, bounds_interval_cheng, bounds_extended_serra};
    use crate::mip::VarKind;

    fn one_neuron(w: f64, b: f64) -> Network {
        Network::new(
            1,
            vec![Interval::new(0.0, 1.0)],
            vec![Layer::dense(vec![vec![w]], vec![b], Activation::Relu)],
        )
        .unwrap()
    }

    fn all_specs() -> Vec<FormulationSpec> {
        vec![
            FormulationSpec::new(ReluFormulation::BigM),
            FormulationSpec::new(ReluFormulation::Extended {
                valid_inequalities: true,
            }),
            FormulationSpec::new(ReluFormulation::Disjunctive {
                partitions: 1,
                partition_bounds: PartitionBounds::Interval,
            }),
            FormulationSpec::new(ReluFormulation::HullCuts {
                max_rounds: 10,
                max_cuts_per_round: 50,
            }),
        ]
    }

    /// Output values on a 0.01 grid of `[0, 2]` that admit an integer-feasible
    /// completion when the single input is fixed to `xin`.
    fn feasible_outputs(net: &Network, enc: &EncodedNetwork, xin: f64) -> Vec<f64> {
        let m = &enc.model;
        let Layer::Dense { weights, bias, .. } = &net.layers()[0] else { unreachable!() };
        let s = weights[0][0] * xin;
        let y = s + bias[0];
        let z = m.var_by_name("z_l1_n0").unwrap();
        let mut found = Vec::new();
        for zv in [0.0, 1.0] {
            for step in 0..=200 {
                let xo = step as f64 * 0.01;
                let mut x = vec![0.0; m.num_vars()];
                x[enc.inputs[0].0] = xin;
                x[z.0] = zv;
                x[enc.layers[0][0].0] = xo;
                for (&v, meta) in m.meta() {
                    x[v.0] = match meta.role {
                        Role::Complement => xo - y,
                        Role::DisjunctA { .. } => if zv > 0.5 { s } else { 0.0 },
                        Role::DisjunctB { .. } => if zv > 0.5 { 0.0 } else { s },
                        _ => x[v.0],
                    };
                }
                if m.max_violation(&x) < 1e-9 && !found.iter().any(|&v: &f64| (v - xo).abs() < 1e-12) {
                    found.push(xo);
                }
            }
        }
        found
    }

    #[test]
    fn fixed_input_forces_relu_value() {
        let net = one_neuron(2.0, -1.0);
        let bounds = bounds_interval_bunel(&net);
        assert_eq!(bounds.layer(1).big_m[0], 1.0);
        for spec in [
            FormulationSpec::new(ReluFormulation::BigM),
            FormulationSpec::new(ReluFormulation::Disjunctive {
                partitions: 1,
                partition_bounds: PartitionBounds::Interval,
            }),
        ] {
            let mut enc = encode_network(&net, &bounds, &spec).unwrap();
            let xin = enc.inputs[0];
            for (v, expect) in [(1.0, 1.0), (0.0, 0.0), (0.75, 0.5), (0.25, 0.0)] {
                enc.model.set_bounds(xin, v, v).unwrap();
                assert_eq!(feasible_outputs(&net, &enc, v), vec![expect], "{:?} at x'={v}", spec.relu);
            }
        }
        let bounds = bounds_extended_serra(&net);
        let mut enc = encode_network(
            &net,
            &bounds,
            &FormulationSpec::new(ReluFormulation::Extended {
                valid_inequalities: false,
            }),
        )
        .unwrap();
        let xin = enc.inputs[0];
        enc.model.set_bounds(xin, 1.0, 1.0).unwrap();
        assert_eq!(feasible_outputs(&net, &enc, 1.0), vec![1.0]);
    }

    #[test]
    fn stably_inactive_unit_has_no_binary_when_simplified() {
        let net = one_neuron(1.0, -3.0);
        let bounds = bounds_interval_bunel(&net);
        let mut spec = FormulationSpec::new(ReluFormulation::BigM);
        spec.simplify_stable = true;
        let enc = encode_network(&net, &bounds, &spec).unwrap();
        assert_eq!(enc.model.stats().binary, 0);
        let x = enc.model.variable(enc.layers[0][0]);
        assert_eq!((x.lower, x.upper), (0.0, 0.0));
    }

    #[test]
    fn cheng_drops_stable_units() {
        let net = one_neuron(2.0, 0.5);
        let bounds = bounds_interval_cheng(&net);
        let enc = encode_network(&net, &bounds, &FormulationSpec::new(ReluFormulation::BigM)).unwrap();
        assert_eq!(enc.model.stats().binary, 0);
        assert!(enc.model.constraint_by_name("relu_active_l1_n0_eq2.7").is_some());
    }

    #[test]
    fn names_follow_the_scheme() {
        let net = one_neuron(2.0, -1.0);
        let bounds = bounds_interval_bunel(&net);
        let enc = encode_network(&net, &bounds, &FormulationSpec::new(ReluFormulation::BigM)).unwrap();
        for name in ["x_l0_n0", "x_l1_n0", "z_l1_n0"] {
            assert!(enc.model.var_by_name(name).is_some(), "{name}");
        }
        for name in ["relu_lb_l1_n0_eq2.8b", "relu_ub_l1_n0_eq2.8c", "relu_gate_l1_n0_eq2.8d"] {
            assert!(enc.model.constraint_by_name(name).is_some(), "{name}");
        }
        assert_eq!(enc.model.variable(enc.model.var_by_name("z_l1_n0").unwrap()).kind, VarKind::Binary);
    }

    #[test]
    fn partitions_are_contiguous() {
        assert_eq!(partition_indices(4, 2), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(partition_indices(5, 2), vec![vec![0, 1, 2], vec![3, 4]]);
        assert_eq!(partition_indices(3, 3), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn partition_count_above_fan_in_is_rejected() {
        let net = one_neuron(2.0, -1.0);
        let bounds = bounds_interval_bunel(&net);
        let spec = FormulationSpec::new(ReluFormulation::Disjunctive {
            partitions: 2,
            partition_bounds: PartitionBounds::Interval,
        });
        assert!(matches!(
            encode_network(&net, &bounds, &spec),
            Err(Error::PartitionCount { k: 2, fan_in: 1, .. })
        ));
    }

    #[test]
    fn serra_requires_extended() {
        let net = one_neuron(2.0, -1.0);
        let bounds = bounds_extended_serra(&net);
        assert!(encode_network(&net, &bounds, &FormulationSpec::new(ReluFormulation::BigM)).is_err());
    }

    #[test]
    fn zero_weight_unit_is_constant() {
        let net = one_neuron(0.0, 0.7);
        let bounds = bounds_interval_bunel(&net);
        let enc = encode_network(&net, &bounds, &FormulationSpec::new(ReluFormulation::BigM)).unwrap();
        let x = enc.model.variable(enc.layers[0][0]);
        assert_eq!((x.lower, x.upper), (0.7, 0.7));
    }

    #[test]
    fn forward_assignment_is_feasible_for_every_formulation() {
        let net = Network::new(
            2,
            vec![Interval::new(0.0, 1.0); 2],
            vec![
                Layer::dense(vec![vec![1.0, -1.0, 0.5], vec![-1.0, 1.0, 0.5]], vec![0.0, 0.1, -0.4], Activation::Relu),
                Layer::MaxPool {
                    pools: vec![vec![0, 1], vec![2]],
                },
                Layer::dense(vec![vec![1.0, -0.5], vec![0.3, 2.0]], vec![-0.2, 0.0], Activation::Relu),
                Layer::AvgPool { pools: vec![vec![0, 1]] },
            ],
        )
        .unwrap();
        for spec in all_specs() {
            let bounds = if matches!(spec.relu, ReluFormulation::Extended { .. }) {
                bounds_extended_serra(&net)
            } else {
                bounds_interval_bunel(&net)
            };
            let enc = encode_network(&net, &bounds, &spec).unwrap();
            for x0 in [[0.0, 0.0], [1.0, 0.0], [0.3, 0.9], [1.0, 1.0], [0.5, 0.5]] {
                let x = enc.assignment_from_forward(&net, &x0).unwrap();
                assert!(enc.model.max_violation(&x) < 1e-9, "{:?} at {x0:?}", spec.relu);
                assert_eq!(enc.model.max_fractionality(&x), 0.0);
            }
        }
    }

    #[test]
    fn hull_plan_is_recorded() {
        let net = one_neuron(2.0, -1.0);
        let bounds = bounds_interval_bunel(&net);
        let spec = all_specs()[3];
        let enc = encode_network(&net, &bounds, &spec).unwrap();
        let plan = enc.model.hull_cuts().unwrap();
        assert_eq!(plan.neurons.len(), 1);
        assert_eq!(plan.neurons[0].weights, vec![2.0]);
        assert_eq!(plan.max_cuts_per_round, 50);
    }
}
