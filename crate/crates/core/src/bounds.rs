//! Neuron bounds: interval arithmetic (two big-M conventions), LP-based
//! tightening, and the M⁺/M⁻ propagation used by the extended formulation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encodings::{encode_network, FormulationSpec, ReluFormulation};
use crate::error::{Error, Result};
use crate::mip::ObjSense;
use crate::network::{Activation, Activations, Interval, Layer, Network};
use crate::solver::{solve_lp, solve_mip, SolveStatus, SolverParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    StablyActive,
    StablyInactive,
    Unstable,
}

impl Stability {
    pub fn of(pre: Interval) -> Self {
        if pre.hi <= 0.0 {
            Stability::StablyInactive
        } else if pre.lo >= 0.0 {
            Stability::StablyActive
        } else {
            Stability::Unstable
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    Bunel,
    Cheng,
    Tjeng,
    Serra,
}

impl std::str::FromStr for BoundMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bunel" => Ok(BoundMethod::Bunel),
            "cheng" => Ok(BoundMethod::Cheng),
            "tjeng" => Ok(BoundMethod::Tjeng),
            "serra" => Ok(BoundMethod::Serra),
            other => Err(Error::Parse(format!("unknown bound method '{other}'"))),
        }
    }
}

/// Bounds of one layer. For pooling layers `pre` equals `post`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBounds {
    pub pre: Vec<Interval>,
    pub post: Vec<Interval>,
    pub big_m: Vec<f64>,
    pub m_plus: Vec<f64>,
    pub m_minus: Vec<f64>,
    pub stability: Vec<Stability>,
}

impl LayerBounds {
    fn from_pre(pre: Vec<Interval>, post: Vec<Interval>) -> Self {
        let n = pre.len();
        let mut lb = LayerBounds {
            pre,
            post,
            big_m: vec![0.0; n],
            m_plus: vec![0.0; n],
            m_minus: vec![0.0; n],
            stability: vec![Stability::Unstable; n],
        };
        for i in 0..n {
            lb.m_plus[i] = lb.pre[i].hi.max(0.0);
            lb.m_minus[i] = (-lb.pre[i].lo).max(0.0);
        }
        lb
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub method: BoundMethod,
    pub input: Vec<Interval>,
    /// `layers[l - 1]` holds layer `l`.
    pub layers: Vec<LayerBounds>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BoundSet {
    /// Bounds of layer `l` (1-based).
    pub fn layer(&self, l: usize) -> &LayerBounds {
        &self.layers[l - 1]
    }

    /// Output interval of every unit of layer `l`; `l = 0` is the input box.
    pub fn post(&self, l: usize) -> &[Interval] {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].post
        }
    }

    /// Whether every pre- and post-activation in `acts` lies in its interval.
    pub fn contains(&self, acts: &Activations, tol: f64) -> bool {
        self.first_violation(acts, tol).is_none()
    }

    /// `(layer, neuron)` of the first value outside its interval.
    pub fn first_violation(&self, acts: &Activations, tol: f64) -> Option<(usize, usize)> {
        for (l, (lb, la)) in self.layers.iter().zip(&acts.layers).enumerate() {
            for i in 0..lb.pre.len() {
                if !lb.pre[i].contains(la.pre[i], tol) || !lb.post[i].contains(la.post[i], tol) {
                    return Some((l + 1, i));
                }
            }
        }
        None
    }

    /// Number of unstable dense ReLU neurons.
    pub fn unstable_count(&self, net: &Network) -> usize {
        net.layers()
            .iter()
            .zip(&self.layers)
            .filter(|(layer, _)| matches!(layer, Layer::Dense { activation: Activation::Relu, .. }))
            .map(|(_, lb)| lb.stability.iter().filter(|s| **s == Stability::Unstable).count())
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bound serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks that the set has the shape of `net`.
    pub fn check_shape(&self, net: &Network) -> Result<()> {
        if self.input.len() != net.input_dim() || self.layers.len() != net.depth() {
            return Err(Error::InvalidFormulation("bound set does not match the network".into()));
        }
        for (l, lb) in self.layers.iter().enumerate() {
            let n = net.width(l + 1);
            let lens = [
                lb.pre.len(),
                lb.post.len(),
                lb.big_m.len(),
                lb.m_plus.len(),
                lb.m_minus.len(),
                lb.stability.len(),
            ];
            if lens.iter().any(|&k| k != n) {
                return Err(Error::DimensionMismatch {
                    layer: l + 1,
                    detail: format!("bounds have the wrong width (expected {n})"),
                });
            }
        }
        Ok(())
    }
}

pub fn compute_bounds(net: &Network, method: BoundMethod) -> Result<BoundSet> {
    match method {
        BoundMethod::Bunel => Ok(bounds_interval_bunel(net)),
        BoundMethod::Cheng => Ok(bounds_interval_cheng(net)),
        BoundMethod::Tjeng => bounds_lp_tjeng(net, &bounds_interval_bunel(net), false),
        BoundMethod::Serra => Ok(bounds_extended_serra(net)),
    }
}

fn post_of(activation: Activation, pre: Interval) -> Interval {
    // All supported activations are monotone non-decreasing.
    Interval::new(activation.apply(pre.lo), activation.apply(pre.hi))
}

fn pool_interval(layer: &Layer, prev: &[Interval]) -> Vec<Interval> {
    match layer {
        Layer::MaxPool { pools } => pools
            .iter()
            .map(|p| {
                let lo = p.iter().map(|&j| prev[j].lo).fold(f64::NEG_INFINITY, f64::max);
                let hi = p.iter().map(|&j| prev[j].hi).fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo, hi)
            })
            .collect(),
        Layer::AvgPool { pools } => pools
            .iter()
            .map(|p| {
                let k = p.len() as f64;
                let lo = p.iter().map(|&j| prev[j].lo).sum::<f64>() / k;
                let hi = p.iter().map(|&j| prev[j].hi).sum::<f64>() / k;
                Interval::new(lo, hi)
            })
            .collect(),
        Layer::Dense { .. } => unreachable!("dense layers are handled by the caller"),
    }
}

/// Interval image of `w·x + b` over the box `prev`.
pub(crate) fn affine_range(weights: &[Vec<f64>], bias: &[f64], prev: &[Interval], i: usize) -> Interval {
    let mut lo = bias[i];
    let mut hi = bias[i];
    for (row, iv) in weights.iter().zip(prev) {
        let w = row[i];
        if w >= 0.0 {
            lo += w * iv.lo;
            hi += w * iv.hi;
        } else {
            lo += w * iv.hi;
            hi += w * iv.lo;
        }
    }
    Interval::new(lo, hi)
}

fn interval_pass(net: &Network, method: BoundMethod) -> BoundSet {
    let mut layers: Vec<LayerBounds> = Vec::with_capacity(net.depth());
    let input = net.input_box().to_vec();
    for layer in net.layers() {
        let prev = layers.last().map(|lb| lb.post.as_slice()).unwrap_or(&input);
        let lb = match layer {
            Layer::Dense {
                weights,
                bias,
                activation,
            } => {
                let pre: Vec<Interval> = (0..bias.len()).map(|i| affine_range(weights, bias, prev, i)).collect();
                let post = pre.iter().map(|&p| post_of(*activation, p)).collect();
                LayerBounds::from_pre(pre, post)
            }
            _ => {
                let out = pool_interval(layer, prev);
                LayerBounds::from_pre(out.clone(), out)
            }
        };
        layers.push(lb);
    }
    let mut set = BoundSet {
        method,
        input,
        layers,
        warnings: Vec::new(),
    };
    classify_stability(&mut set);
    set
}

/// Interval arithmetic with `M = max(-L, U)` per neuron.
pub fn bounds_interval_bunel(net: &Network) -> BoundSet {
    interval_pass(net, BoundMethod::Bunel)
}

/// Interval arithmetic with `M = U` for unstable neurons and `M = 0` for
/// stable ones, whose big-M constraints encoders may drop.
pub fn bounds_interval_cheng(net: &Network) -> BoundSet {
    interval_pass(net, BoundMethod::Cheng)
}

/// Sets stability tags from `pre` and refreshes `big_m` per the set's method.
/// Idempotent.
pub fn classify_stability(set: &mut BoundSet) {
    let method = set.method;
    for lb in &mut set.layers {
        for i in 0..lb.pre.len() {
            let pre = lb.pre[i];
            lb.stability[i] = Stability::of(pre);
            lb.big_m[i] = match method {
                BoundMethod::Cheng => match lb.stability[i] {
                    Stability::Unstable => pre.hi,
                    _ => 0.0,
                },
                BoundMethod::Serra => lb.m_plus[i].max(lb.m_minus[i]),
                BoundMethod::Bunel | BoundMethod::Tjeng => (-pre.lo).max(pre.hi).max(0.0),
            };
        }
    }
}

/// M⁺/M⁻ propagation. Each layer output is tracked as `[-om, op]` with
/// `op, om ≥ 0`; for ReLU outputs `om = 0`, which gives the textbook recursion.
/// Pre-activation intervals are stored as `[-M⁻, M⁺]`.
pub fn bounds_extended_serra(net: &Network) -> BoundSet {
    let input = net.input_box().to_vec();
    let mut op: Vec<f64> = input.iter().map(|iv| iv.hi.max(0.0)).collect();
    let mut om: Vec<f64> = input.iter().map(|iv| (-iv.lo).max(0.0)).collect();
    let mut layers = Vec::with_capacity(net.depth());
    for layer in net.layers() {
        match layer {
            Layer::Dense {
                weights,
                bias,
                activation,
            } => {
                let n = bias.len();
                let mut mp = vec![0.0; n];
                let mut mm = vec![0.0; n];
                for i in 0..n {
                    let mut up = bias[i];
                    let mut dn = -bias[i];
                    for (j, row) in weights.iter().enumerate() {
                        let w = row[i];
                        up += (w * op[j]).max(0.0) + (-w * om[j]).max(0.0);
                        dn += (-w * op[j]).max(0.0) + (w * om[j]).max(0.0);
                    }
                    mp[i] = up.max(0.0);
                    mm[i] = dn.max(0.0);
                }
                let pre: Vec<Interval> = (0..n).map(|i| Interval::new(-mm[i], mp[i])).collect();
                let post: Vec<Interval> = pre.iter().map(|&p| post_of(*activation, p)).collect();
                op = post.iter().map(|iv| iv.hi.max(0.0)).collect();
                om = post.iter().map(|iv| (-iv.lo).max(0.0)).collect();
                let mut lb = LayerBounds::from_pre(pre, post);
                lb.m_plus = mp;
                lb.m_minus = mm;
                layers.push(lb);
            }
            _ => {
                let prev: Vec<Interval> = op.iter().zip(&om).map(|(&p, &m)| Interval::new(-m, p)).collect();
                let out = pool_interval(layer, &prev);
                op = out.iter().map(|iv| iv.hi.max(0.0)).collect();
                om = out.iter().map(|iv| (-iv.lo).max(0.0)).collect();
                layers.push(LayerBounds::from_pre(out.clone(), out));
            }
        }
    }
    let mut set = BoundSet {
        method: BoundMethod::Serra,
        input,
        layers,
        warnings: Vec::new(),
    };
    classify_stability(&mut set);
    set
}

/// Optimization-based tightening. For each dense layer in order, every
/// neuron's pre-activation is minimized and maximized over the big-M
/// encoding of the preceding layers (LP relaxation, or the MIP itself when
/// `exact` is set) and intersected with the seed.
pub fn bounds_lp_tjeng(net: &Network, seed: &BoundSet, exact: bool) -> Result<BoundSet> {
    seed.check_shape(net)?;
    let mut cur = seed.clone();
    cur.method = BoundMethod::Tjeng;
    cur.warnings.clear();
    classify_stability(&mut cur);
    let params = SolverParams::default();

    for l in 1..=net.depth() {
        let layer = &net.layers()[l - 1];
        match layer {
            Layer::Dense {
                weights,
                bias,
                activation,
            } => {
                if l > 1 {
                    let prefix = Network::new(net.input_dim(), net.input_box().to_vec(), net.layers()[..l - 1].to_vec())?;
                    let mut pb = cur.clone();
                    pb.layers.truncate(l - 1);
                    let spec = FormulationSpec {
                        relu: ReluFormulation::BigM,
                        simplify_stable: true,
                    };
                    let enc = encode_network(&prefix, &pb, &spec)?;
                    let inputs = enc.outputs(l - 1).to_vec();
                    for i in 0..bias.len() {
                        let terms: Vec<_> = inputs
                            .iter()
                            .zip(weights)
                            .filter(|(_, row)| row[i] != 0.0)
                            .map(|(&v, row)| (v, row[i]))
                            .collect();
                        let mut model = enc.model.clone();
                        let mut range = [0.0f64; 2];
                        let mut ok = true;
                        for (k, sense) in [ObjSense::Minimize, ObjSense::Maximize].into_iter().enumerate() {
                            model.set_objective(sense, &terms)?;
                            let res = if exact {
                                solve_mip(&model, &params)
                            } else {
                                solve_lp(&model, &params)
                            };
                            match res.status {
                                SolveStatus::Optimal => {
                                    // A MIP bound is only valid up to the gap; use the dual side.
                                    range[k] = if exact { res.best_bound } else { res.objective.unwrap_or(0.0) };
                                }
                                other => {
                                    ok = false;
                                    cur.warnings.push(format!(
                                        "layer {l} neuron {i}: {} solve returned {other:?}; kept seed interval",
                                        if k == 0 { "lower" } else { "upper" }
                                    ));
                                    break;
                                }
                            }
                        }
                        if ok {
                            let lp = Interval::new(range[0] + bias[i], range[1] + bias[i]);
                            let seeded = seed.layers[l - 1].pre[i];
                            let mut tight = seeded.intersect(&lp);
                            if !tight.is_valid() {
                                // Round-off pushed the LP range past the seed; keep the seed.
                                tight = seeded;
                            }
                            cur.layers[l - 1].pre[i] = tight;
                        }
                    }
                }
                let lb = &mut cur.layers[l - 1];
                for i in 0..lb.pre.len() {
                    lb.post[i] = post_of(*activation, lb.pre[i]);
                    lb.m_plus[i] = lb.pre[i].hi.max(0.0);
                    lb.m_minus[i] = (-lb.pre[i].lo).max(0.0);
                }
                classify_stability(&mut cur);
            }
            _ => {
                let out = pool_interval(layer, cur.post(l - 1));
                let lb = &mut cur.layers[l - 1];
                for i in 0..out.len() {
                    let t = seed.layers[l - 1].post[i].intersect(&out[i]);
                    let t = if t.is_valid() { t } else { seed.layers[l - 1].post[i] };
                    lb.pre[i] = t;
                    lb.post[i] = t;
                }
            }
        }
    }
    classify_stability(&mut cur);
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weights: Vec<Vec<f64>>, bias: f64, boxes: Vec<Interval>) -> Network {
        Network::new(boxes.len(), boxes, vec![Layer::dense(weights, vec![bias], Activation::Relu)]).unwrap()
    }

    fn unit_box(n: usize) -> Vec<Interval> {
        vec![Interval::new(0.0, 1.0); n]
    }

    #[test]
    fn bunel_single_neuron() {
        let net = single(vec![vec![1.0], vec![-1.0]], 0.0, unit_box(2));
        let b = bounds_interval_bunel(&net);
        assert_eq!(b.layer(1).pre[0], Interval::new(-1.0, 1.0));
        assert_eq!(b.layer(1).post[0], Interval::new(0.0, 1.0));
        assert_eq!(b.layer(1).big_m[0], 1.0);
        assert_eq!(b.layer(1).stability[0], Stability::Unstable);
    }

    #[test]
    fn constant_neurons() {
        let net = single(vec![vec![0.0], vec![0.0]], 3.0, unit_box(2));
        let b = bounds_interval_bunel(&net);
        assert_eq!(b.layer(1).pre[0], Interval::point(3.0));
        assert_eq!(b.layer(1).stability[0], Stability::StablyActive);
        let net = single(vec![vec![0.0], vec![0.0]], -3.0, unit_box(2));
        let b = bounds_interval_bunel(&net);
        assert_eq!(b.layer(1).pre[0], Interval::point(-3.0));
        assert_eq!(b.layer(1).stability[0], Stability::StablyInactive);
    }

    #[test]
    fn cheng_single_neuron_and_stable_case() {
        let net = single(vec![vec![1.0], vec![-1.0]], 0.0, unit_box(2));
        let b = bounds_interval_cheng(&net);
        assert_eq!(b.layer(1).pre[0], Interval::new(-1.0, 1.0));
        assert_eq!(b.layer(1).big_m[0], 1.0);

        let net = single(vec![vec![2.0]], 0.0, vec![Interval::new(0.5, 1.0)]);
        let b = bounds_interval_cheng(&net);
        assert_eq!(b.layer(1).pre[0], Interval::new(1.0, 2.0));
        assert_eq!(b.layer(1).stability[0], Stability::StablyActive);
        assert_eq!(b.layer(1).big_m[0], 0.0);
    }

    #[test]
    fn zero_width_box_gives_bias() {
        let net = single(vec![vec![5.0]], 0.25, vec![Interval::point(0.0)]);
        assert_eq!(bounds_interval_cheng(&net).layer(1).pre[0], Interval::point(0.25));
    }

    #[test]
    fn serra_examples() {
        let net = single(vec![vec![1.0], vec![-1.0]], 0.0, unit_box(2));
        let b = bounds_extended_serra(&net);
        assert_eq!(b.layer(1).m_plus[0], 1.0);
        assert_eq!(b.layer(1).m_minus[0], 1.0);

        let net = single(vec![vec![0.5], vec![2.0]], 0.5, unit_box(2));
        assert_eq!(bounds_extended_serra(&net).layer(1).m_minus[0], 0.0);

        let net = single(vec![vec![0.0], vec![0.0]], 0.0, unit_box(2));
        let b = bounds_extended_serra(&net);
        assert_eq!((b.layer(1).m_plus[0], b.layer(1).m_minus[0]), (0.0, 0.0));
    }

    #[test]
    fn stability_boundaries() {
        assert_eq!(Stability::of(Interval::new(-1.0, 1.0)), Stability::Unstable);
        assert_eq!(Stability::of(Interval::new(0.2, 3.0)), Stability::StablyActive);
        assert_eq!(Stability::of(Interval::new(-3.0, 0.0)), Stability::StablyInactive);
    }

    #[test]
    fn classify_is_idempotent() {
        let net = single(vec![vec![1.0], vec![-1.0]], 0.0, unit_box(2));
        let mut b = bounds_interval_cheng(&net);
        let before = b.clone();
        classify_stability(&mut b);
        assert_eq!(b, before);
    }

    #[test]
    fn pool_bounds() {
        let net = Network::new(
            3,
            vec![Interval::new(0.0, 1.0), Interval::new(-2.0, 0.5), Interval::new(0.25, 0.75)],
            vec![
                Layer::MaxPool {
                    pools: vec![vec![0, 1, 2]],
                },
            ],
        )
        .unwrap();
        assert_eq!(bounds_interval_bunel(&net).layer(1).post[0], Interval::new(0.25, 1.0));
        let net = Network::new(
            2,
            vec![Interval::new(0.0, 1.0), Interval::new(-1.0, 0.0)],
            vec![Layer::AvgPool { pools: vec![vec![0, 1]] }],
        )
        .unwrap();
        assert_eq!(bounds_interval_bunel(&net).layer(1).post[0], Interval::new(-0.5, 0.5));
    }

    #[test]
    fn json_round_trip() {
        let net = single(vec![vec![1.0], vec![-0.3]], 0.1, unit_box(2));
        let b = bounds_interval_bunel(&net);
        assert_eq!(BoundSet::from_json(&b.to_json()).unwrap(), b);
    }

    #[test]
    fn tjeng_single_layer_equals_seed() {
        let net = single(vec![vec![1.0], vec![-1.0]], 0.0, unit_box(2));
        let seed = bounds_interval_bunel(&net);
        let t = bounds_lp_tjeng(&net, &seed, false).unwrap();
        assert_eq!(t.layer(1).pre, seed.layer(1).pre);
    }
}
