//! Feed-forward networks: representation, file I/O and the exact forward pass.
//!
//! Weights are stored row-major as `weights[j][i]`, the coefficient from unit `j`
//! of the previous layer to unit `i` of this layer, with an explicit bias vector.
//! The forward pass here is the ground truth every encoding is checked against.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pre-activations this far below zero still count as non-negative for the
/// discrete activations. Weights decoded from an LP solution carry round-off
/// of this order; the training encoders keep a margin of `epsilon` (default
/// 1e-4) on the inactive side, so the two never overlap.
pub const STEP_TOLERANCE: f64 = 1e-9;

/// A closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn is_valid(&self) -> bool {
        self.lo <= self.hi
    }

    pub fn relu(&self) -> Self {
        Self::new(self.lo.max(0.0), self.hi.max(0.0))
    }

    /// Intersection; if the two do not overlap the result is the point
    /// closest to `self` inside `other`.
    pub fn intersect(&self, other: &Interval) -> Self {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Self::new(lo, hi)
        } else {
            let p = lo.min(other.hi).max(other.lo);
            Self::point(p)
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(v: Interval) -> Self {
        [v.lo, v.hi]
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    /// Heaviside step: 1 when the pre-activation is non-negative, else 0.
    Step,
    /// Sign: +1 when the pre-activation is non-negative, else -1.
    Sign,
}

impl Activation {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Activation::Relu => y.max(0.0),
            Activation::Linear => y,
            Activation::Step => {
                if y >= -STEP_TOLERANCE {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sign => {
                if y >= -STEP_TOLERANCE {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layer {
    Dense {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
        activation: Activation,
    },
    MaxPool {
        pools: Vec<Vec<usize>>,
    },
    AvgPool {
        pools: Vec<Vec<usize>>,
    },
}

impl Layer {
    /// Dense layer from `weights[j][i]` (input `j` to unit `i`).
    pub fn dense(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Self {
        Layer::Dense {
            weights,
            bias,
            activation,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Layer::Dense { bias, .. } => bias.len(),
            Layer::MaxPool { pools } | Layer::AvgPool { pools } => pools.len(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Layer::Dense { .. })
    }

    /// Incoming weight vector of unit `i` of a dense layer.
    pub fn column(&self, i: usize) -> Option<Vec<f64>> {
        match self {
            Layer::Dense { weights, .. } => Some(weights.iter().map(|row| row[i]).collect()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum InputBoxDoc {
    Broadcast([f64; 2]),
    PerInput(Vec<Interval>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDoc {
    input_dim: usize,
    input_box: InputBoxDoc,
    layers: Vec<Layer>,
}

/// A validated feed-forward network. Layers are indexed from 1 in names and
/// documents (layer 0 is the input), and from 0 in `layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct Network {
    input_dim: usize,
    input_box: Vec<Interval>,
    layers: Vec<Layer>,
}

impl TryFrom<NetworkDoc> for Network {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        let input_box = match doc.input_box {
            InputBoxDoc::Broadcast(pair) => vec![Interval::from(pair); doc.input_dim],
            InputBoxDoc::PerInput(v) => v,
        };
        Network::new(doc.input_dim, input_box, doc.layers)
    }
}

impl From<Network> for NetworkDoc {
    fn from(net: Network) -> Self {
        NetworkDoc {
            input_dim: net.input_dim,
            input_box: InputBoxDoc::PerInput(net.input_box),
            layers: net.layers,
        }
    }
}

impl Network {
    pub fn new(input_dim: usize, input_box: Vec<Interval>, layers: Vec<Layer>) -> Result<Self> {
        let net = Self {
            input_dim,
            input_box,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidNetwork("input_dim must be positive".into()));
        }
        if self.input_box.len() != self.input_dim {
            return Err(Error::InvalidNetwork(format!(
                "input_box has {} entries, expected {}",
                self.input_box.len(),
                self.input_dim
            )));
        }
        for (j, iv) in self.input_box.iter().enumerate() {
            if !iv.lo.is_finite() || !iv.hi.is_finite() || !iv.is_valid() {
                return Err(Error::Interval {
                    what: format!("input {j}"),
                    lo: iv.lo,
                    hi: iv.hi,
                });
            }
        }
        let mut prev = self.input_dim;
        for (idx, layer) in self.layers.iter().enumerate() {
            let l = idx + 1;
            match layer {
                Layer::Dense { weights, bias, .. } => {
                    if weights.len() != prev {
                        return Err(Error::DimensionMismatch {
                            layer: l,
                            detail: format!(
                                "weights have {} rows but the previous layer has {} outputs",
                                weights.len(),
                                prev
                            ),
                        });
                    }
                    if let Some((j, row)) =
                        weights.iter().enumerate().find(|(_, r)| r.len() != bias.len())
                    {
                        return Err(Error::DimensionMismatch {
                            layer: l,
                            detail: format!(
                                "weight row {} has {} columns but bias has length {}",
                                j,
                                row.len(),
                                bias.len()
                            ),
                        });
                    }
                    let finite = weights.iter().flatten().chain(bias.iter()).all(|v| v.is_finite());
                    if !finite {
                        return Err(Error::InvalidNetwork(format!(
                            "layer {l} has non-finite parameters"
                        )));
                    }
                }
                Layer::MaxPool { pools } | Layer::AvgPool { pools } => {
                    let mut seen = vec![false; prev];
                    for (p, pool) in pools.iter().enumerate() {
                        if pool.is_empty() {
                            return Err(Error::DimensionMismatch {
                                layer: l,
                                detail: format!("pool {p} is empty"),
                            });
                        }
                        for &j in pool {
                            if j >= prev {
                                return Err(Error::DimensionMismatch {
                                    layer: l,
                                    detail: format!(
                                        "pool {p} references input {j} but the previous layer has {prev} outputs"
                                    ),
                                });
                            }
                            if seen[j] {
                                return Err(Error::DimensionMismatch {
                                    layer: l,
                                    detail: format!("input {j} appears in more than one pool"),
                                });
                            }
                            seen[j] = true;
                        }
                    }
                    if let Some(j) = seen.iter().position(|s| !s) {
                        return Err(Error::DimensionMismatch {
                            layer: l,
                            detail: format!("input {j} is not covered by any pool"),
                        });
                    }
                }
            }
            prev = layer.output_dim();
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input_box(&self) -> &[Interval] {
        &self.input_box
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of layers `L` (excluding the input).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Output width of layer `l` (`l = 0` is the input).
    pub fn width(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.layers[l - 1].output_dim()
        }
    }

    pub fn output_dim(&self) -> usize {
        self.width(self.depth())
    }

    /// Replace the input box, keeping the layers.
    pub fn with_input_box(&self, input_box: Vec<Interval>) -> Result<Self> {
        Network::new(self.input_dim, input_box, self.layers.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Network::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Exact forward pass. Inputs outside the box are evaluated as given.
    pub fn forward(&self, x0: &[f64]) -> Result<Activations> {
        if x0.len() != self.input_dim {
            return Err(Error::InputLength {
                expected: self.input_dim,
                got: x0.len(),
            });
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut prev: Vec<f64> = x0.to_vec();
        for layer in &self.layers {
            let (pre, post) = match layer {
                Layer::Dense {
                    weights,
                    bias,
                    activation,
                } => {
                    let mut y = bias.clone();
                    for (xj, row) in prev.iter().zip(weights) {
                        for (yi, w) in y.iter_mut().zip(row) {
                            *yi += w * xj;
                        }
                    }
                    let x = y.iter().map(|&v| activation.apply(v)).collect();
                    (y, x)
                }
                Layer::MaxPool { pools } => {
                    let x: Vec<f64> = pools
                        .iter()
                        .map(|p| p.iter().map(|&j| prev[j]).fold(f64::NEG_INFINITY, f64::max))
                        .collect();
                    (x.clone(), x)
                }
                Layer::AvgPool { pools } => {
                    let x: Vec<f64> = pools
                        .iter()
                        .map(|p| {
                            let first = prev[p[0]];
                            if p.iter().all(|&j| prev[j] == first) {
                                first
                            } else {
                                p.iter().map(|&j| prev[j]).sum::<f64>() / p.len() as f64
                            }
                        })
                        .collect();
                    (x.clone(), x)
                }
            };
            prev = post.clone();
            layers.push(LayerActivation { pre, post });
        }
        Ok(Activations {
            input: x0.to_vec(),
            layers,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivation {
    /// Pre-activation `y` for dense layers; the pooled value for pooling layers.
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub input: Vec<f64>,
    pub layers: Vec<LayerActivation>,
}

impl Activations {
    /// Post-activation values of layer `l` (`l = 0` is the input).
    pub fn post(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].post
        }
    }

    pub fn output(&self) -> &[f64] {
        self.post(self.layers.len())
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

/// Softmax for reporting class probabilities; never used inside a model.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_two_one() -> Network {
        Network::new(
            2,
            vec![Interval::new(0.0, 1.0); 2],
            vec![
                Layer::dense(
                    vec![vec![1.0, -1.0], vec![0.5, 2.0]],
                    vec![0.0, -0.5],
                    Activation::Relu,
                ),
                Layer::dense(vec![vec![1.0], vec![1.0]], vec![0.25], Activation::Linear),
            ],
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_preserves_network() {
        let net = two_two_one();
        let text = net.to_json();
        let back = Network::from_json(&text).unwrap();
        assert_eq!(net, back);
        assert_eq!(back.depth(), 2);
    }

    #[test]
    fn scalar_input_box_is_broadcast() {
        let text = r#"{"input_dim": 3, "input_box": [-1, 2],
            "layers": [{"kind": "dense", "weights": [[1],[1],[1]], "bias": [0], "activation": "relu"}]}"#;
        let net = Network::from_json(text).unwrap();
        assert_eq!(net.input_box(), &[Interval::new(-1.0, 2.0); 3]);
    }

    #[test]
    fn weight_rows_must_match_previous_width() {
        let text = r#"{"input_dim": 2, "input_box": [0, 1], "layers": [
            {"kind": "dense", "weights": [[1,0],[0,1]], "bias": [0,0], "activation": "relu"},
            {"kind": "dense", "weights": [[1,0],[0,1],[1,1]], "bias": [0,0], "activation": "relu"},
            {"kind": "dense", "weights": [[1],[1],[1],[1]], "bias": [0], "activation": "linear"}]}"#;
        match Network::from_json(text) {
            Err(Error::DimensionMismatch { layer, .. }) => assert_eq!(layer, 2),
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn inverted_input_interval_is_rejected() {
        let r = Network::new(
            1,
            vec![Interval::new(0.5, 0.2)],
            vec![Layer::dense(vec![vec![1.0]], vec![0.0], Activation::Relu)],
        );
        assert!(matches!(r, Err(Error::Interval { .. })));
        let text = r#"{"input_dim": 1, "input_box": [[0.5, 0.2]], "layers": []}"#;
        assert!(matches!(Network::from_json(text), Err(Error::Interval { .. })));
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(Network::from_json("{ not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn relu_of_negative_is_zero() {
        let net = Network::new(
            2,
            vec![Interval::new(0.0, 1.0); 2],
            vec![Layer::dense(vec![vec![1.0], vec![-1.0]], vec![0.0], Activation::Relu)],
        )
        .unwrap();
        let act = net.forward(&[0.0, 1.0]).unwrap();
        assert_eq!(act.layers[0].pre, vec![-1.0]);
        assert_eq!(act.output(), &[0.0]);
    }

    #[test]
    fn maxpool_returns_pool_maximum() {
        let net = Network::new(
            3,
            vec![Interval::new(0.0, 1.0); 3],
            vec![Layer::MaxPool {
                pools: vec![vec![0, 1, 2]],
            }],
        )
        .unwrap();
        assert_eq!(net.forward(&[0.2, 0.5, 0.1]).unwrap().output(), &[0.5]);
    }

    #[test]
    fn avgpool_of_constant_pool_is_exact() {
        let net = Network::new(
            3,
            vec![Interval::new(0.0, 1.0); 3],
            vec![Layer::AvgPool {
                pools: vec![vec![0, 1, 2]],
            }],
        )
        .unwrap();
        assert_eq!(net.forward(&[0.1, 0.1, 0.1]).unwrap().output(), &[0.1]);
    }

    #[test]
    fn overlapping_pools_are_rejected() {
        let r = Network::new(
            3,
            vec![Interval::new(0.0, 1.0); 3],
            vec![Layer::MaxPool {
                pools: vec![vec![0, 1], vec![1, 2]],
            }],
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let net = two_two_one();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::InputLength { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn inputs_outside_box_are_not_clipped() {
        let net = two_two_one();
        let act = net.forward(&[3.0, -2.0]).unwrap();
        assert_eq!(act.layers[0].pre, vec![3.0 - 1.0, -3.0 - 4.0 - 0.5]);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }
}
