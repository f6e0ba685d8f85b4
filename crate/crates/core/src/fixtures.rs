//! Seeded fixture networks and datasets, plus brute-force oracles that do not
//! touch the solver or the encodings.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::AttackSpec;
use crate::error::{Error, Result};
use crate::network::{argmax, Activation, Interval, Layer, Network};
use crate::training::{Dataset, Loss};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    /// Layer sizes `n⁰, …, n^L`.
    pub sizes: Vec<usize>,
    /// Weights and biases are uniform in `[−scale, scale]`.
    pub scale: f64,
    pub input_box: Interval,
    /// Activation of the last layer; hidden layers are ReLU.
    pub output: Activation,
}

impl FixtureSpec {
    pub fn new(seed: u64, sizes: &[usize]) -> Self {
        Self {
            seed,
            sizes: sizes.to_vec(),
            scale: 1.0,
            input_box: Interval::new(0.0, 1.0),
            output: Activation::Linear,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        rng.gen_range(-scale..=scale)
    }
}

fn dense(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize, scale: f64, act: Activation) -> Layer {
    let weights = (0..n_in).map(|_| (0..n_out).map(|_| uniform(rng, scale)).collect()).collect();
    let bias = (0..n_out).map(|_| uniform(rng, scale)).collect();
    Layer::dense(weights, bias, act)
}

/// Dense network with uniform weights drawn from a ChaCha8 stream.
pub fn gen_network(spec: &FixtureSpec) -> Result<Network> {
    if spec.sizes.len() < 2 {
        return Err(Error::InvalidNetwork("fixture needs at least two layer sizes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let depth = spec.sizes.len() - 1;
    let layers = (1..=depth)
        .map(|l| {
            let act = if l == depth { spec.output } else { Activation::Relu };
            dense(&mut rng, spec.sizes[l - 1], spec.sizes[l], spec.scale, act)
        })
        .collect();
    Network::new(spec.sizes[0], vec![spec.input_box; spec.sizes[0]], layers)
}

/// The ten 4-5-5-3 nets of the cross-formulation comparison.
pub fn cross_formulation_nets() -> Vec<Network> {
    (0..10)
        .map(|k| gen_network(&FixtureSpec::new(1000 + k, &[4, 5, 5, 3])).expect("fixture is valid"))
        .collect()
}

/// Twenty nets for bound soundness, including max and average pooling and
/// input boxes straddling zero.
pub fn soundness_nets() -> Vec<Network> {
    (0..20u64)
        .map(|k| {
            let seed = 2000 + k;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lo = if k % 2 == 0 { 0.0 } else { -1.0 };
            let (n0, layers) = match k % 4 {
                0 => (3, vec![
                    dense(&mut rng, 3, 6, 1.0, Activation::Relu),
                    dense(&mut rng, 6, 4, 1.0, Activation::Relu),
                    dense(&mut rng, 4, 2, 1.0, Activation::Linear),
                ]),
                1 => (4, vec![
                    dense(&mut rng, 4, 6, 1.0, Activation::Relu),
                    Layer::MaxPool {
                        pools: vec![vec![0, 1], vec![2, 3, 4], vec![5]],
                    },
                    dense(&mut rng, 3, 3, 1.0, Activation::Linear),
                ]),
                2 => (4, vec![
                    dense(&mut rng, 4, 6, 1.0, Activation::Relu),
                    Layer::AvgPool {
                        pools: vec![vec![0, 1, 2], vec![3, 4], vec![5]],
                    },
                    dense(&mut rng, 3, 4, 1.0, Activation::Relu),
                    dense(&mut rng, 4, 2, 1.0, Activation::Linear),
                ]),
                _ => (5, vec![
                    dense(&mut rng, 5, 4, 1.0, Activation::Relu),
                    dense(&mut rng, 4, 4, 1.0, Activation::Relu),
                    dense(&mut rng, 4, 4, 1.0, Activation::Relu),
                    dense(&mut rng, 4, 2, 1.0, Activation::Linear),
                ]),
            };
            Network::new(n0, vec![Interval::new(lo, 1.0); n0], layers).expect("fixture is valid")
        })
        .collect()
}

/// The largest attack fixture: 8 inputs in `[0, 1]`, ReLU layers of 16, 12,
/// 8 and 4 units, and 10 linear logits.
pub fn largest_attack_net() -> Network {
    let mut spec = FixtureSpec::new(4242, &[8, 16, 12, 8, 4, 10]);
    spec.scale = 0.5;
    gen_network(&spec).expect("fixture is valid")
}

/// Draws seeded points in the input box until one is classified as `class`.
pub fn reference_of_class(net: &Network, class: usize, seed: u64, tries: usize) -> Option<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..tries {
        let x: Vec<f64> = net.input_box().iter().map(|iv| rng.gen_range(iv.lo..=iv.hi)).collect();
        let acts = net.forward(&x).ok()?;
        if argmax(acts.output()) == Some(class) {
            return Some(x);
        }
    }
    None
}

/// `min_j (o_t − m·o_j)` over the classes `j ≠ t`.
fn margin_gap(logits: &[f64], t: usize, margin: f64) -> f64 {
    logits
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != t)
        .map(|(_, &o)| logits[t] - margin * o)
        .fold(f64::INFINITY, f64::min)
}

/// Adds `s` to every output bias. A common shift keeps every argmax and moves
/// the margin gap by `(1 − m)·s`, so `s = (g_ref + g_best) / (2(m − 1))` puts
/// the margin boundary halfway between the reference and the best sample.
fn calibrate_margin(net: &Network, spec: &AttackSpec, samples: &[Vec<f64>]) -> Option<Network> {
    let t = spec.target_class();
    let m = spec.margin;
    let gap = |x: &[f64]| margin_gap(net.forward(x).expect("fixture input is valid").output(), t, m);
    let g_ref = gap(&spec.reference);
    let g_best = samples.iter().map(|x| gap(x)).fold(f64::NEG_INFINITY, f64::max);
    if g_best <= g_ref {
        return None;
    }
    let s = (g_ref + g_best) / (2.0 * (m - 1.0));
    let mut layers = net.layers().to_vec();
    match layers.last_mut() {
        Some(Layer::Dense { bias, .. }) => bias.iter_mut().for_each(|b| *b += s),
        _ => return None,
    }
    Network::new(net.input_dim(), net.input_box().to_vec(), layers).ok()
}

fn box_samples(net: &Network, seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| net.input_box().iter().map(|iv| rng.gen_range(iv.lo..=iv.hi)).collect())
        .collect()
}

/// The largest net with a reference input of class 0, so the target is 5.
/// If no sampled point lands in class 0 the logit bias of class 0 is raised
/// until the first sample does. The output biases are then shifted together
/// (see [`calibrate_margin`]) so the reference misses the margin and a
/// sampled point meets it.
pub fn largest_attack_case() -> (Network, AttackSpec) {
    let mut net = largest_attack_net();
    let x = match reference_of_class(&net, 0, 77, 20_000) {
        Some(x) => x,
        None => {
            let x = box_samples(&net, 77, 1).remove(0);
            let logits = net.forward(&x).expect("fixture input is valid").output().to_vec();
            let lift = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - logits[0] + 0.1;
            let mut layers = net.layers().to_vec();
            if let Some(Layer::Dense { bias, .. }) = layers.last_mut() {
                bias[0] += lift;
            }
            net = Network::new(net.input_dim(), net.input_box().to_vec(), layers).expect("fixture is valid");
            x
        }
    };
    let spec = AttackSpec::new(x, 0);
    let net = calibrate_margin(&net, &spec, &box_samples(&net, 78, 20_000)).unwrap_or(net);
    (net, spec)
}

/// Attack cases over the cross-formulation nets: a seeded reference, its
/// predicted class as `d̃`, and an explicit target (three classes are too few
/// for the mod-10 rule). The target is the first class after `d̃` whose margin
/// gap is larger at some sampled point than at the reference, and the output
/// biases are shifted so that this point meets the margin and the reference
/// does not.
pub fn small_attack_cases() -> Vec<(Network, AttackSpec)> {
    cross_formulation_nets()
        .into_iter()
        .enumerate()
        .map(|(k, net)| {
            let mut points = box_samples(&net, 3000 + k as u64, 2001);
            let x = points.remove(0);
            let c = argmax(net.forward(&x).expect("fixture input is valid").output()).unwrap_or(0);
            let n = net.output_dim();
            for s in 1..n {
                let mut spec = AttackSpec::new(x.clone(), c);
                spec.target = Some((c + s) % n);
                if let Some(calibrated) = calibrate_margin(&net, &spec, &points) {
                    return (calibrated, spec);
                }
            }
            let mut spec = AttackSpec::new(x, c);
            spec.target = Some((c + 1) % n);
            (net, spec)
        })
        .collect()
}

/// `h₁ = relu(x₁ − x₂)`, `h₂ = relu(x₂ − x₁)`, `out = relu(h₁ + h₂ − 0.5)` on
/// `[0, 1]²`. Interval arithmetic gives `h₁ + h₂ ≤ 2` although at most one of
/// the two is positive, so the exact maximum is 1.
pub fn anticorrelated_net() -> Network {
    Network::new(
        2,
        vec![Interval::new(0.0, 1.0); 2],
        vec![
            Layer::dense(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![0.0, 0.0], Activation::Relu),
            Layer::dense(vec![vec![1.0], vec![1.0]], vec![-0.5], Activation::Relu),
        ],
    )
    .expect("fixture is valid")
}

/// The four points of `{0, 1}²` labelled by XOR.
pub fn xor4() -> Dataset {
    Dataset {
        inputs: vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
        labels: vec![0, 1, 1, 0],
    }
}

/// Points in `[−1, 1]^dim` labelled by a seeded hyperplane through the origin.
pub fn random_separable(seed: u64, samples: usize, dim: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let mut inputs = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let s: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum();
        labels.push(usize::from(s >= 0.0));
        inputs.push(x);
    }
    Dataset { inputs, labels }
}

/// Exact layer-1 pre-activation ranges by evaluating every corner of the
/// input box (an affine function attains its extremes at corners).
pub fn corner_enumeration_bounds(net: &Network) -> Result<Vec<Interval>> {
    let n = net.input_dim();
    if n > 12 {
        return Err(Error::InvalidNetwork(format!("{n} inputs is too many for corner enumeration")));
    }
    let Some(Layer::Dense { weights, bias, .. }) = net.layers().first() else {
        return Err(Error::InvalidNetwork("corner enumeration needs a dense first layer".into()));
    };
    let boxes = net.input_box();
    let mut out = vec![Interval::new(f64::INFINITY, f64::NEG_INFINITY); bias.len()];
    for mask in 0..(1u32 << n) {
        let corner: Vec<f64> = (0..n)
            .map(|j| if mask >> j & 1 == 1 { boxes[j].hi } else { boxes[j].lo })
            .collect();
        for (i, iv) in out.iter_mut().enumerate() {
            let mut y = bias[i];
            for j in 0..n {
                y += weights[j][i] * corner[j];
            }
            iv.lo = iv.lo.min(y);
            iv.hi = iv.hi.max(y);
        }
    }
    Ok(out)
}

fn loss_of(loss: Loss, output: f64, label: usize) -> f64 {
    match loss {
        Loss::L1 => (output - if label == 1 { 1.0 } else { 0.0 }).abs(),
        Loss::Hinge => (0.5 - if label == 1 { 1.0 } else { -1.0 } * output).max(0.0),
    }
}

/// Best loss of a 2-2-1 network over weights `w_j = v_j` drawn from `values`
/// (9 weights including biases), evaluated by `eval`.
fn search_221<F>(values: &[f64], data: &Dataset, loss: Loss, eval: F) -> (f64, [f64; 9])
where
    F: Fn(&[f64; 9], &[f64]) -> f64,
{
    let k = values.len();
    let total = k.pow(9);
    let mut best = (f64::INFINITY, [0.0; 9]);
    for code in 0..total {
        let mut w = [0.0; 9];
        let mut c = code;
        for slot in &mut w {
            *slot = values[c % k];
            c /= k;
        }
        let mut sum = 0.0;
        for (x, &y) in data.inputs.iter().zip(&data.labels) {
            sum += loss_of(loss, eval(&w, x), y);
            if sum >= best.0 {
                break;
            }
        }
        if sum < best.0 {
            best = (sum, w);
            if sum == 0.0 {
                break;
            }
        }
    }
    if data.is_empty() {
        best.0 = 0.0;
    }
    best
}

/// Exhaustive search over ternary 2-2-1 binarized networks with weight scale
/// `p`: hidden units are `sign(P·(t₀ + t₁x₁ + t₂x₂))`, the output is
/// `2/(P·3)·P·(t₀ + t₁h₁ + t₂h₂)`. Returns the best loss and its weights
/// `[t₀₁, t₁₁, t₂₁, t₀₂, t₁₂, t₂₂, t₀, t₁, t₂]`.
pub fn ternary_weight_search(data: &Dataset, p: u32, loss: Loss) -> (f64, [f64; 9]) {
    let p = f64::from(p);
    search_221(&[-1.0, 0.0, 1.0], data, loss, |w, x| {
        let sign = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
        let h1 = sign(p * (w[0] + w[1] * x[0] + w[2] * x[1]));
        let h2 = sign(p * (w[3] + w[4] * x[0] + w[5] * x[1]));
        2.0 / (p * 3.0) * p * (w[6] + w[7] * h1 + w[8] * h2)
    })
}

/// Exhaustive search over 2-2-1 step networks with weights on the lattice
/// `{−1, −½, 0, ½, 1}` and a linear output.
pub fn lattice_weight_search(data: &Dataset, loss: Loss) -> (f64, [f64; 9]) {
    search_221(&[-1.0, -0.5, 0.0, 0.5, 1.0], data, loss, |w, x| {
        let step = |v: f64| if v >= 0.0 { 1.0 } else { 0.0 };
        let h1 = step(w[0] + w[1] * x[0] + w[2] * x[1]);
        let h2 = step(w[3] + w[4] * x[0] + w[5] * x[1]);
        w[6] + w[7] * h1 + w[8] * h2
    })
}

/// Writes every fixture network and dataset into `dir` as JSON documents.
pub fn write_fixtures(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        std::fs::write(dir.join(&name), text)?;
        written.push(name);
        Ok(())
    };
    for (k, net) in cross_formulation_nets().iter().enumerate() {
        put(format!("cross_{k:02}.json"), net.to_json())?;
    }
    for (k, net) in soundness_nets().iter().enumerate() {
        put(format!("sound_{k:02}.json"), net.to_json())?;
    }
    let (net, spec) = largest_attack_case();
    put("largest.json".into(), net.to_json())?;
    put("largest_attack.json".into(), serde_json::to_string_pretty(&spec)?)?;
    put("anticorrelated.json".into(), anticorrelated_net().to_json())?;
    put("xor4.json".into(), xor4().to_json())?;
    put("separable.json".into(), random_separable(5, 12, 3).to_json())?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation() {
        let a = gen_network(&FixtureSpec::new(7, &[3, 4, 2])).unwrap();
        let b = gen_network(&FixtureSpec::new(7, &[3, 4, 2])).unwrap();
        let c = gen_network(&FixtureSpec::new(8, &[3, 4, 2])).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a, c);
        let mut zero = FixtureSpec::new(7, &[3, 4, 2]);
        zero.scale = 0.0;
        let z = gen_network(&zero).unwrap();
        for layer in z.layers() {
            let Layer::Dense { weights, bias, .. } = layer else { unreachable!() };
            assert!(weights.iter().flatten().chain(bias).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn corner_bounds_cases() {
        let one = Network::new(
            1,
            vec![Interval::new(-1.0, 2.0)],
            vec![Layer::dense(vec![vec![3.0, -1.0]], vec![1.0, 0.0], Activation::Relu)],
        )
        .unwrap();
        let b = corner_enumeration_bounds(&one).unwrap();
        assert_eq!(b, vec![Interval::new(-2.0, 7.0), Interval::new(-2.0, 1.0)]);
        let point = one.with_input_box(vec![Interval::new(0.5, 0.5)]).unwrap();
        let b = corner_enumeration_bounds(&point).unwrap();
        assert_eq!(b, vec![Interval::new(2.5, 2.5), Interval::new(-0.5, -0.5)]);
    }

    #[test]
    fn ternary_search_small_cases() {
        let empty = Dataset {
            inputs: vec![],
            labels: vec![],
        };
        assert_eq!(ternary_weight_search(&empty, 1, Loss::Hinge).0, 0.0);
        let one = Dataset {
            inputs: vec![vec![1.0, 0.0]],
            labels: vec![1],
        };
        assert_eq!(ternary_weight_search(&one, 1, Loss::Hinge).0, 0.0);
    }

    #[test]
    fn attack_references_are_classified() {
        for (net, spec) in small_attack_cases() {
            let out = net.forward(&spec.reference).unwrap();
            assert_eq!(argmax(out.output()), Some(spec.true_class));
            assert_ne!(spec.target_class(), spec.true_class);
        }
    }
}
