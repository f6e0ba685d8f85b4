#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relumip::encodings::{FormulationSpec, PartitionBounds, ReluFormulation};
use relumip::network::{Activation, Interval, Layer, Network};
use relumip::{compute_bounds, encode_network, BoundMethod, EncodedNetwork};

/// Seeded random network. `kind` 0 is dense, 1 has a max-pool and 2 an
/// average-pool layer after the first dense layer.
pub fn random_net(seed: u64, n0: usize, hidden: usize, out: usize, kind: u8, lo: f64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense = |rng: &mut ChaCha8Rng, n_in: usize, n_out: usize, act: Activation| {
        let w = (0..n_in).map(|_| (0..n_out).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
        let b = (0..n_out).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Layer::dense(w, b, act)
    };
    let pools: Vec<Vec<usize>> = (0..hidden).collect::<Vec<_>>().chunks(2).map(|c| c.to_vec()).collect();
    let mut layers = vec![dense(&mut rng, n0, hidden, Activation::Relu)];
    let width = match kind {
        1 => {
            layers.push(Layer::MaxPool { pools: pools.clone() });
            pools.len()
        }
        2 => {
            layers.push(Layer::AvgPool { pools: pools.clone() });
            pools.len()
        }
        _ => hidden,
    };
    layers.push(dense(&mut rng, width, hidden, Activation::Relu));
    layers.push(dense(&mut rng, hidden, out, Activation::Linear));
    Network::new(n0, vec![Interval::new(lo, 1.0); n0], layers).unwrap()
}

pub fn sample_box(net: &Network, rng: &mut ChaCha8Rng) -> Vec<f64> {
    net.input_box().iter().map(|iv| rng.gen_range(iv.lo..=iv.hi)).collect()
}

/// Every formulation with the bound method it is paired with.
pub fn all_formulations() -> Vec<(&'static str, BoundMethod, ReluFormulation)> {
    vec![
        ("bigm-bunel", BoundMethod::Bunel, ReluFormulation::BigM),
        ("bigm-cheng", BoundMethod::Cheng, ReluFormulation::BigM),
        ("bigm-tjeng", BoundMethod::Tjeng, ReluFormulation::BigM),
        ("extended", BoundMethod::Serra, ReluFormulation::Extended { valid_inequalities: false }),
        ("extended+vi", BoundMethod::Serra, ReluFormulation::Extended { valid_inequalities: true }),
        (
            "disjunctive",
            BoundMethod::Bunel,
            ReluFormulation::Disjunctive {
                partitions: 1,
                partition_bounds: PartitionBounds::Interval,
            },
        ),
        (
            "disjunctive-k2-lp",
            BoundMethod::Bunel,
            ReluFormulation::Disjunctive {
                partitions: 2,
                partition_bounds: PartitionBounds::Lp,
            },
        ),
        (
            "hullcuts",
            BoundMethod::Bunel,
            ReluFormulation::HullCuts {
                max_rounds: 5,
                max_cuts_per_round: 20,
            },
        ),
    ]
}

pub fn encode(net: &Network, method: BoundMethod, relu: ReluFormulation) -> EncodedNetwork {
    let bounds = compute_bounds(net, method).unwrap();
    encode_network(net, &bounds, &FormulationSpec::new(relu)).unwrap()
}
