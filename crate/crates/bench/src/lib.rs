//! Shared inputs for the benchmarks.

use relumip::fixtures::{largest_attack_case, small_attack_cases};
use relumip::{build_attack, compute_bounds, encode_network, BoundMethod, FormulationSpec, MipModel, ReluFormulation};

/// Formulations compared in the solve benchmark, with the bounds each uses.
pub fn formulations() -> Vec<(&'static str, BoundMethod, ReluFormulation)> {
    vec![
        ("bigm-bunel", BoundMethod::Bunel, ReluFormulation::BigM),
        ("bigm-tjeng", BoundMethod::Tjeng, ReluFormulation::BigM),
        ("extended", BoundMethod::Serra, ReluFormulation::Extended { valid_inequalities: false }),
        ("extended+vi", BoundMethod::Serra, ReluFormulation::Extended { valid_inequalities: true }),
        (
            "disjunctive",
            BoundMethod::Bunel,
            ReluFormulation::Disjunctive {
                partitions: 1,
                partition_bounds: relumip::PartitionBounds::Interval,
            },
        ),
        (
            "hullcuts",
            BoundMethod::Bunel,
            ReluFormulation::HullCuts {
                max_rounds: 10,
                max_cuts_per_round: 50,
            },
        ),
    ]
}

/// Attack model of small fixture `k` (0..10).
pub fn small_attack_model(k: usize, method: BoundMethod, relu: ReluFormulation) -> MipModel {
    let (net, spec) = small_attack_cases().swap_remove(k);
    attack_model(&net, &spec, method, relu)
}

/// Attack model of the largest fixture.
pub fn largest_attack_model(method: BoundMethod, relu: ReluFormulation) -> MipModel {
    let (net, spec) = largest_attack_case();
    attack_model(&net, &spec, method, relu)
}

fn attack_model(
    net: &relumip::Network,
    spec: &relumip::AttackSpec,
    method: BoundMethod,
    relu: ReluFormulation,
) -> MipModel {
    let bounds = compute_bounds(net, method).expect("fixture bounds");
    let enc = encode_network(net, &bounds, &FormulationSpec::new(relu)).expect("fixture encodes");
    build_attack(&enc, net, spec).expect("fixture attack is valid").model
}
