mod common;

use proptest::prelude::*;

use relumip::adversarial::{build_attack, verify_attack, AttackSpec};
use relumip::fixtures::small_attack_cases;
use relumip::network::{Activation, Interval, Layer, Network};
use relumip::solver::{solve_mip, SolveStatus, SolverParams};
use relumip::{BoundMethod, ReluFormulation};

/// Optimal distance and the L1 distance of the returned input, or `None`
/// when the attack is infeasible.
fn attack(net: &Network, spec: &AttackSpec, method: BoundMethod, relu: ReluFormulation) -> Option<(f64, f64)> {
    let enc = common::encode(net, method, relu);
    let atk = build_attack(&enc, net, spec).unwrap();
    let r = solve_mip(&atk.model, &SolverParams::default());
    match r.status {
        SolveStatus::Optimal => {
            let x: Vec<f64> = atk.inputs.iter().map(|v| r.value(*v).unwrap()).collect();
            let rep = verify_attack(net, spec, &x).unwrap();
            assert!(rep.margin_ok, "margin slack {}", rep.margin_slack);
            Some((r.objective.unwrap(), rep.l1_distance))
        }
        SolveStatus::Infeasible => None,
        other => panic!("unexpected status {other:?}"),
    }
}

/// The same network with a ReLU on the logits.
fn relu_logits(net: Network) -> Network {
    let mut layers = net.layers().to_vec();
    if let Some(Layer::Dense { activation, .. }) = layers.last_mut() {
        *activation = Activation::Relu;
    }
    Network::new(net.input_dim(), net.input_box().to_vec(), layers).unwrap()
}

fn case() -> impl Strategy<Value = (Network, AttackSpec)> {
    (0usize..10).prop_map(|k| small_attack_cases().swap_remove(k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objective_is_the_l1_distance((net, spec) in case(), f in prop::sample::select(common::all_formulations())) {
        let (obj, l1) = attack(&net, &spec, f.1, f.2).expect("fixture attacks are feasible");
        prop_assert!((obj - l1).abs() <= 1e-6, "{}: {obj} vs {l1}", f.0);
    }

    #[test]
    fn optimum_does_not_depend_on_the_formulation((net, spec) in case()) {
        let values: Vec<Option<f64>> = common::all_formulations()
            .into_iter()
            .map(|(_, m, r)| attack(&net, &spec, m, r).map(|v| v.0))
            .collect();
        for v in &values {
            prop_assert!((v.unwrap() - values[0].unwrap()).abs() <= 1e-6, "{values:?}");
        }
    }

    /// Only meaningful with nonnegative logits; see `negative_logits_reverse_the_margin`.
    #[test]
    fn larger_margins_cost_more(seed in any::<u64>(), x in prop::collection::vec(0.0..=1.0f64, 3), target in 0usize..3, bump in 0.0..1.0f64) {
        let net = relu_logits(common::random_net(seed, 3, 4, 3, 0, 0.0));
        let c = relumip::network::argmax(net.forward(&x).unwrap().output()).unwrap();
        prop_assume!(target != c);
        let mut spec = AttackSpec::new(x, c);
        spec.target = Some(target);
        let mut wide = spec.clone();
        wide.margin += bump;
        let Some((base, _)) = attack(&net, &spec, BoundMethod::Bunel, ReluFormulation::BigM) else {
            return Ok(());
        };
        let more = attack(&net, &wide, BoundMethod::Bunel, ReluFormulation::BigM).map_or(f64::INFINITY, |v| v.0);
        prop_assert!(more >= base - 1e-6, "{more} < {base}");
    }

    #[test]
    fn random_references_on_random_nets(seed in any::<u64>(), x in prop::collection::vec(0.0..=1.0f64, 3), target in 0usize..3) {
        let net = common::random_net(seed, 3, 4, 3, 0, 0.0);
        let c = relumip::network::argmax(net.forward(&x).unwrap().output()).unwrap();
        prop_assume!(target != c);
        let mut spec = AttackSpec::new(x, c);
        spec.target = Some(target);
        let a = attack(&net, &spec, BoundMethod::Bunel, ReluFormulation::BigM);
        let b = attack(&net, &spec, BoundMethod::Serra, ReluFormulation::Extended { valid_inequalities: false });
        match (a, b) {
            (Some(a), Some(b)) => {
                prop_assert!((a.0 - b.0).abs() <= 1e-6);
                prop_assert!((a.0 - a.1).abs() <= 1e-6);
            }
            (None, None) => {}
            other => prop_assert!(false, "status differs: {other:?}"),
        }
    }
}

/// Logits `x − 1` on `[0, 1]²`, reference `(1, 0.5)` of class 0, target 1.
/// The row `x₁ − 1 ≥ m (x₀ − 1)` is met by moving `x₀` down by `0.5 / m`, so
/// the optimal distance shrinks as the margin grows.
#[test]
fn negative_logits_reverse_the_margin() {
    let net = Network::new(
        2,
        vec![Interval::new(0.0, 1.0); 2],
        vec![Layer::dense(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![-1.0, -1.0], Activation::Linear)],
    )
    .unwrap();
    for m in [1.2, 2.0, 4.0] {
        let mut spec = AttackSpec::new(vec![1.0, 0.5], 0);
        spec.target = Some(1);
        spec.margin = m;
        let (obj, _) = attack(&net, &spec, BoundMethod::Bunel, ReluFormulation::BigM).unwrap();
        assert!((obj - 0.5 / m).abs() < 1e-9, "m = {m}: {obj}");
    }
}
