mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relumip::bounds::{bounds_interval_bunel, bounds_interval_cheng, bounds_lp_tjeng, classify_stability};
use relumip::fixtures::{corner_enumeration_bounds, gen_network, FixtureSpec};
use relumip::{compute_bounds, BoundMethod, Stability};

const METHODS: [BoundMethod; 4] = [BoundMethod::Bunel, BoundMethod::Cheng, BoundMethod::Tjeng, BoundMethod::Serra];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounds_contain_sampled_activations(seed in any::<u64>(), kind in 0u8..3, lo in prop::sample::select(vec![0.0, -1.0])) {
        let net = common::random_net(seed, 3, 5, 2, kind, lo);
        let sets: Vec<_> = METHODS.iter().map(|&m| compute_bounds(&net, m).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..200 {
            let acts = net.forward(&common::sample_box(&net, &mut rng)).unwrap();
            for (set, m) in sets.iter().zip(METHODS) {
                prop_assert!(set.contains(&acts, 1e-9), "{:?} violated at {:?}", m, set.first_violation(&acts, 1e-9));
            }
        }
    }

    #[test]
    fn tjeng_is_contained_in_its_seed(seed in any::<u64>(), kind in 0u8..3) {
        let net = common::random_net(seed, 3, 4, 2, kind, -1.0);
        let seed_set = bounds_interval_bunel(&net);
        let lp = bounds_lp_tjeng(&net, &seed_set, false).unwrap();
        for (a, b) in lp.layers.iter().zip(&seed_set.layers) {
            for (x, y) in a.pre.iter().zip(&b.pre).chain(a.post.iter().zip(&b.post)) {
                prop_assert!(x.lo >= y.lo && x.hi <= y.hi, "{x} escapes {y}");
            }
        }
    }

    #[test]
    fn bunel_and_cheng_agree_on_one_layer(seed in any::<u64>(), n0 in 1usize..6, n1 in 1usize..6) {
        let mut spec = FixtureSpec::new(seed, &[n0, n1]);
        spec.input_box = relumip::Interval::new(-1.0, 2.0);
        let net = gen_network(&spec).unwrap();
        let (a, b) = (bounds_interval_bunel(&net), bounds_interval_cheng(&net));
        prop_assert_eq!(&a.layers[0].pre, &b.layers[0].pre);
        prop_assert_eq!(corner_enumeration_bounds(&net).unwrap(), a.layers[0].pre.clone());
    }

    #[test]
    fn stability_classification_is_a_fixpoint(seed in any::<u64>(), kind in 0u8..3) {
        let net = common::random_net(seed, 3, 4, 2, kind, 0.0);
        let mut set = bounds_interval_bunel(&net);
        let before = set.clone();
        classify_stability(&mut set);
        prop_assert_eq!(&set, &before);
        for lb in &set.layers {
            for (st, pre) in lb.stability.iter().zip(&lb.pre) {
                // A point interval at 0 is both; inactive takes precedence.
                let expect = if pre.hi <= 0.0 {
                    Stability::StablyInactive
                } else if pre.lo >= 0.0 {
                    Stability::StablyActive
                } else {
                    Stability::Unstable
                };
                prop_assert_eq!(*st, expect);
            }
        }
    }
}
