mod common;

use proptest::prelude::*;

use relumip::network::{Activation, Interval, Layer, Network};

fn dense_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..8, 1usize..8).prop_flat_map(|(n_in, n_out)| {
        (
            prop::collection::vec(prop::collection::vec(-1e3..1e3f64, n_out), n_in),
            prop::collection::vec(-1e3..1e3f64, n_out),
            prop::collection::vec(-1e3..1e3f64, n_in),
        )
    })
}

proptest! {
    #[test]
    fn dense_layer_is_affine((w, b, x) in dense_case()) {
        let n_in = x.len();
        let net = Network::new(n_in, vec![Interval::new(-1e3, 1e3); n_in], vec![Layer::dense(w.clone(), b.clone(), Activation::Linear)]).unwrap();
        let acts = net.forward(&x).unwrap();
        for i in 0..b.len() {
            let mut y = b[i];
            for j in 0..n_in {
                y += w[j][i] * x[j];
            }
            prop_assert!((acts.layers[0].pre[i] - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), kind in 0u8..3, xs in prop::collection::vec(0.0..=1.0f64, 3)) {
        let net = common::random_net(seed, 3, 4, 2, kind, 0.0);
        prop_assert_eq!(net.forward(&xs).unwrap(), net.forward(&xs).unwrap());
    }

    #[test]
    fn constant_average_pool_is_exact(c in -1e6..1e6f64, width in 1usize..7) {
        let net = Network::new(width, vec![Interval::new(-1e6, 1e6); width], vec![Layer::AvgPool { pools: vec![(0..width).collect()] }]).unwrap();
        prop_assert_eq!(net.forward(&vec![c; width]).unwrap().output()[0], c);
    }

    #[test]
    fn relu_layer_clamps(seed in any::<u64>(), xs in prop::collection::vec(-1.0..=1.0f64, 3)) {
        let net = common::random_net(seed, 3, 4, 2, 0, -1.0);
        let acts = net.forward(&xs).unwrap();
        for (y, x) in acts.layers[0].pre.iter().zip(&acts.layers[0].post) {
            prop_assert_eq!(*x, y.max(0.0));
        }
    }
}

#[test]
fn wrong_input_length_is_rejected() {
    let net = common::random_net(1, 3, 4, 2, 0, 0.0);
    assert!(net.forward(&[0.0, 0.0]).is_err());
}
