mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tradeflow::backbone::{
    backbone_stats, backbone_sweep, connected_components, edge_significances, extract_backbone,
};

proptest! {
    #[test]
    fn backbones_are_nested_and_weight_preserving(seed in any::<u64>(), n in 5usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = common::random_trade_network(n, 0.4, &mut rng);
        prop_assume!(!net.edges().is_empty());
        let alphas = [0.5, 0.2, 0.05, 0.01];
        let mut prev: Option<Vec<usize>> = None;
        for a in alphas {
            let bb = extract_backbone(&net, a).unwrap();
            for (&i, sig) in bb.edge_indices.iter().zip(&bb.significance) {
                let e = &net.edges()[i];
                prop_assert_eq!((e.source, e.target), (sig.source, sig.target));
                prop_assert!(sig.alpha_at_source < a || sig.alpha_at_target < a);
            }
            let sub = bb.to_network();
            for e in sub.edges() {
                let original = net.edge(e.source, e.target).unwrap();
                prop_assert_eq!(original.weight, e.weight);
            }
            if let Some(p) = &prev {
                prop_assert!(bb.edge_indices.iter().all(|i| p.contains(i)));
            }
            let sizes = connected_components(&bb);
            prop_assert_eq!(sizes.iter().sum::<usize>(), bb.retained_nodes.len());
            prev = Some(bb.edge_indices.clone());
        }
        let stats = backbone_sweep(&net, &alphas).unwrap();
        prop_assert!(stats.windows(2).all(|w| w[1].pct_flux <= w[0].pct_flux
            && w[1].pct_nodes <= w[0].pct_nodes
            && w[1].pct_edges <= w[0].pct_edges));
    }
}

#[test]
fn loose_threshold_keeps_every_testable_edge() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = common::random_trade_network(60, 0.3, &mut rng);
    let bb = extract_backbone(&net, 1.0 - 1e-9).unwrap();
    let expected = edge_significances(&net)
        .iter()
        .filter(|s| s.alpha_at_source < 1.0 - 1e-9 || s.alpha_at_target < 1.0 - 1e-9)
        .count();
    assert_eq!(bb.edge_indices.len(), expected);
    let stats = backbone_stats(&bb).unwrap();
    assert!(stats.pct_edges > 99.0 && stats.pct_flux > 99.0, "{stats:?}");
}

#[test]
fn null_network_fires_at_nominal_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut fired = 0usize;
    let mut tests = 0usize;
    for _ in 0..10 {
        let net = common::exponential_weight_network(150, 0.15, &mut rng);
        for s in edge_significances(&net) {
            let e = net.edge(s.source, s.target).unwrap();
            if net.out_degree(e.source) >= 2 {
                tests += 1;
                fired += usize::from(s.alpha_at_source < 0.05);
            }
            if net.in_degree(e.target) >= 2 {
                tests += 1;
                fired += usize::from(s.alpha_at_target < 0.05);
            }
        }
    }
    let rate = fired as f64 / tests as f64;
    assert!((rate - 0.05).abs() < 0.01, "rate {rate}");
}

#[test]
fn invalid_thresholds_are_rejected() {
    let net = common::three_node_fixture::<f64>();
    for a in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(extract_backbone(&net, a).is_err(), "{a}");
    }
    assert!(backbone_sweep(&net, &[0.1, 0.2]).is_err());
    assert!(backbone_sweep::<f64>(&net, &[]).is_err());
}
