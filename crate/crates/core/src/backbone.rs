//! Significance filtering of links against the uniform-spacings null model
//! and multiscale backbone extraction.

use serde::Serialize;
use thiserror::Error;

use crate::network::{Edge, ImbalanceNetwork, NodeAccount};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum BackboneError {
    #[error("normalized share {0} outside [0, 1]")]
    ShareOutOfRange(String),
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("significance threshold {0} must lie strictly between 0 and 1")]
    ThresholdOutOfRange(String),
    #[error("thresholds must be strictly decreasing")]
    ThresholdsNotDecreasing,
    #[error("no thresholds given")]
    NoThresholds,
    #[error("base network has no edges")]
    EmptyBase,
}

/// Probability under the null model that a share of at least `p` arises at a
/// node of degree `k`: `(1 - p)^(k - 1)`. A degree-1 endpoint carries no
/// evidence and yields 1.
pub fn edge_significance_value<S: Scalar>(p: S, k: usize) -> Result<S, BackboneError> {
    if p < S::zero() || p > S::one() {
        return Err(BackboneError::ShareOutOfRange(p.to_string()));
    }
    match k {
        0 => Err(BackboneError::ZeroDegree),
        1 => Ok(S::one()),
        _ => Ok(num_traits::pow(S::one() - p, k - 1)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeSignificance<S> {
    pub source: usize,
    pub target: usize,
    /// Outgoing test at the source: `p = w / s_out`, `k = k_out`.
    pub alpha_at_source: S,
    /// Incoming test at the target: `p = w / s_in`, `k = k_in`.
    pub alpha_at_target: S,
    pub kept: bool,
}

impl<S: Scalar> EdgeSignificance<S> {
    fn passes(&self, threshold: S) -> bool {
        self.alpha_at_source < threshold || self.alpha_at_target < threshold
    }
}

/// Both endpoint tests for every edge of `net`, in edge order. `kept` is
/// left `false`.
pub fn edge_significances<S: Scalar>(net: &ImbalanceNetwork<S>) -> Vec<EdgeSignificance<S>> {
    let accounts = net.node_accounts();
    net.edges()
        .iter()
        .map(|e| endpoint_tests(e, &accounts))
        .collect()
}

fn endpoint_tests<S: Scalar>(e: &Edge<S>, accounts: &[NodeAccount<S>]) -> EdgeSignificance<S> {
    let src = &accounts[e.source];
    let dst = &accounts[e.target];
    let share = |w: S, s: S| {
        let p = w / s;
        // rounding can push a lone share just past 1
        if p > S::one() {
            S::one()
        } else {
            p
        }
    };
    EdgeSignificance {
        source: e.source,
        target: e.target,
        alpha_at_source: edge_significance_value(share(e.weight, src.s_out), src.k_out)
            .expect("share within [0, 1]"),
        alpha_at_target: edge_significance_value(share(e.weight, dst.s_in), dst.k_in)
            .expect("share within [0, 1]"),
        kept: false,
    }
}

#[derive(Debug, Clone)]
pub struct BackboneNetwork<'a, S> {
    pub base: &'a ImbalanceNetwork<S>,
    pub threshold: S,
    /// Indices into `base.edges()` of surviving edges, ascending.
    pub edge_indices: Vec<usize>,
    /// Tests for the surviving edges, parallel to `edge_indices`.
    pub significance: Vec<EdgeSignificance<S>>,
    /// Nodes incident to at least one surviving edge, ascending.
    pub retained_nodes: Vec<usize>,
}

impl<'a, S: Scalar> BackboneNetwork<'a, S> {
    pub fn edges(&self) -> impl Iterator<Item = &'a Edge<S>> + '_ {
        self.edge_indices.iter().map(move |&i| &self.base.edges()[i])
    }

    pub fn total_flux(&self) -> S {
        self.edges().fold(S::zero(), |acc, e| acc + e.weight)
    }

    /// The surviving edges as a standalone network over the base country list.
    pub fn to_network(&self) -> ImbalanceNetwork<S> {
        ImbalanceNetwork::from_edges(self.base.countries().to_vec(), self.edges().cloned().collect())
            .expect("subset of a valid network is valid")
    }
}

fn check_threshold<S: Scalar>(alpha: S) -> Result<(), BackboneError> {
    if !(alpha > S::zero() && alpha < S::one()) {
        Err(BackboneError::ThresholdOutOfRange(alpha.to_string()))
    } else {
        Ok(())
    }
}

fn assemble<'a, S: Scalar>(
    net: &'a ImbalanceNetwork<S>,
    tests: &[EdgeSignificance<S>],
    alpha: S,
) -> BackboneNetwork<'a, S> {
    let mut edge_indices = Vec::new();
    let mut significance = Vec::new();
    let mut touched = vec![false; net.len()];
    for (idx, t) in tests.iter().enumerate() {
        if t.passes(alpha) {
            edge_indices.push(idx);
            significance.push(EdgeSignificance {
                kept: true,
                ..t.clone()
            });
            touched[t.source] = true;
            touched[t.target] = true;
        }
    }
    BackboneNetwork {
        base: net,
        threshold: alpha,
        edge_indices,
        significance,
        retained_nodes: (0..net.len()).filter(|&v| touched[v]).collect(),
    }
}

/// Keeps every edge whose outgoing test at the source or incoming test at the
/// target falls strictly below `alpha`.
pub fn extract_backbone<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    alpha: S,
) -> Result<BackboneNetwork<'_, S>, BackboneError> {
    check_threshold(alpha)?;
    Ok(assemble(net, &edge_significances(net), alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackboneStats {
    pub alpha: f64,
    pub pct_flux: f64,
    /// Over nodes incident to some edge of the base network.
    pub pct_nodes: f64,
    pub pct_edges: f64,
}

pub fn backbone_stats<S: Scalar>(backbone: &BackboneNetwork<'_, S>) -> Result<BackboneStats, BackboneError> {
    let base = backbone.base;
    if base.edges().is_empty() {
        return Err(BackboneError::EmptyBase);
    }
    let flux = (backbone.total_flux() / base.total_flux()).to_f64_lossy();
    Ok(BackboneStats {
        alpha: backbone.threshold.to_f64_lossy(),
        pct_flux: 100.0 * flux,
        pct_nodes: 100.0 * backbone.retained_nodes.len() as f64 / base.connected_node_count() as f64,
        pct_edges: 100.0 * backbone.edge_indices.len() as f64 / base.edges().len() as f64,
    })
}

/// Stats for each threshold, which must be strictly decreasing.
pub fn backbone_sweep<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    alphas: &[S],
) -> Result<Vec<BackboneStats>, BackboneError> {
    if alphas.is_empty() {
        return Err(BackboneError::NoThresholds);
    }
    for &a in alphas {
        check_threshold(a)?;
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(BackboneError::ThresholdsNotDecreasing);
    }
    let tests = edge_significances(net);
    alphas
        .iter()
        .map(|&a| backbone_stats(&assemble(net, &tests, a)))
        .collect()
}

/// Weakly connected component sizes over retained nodes, largest first.
pub fn connected_components<S: Scalar>(backbone: &BackboneNetwork<'_, S>) -> Vec<usize> {
    let n = backbone.base.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in backbone.edges() {
        let (a, b) = (find(&mut parent, e.source), find(&mut parent, e.target));
        if a != b {
            parent[a] = b;
        }
    }
    let mut sizes = vec![0usize; n];
    for &v in &backbone.retained_nodes {
        let root = find(&mut parent, v);
        sizes[root] += 1;
    }
    let mut sizes: Vec<usize> = sizes.into_iter().filter(|&s| s > 0).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn e(source: usize, target: usize, weight: f64) -> Edge<f64> {
        Edge {
            source,
            target,
            weight,
        }
    }

    fn net(n: usize, edges: Vec<Edge<f64>>) -> ImbalanceNetwork<f64> {
        ImbalanceNetwork::from_edges((0..n).map(|i| format!("n{i:03}")).collect(), edges).unwrap()
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(edge_significance_value(0.5, 2).unwrap(), 0.5);
        assert_eq!(edge_significance_value(1.0, 2).unwrap(), 0.0);
        assert_eq!(
            edge_significance_value(Rational::new(4, 5), 5).unwrap(),
            Rational::new(16, 10_000)
        );
        assert_eq!(edge_significance_value(0.3, 1).unwrap(), 1.0);
    }

    #[test]
    fn share_domain_errors() {
        assert!(matches!(
            edge_significance_value(1.5, 3),
            Err(BackboneError::ShareOutOfRange(_))
        ));
        assert!(matches!(
            edge_significance_value(-0.1, 3),
            Err(BackboneError::ShareOutOfRange(_))
        ));
        assert_eq!(edge_significance_value(0.5, 0), Err(BackboneError::ZeroDegree));
    }

    #[test]
    fn or_rule_keeps_edge_significant_at_one_end() {
        // node 0 sends 0.996 of its outflow to node 1 over 2 links -> alpha 0.004
        let g = net(4, vec![e(0, 1, 996.0), e(0, 2, 4.0), e(3, 1, 1.0)]);
        let tests = edge_significances(&g);
        assert!((tests[0].alpha_at_source - 0.004).abs() < 1e-12);
        assert!(tests[0].alpha_at_target > 0.001);
        let bb = extract_backbone(&g, 0.01).unwrap();
        assert_eq!(bb.edge_indices, vec![0]);
        assert_eq!(bb.retained_nodes, vec![0, 1]);
        assert!(bb.significance[0].kept);
    }

    #[test]
    fn equal_star_fails_at_hub() {
        let g = net(11, (1..=10).map(|t| e(0, t, 1.0)).collect());
        let tests = edge_significances(&g);
        for t in &tests {
            assert!((t.alpha_at_source - 0.9f64.powi(9)).abs() < 1e-12);
            assert_eq!(t.alpha_at_target, 1.0);
        }
        assert!(extract_backbone(&g, 0.05).unwrap().edge_indices.is_empty());
    }

    #[test]
    fn threshold_near_one_keeps_everything_testable() {
        let g = net(4, vec![e(0, 1, 3.0), e(0, 2, 1.0), e(3, 2, 1.0)]);
        let bb = extract_backbone(&g, 1.0 - 1e-9).unwrap();
        assert_eq!(bb.edge_indices.len(), 3);
        let stats = backbone_stats(&bb).unwrap();
        assert_eq!((stats.pct_flux, stats.pct_nodes, stats.pct_edges), (100.0, 100.0, 100.0));
        assert!(extract_backbone(&g, 1.0).is_err());
        assert!(extract_backbone(&g, 0.0).is_err());
    }

    #[test]
    fn stats_against_base() {
        let g = net(6, vec![e(0, 1, 996.0), e(0, 2, 4.0), e(3, 1, 1.0)]);
        let bb = extract_backbone(&g, 0.01).unwrap();
        let s = backbone_stats(&bb).unwrap();
        assert!((s.pct_flux - 100.0 * 996.0 / 1001.0).abs() < 1e-9);
        // nodes 4 and 5 are isolated in the base and not counted
        assert_eq!(s.pct_nodes, 50.0);
        assert!((s.pct_edges - 100.0 / 3.0).abs() < 1e-12);
        let empty = net(2, vec![]);
        assert_eq!(
            backbone_stats(&extract_backbone(&empty, 0.5).unwrap()),
            Err(BackboneError::EmptyBase)
        );
    }

    #[test]
    fn sweep_validation_and_monotonicity() {
        let g = net(
            6,
            vec![e(0, 1, 50.0), e(0, 2, 3.0), e(0, 3, 1.0), e(4, 1, 1.0), e(5, 2, 8.0), e(5, 3, 1.0)],
        );
        let rows = backbone_sweep(&g, &[0.2, 0.1, 0.05, 0.01]).unwrap();
        assert_eq!(rows.len(), 4);
        for w in rows.windows(2) {
            assert!(w[1].pct_edges <= w[0].pct_edges);
            assert!(w[1].pct_flux <= w[0].pct_flux);
            assert!(w[1].pct_nodes <= w[0].pct_nodes);
        }
        let single = backbone_sweep(&g, &[0.05]).unwrap();
        assert_eq!(single[0], backbone_stats(&extract_backbone(&g, 0.05).unwrap()).unwrap());
        assert_eq!(backbone_sweep(&g, &[]), Err(BackboneError::NoThresholds));
        assert_eq!(
            backbone_sweep(&g, &[0.05, 0.1]),
            Err(BackboneError::ThresholdsNotDecreasing)
        );
        assert_eq!(
            backbone_sweep(&g, &[0.05, 0.05]),
            Err(BackboneError::ThresholdsNotDecreasing)
        );
    }

    #[test]
    fn components() {
        let empty = net(3, vec![e(0, 1, 1.0)]);
        let bb = extract_backbone(&empty, 0.5).unwrap();
        assert!(connected_components(&bb).is_empty());

        // degree-2 hubs with a dominant link survive; one per pair
        let one = net(3, vec![e(0, 1, 99.0), e(0, 2, 1.0)]);
        assert_eq!(connected_components(&extract_backbone(&one, 0.05).unwrap()), vec![2]);

        let two = net(
            6,
            vec![e(0, 1, 99.0), e(0, 2, 1.0), e(3, 4, 99.0), e(3, 5, 1.0)],
        );
        assert_eq!(connected_components(&extract_backbone(&two, 0.05).unwrap()), vec![2, 2]);
    }

    #[test]
    fn weights_preserved() {
        let g = net(3, vec![e(0, 1, 99.0), e(0, 2, 1.0)]);
        let bb = extract_backbone(&g, 0.05).unwrap();
        let sub = bb.to_network();
        assert_eq!(sub.edges(), &[e(0, 1, 99.0)]);
    }
}
