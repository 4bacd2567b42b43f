//! The directed imbalance network and per-country flux accounts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{validate_trade_matrix, TradeMatrix};
use crate::scalar::{max_of, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("trade matrix violates its invariants: {0}")]
    InvalidMatrix(String),
    #[error("duplicate country code {0:?}")]
    DuplicateCountry(String),
    #[error("edge {source_node}->{target} references a node outside the country list")]
    NodeOutOfRange { source_node: usize, target: usize },
    #[error("self-loop at {0:?}")]
    SelfLoop(String),
    #[error("edge {0}->{1} must have a strictly positive finite weight")]
    BadWeight(String, String),
    #[error("more than one edge between {0:?} and {1:?}")]
    ParallelEdge(String, String),
    #[error("histogram needs at least one bin")]
    NoBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge<S> {
    pub source: usize,
    pub target: usize,
    pub weight: S,
}

/// Directed graph of net money flows: an edge `i -> j` of weight `F_ij`
/// carries the bilateral deficit of `i` towards the surplus country `j`.
///
/// Countries are kept in lexicographic order, isolated ones included, and
/// edges are sorted by `(source, target)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceNetwork<S> {
    countries: Vec<String>,
    edges: Vec<Edge<S>>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl<S: Scalar> ImbalanceNetwork<S> {
    /// Assembles a network from an arbitrary edge list, checking the
    /// structural invariants. Node indices in `edges` refer to `countries` as
    /// given; the result is reordered canonically.
    pub fn from_edges(countries: Vec<String>, edges: Vec<Edge<S>>) -> Result<Self, NetworkError> {
        let mut seen = HashSet::new();
        for c in &countries {
            if !seen.insert(c.as_str()) {
                return Err(NetworkError::DuplicateCountry(c.clone()));
            }
        }
        let mut order: Vec<usize> = (0..countries.len()).collect();
        order.sort_by(|&a, &b| countries[a].cmp(&countries[b]));
        let mut remap = vec![0; countries.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let sorted: Vec<String> = order.iter().map(|&i| countries[i].clone()).collect();

        let mut pairs = HashSet::new();
        let mut canonical = Vec::with_capacity(edges.len());
        for e in edges {
            if e.source >= countries.len() || e.target >= countries.len() {
                return Err(NetworkError::NodeOutOfRange {
                    source_node: e.source,
                    target: e.target,
                });
            }
            if e.source == e.target {
                return Err(NetworkError::SelfLoop(countries[e.source].clone()));
            }
            if !e.weight.is_finite_value() || e.weight <= S::zero() {
                return Err(NetworkError::BadWeight(
                    countries[e.source].clone(),
                    countries[e.target].clone(),
                ));
            }
            let (s, t) = (remap[e.source], remap[e.target]);
            if !pairs.insert((s.min(t), s.max(t))) {
                return Err(NetworkError::ParallelEdge(
                    countries[e.source].clone(),
                    countries[e.target].clone(),
                ));
            }
            canonical.push(Edge {
                source: s,
                target: t,
                weight: e.weight,
            });
        }
        canonical.sort_by_key(|e| (e.source, e.target));
        Ok(Self::assemble(sorted, canonical))
    }

    fn assemble(countries: Vec<String>, edges: Vec<Edge<S>>) -> Self {
        let n = countries.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            out_edges[e.source].push(idx);
            in_edges[e.target].push(idx);
        }
        ImbalanceNetwork {
            countries,
            edges,
            out_edges,
            in_edges,
        }
    }

    pub fn len(&self) -> usize {
        self.countries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.countries.is_empty()
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn country(&self, node: usize) -> &str {
        &self.countries[node]
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.countries.binary_search_by(|c| c.as_str().cmp(code)).ok()
    }

    pub fn edges(&self) -> &[Edge<S>] {
        &self.edges
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge<S>> + '_ {
        self.out_edges[node].iter().map(move |&e| &self.edges[e])
    }

    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &Edge<S>> + '_ {
        self.in_edges[node].iter().map(move |&e| &self.edges[e])
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out_edges[node].len()
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_edges[node].len()
    }

    /// The edge `source -> target`, if present.
    pub fn edge(&self, source: usize, target: usize) -> Option<&Edge<S>> {
        self.out_edges(source).find(|e| e.target == target)
    }

    pub fn out_strength(&self, node: usize) -> S {
        self.out_edges(node).fold(S::zero(), |acc, e| acc + e.weight)
    }

    pub fn in_strength(&self, node: usize) -> S {
        self.in_edges(node).fold(S::zero(), |acc, e| acc + e.weight)
    }

    /// Nodes incident to at least one edge.
    pub fn connected_node_count(&self) -> usize {
        (0..self.len())
            .filter(|&v| !self.out_edges[v].is_empty() || !self.in_edges[v].is_empty())
            .count()
    }

    pub fn node_accounts(&self) -> Vec<NodeAccount<S>> {
        (0..self.len())
            .map(|v| {
                let s_in = self.in_strength(v);
                let s_out = self.out_strength(v);
                NodeAccount {
                    country: self.countries[v].clone(),
                    k_in: self.in_degree(v),
                    k_out: self.out_degree(v),
                    s_in,
                    s_out,
                    delta_s: s_in - s_out,
                }
            })
            .collect()
    }

    pub fn total_flux(&self) -> S {
        self.edges.iter().fold(S::zero(), |acc, e| acc + e.weight)
    }
}

/// Builds the imbalance network: for each pair, `T_ij = E_ij - E_ji` and an
/// edge `i -> j` of weight `|T_ij|` when `T_ij < 0`. Pairs whose imbalance
/// vanishes within [`Scalar::cancellation_tolerance`] of the larger flow
/// produce no edge.
pub fn build_imbalance_network<S: Scalar>(
    tm: &TradeMatrix<S>,
) -> Result<ImbalanceNetwork<S>, NetworkError> {
    let report = validate_trade_matrix(tm);
    if !report.violations.is_empty() {
        return Err(NetworkError::InvalidMatrix(report.violations.join("; ")));
    }
    let n = tm.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (e_ij, e_ji) = (tm.get(i, j), tm.get(j, i));
            let imbalance = e_ij - e_ji;
            let scale = max_of(e_ij, e_ji);
            if imbalance.abs() <= S::cancellation_tolerance() * scale || imbalance.is_zero() {
                continue;
            }
            if imbalance < S::zero() {
                edges.push(Edge {
                    source: i,
                    target: j,
                    weight: -imbalance,
                });
            } else {
                edges.push(Edge {
                    source: j,
                    target: i,
                    weight: imbalance,
                });
            }
        }
    }
    ImbalanceNetwork::from_edges(tm.countries.clone(), edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    /// Net producer, `delta_s > 0`.
    Sink,
    /// Net consumer, `delta_s < 0`.
    Source,
    Neutral,
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeClass::Sink => "sink",
            NodeClass::Source => "source",
            NodeClass::Neutral => "neutral",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeAccount<S> {
    pub country: String,
    pub k_in: usize,
    pub k_out: usize,
    pub s_in: S,
    pub s_out: S,
    pub delta_s: S,
}

impl<S: Scalar> NodeAccount<S> {
    pub fn class(&self) -> NodeClass {
        if self.delta_s > S::zero() {
            NodeClass::Sink
        } else if self.delta_s < S::zero() {
            NodeClass::Source
        } else {
            NodeClass::Neutral
        }
    }

    pub fn is_isolated(&self) -> bool {
        self.k_in == 0 && self.k_out == 0
    }
}

/// Sum of all net imbalances. Zero up to rounding for any network; reported
/// rather than enforced so hand-made account lists can be audited.
pub fn global_balance_residual<S: Scalar>(accounts: &[NodeAccount<S>]) -> S {
    accounts.iter().fold(S::zero(), |acc, a| acc + a.delta_s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Edge-weight histogram over `[min, max]`, linear or log-spaced. When all
/// weights coincide a single bin holds them.
pub fn flux_histogram<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    n_bins: usize,
    log_scale: bool,
) -> Result<Vec<HistogramBin>, NetworkError> {
    if n_bins == 0 {
        return Err(NetworkError::NoBins);
    }
    let weights: Vec<f64> = net.edges().iter().map(|e| e.weight.to_f64_lossy()).collect();
    if weights.is_empty() {
        return Ok(Vec::new());
    }
    let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(vec![HistogramBin {
            lower: lo,
            upper: hi,
            count: weights.len(),
        }]);
    }
    let (a, b) = if log_scale { (lo.ln(), hi.ln()) } else { (lo, hi) };
    let width = (b - a) / n_bins as f64;
    let mut counts: BTreeMap<usize, usize> = (0..n_bins).map(|i| (i, 0)).collect();
    for w in weights {
        let x = if log_scale { w.ln() } else { w };
        let idx = (((x - a) / width) as usize).min(n_bins - 1);
        *counts.get_mut(&idx).unwrap() += 1;
    }
    let edge = |i: usize| {
        let x = a + width * i as f64;
        if log_scale {
            x.exp()
        } else {
            x
        }
    };
    Ok(counts
        .into_iter()
        .map(|(i, count)| HistogramBin {
            lower: if i == 0 { lo } else { edge(i) },
            upper: if i + 1 == n_bins { hi } else { edge(i + 1) },
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn codes(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("C{i}")).collect()
    }

    fn edge<S>(source: usize, target: usize, weight: S) -> Edge<S> {
        Edge {
            source,
            target,
            weight,
        }
    }

    #[test]
    fn two_country_direction() {
        // E[1][2] = 5, E[2][1] = 3: T_12 = 2, so money flows 2 -> 1.
        let tm = TradeMatrix::from_rows(2000, codes(2), &[vec![0.0, 5.0], vec![3.0, 0.0]]);
        let net = build_imbalance_network(&tm).unwrap();
        assert_eq!(net.edges(), &[edge(1, 0, 2.0)]);
        let accounts = net.node_accounts();
        assert_eq!(accounts[0].class(), NodeClass::Sink);
        assert_eq!(accounts[1].class(), NodeClass::Source);
    }

    #[test]
    fn balanced_pair_has_no_edge() {
        let tm = TradeMatrix::from_rows(2000, codes(2), &[vec![0.0, 4.0], vec![4.0, 0.0]]);
        let net = build_imbalance_network(&tm).unwrap();
        assert!(net.edges().is_empty());
        assert_eq!(net.len(), 2);
    }

    #[test]
    fn near_balanced_pair_is_noise() {
        let tm = TradeMatrix::from_rows(
            2000,
            codes(2),
            &[vec![0.0, 0.1 + 0.2], vec![0.3, 0.0]],
        );
        assert!(build_imbalance_network(&tm).unwrap().edges().is_empty());
    }

    #[test]
    fn three_country_cycle_matches_pairwise_oracle() {
        let rows = [
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 2.0],
            vec![2.0, 0.0, 0.0],
        ];
        let tm = TradeMatrix::from_rows(2000, codes(3), &rows);
        let net = build_imbalance_network(&tm).unwrap();
        // brute force over ordered pairs: edge i -> j iff E_ij - E_ji < 0
        let mut expected = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                let t: f64 = rows[i][j] - rows[j][i];
                if i != j && t < 0.0 {
                    expected.push(edge(i, j, -t));
                }
            }
        }
        assert_eq!(net.edges(), expected.as_slice());
        assert_eq!(
            net.edges(),
            &[edge(0, 2, 2.0), edge(1, 0, 3.0), edge(2, 1, 2.0)]
        );
    }

    #[test]
    fn builder_rejects_negative_entries() {
        let tm = TradeMatrix::from_rows(2000, codes(2), &[vec![0.0, -1.0], vec![0.0, 0.0]]);
        assert!(matches!(
            build_imbalance_network(&tm),
            Err(NetworkError::InvalidMatrix(_))
        ));
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        let net = ImbalanceNetwork::from_edges(
            vec!["b".into(), "a".into(), "c".into()],
            vec![edge(2, 0, 1.0), edge(0, 1, 2.0)],
        )
        .unwrap();
        assert_eq!(net.countries(), &["a", "b", "c"]);
        assert_eq!(net.edges(), &[edge(1, 0, 2.0), edge(2, 1, 1.0)]);
        assert_eq!(net.index_of("c"), Some(2));
        assert_eq!(net.index_of("z"), None);
    }

    #[test]
    fn from_edges_rejects_bad_structure() {
        assert!(matches!(
            ImbalanceNetwork::from_edges(codes(2), vec![edge(0, 1, 1.0), edge(1, 0, 1.0)]),
            Err(NetworkError::ParallelEdge(..))
        ));
        assert!(matches!(
            ImbalanceNetwork::from_edges(codes(2), vec![edge(0, 0, 1.0)]),
            Err(NetworkError::SelfLoop(_))
        ));
        assert!(matches!(
            ImbalanceNetwork::from_edges(codes(2), vec![edge(0, 1, 0.0)]),
            Err(NetworkError::BadWeight(..))
        ));
        assert!(matches!(
            ImbalanceNetwork::from_edges(codes(2), vec![edge(0, 1, f64::NAN)]),
            Err(NetworkError::BadWeight(..))
        ));
        assert!(matches!(
            ImbalanceNetwork::from_edges(codes(2), vec![edge(0, 5, 1.0)]),
            Err(NetworkError::NodeOutOfRange { .. })
        ));
        assert!(matches!(
            ImbalanceNetwork::<f64>::from_edges(vec!["a".into(), "a".into()], vec![]),
            Err(NetworkError::DuplicateCountry(_))
        ));
    }

    #[test]
    fn single_edge_accounts() {
        let net = ImbalanceNetwork::from_edges(
            vec!["a".into(), "b".into(), "z".into()],
            vec![edge(0, 1, 2.0)],
        )
        .unwrap();
        let acc = net.node_accounts();
        assert_eq!((acc[0].k_out, acc[0].s_out, acc[0].delta_s), (1, 2.0, -2.0));
        assert_eq!(acc[0].class(), NodeClass::Source);
        assert_eq!((acc[1].k_in, acc[1].s_in, acc[1].delta_s), (1, 2.0, 2.0));
        assert_eq!(acc[1].class(), NodeClass::Sink);
        assert!(acc[2].is_isolated());
        assert_eq!(acc[2].class(), NodeClass::Neutral);
        assert_eq!(acc[2].s_in + acc[2].s_out, 0.0);
    }

    #[test]
    fn star_hub_is_sink() {
        let edges = vec![edge(1, 0, 1.0), edge(2, 0, 1.0), edge(3, 0, 1.0), edge(0, 4, 2.0)];
        let net = ImbalanceNetwork::from_edges(codes(5), edges).unwrap();
        let hub = &net.node_accounts()[0];
        assert_eq!(hub.delta_s, 1.0);
        assert_eq!(hub.class(), NodeClass::Sink);
    }

    #[test]
    fn residual_and_flux() {
        let net = ImbalanceNetwork::from_edges(codes(3), vec![edge(0, 1, 2.0), edge(1, 2, 3.0)])
            .unwrap();
        let acc = net.node_accounts();
        assert_eq!(global_balance_residual(&acc), 0.0);
        assert_eq!(net.total_flux(), 5.0);
        assert_eq!(acc.iter().map(|a| a.s_in).sum::<f64>(), 5.0);
        assert_eq!(acc.iter().map(|a| a.s_out).sum::<f64>(), 5.0);

        let empty = ImbalanceNetwork::<f64>::from_edges(vec![], vec![]).unwrap();
        assert_eq!(empty.total_flux(), 0.0);
        assert_eq!(global_balance_residual(&empty.node_accounts()), 0.0);

        let mut hand = acc.clone();
        hand[0].delta_s = 1.0;
        assert_eq!(global_balance_residual(&hand), 3.0);
    }

    #[test]
    fn exact_rational_network() {
        let tm: TradeMatrix<Rational> = TradeMatrix::from_rows(
            2000,
            codes(2),
            &[
                vec![Rational::from_integer(0), Rational::new(1, 3)],
                vec![Rational::new(1, 7), Rational::from_integer(0)],
            ],
        );
        let net = build_imbalance_network(&tm).unwrap();
        assert_eq!(net.edges()[0].weight, Rational::new(4, 21));
    }

    #[test]
    fn histogram_cases() {
        let single = ImbalanceNetwork::from_edges(codes(2), vec![edge(0, 1, 3.0)]).unwrap();
        let h = flux_histogram(&single, 10, true).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].count, 1);

        let uniform = ImbalanceNetwork::from_edges(
            codes(4),
            vec![edge(0, 1, 2.0), edge(2, 3, 2.0), edge(0, 3, 2.0)],
        )
        .unwrap();
        let h = flux_histogram(&uniform, 5, false).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![3]);

        let empty = ImbalanceNetwork::<f64>::from_edges(codes(2), vec![]).unwrap();
        assert!(flux_histogram(&empty, 4, true).unwrap().is_empty());
        assert_eq!(flux_histogram(&single, 0, true), Err(NetworkError::NoBins));

        let spread = ImbalanceNetwork::from_edges(
            codes(4),
            vec![edge(0, 1, 1.0), edge(2, 3, 10.0), edge(0, 3, 100.0)],
        )
        .unwrap();
        let h = flux_histogram(&spread, 2, true).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(h[0].lower, 1.0);
        assert_eq!(h[1].upper, 100.0);
    }
}
