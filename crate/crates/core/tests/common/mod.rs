#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Exp1, LogNormal};
use tradeflow::ingest::TradeMatrix;
use tradeflow::network::{build_imbalance_network, Edge, ImbalanceNetwork};

pub fn codes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("C{i:03}")).collect()
}

/// Gravity-style export matrix: heavy-tailed country sizes, lognormal noise,
/// about `density` of ordered pairs trading.
pub fn random_trade_matrix<R: Rng>(n: usize, density: f64, rng: &mut R) -> TradeMatrix<f64> {
    let size = LogNormal::new(0.0, 1.5).unwrap();
    let noise = LogNormal::new(0.0, 1.0).unwrap();
    let sizes: Vec<f64> = (0..n).map(|_| size.sample(rng)).collect();
    let mut tm = TradeMatrix::zeros(2000, codes(n));
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < density {
                tm.set(i, j, sizes[i] * sizes[j] * noise.sample(rng));
            }
        }
    }
    tm
}

pub fn random_trade_network<R: Rng>(n: usize, density: f64, rng: &mut R) -> ImbalanceNetwork<f64> {
    build_imbalance_network(&random_trade_matrix(n, density, rng)).unwrap()
}

/// Random orientation per linked pair and i.i.d. exponential weights, so the
/// normalized shares at every node follow the uniform-spacings law.
pub fn exponential_weight_network<R: Rng>(n: usize, p_link: f64, rng: &mut R) -> ImbalanceNetwork<f64> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p_link {
                let weight: f64 = Exp1.sample(rng);
                let (source, target) = if rng.random::<bool>() { (i, j) } else { (j, i) };
                edges.push(Edge { source, target, weight });
            }
        }
    }
    ImbalanceNetwork::from_edges(codes(n), edges).unwrap()
}

/// S -> A (2), S -> B (1), A -> B (1).
pub fn three_node_fixture<S: tradeflow::Scalar>() -> ImbalanceNetwork<S> {
    let w = |x: usize| S::from_usize_exact(x);
    ImbalanceNetwork::from_edges(
        vec!["A".into(), "B".into(), "S".into()],
        vec![
            Edge { source: 2, target: 0, weight: w(2) },
            Edge { source: 2, target: 1, weight: w(1) },
            Edge { source: 0, target: 1, weight: w(1) },
        ],
    )
    .unwrap()
}
