//! Trade-imbalance network analysis.
//!
//! The pipeline runs from bilateral flow records to a reconciled export
//! matrix ([`ingest`]), to the directed network of net money flows
//! ([`network`]), to local concentration statistics ([`disparity`]),
//! significance-filtered backbones ([`backbone`]) and source/sink attribution
//! by absorbing random walks ([`diffusion`]).
//!
//! Most types are generic over a [`Scalar`]; the aliases below fix the
//! common choices.

pub mod backbone;
pub mod diffusion;
pub mod disparity;
pub mod export;
pub mod ingest;
pub mod network;
pub mod scalar;

pub use scalar::{Rational, Scalar};

pub type TradeMatrix = ingest::TradeMatrix<f64>;
pub type Network = network::ImbalanceNetwork<f64>;
pub type NodeAccount = network::NodeAccount<f64>;
pub type AbsorptionMatrix = diffusion::AbsorptionMatrix<f64>;
pub type RankingTable = diffusion::RankingTable<f64>;

pub type Network32 = network::ImbalanceNetwork<f32>;

/// Exact-arithmetic network for fixtures and oracle checks.
pub type ExactNetwork = network::ImbalanceNetwork<Rational>;
pub type ExactAbsorptionMatrix = diffusion::AbsorptionMatrix<Rational>;
