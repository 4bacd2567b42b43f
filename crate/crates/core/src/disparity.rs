//! Local flux heterogeneity `kY(k)`, the uniform-spacings null model, and
//! the scaling-exponent fit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::network::ImbalanceNetwork;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DisparityError {
    #[error("{country} has no connections in direction {direction}")]
    NoConnections { country: String, direction: FluxDirection },
    #[error("degree must be at least 1, got {0}")]
    DegreeOutOfRange(usize),
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("fit needs at least 3 profile rows with k >= {k_min}, found {found}")]
    InsufficientData { k_min: usize, found: usize },
    #[error("unknown direction {0:?} (expected in or out)")]
    UnknownDirection(String),
}

/// Which side of a node's links is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxDirection {
    In,
    Out,
}

impl fmt::Display for FluxDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FluxDirection::In => "in",
            FluxDirection::Out => "out",
        })
    }
}

impl FromStr for FluxDirection {
    type Err = DisparityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in" => Ok(FluxDirection::In),
            "out" => Ok(FluxDirection::Out),
            other => Err(DisparityError::UnknownDirection(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityPoint<S> {
    pub country: String,
    pub direction: FluxDirection,
    pub k: usize,
    /// `k * sum(p^2)`, in `[1, k]`.
    pub k_y: S,
    pub null_mean: S,
    pub null_variance: S,
    /// `k_y` lies above the null mean plus two standard deviations.
    pub significant: bool,
}

impl<S: Scalar> DisparityPoint<S> {
    pub fn null_sigma(&self) -> f64 {
        self.null_variance.to_f64_lossy().max(0.0).sqrt()
    }
}

/// Directional link weights of `node`.
pub(crate) fn directional_weights<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    node: usize,
    direction: FluxDirection,
) -> Vec<S> {
    match direction {
        FluxDirection::In => net.in_edges(node).map(|e| e.weight).collect(),
        FluxDirection::Out => net.out_edges(node).map(|e| e.weight).collect(),
    }
}

/// `k * sum_j (w_j / sum w)^2` for positive weights.
pub fn k_y_of_weights<S: Scalar>(weights: &[S]) -> S {
    let total = weights.iter().fold(S::zero(), |acc, &w| acc + w);
    let sum_sq = weights.iter().fold(S::zero(), |acc, &w| {
        let p = w / total;
        acc + p * p
    });
    S::from_usize_exact(weights.len()) * sum_sq
}

/// Mean and variance of `kY` when `k` shares come from `k - 1` uniform cut
/// points on the unit interval: mean `2k/(k+1)`, variance
/// `k^2 ((20 + 4k)/((k+1)(k+2)(k+3)) - 4/(k+1)^2)`.
pub fn null_model_moments<S: Scalar>(k: usize) -> Result<(S, S), DisparityError> {
    if k < 1 {
        return Err(DisparityError::DegreeOutOfRange(k));
    }
    let kk = S::from_usize_exact(k);
    let one = S::one();
    let two = one + one;
    let four = two + two;
    let mean = two * kk / (kk + one);
    let twenty = S::from_usize_exact(20);
    let three = two + one;
    let second = (twenty + four * kk) / ((kk + one) * (kk + two) * (kk + three))
        - four / ((kk + one) * (kk + one));
    Ok((mean, kk * kk * second))
}

/// `value > mean + 2 sqrt(variance)`, decided without a square root.
fn above_two_sigma<S: Scalar>(value: S, mean: S, variance: S) -> bool {
    let excess = value - mean;
    let four = S::from_usize_exact(4);
    excess > S::zero() && excess * excess > four * variance
}

pub fn disparity<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    node: usize,
    direction: FluxDirection,
) -> Result<DisparityPoint<S>, DisparityError> {
    let weights = directional_weights(net, node, direction);
    if weights.is_empty() {
        return Err(DisparityError::NoConnections {
            country: net.country(node).to_string(),
            direction,
        });
    }
    let k = weights.len();
    let k_y = k_y_of_weights(&weights);
    let (null_mean, null_variance) = null_model_moments::<S>(k)?;
    Ok(DisparityPoint {
        country: net.country(node).to_string(),
        direction,
        k,
        k_y,
        null_mean,
        null_variance,
        significant: above_two_sigma(k_y, null_mean, null_variance),
    })
}

/// Disparity for every node with at least one link in `direction`.
pub fn disparity_points<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    direction: FluxDirection,
) -> Vec<DisparityPoint<S>> {
    (0..net.len())
        .filter_map(|v| disparity(net, v, direction).ok())
        .collect()
}

/// Draws `k` segment lengths from `k - 1` uniform cut points on `[0, 1]`.
pub fn null_model_sample<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    if k <= 1 {
        return vec![1.0; k];
    }
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    let mut shares = Vec::with_capacity(k);
    let mut prev = 0.0;
    for c in cuts {
        shares.push(c - prev);
        prev = c;
    }
    shares.push(1.0 - prev);
    shares
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub direction: FluxDirection,
    pub k: usize,
    pub mean_k_y: f64,
    pub null_mean: f64,
    pub null_p2sigma: f64,
    pub n_nodes: usize,
}

/// Mean `kY` per distinct degree, ordered by `k`, with the null envelope.
pub fn disparity_profile<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    direction: FluxDirection,
) -> Result<Vec<ProfileRow>, DisparityError> {
    if net.is_empty() {
        return Err(DisparityError::EmptyNetwork);
    }
    let mut by_degree: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for point in disparity_points(net, direction) {
        let entry = by_degree.entry(point.k).or_insert((0.0, 0));
        entry.0 += point.k_y.to_f64_lossy();
        entry.1 += 1;
    }
    by_degree
        .into_iter()
        .map(|(k, (sum, count))| {
            let (mean, variance) = null_model_moments::<f64>(k)?;
            Ok(ProfileRow {
                direction,
                k,
                mean_k_y: sum / count as f64,
                null_mean: mean,
                null_p2sigma: mean + 2.0 * variance.max(0.0).sqrt(),
                n_nodes: count,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub direction: FluxDirection,
    pub beta: f64,
    pub intercept: f64,
    pub k_range: (usize, usize),
    pub r_squared: f64,
}

/// Node-count weighted least squares of `ln(mean kY)` on `ln k` over rows with
/// `k >= k_min`.
pub fn fit_scaling_exponent(
    profile: &[ProfileRow],
    k_min: usize,
) -> Result<ScalingFit, DisparityError> {
    let rows: Vec<&ProfileRow> = profile
        .iter()
        .filter(|r| r.k >= k_min && r.n_nodes > 0 && r.mean_k_y > 0.0)
        .collect();
    if rows.len() < 3 {
        return Err(DisparityError::InsufficientData {
            k_min,
            found: rows.len(),
        });
    }
    let points: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| ((r.k as f64).ln(), r.mean_k_y.ln(), r.n_nodes as f64))
        .collect();
    let w_sum: f64 = points.iter().map(|p| p.2).sum();
    let x_bar = points.iter().map(|p| p.2 * p.0).sum::<f64>() / w_sum;
    let y_bar = points.iter().map(|p| p.2 * p.1).sum::<f64>() / w_sum;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - x_bar).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - x_bar) * (p.1 - y_bar)).sum();
    let syy: f64 = points.iter().map(|p| p.2 * (p.1 - y_bar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(DisparityError::InsufficientData {
            k_min,
            found: 1,
        });
    }
    let beta = sxy / sxx;
    let intercept = y_bar - beta * x_bar;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ScalingFit {
        direction: rows[0].direction,
        beta,
        intercept,
        k_range: (rows[0].k, rows[rows.len() - 1].k),
        r_squared,
    })
}
