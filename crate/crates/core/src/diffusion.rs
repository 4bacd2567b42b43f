//! The dollar experiment: absorbing random walks that attribute each
//! source's deficit to the sinks that retain it (forward) and each sink's
//! surplus to the sources that fund it (backward).
//!
//! A forward walker starts at a source and hops along outgoing links with
//! probability proportional to their weight. On every arrival at a sink `v`
//! it is absorbed with probability `delta_s(v) / s_in(v)`; sources and neutral
//! nodes are crossed. The backward walk mirrors this over incoming links with
//! absorption `|delta_s(v)| / s_out(v)` at sources.
//!
//! [`exact_absorption`] solves the same chain as a linear system and serves
//! as the oracle for the Monte Carlo estimators.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::network::{ImbalanceNetwork, NodeAccount, NodeClass};
use crate::scalar::Scalar;

/// Networks above this size use the iterative solver under
/// [`SolverMethod::Auto`].
pub const DENSE_SOLVE_LIMIT: usize = 2000;

/// Fraction of walkers lost to the step cap above which a result is flagged.
pub const NON_ABSORBED_WARNING: f64 = 0.01;

const WALKERS_PER_BLOCK: u64 = 1 << 15;
const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error("unknown country {0:?}")]
    UnknownCountry(String),
    #[error("{country} is a {class} and cannot {role} a {direction} walk")]
    WrongClass {
        country: String,
        class: NodeClass,
        direction: WalkDirection,
        role: &'static str,
    },
    #[error("walk configuration needs at least one walker and one step")]
    InvalidConfig,
    #[error("network needs at least one source and one sink")]
    NoAbsorbingPair,
    #[error("walkers can avoid absorption forever in component {0:?}")]
    Trapped(Vec<String>),
    #[error("iterative solver did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("absorption matrices disagree: {0}")]
    Mismatch(String),
    #[error("unknown direction {0:?} (expected forward or backward)")]
    UnknownDirection(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkDirection {
    /// Source to sink: `e_ij`.
    Forward,
    /// Sink to source: `g_ij`.
    Backward,
}

impl WalkDirection {
    /// Node class a walk starts from.
    pub fn start_class(self) -> NodeClass {
        match self {
            WalkDirection::Forward => NodeClass::Source,
            WalkDirection::Backward => NodeClass::Sink,
        }
    }

    /// Node class that absorbs walkers.
    pub fn absorbing_class(self) -> NodeClass {
        match self {
            WalkDirection::Forward => NodeClass::Sink,
            WalkDirection::Backward => NodeClass::Source,
        }
    }
}

impl fmt::Display for WalkDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WalkDirection::Forward => "forward",
            WalkDirection::Backward => "backward",
        })
    }
}

impl FromStr for WalkDirection {
    type Err = DiffusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(WalkDirection::Forward),
            "backward" => Ok(WalkDirection::Backward),
            other => Err(DiffusionError::UnknownDirection(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WalkConfig {
    pub n_walkers: u64,
    /// Hop cap per walker; walkers reaching it count as non-absorbed.
    pub max_steps: u64,
    pub seed: u64,
}

impl WalkConfig {
    pub fn new(n_walkers: u64, max_steps: u64, seed: u64) -> Result<Self, DiffusionError> {
        if n_walkers == 0 || max_steps == 0 {
            return Err(DiffusionError::InvalidConfig);
        }
        Ok(WalkConfig {
            n_walkers,
            max_steps,
            seed,
        })
    }
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            n_walkers: 1_000_000,
            max_steps: 1_000_000,
            seed: 0,
        }
    }
}

/// Absorption probability of `account` for walks in `direction`.
pub fn absorption_probability<S: Scalar>(
    account: &NodeAccount<S>,
    direction: WalkDirection,
) -> Result<S, DiffusionError> {
    let class = account.class();
    if class != direction.absorbing_class() {
        return Err(DiffusionError::WrongClass {
            country: account.country.clone(),
            class,
            direction,
            role: "absorb",
        });
    }
    Ok(match direction {
        WalkDirection::Forward => account.delta_s / account.s_in,
        WalkDirection::Backward => account.delta_s.abs() / account.s_out,
    })
}

/// Transition structure of one walk direction.
struct Chain<S> {
    absorb: Vec<S>,
    hops: Vec<Vec<(usize, S)>>,
    starts: Vec<usize>,
    ends: Vec<usize>,
}

impl<S: Scalar> Chain<S> {
    fn new(net: &ImbalanceNetwork<S>, direction: WalkDirection) -> Self {
        let accounts = net.node_accounts();
        let absorb = accounts
            .iter()
            .map(|a| absorption_probability(a, direction).unwrap_or_else(|_| S::zero()))
            .collect();
        let hops = (0..net.len())
            .map(|v| match direction {
                WalkDirection::Forward => {
                    let s = accounts[v].s_out;
                    net.out_edges(v).map(|e| (e.target, e.weight / s)).collect()
                }
                WalkDirection::Backward => {
                    let s = accounts[v].s_in;
                    net.in_edges(v).map(|e| (e.source, e.weight / s)).collect()
                }
            })
            .collect();
        let of_class = |class: NodeClass| {
            accounts
                .iter()
                .enumerate()
                .filter(|(_, a)| a.class() == class)
                .map(|(v, _)| v)
                .collect::<Vec<_>>()
        };
        Chain {
            absorb,
            hops,
            starts: of_class(direction.start_class()),
            ends: of_class(direction.absorbing_class()),
        }
    }
}

/// Per-start distribution over absorbing nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionMatrix<S> {
    pub direction: WalkDirection,
    pub countries: Vec<String>,
    /// Row node indices: sources forward, sinks backward.
    pub starts: Vec<usize>,
    /// Column node indices: sinks forward, sources backward.
    pub ends: Vec<usize>,
    pub rows: Vec<Vec<S>>,
    /// Mass lost to the step cap, per row. Zero for exact solutions.
    pub non_absorbed: Vec<S>,
}

impl<S: Scalar> AbsorptionMatrix<S> {
    pub fn row_index(&self, start: usize) -> Option<usize> {
        self.starts.iter().position(|&s| s == start)
    }

    pub fn column_index(&self, end: usize) -> Option<usize> {
        self.ends.iter().position(|&e| e == end)
    }

    /// Share of walkers from `start` absorbed at `end`; zero when either is
    /// not part of the matrix.
    pub fn share(&self, start: usize, end: usize) -> S {
        match (self.row_index(start), self.column_index(end)) {
            (Some(r), Some(c)) => self.rows[r][c],
            _ => S::zero(),
        }
    }

    pub fn row_sum(&self, row: usize) -> S {
        self.rows[row].iter().fold(S::zero(), |acc, &x| acc + x)
    }
}

/// Monte Carlo estimate for one start node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkOutcome {
    pub start: usize,
    pub ends: Vec<usize>,
    pub shares: Vec<f64>,
    pub non_absorbed: f64,
    /// Set when `non_absorbed` exceeds [`NON_ABSORBED_WARNING`].
    pub warning: Option<String>,
}

/// Alias-table sampler over one direction of the network.
struct Sampler {
    absorb: Vec<f64>,
    targets: Vec<Vec<usize>>,
    tables: Vec<Option<WeightedAliasIndex<f64>>>,
    column: Vec<Option<usize>>,
    ends: Vec<usize>,
}

impl Sampler {
    fn new<S: Scalar>(chain: &Chain<S>) -> Self {
        let n = chain.absorb.len();
        let mut column = vec![None; n];
        for (c, &v) in chain.ends.iter().enumerate() {
            column[v] = Some(c);
        }
        Sampler {
            absorb: chain.absorb.iter().map(|p| p.to_f64_lossy()).collect(),
            targets: chain.hops.iter().map(|h| h.iter().map(|&(t, _)| t).collect()).collect(),
            tables: chain
                .hops
                .iter()
                .map(|h| {
                    if h.is_empty() {
                        None
                    } else {
                        WeightedAliasIndex::new(h.iter().map(|&(_, p)| p.to_f64_lossy()).collect())
                            .ok()
                    }
                })
                .collect(),
            column,
            ends: chain.ends.clone(),
        }
    }

    /// Absorbing column of one walker, or `None` if it hit the cap or a dead
    /// end.
    fn walk<R: Rng>(&self, start: usize, max_steps: u64, rng: &mut R) -> Option<usize> {
        let mut v = start;
        for _ in 0..max_steps {
            let table = self.tables[v].as_ref()?;
            v = self.targets[v][table.sample(rng)];
            let p = self.absorb[v];
            if p > 0.0 && rng.random::<f64>() < p {
                return self.column[v];
            }
        }
        None
    }

    fn run(&self, start: usize, cfg: &WalkConfig) -> WalkOutcome {
        let n_blocks = cfg.n_walkers.div_ceil(WALKERS_PER_BLOCK);
        let width = self.ends.len();
        let (counts, lost) = (0..n_blocks)
            .into_par_iter()
            .map(|block| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((start as u64) << 32) ^ block);
                let walkers = WALKERS_PER_BLOCK.min(cfg.n_walkers - block * WALKERS_PER_BLOCK);
                let mut counts = vec![0u64; width];
                let mut lost = 0u64;
                for _ in 0..walkers {
                    match self.walk(start, cfg.max_steps, &mut rng) {
                        Some(c) => counts[c] += 1,
                        None => lost += 1,
                    }
                }
                (counts, lost)
            })
            .reduce(
                || (vec![0u64; width], 0u64),
                |(mut a, la), (b, lb)| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    (a, la + lb)
                },
            );
        let n = cfg.n_walkers as f64;
        let non_absorbed = lost as f64 / n;
        WalkOutcome {
            start,
            ends: self.ends.clone(),
            shares: counts.iter().map(|&c| c as f64 / n).collect(),
            non_absorbed,
            warning: (non_absorbed > NON_ABSORBED_WARNING).then(|| {
                format!(
                    "{:.2}% of walkers were not absorbed within {} steps",
                    100.0 * non_absorbed,
                    cfg.max_steps
                )
            }),
        }
    }
}

fn start_node<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    country: &str,
    direction: WalkDirection,
) -> Result<usize, DiffusionError> {
    let node = net
        .index_of(country)
        .ok_or_else(|| DiffusionError::UnknownCountry(country.to_string()))?;
    let account = &net.node_accounts()[node];
    let class = account.class();
    if class != direction.start_class() {
        return Err(DiffusionError::WrongClass {
            country: country.to_string(),
            class,
            direction,
            role: "start",
        });
    }
    Ok(node)
}

fn walk_mc<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    country: &str,
    direction: WalkDirection,
    cfg: &WalkConfig,
) -> Result<WalkOutcome, DiffusionError> {
    if cfg.n_walkers == 0 || cfg.max_steps == 0 {
        return Err(DiffusionError::InvalidConfig);
    }
    let start = start_node(net, country, direction)?;
    Ok(Sampler::new(&Chain::new(net, direction)).run(start, cfg))
}

/// Forward walkers from `source`; shares are over all sinks.
pub fn forward_walk_mc<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    source: &str,
    cfg: &WalkConfig,
) -> Result<WalkOutcome, DiffusionError> {
    walk_mc(net, source, WalkDirection::Forward, cfg)
}

/// Backward walkers from `sink`; shares are over all sources.
pub fn backward_walk_mc<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    sink: &str,
    cfg: &WalkConfig,
) -> Result<WalkOutcome, DiffusionError> {
    walk_mc(net, sink, WalkDirection::Backward, cfg)
}

/// Monte Carlo rows for every start node of `direction`, each with
/// `cfg.n_walkers` walkers.
pub fn walk_matrix_mc<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    direction: WalkDirection,
    cfg: &WalkConfig,
) -> Result<AbsorptionMatrix<f64>, DiffusionError> {
    if cfg.n_walkers == 0 || cfg.max_steps == 0 {
        return Err(DiffusionError::InvalidConfig);
    }
    let chain = Chain::new(net, direction);
    let sampler = Sampler::new(&chain);
    let outcomes: Vec<WalkOutcome> = chain.starts.iter().map(|&s| sampler.run(s, cfg)).collect();
    Ok(AbsorptionMatrix {
        direction,
        countries: net.countries().to_vec(),
        starts: chain.starts.clone(),
        ends: chain.ends.clone(),
        non_absorbed: outcomes.iter().map(|o| o.non_absorbed).collect(),
        rows: outcomes.into_iter().map(|o| o.shares).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Dense elimination up to [`DENSE_SOLVE_LIMIT`] nodes, iterative above.
    #[default]
    Auto,
    Dense,
    /// Fixed-point iteration on the substochastic transition operator.
    Iterative,
}

/// Exact absorption probabilities for every start node.
pub fn exact_absorption<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    direction: WalkDirection,
) -> Result<AbsorptionMatrix<S>, DiffusionError> {
    exact_absorption_with(net, direction, SolverMethod::Auto)
}

pub fn exact_absorption_with<S: Scalar>(
    net: &ImbalanceNetwork<S>,
    direction: WalkDirection,
    method: SolverMethod,
) -> Result<AbsorptionMatrix<S>, DiffusionError> {
    let chain = Chain::new(net, direction);
    if chain.starts.is_empty() || chain.ends.is_empty() {
        return Err(DiffusionError::NoAbsorbingPair);
    }
    let n = net.len();

    // states reachable from some start
    let mut reachable = vec![false; n];
    let mut queue: VecDeque<usize> = chain.starts.iter().copied().collect();
    for &s in &chain.starts {
        reachable[s] = true;
    }
    while let Some(v) = queue.pop_front() {
        if chain.absorb[v] == S::one() {
            continue;
        }
        for &(u, _) in &chain.hops[v] {
            if !reachable[u] {
                reachable[u] = true;
                queue.push_back(u);
            }
        }
    }
    // states that can reach an absorbing node
    let mut predecessors = vec![Vec::new(); n];
    for v in 0..n {
        for &(u, _) in &chain.hops[v] {
            predecessors[u].push(v);
        }
    }
    let mut escapes = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| chain.absorb[v] > S::zero()).collect();
    for &v in &queue {
        escapes[v] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &v in &predecessors[u] {
            if !escapes[v] {
                escapes[v] = true;
                queue.push_back(v);
            }
        }
    }
    let trapped: Vec<String> = (0..n)
        .filter(|&v| reachable[v] && !escapes[v])
        .map(|v| net.country(v).to_string())
        .collect();
    if !trapped.is_empty() {
        return Err(DiffusionError::Trapped(trapped));
    }

    let states: Vec<usize> = (0..n).filter(|&v| reachable[v]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &v) in states.iter().enumerate() {
        local[v] = i;
    }
    let mut column = vec![None; n];
    for (c, &v) in chain.ends.iter().enumerate() {
        column[v] = Some(c);
    }
    // h = b + Q h, with Q[v][u] = (1 - absorb(v)) * hop(v, u) and
    // b[v][col(v)] = absorb(v)
    let m = states.len();
    let width = chain.ends.len();
    let mut transitions: Vec<Vec<(usize, S)>> = Vec::with_capacity(m);
    let mut rhs = vec![vec![S::zero(); width]; m];
    for (i, &v) in states.iter().enumerate() {
        let stay = S::one() - chain.absorb[v];
        transitions.push(
            chain.hops[v]
                .iter()
                .filter(|_| !stay.is_zero())
                .map(|&(u, p)| (local[u], stay * p))
                .collect(),
        );
        if let Some(c) = column[v] {
            rhs[i][c] = chain.absorb[v];
        }
    }

    let use_dense = match method {
        SolverMethod::Auto => m <= DENSE_SOLVE_LIMIT,
        SolverMethod::Dense => true,
        SolverMethod::Iterative => false,
    };
    let solution = if use_dense {
        solve_dense(&transitions, rhs).map_err(|stuck| {
            DiffusionError::Trapped(stuck.into_iter().map(|i| net.country(states[i]).to_string()).collect())
        })?
    } else {
        solve_fixed_point(&transitions, &rhs)?
    };

    Ok(AbsorptionMatrix {
        direction,
        countries: net.countries().to_vec(),
        starts: chain.starts.clone(),
        ends: chain.ends.clone(),
        rows: chain.starts.iter().map(|&s| solution[local[s]].clone()).collect(),
        non_absorbed: vec![S::zero(); chain.starts.len()],
    })
}

/// Solves `(I - Q) H = B` by Gaussian elimination with partial pivoting.
/// On a singular pivot returns the state indices still coupled to it.
fn solve_dense<S: Scalar>(q: &[Vec<(usize, S)>], mut b: Vec<Vec<S>>) -> Result<Vec<Vec<S>>, Vec<usize>> {
    let m = q.len();
    let absorbing: Vec<bool> = b.iter().map(|row| row.iter().any(|x| !x.is_zero())).collect();
    let mut a = vec![vec![S::zero(); m]; m];
    for (i, row) in q.iter().enumerate() {
        a[i][i] = S::one();
        for &(j, p) in row {
            a[i][j] -= p;
        }
    }
    let singular = S::cancellation_tolerance() * S::cancellation_tolerance();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| {
                a[x][col]
                    .abs()
                    .partial_cmp(&a[y][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        if a[pivot][col].abs() <= singular {
            return Err(stuck_states(q, &absorbing));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = S::one() / a[col][col];
        for r in (col + 1)..m {
            let factor = a[r][col] * inv;
            if factor.is_zero() {
                continue;
            }
            let (upper, lower) = a.split_at_mut(r);
            let pivot_row = &upper[col];
            let row = &mut lower[0];
            for k in col..m {
                row[k] -= factor * pivot_row[k];
            }
            let (bu, bl) = b.split_at_mut(r);
            for (x, &y) in bl[0].iter_mut().zip(bu[col].iter()) {
                *x -= factor * y;
            }
        }
    }
    for col in (0..m).rev() {
        let inv = S::one() / a[col][col];
        for x in b[col].iter_mut() {
            *x *= inv;
        }
        for r in 0..col {
            let factor = a[r][col];
            if factor.is_zero() {
                continue;
            }
            let (upper, lower) = b.split_at_mut(col);
            for (x, &y) in upper[r].iter_mut().zip(lower[0].iter()) {
                *x -= factor * y;
            }
        }
    }
    Ok(b)
}

/// States from which no path reaches either absorption or a leak out of `Q`.
fn stuck_states<S: Scalar>(q: &[Vec<(usize, S)>], absorbing: &[bool]) -> Vec<usize> {
    let m = q.len();
    let mut escapes: Vec<bool> = (0..m)
        .map(|i| {
            let kept = q[i].iter().fold(S::zero(), |acc, &(_, p)| acc + p);
            absorbing[i] || kept < S::one()
        })
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..m {
            if !escapes[i] && q[i].iter().any(|&(j, _)| escapes[j]) {
                escapes[i] = true;
                changed = true;
            }
        }
    }
    let stuck: Vec<usize> = (0..m).filter(|&i| !escapes[i]).collect();
    if stuck.is_empty() {
        (0..m).collect()
    } else {
        stuck
    }
}

/// Iterates `H <- B + Q H` from zero until the largest update falls below the
/// scalar's convergence tolerance.
fn solve_fixed_point<S: Scalar>(q: &[Vec<(usize, S)>], b: &[Vec<S>]) -> Result<Vec<Vec<S>>, DiffusionError> {
    let width = b.first().map_or(0, Vec::len);
    let mut h: Vec<Vec<S>> = b.to_vec();
    let tol = S::convergence_tolerance();
    for _ in 0..MAX_ITERATIONS {
        let mut delta = S::zero();
        let next: Vec<Vec<S>> = q
            .iter()
            .zip(b)
            .map(|(row, base)| {
                let mut out = base.clone();
                for &(u, p) in row {
                    for c in 0..width {
                        out[c] += p * h[u][c];
                    }
                }
                out
            })
            .collect();
        for (new, old) in next.iter().zip(&h) {
            for (x, y) in new.iter().zip(old) {
                let d = (*x - *y).abs();
                if d > delta {
                    delta = d;
                }
            }
        }
        h = next;
        if delta < tol {
            return Ok(h);
        }
    }
    Err(DiffusionError::NoConvergence(MAX_ITERATIONS))
}

fn check_pair<S: Scalar>(
    e: &AbsorptionMatrix<S>,
    g: &AbsorptionMatrix<S>,
    accounts: &[NodeAccount<S>],
) -> Result<(), DiffusionError> {
    if e.direction != WalkDirection::Forward || g.direction != WalkDirection::Backward {
        return Err(DiffusionError::Mismatch(
            "expected a forward and a backward matrix".into(),
        ));
    }
    check_accounts(e, accounts)?;
    if e.countries != g.countries {
        return Err(DiffusionError::Mismatch("country sets differ".into()));
    }
    Ok(())
}

fn check_accounts<S: Scalar>(m: &AbsorptionMatrix<S>, accounts: &[NodeAccount<S>]) -> Result<(), DiffusionError> {
    if m.countries.len() != accounts.len()
        || m.countries.iter().zip(accounts).any(|(c, a)| *c != a.country)
    {
        return Err(DiffusionError::Mismatch(
            "accounts do not match the matrix countries".into(),
        ));
    }
    Ok(())
}

/// Largest violation of `|delta_s_i| e_ij = delta_s_j g_ji` over all
/// source/sink pairs, in money units.
pub fn detailed_balance_check<S: Scalar>(
    e: &AbsorptionMatrix<S>,
    g: &AbsorptionMatrix<S>,
    accounts: &[NodeAccount<S>],
) -> Result<S, DiffusionError> {
    check_pair(e, g, accounts)?;
    let mut worst = S::zero();
    for (r, &i) in e.starts.iter().enumerate() {
        for (c, &j) in e.ends.iter().enumerate() {
            let lhs = accounts[i].delta_s.abs() * e.rows[r][c];
            let rhs = accounts[j].delta_s * g.share(j, i);
            let gap = (lhs - rhs).abs();
            if gap > worst {
                worst = gap;
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructedImbalance<S> {
    pub node: usize,
    pub reconstructed: S,
    /// `|delta_s|` from the accounts.
    pub actual: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction<S> {
    /// Sinks: `delta_s_j = sum_i e_ij |delta_s_i|`.
    pub sinks: Vec<ReconstructedImbalance<S>>,
    pub max_relative_error: S,
    /// Sources: `|delta_s_i| = sum_j g_ji delta_s_j`, when `g` was supplied.
    pub sources: Vec<ReconstructedImbalance<S>>,
    pub backward_max_relative_error: Option<S>,
}

fn reconstruct<S: Scalar>(
    m: &AbsorptionMatrix<S>,
    accounts: &[NodeAccount<S>],
) -> (Vec<ReconstructedImbalance<S>>, S) {
    let mut worst = S::zero();
    let nodes = m
        .ends
        .iter()
        .enumerate()
        .map(|(c, &j)| {
            let reconstructed = m
                .starts
                .iter()
                .enumerate()
                .fold(S::zero(), |acc, (r, &i)| acc + m.rows[r][c] * accounts[i].delta_s.abs());
            let actual = accounts[j].delta_s.abs();
            let err = (reconstructed - actual).abs() / actual;
            if err > worst {
                worst = err;
            }
            ReconstructedImbalance {
                node: j,
                reconstructed,
                actual,
            }
        })
        .collect();
    (nodes, worst)
}

/// Rebuilds each sink's surplus from the sources' deficits through `e`, and
/// optionally each source's deficit from the sinks' surpluses through `g`.
pub fn imbalance_reconstruction<S: Scalar>(
    e: &AbsorptionMatrix<S>,
    accounts: &[NodeAccount<S>],
    g: Option<&AbsorptionMatrix<S>>,
) -> Result<Reconstruction<S>, DiffusionError> {
    if e.direction != WalkDirection::Forward {
        return Err(DiffusionError::Mismatch("expected a forward matrix".into()));
    }
    check_accounts(e, accounts)?;
    let (sinks, max_relative_error) = reconstruct(e, accounts);
    let (sources, backward) = match g {
        Some(g) => {
            check_pair(e, g, accounts)?;
            let (nodes, worst) = reconstruct(g, accounts);
            (nodes, Some(worst))
        }
        None => (Vec::new(), None),
    };
    Ok(Reconstruction {
        sinks,
        max_relative_error,
        sources,
        backward_max_relative_error: backward,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingRow<S> {
    pub partner: String,
    pub global_share: S,
    /// Direct bilateral share: `F_ij / s_out(i)` forward, `F_ji / s_in(i)`
    /// backward; zero without a direct link.
    pub local_share: S,
    pub direct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingTable<S> {
    pub focal: String,
    pub direction: WalkDirection,
    pub rows: Vec<RankingRow<S>>,
}

fn sort_rows<S: Scalar>(rows: &mut [RankingRow<S>], key: impl Fn(&RankingRow<S>) -> S) {
    rows.sort_by(|a, b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.partner.cmp(&b.partner))
    });
}

fn all_partner_rows<S: Scalar>(
    matrix: &AbsorptionMatrix<S>,
    net: &ImbalanceNetwork<S>,
    focal: &str,
) -> Result<Vec<RankingRow<S>>, DiffusionError> {
    let node = net
        .index_of(focal)
        .ok_or_else(|| DiffusionError::UnknownCountry(focal.to_string()))?;
    if matrix.countries != net.countries() {
        return Err(DiffusionError::Mismatch("matrix and network country sets differ".into()));
    }
    let row = matrix
        .row_index(node)
        .ok_or_else(|| DiffusionError::UnknownCountry(focal.to_string()))?;
    let strength = match matrix.direction {
        WalkDirection::Forward => net.out_strength(node),
        WalkDirection::Backward => net.in_strength(node),
    };
    Ok(matrix
        .ends
        .iter()
        .zip(&matrix.rows[row])
        .map(|(&partner, &global_share)| {
            let link = match matrix.direction {
                WalkDirection::Forward => net.edge(node, partner),
                WalkDirection::Backward => net.edge(partner, node),
            };
            RankingRow {
                partner: net.country(partner).to_string(),
                global_share,
                local_share: link.map_or(S::zero(), |e| e.weight / strength),
                direct: link.is_some(),
            }
        })
        .collect())
}

/// Top `top_n` partners of `focal` by global share; partners with zero share
/// are omitted. Ties go to the lower country code.
pub fn rank_partners<S: Scalar>(
    matrix: &AbsorptionMatrix<S>,
    net: &ImbalanceNetwork<S>,
    focal: &str,
    top_n: usize,
) -> Result<RankingTable<S>, DiffusionError> {
    let mut rows: Vec<RankingRow<S>> = all_partner_rows(matrix, net, focal)?
        .into_iter()
        .filter(|r| r.global_share > S::zero())
        .collect();
    sort_rows(&mut rows, |r| r.global_share);
    rows.truncate(top_n);
    Ok(RankingTable {
        focal: focal.to_string(),
        direction: matrix.direction,
        rows,
    })
}

/// The neighbour-only ranking by direct bilateral share.
pub fn rank_local_partners<S: Scalar>(
    matrix: &AbsorptionMatrix<S>,
    net: &ImbalanceNetwork<S>,
    focal: &str,
    top_n: usize,
) -> Result<RankingTable<S>, DiffusionError> {
    let mut rows: Vec<RankingRow<S>> = all_partner_rows(matrix, net, focal)?
        .into_iter()
        .filter(|r| r.direct)
        .collect();
    sort_rows(&mut rows, |r| r.local_share);
    rows.truncate(top_n);
    Ok(RankingTable {
        focal: focal.to_string(),
        direction: matrix.direction,
        rows,
    })
}
