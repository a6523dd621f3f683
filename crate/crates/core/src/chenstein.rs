//! Poisson approximation for stationary {0,1}-valued processes.
//!
//! For `S = X_1 + … + X_N` with `ε = P(X_1 = 1)` and `ν` the Poisson law of
//! mean `t`, the distance `|P(S ∈ E) − ν(E)|` is bounded by
//! `C3 · #(E ∩ [0, N]) · (N (R1 + R2) + Δ ε)`, where `R1` measures how far
//! `X_1` is from independent of a window starting `Δ` steps later and `R2`
//! sums the pair-hit probabilities inside the gap.
//!
//! Two process modes are supported: finite marked Markov chains, where every
//! quantity is computed exactly by transfer-matrix dynamic programming, and
//! dynamical processes `X_n = 1_B ∘ T^{n−1}`, estimated by Monte Carlo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapKind, MapSystem};
use crate::error::{Error, Result};
use crate::measure::{ball_measure, Ball, BirkhoffConfig, MeasureEstimate, Method};
use crate::sampling::{BallSampler, OrbitSource, SamplerConfig, StationarySampler};
use crate::stats::binomial_se;

pub const MAX_CHAIN_STATES: usize = 12;
pub const MAX_EXACT_LENGTH: usize = 10_000;

/// A stationary finite-state Markov chain with a set of marked states;
/// `X_n = 1` when the chain sits in a marked state at time `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedChain {
    transition: Vec<Vec<f64>>,
    marked: Vec<bool>,
    stationary: Vec<f64>,
}

impl MarkedChain {
    pub fn new(transition: Vec<Vec<f64>>, marked: Vec<bool>) -> Result<Self> {
        let s = transition.len();
        if s == 0 {
            return Err(Error::invalid("chain needs at least one state"));
        }
        if s > MAX_CHAIN_STATES {
            return Err(Error::Capacity(format!(
                "exact mode supports at most {MAX_CHAIN_STATES} states, got {s}"
            )));
        }
        if marked.len() != s {
            return Err(Error::invalid("marked flags must match the number of states"));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != s || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!("row {i} is not a probability vector")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("row {i} sums to {total}")));
            }
        }
        let stationary = solve_stationary(&transition)?;
        let chain = MarkedChain {
            transition,
            marked,
            stationary,
        };
        let residual = chain.stationarity_residual();
        if residual > 1e-12 {
            return Err(Error::invalid(format!(
                "stationary vector is not unique (residual {residual:e}); the chain must be irreducible"
            )));
        }
        Ok(chain)
    }

    /// Two-state chain whose rows are both `(1−ε, ε)`: an i.i.d. Bernoulli process.
    pub fn iid(epsilon: f64) -> Result<Self> {
        let row = vec![1.0 - epsilon, epsilon];
        MarkedChain::new(vec![row.clone(), row], vec![false, true])
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn marked(&self) -> &[bool] {
        &self.marked
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// `ε = P(X_1 = 1)`.
    pub fn epsilon(&self) -> f64 {
        self.stationary
            .iter()
            .zip(&self.marked)
            .filter(|(_, &m)| m)
            .map(|(p, _)| p)
            .sum()
    }

    /// `max_j |(πP)_j − π_j|`.
    pub fn stationarity_residual(&self) -> f64 {
        let next = self.push(&self.stationary);
        next.iter()
            .zip(&self.stationary)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// One step of the forward equation `v ↦ vP`.
    fn push(&self, v: &[f64]) -> Vec<f64> {
        let s = self.states();
        let mut out = vec![0.0; s];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += vi * self.transition[i][j];
            }
        }
        out
    }

    /// Joint law of (state, count) pushed one time step forward, with the
    /// mark of the new state added to the count.
    fn push_counts(&self, table: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let s = self.states();
        let width = table[0].len() + 1;
        let mut out = vec![vec![0.0; width]; s];
        for (i, row) in table.iter().enumerate() {
            for (c, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for j in 0..s {
                    let c2 = c + self.marked[j] as usize;
                    out[j][c2] += p * self.transition[i][j];
                }
            }
        }
        out
    }

    fn seed_counts(&self, v: &[f64]) -> Vec<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut row = vec![0.0; 2];
                row[self.marked[i] as usize] = p;
                row
            })
            .collect()
    }

    fn marginal(table: &[Vec<f64>]) -> Vec<f64> {
        let width = table[0].len();
        (0..width).map(|c| table.iter().map(|row| row[c]).sum()).collect()
    }

    /// `π ⊙ 1_marked`: the stationary law restricted to `{X_1 = 1}`.
    fn marked_start(&self) -> Vec<f64> {
        self.stationary
            .iter()
            .zip(&self.marked)
            .map(|(&p, &m)| if m { p } else { 0.0 })
            .collect()
    }
}

/// Gaussian elimination with partial pivoting on `π (P − I) = 0`, `Σ π = 1`.
fn solve_stationary(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let s = p.len();
    // rows: equations; replace the last balance equation by normalization
    let mut a = vec![vec![0.0; s + 1]; s];
    for (j, row) in a.iter_mut().enumerate().take(s - 1) {
        for (i, cell) in row.iter_mut().enumerate().take(s) {
            *cell = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for cell in a[s - 1].iter_mut() {
        *cell = 1.0;
    }
    for col in 0..s {
        let pivot = (col..s)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::invalid("stationary distribution is not unique"));
        }
        a.swap(col, pivot);
        for r in 0..s {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=s {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    let mut pi: Vec<f64> = (0..s).map(|i| (a[i][s] / a[i][i]).max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    Ok(pi)
}

/// Exact law of `S_1^N` by dynamic programming over (state, count).
pub fn exact_count_distribution(chain: &MarkedChain, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    if n > MAX_EXACT_LENGTH {
        return Err(Error::Capacity(format!("exact count law limited to N <= {MAX_EXACT_LENGTH}")));
    }
    let mut table = chain.seed_counts(&chain.stationary);
    for _ in 1..n {
        table = chain.push_counts(&table);
    }
    Ok(MarkedChain::marginal(&table))
}

/// A dynamical hit process `X_n = 1_B(T^{n−1} x)` with `x ~ μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalProcess {
    pub system: MapSystem,
    pub ball: Ball,
    /// Orbits per Monte Carlo estimate.
    pub samples: usize,
    pub sampler: SamplerConfig,
    pub birkhoff: BirkhoffConfig,
    pub seed: u64,
}

impl DynamicalProcess {
    fn epsilon(&self) -> Result<MeasureEstimate> {
        ball_measure(&self.system, &self.ball, &self.birkhoff, self.seed)
    }

    /// Hit indicators at times `1..=len` (index 0 is time 1) along orbit `i`.
    fn hits(&self, source: &dyn OrbitSource, i: u64, len: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(len);
        source.orbit(i).visit(len as u64, |x| out.push(self.ball.contains(x)));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BinaryProcess {
    Exact(MarkedChain),
    Dynamical(DynamicalProcess),
}

impl BinaryProcess {
    pub fn epsilon(&self) -> Result<MeasureEstimate> {
        match self {
            BinaryProcess::Exact(c) => Ok(MeasureEstimate::exact(c.epsilon())),
            BinaryProcess::Dynamical(d) => d.epsilon(),
        }
    }
}

fn check_window(n: usize, delta: usize) -> Result<()> {
    if delta < 2 || delta >= n {
        return Err(Error::invalid(format!("need 2 <= Delta < N, got Delta = {delta}, N = {n}")));
    }
    Ok(())
}

/// `R1 = sup_{0<j<N−Δ, 0<q<N−Δ−j} |P(X_1 = 1, S_{Δ+1}^{N−j} = q) − ε P(S_{Δ+1}^{N−j} = q)|`.
///
/// Exact mode takes the supremum over every admissible `(j, q)`. Dynamical
/// mode evaluates `j ∈ {1, N/4, N/2, 3N/4}` and every `q` observed, so its
/// value is a lower bound on the true supremum.
pub fn r1_estimate(process: &BinaryProcess, n: usize, delta: usize) -> Result<MeasureEstimate> {
    check_window(n, delta)?;
    match process {
        BinaryProcess::Exact(chain) => r1_exact(chain, n, delta),
        BinaryProcess::Dynamical(d) => r1_monte_carlo(d, n, delta),
    }
}

fn r1_exact(chain: &MarkedChain, n: usize, delta: usize) -> Result<MeasureEstimate> {
    if n > MAX_EXACT_LENGTH {
        return Err(Error::Capacity(format!("exact R1 limited to N <= {MAX_EXACT_LENGTH}")));
    }
    if chain.transition.windows(2).all(|w| w[0] == w[1]) {
        // identical rows: the states are i.i.d., so X_1 is independent of the window
        return Ok(MeasureEstimate::exact(0.0));
    }
    let eps = chain.epsilon();
    // distribution of the state at time Δ+1, jointly with X_1 = 1 / unconditioned
    let mut joint = chain.marked_start();
    for _ in 0..delta {
        joint = chain.push(&joint);
    }
    let mut joint_table = chain.seed_counts(&joint);
    let mut plain_table = chain.seed_counts(&chain.stationary);
    let mut sup = 0.0f64;
    // window length L = N − j − Δ runs over 1..=N−Δ−1 as j runs over N−Δ−1..=1
    let max_len = n - delta - 1;
    for len in 1..=max_len {
        if len > 1 {
            joint_table = chain.push_counts(&joint_table);
            plain_table = chain.push_counts(&plain_table);
        }
        let joint_q = MarkedChain::marginal(&joint_table);
        let plain_q = MarkedChain::marginal(&plain_table);
        for q in 1..len {
            sup = sup.max((joint_q[q] - eps * plain_q[q]).abs());
        }
    }
    Ok(MeasureEstimate::exact(sup))
}

fn r1_monte_carlo(d: &DynamicalProcess, n: usize, delta: usize) -> Result<MeasureEstimate> {
    let eps = d.epsilon()?;
    let m = d.samples.max(1);
    let stationary = StationarySampler::new(&d.system, &d.sampler, m, d.seed)?;
    let conditioned = BallSampler::new(&d.system, &d.ball, &d.sampler, m, d.seed)?;
    let js: Vec<usize> = [1, n / 4, n / 2, 3 * n / 4]
        .into_iter()
        .filter(|&j| j >= 1 && j + delta < n)
        .collect();
    if js.is_empty() {
        return Ok(MeasureEstimate {
            sample_count: 0,
            method: Method::MonteCarlo,
            ..MeasureEstimate::exact(0.0)
        });
    }
    // window S_{Δ+1}^{N−j}: time indices Δ+1..=N−j, i.e. 0-based Δ..N−j
    let window_counts = |source: &dyn OrbitSource| -> Vec<Vec<usize>> {
        (0..m as u64)
            .into_par_iter()
            .map(|i| {
                let hits = d.hits(source, i, n);
                js.iter()
                    .map(|&j| hits[delta..n - j].iter().filter(|&&h| h).count())
                    .collect()
            })
            .collect()
    };
    let cond = window_counts(&conditioned);
    let plain = window_counts(&stationary);
    let mut best = (0.0f64, 0.0f64);
    for (ji, &j) in js.iter().enumerate() {
        let len = n - j - delta;
        let mut hc = vec![0u64; len + 1];
        let mut hp = vec![0u64; len + 1];
        for row in &cond {
            hc[row[ji]] += 1;
        }
        for row in &plain {
            hp[row[ji]] += 1;
        }
        for q in 1..len {
            if hc[q] == 0 && hp[q] == 0 {
                continue;
            }
            let pc = hc[q] as f64 / m as f64;
            let pp = hp[q] as f64 / m as f64;
            // P(X_1 = 1, S = q) = ε P(S = q | X_1 = 1)
            let value = eps.value * (pc - pp).abs();
            if value > best.0 {
                let se = eps.value * binomial_se(pc, m as u64).hypot(binomial_se(pp, m as u64));
                best = (value, se);
            }
        }
    }
    Ok(MeasureEstimate {
        value: best.0,
        std_error: best.1,
        method: Method::MonteCarlo,
        sample_count: 2 * m as u64,
    })
}

/// `R2 = Σ_{n=J}^{Δ−1} P(X_1 = 1, X_{n+1} = 1)`.
pub fn r2_estimate(process: &BinaryProcess, j_lower: usize, delta: usize) -> Result<MeasureEstimate> {
    if j_lower < 1 || j_lower >= delta {
        return Err(Error::invalid(format!("need 1 <= J < Delta, got J = {j_lower}, Delta = {delta}")));
    }
    match process {
        BinaryProcess::Exact(chain) => {
            let mut v = chain.marked_start();
            let mut total = 0.0;
            for lag in 1..delta {
                v = chain.push(&v);
                if lag >= j_lower {
                    total += v.iter().zip(&chain.marked).filter(|(_, &m)| m).map(|(p, _)| p).sum::<f64>();
                }
            }
            Ok(MeasureEstimate::exact(total))
        }
        BinaryProcess::Dynamical(d) => {
            let eps = d.epsilon()?;
            let m = d.samples.max(1);
            let conditioned = BallSampler::new(&d.system, &d.ball, &d.sampler, m, d.seed)?;
            let counts: Vec<f64> = (0..m as u64)
                .into_par_iter()
                .map(|i| {
                    let hits = d.hits(&conditioned, i, delta);
                    hits[j_lower..delta].iter().filter(|&&h| h).count() as f64
                })
                .collect();
            let est = crate::stats::replicate_mean(&counts);
            Ok(MeasureEstimate {
                value: eps.value * est.value,
                std_error: eps.value * est.std_error + est.value * eps.std_error,
                method: Method::MonteCarlo,
                sample_count: m as u64,
            })
        }
    }
}

/// Inputs to the bound. `c3 = None` selects the default `6t + 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub t: f64,
    pub n: usize,
    pub delta: usize,
    pub r1: MeasureEstimate,
    pub r2: MeasureEstimate,
    pub e_size: usize,
    pub c3: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChenSteinReport {
    pub epsilon: f64,
    pub t: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Delta")]
    pub delta: usize,
    #[serde(rename = "R1")]
    pub r1: MeasureEstimate,
    #[serde(rename = "R2")]
    pub r2: MeasureEstimate,
    /// True when `R1` is a Monte Carlo supremum over a sub-grid.
    pub r1_is_lower_bound: bool,
    pub bound: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "E_size")]
    pub e_size: usize,
}

pub fn default_c3(t: f64) -> f64 {
    6.0 * t + 4.0
}

/// `bound = C3 · #E · (N (R1 + R2) + Δ ε)`.
pub fn theorem_bound(inputs: &BoundInputs) -> Result<ChenSteinReport> {
    let finite = [inputs.epsilon, inputs.t, inputs.r1.value, inputs.r2.value]
        .iter()
        .all(|v| v.is_finite())
        && inputs.c3.is_none_or(f64::is_finite);
    if !finite {
        return Err(Error::invalid("bound inputs must be finite"));
    }
    let c3 = inputs.c3.unwrap_or_else(|| default_c3(inputs.t));
    let bound = c3
        * inputs.e_size as f64
        * (inputs.n as f64 * (inputs.r1.value + inputs.r2.value) + inputs.delta as f64 * inputs.epsilon);
    Ok(ChenSteinReport {
        epsilon: inputs.epsilon,
        t: inputs.t,
        n: inputs.n,
        delta: inputs.delta,
        r1: inputs.r1,
        r2: inputs.r2,
        r1_is_lower_bound: inputs.r1.method != Method::Exact,
        bound: bound.max(0.0),
        c3,
        e_size: inputs.e_size,
    })
}

/// Full report for a process: `ε`, `N = ⌊t/ε⌋` (exact mode uses the given
/// `N` and `t = Nε`), `R1`, `R2` over `[j_lower, Δ)`, and the bound.
pub fn report(process: &BinaryProcess, n: usize, delta: usize, j_lower: usize, e_size: usize, c3: Option<f64>) -> Result<ChenSteinReport> {
    let eps = process.epsilon()?;
    let r1 = r1_estimate(process, n, delta)?;
    let r2 = r2_estimate(process, j_lower, delta)?;
    theorem_bound(&BoundInputs {
        epsilon: eps.value,
        t: n as f64 * eps.value,
        n,
        delta,
        r1,
        r2,
        e_size,
        c3,
    })
}

/// `2t²/N`, the bound on `Σ_k |Binomial(N, t/N)(k) − Poisson(t)(k)|`.
pub fn agg_bound(t: f64, n: usize) -> Result<f64> {
    if n == 0 || !(t > 0.0) {
        return Err(Error::invalid("agg_bound needs N >= 1 and t > 0"));
    }
    Ok(2.0 * t * t / n as f64)
}

/// Whether a system can back a dynamical-mode process.
pub fn supports_dynamical(system: &MapSystem) -> bool {
    !matches!(system.kind(), MapKind::BernoulliIid { .. })
}
