//! Extreme values of `φ(x) = g(μ(B_{d(x,z)}(z)))` along orbits.
//!
//! Levels `u_n(y)` come from exact tail inversion: for a non-atomic measure
//! `μ(φ > g(s)) = s`, so `u_n(y) = g(τ(y)/n)` gives `n μ(φ > u_n) = τ(y)`
//! with `τ(y) = e^{−y}`, `y^{−β}` or `(−y)^γ` for the three types.
//!
//! Because `g` is decreasing and `r ↦ μ(B_r(z))` is nondecreasing, the block
//! maximum is `M_n = g(μ(B_{d_min}(z)))` with `d_min` the closest approach of
//! the block to `z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSystem, Topology};
use crate::error::{Error, Result};
use crate::measure::{ball_measure_profile, lebesgue_ball_measure, Ball, BirkhoffConfig, MeasureEstimate, Method};
use crate::sampling::{BallSampler, OrbitSource, SamplerConfig, StationarySampler};
use crate::stats::{binomial_se, replicate_mean};

/// Knots in the radius-to-measure table of non-Lebesgue systems.
pub const TABLE_KNOTS: usize = 1000;
const TABLE_MIN_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableType {
    /// `g(s) = −log s`, Gumbel limit.
    Type1,
    /// `g(s) = s^{−1/β}`, Fréchet limit.
    Type2 { beta_frechet: f64 },
    /// `g(s) = D − s^{1/γ}`, Weibull limit.
    Type3 { gamma_weibull: f64, d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub obs_type: ObservableType,
    pub z: f64,
}

impl ObservableSpec {
    pub fn new(obs_type: ObservableType, z: f64) -> Result<Self> {
        let spec = ObservableSpec { obs_type, z };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.obs_type {
            ObservableType::Type1 => true,
            ObservableType::Type2 { beta_frechet } => beta_frechet > 0.0 && beta_frechet.is_finite(),
            ObservableType::Type3 { gamma_weibull, d } => gamma_weibull > 0.0 && gamma_weibull.is_finite() && d.is_finite(),
        };
        if !ok {
            return Err(Error::invalid(format!("invalid observable parameters {:?}", self.obs_type)));
        }
        if !self.z.is_finite() {
            return Err(Error::invalid("observation center must be finite"));
        }
        Ok(())
    }

    /// `g(s)` for a ball measure `s ∈ [0, 1]`.
    pub fn g(&self, s: f64) -> f64 {
        match self.obs_type {
            ObservableType::Type1 => -s.ln(),
            ObservableType::Type2 { beta_frechet } => s.powf(-1.0 / beta_frechet),
            ObservableType::Type3 { gamma_weibull, d } => d - s.powf(1.0 / gamma_weibull),
        }
    }

    /// `μ(φ > u)` for a non-atomic measure: the `s ∈ [0, 1]` with `g(s) = u`.
    pub fn exact_tail(&self, u: f64) -> f64 {
        let s = match self.obs_type {
            ObservableType::Type1 => (-u).exp(),
            ObservableType::Type2 { beta_frechet } => {
                if u <= 0.0 {
                    1.0
                } else {
                    u.powf(-beta_frechet)
                }
            }
            ObservableType::Type3 { gamma_weibull, d } => {
                if u >= d {
                    0.0
                } else {
                    (d - u).powf(gamma_weibull)
                }
            }
        };
        s.clamp(0.0, 1.0)
    }

    /// `τ(y)` with `n μ(φ > u_n(y)) = τ(y)`.
    pub fn tau(&self, y: f64) -> f64 {
        match self.obs_type {
            ObservableType::Type1 => (-y).exp(),
            ObservableType::Type2 { beta_frechet } => {
                if y > 0.0 {
                    y.powf(-beta_frechet)
                } else {
                    f64::INFINITY
                }
            }
            ObservableType::Type3 { gamma_weibull, .. } => {
                if y <= 0.0 {
                    (-y).powf(gamma_weibull)
                } else {
                    0.0
                }
            }
        }
    }

    /// `u_n(y) = g(τ(y)/n)`, continued to every real `y`.
    pub fn level(&self, n: u64, y: f64) -> f64 {
        let n = n as f64;
        match self.obs_type {
            ObservableType::Type1 => y + n.ln(),
            ObservableType::Type2 { beta_frechet } => y * n.powf(1.0 / beta_frechet),
            ObservableType::Type3 { gamma_weibull, d } => d + y * n.powf(-1.0 / gamma_weibull),
        }
    }
}

/// The limit law `G(y)`.
pub fn limit_cdf(obs_type: ObservableType, y: f64) -> f64 {
    match obs_type {
        ObservableType::Type1 => (-(-y).exp()).exp(),
        ObservableType::Type2 { beta_frechet } => {
            if y > 0.0 {
                (-y.powf(-beta_frechet)).exp()
            } else {
                0.0
            }
        }
        ObservableType::Type3 { gamma_weibull, .. } => {
            if y <= 0.0 {
                (-(-y).powf(gamma_weibull)).exp()
            } else {
                1.0
            }
        }
    }
}

/// `r ↦ μ(B_r(z))`: exact for Lebesgue systems, otherwise a Birkhoff-filled
/// monotone table on log-spaced radii with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RadialMeasure {
    Lebesgue { topology: Topology, center: f64 },
    Table { radii: Vec<f64>, measures: Vec<f64> },
}

impl RadialMeasure {
    pub fn new(system: &MapSystem, z: f64, birkhoff: &BirkhoffConfig, seed: u64) -> Result<Self> {
        if !system.is_map() && !system.has_lebesgue_measure() {
            return Err(Error::Unsupported {
                operation: "extreme values",
                system: system.name(),
            });
        }
        let center = system.normalize(z);
        if system.has_lebesgue_measure() {
            return Ok(RadialMeasure::Lebesgue {
                topology: system.topology(),
                center,
            });
        }
        let step = (1.0 / TABLE_MIN_RADIUS).ln() / (TABLE_KNOTS - 1) as f64;
        let mut radii = vec![0.0];
        radii.extend((0..TABLE_KNOTS).map(|i| TABLE_MIN_RADIUS * (step * i as f64).exp()));
        let mut measures = ball_measure_profile(system, center, &radii, birkhoff, seed)?;
        measures[0] = 0.0;
        *measures.last_mut().expect("non-empty table") = 1.0;
        Ok(RadialMeasure::Table { radii, measures })
    }

    pub fn measure(&self, r: f64) -> f64 {
        match self {
            RadialMeasure::Lebesgue { topology, center } => lebesgue_ball_measure(*topology, *center, r),
            RadialMeasure::Table { radii, measures } => {
                let i = radii.partition_point(|&k| k <= r);
                if i == 0 {
                    return 0.0;
                }
                if i == radii.len() {
                    return 1.0;
                }
                let (r0, r1) = (radii[i - 1], radii[i]);
                let (m0, m1) = (measures[i - 1], measures[i]);
                m0 + (m1 - m0) * (r - r0) / (r1 - r0)
            }
        }
    }

    /// Smallest `r` with `μ(B_r) = s`.
    pub fn radius_for(&self, s: f64) -> f64 {
        match self {
            RadialMeasure::Lebesgue {
                topology: Topology::Circle,
                ..
            } => s / 2.0,
            RadialMeasure::Lebesgue { .. } => {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.measure(mid) < s {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
            RadialMeasure::Table { radii, measures } => {
                let i = measures.partition_point(|&m| m < s);
                if i == 0 {
                    return 0.0;
                }
                if i == measures.len() {
                    return radii[radii.len() - 1];
                }
                let (m0, m1) = (measures[i - 1], measures[i]);
                radii[i - 1] + (radii[i] - radii[i - 1]) * (s - m0) / (m1 - m0)
            }
        }
    }
}

/// `φ(x) = g(μ(B_{d(x,z)}(z)))`; `+∞` at `x = z` for types 1 and 2.
pub fn observable_eval(system: &MapSystem, spec: &ObservableSpec, measure: &RadialMeasure, x: f64) -> f64 {
    spec.g(measure.measure(system.distance(x, system.normalize(spec.z))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvlLevels {
    pub n: u64,
    pub y_grid: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn levels(spec: &ObservableSpec, n: u64, y_grid: &[f64]) -> Result<EvlLevels> {
    if n < 1 {
        return Err(Error::invalid("block length must be at least 1"));
    }
    if y_grid.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("level grid must be finite"));
    }
    Ok(EvlLevels {
        n,
        y_grid: y_grid.to_vec(),
        u: y_grid.iter().map(|&y| spec.level(n, y)).collect(),
    })
}

/// `u_n(y) = y + log n` for `g = −log`.
pub fn levels_type1(n: u64, y_grid: &[f64]) -> Result<EvlLevels> {
    if n < 2 {
        return Err(Error::invalid("type 1 levels need n >= 2"));
    }
    levels(
        &ObservableSpec {
            obs_type: ObservableType::Type1,
            z: 0.0,
        },
        n,
        y_grid,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvlResult {
    pub n: u64,
    pub m: u64,
    pub levels: EvlLevels,
    /// `M_n` of every replica, ascending.
    pub block_max_samples: Vec<f64>,
    pub empirical_cdf: Vec<f64>,
    pub empirical_std_error: Vec<f64>,
    pub limit_cdf: Vec<f64>,
    pub abs_error: Vec<f64>,
    pub sup_distance: f64,
}

/// Closest approach to `z` of each of `m` stationary blocks of length `n`.
fn closest_approaches(system: &MapSystem, z: f64, n: u64, m: usize, sampler: &SamplerConfig, seed: u64) -> Result<Vec<f64>> {
    let source = StationarySampler::new(system, sampler, m, seed)?;
    let topology = system.topology();
    Ok((0..m as u64)
        .into_par_iter()
        .map(|i| {
            let mut dmin = f64::INFINITY;
            source.orbit(i).visit(n, |x| dmin = dmin.min(topology.distance(x, z)));
            dmin
        })
        .collect())
}

/// Empirical law of `M_n` over `m ≥ 100` stationary blocks, compared with
/// the limit law on `y_grid`.
#[allow(clippy::too_many_arguments)]
pub fn block_maxima(
    system: &MapSystem,
    spec: &ObservableSpec,
    measure: &RadialMeasure,
    n: u64,
    m: usize,
    y_grid: &[f64],
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<EvlResult> {
    spec.validate()?;
    if m < 100 {
        return Err(Error::invalid(format!("need at least 100 replicas, got {m}")));
    }
    let levels = levels(spec, n, y_grid)?;
    let z = system.normalize(spec.z);
    let dmins = closest_approaches(system, z, n, m, sampler, seed)?;
    let mut maxima: Vec<f64> = dmins.iter().map(|&d| spec.g(measure.measure(d))).collect();
    maxima.sort_by(f64::total_cmp);
    let mf = m as f64;
    let empirical_cdf: Vec<f64> = levels
        .u
        .iter()
        .map(|&u| maxima.partition_point(|&v| v <= u) as f64 / mf)
        .collect();
    let empirical_std_error = empirical_cdf.iter().map(|&p| binomial_se(p, m as u64)).collect();
    let limit: Vec<f64> = y_grid.iter().map(|&y| limit_cdf(spec.obs_type, y)).collect();
    let abs_error: Vec<f64> = empirical_cdf.iter().zip(&limit).map(|(a, b)| (a - b).abs()).collect();
    let sup_distance = abs_error.iter().copied().fold(0.0, f64::max);
    Ok(EvlResult {
        n,
        m: m as u64,
        levels,
        block_max_samples: maxima,
        empirical_cdf,
        empirical_std_error,
        limit_cdf: limit,
        abs_error,
        sup_distance,
    })
}

/// Monte Carlo sizes and the level parameter shared by the condition checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionConfig {
    pub y: f64,
    pub samples: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        ConditionConfig {
            y: 0.0,
            samples: 20_000,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

/// The exceedance ball `{φ > u_n(y)}` and its measure `τ(y)/n`.
fn exceedance_ball(system: &MapSystem, spec: &ObservableSpec, measure: &RadialMeasure, n: u64, y: f64) -> Result<(Ball, f64)> {
    let s = spec.tau(y) / n as f64;
    if !(s > 0.0 && s < 0.5) {
        return Err(Error::invalid(format!("exceedance measure tau(y)/n = {s} is not in (0, 1/2)")));
    }
    let r = measure.radius_for(s);
    Ok((Ball::new(system, spec.z, r)?, s))
}

/// `|μ(X_0 > u_n, M_{t,l} < u_n) − μ(X_0 > u_n) μ(M_l < u_n)|`, where
/// `M_{t,l}` is the maximum of `X_t, …, X_{t+l−1}`.
pub fn d2_gamma(
    system: &MapSystem,
    spec: &ObservableSpec,
    measure: &RadialMeasure,
    n: u64,
    t_gap: u64,
    l: u64,
    config: &ConditionConfig,
) -> Result<MeasureEstimate> {
    spec.validate()?;
    if l == 0 {
        return Ok(MeasureEstimate::exact(0.0));
    }
    let (ball, s) = exceedance_ball(system, spec, measure, n, config.y)?;
    let m = config.samples.max(1);
    let no_hit = |source: &dyn OrbitSource, skip: u64| -> f64 {
        let misses = (0..m as u64)
            .into_par_iter()
            .filter(|&i| {
                let mut orbit = source.orbit(i);
                orbit.skip_points(skip);
                let mut hit = false;
                orbit.visit(l, |x| hit |= ball.contains(x));
                !hit
            })
            .count();
        misses as f64 / m as f64
    };
    let cond = BallSampler::new(system, &ball, &config.sampler, m, config.seed)?;
    let plain = StationarySampler::new(system, &config.sampler, m, config.seed)?;
    let p1 = no_hit(&cond, t_gap);
    let p2 = no_hit(&plain, 0);
    Ok(MeasureEstimate {
        value: s * (p1 - p2).abs(),
        std_error: s * binomial_se(p1, m as u64).hypot(binomial_se(p2, m as u64)),
        method: Method::MonteCarlo,
        sample_count: 2 * m as u64,
    })
}

/// `n Σ_{j=1}^{⌊n/k⌋} μ(X_0 > u_n, X_j > u_n)`.
pub fn dprime_sum(
    system: &MapSystem,
    spec: &ObservableSpec,
    measure: &RadialMeasure,
    n: u64,
    k: u64,
    config: &ConditionConfig,
) -> Result<MeasureEstimate> {
    spec.validate()?;
    if k < 2 {
        return Err(Error::invalid("D' block count k must be at least 2"));
    }
    let (ball, s) = exceedance_ball(system, spec, measure, n, config.y)?;
    let window = n / k;
    let m = config.samples.max(1);
    let cond = BallSampler::new(system, &ball, &config.sampler, m, config.seed)?;
    let hits: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let mut orbit = cond.orbit(i);
            orbit.skip_points(1);
            let mut h = 0u64;
            orbit.visit(window, |x| h += ball.contains(x) as u64);
            h as f64
        })
        .collect();
    let est = replicate_mean(&hits);
    let scale = n as f64 * s;
    Ok(MeasureEstimate {
        value: scale * est.value,
        std_error: scale * est.std_error,
        method: Method::MonteCarlo,
        sample_count: m as u64,
    })
}
