//! The visit-counting function `ξ = Σ_{n<N} 1_B ∘ T^n` with
//! `N = ⌊t/μ(B)⌋`, its empirical law over stationary initial conditions,
//! and the comparison with Poisson(t).

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};
use statrs::function::factorial::ln_factorial;

use crate::dynamics::{MapKind, MapSystem};
use crate::error::{Error, Result};
use crate::measure::{ball_measure, Ball, BirkhoffConfig, MeasureEstimate};
use crate::rng::{substream, Stream};
use crate::sampling::{Orbit, OrbitSource, SamplerConfig, StationarySampler};
use crate::short_returns::{in_short_return_set, ShortReturnConfig};
use crate::stats::{binomial_se, Estimate};

/// Extra Poisson bins compared beyond the largest observed count.
pub const TV_CUTOFF_MARGIN: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingConfig {
    pub ball: Ball,
    pub t: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub measure_used: MeasureEstimate,
}

impl CountingConfig {
    /// `N = ⌊t/μ⌋` from a given ball measure.
    pub fn from_measure(ball: Ball, t: f64, measure: MeasureEstimate) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("t must be positive, got {t}")));
        }
        let mu = measure.value;
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::DegenerateBall(mu));
        }
        let n = (t / mu).floor();
        if n < 1.0 {
            return Err(Error::invalid(format!("t = {t} is below the ball measure {mu}, so N = 0")));
        }
        if n > u64::MAX as f64 / 2.0 {
            return Err(Error::DegenerateBall(mu));
        }
        Ok(CountingConfig {
            ball,
            t,
            n: n as u64,
            measure_used: measure,
        })
    }
}

pub fn make_config(system: &MapSystem, ball: &Ball, t: f64, birkhoff: &BirkhoffConfig, seed: u64) -> Result<CountingConfig> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("t must be positive, got {t}")));
    }
    let mu = ball_measure(system, ball, birkhoff, seed)?;
    CountingConfig::from_measure(*ball, t, mu)
}

/// Number of the first `n` points that fall in `ball`.
pub fn count_hits(points: impl IntoIterator<Item = f64>, ball: &Ball, n: u64) -> u64 {
    points
        .into_iter()
        .take(n as usize)
        .filter(|&x| ball.contains(x))
        .count() as u64
}

fn count_orbit(orbit: &mut Orbit, ball: &Ball, n: u64) -> u64 {
    let mut hits = 0u64;
    orbit.visit(n, |x| hits += ball.contains(x) as u64);
    hits
}

/// `ξ(x0) = Σ_{k<N} 1_B(T^k x0)` along the floating-point orbit of `x0`.
pub fn count_visits(system: &MapSystem, x0: f64, config: &CountingConfig) -> Result<u64> {
    system.step(x0)?;
    let mut orbit = Orbit::from_point(*system, system.normalize(x0));
    Ok(count_orbit(&mut orbit, &config.ball, config.n))
}

/// Empirical law of `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitHistogram {
    /// `counts[r]` samples with `ξ = r`.
    pub counts: Vec<u64>,
    pub sample_count: u64,
    pub t: f64,
    #[serde(rename = "N")]
    pub n: u64,
    /// Whether the center lies in the very-short-return set, when checked.
    pub center_in_short_return_set: Option<bool>,
}

impl HitHistogram {
    /// Build from `(r, frequency)` pairs in any order; repeated `r` accumulate.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>, t: f64, n: u64) -> Self {
        let mut map = BTreeMap::new();
        for (r, f) in pairs {
            *map.entry(r).or_insert(0u64) += f;
        }
        let len = map.keys().next_back().map_or(0, |&r| r as usize + 1);
        let mut counts = vec![0u64; len];
        for (r, f) in map {
            counts[r as usize] = f;
        }
        let sample_count = counts.iter().sum();
        HitHistogram {
            counts,
            sample_count,
            t,
            n,
            center_in_short_return_set: None,
        }
    }

    pub fn from_samples(samples: &[u64], t: f64, n: u64) -> Self {
        Self::from_pairs(samples.iter().map(|&r| (r, 1)), t, n)
    }

    pub fn probability(&self, r: u64) -> f64 {
        if self.sample_count == 0 {
            return 0.0;
        }
        self.counts.get(r as usize).copied().unwrap_or(0) as f64 / self.sample_count as f64
    }

    pub fn max_count(&self) -> Option<u64> {
        self.counts.iter().rposition(|&c| c > 0).map(|r| r as u64)
    }

    /// Sample mean of `ξ` with its standard error.
    pub fn mean(&self) -> Estimate {
        let m = self.sample_count as f64;
        let (s1, s2) = self.counts.iter().enumerate().fold((0.0, 0.0), |(a, b), (r, &c)| {
            let (r, c) = (r as f64, c as f64);
            (a + r * c, b + r * r * c)
        });
        let mean = s1 / m;
        let var = if m > 1.0 { (s2 - m * mean * mean).max(0.0) / (m - 1.0) } else { 0.0 };
        Estimate {
            value: mean,
            std_error: (var / m).sqrt(),
        }
    }
}

/// Samples of `ξ` from `m` stationary initial conditions.
///
/// For the Bernoulli process the hit indicators are drawn directly, so the
/// law is exactly Binomial(N, ε) up to sampling noise.
pub fn sample_counts(system: &MapSystem, config: &CountingConfig, m: usize, sampler: &SamplerConfig, seed: u64) -> Result<Vec<u64>> {
    if let MapKind::BernoulliIid { epsilon } = system.kind() {
        let n = config.n;
        return Ok((0..m as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, Stream::ReturnCounts, i);
                (0..n).filter(|_| rng.random::<f64>() < epsilon).count() as u64
            })
            .collect());
    }
    let source = StationarySampler::new(system, sampler, m, seed)?;
    let ball = config.ball;
    let n = config.n;
    Ok((0..m as u64)
        .into_par_iter()
        .map(|i| count_orbit(&mut source.orbit(i), &ball, n))
        .collect())
}

/// Histogram of `ξ` over `m ≥ 100` stationary initial conditions.
///
/// When the system is piecewise monotone the center is checked against the
/// very-short-return set at the default `𝔞`; a center inside it is reported
/// with a warning since the Poisson limit is not expected there.
pub fn empirical_distribution(
    system: &MapSystem,
    config: &CountingConfig,
    m: usize,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<HitHistogram> {
    if m < 100 {
        return Err(Error::invalid(format!("need at least 100 samples, got {m}")));
    }
    let flagged = if system.is_piecewise_monotone() {
        let sr = ShortReturnConfig::new(system, config.ball.radius(), None);
        match sr {
            Ok(sr) => Some(in_short_return_set(system, &config.ball, sr.j)?),
            Err(_) => Some(false),
        }
    } else {
        None
    };
    if flagged == Some(true) {
        log::warn!(
            "ball center {} lies in the very-short-return set at radius {}",
            config.ball.center(),
            config.ball.radius()
        );
    }
    let samples = sample_counts(system, config, m, sampler, seed)?;
    let mut hist = HitHistogram::from_samples(&samples, config.t, config.n);
    hist.center_in_short_return_set = flagged;
    Ok(hist)
}

/// `e^{−t} t^r / r!`, evaluated in log space.
pub fn poisson_pmf(t: f64, r: u64) -> f64 {
    if r == 0 {
        return (-t).exp();
    }
    (-t + r as f64 * t.ln() - ln_factorial(r)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonComparison {
    pub tv_distance: f64,
    /// `|P̂(ξ = k) − pois(k)|` for `k ≤ cutoff`.
    pub per_k_errors: Vec<f64>,
    /// Aggregate binomial standard error of the histogram, `½ Σ_k se_k`.
    pub mc_error: f64,
    pub cutoff: u64,
    /// Poisson mass beyond the cutoff.
    pub tail_mass: f64,
}

/// Total variation distance to Poisson(t), with cutoff `K = max + 10` and
/// the Poisson tail beyond `K` counted in full.
pub fn compare_poisson(hist: &HitHistogram) -> Result<PoissonComparison> {
    if hist.sample_count == 0 {
        return Err(Error::invalid("histogram is empty"));
    }
    if !(hist.t > 0.0) {
        return Err(Error::invalid("histogram t must be positive"));
    }
    let cutoff = hist.max_count().unwrap_or(0) + TV_CUTOFF_MARGIN;
    let per_k_errors: Vec<f64> = (0..=cutoff)
        .map(|k| (hist.probability(k) - poisson_pmf(hist.t, k)).abs())
        .collect();
    let tail_mass = Poisson::new(hist.t)
        .map_err(|e| Error::invalid(e.to_string()))?
        .sf(cutoff);
    let tv = 0.5 * per_k_errors.iter().sum::<f64>() + 0.5 * tail_mass;
    let mc_error = 0.5
        * (0..=cutoff)
            .map(|k| binomial_se(hist.probability(k), hist.sample_count))
            .sum::<f64>();
    Ok(PoissonComparison {
        tv_distance: tv.min(1.0),
        per_k_errors,
        mc_error,
        cutoff,
        tail_mass,
    })
}
