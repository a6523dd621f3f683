//! Invariant-measure evaluation: ball measures, local dimension fits and
//! the annulus ratio.
//!
//! Lebesgue-invariant systems are handled exactly. The Manneville–Pomeau
//! measure has no closed form here, so it is estimated by Birkhoff averages
//! over several independent orbit replicas. Standard errors account for
//! serial correlation through a batch-means estimate of the integrated
//! autocorrelation time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapKind, MapSystem, Topology};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sampling::birkhoff_orbit;
use crate::stats::{batch_tau, fit_line};

/// Birkhoff estimates below this many hits are rejected.
pub const MIN_BIRKHOFF_HITS: u64 = 100;
/// Cap on the integrated autocorrelation time used for error bars.
pub const TAU_CAP: f64 = 1e3;
const BATCHES_PER_REPLICA: u64 = 128;

/// Closed ball `B_ρ(x)` in the system's metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: f64,
    radius: f64,
    topology: Topology,
}

impl Ball {
    pub fn new(system: &MapSystem, center: f64, radius: f64) -> Result<Self> {
        if !center.is_finite() || !system.contains(system.normalize(center)) {
            return Err(Error::invalid(format!("ball center {center} is outside the domain")));
        }
        if !(radius > 0.0 && radius < 0.25) {
            return Err(Error::invalid(format!("ball radius must lie in (0, 1/4), got {radius}")));
        }
        Ok(Ball {
            center: system.normalize(center),
            radius,
            topology: system.topology(),
        })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.topology.distance(x, self.center) <= self.radius
    }

    /// The same center with another radius.
    pub fn with_radius(&self, radius: f64) -> Result<Ball> {
        if !(radius > 0.0 && radius < 0.25) {
            return Err(Error::invalid(format!("ball radius must lie in (0, 1/4), got {radius}")));
        }
        Ok(Ball { radius, ..*self })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Birkhoff,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: Method,
    pub sample_count: u64,
}

impl MeasureEstimate {
    pub fn exact(value: f64) -> Self {
        MeasureEstimate {
            value,
            std_error: 0.0,
            method: Method::Exact,
            sample_count: 0,
        }
    }

    pub fn as_estimate(&self) -> crate::stats::Estimate {
        crate::stats::Estimate {
            value: self.value,
            std_error: self.std_error,
        }
    }
}

/// Orbit length, burn-in and replica count for Birkhoff estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BirkhoffConfig {
    pub orbit_length: u64,
    pub burn_in: u64,
    pub replicas: u64,
}

impl Default for BirkhoffConfig {
    fn default() -> Self {
        BirkhoffConfig {
            orbit_length: 10_000_000,
            burn_in: 10_000,
            replicas: 8,
        }
    }
}

impl BirkhoffConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::invalid("birkhoff replicas must be at least 1"));
        }
        if self.orbit_length < self.replicas * BATCHES_PER_REPLICA {
            return Err(Error::invalid(format!(
                "birkhoff orbit length {} is too short for {} replicas",
                self.orbit_length, self.replicas
            )));
        }
        Ok(())
    }

    fn batch_len(&self) -> u64 {
        self.orbit_length / self.replicas / BATCHES_PER_REPLICA
    }
}

/// Exact measure of a closed ball of radius `r` for Lebesgue systems.
pub fn lebesgue_ball_measure(topology: Topology, center: f64, r: f64) -> f64 {
    match topology {
        Topology::Circle => (2.0 * r).min(1.0),
        Topology::Interval => ((center + r).min(1.0) - (center - r).max(0.0)).max(0.0),
    }
}

/// Visit counts of one orbit to nested balls around a common center.
struct NestedCounts {
    samples: u64,
    batch_len: u64,
    /// `hits[i]` for radius `i`.
    hits: Vec<u64>,
    /// `batches[i][b]` hits of radius `i` in batch `b`.
    batches: Vec<Vec<u64>>,
}

/// One pass over `replicas` independent orbits, counting visits to the balls
/// of every radius in `radii` (sorted ascending) around `center`.
fn birkhoff_nested_counts(
    system: &MapSystem,
    center: f64,
    radii: &[f64],
    config: &BirkhoffConfig,
    seed: u64,
) -> Result<NestedCounts> {
    config.validate()?;
    debug_assert!(radii.windows(2).all(|w| w[0] <= w[1]));
    let topology = system.topology();
    let batch_len = config.batch_len();
    let k = radii.len();
    let per_replica: Vec<Result<Vec<Vec<u64>>>> = (0..config.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut orbit = birkhoff_orbit(system, seed, Stream::Birkhoff, replica, config.burn_in)?;
            let mut out = vec![Vec::with_capacity(BATCHES_PER_REPLICA as usize); k];
            let mut bucket = vec![0u64; k + 1];
            for _ in 0..BATCHES_PER_REPLICA {
                bucket.iter_mut().for_each(|b| *b = 0);
                orbit.visit(batch_len, |x| {
                    let d = topology.distance(x, center);
                    let i = radii.partition_point(|&r| r < d);
                    bucket[i] += 1;
                });
                let mut acc = 0;
                for (i, b) in bucket[..k].iter().enumerate() {
                    acc += b;
                    out[i].push(acc);
                }
            }
            Ok(out)
        })
        .collect();
    let mut batches = vec![Vec::new(); k];
    for replica in per_replica {
        for (i, v) in replica?.into_iter().enumerate() {
            batches[i].extend(v);
        }
    }
    let hits = batches.iter().map(|b| b.iter().sum()).collect();
    Ok(NestedCounts {
        samples: batch_len * BATCHES_PER_REPLICA * config.replicas,
        batch_len,
        hits,
        batches,
    })
}

impl NestedCounts {
    fn estimate(&self, i: usize) -> Result<MeasureEstimate> {
        let hits = self.hits[i];
        if hits < MIN_BIRKHOFF_HITS {
            return Err(Error::InsufficientData(format!(
                "{hits} orbit visits out of {} iterates (need {MIN_BIRKHOFF_HITS})",
                self.samples
            )));
        }
        let n = self.samples as f64;
        let p = hits as f64 / n;
        let tau = batch_tau(&self.batches[i], self.batch_len, p, TAU_CAP);
        let n_eff = n / (2.0 * tau);
        Ok(MeasureEstimate {
            value: p,
            std_error: (p * (1.0 - p) / n_eff).sqrt(),
            method: Method::Birkhoff,
            sample_count: self.samples,
        })
    }
}

/// `μ(B)` for one ball.
pub fn ball_measure(system: &MapSystem, ball: &Ball, config: &BirkhoffConfig, seed: u64) -> Result<MeasureEstimate> {
    Ok(ball_measures(system, ball.center(), &[ball.radius()], config, seed)?.remove(0))
}

/// `μ(B_r(center))` for every `r` in `radii`, sharing one Birkhoff pass.
pub fn ball_measures(
    system: &MapSystem,
    center: f64,
    radii: &[f64],
    config: &BirkhoffConfig,
    seed: u64,
) -> Result<Vec<MeasureEstimate>> {
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid("ball radii must be positive and finite"));
    }
    match system.kind() {
        MapKind::BernoulliIid { epsilon } => Ok(vec![MeasureEstimate::exact(epsilon); radii.len()]),
        _ if system.has_lebesgue_measure() => Ok(radii
            .iter()
            .map(|&r| MeasureEstimate::exact(lebesgue_ball_measure(system.topology(), center, r)))
            .collect()),
        _ => {
            let mut order: Vec<usize> = (0..radii.len()).collect();
            order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
            let sorted: Vec<f64> = order.iter().map(|&i| radii[i]).collect();
            let counts = birkhoff_nested_counts(system, center, &sorted, config, seed)?;
            let mut out = vec![MeasureEstimate::exact(0.0); radii.len()];
            for (pos, &i) in order.iter().enumerate() {
                out[i] = counts.estimate(pos)?;
            }
            Ok(out)
        }
    }
}

/// Raw visit frequencies to nested balls `B_r(center)` for ascending
/// `radii`, without the minimum-hit check. Exact for Lebesgue systems.
pub fn ball_measure_profile(
    system: &MapSystem,
    center: f64,
    radii: &[f64],
    config: &BirkhoffConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || radii.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("profile radii must be finite, nonnegative and ascending"));
    }
    if system.has_lebesgue_measure() {
        return Ok(radii
            .iter()
            .map(|&r| lebesgue_ball_measure(system.topology(), center, r))
            .collect());
    }
    if !system.is_map() {
        return Err(Error::Unsupported {
            operation: "ball measure profile",
            system: system.name(),
        });
    }
    let counts = birkhoff_nested_counts(system, center, radii, config, seed)?;
    Ok(counts.hits.iter().map(|&h| h as f64 / counts.samples as f64).collect())
}

/// Power-law fit of `μ(B_ρ)` against `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    /// Least-squares slope of `log μ(B_ρ)` against `log ρ`.
    pub slope: f64,
    /// Smallest local two-point slope.
    pub d0: f64,
    /// Largest local two-point slope.
    pub d1: f64,
    pub radii: Vec<f64>,
    pub log_measures: Vec<f64>,
    pub measures: Vec<MeasureEstimate>,
    pub residuals: Vec<f64>,
}

pub fn dimension_fit(
    system: &MapSystem,
    center: f64,
    rho_grid: &[f64],
    config: &BirkhoffConfig,
    seed: u64,
) -> Result<DimensionFit> {
    let mut radii = rho_grid.to_vec();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    if radii.len() < 4 {
        return Err(Error::invalid("dimension fit needs at least 4 distinct radii"));
    }
    if radii[radii.len() - 1] / radii[0] < 10f64.powf(1.5) * (1.0 - 1e-9) {
        return Err(Error::invalid("dimension fit radii must span at least 1.5 decades"));
    }
    let measures = ball_measures(system, center, &radii, config, seed)?;
    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let log_m: Vec<f64> = measures.iter().map(|m| m.value.ln()).collect();
    let fit = fit_line(&log_r, &log_m).ok_or_else(|| Error::invalid("degenerate radius grid"))?;
    let local: Vec<f64> = log_r
        .windows(2)
        .zip(log_m.windows(2))
        .map(|(r, m)| (m[1] - m[0]) / (r[1] - r[0]))
        .collect();
    let d0 = local.iter().copied().fold(f64::INFINITY, f64::min);
    let d1 = local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DimensionFit {
        slope: fit.slope,
        d0,
        d1,
        radii,
        log_measures: log_m,
        measures,
        residuals: fit.residuals,
    })
}

/// `μ(B_{ρ+r} ∖ B_{ρ−r}) / μ(B_ρ)`.
pub fn annulus_ratio(system: &MapSystem, center: f64, rho: f64, r: f64, config: &BirkhoffConfig, seed: u64) -> Result<f64> {
    if !(r > 0.0 && r < rho) || !rho.is_finite() {
        return Err(Error::invalid(format!("annulus needs 0 < r < rho, got r = {r}, rho = {rho}")));
    }
    Ok(annulus_ratios(system, center, &[(rho, r)], config, seed)?[0])
}

fn annulus_ratios(system: &MapSystem, center: f64, pairs: &[(f64, f64)], config: &BirkhoffConfig, seed: u64) -> Result<Vec<f64>> {
    if system.has_lebesgue_measure() {
        let t = system.topology();
        return Ok(pairs
            .iter()
            .map(|&(rho, r)| {
                let outer = lebesgue_ball_measure(t, center, rho + r);
                let inner = lebesgue_ball_measure(t, center, rho - r);
                (outer - inner) / lebesgue_ball_measure(t, center, rho)
            })
            .collect());
    }
    if !system.is_map() {
        return Err(Error::Unsupported {
            operation: "annulus ratio",
            system: system.name(),
        });
    }
    let mut radii: Vec<f64> = pairs.iter().flat_map(|&(rho, r)| [rho - r, rho, rho + r]).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let counts = birkhoff_nested_counts(system, center, &radii, config, seed)?;
    let hits = |x: f64| counts.hits[radii.partition_point(|&v| v < x)];
    pairs
        .iter()
        .map(|&(rho, r)| {
            let base = hits(rho);
            if base < MIN_BIRKHOFF_HITS {
                return Err(Error::InsufficientData(format!(
                    "{base} orbit visits to the ball of radius {rho} (need {MIN_BIRKHOFF_HITS})"
                )));
            }
            Ok((hits(rho + r) - hits(rho - r)) as f64 / base as f64)
        })
        .collect()
}

/// Fit of the annulus ratio to `C r^η ρ^{−β}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusFit {
    pub eta: f64,
    pub beta: f64,
    /// `(ρ, r, ratio)` for every probe.
    pub ratio_samples: Vec<(f64, f64, f64)>,
}

/// Probe the annulus ratio at `r = f·ρ` for each `ρ` and each fraction
/// `f ∈ (0, 1/2]` and fit `log ratio = c + η log r − β log ρ`.
pub fn annulus_fit(
    system: &MapSystem,
    center: f64,
    rhos: &[f64],
    fractions: &[f64],
    config: &BirkhoffConfig,
    seed: u64,
) -> Result<AnnulusFit> {
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 0.5)) {
        return Err(Error::invalid("annulus probes need r/rho in (0, 1/2]"));
    }
    let pairs: Vec<(f64, f64)> = rhos
        .iter()
        .flat_map(|&rho| fractions.iter().map(move |&f| (rho, f * rho)))
        .collect();
    let ratios = annulus_ratios(system, center, &pairs, config, seed)?;
    let samples: Vec<(f64, f64, f64)> = pairs.iter().zip(&ratios).map(|(&(a, b), &c)| (a, b, c)).collect();
    let rows: Vec<[f64; 3]> = samples
        .iter()
        .filter(|s| s.2 > 0.0)
        .map(|&(rho, r, ratio)| [r.ln(), rho.ln(), ratio.ln()])
        .collect();
    let coef = solve_two_regressors(&rows).ok_or_else(|| {
        Error::InsufficientData("annulus probes do not determine both exponents".into())
    })?;
    let (eta, beta) = (coef.0, -coef.1);
    if !(eta > 0.0) {
        return Err(Error::InsufficientData(format!("fitted annulus exponent eta = {eta} is not positive")));
    }
    Ok(AnnulusFit {
        eta,
        beta,
        ratio_samples: samples,
    })
}

/// Least squares for `z = c + a·x + b·y`, returning `(a, b)`.
fn solve_two_regressors(rows: &[[f64; 3]]) -> Option<(f64, f64)> {
    if rows.len() < 3 {
        return None;
    }
    let n = rows.len() as f64;
    let mean = |i: usize| rows.iter().map(|r| r[i]).sum::<f64>() / n;
    let (mx, my, mz) = (mean(0), mean(1), mean(2));
    let (mut sxx, mut syy, mut sxy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let (x, y, z) = (r[0] - mx, r[1] - my, r[2] - mz);
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        sxz += x * z;
        syz += y * z;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < 1e-12 * (sxx * syy).max(1e-300) {
        return None;
    }
    Some(((sxz * syy - syz * sxy) / det, (syz * sxx - sxz * sxy) / det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> BirkhoffConfig {
        BirkhoffConfig {
            orbit_length: 2_000_000,
            burn_in: 10_000,
            replicas: 4,
        }
    }

    #[test]
    fn ball_validation() {
        let d = MapSystem::doubling();
        assert!(Ball::new(&d, 0.5, 0.0).is_err());
        assert!(Ball::new(&d, 0.5, 0.25).is_err());
        assert!(Ball::new(&d, f64::NAN, 0.1).is_err());
        let b = Ball::new(&d, 1.0, 0.01).unwrap();
        assert_eq!(b.center(), 0.0);
        assert!(b.contains(0.995));
        assert!(!Ball::new(&MapSystem::manneville_pomeau(0.5).unwrap(), 0.0, 0.01)
            .unwrap()
            .contains(0.995));
    }

    #[test]
    fn exact_ball_measures() {
        let d = MapSystem::doubling();
        let cfg = BirkhoffConfig::default();
        let m = ball_measure(&d, &Ball::new(&d, 0.123, 1e-3).unwrap(), &cfg, 0).unwrap();
        assert_eq!(m.value, 2e-3);
        assert_eq!(m.std_error, 0.0);
        assert_eq!(m.method, Method::Exact);
        let r = MapSystem::rotation(0.3).unwrap();
        let m = ball_measure(&r, &Ball::new(&r, 0.9, 0.01).unwrap(), &cfg, 0).unwrap();
        assert_eq!(m.value, 0.02);
    }

    #[test]
    fn pm_birkhoff_runs_agree_across_seeds() {
        let pm = MapSystem::manneville_pomeau(0.5).unwrap();
        let ball = Ball::new(&pm, 0.6, 0.01).unwrap();
        let a = ball_measure(&pm, &ball, &small_cfg(), 1).unwrap();
        let b = ball_measure(&pm, &ball, &small_cfg(), 2).unwrap();
        assert!(a.value > 0.0 && a.std_error > 0.0);
        assert_eq!(a.method, Method::Birkhoff);
        assert!(a.as_estimate().z_score(&b.as_estimate()) < 3.0, "{a:?} {b:?}");
    }

    #[test]
    fn birkhoff_rejects_short_samples() {
        let pm = MapSystem::manneville_pomeau(0.5).unwrap();
        let ball = Ball::new(&pm, 0.6, 1e-7).unwrap();
        let err = ball_measure(&pm, &ball, &small_cfg(), 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn nested_measures_are_monotone() {
        let pm = MapSystem::manneville_pomeau(0.5).unwrap();
        let radii = [0.001, 0.004, 0.002, 0.01];
        let m = ball_measures(&pm, 0.6, &radii, &small_cfg(), 3).unwrap();
        assert!(m[0].value <= m[2].value && m[2].value <= m[1].value && m[1].value <= m[3].value);
    }

    #[test]
    fn doubling_dimension_is_one() {
        let d = MapSystem::doubling();
        let grid = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];
        let fit = dimension_fit(&d, 0.3, &grid, &BirkhoffConfig::default(), 0).unwrap();
        assert_abs_diff_eq!(fit.slope, 1.0, epsilon = 0.01);
        assert!(fit.d0 <= fit.d1);
        assert!(dimension_fit(&d, 0.3, &grid[..3], &BirkhoffConfig::default(), 0).is_err());
        assert!(dimension_fit(&d, 0.3, &[1e-2, 8e-3, 6e-3, 4e-3], &BirkhoffConfig::default(), 0).is_err());
    }

    #[test]
    fn doubling_annulus_examples() {
        let d = MapSystem::doubling();
        let cfg = BirkhoffConfig::default();
        assert_abs_diff_eq!(annulus_ratio(&d, 0.3, 1e-2, 1e-3, &cfg, 0).unwrap(), 0.2, epsilon = 1e-12);
        let tiny = annulus_ratio(&d, 0.3, 1e-2, 1e-12, &cfg, 0).unwrap();
        assert!(tiny < 1e-9);
        assert!(annulus_ratio(&d, 0.3, 1e-2, 2e-2, &cfg, 0).is_err());
    }

    #[test]
    fn doubling_annulus_fit_is_exact() {
        let d = MapSystem::doubling();
        let fit = annulus_fit(&d, 0.3, &[1e-2, 1e-3, 1e-4], &[0.5, 0.1, 0.01], &BirkhoffConfig::default(), 0).unwrap();
        assert_abs_diff_eq!(fit.eta, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.beta, 1.0, epsilon = 1e-9);
        assert_eq!(fit.ratio_samples.len(), 9);
    }

    #[test]
    fn additivity_on_exact_systems() {
        let d = MapSystem::doubling();
        let cfg = BirkhoffConfig::default();
        let (rho, r) = (0.02, 0.005);
        let outer = ball_measure(&d, &Ball::new(&d, 0.7, rho + r).unwrap(), &cfg, 0).unwrap();
        let inner = ball_measure(&d, &Ball::new(&d, 0.7, rho - r).unwrap(), &cfg, 0).unwrap();
        let mid = ball_measure(&d, &Ball::new(&d, 0.7, rho).unwrap(), &cfg, 0).unwrap();
        let ratio = annulus_ratio(&d, 0.7, rho, r, &cfg, 0).unwrap();
        assert_abs_diff_eq!(outer.value - inner.value, ratio * mid.value, epsilon = 1e-15);
    }
}
