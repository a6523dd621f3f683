//! Decay of correlations `∫ G (H ∘ T^k) dμ − μ(G) μ(H)` by Birkhoff
//! averages over independent orbit windows.
//!
//! Each window is its own orbit, so the spread of the per-window estimates
//! gives a standard error that already accounts for serial correlation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapKind, MapSystem};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sampling::birkhoff_orbit;
use crate::stats::{fit_line_weighted, replicate_mean, Estimate};

/// Observables available to the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Observable {
    Identity,
    Cos2Pi,
    Constant { value: f64 },
}

impl Observable {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Observable::Identity => x,
            Observable::Cos2Pi => (std::f64::consts::TAU * x).cos(),
            Observable::Constant { value } => value,
        }
    }

    /// Lipschitz constant on `[0, 1]`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Observable::Identity => 1.0,
            Observable::Cos2Pi => std::f64::consts::TAU,
            Observable::Constant { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationBudget {
    /// Total iterates across all windows.
    pub iterates: u64,
    pub windows: u64,
    /// Iterates discarded at the start of each window, after the burn-in.
    pub offset: u64,
    pub burn_in: u64,
}

impl Default for CorrelationBudget {
    fn default() -> Self {
        CorrelationBudget {
            iterates: 10_000_000,
            windows: 64,
            offset: 0,
            burn_in: 10_000,
        }
    }
}

impl CorrelationBudget {
    /// `10^8` iterates for the doubling map, `10^7` otherwise.
    pub fn for_system(system: &MapSystem) -> Self {
        let iterates = if system.kind() == MapKind::Doubling { 100_000_000 } else { 10_000_000 };
        CorrelationBudget {
            iterates,
            ..Default::default()
        }
    }

    fn window_len(&self) -> u64 {
        self.iterates / self.windows.max(1)
    }
}

/// Per-window covariance at every lag in one pass over the window.
fn window_covariances(system: &MapSystem, g: Observable, h: Observable, lags: &[usize], budget: &CorrelationBudget, seed: u64, w: u64) -> Result<Vec<f64>> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let ring_len = (max_lag + 1).next_power_of_two();
    let mask = ring_len - 1;
    let len = budget.window_len() as usize;
    let mut orbit = birkhoff_orbit(system, seed, Stream::Correlations, w, budget.burn_in)?;
    orbit.skip_points(budget.offset);
    let mut ring = vec![0.0f64; ring_len];
    let mut head_h = vec![0.0f64; max_lag + 1];
    let mut s_gh = vec![0.0f64; lags.len()];
    let (mut s_g, mut s_h) = (0.0, 0.0);
    let mut i = 0usize;
    orbit.visit(len as u64, |x| {
        let gv = g.eval(x);
        let hv = h.eval(x);
        ring[i & mask] = gv;
        if i <= max_lag {
            head_h[i] = hv;
        }
        for (acc, &k) in s_gh.iter_mut().zip(lags) {
            if i >= k {
                *acc += ring[(i - k) & mask] * hv;
            }
        }
        s_g += gv;
        s_h += hv;
        i += 1;
    });
    Ok(lags
        .iter()
        .zip(&s_gh)
        .map(|(&k, &gh)| {
            let pairs = (len - k) as f64;
            // G over the first len − k points, H over the last len − k
            let g_tail: f64 = (len - k..len).map(|j| ring[j & mask]).sum();
            let h_head: f64 = head_h[..k].iter().sum();
            let mg = (s_g - g_tail) / pairs;
            let mh = (s_h - h_head) / pairs;
            gh / pairs - mg * mh
        })
        .collect())
}

/// Correlation estimates at every lag in `lags`.
pub fn correlations(system: &MapSystem, g: Observable, h: Observable, lags: &[usize], budget: &CorrelationBudget, seed: u64) -> Result<Vec<Estimate>> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if budget.windows < 2 || budget.window_len() <= 2 * max_lag as u64 + 1 {
        return Err(Error::InsufficientData(format!(
            "budget of {} iterates in {} windows is too small for lag {max_lag}",
            budget.iterates, budget.windows
        )));
    }
    if !system.is_map() && system.kind() != MapKind::IidUniform {
        return Err(Error::Unsupported {
            operation: "correlations",
            system: system.name(),
        });
    }
    let per_window: Vec<Vec<f64>> = (0..budget.windows)
        .into_par_iter()
        .map(|w| window_covariances(system, g, h, lags, budget, seed, w))
        .collect::<Result<_>>()?;
    Ok((0..lags.len())
        .map(|i| {
            let vals: Vec<f64> = per_window.iter().map(|v| v[i]).collect();
            replicate_mean(&vals)
        })
        .collect())
}

pub fn correlation(system: &MapSystem, g: Observable, h: Observable, k: usize, budget: &CorrelationBudget, seed: u64) -> Result<Estimate> {
    Ok(correlations(system, g, h, &[k], budget, seed)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// `|c_k| ≈ C e^{−rate·k}`.
    Exponential,
    /// `|c_k| ≈ C k^{−rate}`.
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lags: Vec<usize>,
    pub corr_values: Vec<Estimate>,
    /// Lags with `|corr| > 3σ`, the only ones fitted.
    pub usable: Vec<bool>,
    pub fit_kind: FitKind,
    pub fitted_rate: Option<f64>,
    pub rate_std_error: Option<f64>,
    pub inconclusive: bool,
}

/// Minimum number of significant lags for a fit.
pub const MIN_USABLE_LAGS: usize = 3;

/// Weighted log-linear or log-log fit over the significant lags.
pub fn fit_decay(lags: &[usize], values: &[Estimate], kind: FitKind) -> DecayFit {
    let usable: Vec<bool> = lags
        .iter()
        .zip(values)
        .map(|(&k, v)| k >= 1 && v.value.is_finite() && v.value.abs() > 3.0 * v.std_error)
        .collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for ((&k, v), &u) in lags.iter().zip(values).zip(&usable) {
        if u {
            x.push(match kind {
                FitKind::Exponential => k as f64,
                FitKind::Polynomial => (k as f64).ln(),
            });
            y.push(v.value.abs().ln());
            let rel = (v.std_error / v.value.abs()).max(1e-12);
            w.push(1.0 / (rel * rel));
        }
    }
    let fit = if x.len() >= MIN_USABLE_LAGS { fit_line_weighted(&x, &y, &w) } else { None };
    DecayFit {
        lags: lags.to_vec(),
        corr_values: values.to_vec(),
        usable,
        fit_kind: kind,
        fitted_rate: fit.as_ref().map(|f| -f.slope),
        rate_std_error: fit.as_ref().map(|f| f.slope_std_error),
        inconclusive: fit.is_none(),
    }
}

pub fn decay_fit(
    system: &MapSystem,
    g: Observable,
    h: Observable,
    lags: &[usize],
    budget: &CorrelationBudget,
    kind: FitKind,
    seed: u64,
) -> Result<DecayFit> {
    let values = correlations(system, g, h, lags, budget, seed)?;
    Ok(fit_decay(lags, &values, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::doubling_corr_oracle;
    use approx::assert_abs_diff_eq;

    fn budget(iterates: u64) -> CorrelationBudget {
        CorrelationBudget {
            iterates,
            ..Default::default()
        }
    }

    #[test]
    fn doubling_identity_matches_oracle() {
        let d = MapSystem::doubling();
        let lags: Vec<usize> = (0..=6).collect();
        let c = correlations(&d, Observable::Identity, Observable::Identity, &lags, &budget(10_000_000), 1).unwrap();
        for (&k, e) in lags.iter().zip(&c) {
            assert!(e.within(doubling_corr_oracle(k as u32), 3.0), "lag {k}: {e:?}");
        }
        assert_abs_diff_eq!(doubling_corr_oracle(3), 0.010_416_7, epsilon = 1e-7);
    }

    #[test]
    fn constant_observable_has_no_correlation() {
        let pm = MapSystem::manneville_pomeau(0.5).unwrap();
        let e = correlation(&pm, Observable::Identity, Observable::Constant { value: 2.5 }, 3, &budget(200_000), 2).unwrap();
        assert!(e.value.abs() < 1e-12, "{e:?}");
    }

    #[test]
    fn cosine_modes_are_orthogonal() {
        let d = MapSystem::doubling();
        let e = correlation(&d, Observable::Cos2Pi, Observable::Cos2Pi, 1, &budget(4_000_000), 3).unwrap();
        assert!(e.within(0.0, 3.0), "{e:?}");
        let v = correlation(&d, Observable::Cos2Pi, Observable::Cos2Pi, 0, &budget(4_000_000), 3).unwrap();
        assert!(v.within(0.5, 3.0), "{v:?}");
    }

    #[test]
    fn window_offset_is_immaterial() {
        let d = MapSystem::doubling();
        let a = correlation(&d, Observable::Identity, Observable::Identity, 2, &budget(4_000_000), 4).unwrap();
        let b_budget = CorrelationBudget {
            offset: 1000,
            ..budget(4_000_000)
        };
        let b = correlation(&d, Observable::Identity, Observable::Identity, 2, &b_budget, 4).unwrap();
        assert!((a.value - b.value).abs() < 2.0 * a.std_error.max(b.std_error));
    }

    #[test]
    fn doubling_rate_is_log_two() {
        let d = MapSystem::doubling();
        let lags: Vec<usize> = (1..=6).collect();
        let fit = decay_fit(&d, Observable::Identity, Observable::Identity, &lags, &budget(10_000_000), FitKind::Exponential, 5).unwrap();
        assert!(!fit.inconclusive);
        let rate = fit.fitted_rate.unwrap();
        assert!((rate - 2f64.ln()).abs() < 0.1, "{rate}");
    }

    #[test]
    fn noise_is_inconclusive() {
        let s = MapSystem::iid_uniform();
        let lags: Vec<usize> = (1..=8).collect();
        let fit = decay_fit(&s, Observable::Identity, Observable::Identity, &lags, &budget(1_000_000), FitKind::Exponential, 6).unwrap();
        assert!(fit.inconclusive && fit.fitted_rate.is_none());
    }

    #[test]
    fn intermittent_map_decays() {
        let pm = MapSystem::manneville_pomeau(0.5).unwrap();
        let lags: Vec<usize> = (1..=6).map(|i| 1 << i).collect();
        let fit = decay_fit(&pm, Observable::Identity, Observable::Identity, &lags, &budget(10_000_000), FitKind::Polynomial, 7).unwrap();
        let rate = fit.fitted_rate.expect("enough significant lags");
        assert!(rate >= 0.3, "{fit:?}");
    }

    #[test]
    fn tiny_budget_is_rejected() {
        let d = MapSystem::doubling();
        assert!(matches!(
            correlation(&d, Observable::Identity, Observable::Identity, 8, &budget(100), 0),
            Err(Error::InsufficientData(_))
        ));
    }
}
