//! Small numerical helpers shared by the estimators.

use serde::{Deserialize, Serialize};

/// A Monte Carlo or Birkhoff estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            std_error: 0.0,
        }
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        let diff = (self.value - other.value).abs();
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        (self.value - target).abs() <= sigmas * self.std_error
    }
}

/// Ordinary least squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub residuals: Vec<f64>,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - (intercept + slope * a))
        .collect();
    let slope_std_error = if n > 2 {
        let rss: f64 = residuals.iter().map(|r| r * r).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LineFit {
        slope,
        intercept,
        slope_std_error,
        residuals,
    })
}

/// Weighted least squares line; `slope_std_error` is the model-based error
/// `1/sqrt(Σ w (x − x̄_w)²)` for weights `w = 1/σ²`.
pub fn fit_line_weighted(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() || n != w.len() || w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = x.iter().zip(y).map(|(a, b)| b - (intercept + slope * a)).collect();
    Some(LineFit {
        slope,
        intercept,
        slope_std_error: (1.0 / sxx).sqrt(),
        residuals,
    })
}

/// Integrated autocorrelation time of a 0/1 series from batch means,
/// in the convention where an uncorrelated series has `tau = 1/2`.
///
/// `batch_hits` holds the hit count of consecutive batches of `batch_len`
/// samples. The result is clamped to `[0.5, cap]`.
pub fn batch_tau(batch_hits: &[u64], batch_len: u64, p: f64, cap: f64) -> f64 {
    if batch_hits.len() < 2 || p <= 0.0 || p >= 1.0 || batch_len == 0 {
        return 0.5;
    }
    let b = batch_len as f64;
    let k = batch_hits.len() as f64;
    let mean = batch_hits.iter().map(|&h| h as f64 / b).sum::<f64>() / k;
    let var = batch_hits
        .iter()
        .map(|&h| {
            let d = h as f64 / b - mean;
            d * d
        })
        .sum::<f64>()
        / (k - 1.0);
    let tau = b * var / (2.0 * p * (1.0 - p));
    tau.clamp(0.5, cap)
}

/// Mean and standard error of the mean of independent replicate values.
pub fn replicate_mean(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Estimate {
            value: mean,
            std_error: 0.0,
        };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: mean,
        std_error: (var / n).sqrt(),
    }
}

/// Standard error of a proportion estimated from `n` independent trials.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let fit = fit_line(&x, &y).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn line_fit_rejects_degenerate_input() {
        assert!(fit_line(&[1.0], &[1.0]).is_none());
        assert!(fit_line(&[2.0, 2.0], &[1.0, 3.0]).is_none());
    }

    #[test]
    fn batch_tau_of_constant_batches_is_floor() {
        assert_eq!(batch_tau(&[10, 10, 10, 10], 100, 0.1, 1e3), 0.5);
    }

    #[test]
    fn z_score_handles_exact_values() {
        let a = Estimate::exact(1.0);
        assert_eq!(a.z_score(&Estimate::exact(1.0)), 0.0);
        assert!(a.z_score(&Estimate::exact(2.0)).is_infinite());
    }
}
