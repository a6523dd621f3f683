//! Brute-force and closed-form reference values.
//!
//! Nothing in here calls into the estimators it is used to check: the
//! binomial pmf has its own log-factorial table, the chain enumerator
//! computes its own stationary vector, and the doubling-map formulas are
//! written out from the arithmetic of `x ↦ 2x mod 1` directly. Every
//! function is deterministic and RNG-free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named reference value with its inputs echoed, for result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub inputs: Vec<(String, f64)>,
    pub value: f64,
    pub method: String,
}

impl OracleReport {
    pub fn new(name: &str, inputs: &[(&str, f64)], value: f64, method: &str) -> Self {
        OracleReport {
            name: name.to_string(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            method: method.to_string(),
        }
    }
}

/// `Binomial(n, eps)` pmf on `0..=n`, evaluated in log space.
pub fn binomial_pmf(n: u64, eps: f64) -> Result<Vec<f64>> {
    if n > 1_000_000 {
        return Err(Error::Capacity(format!("binomial oracle limited to n <= 1e6, got {n}")));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("eps must lie in [0, 1], got {eps}")));
    }
    let n = n as usize;
    if eps == 0.0 || eps == 1.0 {
        let mut out = vec![0.0; n + 1];
        out[if eps == 0.0 { 0 } else { n }] = 1.0;
        return Ok(out);
    }
    let mut ln_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let (lp, lq) = (eps.ln(), (-eps).ln_1p());
    Ok((0..=n)
        .map(|k| (ln_fact[n] - ln_fact[k] - ln_fact[n - k] + k as f64 * lp + (n - k) as f64 * lq).exp())
        .collect())
}

/// The `2^q − 1` fixed points of `T^q` for the doubling map, `k/(2^q − 1)`.
pub fn doubling_periodic_points(q: u32) -> Result<Vec<f64>> {
    if q == 0 || q > 20 {
        return Err(Error::invalid(format!("period must lie in 1..=20, got {q}")));
    }
    let denom = (1u64 << q) - 1;
    Ok((0..denom).map(|k| k as f64 / denom as f64).collect())
}

/// `Cov(x, 2^k x mod 1)` under Lebesgue measure: `1/12` at lag 0,
/// `2^{−k}/12` afterwards.
pub fn doubling_corr_oracle(k: u32) -> f64 {
    // On [j/2^k, (j+1)/2^k) the integrand is x (2^k x − j); summing the
    // pieces gives 1/4 + 2^{-k}/12, and the product of means is 1/4.
    2f64.powi(-(k as i32)) / 12.0
}

/// Exact Lebesgue measure of the doubling-map short-return set
/// `{x : B_ρ(x) ∩ T^n B_ρ(x) ≠ ∅ for some 1 ≤ n < j}`.
///
/// For `2^n ρ < 1/2` the image `T^n B_ρ(x)` is the ball of radius `2^n ρ`
/// about `T^n x`, so the condition reads `d((2^n − 1) x, ℤ) ≤ (2^n + 1) ρ`:
/// a union of intervals about the period-`n` points. The union over `n`
/// is merged exactly before measuring.
pub fn doubling_short_return_measure(rho: f64, j: u32) -> Result<f64> {
    if !(rho > 0.0 && rho < 0.25) {
        return Err(Error::invalid(format!("rho must lie in (0, 1/4), got {rho}")));
    }
    if j > 21 {
        return Err(Error::Capacity(format!("short-return oracle limited to J <= 21, got {j}")));
    }
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    for n in 1..j {
        let two_n = 2f64.powi(n as i32);
        if two_n * rho >= 0.5 {
            return Ok(1.0);
        }
        let denom = two_n - 1.0;
        let half = (two_n + 1.0) * rho / denom;
        if half >= 0.5 / denom {
            return Ok(1.0);
        }
        for p in doubling_periodic_points(n)? {
            push_circle_interval(&mut pieces, p - half, p + half);
        }
    }
    Ok(union_length(pieces))
}

/// Exact `μ(B_ρ(c) ∩ T^{−n} B_ρ(c))` for the doubling map with Lebesgue measure.
pub fn doubling_return_overlap(center: f64, rho: f64, n: u32) -> Result<f64> {
    if !(rho > 0.0 && rho < 0.25) || n > 20 {
        return Err(Error::invalid("overlap oracle needs rho in (0, 1/4) and n <= 20"));
    }
    let mut ball = Vec::new();
    push_circle_interval(&mut ball, center - rho, center + rho);
    let scale = 2f64.powi(n as i32);
    let mut total = 0.0;
    for j in 0..(1u64 << n) {
        let mut pre = Vec::new();
        push_circle_interval(&mut pre, (center - rho + j as f64) / scale, (center + rho + j as f64) / scale);
        for &(a, b) in &pre {
            for &(c, d) in &ball {
                total += (b.min(d) - a.max(c)).max(0.0);
            }
        }
    }
    Ok(total)
}

/// Split `[a, b]` (taken mod 1, length below 1) into pieces inside `[0, 1]`.
fn push_circle_interval(out: &mut Vec<(f64, f64)>, a: f64, b: f64) {
    let shift = a.floor();
    let (a, b) = (a - shift, b - shift);
    if b <= 1.0 {
        out.push((a, b));
    } else {
        out.push((a, 1.0));
        out.push((0.0, b - 1.0));
    }
}

fn union_length(mut pieces: Vec<(f64, f64)>) -> f64 {
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (a, b) in pieces {
        current = match current {
            Some((c, d)) if a <= d => Some((c, d.max(b))),
            Some((c, d)) => {
                total += d - c;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((c, d)) = current {
        total += d - c;
    }
    total
}

/// Stationary distribution by repeated squaring of the transition matrix.
/// Meant for aperiodic irreducible chains, where every row of `P^{2^k}`
/// converges to the stationary vector.
pub fn stationary_by_squaring(transition: &[Vec<f64>]) -> Vec<f64> {
    let s = transition.len();
    let mut m: Vec<Vec<f64>> = transition.to_vec();
    for _ in 0..64 {
        let mut next = vec![vec![0.0; s]; s];
        for i in 0..s {
            for k in 0..s {
                let v = m[i][k];
                if v == 0.0 {
                    continue;
                }
                for j in 0..s {
                    next[i][j] += v * m[k][j];
                }
            }
        }
        for row in next.iter_mut() {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        let settled = next == m;
        m = next;
        if settled {
            break;
        }
    }
    let mut pi: Vec<f64> = (0..s).map(|j| m.iter().map(|row| row[j]).sum::<f64>() / s as f64).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    pi
}

/// Call `visit(states, probability)` for every state path of length `n`
/// started from the stationary distribution.
pub fn for_each_path(transition: &[Vec<f64>], n: usize, mut visit: impl FnMut(&[usize], f64)) -> Result<()> {
    let s = transition.len();
    if s == 0 || n == 0 {
        return Err(Error::invalid("path enumeration needs at least one state and one step"));
    }
    if (s as f64).powi(n as i32) > 1e7 {
        return Err(Error::Capacity(format!("{s}^{n} paths exceed the enumeration limit of 1e7")));
    }
    let pi = stationary_by_squaring(transition);
    let mut path = vec![0usize; n];
    loop {
        let mut p = pi[path[0]];
        for w in path.windows(2) {
            p *= transition[w[0]][w[1]];
        }
        visit(&path, p);
        // odometer increment
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            path[i] += 1;
            if path[i] < s {
                break;
            }
            path[i] = 0;
        }
    }
}

/// Law of the number of marked states visited along a stationary path of
/// length `n`, by weighted enumeration of every path.
pub fn path_enumeration(transition: &[Vec<f64>], marked: &[bool], n: usize) -> Result<Vec<f64>> {
    let mut pmf = vec![0.0; n + 1];
    for_each_path(transition, n, |path, p| {
        let k = path.iter().filter(|&&s| marked[s]).count();
        pmf[k] += p;
    })?;
    Ok(pmf)
}
