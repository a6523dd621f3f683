//! Concrete one-dimensional systems: forward maps, orbits, inverse branches
//! and the backward orbit `a_n` of 1/2 under the parabolic branch of the
//! Manneville–Pomeau map.
//!
//! The Manneville–Pomeau left branch is `x + 2^α x^{1+α}` on `[0, 1/2]`,
//! which sends 1/2 to 1 so that both branches map onto the unit interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bisection stops once the bracket is narrower than this.
pub const ROOT_TOLERANCE: f64 = 1e-14;

/// The family a system belongs to, with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapKind {
    /// `x ↦ 2x mod 1` on the circle.
    Doubling,
    /// Intermittent map with a neutral fixed point at 0.
    MannevillePomeau { alpha: f64 },
    /// `x ↦ x + angle mod 1` on the circle.
    Rotation { angle: f64 },
    /// Synthetic i.i.d. Bernoulli(ε) hit process; not a map.
    BernoulliIid { epsilon: f64 },
    /// Synthetic i.i.d. uniform sequence on the circle; not a map.
    IidUniform,
}

impl MapKind {
    pub fn name(&self) -> &'static str {
        match self {
            MapKind::Doubling => "doubling",
            MapKind::MannevillePomeau { .. } => "manneville-pomeau",
            MapKind::Rotation { .. } => "rotation",
            MapKind::BernoulliIid { .. } => "bernoulli-iid",
            MapKind::IidUniform => "iid-uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// `ℝ/ℤ`, metric `min(|x−y|, 1−|x−y|)`.
    Circle,
    /// `[0, 1]`, metric `|x−y|`.
    Interval,
}

impl Topology {
    #[inline]
    pub fn distance(self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs();
        match self {
            Topology::Circle => d.min(1.0 - d),
            Topology::Interval => d,
        }
    }
}

/// A validated system. Cheap to copy and freely shared across threads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapKind", into = "MapKind")]
pub struct MapSystem {
    kind: MapKind,
    /// `2^α` for Manneville–Pomeau, unused otherwise.
    pm_coeff: f64,
}

impl TryFrom<MapKind> for MapSystem {
    type Error = Error;
    fn try_from(kind: MapKind) -> Result<Self> {
        MapSystem::new(kind)
    }
}

impl From<MapSystem> for MapKind {
    fn from(s: MapSystem) -> MapKind {
        s.kind
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl MapSystem {
    pub fn new(kind: MapKind) -> Result<Self> {
        let mut pm_coeff = 0.0;
        match kind {
            MapKind::MannevillePomeau { alpha } => {
                open_unit("alpha", alpha)?;
                pm_coeff = 2f64.powf(alpha);
            }
            MapKind::Rotation { angle } => open_unit("angle", angle)?,
            MapKind::BernoulliIid { epsilon } => open_unit("epsilon", epsilon)?,
            MapKind::Doubling | MapKind::IidUniform => {}
        }
        Ok(MapSystem { kind, pm_coeff })
    }

    pub fn doubling() -> Self {
        MapSystem {
            kind: MapKind::Doubling,
            pm_coeff: 0.0,
        }
    }

    pub fn manneville_pomeau(alpha: f64) -> Result<Self> {
        Self::new(MapKind::MannevillePomeau { alpha })
    }

    pub fn rotation(angle: f64) -> Result<Self> {
        Self::new(MapKind::Rotation { angle })
    }

    /// Rotation by the inverse golden mean `(√5 − 1)/2`.
    pub fn golden_rotation() -> Self {
        Self::new(MapKind::Rotation {
            angle: (5f64.sqrt() - 1.0) / 2.0,
        })
        .expect("golden angle lies in (0, 1)")
    }

    pub fn bernoulli_iid(epsilon: f64) -> Result<Self> {
        Self::new(MapKind::BernoulliIid { epsilon })
    }

    pub fn iid_uniform() -> Self {
        MapSystem {
            kind: MapKind::IidUniform,
            pm_coeff: 0.0,
        }
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn topology(&self) -> Topology {
        match self.kind {
            MapKind::MannevillePomeau { .. } | MapKind::BernoulliIid { .. } => Topology::Interval,
            _ => Topology::Circle,
        }
    }

    pub fn branch_count(&self) -> usize {
        match self.kind {
            MapKind::Doubling | MapKind::MannevillePomeau { .. } => 2,
            _ => 1,
        }
    }

    /// True when the system is a deterministic self-map of its domain.
    pub fn is_map(&self) -> bool {
        matches!(
            self.kind,
            MapKind::Doubling | MapKind::MannevillePomeau { .. } | MapKind::Rotation { .. }
        )
    }

    pub fn is_piecewise_monotone(&self) -> bool {
        matches!(
            self.kind,
            MapKind::Doubling | MapKind::MannevillePomeau { .. }
        )
    }

    /// True when Lebesgue measure is invariant, so ball measures are exact.
    pub fn has_lebesgue_measure(&self) -> bool {
        matches!(
            self.kind,
            MapKind::Doubling | MapKind::Rotation { .. } | MapKind::IidUniform
        )
    }

    #[inline]
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        self.topology().distance(x, y)
    }

    pub fn contains(&self, x: f64) -> bool {
        match self.topology() {
            Topology::Circle => (0.0..1.0).contains(&x),
            Topology::Interval => (0.0..=1.0).contains(&x),
        }
    }

    /// Bring a point into the fundamental domain. Circle points wrap mod 1.
    pub fn normalize(&self, x: f64) -> f64 {
        match self.topology() {
            Topology::Circle => {
                let y = x - x.floor();
                if y >= 1.0 {
                    0.0
                } else {
                    y
                }
            }
            Topology::Interval => x.clamp(0.0, 1.0),
        }
    }

    fn unsupported(&self, operation: &'static str) -> Error {
        Error::Unsupported {
            operation,
            system: self.name(),
        }
    }

    /// The parabolic branch `x + 2^α x^{1+α}`.
    #[inline]
    pub(crate) fn pm_left(&self, x: f64) -> f64 {
        let MapKind::MannevillePomeau { alpha } = self.kind else {
            unreachable!("pm_left on {}", self.name())
        };
        (x + self.pm_coeff * x * x.powf(alpha)).min(1.0)
    }

    /// Forward map without validation. Only meaningful when `is_map()`.
    #[inline]
    pub(crate) fn apply(&self, x: f64) -> f64 {
        match self.kind {
            MapKind::Doubling => {
                let y = 2.0 * x;
                if y >= 1.0 {
                    y - 1.0
                } else {
                    y
                }
            }
            MapKind::MannevillePomeau { .. } => {
                if x <= 0.5 {
                    self.pm_left(x)
                } else {
                    2.0 * x - 1.0
                }
            }
            MapKind::Rotation { angle } => {
                let y = x + angle;
                if y >= 1.0 {
                    y - 1.0
                } else {
                    y
                }
            }
            MapKind::BernoulliIid { .. } | MapKind::IidUniform => x,
        }
    }

    /// One application of the map.
    pub fn step(&self, x: f64) -> Result<f64> {
        if !self.is_map() {
            return Err(self.unsupported("step"));
        }
        if x.is_nan() {
            return Err(Error::invalid("NaN is not a point of the domain"));
        }
        let x = self.normalize(x);
        Ok(self.apply(x))
    }

    /// Lazy orbit `(x0, T x0, …, T^{n−1} x0)`.
    pub fn orbit_segment(&self, x0: f64, n: usize) -> Result<OrbitSegment> {
        if !self.is_map() {
            return Err(self.unsupported("orbit_segment"));
        }
        if n == 0 {
            return Err(Error::invalid("orbit length must be at least 1"));
        }
        if x0.is_nan() {
            return Err(Error::invalid("NaN is not a point of the domain"));
        }
        Ok(OrbitSegment {
            system: *self,
            x: self.normalize(x0),
            remaining: n,
        })
    }

    /// All `x` with `T(x) = y`, one per branch whose range contains `y`.
    pub fn branch_preimages(&self, y: f64) -> Result<Vec<f64>> {
        if !self.is_piecewise_monotone() {
            return Err(self.unsupported("branch_preimages"));
        }
        if !y.is_finite() || !self.contains(y) {
            return Err(Error::invalid(format!("{y} is outside the domain")));
        }
        match self.kind {
            MapKind::Doubling => Ok(vec![y / 2.0, (y + 1.0) / 2.0]),
            MapKind::MannevillePomeau { .. } => {
                let mut out = vec![self.pm_left_inverse(y, 0)?];
                // right branch (1/2, 1] covers (0, 1]
                if y > 0.0 {
                    out.push((y + 1.0) / 2.0);
                }
                Ok(out)
            }
            _ => unreachable!(),
        }
    }

    /// Solve `x + 2^α x^{1+α} = y` on `[0, 1/2]`: bisection down to
    /// [`ROOT_TOLERANCE`] followed by one Newton polish.
    pub(crate) fn pm_left_inverse(&self, y: f64, index: usize) -> Result<f64> {
        let MapKind::MannevillePomeau { alpha } = self.kind else {
            return Err(self.unsupported("parabolic inverse"));
        };
        if y <= 0.0 {
            return Ok(0.0);
        }
        let f = |x: f64| x + self.pm_coeff * x * x.powf(alpha) - y;
        let (mut lo, mut hi) = (0.0_f64, y.min(0.5));
        let (flo, fhi) = (f(lo), f(hi));
        if flo > 0.0 || fhi < 0.0 {
            return Err(Error::RootBracketing { index });
        }
        if fhi == 0.0 {
            return Ok(hi);
        }
        while hi - lo > ROOT_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        let df = 1.0 + self.pm_coeff * (1.0 + alpha) * x.powf(alpha);
        let polished = x - f(x) / df;
        if polished >= lo && polished <= hi && f(polished).abs() <= f(x).abs() {
            Ok(polished)
        } else {
            Ok(x)
        }
    }

    /// `sup |DT|` over the domain.
    pub fn sup_derivative(&self) -> f64 {
        match self.kind {
            MapKind::Doubling => 2.0,
            // parabolic branch derivative 1 + (1+α)(2x)^α peaks at x = 1/2
            MapKind::MannevillePomeau { alpha } => 2.0 + alpha,
            _ => 1.0,
        }
    }

    /// `sup |DT^{-1}|` over the inverse branches.
    pub fn sup_inverse_derivative(&self) -> f64 {
        match self.kind {
            MapKind::Doubling => 0.5,
            // the neutral fixed point at 0 has DT = 1
            MapKind::MannevillePomeau { .. } => 1.0,
            _ => 1.0,
        }
    }

    /// Expansion constant `A = sup|DT| + sup|DT^{-1}|`.
    pub fn expansion_constant(&self) -> f64 {
        self.sup_derivative() + self.sup_inverse_derivative()
    }
}

/// Iterator over a finite orbit segment.
#[derive(Debug, Clone)]
pub struct OrbitSegment {
    system: MapSystem,
    x: f64,
    remaining: usize,
}

impl Iterator for OrbitSegment {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = self.x;
        if self.remaining > 0 {
            self.x = self.system.apply(self.x);
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for OrbitSegment {}

/// The backward orbit of 1/2 under the parabolic branch: `a_0 = 1/2`,
/// `T(a_{n+1}) = a_n`, and the intervals `I_n = (a_{n+1}, a_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmStructure {
    pub alpha: f64,
    /// `1/α`, the exponent in `a_n ∼ n^{−γ}`.
    pub gamma: f64,
    a: Vec<f64>,
    #[serde(skip)]
    system: Option<MapSystem>,
}

impl PmStructure {
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    fn system(&self) -> MapSystem {
        self.system
            .unwrap_or_else(|| MapSystem::manneville_pomeau(self.alpha).expect("validated alpha"))
    }

    /// Extend the sequence so that `a_0..=a_{n_max}` are available.
    pub fn extend_to(&mut self, n_max: usize) -> Result<()> {
        let system = self.system();
        while self.a.len() <= n_max {
            let index = self.a.len();
            let prev = *self.a.last().expect("a_0 is always present");
            let next = system.pm_left_inverse(prev, index)?;
            if next <= 0.0 || next >= prev {
                return Err(Error::RootBracketing { index });
            }
            self.a.push(next);
        }
        Ok(())
    }

    /// `I_n = (a_{n+1}, a_n]` as `(a_{n+1}, a_n)`.
    pub fn interval(&self, n: usize) -> Option<(f64, f64)> {
        Some((*self.a.get(n + 1)?, self.a[n]))
    }

    /// `|T(a_{n+1}) − a_n|` for every computed pair.
    pub fn residuals(&self) -> Vec<f64> {
        let system = self.system();
        self.a
            .windows(2)
            .map(|w| (system.pm_left(w[1]) - w[0]).abs())
            .collect()
    }

    /// Least-squares slope of `log a_n` against `log n` for `n ∈ [lo, hi]`.
    pub fn loglog_slope(&self, lo: usize, hi: usize) -> Option<f64> {
        if lo == 0 || hi >= self.a.len() || hi <= lo {
            return None;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=hi)
            .map(|n| ((n as f64).ln(), self.a[n].ln()))
            .unzip();
        crate::stats::fit_line(&xs, &ys).map(|f| f.slope)
    }
}

/// Compute `a_0, …, a_{n_max}` for the Manneville–Pomeau map with parameter `alpha`.
pub fn pm_a_sequence(alpha: f64, n_max: usize) -> Result<PmStructure> {
    let system = MapSystem::manneville_pomeau(alpha)?;
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let mut s = PmStructure {
        alpha,
        gamma: 1.0 / alpha,
        a: Vec::with_capacity(n_max + 1),
        system: Some(system),
    };
    s.a.push(0.5);
    s.extend_to(n_max)?;
    Ok(s)
}
