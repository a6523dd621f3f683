//! Orbit generators and initial-condition samplers.
//!
//! Floating-point iteration of the doubling map loses one mantissa bit per
//! step and collapses to 0 after ~53 iterates, so Lebesgue-typical doubling
//! orbits are represented as a 64-bit window onto an infinite random binary
//! expansion: `T` is a left shift with a fresh random bit shifted in.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapKind, MapSystem, Topology};
use crate::error::{Error, Result};
use crate::measure::Ball;
use crate::rng::{substream, Stream};

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;
const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// Burn-in and subsampling gap for samplers that walk a long orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub burn_in: u64,
    pub gap: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: 10_000,
            gap: 1_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gap == 0 {
            return Err(Error::invalid("sampler gap must be at least 1"));
        }
        Ok(())
    }
}

/// Random binary expansion seen through a 64-bit window.
#[derive(Debug, Clone)]
pub struct DoublingBits {
    window: u64,
    reserve: u64,
    left: u32,
    rng: ChaCha8Rng,
}

impl DoublingBits {
    fn new(window: u64, mut rng: ChaCha8Rng) -> Self {
        let reserve = rng.next_u64();
        DoublingBits {
            window,
            reserve,
            left: 64,
            rng,
        }
    }

    #[inline]
    fn current(&self) -> f64 {
        (self.window >> 11) as f64 * TWO_POW_M53
    }

    #[inline]
    fn advance(&mut self) {
        self.window = (self.window << 1) | (self.reserve >> 63);
        self.reserve <<= 1;
        self.left -= 1;
        if self.left == 0 {
            self.reserve = self.rng.next_u64();
            self.left = 64;
        }
    }
}

/// An infinite orbit. `next()` yields the current point and then advances.
#[derive(Debug, Clone)]
pub enum Orbit {
    /// Plain floating-point iteration of a map.
    Map { system: MapSystem, x: f64 },
    /// Floating-point iteration that reseeds from a uniform draw if the
    /// orbit lands exactly on an absorbing float (0 or 1).
    Guarded {
        system: MapSystem,
        x: f64,
        rng: Box<ChaCha8Rng>,
    },
    /// Doubling map on a random binary expansion.
    Bits(Box<DoublingBits>),
    /// i.i.d. uniform surrogate, optionally with a prescribed first point.
    Iid {
        first: Option<f64>,
        rng: Box<ChaCha8Rng>,
    },
}

impl Orbit {
    pub fn from_point(system: MapSystem, x0: f64) -> Self {
        Orbit::Map { system, x: x0 }
    }

    /// Feed the next `n` points to `f`. The variant dispatch happens once,
    /// outside the loop.
    #[inline]
    pub fn visit(&mut self, n: u64, mut f: impl FnMut(f64)) {
        match self {
            Orbit::Map { system, x } => {
                let s = *system;
                let mut y = *x;
                for _ in 0..n {
                    f(y);
                    y = s.apply(y);
                }
                *x = y;
            }
            Orbit::Guarded { system, x, rng } => {
                let s = *system;
                let mut y = *x;
                for _ in 0..n {
                    f(y);
                    y = s.apply(y);
                    if y == 0.0 || y == 1.0 {
                        y = rng.random::<f64>();
                    }
                }
                *x = y;
            }
            Orbit::Bits(bits) => {
                for _ in 0..n {
                    f(bits.current());
                    bits.advance();
                }
            }
            Orbit::Iid { first, rng } => {
                let mut n = n;
                if n > 0 {
                    if let Some(v) = first.take() {
                        f(v);
                        n -= 1;
                    }
                }
                for _ in 0..n {
                    f(rng.random::<f64>());
                }
            }
        }
    }

    /// Discard `n` points.
    pub fn skip_points(&mut self, n: u64) {
        self.visit(n, |_| {});
    }
}

impl Iterator for Orbit {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let mut out = 0.0;
        self.visit(1, |v| out = v);
        Some(out)
    }
}

/// A family of orbits indexed by sample number.
pub trait OrbitSource: Sync {
    fn system(&self) -> &MapSystem;
    fn orbit(&self, index: u64) -> Orbit;
}

fn uniform_start(system: &MapSystem, rng: &mut ChaCha8Rng) -> f64 {
    let x: f64 = rng.random();
    system.normalize(x)
}

/// A fresh orbit for Birkhoff averaging: uniform start, `burn_in` iterates
/// discarded. Lebesgue systems start in equilibrium already.
pub fn birkhoff_orbit(system: &MapSystem, seed: u64, stream: Stream, replica: u64, burn_in: u64) -> Result<Orbit> {
    let mut rng = substream(seed, stream, replica);
    let orbit = match system.kind() {
        MapKind::Doubling => Orbit::Bits(Box::new(DoublingBits::new(rng.next_u64(), rng))),
        MapKind::IidUniform => Orbit::Iid {
            first: None,
            rng: Box::new(rng),
        },
        MapKind::Rotation { .. } => {
            let x = uniform_start(system, &mut rng);
            Orbit::Map { system: *system, x }
        }
        MapKind::MannevillePomeau { .. } => {
            let x = uniform_start(system, &mut rng);
            let mut o = Orbit::Guarded {
                system: *system,
                x,
                rng: Box::new(rng),
            };
            o.skip_points(burn_in);
            o
        }
        MapKind::BernoulliIid { .. } => {
            return Err(Error::Unsupported {
                operation: "orbit sampling",
                system: system.name(),
            })
        }
    };
    Ok(orbit)
}

/// Initial conditions distributed according to the invariant measure.
///
/// Lebesgue systems draw independent uniform starts. Manneville–Pomeau
/// starts are one point every `gap` iterates of a single long orbit after
/// `burn_in`.
#[derive(Debug, Clone)]
pub struct StationarySampler {
    system: MapSystem,
    seed: u64,
    starts: Option<Vec<f64>>,
}

impl StationarySampler {
    pub fn new(system: &MapSystem, config: &SamplerConfig, m: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let starts = match system.kind() {
            MapKind::MannevillePomeau { .. } => {
                let mut orbit = birkhoff_orbit(system, seed, Stream::Stationary, u64::MAX, config.burn_in)?;
                let mut starts = Vec::with_capacity(m);
                for _ in 0..m {
                    starts.push(orbit.next().expect("orbits are infinite"));
                    orbit.skip_points(config.gap - 1);
                }
                Some(starts)
            }
            MapKind::BernoulliIid { .. } => {
                return Err(Error::Unsupported {
                    operation: "stationary sampling",
                    system: system.name(),
                })
            }
            _ => None,
        };
        Ok(StationarySampler {
            system: *system,
            seed,
            starts,
        })
    }

    /// Number of precomputed starts, if the sampler is backed by a long orbit.
    pub fn capacity(&self) -> Option<usize> {
        self.starts.as_ref().map(Vec::len)
    }
}

impl OrbitSource for StationarySampler {
    fn system(&self) -> &MapSystem {
        &self.system
    }

    fn orbit(&self, index: u64) -> Orbit {
        let mut rng = substream(self.seed, Stream::Stationary, index);
        match (&self.starts, self.system.kind()) {
            (Some(starts), _) => {
                let x = starts[index as usize % starts.len()];
                Orbit::Guarded {
                    system: self.system,
                    x,
                    rng: Box::new(rng),
                }
            }
            (None, MapKind::Doubling) => Orbit::Bits(Box::new(DoublingBits::new(rng.next_u64(), rng))),
            (None, MapKind::IidUniform) => Orbit::Iid {
                first: None,
                rng: Box::new(rng),
            },
            (None, _) => {
                let x = uniform_start(&self.system, &mut rng);
                Orbit::Map {
                    system: self.system,
                    x,
                }
            }
        }
    }
}

/// Initial conditions distributed according to the invariant measure
/// conditioned on a ball.
///
/// Exact (uniform on the ball) for Lebesgue systems; Manneville–Pomeau uses
/// the visits of a long orbit to the ball, separated by at least `gap`
/// iterates.
#[derive(Debug, Clone)]
pub struct BallSampler {
    system: MapSystem,
    ball: Ball,
    seed: u64,
    starts: Option<Vec<f64>>,
}

/// Give up on rejection sampling after this many iterates.
const REJECTION_BUDGET: u64 = 20_000_000_000;

impl BallSampler {
    pub fn new(system: &MapSystem, ball: &Ball, config: &SamplerConfig, m: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let starts = match system.kind() {
            MapKind::MannevillePomeau { .. } => {
                let mut orbit = birkhoff_orbit(system, seed, Stream::BallConditioned, u64::MAX, config.burn_in)?;
                let mut starts = Vec::with_capacity(m);
                let mut spent = 0u64;
                while starts.len() < m {
                    let x = orbit.next().expect("orbits are infinite");
                    spent += 1;
                    if ball.contains(x) {
                        starts.push(x);
                        orbit.skip_points(config.gap - 1);
                        spent += config.gap - 1;
                    }
                    if spent > REJECTION_BUDGET {
                        return Err(Error::InsufficientData(format!(
                            "only {} of {m} orbit visits to the ball after {spent} iterates",
                            starts.len()
                        )));
                    }
                }
                Some(starts)
            }
            MapKind::BernoulliIid { .. } => {
                return Err(Error::Unsupported {
                    operation: "ball-conditioned sampling",
                    system: system.name(),
                })
            }
            _ => None,
        };
        Ok(BallSampler {
            system: *system,
            ball: *ball,
            seed,
            starts,
        })
    }
}

impl OrbitSource for BallSampler {
    fn system(&self) -> &MapSystem {
        &self.system
    }

    fn orbit(&self, index: u64) -> Orbit {
        let mut rng = substream(self.seed, Stream::BallConditioned, index);
        let (c, r) = (self.ball.center(), self.ball.radius());
        match (&self.starts, self.system.kind()) {
            (Some(starts), _) => Orbit::Guarded {
                system: self.system,
                x: starts[index as usize % starts.len()],
                rng: Box::new(rng),
            },
            (None, MapKind::Doubling) => {
                let center = (c * TWO_POW_64) as u64;
                let half = (r * TWO_POW_64) as u64;
                let offset = rng.random_range(0..=2 * half);
                let window = center.wrapping_sub(half).wrapping_add(offset);
                Orbit::Bits(Box::new(DoublingBits::new(window, rng)))
            }
            (None, kind) => {
                let u: f64 = rng.random();
                let x = match self.system.topology() {
                    Topology::Circle => self.system.normalize(c - r + 2.0 * r * u),
                    Topology::Interval => (c - r + 2.0 * r * u).clamp(0.0, 1.0),
                };
                if kind == MapKind::IidUniform {
                    Orbit::Iid {
                        first: Some(x),
                        rng: Box::new(rng),
                    }
                } else {
                    Orbit::Map {
                        system: self.system,
                        x,
                    }
                }
            }
        }
    }
}
