//! Experiment configuration: TOML with dotted sections, or the same layout
//! as JSON.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ergostat_core::chenstein::MAX_EXACT_LENGTH;
use ergostat_core::{BirkhoffConfig, CorrelationBudget, FitKind, MapSystem, Observable, ObservableType, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ReturnDist,
    ShortReturns,
    Evl,
    Correlations,
    ChenStein,
    Dimension,
    Annulus,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ReturnDist => "return-dist",
            Experiment::ShortReturns => "short-returns",
            Experiment::Evl => "evl",
            Experiment::Correlations => "correlations",
            Experiment::ChenStein => "chen-stein",
            Experiment::Dimension => "dimension",
            Experiment::Annulus => "annulus",
        }
    }
}

fn default_system() -> MapSystem {
    MapSystem::doubling()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must agree with the command line when present.
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_system")]
    pub system: MapSystem,
    #[serde(default)]
    pub birkhoff: BirkhoffConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub return_dist: Option<ReturnDist>,
    pub short_returns: Option<ShortReturns>,
    pub evl: Option<Evl>,
    pub correlations: Option<Correlations>,
    pub chen_stein: Option<ChenStein>,
    pub dimension: Option<Dimension>,
    pub annulus: Option<Annulus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnDist {
    pub center: f64,
    pub rho: f64,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "twenty_thousand")]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortReturns {
    pub rhos: Vec<f64>,
    pub a_frak: Option<f64>,
    #[serde(default = "ten_thousand")]
    pub centers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evl {
    pub observable: ObservableType,
    pub z: f64,
    #[serde(default = "ten_thousand_u64")]
    pub n: u64,
    #[serde(default = "five_thousand")]
    pub blocks: usize,
    #[serde(default = "y_grid")]
    pub y_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlations {
    #[serde(default = "identity")]
    pub g: Observable,
    #[serde(default = "identity")]
    pub h: Observable,
    #[serde(default = "lags")]
    pub lags: Vec<usize>,
    /// Defaults to the per-system budget.
    pub budget: Option<CorrelationBudget>,
    #[serde(default = "exponential")]
    pub fit: FitKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChenStein {
    /// A marked Markov chain; every quantity is exact.
    Exact {
        transition: Vec<Vec<f64>>,
        marked: Vec<bool>,
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "Delta")]
        delta: usize,
        #[serde(default = "one_usize")]
        j_lower: usize,
        #[serde(default = "one_usize")]
        e_size: usize,
        c3: Option<f64>,
    },
    /// Hits of a ball along orbits of the configured system.
    Dynamical {
        center: f64,
        rho: f64,
        #[serde(default = "one")]
        t: f64,
        #[serde(rename = "Delta")]
        delta: usize,
        #[serde(default = "one_usize")]
        j_lower: usize,
        #[serde(default = "ten_thousand")]
        samples: usize,
        #[serde(default = "one_usize")]
        e_size: usize,
        c3: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub center: f64,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annulus {
    pub center: f64,
    pub rhos: Vec<f64>,
    #[serde(default = "fractions")]
    pub fractions: Vec<f64>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn five_thousand() -> usize {
    5_000
}
fn ten_thousand() -> usize {
    10_000
}
fn ten_thousand_u64() -> u64 {
    10_000
}
fn twenty_thousand() -> usize {
    20_000
}
fn y_grid() -> Vec<f64> {
    (0..=12).map(|i| -2.0 + 0.5 * i as f64).collect()
}
fn identity() -> Observable {
    Observable::Identity
}
fn lags() -> Vec<usize> {
    (1..=8).collect()
}
fn exponential() -> FitKind {
    FitKind::Exponential
}
fn fractions() -> Vec<f64> {
    vec![0.5, 0.25, 0.1]
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

impl ExperimentConfig {
    /// Parse TOML, or JSON when the file is `.json` or starts with `{`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, RunError> {
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
        if is_json {
            serde_json::from_str(text).map_err(|e| invalid(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(text).map_err(|e| invalid(format!("{}: {e}", path.display())))
        }
    }

    /// Range checks that do not need any computation.
    pub fn validate(&self, experiment: Experiment) -> Result<(), RunError> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(invalid(format!(
                    "config is for experiment {} but {} was requested",
                    e.name(),
                    experiment.name()
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(invalid("workers must be at least 1"));
        }
        let b = &self.birkhoff;
        if b.orbit_length == 0 || b.replicas == 0 {
            return Err(invalid("birkhoff orbit_length and replicas must be positive"));
        }
        let missing = || invalid(format!("missing [{}] section", experiment.name().replace('-', "_")));
        match experiment {
            Experiment::ReturnDist => {
                let p = self.return_dist.as_ref().ok_or_else(missing)?;
                check_radius("rho", p.rho)?;
                check_positive("t", p.t)?;
            }
            Experiment::ShortReturns => {
                let p = self.short_returns.as_ref().ok_or_else(missing)?;
                if p.rhos.is_empty() {
                    return Err(invalid("short_returns.rhos is empty"));
                }
                for &r in &p.rhos {
                    check_radius("rho", r)?;
                }
                if let Some(a) = p.a_frak {
                    check_positive("a_frak", a)?;
                }
            }
            Experiment::Evl => {
                let p = self.evl.as_ref().ok_or_else(missing)?;
                if p.y_grid.is_empty() || p.y_grid.iter().any(|y| !y.is_finite()) {
                    return Err(invalid("evl.y_grid must be a non-empty list of finite values"));
                }
            }
            Experiment::Correlations => {
                let p = self.correlations.as_ref().ok_or_else(missing)?;
                if p.lags.is_empty() {
                    return Err(invalid("correlations.lags is empty"));
                }
            }
            Experiment::ChenStein => match self.chen_stein.as_ref().ok_or_else(missing)? {
                ChenStein::Exact { n, e_size, .. } => {
                    if *n > MAX_EXACT_LENGTH {
                        return Err(invalid(format!("chen_stein.N must be at most {MAX_EXACT_LENGTH}")));
                    }
                    check_e_size(*e_size)?;
                }
                ChenStein::Dynamical { rho, t, e_size, .. } => {
                    check_radius("rho", *rho)?;
                    check_positive("t", *t)?;
                    check_e_size(*e_size)?;
                }
            },
            Experiment::Dimension => {
                let p = self.dimension.as_ref().ok_or_else(missing)?;
                for &r in &p.radii {
                    check_radius("radius", r)?;
                }
            }
            Experiment::Annulus => {
                let p = self.annulus.as_ref().ok_or_else(missing)?;
                if p.rhos.is_empty() || p.fractions.is_empty() {
                    return Err(invalid("annulus.rhos and annulus.fractions must be non-empty"));
                }
                for &r in &p.rhos {
                    check_radius("rho", r)?;
                }
            }
        }
        Ok(())
    }
}

fn check_radius(name: &str, r: f64) -> Result<(), RunError> {
    if r.is_finite() && r > 0.0 && r < 0.25 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1/4), got {r}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), RunError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_e_size(e: usize) -> Result<(), RunError> {
    if e == 0 {
        Err(invalid("e_size must be at least 1"))
    } else {
        Ok(())
    }
}
