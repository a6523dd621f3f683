//! Simulation and statistics for return-time, short-return and extreme-value
//! laws of one-dimensional dynamical systems.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chenstein;
pub mod correlations;
pub mod dynamics;
pub mod error;
pub mod evl;
pub mod measure;
pub mod oracle;
pub mod return_stats;
pub mod rng;
pub mod sampling;
pub mod short_returns;
pub mod stats;

pub use chenstein::{BinaryProcess, ChenSteinReport, MarkedChain};
pub use dynamics::{MapKind, MapSystem, PmStructure, Topology};
pub use error::{Error, Result};
pub use measure::{AnnulusFit, Ball, BirkhoffConfig, DimensionFit, MeasureEstimate, Method};
pub use sampling::{OrbitSource, SamplerConfig};
pub use return_stats::{CountingConfig, HitHistogram, PoissonComparison};
pub use short_returns::{IntervalSet, ReturnGapResult, ShortReturnConfig, SpCheck};
pub use correlations::{CorrelationBudget, DecayFit, FitKind, Observable};
pub use evl::{EvlLevels, EvlResult, ObservableSpec, ObservableType, RadialMeasure};
pub use stats::Estimate;
