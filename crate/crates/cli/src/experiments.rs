//! Dispatch from a validated config to the statistics routines.

use ergostat_core::chenstein::{report, BinaryProcess, DynamicalProcess, MarkedChain};
use ergostat_core::correlations::decay_fit;
use ergostat_core::evl::block_maxima;
use ergostat_core::measure::{annulus_fit, ball_measure, dimension_fit};
use ergostat_core::oracle::doubling_short_return_measure;
use ergostat_core::return_stats::{compare_poisson, empirical_distribution, make_config, poisson_pmf};
use ergostat_core::short_returns::measure_v;
use ergostat_core::{Ball, CorrelationBudget, MapKind, RadialMeasure, ShortReturnConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ChenStein, Experiment, ExperimentConfig};
use crate::RunError;

/// Everything a run produces, held in memory until the run succeeds.
pub struct Artifacts {
    pub summary: Value,
    /// `(file name, contents)` of each data file.
    pub files: Vec<(String, Vec<u8>)>,
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>, RunError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).map_err(RunError::csv)?;
    for row in rows {
        w.serialize(row).map_err(RunError::csv)?;
    }
    w.into_inner().map_err(|e| RunError::Io(e.to_string()))
}

fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    match experiment {
        Experiment::ReturnDist => return_dist(cfg),
        Experiment::ShortReturns => short_returns(cfg),
        Experiment::Evl => evl(cfg),
        Experiment::Correlations => correlations(cfg),
        Experiment::ChenStein => chen_stein(cfg),
        Experiment::Dimension => dimension(cfg),
        Experiment::Annulus => annulus(cfg),
    }
}

fn return_dist(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let p = cfg.return_dist.as_ref().expect("validated");
    let system = &cfg.system;
    let ball = Ball::new(system, p.center, p.rho)?;
    let counting = make_config(system, &ball, p.t, &cfg.birkhoff, cfg.seed)?;
    let hist = empirical_distribution(system, &counting, p.samples, &cfg.sampler, cfg.seed)?;
    let cmp = compare_poisson(&hist)?;
    let rows: Vec<_> = (0..=cmp.cutoff)
        .map(|r| {
            let e = hist.probability(r);
            let q = poisson_pmf(p.t, r);
            (r, e, q, (e - q).abs())
        })
        .collect();
    let csv = csv_bytes(&["r", "empirical_prob", "poisson_prob", "abs_error"], rows)?;
    Ok(Artifacts {
        summary: json!({
            "t": p.t,
            "rho": p.rho,
            "center": p.center,
            "N": counting.n,
            "m": hist.sample_count,
            "tv": cmp.tv_distance,
            "mc_error": cmp.mc_error,
            "cutoff": cmp.cutoff,
            "tail_mass": cmp.tail_mass,
            "measure_used": counting.measure_used,
            "center_in_short_return_set": hist.center_in_short_return_set,
        }),
        files: vec![("returns_hist.csv".into(), csv)],
    })
}

fn short_returns(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let p = cfg.short_returns.as_ref().expect("validated");
    let system = &cfg.system;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for &rho in &p.rhos {
        let sr = ShortReturnConfig::new(system, rho, p.a_frak)?;
        let est = measure_v(system, &sr, p.centers, cfg.seed)?;
        let oracle = if system.kind() == MapKind::Doubling && sr.j <= 21 {
            Some(doubling_short_return_measure(rho, sr.j as u32)?)
        } else {
            None
        };
        rows.push((rho, sr.j, est.value, est.std_error, oracle));
        entries.push(json!({
            "rho": rho,
            "J": sr.j,
            "a_frak": sr.a_frak,
            "fraction": est.value,
            "std_error": est.std_error,
            "oracle": oracle,
        }));
    }
    let csv = csv_bytes(&["rho", "J", "fraction", "std_error", "oracle"], rows)?;
    Ok(Artifacts {
        summary: json!({ "centers": p.centers, "v_rho": entries }),
        files: vec![("vrho.csv".into(), csv)],
    })
}

fn evl(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let p = cfg.evl.as_ref().expect("validated");
    let spec = ergostat_core::ObservableSpec::new(p.observable, p.z)?;
    let measure = RadialMeasure::new(&cfg.system, p.z, &cfg.birkhoff, cfg.seed)?;
    let res = block_maxima(&cfg.system, &spec, &measure, p.n, p.blocks, &p.y_grid, &cfg.sampler, cfg.seed)?;
    let rows: Vec<_> = (0..res.levels.y_grid.len())
        .map(|i| (res.levels.y_grid[i], res.empirical_cdf[i], res.limit_cdf[i], res.abs_error[i]))
        .collect();
    let csv = csv_bytes(&["y", "empirical_cdf", "limit_cdf", "abs_error"], rows)?;
    Ok(Artifacts {
        summary: json!({
            "observable": p.observable,
            "z": p.z,
            "n": res.n,
            "m": res.m,
            "sup_distance": res.sup_distance,
            "levels": res.levels,
            "empirical_std_error": res.empirical_std_error,
        }),
        files: vec![("evl_cdf.csv".into(), csv)],
    })
}

fn correlations(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let p = cfg.correlations.as_ref().expect("validated");
    let budget = p.budget.unwrap_or_else(|| CorrelationBudget::for_system(&cfg.system));
    let fit = decay_fit(&cfg.system, p.g, p.h, &p.lags, &budget, p.fit, cfg.seed)?;
    let rows: Vec<_> = fit.lags.iter().zip(&fit.corr_values).map(|(&k, e)| (k, e.value, e.std_error)).collect();
    let csv = csv_bytes(&["k", "corr", "std_error"], rows)?;
    Ok(Artifacts {
        summary: json!({
            "g": p.g,
            "h": p.h,
            "budget": budget,
            "fit_kind": fit.fit_kind,
            "fitted_rate": fit.fitted_rate,
            "rate_std_error": fit.rate_std_error,
            "inconclusive": fit.inconclusive,
            "usable": fit.usable,
        }),
        files: vec![("correlations.csv".into(), csv)],
    })
}

fn chen_stein(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let rep = match cfg.chen_stein.as_ref().expect("validated") {
        ChenStein::Exact {
            transition,
            marked,
            n,
            delta,
            j_lower,
            e_size,
            c3,
        } => {
            let chain = MarkedChain::new(transition.clone(), marked.clone())?;
            report(&BinaryProcess::Exact(chain), *n, *delta, *j_lower, *e_size, *c3)?
        }
        ChenStein::Dynamical {
            center,
            rho,
            t,
            delta,
            j_lower,
            samples,
            e_size,
            c3,
        } => {
            let ball = Ball::new(&cfg.system, *center, *rho)?;
            let eps = ball_measure(&cfg.system, &ball, &cfg.birkhoff, cfg.seed)?;
            if eps.value.is_nan() || eps.value <= 0.0 {
                return Err(ergostat_core::Error::DegenerateBall(eps.value).into());
            }
            let n = (t / eps.value).floor() as usize;
            let process = BinaryProcess::Dynamical(DynamicalProcess {
                system: cfg.system,
                ball,
                samples: *samples,
                sampler: cfg.sampler,
                birkhoff: cfg.birkhoff,
                seed: cfg.seed,
            });
            report(&process, n, *delta, *j_lower, *e_size, *c3)?
        }
    };
    Ok(Artifacts {
        summary: serde_json::to_value(rep).expect("serializable"),
        files: vec![("chen_stein.json".into(), json_bytes(&rep))],
    })
}

fn dimension(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let p = cfg.dimension.as_ref().expect("validated");
    let fit = dimension_fit(&cfg.system, p.center, &p.radii, &cfg.birkhoff, cfg.seed)?;
    let rows: Vec<_> = fit.radii.iter().zip(&fit.measures).map(|(&r, m)| (r, m.value, m.std_error)).collect();
    let csv = csv_bytes(&["rho", "measure", "std_error"], rows)?;
    Ok(Artifacts {
        summary: json!({
            "center": p.center,
            "slope": fit.slope,
            "d0": fit.d0,
            "d1": fit.d1,
            "residuals": fit.residuals,
        }),
        files: vec![("dimension.csv".into(), csv)],
    })
}

fn annulus(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let p = cfg.annulus.as_ref().expect("validated");
    let fit = annulus_fit(&cfg.system, p.center, &p.rhos, &p.fractions, &cfg.birkhoff, cfg.seed)?;
    let csv = csv_bytes(&["rho", "r", "ratio"], fit.ratio_samples.iter().copied())?;
    Ok(Artifacts {
        summary: json!({ "center": p.center, "eta": fit.eta, "beta": fit.beta }),
        files: vec![("annulus.csv".into(), csv)],
    })
}
