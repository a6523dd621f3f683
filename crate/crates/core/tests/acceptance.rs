//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p ergostat-core --test acceptance`.

use std::time::Instant;

use ergostat_core::chenstein::{agg_bound, exact_count_distribution, r1_estimate, r2_estimate, theorem_bound, BoundInputs};
use ergostat_core::correlations::{correlations, fit_decay, CorrelationBudget, FitKind, Observable};
use ergostat_core::dynamics::pm_a_sequence;
use ergostat_core::evl::{block_maxima, dprime_sum, ConditionConfig, EvlResult, ObservableSpec, ObservableType, RadialMeasure};
use ergostat_core::measure::{annulus_ratio, dimension_fit};
use ergostat_core::oracle::{binomial_pmf, doubling_corr_oracle, doubling_periodic_points, doubling_short_return_measure, path_enumeration};
use ergostat_core::return_stats::{compare_poisson, empirical_distribution, make_config, HitHistogram, PoissonComparison};
use ergostat_core::rng::{substream, Stream};
use ergostat_core::short_returns::{check_sp_inclusion, compute_s_p, measure_v, ShortReturnConfig, SpCheck};
use ergostat_core::{Ball, BinaryProcess, BirkhoffConfig, MapSystem, MarkedChain, MeasureEstimate, SamplerConfig};
use rand::Rng;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn poisson_run(system: &MapSystem, center: f64, rho: f64, m: usize, seed: u64) -> (HitHistogram, PoissonComparison) {
    let ball = Ball::new(system, center, rho).unwrap();
    let cfg = make_config(system, &ball, 1.0, &BirkhoffConfig::default(), seed).unwrap();
    let hist = empirical_distribution(system, &cfg, m, &SamplerConfig::default(), seed).unwrap();
    let cmp = compare_poisson(&hist).unwrap();
    (hist, cmp)
}

fn c1_histogram() -> HitHistogram {
    poisson_run(&MapSystem::doubling(), 2f64.sqrt() - 1.0, 1e-4, 20_000, SEED).0
}

fn criterion_1() -> Outcome {
    let d = MapSystem::doubling();
    let x = 2f64.sqrt() - 1.0;
    let (hist, main) = poisson_run(&d, x, 1e-4, 20_000, SEED);
    let (_, coarse) = poisson_run(&d, x, 1e-3, 20_000, SEED + 1);
    let (_, fine) = poisson_run(&d, x, 1e-5, 20_000, SEED + 2);
    let trend = coarse.tv_distance > fine.tv_distance - 2.0 * fine.mc_error;
    outcome(
        hist.n == 5000 && main.tv_distance < 0.03 && trend,
        format!(
            "N={} tv={:.4} (<0.03); tv(1e-3)={:.4} > tv(1e-5)={:.4} - 2*{:.4}",
            hist.n, main.tv_distance, coarse.tv_distance, fine.tv_distance, fine.mc_error
        ),
    )
}

fn criterion_2() -> Outcome {
    let pm = MapSystem::manneville_pomeau(0.5).unwrap();
    let (hist, cmp) = poisson_run(&pm, 0.6, 1e-3, 10_000, SEED);
    outcome(
        cmp.tv_distance < 0.10,
        format!("N={} tv={:.4} (<0.10) mc_error={:.4}", hist.n, cmp.tv_distance, cmp.mc_error),
    )
}

fn criterion_3() -> Outcome {
    let rot = MapSystem::golden_rotation();
    let (hist, cmp) = poisson_run(&rot, 0.3, 1e-3, 10_000, SEED);
    outcome(
        cmp.tv_distance > 0.2,
        format!("N={} tv={:.4} (>0.2) P(1)={:.4}", hist.n, cmp.tv_distance, hist.probability(1)),
    )
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, t) in [(20u64, 1.0f64), (100, 1.0), (100, 2.0), (1000, 2.0)] {
        let bin = binomial_pmf(n, t / n as f64).unwrap();
        // Poisson pmf by the recursion p_k = p_{k-1} t / k
        let mut p = (-t).exp();
        let mut covered = 0.0;
        let mut sum = 0.0;
        for (k, b) in bin.iter().enumerate() {
            if k > 0 {
                p *= t / k as f64;
            }
            covered += p;
            sum += (b - p).abs();
        }
        sum += (1.0 - covered).max(0.0);
        let bound = agg_bound(t, n as usize).unwrap();
        let ok = sum <= bound && (bound - 2.0 * t * t / n as f64).abs() < 1e-15;
        pass &= ok;
        parts.push(format!("({n},{t}) {sum:.5}<={bound:.4}"));
    }
    outcome(pass, parts.join("; "))
}

fn chain_battery() -> Vec<MarkedChain> {
    let two = |a: f64, b: f64| MarkedChain::new(vec![vec![1.0 - a, a], vec![b, 1.0 - b]], vec![false, true]).unwrap();
    vec![
        two(0.1, 0.5),
        two(0.05, 0.9),
        two(0.2, 0.2),
        two(0.02, 0.3),
        MarkedChain::iid(0.1).unwrap(),
        MarkedChain::new(
            vec![vec![0.8, 0.15, 0.05], vec![0.3, 0.5, 0.2], vec![0.4, 0.4, 0.2]],
            vec![false, false, true],
        )
        .unwrap(),
        MarkedChain::new(
            vec![vec![0.9, 0.1, 0.0], vec![0.0, 0.5, 0.5], vec![0.7, 0.0, 0.3]],
            vec![false, true, true],
        )
        .unwrap(),
        MarkedChain::new(
            vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.7, 0.1], vec![0.5, 0.1, 0.4]],
            vec![false, true, false],
        )
        .unwrap(),
    ]
}

fn criterion_5() -> Outcome {
    let mut cases = 0u64;
    let mut worst_ratio = 0.0f64;
    let mut max_dp_gap = 0.0f64;
    let mut failures = Vec::new();
    for (ci, chain) in chain_battery().iter().enumerate() {
        let eps = chain.epsilon();
        let process = BinaryProcess::Exact(chain.clone());
        for n in 3..=14usize {
            let dp = exact_count_distribution(chain, n).unwrap();
            let en = path_enumeration(chain.transition(), chain.marked(), n).unwrap();
            for (a, b) in dp.iter().zip(&en) {
                max_dp_gap = max_dp_gap.max((a - b).abs());
            }
            let t = n as f64 * eps;
            // Poisson pmf by recursion, independent of the library
            let mut pois = vec![(-t).exp()];
            for k in 1..=n {
                pois.push(pois[k - 1] * t / k as f64);
            }
            for delta in 2..n {
                let r1 = r1_estimate(&process, n, delta).unwrap();
                let r2 = r2_estimate(&process, 1, delta).unwrap();
                let report = theorem_bound(&BoundInputs {
                    epsilon: eps,
                    t,
                    n,
                    delta,
                    r1,
                    r2,
                    e_size: 1,
                    c3: None,
                })
                .unwrap();
                for k in 0..=n {
                    cases += 1;
                    let lhs = (en[k] - pois[k]).abs();
                    worst_ratio = worst_ratio.max(lhs / report.bound);
                    if lhs > report.bound {
                        failures.push(format!("chain {ci} N={n} D={delta} k={k}"));
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty() && max_dp_gap <= 1e-12,
        format!(
            "{cases} cases, max |lhs|/bound={worst_ratio:.3}, DP vs enumeration {max_dp_gap:.1e}, violations {}",
            failures.len()
        ),
    )
}

fn evl_run(obs_type: ObservableType) -> EvlResult {
    let d = MapSystem::doubling();
    let spec = ObservableSpec::new(obs_type, 2f64.sqrt() - 1.0).unwrap();
    let mu = RadialMeasure::new(&d, spec.z, &BirkhoffConfig::default(), SEED).unwrap();
    let grid: Vec<f64> = (0..=12).map(|i| -2.0 + 0.5 * i as f64).collect();
    block_maxima(&d, &spec, &mu, 10_000, 5_000, &grid, &SamplerConfig::default(), SEED).unwrap()
}

fn criterion_6() -> Outcome {
    let types = [
        ObservableType::Type1,
        ObservableType::Type2 { beta_frechet: 2.0 },
        ObservableType::Type3 { gamma_weibull: 2.0, d: 1.0 },
    ];
    let sups: Vec<f64> = types.iter().map(|&t| evl_run(t).sup_distance).collect();
    outcome(
        sups.iter().all(|&s| s < 0.05),
        format!("sup distance type1={:.4} type2={:.4} type3={:.4} (<0.05)", sups[0], sups[1], sups[2]),
    )
}

fn criterion_7() -> Outcome {
    let d = MapSystem::doubling();
    let cfg = ConditionConfig {
        samples: 20_000,
        seed: SEED,
        ..Default::default()
    };
    let run = |z: f64, k: u64| {
        let spec = ObservableSpec::new(ObservableType::Type1, z).unwrap();
        let mu = RadialMeasure::new(&d, z, &BirkhoffConfig::default(), SEED).unwrap();
        dprime_sum(&d, &spec, &mu, 10_000, k, &cfg).unwrap()
    };
    let g4 = run(2f64.sqrt() - 1.0, 4);
    let g64 = run(2f64.sqrt() - 1.0, 64);
    let p4 = run(1.0 / 3.0, 4);
    let p64 = run(1.0 / 3.0, 64);
    outcome(
        g64.value <= 0.5 * g4.value && p4.value > 0.1 && p64.value > 0.1,
        format!(
            "generic k=4 {:.4} -> k=64 {:.4}; z=1/3 k=4 {:.4}, k=64 {:.4} (>0.1)",
            g4.value, g64.value, p4.value, p64.value
        ),
    )
}

fn v_estimates(workers_seed: u64) -> Vec<(ShortReturnConfig, MeasureEstimate)> {
    let d = MapSystem::doubling();
    [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&rho| {
            let c = ShortReturnConfig::new(&d, rho, Some(0.25)).unwrap();
            (c, measure_v(&d, &c, 10_000, workers_seed).unwrap())
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let est = v_estimates(SEED);
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, e) in &est {
        let oracle = doubling_short_return_measure(c.rho, c.j as u32).unwrap();
        let ok = (e.value - oracle).abs() <= 0.2 * oracle;
        pass &= ok;
        parts.push(format!("rho={:.0e} J={} V={:.2e}+-{:.1e} oracle={:.2e}", c.rho, c.j, e.value, e.std_error, oracle));
    }
    for w in est.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        // exact zeros carry no error, so ties count as non-increasing
        pass &= b.value <= a.value + 3.0 * a.std_error.hypot(b.std_error);
    }
    outcome(pass, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let d = MapSystem::doubling();
    let a = d.expansion_constant();
    let mut rng = substream(SEED, Stream::Inclusion, 0);
    let mut tally = [0u64; 4];
    let mut trials = 0;
    while trials < 1000 {
        let n: u32 = rng.random_range(1..=6);
        let p: u32 = rng.random_range(0..=2);
        let rho = 10f64.powf(rng.random_range(-8.0..-3.0));
        let s = compute_s_p(a, n, p).unwrap();
        if s.saturated || s.value * rho >= 0.25 {
            continue;
        }
        // half the centers sit near a periodic point so the antecedent often holds
        let center = if trials % 2 == 0 {
            rng.random::<f64>()
        } else {
            let q: u32 = rng.random_range(1..=6);
            let pts = doubling_periodic_points(q).unwrap();
            let c = pts[rng.random_range(0..pts.len())] + rho * rng.random_range(-1.0..1.0);
            c.rem_euclid(1.0)
        };
        let check = check_sp_inclusion(&d, center, rho, n, p).unwrap();
        let slot = match check {
            SpCheck::Vacuous => 0,
            SpCheck::Holds => 1,
            SpCheck::Violated => 2,
            SpCheck::Inconclusive => 3,
        };
        tally[slot] += 1;
        trials += 1;
    }
    outcome(
        tally[2] == 0 && tally[3] == 0,
        format!(
            "{trials} trials: holds={} vacuous={} violated={} inconclusive={}",
            tally[1], tally[0], tally[2], tally[3]
        ),
    )
}

fn criterion_10() -> Outcome {
    let s = pm_a_sequence(0.5, 10_000).unwrap();
    let max_res = s.residuals().into_iter().fold(0.0, f64::max);
    let slope = s.loglog_slope(100, 10_000).unwrap();
    outcome(
        max_res <= 1e-12 && (slope + 2.0).abs() <= 0.15,
        format!("max residual {max_res:.1e} (<=1e-12), slope {slope:.4} (-2 +- 0.15)"),
    )
}

fn criterion_11() -> Outcome {
    let d = MapSystem::doubling();
    let lags: Vec<usize> = (1..=8).collect();
    let budget = CorrelationBudget::for_system(&d);
    let values = correlations(&d, Observable::Identity, Observable::Identity, &lags, &budget, SEED).unwrap();
    let worst_z = lags
        .iter()
        .zip(&values)
        .map(|(&k, v)| (v.value - doubling_corr_oracle(k as u32)).abs() / v.std_error)
        .fold(0.0, f64::max);
    let fit = fit_decay(&lags, &values, FitKind::Exponential);
    let rate = fit.fitted_rate.unwrap_or(f64::NAN);
    outcome(
        worst_z <= 3.0 && (rate - 2f64.ln()).abs() <= 0.1,
        format!("budget {:.0e}, worst |z|={worst_z:.2} (<=3), rate {rate:.4} (ln2 +- 0.1)", budget.iterates as f64),
    )
}

fn criterion_12() -> Outcome {
    let grid = [1e-2, 10f64.powf(-2.5), 1e-3, 10f64.powf(-3.5), 1e-4];
    let cfg = BirkhoffConfig::default();
    let d = MapSystem::doubling();
    let pm = MapSystem::manneville_pomeau(0.5).unwrap();
    let s_d = dimension_fit(&d, 0.3, &grid, &cfg, SEED).unwrap().slope;
    let s_pm = dimension_fit(&pm, 0.6, &grid, &cfg, SEED).unwrap().slope;
    let s_0 = dimension_fit(&pm, 0.0, &grid, &cfg, SEED).unwrap().slope;
    let ratio = annulus_ratio(&d, 0.3, 1e-2, 1e-3, &cfg, SEED).unwrap();
    let pm_ratio = annulus_ratio(&pm, 0.6, 1e-2, 1e-3, &cfg, SEED).unwrap();
    outcome(
        (s_d - 1.0).abs() <= 0.01
            && (s_pm - 1.0).abs() <= 0.15
            && (s_0 - 0.5).abs() <= 0.15
            && (ratio - 0.2).abs() <= 1e-12
            && (pm_ratio - 0.2).abs() <= 0.1,
        format!(
            "slopes doubling {s_d:.4}, MP@0.6 {s_pm:.4}, MP@0 {s_0:.4}; annulus doubling {ratio:.15}, MP@0.6 {pm_ratio:.4}"
        ),
    )
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap()
        .install(f)
}

fn criterion_13() -> Outcome {
    let snapshot = || {
        let h = c1_histogram();
        let e = evl_run(ObservableType::Type1);
        let v = v_estimates(SEED);
        serde_json::to_string(&(h, e, v)).unwrap()
    };
    let one = with_workers(1, snapshot);
    let eight = with_workers(8, snapshot);
    outcome(one == eight, format!("runs 1, 6, 8 at workers 1 vs 8: {} bytes compared", one.len()))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 13] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
        (13, criterion_13),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2}: {status} [{:.1}s] {}", start.elapsed().as_secs_f64(), o.detail);
        failed += !o.pass as u32;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
