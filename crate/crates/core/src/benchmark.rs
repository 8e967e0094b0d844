//! Monte-Carlo studies: parameter recovery, filtering of misspecified
//! impact paths, forward-backward initialization, permanent impact and
//! antithetic efficiency.
//!
//! Replications are seeded `(seed, replication)` and run in parallel; the
//! collected results are in replication order, so studies are reproducible
//! whatever the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::mae_star;
use crate::error::{Error, Result};
use crate::estimate::{filter, fit_with, forward_backward_init, quantile_sorted, FilterState, FitOptions, InitSearchSpec};
use crate::impact::{beta_regression, model_impact_series, Bin, WindowLayout};
use crate::irf::{cirf_monte_carlo, CirfOptions, Pairing};
use crate::optim::golden_section;
use crate::params::{StaticParams, Variant};
use crate::series::TickSeries;
use crate::simulate::{scenario_path_with, simulate, Ar1Spec, ScenarioKind, ScenarioPath, ShockStream, SimOptions, Simulation};

/// Return noise of the misspecified-dynamics study.
pub const FILTER_SIGMA: f64 = 0.008;
/// Return noise of the initialization study.
pub const INIT_SIGMA: f64 = 3.5e-4;
/// Return noise of the permanent-impact study.
pub const IMPACT_SIGMA: f64 = 1e-3;
/// Initial impact of the permanent-impact study.
pub const IMPACT_B0: f64 = 2.14e-3;
/// Return noise of the constant-impact benchmark.
pub const AMH_SIGMA: f64 = 1e-3;
/// Search draws used by the studies that re-estimate the model.
pub const STUDY_DRAWS: usize = 200;

/// The SDAMH-INT parameter set of the recovery study.
pub fn recovery_params() -> StaticParams {
    let mut p = StaticParams::zeros(Variant::SdamhInt);
    p.mu1 = 1e-3;
    p.mu2 = 0.08;
    p.a = vec![-0.7, -0.05, -0.01];
    p.b0 = 5e-3;
    p.b = vec![3e-3, 2e-5, 1e-6];
    p.c = vec![-3.0, -1.7, -0.6];
    p.d = vec![0.7, 0.03, 0.01];
    p.sigma2 = 0.01;
    p.alpha = 0.01;
    p
}

/// The SDAMH-INT parameter set of the permanent-impact study. Intercepts,
/// initial impact and noise level are not part of the reference set and
/// take the values of the constants above.
pub fn impact_params() -> StaticParams {
    let mut p = StaticParams::zeros(Variant::SdamhInt);
    p.mu1 = 0.0;
    p.mu2 = 0.0;
    p.a = vec![-0.03, -0.015, -0.001];
    p.b0 = IMPACT_B0;
    p.b = vec![4e-4, 1e-5, 7e-6];
    p.c = vec![-3.2, -1.6, -1.1];
    p.d = vec![0.08, 0.05, 0.03];
    p.sigma2 = IMPACT_SIGMA * IMPACT_SIGMA;
    p.alpha = 0.01;
    p
}

/// DGP of the misspecified-dynamics study: the recovery-study model
/// expressed in units where the impact paths live on `[0, 1]`. Returns are
/// scaled by `1 / b0` of the recovery set, so return-side coefficients
/// grow and the sign equation's return loadings shrink by that factor;
/// `sigma` is the return noise in the new units.
pub fn filter_study_params(sigma: f64) -> StaticParams {
    let mut p = recovery_params();
    let k = 1.0 / p.b0;
    p.mu1 *= k;
    p.b0 = 0.5;
    p.b.iter_mut().for_each(|v| *v *= k);
    p.c.iter_mut().for_each(|v| *v /= k);
    p.sigma2 = sigma * sigma;
    p
}

/// Constant-impact model at reference first-stock estimates; the
/// return noise is not given and is set to [`AMH_SIGMA`].
pub fn amh_benchmark_params() -> StaticParams {
    let mut p = StaticParams::zeros(Variant::AMH);
    p.mu2 = 0.112;
    p.a = vec![-0.022, -0.018, -0.008];
    p.b0 = 2.65e-3;
    p.b = vec![4.21e-4, 1.023e-5, 7.087e-6];
    p.c = vec![-3.204, -1.635, -1.114];
    p.d = vec![0.071, 0.057, 0.044];
    p.sigma2 = AMH_SIGMA * AMH_SIGMA;
    p
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// 95% quantile minus 5% quantile.
    pub dq: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                n,
                mean: f64::NAN,
                median: f64::NAN,
                std: f64::NAN,
                dq: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Summary {
            n,
            mean,
            median: quantile_sorted(&s, 0.5),
            std,
            dq: quantile_sorted(&s, 0.95) - quantile_sorted(&s, 0.05),
        }
    }
}

fn sim_options() -> SimOptions {
    SimOptions {
        keep_warmup: true,
        ..Default::default()
    }
}

fn study_fit_options(draws: usize, seed: u64, standard_errors: bool) -> FitOptions {
    FitOptions {
        init: InitSearchSpec {
            n_draws: draws,
            seed,
            ..InitSearchSpec::default()
        },
        standard_errors,
        ..FitOptions::default()
    }
}

/// Simulates replication `rep` of a study.
pub fn replicate(params: &StaticParams, scenario: &ScenarioPath, t_len: usize, seed: u64, rep: usize) -> Result<Simulation> {
    let shocks = ShockStream::for_path(seed, rep as u64, t_len);
    simulate(params, scenario, t_len, &shocks, &sim_options())
}

fn own_scenario(params: &StaticParams) -> ScenarioPath {
    if params.variant.is_score_driven() {
        ScenarioPath::score_driven()
    } else {
        ScenarioPath::constant()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryRow {
    pub name: String,
    pub truth: f64,
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryStudy {
    pub t_len: usize,
    pub rows: Vec<RecoveryRow>,
    /// Replications whose fit failed.
    pub failed: usize,
}

/// Simulates `s` series at `params`, re-estimates each and summarises the
/// estimates per parameter.
pub fn recovery_study(params: &StaticParams, t_len: usize, s: usize, seed: u64, draws: usize) -> Result<RecoveryStudy> {
    let scen = own_scenario(params);
    let fits: Vec<Option<Vec<(String, f64)>>> = (0..s)
        .into_par_iter()
        .map(|rep| {
            let sim = replicate(params, &scen, t_len, seed, rep).ok()?;
            let opts = study_fit_options(draws, seed.wrapping_add(rep as u64), false);
            let (est, _, _) = fit_with(&sim.series, params.variant, &opts).ok()?;
            Some(est.named_values())
        })
        .collect();
    let ok: Vec<&Vec<(String, f64)>> = fits.iter().flatten().collect();
    let rows = params
        .named_values()
        .into_iter()
        .enumerate()
        .map(|(j, (name, truth))| {
            let vals: Vec<f64> = ok.iter().map(|v| v[j].1).collect();
            RecoveryRow {
                name,
                truth,
                summary: Summary::of(&vals),
            }
        })
        .collect();
    Ok(RecoveryStudy {
        t_len,
        rows,
        failed: s - ok.len(),
    })
}

/// Filters `series` with the static parameters of `params` held fixed and
/// the score gain chosen by profile likelihood; each candidate gain starts
/// the recursion at its forward-backward initial value.
pub fn profile_alpha(series: &TickSeries, params: &StaticParams) -> Result<(f64, FilterState)> {
    if params.variant != Variant::SdamhInt {
        return Err(Error::UnsupportedVariant {
            op: "profile_alpha",
            variant: params.variant,
        });
    }
    let run = |la: f64| -> Result<FilterState> {
        let mut p = params.clone();
        p.alpha = la.exp();
        let b1 = forward_backward_init(series, &p, 0.0)?;
        filter(series, &p, b1)
    };
    let neg = |la: f64| run(la).map_or(f64::INFINITY, |f| -f.loglik.total);
    let (lo, hi, steps) = ((1e-4f64).ln(), (1.99f64).ln(), 25);
    let grid: Vec<f64> = (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&g| neg(g)).collect();
    let best = (0..steps).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("non-empty grid");
    if !vals[best].is_finite() {
        return Err(Error::Degenerate("likelihood not finite for any score gain".into()));
    }
    let la = golden_section(&neg, grid[best.saturating_sub(1)], grid[(best + 1).min(steps - 1)], 1e-4);
    let la = if neg(la) <= vals[best] { la } else { grid[best] };
    Ok((la.exp(), run(la)?))
}

/// How the filter's static parameters are obtained in [`filter_study`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FilterMethod {
    /// Full maximum-likelihood fit of SDAMH-INT on each replication.
    Fit { draws: usize },
    /// True static parameters, score gain by profile likelihood.
    ProfileAlpha,
}

impl Default for FilterMethod {
    fn default() -> Self {
        FilterMethod::Fit { draws: STUDY_DRAWS }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterRow {
    pub scenario: ScenarioKind,
    pub t_len: usize,
    pub mae_star: Summary,
    pub alpha: Summary,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterStudy {
    pub sigma: f64,
    pub method: FilterMethod,
    pub rows: Vec<FilterRow>,
}

/// MAE* of the SDAMH-INT filter on returns and signs whose impact follows a
/// scenario path, averaged over `s` replications per scenario and sample
/// size. The AR(1) path is drawn once per sample size and shared by the
/// replications.
pub fn filter_study(
    kinds: &[ScenarioKind],
    t_lens: &[usize],
    s: usize,
    seed: u64,
    sigma: f64,
    ar1: &Ar1Spec,
    method: FilterMethod,
) -> Result<FilterStudy> {
    let base = filter_study_params(sigma);
    let mut rows = Vec::new();
    for &kind in kinds {
        for &t_len in t_lens {
            let scen = scenario_path_with(kind, t_len, ar1)?;
            let out: Vec<Option<(f64, f64)>> = (0..s)
                .into_par_iter()
                .map(|rep| {
                    let sim = replicate(&base, &scen, t_len, seed, rep).ok()?;
                    let (alpha, f) = match method {
                        FilterMethod::ProfileAlpha => profile_alpha(&sim.series, &base).ok()?,
                        FilterMethod::Fit { draws } => {
                            let opts = study_fit_options(draws, seed.wrapping_add(rep as u64), false);
                            let (est, f, _) = fit_with(&sim.series, Variant::SdamhInt, &opts).ok()?;
                            (est.alpha, f)
                        }
                    };
                    let m = mae_star(&f.b0_path, &sim.b0).ok()?;
                    Some((m.mae_star, alpha))
                })
                .collect();
            let ok: Vec<(f64, f64)> = out.iter().flatten().copied().collect();
            rows.push(FilterRow {
                scenario: kind,
                t_len,
                mae_star: Summary::of(&ok.iter().map(|v| v.0).collect::<Vec<_>>()),
                alpha: Summary::of(&ok.iter().map(|v| v.1).collect::<Vec<_>>()),
                failed: s - ok.len(),
            });
        }
    }
    Ok(FilterStudy { sigma, method, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct InitStudy {
    pub t_len: usize,
    pub truth: f64,
    pub estimate: Summary,
}

/// Forward-backward recovery of the initial impact under the true static
/// parameters, starting each forward pass from zero.
pub fn init_study(params: &StaticParams, t_len: usize, s: usize, seed: u64) -> Result<InitStudy> {
    let est: Vec<f64> = (0..s)
        .into_par_iter()
        .map(|rep| {
            let sim = replicate(params, &ScenarioPath::score_driven(), t_len, seed, rep)?;
            forward_backward_init(&sim.series, params, 0.0)
        })
        .collect::<Result<_>>()?;
    Ok(InitStudy {
        t_len,
        truth: params.b0,
        estimate: Summary::of(&est),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImpactStudy {
    pub t_len: usize,
    pub m: usize,
    pub model: Summary,
    pub regression: Summary,
    pub failed: usize,
}

/// Permanent impact per unit sign: the re-estimated model's closed form
/// averaged over the windows of each replication, against the slope of
/// window returns on net order flow over the same windows.
pub fn impact_study(params: &StaticParams, t_len: usize, s: usize, m: usize, seed: u64, draws: usize) -> Result<ImpactStudy> {
    let scen = own_scenario(params);
    let out: Vec<Option<(f64, f64)>> = (0..s)
        .into_par_iter()
        .map(|rep| {
            let sim = replicate(params, &scen, t_len, seed, rep).ok()?;
            let opts = study_fit_options(draws, seed.wrapping_add(rep as u64), false);
            let (est, f, _) = fit_with(&sim.series, params.variant, &opts).ok()?;
            let model = model_impact_series(&est, Some(&f), None, &sim.series, m, WindowLayout::default()).ok()?;
            let reg = beta_regression(&sim.simulated(), Bin::Trades(m)).ok()?;
            Some((model.mean(), reg.slope))
        })
        .collect();
    let ok: Vec<(f64, f64)> = out.iter().flatten().copied().collect();
    Ok(ImpactStudy {
        t_len,
        m,
        model: Summary::of(&ok.iter().map(|v| v.0).collect::<Vec<_>>()),
        regression: Summary::of(&ok.iter().map(|v| v.1).collect::<Vec<_>>()),
        failed: s - ok.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AntitheticStudy {
    pub points: Vec<usize>,
    /// Crude standard error over antithetic standard error, per point.
    pub ratios: Vec<f64>,
    pub mean_ratio: f64,
}

/// Standard errors of the long-run CIRF with and without antithetic pairing
/// on the same seeds, at `n_points` conditioning trades of one simulated
/// sample.
pub fn antithetic_study(params: &StaticParams, n_sim: usize, n_points: usize, pairing: Pairing, seed: u64) -> Result<AntitheticStudy> {
    let warm = params.lags.warmup();
    let t_len = warm + 100 * n_points.max(1);
    let sim = replicate(params, &own_scenario(params), t_len, seed, 0)?;
    let points: Vec<usize> = (0..n_points).map(|i| 2 * warm + 100 * i).filter(|&t| t < sim.series.len()).collect();
    let ratios: Vec<f64> = points
        .par_iter()
        .map(|&t| {
            let b0 = sim.b0.get(t - warm).copied().unwrap_or(params.b0);
            let base = CirfOptions {
                n_sim,
                seed,
                pairing,
                ..CirfOptions::default()
            };
            let anti = cirf_monte_carlo(&sim.series, params, b0, t, &base)?;
            let crude = cirf_monte_carlo(&sim.series, params, b0, t, &CirfOptions { antithetic: false, ..base })?;
            Ok(crude.lrcirf_std() / anti.lrcirf_std())
        })
        .collect::<Result<_>>()?;
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    Ok(AntitheticStudy { points, ratios, mean_ratio })
}

/// Standard deviations of the reference recovery table, in `named_values`
/// order. `mu2` and the long return aggregate are left out of the check.
pub const RECOVERY_STD: &[(&str, f64)] = &[
    ("mu1", 1.939e-5),
    ("a1", 5.271e-4),
    ("a10bar", 1.367e-4),
    ("b0", 1.351e-4),
    ("b1", 3.407e-4),
    ("b10bar", 2.585e-6),
    ("b100bar", 2.267e-7),
    ("c1", 1.198e-2),
    ("c10bar", 1.756e-3),
    ("c100bar", 3.273e-4),
    ("d1", 3.465e-4),
    ("d10bar", 2.010e-3),
    ("d100bar", 2.275e-3),
    ("sigma2", 1.000e-3),
];
/// Reference mean and standard deviation of the recovered score gain.
pub const RECOVERY_ALPHA: (f64, f64) = (0.010, 2.712e-3);
/// Reference MAE* at T = 10,000.
pub const FILTER_MAE_STAR: [(ScenarioKind, f64); 4] = [
    (ScenarioKind::FastSine, 0.015),
    (ScenarioKind::Step, 0.010),
    (ScenarioKind::Ramp, 0.014),
    (ScenarioKind::AR1, 0.046),
];
/// Reference means of the model and regression impact estimators.
pub const IMPACT_MODEL_MEAN: f64 = 2.443e-3;
pub const IMPACT_REGRESSION_MEAN: f64 = 2.229e-3;

/// One line of a benchmark pass/fail table.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub item: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

fn check(suite: &'static str, item: impl Into<String>, value: f64, target: String, pass: bool) -> Check {
    Check {
        suite,
        item: item.into(),
        value,
        target,
        pass,
    }
}

/// Replication means within 5 reference standard deviations of the truth;
/// the gain within 3.
pub fn check_recovery(study: &RecoveryStudy) -> Vec<Check> {
    let mut out = Vec::new();
    for (name, sd) in RECOVERY_STD {
        if let Some(row) = study.rows.iter().find(|r| r.name == *name) {
            let pass = (row.summary.mean - row.truth).abs() <= 5.0 * sd;
            out.push(check("recovery", *name, row.summary.mean, format!("{:.4e} +- {:.3e}", row.truth, 5.0 * sd), pass));
        }
    }
    if let Some(row) = study.rows.iter().find(|r| r.name == "alpha") {
        let (mean, sd) = RECOVERY_ALPHA;
        let pass = (row.summary.mean - mean).abs() <= 3.0 * sd;
        out.push(check("recovery", "alpha", row.summary.mean, format!("{mean} +- {:.3e}", 3.0 * sd), pass));
    }
    out.push(check("recovery", "failed fits", study.failed as f64, "0".into(), study.failed == 0));
    out
}

/// MAE* within 50% of the reference at the longest sample, and falling
/// from the shortest to the longest sample.
pub fn check_filter(study: &FilterStudy) -> Vec<Check> {
    let mut out = Vec::new();
    let mut kinds: Vec<ScenarioKind> = study.rows.iter().map(|r| r.scenario).collect();
    kinds.dedup();
    for kind in kinds {
        let rows: Vec<&FilterRow> = study.rows.iter().filter(|r| r.scenario == kind).collect();
        let short = rows.iter().min_by_key(|r| r.t_len).expect("non-empty");
        let long = rows.iter().max_by_key(|r| r.t_len).expect("non-empty");
        if let Some(&(_, target)) = FILTER_MAE_STAR.iter().find(|(k, _)| *k == kind) {
            let v = long.mae_star.mean;
            let pass = (v - target).abs() <= 0.5 * target;
            out.push(check("filter", format!("{kind} MAE* T={}", long.t_len), v, format!("{target} +- 50%"), pass));
        }
        if short.t_len < long.t_len {
            let (a, b) = (short.mae_star.mean, long.mae_star.mean);
            out.push(check(
                "filter",
                format!("{kind} MAE* T={} / T={}", long.t_len, short.t_len),
                b / a,
                "< 1".into(),
                b < a,
            ));
        }
    }
    out
}

pub fn check_init(study: &InitStudy) -> Vec<Check> {
    let e = &study.estimate;
    vec![
        check("init", "mean b0", e.mean, "[4.9e-3, 5.1e-3]".into(), (4.9e-3..=5.1e-3).contains(&e.mean)),
        check("init", "std b0", e.std, "< 1e-4".into(), e.std < 1e-4),
    ]
}

pub fn check_impact(study: &ImpactStudy) -> Vec<Check> {
    let (m, r) = (&study.model, &study.regression);
    vec![
        check(
            "impact",
            "mean model impact",
            m.mean,
            format!("{IMPACT_MODEL_MEAN:.3e} +- 10%"),
            (m.mean - IMPACT_MODEL_MEAN).abs() <= 0.10 * IMPACT_MODEL_MEAN,
        ),
        check(
            "impact",
            "mean regression impact",
            r.mean,
            format!("{IMPACT_REGRESSION_MEAN:.3e} +- 15%"),
            (r.mean - IMPACT_REGRESSION_MEAN).abs() <= 0.15 * IMPACT_REGRESSION_MEAN,
        ),
        check("impact", "std model / std regression", m.std / r.std, "< 1".into(), m.std < r.std),
        check("impact", "failed fits", study.failed as f64, "0".into(), study.failed == 0),
    ]
}

pub fn check_antithetic(study: &AntitheticStudy) -> Vec<Check> {
    let v = study.mean_ratio;
    vec![check("antithetic", "crude / antithetic std", v, "[1.3, 2.2]".into(), (1.3..=2.2).contains(&v))]
}
