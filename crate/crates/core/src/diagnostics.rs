//! Residual tests, model-selection scores, filtering accuracy and the
//! state/impact regressions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimate::{filter, FilterState};
use crate::ols::ols;
use crate::params::StaticParams;
use crate::series::TickSeries;
use crate::simulate::std_normal_quantile;

fn chi2_sf(stat: f64, df: f64) -> f64 {
    let d = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - d.cdf(stat)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct JarqueBera {
    pub stat: f64,
    pub p_value: f64,
    pub skew: f64,
    pub excess_kurtosis: f64,
}

pub fn jarque_bera(sample: &[f64]) -> Result<JarqueBera> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::Degenerate(format!("{n} observations; the JB test needs at least 20")));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in sample {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) || !m2.is_finite() {
        return Err(Error::Degenerate("zero-variance sample".into()));
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    let stat = nf / 6.0 * (skew * skew + kurt * kurt / 4.0);
    Ok(JarqueBera {
        stat,
        p_value: (-stat / 2.0).exp(),
        skew,
        excess_kurtosis: kurt,
    })
}

/// Quantile residuals of the trade signs under buy probabilities `pi`.
///
/// With a seed the residual is randomized: `u` is uniform on the slice of
/// `(0, 1)` the observed outcome occupies (`(1 - pi, 1)` for a buy,
/// `(0, 1 - pi)` for a sell). Without one the slice midpoint is used.
pub fn quantile_residuals(signs: &[f64], pi: &[f64], seed: Option<u64>) -> Result<Vec<f64>> {
    if signs.len() != pi.len() {
        return Err(Error::InvalidArgument(format!("{} signs for {} probabilities", signs.len(), pi.len())));
    }
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    signs
        .iter()
        .zip(pi)
        .enumerate()
        .map(|(i, (&x, &p))| {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::DegenerateProbability { position: i });
            }
            let (lo, hi) = if x > 0.0 { (1.0 - p, 1.0) } else { (0.0, 1.0 - p) };
            let v: f64 = match rng.as_mut() {
                Some(g) => g.sample(Open01),
                None => 0.5,
            };
            Ok(std_normal_quantile(lo + v * (hi - lo)))
        })
        .collect()
}

/// ARCH-LM test: `n R^2` of squared residuals on `p` of their own lags.
pub fn arch_lm(resid: &[f64], p: usize) -> Result<f64> {
    let n = resid.len();
    if p == 0 || n <= p + 10 {
        return Err(Error::Degenerate(format!("{n} residuals for an LM test with {p} lags")));
    }
    let e2: Vec<f64> = resid.iter().map(|e| e * e).collect();
    let rows = n - p;
    let mut x = Vec::with_capacity(rows * (p + 1));
    for t in p..n {
        x.push(1.0);
        for j in 1..=p {
            x.push(e2[t - j]);
        }
    }
    let fit = ols(&e2[p..], &x, p + 1)?;
    let r2 = if fit.r2.is_finite() { fit.r2.max(0.0) } else { 0.0 };
    Ok(chi2_sf(rows as f64 * r2, p as f64))
}

pub const LM_LAGS: [usize; 10] = [1, 2, 3, 4, 5, 7, 10, 15, 20, 50];

#[derive(Debug, Clone, Serialize)]
pub struct LmSuite {
    pub lags: Vec<usize>,
    pub p_values: Vec<f64>,
    /// Lags at which homoscedasticity is not rejected at 5%.
    pub pass_count: usize,
}

/// Runs [`arch_lm`] over [`LM_LAGS`] (lags the sample is too short for are
/// left out).
pub fn arch_lm_suite(resid: &[f64]) -> Result<LmSuite> {
    let lags: Vec<usize> = LM_LAGS.iter().copied().filter(|&p| resid.len() > p + 10).collect();
    let p_values = lags.iter().map(|&p| arch_lm(resid, p)).collect::<Result<Vec<_>>>()?;
    Ok(LmSuite {
        pass_count: p_values.iter().filter(|&&p| p > 0.05).count(),
        lags,
        p_values,
    })
}

/// Sums of consecutive blocks of `n` residuals.
pub fn aggregate_trades(resid: &[f64], n: usize) -> Vec<f64> {
    resid.chunks_exact(n.max(1)).map(|c| c.iter().sum()).collect()
}

/// Sums of residuals per physical-time bin of `seconds`.
pub fn aggregate_time(resid: &[f64], timestamps: &[f64], seconds: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut cur = None;
    for (e, ts) in resid.iter().zip(timestamps) {
        let key = (ts / seconds).floor() as i64;
        if cur != Some(key) {
            out.push(0.0);
            cur = Some(key);
        }
        *out.last_mut().expect("pushed") += e;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum BicConvention {
    /// `K log T - log L`.
    #[default]
    LogL,
    /// `K log T - 2 log L`.
    Textbook,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelScore {
    pub bic: f64,
    pub convention: BicConvention,
    pub k: usize,
    pub t: usize,
    pub loglik: f64,
}

pub fn bic(k: usize, t: usize, loglik: f64, convention: BicConvention) -> Result<ModelScore> {
    if k == 0 || t == 0 {
        return Err(Error::InvalidArgument("K and T must be positive".into()));
    }
    let w = match convention {
        BicConvention::LogL => 1.0,
        BicConvention::Textbook => 2.0,
    };
    Ok(ModelScore {
        bic: k as f64 * (t as f64).ln() - w * loglik,
        convention,
        k,
        t,
        loglik,
    })
}

/// BIC for a real-valued sample size (for checking the formula).
pub fn bic_value(k: f64, t: f64, loglik: f64, convention: BicConvention) -> f64 {
    let w = if convention == BicConvention::LogL { 1.0 } else { 2.0 };
    k * t.ln() - w * loglik
}

/// Out-of-sample log-likelihood: today's series under yesterday's
/// parameters, the impact recursion started from yesterday's prediction.
pub fn osl(day: &TickSeries, prev_params: &StaticParams, prev_filter: Option<&FilterState>) -> Result<f64> {
    let b0 = prev_filter.map_or(prev_params.b0, |f| f.b0_next);
    Ok(filter(day, prev_params, b0)?.loglik.total)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FilterBenchmark {
    pub mae: f64,
    /// `NaN` when the true path averages to zero.
    pub mae_star: f64,
}

pub fn mae_star(filtered: &[f64], truth: &[f64]) -> Result<FilterBenchmark> {
    if filtered.len() != truth.len() || truth.is_empty() {
        return Err(Error::InvalidArgument(format!("paths of length {} and {}", filtered.len(), truth.len())));
    }
    let n = truth.len() as f64;
    let mae = filtered.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mean = truth.iter().sum::<f64>() / n;
    Ok(FilterBenchmark {
        mae,
        mae_star: if mean == 0.0 { f64::NAN } else { mae / mean.abs() },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    /// Intercept first.
    pub gammas: Vec<f64>,
    pub se: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    /// Share of the response variance attributed to each regressor
    /// (`gamma_j cov(z_j, y) / var(y)`), followed by the error share.
    pub var_shares: Vec<f64>,
}

/// Regresses `y` on an intercept and the given columns.
pub fn linear_regression(y: &[f64], columns: &[(&str, &[f64])]) -> Result<RegressionResult> {
    let n = y.len();
    if n < 100 {
        return Err(Error::Degenerate(format!("{n} observations; need at least 100")));
    }
    if columns.iter().any(|(_, c)| c.len() != n) {
        return Err(Error::InvalidArgument("regressor lengths differ from the response".into()));
    }
    let k = columns.len() + 1;
    // collinearity guard on the standardised regressors
    let std_cols: Vec<Vec<f64>> = columns
        .iter()
        .map(|(name, c)| {
            let m = c.iter().sum::<f64>() / n as f64;
            let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            if !(s > 0.0) {
                return Err(Error::Singular(format!("regressor `{name}` is constant")));
            }
            Ok(c.iter().map(|v| (v - m) / s).collect())
        })
        .collect::<Result<_>>()?;
    if columns.len() > 1 {
        let z = nalgebra::DMatrix::from_fn(n, columns.len(), |i, j| std_cols[j][i]);
        let sv = z.singular_values();
        let cond = sv.max() / sv.min();
        if !(cond < 1e8) {
            return Err(Error::Singular(format!("regressors are collinear (condition number {cond:.3e})")));
        }
    }
    let mut x = Vec::with_capacity(n * k);
    for i in 0..n {
        x.push(1.0);
        for (_, c) in columns {
            x.push(c[i]);
        }
    }
    let fit = ols(y, &x, k)?;
    let ym = y.iter().sum::<f64>() / n as f64;
    let vy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let mut shares: Vec<f64> = columns
        .iter()
        .enumerate()
        .map(|(j, (_, c))| {
            let cm = c.iter().sum::<f64>() / n as f64;
            let cov: f64 = c.iter().zip(y).map(|(a, b)| (a - cm) * (b - ym)).sum();
            fit.coef[j + 1] * cov / vy
        })
        .collect();
    let rss: f64 = fit.residuals.iter().map(|e| e * e).sum();
    shares.push(rss / vy);
    let mut names = vec!["intercept".to_string()];
    names.extend(columns.iter().map(|(n, _)| n.to_string()));
    Ok(RegressionResult {
        names,
        gammas: fit.coef.clone(),
        se: fit.se.clone(),
        p_values: fit.p_value.clone(),
        r2: fit.r2.clamp(0.0, 1.0),
        var_shares: shares,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StateRegressions {
    /// `LRCIRF = g0 + g1 b0 + g2 |state|`.
    pub lrcirf_on_impact_and_state: RegressionResult,
    /// `b0 = g0 + g3 |state|`.
    pub impact_on_state: RegressionResult,
    /// `LRCIRF = g0 + g2 |state|`, the form used for static models.
    pub lrcirf_on_state: RegressionResult,
}

/// The regressions of the long-run response on impact and market state.
/// The two regressions involving `b0` need it to vary; for a static model
/// pass `None` and only the state-only regression is fitted.
pub fn state_regressions(lrcirf: &[f64], b0: Option<&[f64]>, state: &[f64]) -> Result<(Option<StateRegressions>, RegressionResult)> {
    let abs_state: Vec<f64> = state.iter().map(|v| v.abs()).collect();
    let static_form = linear_regression(lrcirf, &[("abs_state", &abs_state)])?;
    let full = match b0 {
        None => None,
        Some(b) => Some(StateRegressions {
            lrcirf_on_impact_and_state: linear_regression(lrcirf, &[("b0", b), ("abs_state", &abs_state)])?,
            impact_on_state: linear_regression(b, &[("abs_state", &abs_state)])?,
            lrcirf_on_state: static_form.clone(),
        }),
    };
    Ok((full, static_form))
}

/// Residual diagnostics of one fitted model on one sample.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub jb_return_p: f64,
    pub jb_trade_p: f64,
    pub lm: LmSuite,
    /// LM suite on return residuals summed over 100-trade blocks.
    pub lm_trade_blocks: Option<LmSuite>,
    /// LM suite on return residuals summed over one-minute bins.
    pub lm_time_bins: Option<LmSuite>,
    pub lm_pass_count: usize,
    pub lm_lags: Vec<usize>,
    pub quantile_seed: u64,
}

/// Standardised return residuals `(r - mu1) / sigma` of a filter run.
pub fn return_residuals(series: &TickSeries, params: &StaticParams, f: &FilterState) -> Vec<f64> {
    let sigma = params.sigma2.sqrt();
    let (r, x) = (series.returns(), series.signs());
    (0..f.b0_path.len())
        .map(|i| {
            let t = f.start + i;
            (r[t] - (f.state[i] + f.b0_path[i] * x[t])) / sigma
        })
        .collect()
}

/// Trade-equation residuals: randomized quantile residuals for the
/// logistic variants, standardised working residuals for the linear ones.
pub fn trade_residuals(series: &TickSeries, params: &StaticParams, f: &FilterState, seed: Option<u64>) -> Result<Vec<f64>> {
    let x = &series.signs()[f.start..f.start + f.pi.len()];
    if params.variant.is_linear() {
        let s = params.sigma2_x.sqrt();
        // the filter stores logistic(mu2); undo it to get the linear mean
        return Ok(x.iter().zip(&f.pi).map(|(x, p)| (x - (p / (1.0 - p)).ln()) / s).collect());
    }
    quantile_residuals(x, &f.pi, seed)
}

pub fn diagnose(series: &TickSeries, params: &StaticParams, f: &FilterState, seed: u64) -> Result<DiagnosticsReport> {
    let er = return_residuals(series, params, f);
    let et = trade_residuals(series, params, f, Some(seed))?;
    let lm = arch_lm_suite(&er)?;
    let blocks = aggregate_trades(&er, 100);
    let lm_trade_blocks = (blocks.len() > 60).then(|| arch_lm_suite(&blocks)).transpose()?;
    let lm_time_bins = if series.has_timestamps() {
        let ts: Vec<f64> = series.timestamps()[f.start..f.start + er.len()]
            .iter()
            .map(|t| t.expect("checked"))
            .collect();
        let bins = aggregate_time(&er, &ts, 60.0);
        (bins.len() > 60).then(|| arch_lm_suite(&bins)).transpose()?
    } else {
        None
    };
    Ok(DiagnosticsReport {
        jb_return_p: jarque_bera(&er)?.p_value,
        jb_trade_p: jarque_bera(&et)?.p_value,
        lm_pass_count: lm.pass_count,
        lm_lags: lm.lags.clone(),
        lm,
        lm_trade_blocks,
        lm_time_bins,
        quantile_seed: seed,
    })
}
