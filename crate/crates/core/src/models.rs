//! Conditional densities, the log-likelihood and the score recursion for
//! the impact coefficient.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lags::Design;
use crate::params::{softplus, StaticParams, Variant};
use crate::series::TickSeries;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Probabilities are clamped to `[PI_FLOOR, 1 - PI_FLOOR]` inside the log.
pub const PI_FLOOR: f64 = 1e-12;
/// Largest tolerated share of clamped observations.
pub const MAX_CLAMPED_SHARE: f64 = 1e-3;

/// Score of the return density with respect to the impact coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreStep {
    pub score: f64,
    pub scaled_score: f64,
    pub fisher_inv: f64,
}

impl ScoreStep {
    pub fn new(x_t: f64, r_t: f64, mu1_t: f64, sigma2: f64) -> Self {
        let score = x_t * (r_t - mu1_t) / sigma2;
        Self {
            score,
            scaled_score: sigma2 * score,
            fisher_inv: sigma2,
        }
    }
}

/// Next value of the impact coefficient after observing `(x_t, r_t)`.
pub fn score_update(b0_t: f64, x_t: f64, r_t: f64, mu1_t: f64, params: &StaticParams) -> Result<f64> {
    let s = x_t * (r_t - mu1_t);
    match params.variant {
        Variant::SdamhAr => Ok(params.omega + params.beta * b0_t + params.alpha * s),
        Variant::SdamhInt => Ok(b0_t + params.alpha * s),
        variant => Err(Error::UnsupportedVariant {
            op: "score_update",
            variant,
        }),
    }
}

#[inline]
fn step(params: &StaticParams, b0_t: f64, s: f64) -> f64 {
    params.omega + params.beta * b0_t + params.alpha * s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLikResult {
    pub total: f64,
    pub per_obs: Vec<f64>,
    pub n_obs: usize,
    /// Observations whose trade probability was clamped.
    pub clamped: usize,
    /// True for H/AH, whose trade equation is scored under a Gaussian
    /// working density rather than a proper probability model.
    pub working: bool,
}

/// Log-density of `(r_t, x_t)` given the conditional means. Returns the
/// contribution and whether the probability had to be clamped.
#[inline]
pub fn obs_loglik(params: &StaticParams, resid: f64, x_t: f64, mu2_t: f64) -> (f64, bool) {
    let gauss_r = -HALF_LN_2PI - 0.5 * params.sigma2.ln() - resid * resid / (2.0 * params.sigma2);
    if params.variant.is_linear() {
        let e = x_t - mu2_t;
        let s2 = params.sigma2_x;
        return (gauss_r - HALF_LN_2PI - 0.5 * s2.ln() - e * e / (2.0 * s2), false);
    }
    // log pi = -softplus(-z), log(1 - pi) = -softplus(z)
    let z = if x_t > 0.0 { mu2_t } else { -mu2_t };
    let mut lp = -softplus(-z);
    let ln_floor = PI_FLOOR.ln();
    let ln_ceil = (-PI_FLOOR).ln_1p();
    let clamped = !(lp > ln_floor && lp < ln_ceil);
    if clamped {
        lp = lp.clamp(ln_floor, ln_ceil);
    }
    (gauss_r + lp, clamped)
}

fn finish(per_obs: Vec<f64>, clamped: usize, first_clamp: Option<usize>, variant: Variant, start: usize) -> Result<LogLikResult> {
    let n_obs = per_obs.len();
    if clamped as f64 > MAX_CLAMPED_SHARE * n_obs as f64 {
        return Err(Error::ProbabilitySaturated {
            t: start + first_clamp.unwrap_or(0),
            count: clamped,
            n_obs,
        });
    }
    let total = per_obs.iter().sum();
    Ok(LogLikResult {
        total,
        per_obs,
        n_obs,
        clamped,
        working: variant.is_linear(),
    })
}

/// Log-likelihood over the effective sample given an impact path with one
/// value per effective observation.
pub fn loglik(series: &TickSeries, params: &StaticParams, b0_path: &[f64]) -> Result<LogLikResult> {
    params.validate()?;
    let design = Design::new(series, params.lags)?;
    loglik_design(&design, params, b0_path)
}

pub fn loglik_design(design: &Design, params: &StaticParams, b0_path: &[f64]) -> Result<LogLikResult> {
    let n = design.n();
    if b0_path.len() != n {
        return Err(Error::InvalidArgument(format!(
            "impact path has {} values for {n} effective observations",
            b0_path.len()
        )));
    }
    let mut per_obs = Vec::with_capacity(n);
    let (mut clamped, mut first) = (0usize, None);
    for i in 0..n {
        let (rr, xr) = (design.r_row(i), design.x_row(i));
        let x = design.x[i];
        let mu1 = params.state(rr, xr) + b0_path[i] * x;
        let (l, c) = obs_loglik(params, design.r[i] - mu1, x, params.trade_mean(rr, xr));
        if c {
            clamped += 1;
            first.get_or_insert(i);
        }
        per_obs.push(l);
    }
    finish(per_obs, clamped, first, params.variant, design.start)
}

/// Output of running a variant's impact recursion through a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutput {
    /// Impact coefficient used at each effective observation.
    pub b0: Vec<f64>,
    /// One-step-ahead value after the last observation.
    pub b0_next: f64,
    /// Scaled scores `x_t (r_t - mu1_t)`.
    pub scaled_score: Vec<f64>,
    /// Return mean net of the impact term.
    pub state: Vec<f64>,
    pub pi: Vec<f64>,
    pub loglik: LogLikResult,
}

/// Everything one observation contributes given the regressors and the
/// current impact value. Batch and online filters both go through here so
/// that they agree bitwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEval {
    pub loglik: f64,
    pub clamped: bool,
    pub state: f64,
    pub mu2: f64,
    pub scaled_score: f64,
    /// Impact coefficient for the next observation.
    pub b0_next: f64,
}

#[inline]
pub fn eval_step(params: &StaticParams, r_regs: &[f64], x_regs: &[f64], r_t: f64, x_t: f64, b0_t: f64) -> StepEval {
    let state = params.state(r_regs, x_regs);
    let mu2 = params.trade_mean(r_regs, x_regs);
    let resid = r_t - (state + b0_t * x_t);
    let (loglik, clamped) = obs_loglik(params, resid, x_t, mu2);
    let s = x_t * resid;
    let b0_next = if params.variant.is_score_driven() {
        step(params, b0_t, s)
    } else {
        b0_t
    };
    StepEval {
        loglik,
        clamped,
        state,
        mu2,
        scaled_score: s,
        b0_next,
    }
}

/// Runs the impact recursion from `b0_init` and scores each observation.
/// Static variants keep `b0_init` fixed.
pub fn run_filter(design: &Design, params: &StaticParams, b0_init: f64) -> Result<FilterOutput> {
    let n = design.n();
    let mut b0 = Vec::with_capacity(n);
    let mut scaled = Vec::with_capacity(n);
    let mut state = Vec::with_capacity(n);
    let mut pi = Vec::with_capacity(n);
    let mut per_obs = Vec::with_capacity(n);
    let (mut clamped, mut first) = (0usize, None);
    let mut b = b0_init;
    for i in 0..n {
        let e = eval_step(params, design.r_row(i), design.x_row(i), design.r[i], design.x[i], b);
        if e.clamped {
            clamped += 1;
            first.get_or_insert(i);
        }
        b0.push(b);
        scaled.push(e.scaled_score);
        state.push(e.state);
        pi.push(crate::params::logistic(e.mu2));
        per_obs.push(e.loglik);
        b = e.b0_next;
    }
    let loglik = finish(per_obs, clamped, first, params.variant, design.start)?;
    Ok(FilterOutput {
        b0,
        b0_next: b,
        scaled_score: scaled,
        state,
        pi,
        loglik,
    })
}

/// Total log-likelihood only, without allocating per-observation output.
/// Returns `None` when the probability saturates too often or the result is
/// not finite; optimizers treat that as an infeasible point.
pub fn loglik_total(design: &Design, params: &StaticParams, b0_init: f64) -> Option<f64> {
    let n = design.n();
    let mut b = b0_init;
    let mut total = 0.0;
    let mut clamped = 0usize;
    for i in 0..n {
        let e = eval_step(params, design.r_row(i), design.x_row(i), design.r[i], design.x[i], b);
        clamped += e.clamped as usize;
        total += e.loglik;
        b = e.b0_next;
    }
    if clamped as f64 > MAX_CLAMPED_SHARE * n as f64 || !total.is_finite() {
        None
    } else {
        Some(total)
    }
}
