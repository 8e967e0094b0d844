//! Estimation: random-restart initialization, likelihood maximisation,
//! forward-backward initialization of the impact recursion, filtering and
//! simulation-based confidence bands for the filtered impact.

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lags::{Design, LagSpec};
use crate::models::{eval_step, loglik_total, run_filter, LogLikResult, MAX_CLAMPED_SHARE};
use crate::ols::{logit_irls, ols, OlsFit};
use crate::optim::{curvature_scales, hessian_steps, minimize, spd_inverse, BfgsOptions, FdStep};
use crate::params::{logistic, StaticParams, Variant};
use crate::series::TickSeries;

/// Upper bound of the impact gain `alpha`, which is optimised through a
/// scaled logit. Gains above 2 make the integrated recursion explosive.
pub const ALPHA_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
enum Transform {
    Identity,
    Log,
    /// `ALPHA_MAX * logistic(u)`.
    ScaledLogit,
}

impl Transform {
    fn to_natural(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::ScaledLogit => ALPHA_MAX * logistic(u),
        }
    }

    fn to_free(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::ScaledLogit => {
                let p = (v / ALPHA_MAX).clamp(1e-12, 1.0 - 1e-12);
                (p / (1.0 - p)).ln()
            }
        }
    }

    /// d natural / d free.
    fn jacobian(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => u.exp(),
            Transform::ScaledLogit => {
                let p = logistic(u);
                ALPHA_MAX * p * (1.0 - p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Mu1,
    Mu2,
    A(usize),
    B0,
    B(usize),
    C(usize),
    D(usize),
    Sigma2,
    Omega,
    Beta,
    Alpha,
}

/// Free parameters of a variant, their names and transforms.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    slots: Vec<(Slot, Transform)>,
    names: Vec<String>,
}

impl ParamLayout {
    pub fn new(template: &StaticParams) -> Self {
        let k = template.k();
        let mut slots = vec![(Slot::Mu1, Transform::Identity), (Slot::Mu2, Transform::Identity)];
        slots.extend((0..k).map(|j| (Slot::A(j), Transform::Identity)));
        slots.push((Slot::B0, Transform::Identity));
        slots.extend((0..k).map(|j| (Slot::B(j), Transform::Identity)));
        slots.extend((0..k).map(|j| (Slot::C(j), Transform::Identity)));
        slots.extend((0..k).map(|j| (Slot::D(j), Transform::Identity)));
        slots.push((Slot::Sigma2, Transform::Log));
        if template.variant == Variant::SdamhAr {
            slots.push((Slot::Omega, Transform::Identity));
            slots.push((Slot::Beta, Transform::Identity));
        }
        if template.variant.is_score_driven() {
            slots.push((Slot::Alpha, Transform::ScaledLogit));
        }
        let (na, nb, nc, nd) = (
            template.lag_names('a'),
            template.lag_names('b'),
            template.lag_names('c'),
            template.lag_names('d'),
        );
        let names = slots
            .iter()
            .map(|(s, _)| match *s {
                Slot::Mu1 => "mu1".to_string(),
                Slot::Mu2 => "mu2".to_string(),
                Slot::A(j) => na[j].clone(),
                Slot::B0 => "b0".to_string(),
                Slot::B(j) => nb[j].clone(),
                Slot::C(j) => nc[j].clone(),
                Slot::D(j) => nd[j].clone(),
                Slot::Sigma2 => "sigma2".to_string(),
                Slot::Omega => "omega".to_string(),
                Slot::Beta => "beta".to_string(),
                Slot::Alpha => "alpha".to_string(),
            })
            .collect();
        Self { slots, names }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn get(p: &StaticParams, s: Slot) -> f64 {
        match s {
            Slot::Mu1 => p.mu1,
            Slot::Mu2 => p.mu2,
            Slot::A(j) => p.a[j],
            Slot::B0 => p.b0,
            Slot::B(j) => p.b[j],
            Slot::C(j) => p.c[j],
            Slot::D(j) => p.d[j],
            Slot::Sigma2 => p.sigma2,
            Slot::Omega => p.omega,
            Slot::Beta => p.beta,
            Slot::Alpha => p.alpha,
        }
    }

    fn put(p: &mut StaticParams, s: Slot, v: f64) {
        match s {
            Slot::Mu1 => p.mu1 = v,
            Slot::Mu2 => p.mu2 = v,
            Slot::A(j) => p.a[j] = v,
            Slot::B0 => p.b0 = v,
            Slot::B(j) => p.b[j] = v,
            Slot::C(j) => p.c[j] = v,
            Slot::D(j) => p.d[j] = v,
            Slot::Sigma2 => p.sigma2 = v,
            Slot::Omega => p.omega = v,
            Slot::Beta => p.beta = v,
            Slot::Alpha => p.alpha = v,
        }
    }

    /// Natural-unit values in layout order.
    pub fn natural(&self, p: &StaticParams) -> Vec<f64> {
        self.slots.iter().map(|&(s, _)| Self::get(p, s)).collect()
    }

    /// Optimiser coordinates.
    pub fn pack(&self, p: &StaticParams) -> Vec<f64> {
        self.slots.iter().map(|&(s, t)| t.to_free(Self::get(p, s))).collect()
    }

    pub fn unpack_into(&self, u: &[f64], p: &mut StaticParams) {
        for (&(s, t), &v) in self.slots.iter().zip(u) {
            Self::put(p, s, t.to_natural(v));
        }
    }

    pub fn unpack(&self, template: &StaticParams, u: &[f64]) -> StaticParams {
        let mut p = template.clone();
        self.unpack_into(u, &mut p);
        p
    }

    pub fn set_natural(&self, p: &mut StaticParams, v: &[f64]) {
        for (&(s, _), &x) in self.slots.iter().zip(v) {
            Self::put(p, s, x);
        }
    }

    fn jacobian(&self, u: &[f64]) -> Vec<f64> {
        self.slots.iter().zip(u).map(|(&(_, t), &v)| t.jacobian(v)).collect()
    }
}

/// Uniform ranges for the random initialization search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitSearchSpec {
    pub n_draws: usize,
    pub seed: u64,
    pub mu: (f64, f64),
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub c: (f64, f64),
    pub d: (f64, f64),
    /// Range of the return standard deviation (not the variance).
    pub sigma: (f64, f64),
    pub alpha: (f64, f64),
    /// Range of the (initial) impact coefficient.
    pub b0: (f64, f64),
    pub omega: (f64, f64),
    pub beta: (f64, f64),
}

impl Default for InitSearchSpec {
    fn default() -> Self {
        Self {
            n_draws: 100_000,
            seed: 0,
            mu: (-2.0, 2.0),
            a: (-1.0, 0.0),
            b: (0.0, 1.0),
            c: (-4.0, 0.0),
            d: (0.0, 1.0),
            sigma: (0.0, 1.0),
            alpha: (0.0, 1.0),
            b0: (0.0, 1.0),
            omega: (0.0, 0.1),
            beta: (0.0, 1.0),
        }
    }
}

impl InitSearchSpec {
    pub fn with_draws(n_draws: usize) -> Self {
        Self {
            n_draws,
            ..Self::default()
        }
    }

    fn named_ranges(&self) -> [(&'static str, (f64, f64)); 10] {
        [
            ("mu", self.mu),
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("sigma", self.sigma),
            ("alpha", self.alpha),
            ("b0", self.b0),
            ("omega", self.omega),
            ("beta", self.beta),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in self.named_ranges() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("init range `{name}` must satisfy lo < hi")));
            }
        }
        if self.sigma.1 <= 0.0 {
            return Err(Error::InvalidArgument("sigma range must include positive values".into()));
        }
        Ok(())
    }

    fn range_for(&self, name: &str) -> (f64, f64) {
        match name {
            "mu1" | "mu2" => self.mu,
            "b0" => self.b0,
            "sigma2" => (self.sigma.0.max(0.0).powi(2), self.sigma.1.powi(2)),
            "alpha" => self.alpha,
            "omega" => self.omega,
            "beta" => self.beta,
            n => match n.as_bytes()[0] {
                b'a' => self.a,
                b'b' => self.b,
                b'c' => self.c,
                _ => self.d,
            },
        }
    }

    /// Free parameters of `params` lying outside the search ranges.
    pub fn offenders(&self, params: &StaticParams) -> Vec<String> {
        let layout = ParamLayout::new(params);
        layout
            .names()
            .iter()
            .zip(layout.natural(params))
            .filter(|(n, v)| {
                let (lo, hi) = self.range_for(n);
                !(*v > lo && *v < hi)
            })
            .map(|(n, v)| format!("{n}={v}"))
            .collect()
    }

    /// Errors (and warns) when a parameter vector is not covered by the
    /// ranges.
    pub fn check_covers(&self, params: &StaticParams) -> Result<()> {
        let off = self.offenders(params);
        if off.is_empty() {
            return Ok(());
        }
        warn!("initialization ranges do not cover: {}", off.join(", "));
        Err(Error::InvalidArgument(format!(
            "initialization ranges do not cover {}",
            off.join(", ")
        )))
    }

    fn draw(&self, layout: &ParamLayout, rng: &mut ChaCha8Rng) -> Vec<f64> {
        layout
            .names()
            .iter()
            .map(|n| {
                let (lo, hi) = if n == "sigma2" { self.sigma } else { self.range_for(n) };
                let v = Uniform::new(lo, hi).expect("validated range").sample(rng);
                if n == "sigma2" {
                    v * v
                } else {
                    v
                }
            })
            .collect()
    }
}

fn check_nonlinear(variant: Variant, op: &'static str) -> Result<()> {
    if variant.is_linear() {
        Err(Error::UnsupportedVariant { op, variant })
    } else {
        Ok(())
    }
}

/// Candidate with the highest likelihood among `spec.n_draws` uniform
/// draws, each scored with its impact held constant at the drawn `b0`.
pub fn init_search(series: &TickSeries, spec: &InitSearchSpec, variant: Variant) -> Result<StaticParams> {
    check_nonlinear(variant, "init_search")?;
    let template = StaticParams::zeros(variant);
    let design = Design::new(series, template.lags)?;
    init_search_design(&design, spec, &template).map(|(p, _)| p)
}

fn init_search_design(design: &Design, spec: &InitSearchSpec, template: &StaticParams) -> Result<(StaticParams, f64)> {
    spec.validate()?;
    if spec.n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be positive".into()));
    }
    let layout = ParamLayout::new(template);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draws: Vec<Vec<f64>> = (0..spec.n_draws).map(|_| spec.draw(&layout, &mut rng)).collect();
    let scores: Vec<f64> = draws
        .par_iter()
        .map(|v| {
            let mut p = template.clone();
            layout.set_natural(&mut p, v);
            // constant impact path at the drawn value
            p.variant = if p.variant.is_aggregated() { Variant::AMH } else { Variant::MH };
            loglik_total(design, &p, p.b0).unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, &s)| match acc {
            Some((_, b)) if b >= s => acc,
            _ => Some((i, s)),
        })
        .ok_or(Error::AllCandidatesInvalid)?;
    let mut p = template.clone();
    layout.set_natural(&mut p, &draws[best.0]);
    Ok((p, best.1))
}

/// Starting values from per-equation regressions: OLS for the return
/// equation (including the contemporaneous sign) and a logit for the
/// trade equation.
pub fn regression_start(design: &Design, variant: Variant) -> Result<StaticParams> {
    let mut p = StaticParams::zeros(variant);
    p.lags = design.lags;
    let k = design.k;
    let n = design.n();
    let kr = 2 + 2 * k;
    let mut xr = Vec::with_capacity(n * kr);
    let kt = 1 + 2 * k;
    let mut xt = Vec::with_capacity(n * kt);
    for i in 0..n {
        xr.push(1.0);
        xr.push(design.x[i]);
        xr.extend_from_slice(design.r_row(i));
        xr.extend_from_slice(design.x_row(i));
        xt.push(1.0);
        xt.extend_from_slice(design.r_row(i));
        xt.extend_from_slice(design.x_row(i));
    }
    let fr = ols(&design.r, &xr, kr)?;
    p.mu1 = fr.coef[0];
    p.b0 = fr.coef[1];
    p.a = fr.coef[2..2 + k].to_vec();
    p.b = fr.coef[2 + k..].to_vec();
    p.sigma2 = fr.sigma2;
    let gt = if variant.is_linear() {
        let ft = ols(&design.x, &xt, kt)?;
        p.sigma2_x = ft.sigma2;
        ft.coef
    } else {
        logit_irls(&design.x, &xt, kt, 50)?
    };
    p.mu2 = gt[0];
    p.c = gt[1..1 + k].to_vec();
    p.d = gt[1 + k..].to_vec();
    Ok(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

/// Outcome of a fit, serialisable as a JSON document.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub variant: Variant,
    /// `"mle"` or `"ols"`.
    pub method: String,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub message: String,
    pub loglik: f64,
    /// Log-likelihood of the starting point handed to the optimiser.
    pub start_loglik: f64,
    /// Best log-likelihood of the random search (constant-impact scoring).
    pub search_loglik: Option<f64>,
    /// True when the likelihood is a Gaussian working density (H, AH).
    pub working_likelihood: bool,
    pub n_obs: usize,
    pub n_params: usize,
    pub estimates: Vec<ParamEstimate>,
    /// Covariance of the natural-unit estimates (layout order).
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Covariance in optimiser coordinates, used for confidence bands.
    pub covariance_free: Option<Vec<Vec<f64>>>,
    /// Optimiser coordinates of the estimate.
    pub free_estimate: Vec<f64>,
    pub params: StaticParams,
}

impl FitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|e| e.name == name).map(|e| e.std_error)
    }
}

/// Filtered impact path and per-observation output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterState {
    pub b0_path: Vec<f64>,
    /// Scaled scores `x_t (r_t - mu1_t)`.
    pub scores: Vec<f64>,
    /// Market state: return mean net of the impact term.
    pub state: Vec<f64>,
    pub pi: Vec<f64>,
    pub loglik: LogLikResult,
    pub b0_init: f64,
    /// Prediction of the impact for the trade after the sample.
    pub b0_next: f64,
    /// Position of the first effective observation in the series.
    pub start: usize,
}

impl FilterState {
    /// Impact coefficient in force at series position `t`; the position
    /// just past the sample gets the one-step prediction.
    pub fn b0_at(&self, t: usize) -> Option<f64> {
        let i = t.checked_sub(self.start)?;
        match i.cmp(&self.b0_path.len()) {
            std::cmp::Ordering::Less => Some(self.b0_path[i]),
            std::cmp::Ordering::Equal => Some(self.b0_next),
            std::cmp::Ordering::Greater => None,
        }
    }

    /// Market state at series position `t`.
    pub fn state_at(&self, t: usize) -> Option<f64> {
        self.state.get(t.checked_sub(self.start)?).copied()
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub init: InitSearchSpec,
    /// Add the regression-based candidate to the starting points.
    pub regression_start: bool,
    /// Explicit starting point; skips the search when given.
    pub start: Option<StaticParams>,
    pub bfgs: BfgsOptions,
    pub standard_errors: bool,
    /// Lag structure; the variant's default when `None` (an explicit start
    /// carries its own).
    pub lags: Option<LagSpec>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: InitSearchSpec::default(),
            regression_start: true,
            start: None,
            bfgs: BfgsOptions {
                step: FdStep::Absolute(1e-4),
                ..BfgsOptions::default()
            },
            standard_errors: true,
            lags: None,
        }
    }
}

pub fn fit(series: &TickSeries, variant: Variant, spec: &InitSearchSpec) -> Result<(StaticParams, FilterState, FitReport)> {
    fit_with(
        series,
        variant,
        &FitOptions {
            init: spec.clone(),
            ..FitOptions::default()
        },
    )
}

pub fn fit_with(series: &TickSeries, variant: Variant, opts: &FitOptions) -> Result<(StaticParams, FilterState, FitReport)> {
    let lags = match (&opts.start, opts.lags) {
        (Some(p), _) => p.lags,
        (None, Some(l)) => l,
        (None, None) => variant.default_lags(),
    };
    lags.validate()?;
    if lags.k() != variant.default_lags().k() || matches!(lags, LagSpec::Raw { .. }) == variant.is_aggregated() {
        return Err(Error::InvalidArgument(format!("lag structure {lags:?} does not fit variant {variant}")));
    }
    if series.len() < 2 * lags.warmup() {
        return Err(Error::InsufficientHistory {
            t: series.len(),
            required: 2 * lags.warmup(),
        });
    }
    let design = Design::new(series, lags)?;
    if variant.is_linear() {
        return fit_ols(&design, variant);
    }
    let mut template = StaticParams::zeros(variant);
    template.lags = lags;
    let layout = ParamLayout::new(&template);

    // candidate starting points
    let mut candidates: Vec<StaticParams> = Vec::new();
    let mut search_loglik = None;
    if let Some(s) = &opts.start {
        let mut s = s.with_variant(variant)?;
        if variant.is_score_driven() && s.alpha == 0.0 {
            s.alpha = 0.01;
        }
        candidates.push(s);
    } else {
        if opts.init.n_draws > 0 {
            let (p, l) = init_search_design(&design, &opts.init, &template)?;
            search_loglik = Some(l);
            candidates.push(p);
        }
        if opts.regression_start {
            match regression_start(&design, variant) {
                Ok(base) => candidates.extend(dynamic_grid(&base)),
                Err(e) => debug!("regression start unavailable: {e}"),
            }
        }
    }
    let scored: Vec<(f64, StaticParams)> = candidates
        .into_iter()
        .filter(|p| p.validate().is_ok())
        .map(|p| (loglik_total(&design, &p, p.b0).unwrap_or(f64::NEG_INFINITY), p))
        .collect();
    let (start_ll, start) = scored
        .into_iter()
        .filter(|(l, _)| l.is_finite())
        .fold(None::<(f64, StaticParams)>, |acc, c| match acc {
            Some(a) if a.0 >= c.0 => Some(a),
            _ => Some(c),
        })
        .ok_or(Error::NonFiniteStart)?;

    let objective = |u: &[f64]| -> f64 {
        let p = layout.unpack(&template, u);
        match loglik_total(&design, &p, p.b0) {
            Some(l) => -l,
            None => f64::INFINITY,
        }
    };
    let u0 = layout.pack(&start);
    // optimise in coordinates of roughly unit curvature: the raw parameters
    // span many orders of magnitude in information
    let scales = curvature_scales(&objective, &u0);
    let scaled = |v: &[f64]| -> f64 {
        let u: Vec<f64> = v.iter().zip(&scales).map(|(a, s)| a * s).collect();
        objective(&u)
    };
    let v0: Vec<f64> = u0.iter().zip(&scales).map(|(a, s)| a / s).collect();
    let mut res = minimize(&scaled, &v0, &opts.bfgs);
    for (x, s) in res.x.iter_mut().zip(&scales) {
        *x *= s;
    }
    if !res.f.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    if !res.converged {
        warn!("{variant} fit did not converge: {}", res.message);
    }
    let params = layout.unpack(&template, &res.x);
    let (covariance, covariance_free, se) = if opts.standard_errors {
        covariance_from_hessian(&objective, &layout, &res.x)
    } else {
        (None, None, vec![f64::NAN; layout.len()])
    };
    let out = run_filter(&design, &params, params.b0)?;
    let state = FilterState {
        b0_path: out.b0,
        scores: out.scaled_score,
        state: out.state,
        pi: out.pi,
        loglik: out.loglik,
        b0_init: params.b0,
        b0_next: out.b0_next,
        start: design.start,
    };
    let estimates = layout
        .names()
        .iter()
        .zip(layout.natural(&params))
        .zip(se)
        .map(|((n, v), s)| ParamEstimate {
            name: n.clone(),
            value: v,
            std_error: s,
        })
        .collect();
    let report = FitReport {
        variant,
        method: "mle".into(),
        converged: res.converged,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        message: res.message,
        loglik: -res.f,
        start_loglik: start_ll,
        search_loglik,
        working_likelihood: false,
        n_obs: design.n(),
        n_params: layout.len(),
        estimates,
        covariance,
        covariance_free,
        free_estimate: res.x,
        params: params.clone(),
    };
    Ok((params, state, report))
}

/// Variants of a static starting point for the score dynamics.
fn dynamic_grid(base: &StaticParams) -> Vec<StaticParams> {
    match base.variant {
        Variant::SdamhInt => [1e-3, 1e-2, 0.1, 0.5, 1.0]
            .iter()
            .map(|&a| StaticParams { alpha: a, ..base.clone() })
            .collect(),
        Variant::SdamhAr => {
            let mut out = Vec::new();
            for &beta in &[0.5, 0.9, 0.99] {
                for &a in &[1e-2, 0.1, 0.5] {
                    out.push(StaticParams {
                        alpha: a,
                        beta,
                        omega: (1.0 - beta) * base.b0,
                        ..base.clone()
                    });
                }
            }
            out
        }
        _ => vec![base.clone()],
    }
}

type Covariances = (Option<Vec<Vec<f64>>>, Option<Vec<Vec<f64>>>, Vec<f64>);

fn covariance_from_hessian<F: Fn(&[f64]) -> f64>(f: &F, layout: &ParamLayout, u: &[f64]) -> Covariances {
    let n = u.len();
    let steps: Vec<f64> = curvature_scales(f, u).iter().map(|s| 1e-2 * s).collect();
    let h = hessian_steps(f, u, &steps);
    let Some(cov_u) = spd_inverse(&h) else {
        warn!("numerical Hessian is not positive definite; standard errors unavailable");
        return (None, None, vec![f64::NAN; n]);
    };
    let jac = layout.jacobian(u);
    let mut cov = cov_u.clone();
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] *= jac[i] * jac[j];
        }
    }
    let se = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
    (Some(rows(&cov)), Some(rows(&cov_u)), se)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn fit_ols(design: &Design, variant: Variant) -> Result<(StaticParams, FilterState, FitReport)> {
    let params = regression_start(design, variant)?;
    let k = design.k;
    let n = design.n();
    // standard errors of both equations, mapped to the parameter names
    let (fr, ft) = ols_equations(design)?;
    let mut estimates = vec![
        est("mu1", fr.coef[0], fr.se[0]),
        est("mu2", ft.coef[0], ft.se[0]),
    ];
    let names = |c| params.lag_names(c);
    for j in 0..k {
        estimates.push(est(&names('a')[j], fr.coef[2 + j], fr.se[2 + j]));
    }
    estimates.push(est("b0", fr.coef[1], fr.se[1]));
    for j in 0..k {
        estimates.push(est(&names('b')[j], fr.coef[2 + k + j], fr.se[2 + k + j]));
    }
    for j in 0..k {
        estimates.push(est(&names('c')[j], ft.coef[1 + j], ft.se[1 + j]));
    }
    for j in 0..k {
        estimates.push(est(&names('d')[j], ft.coef[1 + k + j], ft.se[1 + k + j]));
    }
    estimates.push(est("sigma2", fr.sigma2, f64::NAN));
    estimates.push(est("sigma2_x", ft.sigma2, f64::NAN));
    let out = run_filter(design, &params, params.b0)?;
    let n_params = estimates.len();
    let report = FitReport {
        variant,
        method: "ols".into(),
        converged: true,
        iterations: 0,
        grad_norm: 0.0,
        message: "per-equation OLS; likelihood is a Gaussian working density".into(),
        loglik: out.loglik.total,
        start_loglik: out.loglik.total,
        search_loglik: None,
        working_likelihood: true,
        n_obs: n,
        n_params,
        estimates,
        covariance: None,
        covariance_free: None,
        free_estimate: Vec::new(),
        params: params.clone(),
    };
    let state = FilterState {
        b0_path: out.b0,
        scores: out.scaled_score,
        state: out.state,
        pi: out.pi,
        loglik: out.loglik,
        b0_init: params.b0,
        b0_next: out.b0_next,
        start: design.start,
    };
    Ok((params, state, report))
}

fn est(name: &str, value: f64, std_error: f64) -> ParamEstimate {
    ParamEstimate {
        name: name.to_string(),
        value,
        std_error,
    }
}

/// Return and trade equations of the linear model by OLS, regressors
/// `[1, x_t, r lags, x lags]` and `[1, r lags, x lags]`.
pub fn ols_equations(design: &Design) -> Result<(OlsFit, OlsFit)> {
    let k = design.k;
    let n = design.n();
    let mut xr = Vec::with_capacity(n * (2 + 2 * k));
    let mut xt = Vec::with_capacity(n * (1 + 2 * k));
    for i in 0..n {
        xr.push(1.0);
        xr.push(design.x[i]);
        xr.extend_from_slice(design.r_row(i));
        xr.extend_from_slice(design.x_row(i));
        xt.push(1.0);
        xt.extend_from_slice(design.r_row(i));
        xt.extend_from_slice(design.x_row(i));
    }
    Ok((ols(&design.r, &xr, 2 + 2 * k)?, ols(&design.x, &xt, 1 + 2 * k)?))
}

/// Forward pass from `f0`, then a backward pass seeded with the forward
/// terminal value; returns the backward value at the first observation.
pub fn forward_backward_init(series: &TickSeries, params: &StaticParams, f0: f64) -> Result<f64> {
    let design = Design::new(series, params.lags)?;
    forward_backward_design(&design, params, f0)
}

pub fn forward_backward_design(design: &Design, params: &StaticParams, f0: f64) -> Result<f64> {
    if params.variant != Variant::SdamhInt {
        return Err(Error::UnsupportedVariant {
            op: "forward_backward_init",
            variant: params.variant,
        });
    }
    let n = design.n();
    let mut state = Vec::with_capacity(n);
    let mut f = f0;
    for i in 0..n {
        let st = params.state(design.r_row(i), design.x_row(i));
        state.push(st);
        let x = design.x[i];
        f += params.alpha * (x * (design.r[i] - (st + f * x)));
    }
    let mut b = f;
    for i in (0..n).rev() {
        let x = design.x[i];
        b += params.alpha * (x * (design.r[i] - (state[i] + b * x)));
    }
    Ok(b)
}

/// One sequential pass of the variant's impact recursion.
pub fn filter(series: &TickSeries, params: &StaticParams, b0_init: f64) -> Result<FilterState> {
    params.validate()?;
    let design = Design::new(series, params.lags)?;
    let out = run_filter(&design, params, b0_init)?;
    Ok(FilterState {
        b0_path: out.b0,
        scores: out.scaled_score,
        state: out.state,
        pi: out.pi,
        loglik: out.loglik,
        b0_init,
        b0_next: out.b0_next,
        start: design.start,
    })
}

/// Result of pushing one trade through an [`OnlineFilter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnlineStep {
    /// Impact coefficient used for this trade.
    pub b0: f64,
    pub scaled_score: f64,
    pub state: f64,
    pub pi: f64,
    pub loglik: f64,
    /// Impact coefficient for the next trade.
    pub b0_next: f64,
}

/// Trade-by-trade version of [`filter`].
#[derive(Debug, Clone)]
pub struct OnlineFilter {
    params: StaticParams,
    r: Vec<f64>,
    x: Vec<f64>,
    rr: Vec<f64>,
    xr: Vec<f64>,
    b: f64,
    b0_init: f64,
    start: usize,
    steps: Vec<OnlineStep>,
    clamped: usize,
}

impl OnlineFilter {
    /// `history` must cover the lag warm-up; the first pushed trade is the
    /// first effective observation.
    pub fn new(params: &StaticParams, history: &TickSeries, b0_init: f64) -> Result<Self> {
        params.validate()?;
        let warm = params.lags.warmup();
        if history.len() < warm {
            return Err(Error::InsufficientHistory {
                t: history.len(),
                required: warm,
            });
        }
        let k = params.k();
        Ok(Self {
            params: params.clone(),
            r: history.returns().to_vec(),
            x: history.signs().to_vec(),
            rr: vec![0.0; k],
            xr: vec![0.0; k],
            b: b0_init,
            b0_init,
            start: history.len(),
            steps: Vec::new(),
            clamped: 0,
        })
    }

    /// Current prediction of the impact for the next trade.
    pub fn b0(&self) -> f64 {
        self.b
    }

    pub fn push(&mut self, r_t: f64, x_t: f64) -> Result<OnlineStep> {
        if x_t != 1.0 && x_t != -1.0 {
            return Err(Error::InvalidEvent {
                position: self.r.len(),
                reason: format!("sign must be +1 or -1, got {x_t}"),
            });
        }
        let t = self.r.len();
        self.params.lags.fill(&self.r, &self.x, t, &mut self.rr, &mut self.xr);
        let e = eval_step(&self.params, &self.rr, &self.xr, r_t, x_t, self.b);
        self.clamped += e.clamped as usize;
        let step = OnlineStep {
            b0: self.b,
            scaled_score: e.scaled_score,
            state: e.state,
            pi: logistic(e.mu2),
            loglik: e.loglik,
            b0_next: e.b0_next,
        };
        self.b = e.b0_next;
        self.r.push(r_t);
        self.x.push(x_t);
        self.steps.push(step);
        Ok(step)
    }

    pub fn into_state(self) -> Result<FilterState> {
        let n = self.steps.len();
        if self.clamped as f64 > MAX_CLAMPED_SHARE * n as f64 {
            return Err(Error::ProbabilitySaturated {
                t: self.start,
                count: self.clamped,
                n_obs: n,
            });
        }
        let per_obs: Vec<f64> = self.steps.iter().map(|s| s.loglik).collect();
        Ok(FilterState {
            b0_path: self.steps.iter().map(|s| s.b0).collect(),
            scores: self.steps.iter().map(|s| s.scaled_score).collect(),
            state: self.steps.iter().map(|s| s.state).collect(),
            pi: self.steps.iter().map(|s| s.pi).collect(),
            loglik: LogLikResult {
                total: per_obs.iter().sum(),
                per_obs,
                n_obs: n,
                clamped: self.clamped,
                working: self.params.variant.is_linear(),
            },
            b0_init: self.b0_init,
            b0_next: self.b,
            start: self.start,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BandEstimate {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub n_sim: usize,
    /// True when the covariance was not positive definite and only its
    /// diagonal was used.
    pub diagonal_fallback: bool,
}

/// Pointwise bands for the filtered impact from `n_sim` parameter draws
/// out of the asymptotic distribution of the estimator. The drawn initial
/// impact starts each re-filtered path.
pub fn confidence_bands(
    series: &TickSeries,
    params: &StaticParams,
    report: &FitReport,
    n_sim: usize,
    level: f64,
    seed: u64,
) -> Result<BandEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("band level must be in (0,1), got {level}")));
    }
    if n_sim == 0 {
        return Err(Error::InvalidArgument("n_sim must be positive".into()));
    }
    let cov = report
        .covariance_free
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit report carries no covariance estimate".into()))?;
    let layout = ParamLayout::new(params);
    let n = layout.len();
    if cov.len() != n || report.free_estimate.len() != n {
        return Err(Error::InvalidArgument("covariance does not match the parameter layout".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    let (factor, diagonal_fallback) = match m.clone().cholesky() {
        Some(c) => (c.l(), false),
        None => {
            let all_zero = m.iter().all(|v| *v == 0.0);
            if !all_zero {
                warn!("parameter covariance is not positive definite; using its diagonal");
            }
            let d = DMatrix::from_diagonal(&m.diagonal().map(|v| v.max(0.0).sqrt()));
            (d, !all_zero)
        }
    };
    let design = Design::new(series, params.lags)?;
    let center = &report.free_estimate;
    let paths: Vec<Vec<f64>> = (0..n_sim)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let zv = nalgebra::DVector::from_vec(z);
            let shift = &factor * zv;
            let u: Vec<f64> = center.iter().zip(shift.iter()).map(|(c, d)| c + d).collect();
            let p = layout.unpack(params, &u);
            run_filter_path(&design, &p)
        })
        .collect();
    let t_len = design.n();
    let (qlo, qhi) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let mut lower = Vec::with_capacity(t_len);
    let mut upper = Vec::with_capacity(t_len);
    let mut col = Vec::with_capacity(n_sim);
    for t in 0..t_len {
        col.clear();
        col.extend(paths.iter().map(|p| p[t]));
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, qlo));
        upper.push(quantile_sorted(&col, qhi));
    }
    Ok(BandEstimate {
        lower,
        upper,
        level,
        n_sim,
        diagonal_fallback,
    })
}

/// Impact path only; saturation is irrelevant here.
fn run_filter_path(design: &Design, p: &StaticParams) -> Vec<f64> {
    let mut b = p.b0;
    let mut out = Vec::with_capacity(design.n());
    for i in 0..design.n() {
        out.push(b);
        b = eval_step(p, design.r_row(i), design.x_row(i), design.r[i], design.x[i], b).b0_next;
    }
    out
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// Lag structure used by a variant unless told otherwise.
pub fn default_lags(variant: Variant) -> LagSpec {
    variant.default_lags()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate, ScenarioPath, ShockStream, SimOptions};

    fn table_like(variant: Variant) -> StaticParams {
        let mut p = StaticParams::zeros(variant);
        p.mu1 = 1e-4;
        p.mu2 = 0.1;
        p.a = vec![-0.2, -0.05, -0.01];
        p.b0 = 5e-3;
        p.b = vec![1e-3, 2e-4, 1e-5];
        p.c = vec![-3.0, -1.7, -0.6];
        p.d = vec![0.7, 0.3, 0.1];
        p.sigma2 = 1e-5;
        if variant.is_score_driven() {
            p.alpha = 0.05;
        }
        p
    }

    fn sim(p: &StaticParams, n: usize, seed: u64) -> TickSeries {
        let scen = if p.variant.is_score_driven() {
            ScenarioPath::score_driven()
        } else {
            ScenarioPath::constant()
        };
        let opts = SimOptions {
            keep_warmup: true,
            ..Default::default()
        };
        simulate(p, &scen, n, &ShockStream::generate(seed, n), &opts).unwrap().series
    }

    #[test]
    fn layout_counts() {
        assert_eq!(ParamLayout::new(&StaticParams::zeros(Variant::AMH)).len(), 16);
        assert_eq!(ParamLayout::new(&StaticParams::zeros(Variant::SdamhInt)).len(), 17);
        assert_eq!(ParamLayout::new(&StaticParams::zeros(Variant::SdamhAr)).len(), 19);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let p = table_like(Variant::SdamhInt);
        let l = ParamLayout::new(&p);
        let q = l.unpack(&p, &l.pack(&p));
        for (a, b) in l.natural(&p).iter().zip(l.natural(&q)) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300) * 10.0, "{a} {b}");
        }
    }

    #[test]
    fn single_draw_search_returns_that_draw() {
        let p = table_like(Variant::AMH);
        let s = sim(&p, 400, 1);
        let spec = InitSearchSpec {
            n_draws: 1,
            seed: 9,
            ..Default::default()
        };
        let got = init_search(&s, &spec, Variant::AMH).unwrap();
        let layout = ParamLayout::new(&got);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let expect = spec.draw(&layout, &mut rng);
        assert_eq!(layout.natural(&got), expect);
    }

    #[test]
    fn coverage_check_lists_offenders() {
        let mut p = table_like(Variant::AMH);
        assert!(InitSearchSpec::default().check_covers(&p).is_ok());
        p.a[0] = 0.3;
        p.d[2] = -0.2;
        let off = InitSearchSpec::default().offenders(&p);
        assert_eq!(off.len(), 2);
        assert!(off[0].starts_with("a1=") && off[1].starts_with("d100bar="));
        assert!(InitSearchSpec::default().check_covers(&p).is_err());
    }

    #[test]
    fn forward_backward_freezes_with_zero_gain() {
        let mut p = table_like(Variant::SdamhInt);
        let s = sim(&p, 300, 2);
        p.alpha = 0.0;
        assert_eq!(forward_backward_init(&s, &p, 0.123).unwrap(), 0.123);
    }

    #[test]
    fn constant_series_keeps_impact() {
        let mut p = StaticParams::zeros(Variant::SdamhInt);
        p.alpha = 0.5;
        let x: Vec<f64> = (0..300).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let r: Vec<f64> = x.iter().map(|v| 0.004 * v).collect();
        let s = TickSeries::from_columns(&r, &x).unwrap();
        let f = filter(&s, &p, 0.004).unwrap();
        assert!(f.b0_path.iter().all(|&b| b == 0.004));
    }

    #[test]
    fn online_equals_batch() {
        let p = table_like(Variant::SdamhInt);
        let s = sim(&p, 500, 3);
        let batch = filter(&s, &p, 4e-3).unwrap();
        let mut online = OnlineFilter::new(&p, &s.slice(0, 100), 4e-3).unwrap();
        for i in 100..s.len() {
            online.push(s.returns()[i], s.signs()[i]).unwrap();
        }
        assert_eq!(online.into_state().unwrap(), batch);
    }

    #[test]
    fn int_path_ignores_trade_equation() {
        let p = table_like(Variant::SdamhInt);
        let s = sim(&p, 400, 4);
        let mut q = p.clone();
        q.c = vec![0.5, 0.1, -2.0];
        q.d = vec![0.0, 0.9, 0.2];
        q.mu2 = -0.4;
        assert_eq!(filter(&s, &p, 5e-3).unwrap().b0_path, filter(&s, &q, 5e-3).unwrap().b0_path);
    }

    #[test]
    fn ols_residuals_are_orthogonal() {
        let p = table_like(Variant::AMH);
        let s = sim(&p, 2000, 5);
        let d = Design::new(&s, LagSpec::Raw { p: 5 }).unwrap();
        let (fr, _) = ols_equations(&d).unwrap();
        for j in 0..fr.k {
            let col = |i: usize| match j {
                0 => 1.0,
                1 => d.x[i],
                j if j < 7 => d.r_row(i)[j - 2],
                j => d.x_row(i)[j - 7],
            };
            let dot: f64 = (0..d.n()).map(|i| col(i) * fr.residuals[i]).sum();
            let scale: f64 = (0..d.n()).map(|i| (col(i) * d.r[i]).abs()).sum();
            assert!(dot.abs() < 1e-8 * scale, "column {j}: {dot} vs {scale}");
        }
    }

    #[test]
    fn fit_improves_on_the_search() {
        let p = table_like(Variant::SdamhInt);
        let s = sim(&p, 3000, 6);
        let spec = InitSearchSpec::with_draws(200);
        let (est, state, report) = fit(&s, Variant::SdamhInt, &spec).unwrap();
        assert!(report.converged, "{}", report.message);
        assert!(report.loglik >= report.start_loglik);
        assert!(report.loglik >= report.search_loglik.unwrap());
        assert_eq!(state.loglik.total, report.loglik);
        assert_eq!(report.n_params, 17);
        assert!((est.alpha - 0.05).abs() < 0.03, "alpha {}", est.alpha);
        assert!(report.estimates.iter().all(|e| e.std_error.is_finite()));
        let json = report.to_json();
        assert!(json.contains("\"b100bar\"") && json.contains("\"alpha\""));
    }

    #[test]
    fn zero_covariance_collapses_bands() {
        let p = table_like(Variant::SdamhInt);
        let s = sim(&p, 600, 7);
        let layout = ParamLayout::new(&p);
        let n = layout.len();
        let report = FitReport {
            variant: p.variant,
            method: "mle".into(),
            converged: true,
            iterations: 0,
            grad_norm: 0.0,
            message: String::new(),
            loglik: 0.0,
            start_loglik: 0.0,
            search_loglik: None,
            working_likelihood: false,
            n_obs: 0,
            n_params: n,
            estimates: Vec::new(),
            covariance: None,
            covariance_free: Some(vec![vec![0.0; n]; n]),
            free_estimate: layout.pack(&p),
            params: p.clone(),
        };
        let bands = confidence_bands(&s, &p, &report, 20, 0.95, 1).unwrap();
        let path = filter(&s, &layout.unpack(&p, &layout.pack(&p)), layout.unpack(&p, &layout.pack(&p)).b0)
            .unwrap()
            .b0_path;
        assert!(!bands.diagonal_fallback);
        for ((l, u), b) in bands.lower.iter().zip(&bands.upper).zip(&path) {
            assert_eq!(l, b);
            assert_eq!(u, b);
        }
    }
}
