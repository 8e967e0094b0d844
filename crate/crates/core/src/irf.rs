//! Impulse responses of returns to a trade-sign shock: closed form for the
//! linear variants, Monte Carlo for everything else.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector, Schur};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::FilterState;
use crate::lags::LagSpec;
use crate::optim::golden_section;
use crate::params::StaticParams;
use crate::series::TickSeries;
use crate::simulate::{antithetic_pair, ShockStream, Simulator};

/// Closed-form responses of a linear variant.
#[derive(Debug, Clone, Serialize)]
pub struct LinearIrf {
    /// `irf[h]` for `h = 0..=H`.
    pub irf: Vec<f64>,
    pub cirf: Vec<f64>,
    pub delta_x: f64,
    /// Largest eigenvalue modulus of the companion matrix.
    pub spectral_radius: f64,
}

/// Lag coefficients of the aggregated regressors spread over the raw lags
/// `1..=p` they average.
pub fn unrolled_lags(lags: &LagSpec, coef: &[f64]) -> Vec<f64> {
    match lags {
        LagSpec::Raw { p } => coef[..*p].to_vec(),
        LagSpec::Aggregated(a) => {
            let mut out = vec![0.0; a.l2];
            out[0] = coef[0];
            let w1 = coef[1] / (a.l1 - 1) as f64;
            let w2 = coef[2] / a.long_divisor();
            for (i, v) in out.iter_mut().enumerate().skip(1) {
                *v = if i < a.l1 { w1 } else { w2 };
            }
            out
        }
    }
}

/// Companion matrix of the reduced form in `(r, x)`, lag blocks left to right.
pub fn companion(params: &StaticParams) -> DMatrix<f64> {
    let [a, b, c, d] = [&params.a, &params.b, &params.c, &params.d].map(|v| unrolled_lags(&params.lags, v));
    let p = a.len();
    let n = 2 * p;
    let b0 = params.b0;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..p {
        // B^{-1} Phi_j with B^{-1} = [[1, b0], [0, 1]]
        m[(0, 2 * j)] = a[j] + b0 * c[j];
        m[(0, 2 * j + 1)] = b[j] + b0 * d[j];
        m[(1, 2 * j)] = c[j];
        m[(1, 2 * j + 1)] = d[j];
    }
    for i in 2..n {
        m[(i, i - 2)] = 1.0;
    }
    m
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    Schur::try_new(m.clone(), 1e-13, 100_000)
        .map(|s| s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
        .unwrap_or(f64::NAN)
}

/// `IRF(h) = J A^h J' B^{-1} (0, delta_x)'` for `h = 0..=H`.
pub fn irf_linear(params: &StaticParams, horizon: usize, delta_x: f64) -> Result<LinearIrf> {
    params.validate()?;
    if !params.variant.is_linear() {
        return Err(Error::UnsupportedVariant {
            op: "closed-form impulse response",
            variant: params.variant,
        });
    }
    let a = companion(params);
    let rho = spectral_radius(&a);
    if !(rho < 1.0) {
        warn!("companion spectral radius {rho:.6} is not below one: the VAR is not stationary");
    }
    let mut v = DVector::zeros(a.nrows());
    v[0] = params.b0 * delta_x;
    v[1] = delta_x;
    let mut irf = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        irf.push(v[0]);
        v = &a * v;
    }
    Ok(LinearIrf {
        cirf: running_sum(&irf),
        irf,
        delta_x,
        spectral_radius: rho,
    })
}

fn running_sum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// How the unshocked future draws its innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Pairing {
    /// Same innovations as the shocked future.
    #[default]
    Common,
    /// An independent stream; for validating the estimator.
    Independent,
}

#[derive(Debug, Clone, Serialize)]
pub struct CirfOptions {
    pub horizon: usize,
    pub n_sim: usize,
    pub delta_x: f64,
    pub antithetic: bool,
    pub pairing: Pairing,
    pub seed: u64,
}

impl Default for CirfOptions {
    fn default() -> Self {
        Self {
            horizon: 20,
            n_sim: 1000,
            delta_x: 1.0,
            antithetic: true,
            pairing: Pairing::Common,
            seed: 0,
        }
    }
}

impl CirfOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_sim == 0 || (self.antithetic && (self.n_sim < 2 || self.n_sim % 2 != 0)) {
            return Err(Error::InvalidArgument(format!(
                "n_sim = {} (antithetic sampling needs an even count of at least 2)",
                self.n_sim
            )));
        }
        if self.delta_x.abs() != 1.0 {
            return Err(Error::InvalidArgument(format!("delta_x must be +1 or -1, got {}", self.delta_x)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CirfResult {
    /// Conditioning position in the series.
    pub t: usize,
    pub horizons: Vec<usize>,
    pub irf: Vec<f64>,
    pub cirf: Vec<f64>,
    /// Monte-Carlo standard error of `cirf[h]`.
    pub mc_std: Vec<f64>,
    pub lrcirf: f64,
    pub delta_x: f64,
    pub n_sim: usize,
    /// Impact coefficient at the conditioning trade.
    pub b0: f64,
}

impl CirfResult {
    pub fn lrcirf_std(&self) -> f64 {
        *self.mc_std.last().expect("at least one horizon")
    }
}

/// Sub-stream seed for conditioning point `t`.
fn point_seed(seed: u64, t: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const INDEPENDENT_OFFSET: u64 = 1 << 40;

fn next_b0(params: &StaticParams, b: f64, x: f64, r: f64, state: f64) -> f64 {
    if params.variant.is_score_driven() {
        let resid = r - (state + b * x);
        params.omega + params.beta * b + params.alpha * (x * resid)
    } else {
        b
    }
}

/// Returns `r_{t+h}` for `h = 0..=H` along one simulated future.
fn future(params: &StaticParams, r_hist: &[f64], x_hist: &[f64], b0: f64, shocks: &ShockStream, force: Option<f64>) -> Vec<f64> {
    let mut sim = Simulator::new(params, r_hist, x_hist, shocks.len()).expect("history length checked by the caller");
    let mut b = b0;
    let mut out = Vec::with_capacity(shocks.len());
    for h in 0..shocks.len() {
        let s = sim.step(b, shocks.gaussians[h], shocks.uniforms[h], if h == 0 { force } else { None });
        out.push(s.r);
        b = next_b0(params, b, s.x, s.r, s.state);
    }
    out
}

/// Cumulative response along one shocked/unshocked pair of futures. The
/// contemporaneous term is `b0 * delta_x` by construction.
fn path_cirf(
    params: &StaticParams,
    r_hist: &[f64],
    x_hist: &[f64],
    b0: f64,
    shocked: &ShockStream,
    plain: &ShockStream,
    delta_x: f64,
) -> Vec<f64> {
    let force = if params.variant.is_linear() { delta_x } else { delta_x.signum() };
    let rs = future(params, r_hist, x_hist, b0, shocked, Some(force));
    let ru = future(params, r_hist, x_hist, b0, plain, None);
    let mut acc = b0 * delta_x;
    let mut out = Vec::with_capacity(rs.len());
    out.push(acc);
    for h in 1..rs.len() {
        acc += rs[h] - ru[h];
        out.push(acc);
    }
    out
}

/// Monte-Carlo conditional CIRF at series position `t` given the impact
/// coefficient `b0` in force there. `t` trades of history precede the
/// shocked trade.
pub fn cirf_monte_carlo(series: &TickSeries, params: &StaticParams, b0: f64, t: usize, opts: &CirfOptions) -> Result<CirfResult> {
    params.validate()?;
    opts.validate()?;
    let warm = params.lags.warmup();
    if t < warm || t > series.len() {
        return Err(Error::InsufficientHistory { t, required: warm });
    }
    let r_hist = &series.returns()[t - warm..t];
    let x_hist = &series.signs()[t - warm..t];
    let n = opts.horizon + 1;
    let seed = point_seed(opts.seed, t);
    let draw = |path: u64| -> Vec<f64> {
        let s = ShockStream::for_path(seed, path, n);
        let p = match opts.pairing {
            Pairing::Common => s.clone(),
            Pairing::Independent => ShockStream::for_path(seed, path + INDEPENDENT_OFFSET, n),
        };
        let one = path_cirf(params, r_hist, x_hist, b0, &s, &p, opts.delta_x);
        if !opts.antithetic {
            return one;
        }
        let s2 = antithetic_pair(&s).expect("fresh stream");
        let p2 = antithetic_pair(&p).expect("fresh stream");
        let two = path_cirf(params, r_hist, x_hist, b0, &s2, &p2, opts.delta_x);
        one.iter().zip(&two).map(|(a, b)| 0.5 * (a + b)).collect()
    };
    let units = if opts.antithetic { opts.n_sim / 2 } else { opts.n_sim };
    let samples: Vec<Vec<f64>> = (0..units as u64).map(draw).collect();
    Ok(summarise(t, samples, opts, b0))
}

fn summarise(t: usize, samples: Vec<Vec<f64>>, opts: &CirfOptions, b0: f64) -> CirfResult {
    let m = samples.len() as f64;
    let n = opts.horizon + 1;
    // shifted by the first sample so a constant column (h = 0) averages exactly
    let mut cirf = vec![0.0; n];
    for s in &samples {
        for h in 0..n {
            cirf[h] += s[h] - samples[0][h];
        }
    }
    for h in 0..n {
        cirf[h] = samples[0][h] + cirf[h] / m;
    }
    let mc_std = (0..n)
        .map(|h| {
            if samples.len() < 2 {
                return f64::NAN;
            }
            let ss: f64 = samples.iter().map(|s| (s[h] - cirf[h]).powi(2)).sum();
            (ss / (m - 1.0) / m).sqrt()
        })
        .collect();
    let mut irf = Vec::with_capacity(n);
    irf.push(cirf[0]);
    for h in 1..n {
        irf.push(cirf[h] - cirf[h - 1]);
    }
    CirfResult {
        t,
        horizons: (0..n).collect(),
        lrcirf: cirf[n - 1],
        irf,
        cirf,
        mc_std,
        delta_x: opts.delta_x,
        n_sim: opts.n_sim,
        b0,
    }
}

/// As [`cirf_monte_carlo`], reading the impact coefficient from a filter run
/// (static variants use `params.b0`).
pub fn cirf_at(series: &TickSeries, params: &StaticParams, filter: Option<&FilterState>, t: usize, opts: &CirfOptions) -> Result<CirfResult> {
    let b0 = impact_at(params, filter, t)?;
    cirf_monte_carlo(series, params, b0, t, opts)
}

fn impact_at(params: &StaticParams, filter: Option<&FilterState>, t: usize) -> Result<f64> {
    if !params.variant.is_score_driven() {
        return Ok(params.b0);
    }
    filter
        .ok_or_else(|| Error::InvalidArgument("score-driven variants need a filtered impact path".into()))?
        .b0_at(t)
        .ok_or_else(|| Error::InvalidArgument(format!("position {t} is outside the filtered range")))
}

#[derive(Debug, Clone, Serialize)]
pub struct LrcirfPoint {
    pub t: usize,
    pub lrcirf: f64,
    pub mc_std: f64,
    pub b0: f64,
    /// Market state at `t` (return mean net of the impact term).
    pub state: f64,
}

/// Long-run CIRF at every `thin`-th position from `first` to the end of the
/// series. Positions are processed in parallel.
pub fn lrcirf_series(
    series: &TickSeries,
    params: &StaticParams,
    filter: Option<&FilterState>,
    first: usize,
    thin: usize,
    opts: &CirfOptions,
) -> Result<Vec<LrcirfPoint>> {
    let thin = thin.max(1);
    let first = first.max(params.lags.warmup());
    let ts: Vec<usize> = (first..series.len()).step_by(thin).collect();
    ts.par_iter()
        .map(|&t| {
            let b0 = impact_at(params, filter, t)?;
            let c = cirf_monte_carlo(series, params, b0, t, opts)?;
            let state = match filter.and_then(|f| f.state_at(t)) {
                Some(s) => s,
                None => {
                    let k = params.k();
                    let (mut rr, mut xr) = (vec![0.0; k], vec![0.0; k]);
                    params.lags.fill(series.returns(), series.signs(), t, &mut rr, &mut xr);
                    params.state(&rr, &xr)
                }
            };
            Ok(LrcirfPoint {
                t,
                lrcirf: c.lrcirf,
                mc_std: c.lrcirf_std(),
                b0,
                state,
            })
        })
        .collect()
}

/// `CIRF_h = c + kappa * exp(-phi * h)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpFit {
    pub c: f64,
    pub kappa: f64,
    pub phi: f64,
    pub rss: f64,
    /// False for a flat curve, where `phi` carries no information.
    pub identified: bool,
}

/// Least-squares fit of `c + kappa * exp(-phi * h)` at `h = 0, 1, ...`.
///
/// For fixed `phi` the problem is linear in `(c, kappa)`, so the search runs
/// over `phi` alone: a log-spaced scan, then golden-section refinement.
pub fn fit_exponential(curve: &[f64]) -> Result<ExpFit> {
    if curve.len() < 4 {
        return Err(Error::InvalidArgument(format!("{} points; need at least 4", curve.len())));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("curve has non-finite values".into()));
    }
    let scale = curve.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = curve.iter().sum::<f64>() / curve.len() as f64;
    let spread = curve.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    if spread <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Ok(ExpFit {
            c: mean,
            kappa: 0.0,
            phi: f64::NAN,
            rss: curve.iter().map(|v| (v - mean).powi(2)).sum(),
            identified: false,
        });
    }
    let rss_at = |lphi: f64| linear_part(curve, lphi.exp()).2;
    let (lo, hi, steps) = (-8.0f64, 5.0f64, 261);
    let grid: Vec<f64> = (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect();
    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| rss_at(*a.1).total_cmp(&rss_at(*b.1)))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let (a, b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(steps - 1)]);
    let phi = golden_section(&rss_at, a, b, 1e-14).exp();
    let (c, kappa, rss) = linear_part(curve, phi);
    Ok(ExpFit {
        c,
        kappa,
        phi,
        rss,
        identified: kappa.abs() > 1e-10 * scale,
    })
}

/// Least-squares `(c, kappa, rss)` for fixed `phi`.
fn linear_part(curve: &[f64], phi: f64) -> (f64, f64, f64) {
    let n = curve.len() as f64;
    let (mut se, mut see, mut sy, mut sey) = (0.0, 0.0, 0.0, 0.0);
    for (h, y) in curve.iter().enumerate() {
        let e = (-phi * h as f64).exp();
        se += e;
        see += e * e;
        sy += y;
        sey += e * y;
    }
    let det = n * see - se * se;
    let (c, kappa) = if det.abs() <= 1e-14 * n * see {
        (sy / n, 0.0)
    } else {
        ((see * sy - se * sey) / det, (n * sey - se * sy) / det)
    };
    let rss = curve
        .iter()
        .enumerate()
        .map(|(h, y)| (y - c - kappa * (-phi * h as f64).exp()).powi(2))
        .sum();
    (c, kappa, rss)
}

/// Plot-ready rows `t,h,cirf,mc_std,delta_x`.
pub fn write_cirf_csv<W: Write>(out: W, results: &[CirfResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "h", "cirf", "mc_std", "delta_x"])?;
    for r in results {
        for h in 0..r.cirf.len() {
            w.write_record([
                r.t.to_string(),
                h.to_string(),
                crate::io::fmt_f64(r.cirf[h]),
                crate::io::fmt_f64(r.mc_std[h]),
                crate::io::fmt_f64(r.delta_x),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lags::AggregationSpec;
    use crate::params::Variant;

    fn ah() -> StaticParams {
        let mut p = StaticParams::zeros(Variant::AH);
        p.b0 = 5e-3;
        p.a = vec![-0.3, -0.1, -0.05];
        p.b = vec![1e-3, 2e-4, 1e-5];
        p.c = vec![-2.0, -1.0, -0.5];
        p.d = vec![0.3, 0.1, 0.05];
        p.sigma2 = 1e-4;
        p.sigma2_x = 0.8;
        p
    }

    #[test]
    fn no_propagation_without_lags() {
        let mut p = StaticParams::zeros(Variant::AH);
        p.b0 = 0.7;
        p.sigma2 = 1.0;
        p.sigma2_x = 1.0;
        let r = irf_linear(&p, 10, 1.0).unwrap();
        assert_eq!(r.irf[0], 0.7);
        assert!(r.irf[1..].iter().all(|v| *v == 0.0));
        assert!(r.cirf.iter().all(|v| *v == 0.7));
    }

    #[test]
    fn raw_two_lag_matches_direct_recursion() {
        let mut p = StaticParams::zeros(Variant::H);
        p.lags = LagSpec::Raw { p: 2 };
        p.a = vec![0.2, -0.1];
        p.b = vec![0.05, 0.02];
        p.c = vec![0.3, 0.1];
        p.d = vec![0.4, 0.2];
        p.b0 = 0.5;
        p.sigma2 = 1.0;
        p.sigma2_x = 1.0;
        let r = irf_linear(&p, 12, 1.0).unwrap();
        // structural recursion: x_h from lags, then r_h = b0 x_h + lags
        let (mut dr, mut dx) = (vec![0.5], vec![1.0]);
        for h in 1..=12usize {
            let lag = |v: &Vec<f64>, j: usize| if h >= j { v[h - j] } else { 0.0 };
            let x = 0.3 * lag(&dr, 1) + 0.1 * lag(&dr, 2) + 0.4 * lag(&dx, 1) + 0.2 * lag(&dx, 2);
            let rr = 0.5 * x + 0.2 * lag(&dr, 1) - 0.1 * lag(&dr, 2) + 0.05 * lag(&dx, 1) + 0.02 * lag(&dx, 2);
            dx.push(x);
            dr.push(rr);
        }
        for h in 0..=12 {
            assert!((r.irf[h] - dr[h]).abs() < 1e-14, "h={h}: {} vs {}", r.irf[h], dr[h]);
        }
    }

    #[test]
    fn dense_matrix_power_oracle() {
        let p = ah();
        let a = companion(&p);
        let r = irf_linear(&p, 8, 1.0).unwrap();
        let mut e = DVector::zeros(a.nrows());
        e[0] = p.b0;
        e[1] = 1.0;
        let mut pow = DMatrix::identity(a.nrows(), a.nrows());
        for h in 0..=8 {
            let v = &pow * &e;
            assert!((v[0] - r.irf[h]).abs() < 1e-15 + 1e-12 * v[0].abs());
            pow = &pow * &a;
        }
    }

    #[test]
    fn linear_responses_are_symmetric_and_scale() {
        let p = ah();
        let up = irf_linear(&p, 20, 1.0).unwrap();
        let down = irf_linear(&p, 20, -1.0).unwrap();
        let two = irf_linear(&p, 20, 2.0).unwrap();
        for h in 0..=20 {
            assert_eq!(up.cirf[h], -down.cirf[h]);
            assert!((two.irf[h] - 2.0 * up.irf[h]).abs() <= 1e-15 * up.irf[h].abs().max(1e-300) * 4.0);
        }
    }

    #[test]
    fn unrolling_preserves_aggregates() {
        let lags = LagSpec::Aggregated(AggregationSpec::default());
        let u = unrolled_lags(&lags, &[0.5, 0.9, 0.9]);
        assert_eq!(u.len(), 100);
        assert_eq!(u[0], 0.5);
        assert!((u[1..10].iter().sum::<f64>() - 0.9).abs() < 1e-14);
        assert!((u[10..].iter().sum::<f64>() - 0.9).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let p = ah();
        let closed = irf_linear(&p, 20, 1.0).unwrap();
        let sim = {
            let mut q = StaticParams::zeros(Variant::AMH);
            q.sigma2 = 1e-4;
            crate::simulate::simulate(&q, &crate::simulate::ScenarioPath::constant(), 300, &ShockStream::generate(1, 300), &Default::default())
                .unwrap()
                .series
        };
        let opts = CirfOptions {
            n_sim: 400,
            pairing: Pairing::Independent,
            seed: 3,
            ..Default::default()
        };
        let mc = cirf_monte_carlo(&sim, &p, p.b0, 200, &opts).unwrap();
        for h in 0..=20 {
            let tol = 3.0 * mc.mc_std[h] + 1e-15;
            assert!((mc.cirf[h] - closed.cirf[h]).abs() <= tol, "h={h}: {} vs {} (se {})", mc.cirf[h], closed.cirf[h], mc.mc_std[h]);
        }
        // with common numbers the linear difference is exact up to rounding
        let common = cirf_monte_carlo(&sim, &p, p.b0, 200, &CirfOptions { pairing: Pairing::Common, ..opts }).unwrap();
        for h in 0..=20 {
            assert!((common.cirf[h] - closed.cirf[h]).abs() < 1e-12);
        }
    }

    #[test]
    fn telescoping() {
        let mut p = StaticParams::zeros(Variant::AMH);
        p.b0 = 5e-3;
        p.a = vec![-0.2, -0.05, -0.01];
        p.c = vec![-3.0, -1.7, -0.6];
        p.d = vec![0.7, 0.03, 0.01];
        p.sigma2 = 1e-4;
        let s = crate::simulate::simulate(&p, &crate::simulate::ScenarioPath::constant(), 400, &ShockStream::generate(2, 400), &Default::default())
            .unwrap()
            .series;
        let c = cirf_monte_carlo(&s, &p, p.b0, 250, &CirfOptions { n_sim: 50, ..Default::default() }).unwrap();
        assert_eq!(c.irf[0], c.cirf[0]);
        for h in 1..c.cirf.len() {
            assert!((c.cirf[h] - c.cirf[h - 1] - c.irf[h]).abs() < 1e-15);
        }
        assert!((c.cirf[0] - p.b0).abs() < 1e-15);
        assert!(c.mc_std.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn antithetic_needs_even_count() {
        let o = CirfOptions { n_sim: 3, ..Default::default() };
        assert!(o.validate().is_err());
        assert!(CirfOptions { n_sim: 1, antithetic: true, ..Default::default() }.validate().is_err());
        assert!(CirfOptions { n_sim: 1, antithetic: false, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn exponential_recovery() {
        let curve: Vec<f64> = (0..=20).map(|h| 2.0 - (-2.5 * h as f64).exp()).collect();
        let f = fit_exponential(&curve).unwrap();
        assert!((f.c - 2.0).abs() < 1e-6 && (f.kappa + 1.0).abs() < 1e-6 && (f.phi - 2.5).abs() < 1e-6, "{f:?}");
        assert!(f.identified);
        let flat = fit_exponential(&[3.0; 21]).unwrap();
        assert!(!flat.identified && flat.kappa == 0.0);
        assert!(fit_exponential(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn csv_rows() {
        let r = CirfResult {
            t: 7,
            horizons: vec![0, 1],
            irf: vec![0.5, 0.25],
            cirf: vec![0.5, 0.75],
            mc_std: vec![0.0, 0.1],
            lrcirf: 0.75,
            delta_x: 1.0,
            n_sim: 2,
            b0: 0.5,
        };
        let mut buf = Vec::new();
        write_cirf_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,h,cirf,mc_std,delta_x");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("7,1,7.5"));
    }
}
