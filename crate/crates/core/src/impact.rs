//! Permanent impact: the empirical ratio estimator, its model-implied
//! closed form, dollar scaling, the binned-regression benchmark and the
//! expected implementation shortfall.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{BandEstimate, FilterState};
use crate::lags::{AggregationSpec, LagSpec};
use crate::ols::ols;
use crate::params::StaticParams;
use crate::series::TickSeries;

/// How the lagged sign means entering the omega weights are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum WindowLayout {
    /// `xbar_{t-i}` averages the `M` signs ending `i` trades before `t`,
    /// exactly what summing the return equation over the window produces.
    #[default]
    Shifted,
    /// Non-overlapping `M`-trade blocks: `xbar_{t-i}` is the `i`-th block
    /// before the current one.
    Blocks,
}

/// Window of `m` trades ending just before position `t`: `t-m .. t-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ImpactWindow {
    pub m: usize,
    pub t: usize,
}

impl ImpactWindow {
    pub const DEFAULT_M: usize = 101;

    pub fn new(m: usize, t: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("window length must be positive".into()));
        }
        if m % 2 == 0 {
            log::warn!("window length {m} is even; balanced windows will be common");
        }
        Ok(Self { m, t })
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.t - self.m..self.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpactSource {
    Empirical,
    Model,
    Regression,
}

impl ImpactSource {
    pub fn name(self) -> &'static str {
        match self {
            ImpactSource::Empirical => "empirical",
            ImpactSource::Model => "model",
            ImpactSource::Regression => "regression",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ImpactEstimate {
    pub t: usize,
    /// Return per unit of signed trade flow.
    pub beta_sign: f64,
    /// Price change per share, when scaled.
    pub beta_dollar: Option<f64>,
    pub band: Option<(f64, f64)>,
    pub source: ImpactSource,
}

fn window_sum(v: &[f64], from: usize, to: usize) -> f64 {
    v[from..to].iter().sum()
}

/// `sum r_j / sum x_j` over the window.
pub fn beta_sign_empirical(series: &TickSeries, w: ImpactWindow) -> Result<ImpactEstimate> {
    if w.t > series.len() || w.t < w.m {
        return Err(Error::InsufficientHistory { t: w.t, required: w.m });
    }
    let r = w.range();
    let sx = window_sum(series.signs(), r.start, r.end);
    if sx == 0.0 {
        return Err(Error::BalancedWindow { t: w.t });
    }
    Ok(ImpactEstimate {
        t: w.t,
        beta_sign: window_sum(series.returns(), r.start, r.end) / sx,
        beta_dollar: None,
        band: None,
        source: ImpactSource::Empirical,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OmegaWeights {
    pub w1: f64,
    pub w_l1: f64,
    pub w_l2: f64,
    /// `xbar[i]` is the sign mean of the window `i` steps back (0 = current).
    pub xbar: Vec<f64>,
}

/// History a window needs before its own start.
pub fn omega_history(spec: &AggregationSpec, m: usize, layout: WindowLayout) -> usize {
    match layout {
        WindowLayout::Shifted => m + spec.l2,
        WindowLayout::Blocks => m * (spec.l2 + 1),
    }
}

pub fn omega_weights(series: &TickSeries, w: ImpactWindow, spec: &AggregationSpec, layout: WindowLayout) -> Result<OmegaWeights> {
    spec.validate()?;
    let need = omega_history(spec, w.m, layout);
    if w.t < need || w.t > series.len() {
        return Err(Error::InsufficientHistory { t: w.t, required: need });
    }
    let x = series.signs();
    let mf = w.m as f64;
    let xbar: Vec<f64> = (0..=spec.l2)
        .map(|i| {
            let end = match layout {
                WindowLayout::Shifted => w.t - i,
                WindowLayout::Blocks => w.t - i * w.m,
            };
            window_sum(x, end - w.m, end) / mf
        })
        .collect();
    let cur = xbar[0];
    if cur == 0.0 {
        return Err(Error::BalancedWindow { t: w.t });
    }
    let short: f64 = xbar[2..=spec.l1].iter().sum::<f64>() / (spec.l1 - 1) as f64;
    let long: f64 = xbar[spec.l1 + 1..=spec.l2].iter().sum::<f64>() / spec.long_divisor();
    Ok(OmegaWeights {
        w1: xbar[1] / cur,
        w_l1: short / cur,
        w_l2: long / cur,
        xbar,
    })
}

/// Impact averages over a window of the filtered path.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowImpact {
    /// Plain time average of `b0`.
    pub mean: f64,
    /// Order-flow weighted average `sum b0_j x_j / sum x_j`.
    pub flow_weighted: f64,
}

pub fn window_impact(series: &TickSeries, filter: &FilterState, w: ImpactWindow) -> Result<WindowImpact> {
    let r = w.range();
    let x = series.signs();
    let (mut sb, mut sbx, mut sx) = (0.0, 0.0, 0.0);
    for j in r {
        let b = filter
            .b0_at(j)
            .ok_or_else(|| Error::InvalidArgument(format!("window reaches position {j} outside the filtered range")))?;
        sb += b;
        sbx += b * x[j];
        sx += x[j];
    }
    if sx == 0.0 {
        return Err(Error::BalancedWindow { t: w.t });
    }
    Ok(WindowImpact {
        mean: sb / w.m as f64,
        flow_weighted: sbx / sx,
    })
}

fn aggregation(params: &StaticParams) -> Result<AggregationSpec> {
    match params.lags {
        LagSpec::Aggregated(a) => Ok(a),
        LagSpec::Raw { .. } => Err(Error::UnsupportedVariant {
            op: "model permanent impact",
            variant: params.variant,
        }),
    }
}

/// Model-implied permanent impact. Score-driven variants average the
/// filtered impact over the window; static ones use `params.b0`. A band on
/// the filtered impact maps linearly onto the estimate.
pub fn beta_sign_model(
    params: &StaticParams,
    filter: Option<&FilterState>,
    band: Option<&BandEstimate>,
    series: &TickSeries,
    w: ImpactWindow,
    layout: WindowLayout,
) -> Result<ImpactEstimate> {
    let spec = aggregation(params)?;
    let den = 1.0 - params.return_persistence();
    if den.abs() < 1e-8 {
        return Err(Error::NearUnitPersistence { denominator: den });
    }
    let om = omega_weights(series, w, &spec, layout)?;
    let b0 = if params.variant.is_score_driven() {
        let f = filter.ok_or_else(|| Error::InvalidArgument("score-driven variants need a filtered impact path".into()))?;
        window_impact(series, f, w)?.mean
    } else {
        params.b0
    };
    let lagged = params.b[0] * om.w1 + params.b[1] * om.w_l1 + params.b[2] * om.w_l2;
    let beta = (b0 + lagged) / den;
    let band = match (band, filter) {
        (Some(bd), Some(f)) if params.variant.is_score_driven() => {
            let idx = |j: usize| j.checked_sub(f.start).filter(|i| *i < bd.lower.len());
            let mut lo = 0.0;
            let mut hi = 0.0;
            for j in w.range() {
                let i = idx(j).ok_or_else(|| Error::InvalidArgument(format!("band does not cover position {j}")))?;
                lo += bd.lower[i];
                hi += bd.upper[i];
            }
            let mf = w.m as f64;
            let (a, b) = ((lo / mf + lagged) / den, (hi / mf + lagged) / den);
            Some((a.min(b), a.max(b)))
        }
        _ => None,
    };
    Ok(ImpactEstimate {
        t: w.t,
        beta_sign: beta,
        beta_dollar: None,
        band,
        source: ImpactSource::Model,
    })
}

/// Scales a sign-based estimate (and its band) to price per share.
pub fn beta_dollar(est: &ImpactEstimate, qbar: f64, vbar: f64) -> Result<ImpactEstimate> {
    if !(qbar > 0.0 && vbar > 0.0) {
        return Err(Error::InvalidArgument(format!("price {qbar} and volume {vbar} must be positive")));
    }
    let k = qbar / vbar;
    Ok(ImpactEstimate {
        beta_dollar: Some(k * est.beta_sign),
        ..est.clone()
    })
}

/// Average mid-price and trade volume over a window, or exponentially
/// weighted means with the given half-life (in trades) up to its end.
pub fn window_price_volume(series: &TickSeries, w: ImpactWindow, half_life: Option<f64>) -> Result<(f64, f64)> {
    let (from, to) = match half_life {
        None => (w.t - w.m, w.t),
        Some(_) => (0, w.t),
    };
    let decay = half_life.map(|h| 0.5f64.powf(1.0 / h));
    let mean = |v: &[Option<f64>], what: &str| -> Result<f64> {
        let (mut s, mut n) = (0.0, 0.0);
        let mut wt = 1.0;
        for j in (from..to).rev() {
            if let Some(x) = v[j] {
                s += wt * x;
                n += wt;
            }
            if let Some(d) = decay {
                wt *= d;
                if wt < 1e-12 {
                    break;
                }
            }
        }
        if n == 0.0 {
            return Err(Error::InvalidArgument(format!("no {what} values in the window ending at {}", w.t)));
        }
        Ok(s / n)
    };
    Ok((mean(series.mids(), "mid-price")?, mean(series.volumes(), "volume")?))
}

/// Bins for the regression benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Bin {
    /// Consecutive blocks of `n` trades (a trailing partial block is dropped).
    Trades(usize),
    /// Physical-time bins of this many seconds; needs timestamps.
    Seconds(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionImpact {
    pub slope: f64,
    pub se: f64,
    /// 95% band of the slope.
    pub band: (f64, f64),
    pub intercept: f64,
    pub n_bins: usize,
}

impl RegressionImpact {
    pub fn estimate(&self, t: usize) -> ImpactEstimate {
        ImpactEstimate {
            t,
            beta_sign: self.slope,
            beta_dollar: None,
            band: Some(self.band),
            source: ImpactSource::Regression,
        }
    }
}

/// Summed returns and summed signs per bin.
pub fn binned_flows(series: &TickSeries, bin: Bin) -> Result<(Vec<f64>, Vec<f64>)> {
    let (r, x) = (series.returns(), series.signs());
    let mut rs = Vec::new();
    let mut xs = Vec::new();
    match bin {
        Bin::Trades(n) => {
            if n == 0 {
                return Err(Error::InvalidArgument("bin size must be positive".into()));
            }
            for c in 0..r.len() / n {
                rs.push(window_sum(r, c * n, (c + 1) * n));
                xs.push(window_sum(x, c * n, (c + 1) * n));
            }
        }
        Bin::Seconds(s) => {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument("bin width must be positive".into()));
            }
            if !series.has_timestamps() {
                return Err(Error::InvalidArgument("time bins need timestamps".into()));
            }
            let ts = series.timestamps();
            let mut cur: Option<i64> = None;
            for j in 0..r.len() {
                let key = (ts[j].expect("checked") / s).floor() as i64;
                if cur != Some(key) {
                    rs.push(0.0);
                    xs.push(0.0);
                    cur = Some(key);
                }
                *rs.last_mut().expect("pushed") += r[j];
                *xs.last_mut().expect("pushed") += x[j];
            }
        }
    }
    Ok((rs, xs))
}

/// Least-squares slope of binned returns on binned net sign flow.
pub fn beta_regression(series: &TickSeries, bin: Bin) -> Result<RegressionImpact> {
    let (rs, xs) = binned_flows(series, bin)?;
    if rs.len() < 10 {
        return Err(Error::Degenerate(format!("{} bins; need at least 10", rs.len())));
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.iter().all(|v| (v - mean).abs() == 0.0) {
        return Err(Error::Degenerate("net order flow has zero variance".into()));
    }
    let design: Vec<f64> = xs.iter().flat_map(|&v| [1.0, v]).collect();
    let fit = ols(&rs, &design, 2)?;
    let tc = fit.t_critical(0.95);
    Ok(RegressionImpact {
        slope: fit.coef[1],
        se: fit.se[1],
        band: (fit.coef[1] - tc * fit.se[1], fit.coef[1] + tc * fit.se[1]),
        intercept: fit.coef[0],
        n_bins: rs.len(),
    })
}

/// Number of slices of an execution schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Slices {
    Finite(u64),
    /// The `N -> infinity` simplification.
    Continuous,
}

/// Expected implementation shortfall `-Q^2 (beta/2 (1 - 1/N) + k/T)` of a
/// linear schedule of `q` shares over `t_exec`.
pub fn expected_shortfall(q: f64, t_exec: f64, n: Slices, beta: f64, k: f64) -> Result<f64> {
    if q < 0.0 || k < 0.0 || !(t_exec > 0.0) {
        return Err(Error::InvalidArgument("Q and k must be non-negative and T positive".into()));
    }
    let frac = match n {
        Slices::Finite(0) => return Err(Error::InvalidArgument("at least one slice".into())),
        Slices::Finite(n) => 1.0 - 1.0 / n as f64,
        Slices::Continuous => 1.0,
    };
    Ok(-q * q * (0.5 * beta * frac + k / t_exec))
}

#[derive(Debug, Clone, Serialize)]
pub struct ImpactSeries {
    pub estimates: Vec<ImpactEstimate>,
    /// Windows skipped because their net sign flow was zero.
    pub skipped: usize,
}

impl ImpactSeries {
    pub fn mean(&self) -> f64 {
        self.estimates.iter().map(|e| e.beta_sign).sum::<f64>() / self.estimates.len() as f64
    }
}

/// Model-implied impact over consecutive windows of `m` trades, one per
/// window end `m, 2m, ...` that has enough history. Balanced windows are
/// skipped and counted.
pub fn model_impact_series(
    params: &StaticParams,
    filter: Option<&FilterState>,
    band: Option<&BandEstimate>,
    series: &TickSeries,
    m: usize,
    layout: WindowLayout,
) -> Result<ImpactSeries> {
    let spec = aggregation(params)?;
    let first = omega_history(&spec, m, layout).max(filter.map_or(0, |f| f.start + m));
    let mut estimates = Vec::new();
    let mut skipped = 0;
    let mut t = m;
    while t <= series.len() {
        if t >= first {
            match beta_sign_model(params, filter, band, series, ImpactWindow::new(m, t)?, layout) {
                Ok(e) => estimates.push(e),
                Err(Error::BalancedWindow { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        t += m;
    }
    Ok(ImpactSeries { estimates, skipped })
}

/// Rows `t,beta_sign,beta_dollar,band_lo,band_hi,source`.
pub fn write_impact_csv<W: Write>(out: W, rows: &[ImpactEstimate]) -> Result<()> {
    use crate::io::fmt_f64;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "beta_sign", "beta_dollar", "band_lo", "band_hi", "source"])?;
    for e in rows {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        w.write_record([
            e.t.to_string(),
            fmt_f64(e.beta_sign),
            opt(e.beta_dollar),
            opt(e.band.map(|b| b.0)),
            opt(e.band.map(|b| b.1)),
            e.source.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Variant;

    fn series(r: &[f64], x: &[f64]) -> TickSeries {
        TickSeries::from_columns(r, x).unwrap()
    }

    #[test]
    fn empirical_examples() {
        let s = series(&[1e-4, 2e-4, 3e-4], &[1.0, 1.0, -1.0]);
        let e = beta_sign_empirical(&s, ImpactWindow::new(3, 3).unwrap()).unwrap();
        assert!((e.beta_sign - 6e-4).abs() < 1e-18);
        let s = series(&[0.3; 5], &[1.0; 5]);
        assert_eq!(beta_sign_empirical(&s, ImpactWindow::new(5, 5).unwrap()).unwrap().beta_sign, 0.3);
        let s = series(&[0.1; 4], &[1.0, -1.0, 1.0, -1.0]);
        assert!(matches!(
            beta_sign_empirical(&s, ImpactWindow::new(4, 4).unwrap()),
            Err(Error::BalancedWindow { t: 4 })
        ));
    }

    #[test]
    fn omega_weights_of_uniform_flow() {
        let n = 400;
        let x: Vec<f64> = (0..n).map(|i| if i % 3 == 2 { -1.0 } else { 1.0 }).collect();
        let s = series(&vec![0.0; n], &x);
        // windows of 3 trades always hold two buys and one sell
        for layout in [WindowLayout::Shifted, WindowLayout::Blocks] {
            let w = omega_weights(&s, ImpactWindow::new(3, 303).unwrap(), &AggregationSpec::default(), layout).unwrap();
            assert!((w.w1 - 1.0).abs() < 1e-14 && (w.w_l1 - 1.0).abs() < 1e-14 && (w.w_l2 - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn omega_ratio_examples() {
        // blocks of 5: current mean 0.6, previous 0.2 -> w1 = 1/3
        let spec = AggregationSpec::new(2, 4).unwrap();
        let mut x = vec![1.0; 25];
        x[15..20].copy_from_slice(&[1.0, 1.0, 1.0, -1.0, -1.0]);
        x[20..25].copy_from_slice(&[1.0, 1.0, 1.0, 1.0, -1.0]);
        let s = series(&[0.0; 25], &x);
        let w = omega_weights(&s, ImpactWindow::new(5, 25).unwrap(), &spec, WindowLayout::Blocks).unwrap();
        assert!((w.xbar[0] - 0.6).abs() < 1e-15 && (w.xbar[1] - 0.2).abs() < 1e-15);
        assert!((w.w1 - 1.0 / 3.0).abs() < 1e-14);
        let mut y = x.clone();
        y[15..20].copy_from_slice(&[1.0, 1.0, 1.0, 1.0, -1.0]);
        y[20..25].copy_from_slice(&[1.0, 1.0, 1.0, -1.0, -1.0]);
        let w = omega_weights(&series(&[0.0; 25], &y), ImpactWindow::new(5, 25).unwrap(), &spec, WindowLayout::Blocks).unwrap();
        assert!((w.w1 - 3.0).abs() < 1e-14);
    }

    fn amh() -> StaticParams {
        let mut p = StaticParams::zeros(Variant::AMH);
        p.b0 = 5e-3;
        p.a = vec![-0.7, -0.05, -0.01];
        p.b = vec![3e-3, 2e-5, 1e-6];
        p.c = vec![-3.0, -1.7, -0.6];
        p.d = vec![0.7, 0.03, 0.01];
        p.sigma2 = 0.01;
        p
    }

    #[test]
    fn closed_form_by_hand() {
        let p = amh();
        let x: Vec<f64> = (0..600).map(|i| if i % 3 == 2 { -1.0 } else { 1.0 }).collect();
        let s = series(&vec![0.0; 600], &x);
        let e = beta_sign_model(&p, None, None, &s, ImpactWindow::new(3, 600).unwrap(), WindowLayout::Shifted).unwrap();
        let by_hand = (5e-3 + 3e-3 + 2e-5 + 1e-6) / (1.0 + 0.7 + 0.05 + 0.01);
        assert!((e.beta_sign - by_hand).abs() < 1e-16);
    }

    #[test]
    fn no_lags_gives_instantaneous_impact() {
        let mut p = StaticParams::zeros(Variant::AMH);
        p.b0 = 2e-3;
        p.sigma2 = 1.0;
        let x: Vec<f64> = (0..400).map(|i| if i % 4 == 0 { -1.0 } else { 1.0 }).collect();
        let s = series(&vec![0.0; 400], &x);
        let e = beta_sign_model(&p, None, None, &s, ImpactWindow::new(101, 350).unwrap(), WindowLayout::Shifted).unwrap();
        assert_eq!(e.beta_sign, 2e-3);
    }

    #[test]
    fn unit_persistence_rejected() {
        let mut p = amh();
        p.a = vec![0.5, 0.3, 0.2];
        let s = series(&vec![0.0; 400], &vec![1.0; 400]);
        assert!(matches!(
            beta_sign_model(&p, None, None, &s, ImpactWindow::new(101, 350).unwrap(), WindowLayout::Shifted),
            Err(Error::NearUnitPersistence { .. })
        ));
    }

    #[test]
    fn model_equals_empirical_on_noiseless_data() {
        // returns follow the AMH mean exactly with b0 constant; the window
        // return means are then a fixed point of the derivation only if they
        // are equal across shifts, which holds for a periodic sign pattern
        // with period dividing M
        let mut p = amh();
        p.mu1 = 0.0;
        let m = 5;
        let n = 700;
        let pattern = [1.0, 1.0, -1.0, 1.0, 1.0];
        let x: Vec<f64> = (0..n).map(|i| pattern[i % m]).collect();
        // with periodic signs the noiseless returns converge to a periodic
        // sequence; iterate the recursion long enough for that
        let mut r = vec![0.0; n];
        let lags = p.lags;
        let (mut rr, mut xr) = (vec![0.0; 3], vec![0.0; 3]);
        for t in 100..n {
            lags.fill(&r, &x, t, &mut rr, &mut xr);
            r[t] = p.state(&rr, &xr) + p.b0 * x[t];
        }
        let s = series(&r, &x);
        let w = ImpactWindow::new(m, n).unwrap();
        let emp = beta_sign_empirical(&s, w).unwrap().beta_sign;
        let model = beta_sign_model(&p, None, None, &s, w, WindowLayout::Shifted).unwrap().beta_sign;
        assert!((emp - model).abs() < 1e-10, "{emp} vs {model}");
    }

    #[test]
    fn dollar_scaling() {
        let e = ImpactEstimate {
            t: 0,
            beta_sign: 2e-3,
            beta_dollar: None,
            band: None,
            source: ImpactSource::Model,
        };
        assert!((beta_dollar(&e, 100.0, 200.0).unwrap().beta_dollar.unwrap() - 1e-3).abs() < 1e-18);
        assert_eq!(beta_dollar(&e, 7.0, 7.0).unwrap().beta_dollar, Some(2e-3));
        assert!(beta_dollar(&e, 0.0, 1.0).is_err());
        assert!(beta_dollar(&e, 1.0, 1e300).unwrap().beta_dollar.unwrap() < 1e-300);
    }

    #[test]
    fn exact_regression() {
        let n = 500;
        let x: Vec<f64> = (0..n).map(|i| if (i * 7 / 3) % 5 < 3 { 1.0 } else { -1.0 }).collect();
        let r: Vec<f64> = x.iter().map(|v| 2.5e-3 * v).collect();
        let f = beta_regression(&series(&r, &x), Bin::Trades(11)).unwrap();
        assert!((f.slope - 2.5e-3).abs() < 1e-15);
        assert!(f.se < 1e-12);
        assert!(beta_regression(&series(&r[..50], &x[..50]), Bin::Trades(10)).is_err());
        let flat = series(&vec![0.0; 100], &vec![1.0; 100]);
        assert!(beta_regression(&flat, Bin::Trades(5)).is_err());
    }

    #[test]
    fn shortfall() {
        assert_eq!(expected_shortfall(1e4, 1.0, Slices::Finite(1), 2e-3, 0.0).unwrap(), 0.0);
        assert!((expected_shortfall(1e4, 1.0, Slices::Continuous, 2e-3, 0.0).unwrap() + 1e5).abs() < 1e-9);
        let big = expected_shortfall(1e4, 2.0, Slices::Finite(1_000_000), 2e-3, 0.1).unwrap();
        let lim = expected_shortfall(1e4, 2.0, Slices::Continuous, 2e-3, 0.1).unwrap();
        assert!((big - lim).abs() < 1e-5 * lim.abs());
    }
}
