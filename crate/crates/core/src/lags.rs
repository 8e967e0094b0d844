//! Lag aggregation and the regressor design shared by every model variant.
//!
//! Aggregated variants use three regressors per variable: the first lag,
//! the mean of lags `2..=L1` and the mean of lags `L1+1..=L2`. Raw variants
//! use lags `1..=p` directly. All windows are summed from raw past values
//! at every `t`; nothing is updated recursively.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TickSeries;

/// Short and long aggregation horizons, in trades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationSpec {
    pub l1: usize,
    pub l2: usize,
    /// Divide the long window (`L2 - L1` lags) by `L2 - L1 - 1` instead of
    /// by its length. Off by default: the plain mean keeps the aggregates of
    /// a constant series equal to that constant and `|x| <= 1`.
    #[serde(default)]
    pub literal_divisor: bool,
}

impl Default for AggregationSpec {
    fn default() -> Self {
        Self {
            l1: 10,
            l2: 100,
            literal_divisor: false,
        }
    }
}

impl AggregationSpec {
    pub fn new(l1: usize, l2: usize) -> Result<Self> {
        let spec = Self {
            l1,
            l2,
            literal_divisor: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn long_divisor(&self) -> f64 {
        if self.literal_divisor {
            (self.l2 - self.l1 - 1) as f64
        } else {
            (self.l2 - self.l1) as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        // the literal long divisor L2 - L1 - 1 must stay positive
        if self.l1 < 2 || self.l2 < self.l1 + 2 {
            return Err(Error::InvalidArgument(format!(
                "aggregation horizons must satisfy 2 <= L1 < L2 - 1, got L1={} L2={}",
                self.l1, self.l2
            )));
        }
        Ok(())
    }
}

/// Lag structure of a model: aggregated (AH, AMH, SDAMH) or raw `p` lags (H, MH).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagSpec {
    Aggregated(AggregationSpec),
    Raw { p: usize },
}

impl Default for LagSpec {
    fn default() -> Self {
        LagSpec::Aggregated(AggregationSpec::default())
    }
}

impl LagSpec {
    /// Regressors per variable.
    pub fn k(&self) -> usize {
        match self {
            LagSpec::Aggregated(_) => 3,
            LagSpec::Raw { p } => *p,
        }
    }

    /// Number of past observations a regressor row needs.
    pub fn warmup(&self) -> usize {
        match self {
            LagSpec::Aggregated(a) => a.l2,
            LagSpec::Raw { p } => *p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LagSpec::Aggregated(a) => a.validate(),
            LagSpec::Raw { p } if *p == 0 => {
                Err(Error::InvalidArgument("raw lag order must be positive".into()))
            }
            LagSpec::Raw { .. } => Ok(()),
        }
    }

    /// Writes the `k` return regressors and `k` sign regressors for time `t`
    /// using `r[..t]` and `x[..t]`. The caller guarantees `t >= warmup()`.
    pub fn fill(&self, r: &[f64], x: &[f64], t: usize, out_r: &mut [f64], out_x: &mut [f64]) {
        match self {
            LagSpec::Aggregated(a) => {
                out_r[0] = r[t - 1];
                out_x[0] = x[t - 1];
                let (mut sr, mut sx) = (0.0, 0.0);
                for i in 2..=a.l1 {
                    sr += r[t - i];
                    sx += x[t - i];
                }
                let n1 = (a.l1 - 1) as f64;
                out_r[1] = sr / n1;
                out_x[1] = sx / n1;
                let (mut sr, mut sx) = (0.0, 0.0);
                for j in a.l1 + 1..=a.l2 {
                    sr += r[t - j];
                    sx += x[t - j];
                }
                let n2 = a.long_divisor();
                out_r[2] = sr / n2;
                out_x[2] = sx / n2;
            }
            LagSpec::Raw { p } => {
                for i in 1..=*p {
                    out_r[i - 1] = r[t - i];
                    out_x[i - 1] = x[t - i];
                }
            }
        }
    }
}

/// Lagged and aggregated values entering the conditional means at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagAggregates {
    pub r_lag1: f64,
    pub r_l1: f64,
    pub r_l2: f64,
    pub x_lag1: f64,
    pub x_l1: f64,
    pub x_l2: f64,
}

impl LagAggregates {
    pub fn r_array(&self) -> [f64; 3] {
        [self.r_lag1, self.r_l1, self.r_l2]
    }

    pub fn x_array(&self) -> [f64; 3] {
        [self.x_lag1, self.x_l1, self.x_l2]
    }
}

/// Aggregated lags at (0-based) position `t` of `series`. Requires `L2`
/// observations before `t`.
pub fn aggregate_lags(series: &TickSeries, spec: &AggregationSpec, t: usize) -> Result<LagAggregates> {
    spec.validate()?;
    if t < spec.l2 || t > series.len() {
        return Err(Error::InsufficientHistory {
            t,
            required: spec.l2,
        });
    }
    let (mut rr, mut xr) = ([0.0; 3], [0.0; 3]);
    LagSpec::Aggregated(*spec).fill(series.returns(), series.signs(), t, &mut rr, &mut xr);
    Ok(LagAggregates {
        r_lag1: rr[0],
        r_l1: rr[1],
        r_l2: rr[2],
        x_lag1: xr[0],
        x_l1: xr[1],
        x_l2: xr[2],
    })
}

/// Regressor rows for the effective sample `start..T`, computed once per
/// series. Nothing in here depends on model parameters.
#[derive(Debug, Clone)]
pub struct Design {
    pub lags: LagSpec,
    pub start: usize,
    pub k: usize,
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    /// Row-major `n x k`.
    pub r_regs: Vec<f64>,
    /// Row-major `n x k`.
    pub x_regs: Vec<f64>,
}

impl Design {
    pub fn new(series: &TickSeries, lags: LagSpec) -> Result<Self> {
        Self::with_start(series, lags, lags.warmup())
    }

    /// Effective sample starting at `start` (which must leave enough history).
    pub fn with_start(series: &TickSeries, lags: LagSpec, start: usize) -> Result<Self> {
        lags.validate()?;
        let warm = lags.warmup();
        if start < warm {
            return Err(Error::InsufficientHistory {
                t: start,
                required: warm,
            });
        }
        if series.len() <= start {
            return Err(Error::InsufficientHistory {
                t: series.len(),
                required: start + 1,
            });
        }
        let k = lags.k();
        let n = series.len() - start;
        let mut r_regs = vec![0.0; n * k];
        let mut x_regs = vec![0.0; n * k];
        let (r, x) = (series.returns(), series.signs());
        for i in 0..n {
            let t = start + i;
            let (lo, hi) = (i * k, (i + 1) * k);
            lags.fill(r, x, t, &mut r_regs[lo..hi], &mut x_regs[lo..hi]);
        }
        Ok(Self {
            lags,
            start,
            k,
            r: r[start..].to_vec(),
            x: x[start..].to_vec(),
            r_regs,
            x_regs,
        })
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    #[inline]
    pub fn r_row(&self, i: usize) -> &[f64] {
        &self.r_regs[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x_regs[i * self.k..(i + 1) * self.k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(r: &[f64], x: &[f64]) -> TickSeries {
        TickSeries::from_columns(r, x).unwrap()
    }

    #[test]
    fn constant_series_aggregates_to_constant() {
        let c = 2.5e-4;
        let s = series(&vec![c; 150], &vec![1.0; 150]);
        for t in [100, 120, 150] {
            let a = aggregate_lags(&s, &AggregationSpec::default(), t).unwrap();
            assert_eq!(a.r_lag1, c);
            assert!((a.r_l1 - c).abs() < 1e-18);
            assert!((a.r_l2 - c).abs() < 1e-18);
            assert_eq!((a.x_lag1, a.x_l1, a.x_l2), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn arithmetic_series_means() {
        // r_{t-i} = i for i = 1..=100 at t = 100
        let r: Vec<f64> = (0..100).map(|j| (100 - j) as f64).collect();
        let s = series(&r, &vec![1.0; 100]);
        let a = aggregate_lags(&s, &AggregationSpec::default(), 100).unwrap();
        assert_eq!(a.r_lag1, 1.0);
        assert_eq!(a.r_l1, 6.0);
        assert_eq!(a.r_l2, 55.5);
    }

    #[test]
    fn literal_divisor_scales_long_window() {
        let s = series(&vec![1.0; 120], &vec![1.0; 120]);
        let spec = AggregationSpec {
            literal_divisor: true,
            ..Default::default()
        };
        let a = aggregate_lags(&s, &spec, 110).unwrap();
        assert!((a.r_l2 - 90.0 / 89.0).abs() < 1e-15);
        assert_eq!(a.r_l1, 1.0);
    }

    #[test]
    fn defaults_are_ten_and_hundred() {
        let spec = AggregationSpec::default();
        assert_eq!((spec.l1, spec.l2), (10, 100));
        assert!(spec.validate().is_ok());
        assert!(AggregationSpec::new(1, 100).is_err());
        assert!(AggregationSpec::new(10, 11).is_err());
    }

    #[test]
    fn insufficient_history_is_reported() {
        let s = series(&vec![0.0; 120], &vec![1.0; 120]);
        let err = aggregate_lags(&s, &AggregationSpec::default(), 99).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory { t: 99, required: 100 }));
    }

    #[test]
    fn design_rows_match_direct_aggregation() {
        let r: Vec<f64> = (0..130).map(|i| ((i * 7919) % 13) as f64 * 1e-4).collect();
        let x: Vec<f64> = (0..130).map(|i| if (i * 31) % 5 < 2 { 1.0 } else { -1.0 }).collect();
        let s = series(&r, &x);
        let d = Design::new(&s, LagSpec::default()).unwrap();
        assert_eq!(d.n(), 30);
        for i in 0..d.n() {
            let a = aggregate_lags(&s, &AggregationSpec::default(), 100 + i).unwrap();
            assert_eq!(d.r_row(i), &a.r_array());
            assert_eq!(d.x_row(i), &a.x_array());
        }
    }

    #[test]
    fn raw_lags_are_copied() {
        let r: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let s = series(&r, &[1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0]);
        let d = Design::new(&s, LagSpec::Raw { p: 5 }).unwrap();
        assert_eq!(d.r_row(0), &[4.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(d.x_row(2), &[1.0, -1.0, -1.0, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn aggregation_is_linear_in_returns(
            s1 in proptest::collection::vec(-1.0f64..1.0, 110),
            s2 in proptest::collection::vec(-1.0f64..1.0, 110),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let x = vec![1.0; 110];
            let mix: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| alpha * a + beta * b).collect();
            let spec = AggregationSpec::default();
            let a1 = aggregate_lags(&series(&s1, &x), &spec, 105).unwrap();
            let a2 = aggregate_lags(&series(&s2, &x), &spec, 105).unwrap();
            let am = aggregate_lags(&series(&mix, &x), &spec, 105).unwrap();
            for (m, (p, q)) in am.r_array().iter().zip(a1.r_array().iter().zip(a2.r_array().iter())) {
                prop_assert!((m - (alpha * p + beta * q)).abs() < 1e-12);
            }
        }

        #[test]
        fn sign_aggregates_are_bounded(bits in proptest::collection::vec(any::<bool>(), 101..160)) {
            let x: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
            let s = series(&vec![0.0; x.len()], &x);
            let a = aggregate_lags(&s, &AggregationSpec::default(), x.len()).unwrap();
            prop_assert!(a.x_l1.abs() <= 1.0 && a.x_l2.abs() <= 1.0);
        }
    }
}
