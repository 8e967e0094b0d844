//! Trade-time series of mid-point returns and trade signs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trade in trade time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeEvent {
    pub index: u64,
    /// Simple mid-point return `(q_t - q_{t-1}) / q_{t-1}`.
    pub ret: f64,
    /// +1 for buyer-initiated, -1 for seller-initiated.
    pub sign: i8,
    pub mid: Option<f64>,
    pub volume: Option<f64>,
    /// Seconds since midnight.
    pub timestamp: Option<f64>,
}

impl TradeEvent {
    pub fn new(index: u64, ret: f64, sign: i8) -> Self {
        Self {
            index,
            ret,
            sign,
            mid: None,
            volume: None,
            timestamp: None,
        }
    }

    fn check(&self, position: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidEvent { position, reason });
        if self.sign != 1 && self.sign != -1 {
            return bad(format!("sign must be +1 or -1, got {}", self.sign));
        }
        if !self.ret.is_finite() {
            return bad(format!("return is not finite ({})", self.ret));
        }
        if let Some(m) = self.mid {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("mid-price must be positive, got {m}"));
            }
        }
        if let Some(v) = self.volume {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("volume must be positive, got {v}"));
            }
        }
        if let Some(ts) = self.timestamp {
            if !ts.is_finite() {
                return bad("timestamp is not finite".into());
            }
        }
        Ok(())
    }
}

/// Ordered trade events, stored column-wise.
///
/// Signs are kept as `f64` (exactly +1.0 or -1.0) so that the model
/// kernels can use them directly in arithmetic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickSeries {
    index: Vec<u64>,
    ret: Vec<f64>,
    sign: Vec<f64>,
    mid: Vec<Option<f64>>,
    volume: Vec<Option<f64>>,
    timestamp: Vec<Option<f64>>,
}

impl TickSeries {
    pub fn from_events(events: &[TradeEvent]) -> Result<Self> {
        let mut s = Self::with_capacity(events.len());
        for e in events {
            s.push(*e)?;
        }
        Ok(s)
    }

    /// Builds a series from returns and signs only; indices are `0..n`.
    pub fn from_columns(ret: &[f64], sign: &[f64]) -> Result<Self> {
        if ret.len() != sign.len() {
            return Err(Error::InvalidArgument(format!(
                "column lengths differ: {} returns, {} signs",
                ret.len(),
                sign.len()
            )));
        }
        let mut s = Self::with_capacity(ret.len());
        for (i, (&r, &x)) in ret.iter().zip(sign).enumerate() {
            let sign = if x == 1.0 {
                1
            } else if x == -1.0 {
                -1
            } else {
                return Err(Error::InvalidEvent {
                    position: i,
                    reason: format!("sign must be +1 or -1, got {x}"),
                });
            };
            s.push(TradeEvent::new(i as u64, r, sign))?;
        }
        Ok(s)
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            index: Vec::with_capacity(n),
            ret: Vec::with_capacity(n),
            sign: Vec::with_capacity(n),
            mid: Vec::with_capacity(n),
            volume: Vec::with_capacity(n),
            timestamp: Vec::with_capacity(n),
        }
    }

    /// Appends one event, enforcing the event invariants and strictly
    /// increasing indices (and non-decreasing timestamps when present).
    pub fn push(&mut self, e: TradeEvent) -> Result<()> {
        let position = self.len();
        e.check(position)?;
        if let Some(&last) = self.index.last() {
            if e.index <= last {
                return Err(Error::InvalidEvent {
                    position,
                    reason: format!("index {} does not increase (previous {last})", e.index),
                });
            }
        }
        if let (Some(ts), Some(prev)) = (e.timestamp, self.timestamp.iter().rev().flatten().next()) {
            if ts < *prev {
                return Err(Error::InvalidEvent {
                    position,
                    reason: format!("timestamp {ts} precedes previous timestamp {prev}"),
                });
            }
        }
        self.index.push(e.index);
        self.ret.push(e.ret);
        self.sign.push(e.sign as f64);
        self.mid.push(e.mid);
        self.volume.push(e.volume);
        self.timestamp.push(e.timestamp);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ret.is_empty()
    }

    pub fn returns(&self) -> &[f64] {
        &self.ret
    }

    pub fn signs(&self) -> &[f64] {
        &self.sign
    }

    pub fn indices(&self) -> &[u64] {
        &self.index
    }

    pub fn mids(&self) -> &[Option<f64>] {
        &self.mid
    }

    pub fn volumes(&self) -> &[Option<f64>] {
        &self.volume
    }

    pub fn timestamps(&self) -> &[Option<f64>] {
        &self.timestamp
    }

    pub fn has_timestamps(&self) -> bool {
        !self.is_empty() && self.timestamp.iter().all(Option::is_some)
    }

    pub fn event(&self, i: usize) -> TradeEvent {
        TradeEvent {
            index: self.index[i],
            ret: self.ret[i],
            sign: self.sign[i] as i8,
            mid: self.mid[i],
            volume: self.volume[i],
            timestamp: self.timestamp[i],
        }
    }

    pub fn events(&self) -> impl Iterator<Item = TradeEvent> + '_ {
        (0..self.len()).map(|i| self.event(i))
    }

    /// Contiguous sub-series `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> TickSeries {
        TickSeries {
            index: self.index[from..to].to_vec(),
            ret: self.ret[from..to].to_vec(),
            sign: self.sign[from..to].to_vec(),
            mid: self.mid[from..to].to_vec(),
            volume: self.volume[from..to].to_vec(),
            timestamp: self.timestamp[from..to].to_vec(),
        }
    }

    /// Same events with every return multiplied by `factor`.
    pub fn scale_returns(&self, factor: f64) -> TickSeries {
        let mut out = self.clone();
        out.ret.iter_mut().for_each(|r| *r *= factor);
        out
    }
}

/// Summary statistics of a series in the layout of a daily stats table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skew: f64,
    pub excess_kurtosis: f64,
    pub pct_buy: f64,
    pub mean_duration: Option<f64>,
}

impl SeriesStats {
    pub fn compute(series: &TickSeries) -> SeriesStats {
        let r = series.returns();
        let n = r.len();
        let nf = n as f64;
        let mean = r.iter().sum::<f64>() / nf;
        let m2 = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let m3 = r.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
        let m4 = r.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
        let (skew, kurt) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (f64::NAN, f64::NAN)
        };
        let buys = series.signs().iter().filter(|&&x| x > 0.0).count();
        let mean_duration = if series.has_timestamps() && n > 1 {
            let ts: Vec<f64> = series.timestamps().iter().map(|t| t.unwrap()).collect();
            Some((ts[n - 1] - ts[0]) / (n - 1) as f64)
        } else {
            None
        };
        SeriesStats {
            n,
            mean,
            std: m2.sqrt(),
            skew,
            excess_kurtosis: kurt,
            pct_buy: 100.0 * buys as f64 / nf,
            mean_duration,
        }
    }
}
