//! Reading and writing trade series.
//!
//! The canonical trades CSV has the header `t,ret,sign,mid,volume,timestamp`
//! with empty cells for missing optional fields. LOBSTER message/orderbook
//! pairs are mapped onto the same schema.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{TickSeries, TradeEvent};

/// Floats are written with 17 significant digits so that they parse back
/// to the same bits.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 && v.is_sign_positive() {
        return "0".into();
    }
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestFormat {
    #[default]
    TradesCsv,
    LobsterPair,
}

/// How trade signs are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignRule {
    /// Read from the sign column.
    #[default]
    Provided,
    /// Trade price against the prevailing mid-point; trades at the mid take
    /// the previous sign.
    QuoteRule,
}

/// Column names in a trades CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub t: String,
    pub ret: String,
    pub sign: String,
    pub mid: String,
    pub volume: String,
    pub timestamp: String,
    /// Trade price, only read by the quote rule.
    pub price: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            t: "t".into(),
            ret: "ret".into(),
            sign: "sign".into(),
            mid: "mid".into(),
            volume: "volume".into(),
            timestamp: "timestamp".into(),
            price: "price".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub format: IngestFormat,
    pub columns: ColumnMap,
    pub sign_rule: SignRule,
    /// Replace simple returns by log mid-point returns (needs mids).
    pub log_returns: bool,
}

impl IngestSpec {
    /// Checks that no column name is mapped twice.
    pub fn validate(&self) -> Result<()> {
        let c = &self.columns;
        let names = [&c.t, &c.ret, &c.sign, &c.mid, &c.volume, &c.timestamp, &c.price];
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("column `{a}` is mapped more than once")));
            }
        }
        Ok(())
    }
}

pub fn write_trades_csv<W: Write>(out: W, series: &TickSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "ret", "sign", "mid", "volume", "timestamp"])?;
    for e in series.events() {
        w.write_record([
            e.index.to_string(),
            fmt_f64(e.ret),
            e.sign.to_string(),
            fmt_opt(e.mid),
            fmt_opt(e.volume),
            fmt_opt(e.timestamp),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trades_csv(path: &Path, series: &TickSeries) -> Result<()> {
    write_trades_csv(File::create(path)?, series)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a trades CSV. Line numbers in errors count the header as line 1.
pub fn read_trades_csv<R: Read>(input: R, spec: &IngestSpec) -> Result<TickSeries> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let c = &spec.columns;
    let (i_t, i_ret, i_sign) = (col(&c.t), col(&c.ret), col(&c.sign));
    let (i_mid, i_vol, i_ts, i_price) = (col(&c.mid), col(&c.volume), col(&c.timestamp), col(&c.price));
    let derive_ret = i_ret.is_none() || spec.log_returns;
    if derive_ret && i_mid.is_none() {
        return Err(parse_err(1, format!("no `{}` column and no `{}` column to derive returns from", c.ret, c.mid)));
    }
    match spec.sign_rule {
        SignRule::Provided if i_sign.is_none() => return Err(parse_err(1, format!("missing column `{}`", c.sign))),
        SignRule::QuoteRule if i_price.is_none() || i_mid.is_none() => {
            return Err(parse_err(1, format!("the quote rule needs `{}` and `{}` columns", c.price, c.mid)))
        }
        _ => {}
    }

    let mut series = TickSeries::default();
    let mut prev_mid: Option<f64> = None;
    let mut prev_sign: Option<i8> = None;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |i: Option<usize>| -> Result<Option<f64>> {
            match i.and_then(|i| rec.get(i)) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| parse_err(line, format!("`{s}` is not a number"))),
            }
        };
        let index = match i_t.and_then(|i| rec.get(i)) {
            None | Some("") => k as u64,
            Some(s) => s.parse::<u64>().map_err(|_| parse_err(line, format!("`{s}` is not a trade index")))?,
        };
        let mid = field(i_mid)?;
        let sign = match spec.sign_rule {
            SignRule::Provided => {
                let v = field(i_sign)?.ok_or_else(|| parse_err(line, "empty sign"))?;
                if v == 1.0 {
                    1
                } else if v == -1.0 {
                    -1
                } else {
                    return Err(parse_err(line, format!("sign must be +1 or -1, got {v}")));
                }
            }
            SignRule::QuoteRule => {
                let p = field(i_price)?.ok_or_else(|| parse_err(line, "empty price"))?;
                // the prevailing quote is the mid before this trade
                let m = prev_mid.or(mid).ok_or_else(|| parse_err(line, "empty mid"))?;
                if p > m {
                    1
                } else if p < m {
                    -1
                } else {
                    prev_sign.ok_or_else(|| parse_err(line, "trade at the mid with no earlier sign to carry"))?
                }
            }
        };
        let ret = if derive_ret {
            let m = mid.ok_or_else(|| parse_err(line, "empty mid"))?;
            let r = match prev_mid {
                Some(q) if spec.log_returns => (m / q).ln(),
                Some(q) => (m - q) / q,
                None => {
                    // the first row only sets the reference price
                    prev_mid = Some(m);
                    prev_sign = Some(sign);
                    continue;
                }
            };
            r
        } else {
            field(i_ret)?.ok_or_else(|| parse_err(line, "empty return"))?
        };
        prev_mid = mid.or(prev_mid);
        prev_sign = Some(sign);
        let e = TradeEvent {
            index,
            ret,
            sign,
            mid,
            volume: field(i_vol)?,
            timestamp: field(i_ts)?,
        };
        series.push(e).map_err(|err| parse_err(line, err.to_string()))?;
    }
    Ok(series)
}

pub fn load_trades_csv(path: &Path, spec: &IngestSpec) -> Result<TickSeries> {
    read_trades_csv(BufReader::new(File::open(path)?), spec)
}

/// LOBSTER empty-level price sentinels.
const LOBSTER_EMPTY: f64 = 9_999_999_999.0;

/// Builds a trade series from a LOBSTER message file and its orderbook file.
///
/// Executions (event types 4 and 5) sharing a timestamp and direction are
/// one market order and are merged. The sign is that of the aggressor,
/// opposite to the executed limit order's direction. The mid after a trade
/// is read from the orderbook row of its last execution; the first trade's
/// return uses the mid just before it.
pub fn read_lobster<R1: Read, R2: Read>(messages: R1, orderbook: R2, log_returns: bool) -> Result<TickSeries> {
    let mut mr = csv::ReaderBuilder::new().has_headers(false).from_reader(messages);
    let mut or = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(orderbook);
    struct Exec {
        time: f64,
        sign: i8,
        size: f64,
        mid: f64,
        mid_before: Option<f64>,
        line: usize,
    }
    let mut execs: Vec<Exec> = Vec::new();
    let mut last_mid: Option<f64> = None;
    let mut orows = or.records();
    for (k, m) in mr.records().enumerate() {
        let line = k + 1;
        let m = m.map_err(|e| parse_err(line, e.to_string()))?;
        let o = orows
            .next()
            .ok_or_else(|| parse_err(line, "orderbook file has fewer rows than the message file"))?
            .map_err(|e| parse_err(line, e.to_string()))?;
        let num = |r: &csv::StringRecord, i: usize| -> Result<f64> {
            let s = r.get(i).ok_or_else(|| parse_err(line, format!("missing field {}", i + 1)))?;
            s.trim().parse::<f64>().map_err(|_| parse_err(line, format!("`{s}` is not a number")))
        };
        let (ask, bid) = (num(&o, 0)?, num(&o, 2)?);
        let mid = (ask.abs() < LOBSTER_EMPTY && bid.abs() < LOBSTER_EMPTY && ask > 0.0 && bid > 0.0)
            .then(|| 0.5 * (ask + bid) / 10_000.0);
        let kind = num(&m, 1)? as i64;
        if kind == 4 || kind == 5 {
            let dir = num(&m, 5)?;
            let sign = if dir > 0.0 { -1 } else { 1 };
            let time = num(&m, 0)?;
            let size = num(&m, 3)?;
            let Some(mid) = mid else {
                return Err(parse_err(line, "execution with a one-sided book"));
            };
            match execs.last_mut() {
                Some(e) if e.time == time && e.sign == sign => {
                    e.size += size;
                    e.mid = mid;
                }
                _ => execs.push(Exec {
                    time,
                    sign,
                    size,
                    mid,
                    mid_before: last_mid,
                    line,
                }),
            }
        }
        if mid.is_some() {
            last_mid = mid;
        }
    }
    let mut series = TickSeries::with_capacity(execs.len());
    let mut prev: Option<f64> = None;
    for (i, e) in execs.iter().enumerate() {
        let Some(q) = prev.or(e.mid_before) else {
            prev = Some(e.mid);
            continue;
        };
        let ret = if log_returns { (e.mid / q).ln() } else { (e.mid - q) / q };
        series
            .push(TradeEvent {
                index: i as u64,
                ret,
                sign: e.sign,
                mid: Some(e.mid),
                volume: Some(e.size),
                timestamp: Some(e.time),
            })
            .map_err(|err| parse_err(e.line, err.to_string()))?;
        prev = Some(e.mid);
    }
    Ok(series)
}

pub fn load_lobster(messages: &Path, orderbook: &Path, log_returns: bool) -> Result<TickSeries> {
    read_lobster(
        BufReader::new(File::open(messages)?),
        BufReader::new(File::open(orderbook)?),
        log_returns,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_verbatim() {
        let text = "t,ret,sign,mid,volume,timestamp\n0,0.001,1,100.5,200,34200.5\n1,-0.002,-1,,,\n5,0,1,100.4,,34201\n";
        let s = read_trades_csv(text.as_bytes(), &IngestSpec::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.returns(), &[0.001, -0.002, 0.0]);
        assert_eq!(s.signs(), &[1.0, -1.0, 1.0]);
        assert_eq!(s.indices(), &[0, 1, 5]);
        assert_eq!(s.mids(), &[Some(100.5), None, Some(100.4)]);
        assert_eq!(s.volumes()[0], Some(200.0));
        assert_eq!(s.timestamps()[2], Some(34201.0));
    }

    #[test]
    fn zero_sign_reports_line() {
        let text = "t,ret,sign\n0,0.1,1\n1,0.2,0\n";
        match read_trades_csv(text.as_bytes(), &IngestSpec::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = "t,ret,sign\n0,abc,1\n";
        assert!(matches!(read_trades_csv(text.as_bytes(), &IngestSpec::default()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let text = "t,ret,sign,timestamp\n0,0,1,10\n1,0,1,9\n";
        assert!(matches!(read_trades_csv(text.as_bytes(), &IngestSpec::default()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn round_trip_is_bitwise() {
        let r: Vec<f64> = (0..50).map(|i| ((i as f64) * 0.7).sin() * 1e-3 / 3.0).collect();
        let x: Vec<f64> = (0..50).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let s = TickSeries::from_columns(&r, &x).unwrap();
        let mut buf = Vec::new();
        write_trades_csv(&mut buf, &s).unwrap();
        let back = read_trades_csv(buf.as_slice(), &IngestSpec::default()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn returns_from_mids() {
        let text = "t,sign,mid\n0,1,100\n1,1,101\n2,-1,100\n";
        let s = read_trades_csv(text.as_bytes(), &IngestSpec::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.returns()[0] - 0.01).abs() < 1e-15);
        let spec = IngestSpec {
            log_returns: true,
            ..Default::default()
        };
        let s = read_trades_csv(text.as_bytes(), &spec).unwrap();
        assert!((s.returns()[1] - (100.0f64 / 101.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn quote_rule() {
        let text = "t,ret,mid,price\n0,0,100,100.5\n1,0,100,99.5\n2,0,100,100\n";
        let spec = IngestSpec {
            sign_rule: SignRule::QuoteRule,
            ..Default::default()
        };
        let s = read_trades_csv(text.as_bytes(), &spec).unwrap();
        assert_eq!(s.signs(), &[1.0, -1.0, -1.0]);
    }

    #[test]
    fn duplicate_mapping_rejected() {
        let mut spec = IngestSpec::default();
        spec.columns.mid = "ret".into();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn lobster_pair() {
        // submit, execution of a sell limit order (buyer-initiated) split in
        // two fills, then execution of a buy limit order
        let msg = "34200.0,1,1,100,1000000,1\n\
                   34200.5,4,2,50,1000100,-1\n\
                   34200.5,4,3,30,1000100,-1\n\
                   34201.0,4,1,100,1000000,1\n";
        let book = "1000100,80,1000000,100\n\
                    1000100,30,1000000,100\n\
                    1000200,10,1000000,100\n\
                    1000200,10,999900,5\n";
        let s = read_lobster(msg.as_bytes(), book.as_bytes(), false).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.signs(), &[1.0, -1.0]);
        assert_eq!(s.volumes(), &[Some(80.0), Some(100.0)]);
        let m0 = 0.5 * (1000100.0 + 1000000.0) / 1e4;
        let m1 = 0.5 * (1000200.0 + 1000000.0) / 1e4;
        let m2 = 0.5 * (1000200.0 + 999900.0) / 1e4;
        assert!((s.returns()[0] - (m1 - m0) / m0).abs() < 1e-15);
        assert!((s.returns()[1] - (m2 - m1) / m1).abs() < 1e-15);
    }
}
