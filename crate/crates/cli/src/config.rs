//! Flat `key = value` run configuration.
//!
//! Every key is also a command-line flag (`n_draws` <-> `--n-draws`). Values
//! resolve as defaults < `SDAMH_OUT_DIR` (output directory only) < config
//! file < flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sdamh::diagnostics::BicConvention;
use sdamh::io::{IngestFormat, SignRule};
use sdamh::irf::Pairing;
use sdamh::simulate::ScenarioKind;
use sdamh::Variant;

pub const OUT_DIR_ENV: &str = "SDAMH_OUT_DIR";

/// Key, flag aliases, help.
pub const KEYS: &[(&str, &[&str], &str)] = &[
    ("variant", &[], "model variant: H, AH, MH, AMH, SDAMH-AR, SDAMH-INT"),
    ("l1", &[], "short aggregation horizon L1"),
    ("l2", &[], "long aggregation horizon L2"),
    ("n_draws", &[], "random initialization draws"),
    ("init_seed", &[], "seed of the initialization search"),
    ("standard_errors", &[], "compute standard errors (true/false)"),
    ("params", &[], "parameter preset (recovery, impact, amh, filter-study) or JSON file"),
    ("t_len", &["T"], "number of simulated trades"),
    ("scenario", &[], "impact path: auto, score-driven, constant, fast-sine, step, ramp, ar1"),
    ("seed", &[], "simulation / Monte-Carlo seed"),
    ("input", &[], "trades CSV, or LOBSTER message file"),
    ("orderbook", &[], "LOBSTER orderbook file"),
    ("format", &[], "input format: trades-csv or lobster-pair"),
    ("sign_rule", &[], "trade signs: provided or quote-rule"),
    ("log_returns", &[], "use log mid-point returns (true/false)"),
    ("horizon", &["H"], "IRF horizon H"),
    ("n_sim", &[], "IRF Monte-Carlo paths"),
    ("antithetic", &[], "antithetic IRF sampling (true/false)"),
    ("pairing", &[], "unshocked futures: common or independent"),
    ("delta_x", &[], "trade-sign shock, +1 or -1"),
    ("thin", &[], "compute the IRF at every k-th trade"),
    ("irf_start", &[], "first trade at which the IRF is computed"),
    ("impact_m", &["M"], "permanent-impact window length M"),
    ("bin", &[], "regression bins: trades (M-trade blocks) or seconds:<width>"),
    ("quantile_seed", &[], "seed of the randomized quantile residuals"),
    ("bic", &[], "BIC convention: logl (K log T - log L) or textbook"),
    ("suite", &[], "benchmark suites: all or a list of recovery, filter, init, impact, antithetic"),
    ("reps", &["S"], "benchmark replications"),
    ("scenarios", &[], "filter-benchmark scenarios"),
    ("bench_draws", &[], "initialization draws per benchmark fit"),
    ("out_dir", &[], "output directory"),
];

pub const SUITES: [&str; 5] = ["recovery", "filter", "init", "impact", "antithetic"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinSpec {
    /// Blocks of `impact_m` trades.
    Trades,
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub l1: usize,
    pub l2: usize,
    pub n_draws: usize,
    pub init_seed: u64,
    pub standard_errors: bool,
    pub params: String,
    pub t_len: usize,
    /// `None` picks the variant's own dynamics.
    pub scenario: Option<ScenarioKind>,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub orderbook: Option<PathBuf>,
    pub format: IngestFormat,
    pub sign_rule: SignRule,
    pub log_returns: bool,
    pub horizon: usize,
    pub n_sim: usize,
    pub antithetic: bool,
    pub pairing: Pairing,
    pub delta_x: f64,
    pub thin: usize,
    pub irf_start: usize,
    pub impact_m: usize,
    pub bin: BinSpec,
    pub quantile_seed: u64,
    pub bic: BicConvention,
    pub suite: Vec<String>,
    pub reps: usize,
    pub scenarios: Vec<ScenarioKind>,
    pub bench_draws: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SdamhInt,
            l1: 10,
            l2: 100,
            n_draws: 100_000,
            init_seed: 0,
            standard_errors: true,
            params: "recovery".into(),
            t_len: 10_000,
            scenario: None,
            seed: 0,
            input: None,
            orderbook: None,
            format: IngestFormat::TradesCsv,
            sign_rule: SignRule::Provided,
            log_returns: false,
            horizon: 20,
            n_sim: 1000,
            antithetic: true,
            pairing: Pairing::Common,
            delta_x: 1.0,
            thin: 1,
            irf_start: 100,
            impact_m: 101,
            bin: BinSpec::Trades,
            quantile_seed: 0,
            bic: BicConvention::LogL,
            suite: SUITES.iter().map(|s| s.to_string()).collect(),
            reps: 100,
            scenarios: ScenarioKind::MISSPECIFIED.to_vec(),
            bench_draws: sdamh::benchmark::STUDY_DRAWS,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every problem found while resolving a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn parse<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl RunConfig {
    /// Canonical key for a file key or flag name.
    pub fn canonical(key: &str) -> Option<&'static str> {
        let k = key.trim().replace('-', "_");
        KEYS.iter()
            .find(|(name, aliases, _)| *name == k || aliases.contains(&k.as_str()))
            .map(|(name, _, _)| *name)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let key = Self::canonical(key).ok_or_else(|| format!("unknown key `{key}`"))?;
        let err = |e: String| format!("{key}: {e}");
        match key {
            "variant" => self.variant = v.parse().map_err(|e: sdamh::Error| err(e.to_string()))?,
            "l1" => self.l1 = parse(v).map_err(err)?,
            "l2" => self.l2 = parse(v).map_err(err)?,
            "n_draws" => self.n_draws = parse(v).map_err(err)?,
            "init_seed" => self.init_seed = parse(v).map_err(err)?,
            "standard_errors" => self.standard_errors = parse_bool(v).map_err(err)?,
            "params" => self.params = v.to_string(),
            "t_len" => self.t_len = parse(v).map_err(err)?,
            "scenario" => {
                self.scenario = match v {
                    "auto" | "" => None,
                    s => Some(s.parse().map_err(|e: sdamh::Error| err(e.to_string()))?),
                }
            }
            "seed" => self.seed = parse(v).map_err(err)?,
            "input" => self.input = opt_path(v),
            "orderbook" => self.orderbook = opt_path(v),
            "format" => {
                self.format = match v {
                    "trades-csv" => IngestFormat::TradesCsv,
                    "lobster-pair" => IngestFormat::LobsterPair,
                    _ => return Err(err(format!("expected trades-csv or lobster-pair, got `{v}`"))),
                }
            }
            "sign_rule" => {
                self.sign_rule = match v {
                    "provided" => SignRule::Provided,
                    "quote-rule" => SignRule::QuoteRule,
                    _ => return Err(err(format!("expected provided or quote-rule, got `{v}`"))),
                }
            }
            "log_returns" => self.log_returns = parse_bool(v).map_err(err)?,
            "horizon" => self.horizon = parse(v).map_err(err)?,
            "n_sim" => self.n_sim = parse(v).map_err(err)?,
            "antithetic" => self.antithetic = parse_bool(v).map_err(err)?,
            "pairing" => {
                self.pairing = match v {
                    "common" => Pairing::Common,
                    "independent" => Pairing::Independent,
                    _ => return Err(err(format!("expected common or independent, got `{v}`"))),
                }
            }
            "delta_x" => self.delta_x = parse(v).map_err(err)?,
            "thin" => self.thin = parse(v).map_err(err)?,
            "irf_start" => self.irf_start = parse(v).map_err(err)?,
            "impact_m" => self.impact_m = parse(v).map_err(err)?,
            "bin" => {
                self.bin = match v.split_once(':') {
                    None if v == "trades" => BinSpec::Trades,
                    Some(("seconds", w)) => BinSpec::Seconds(parse(w).map_err(err)?),
                    _ => return Err(err(format!("expected trades or seconds:<width>, got `{v}`"))),
                }
            }
            "quantile_seed" => self.quantile_seed = parse(v).map_err(err)?,
            "bic" => {
                self.bic = match v {
                    "logl" => BicConvention::LogL,
                    "textbook" => BicConvention::Textbook,
                    _ => return Err(err(format!("expected logl or textbook, got `{v}`"))),
                }
            }
            "suite" => {
                self.suite = match v {
                    "all" => SUITES.iter().map(|s| s.to_string()).collect(),
                    _ => list(v),
                }
            }
            "reps" => self.reps = parse(v).map_err(err)?,
            "scenarios" => {
                self.scenarios = list(v)
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<_, sdamh::Error>>()
                    .map_err(|e| err(e.to_string()))?
            }
            "bench_draws" => self.bench_draws = parse(v).map_err(err)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => unreachable!("every key in KEYS is handled"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "variant" => self.variant.to_string(),
            "l1" => self.l1.to_string(),
            "l2" => self.l2.to_string(),
            "n_draws" => self.n_draws.to_string(),
            "init_seed" => self.init_seed.to_string(),
            "standard_errors" => self.standard_errors.to_string(),
            "params" => self.params.clone(),
            "t_len" => self.t_len.to_string(),
            "scenario" => self.scenario.map_or("auto".into(), |s| s.to_string()),
            "seed" => self.seed.to_string(),
            "input" => path(&self.input),
            "orderbook" => path(&self.orderbook),
            "format" => match self.format {
                IngestFormat::TradesCsv => "trades-csv".into(),
                IngestFormat::LobsterPair => "lobster-pair".into(),
            },
            "sign_rule" => match self.sign_rule {
                SignRule::Provided => "provided".into(),
                SignRule::QuoteRule => "quote-rule".into(),
            },
            "log_returns" => self.log_returns.to_string(),
            "horizon" => self.horizon.to_string(),
            "n_sim" => self.n_sim.to_string(),
            "antithetic" => self.antithetic.to_string(),
            "pairing" => match self.pairing {
                Pairing::Common => "common".into(),
                Pairing::Independent => "independent".into(),
            },
            "delta_x" => self.delta_x.to_string(),
            "thin" => self.thin.to_string(),
            "irf_start" => self.irf_start.to_string(),
            "impact_m" => self.impact_m.to_string(),
            "bin" => match self.bin {
                BinSpec::Trades => "trades".into(),
                BinSpec::Seconds(w) => format!("seconds:{w}"),
            },
            "quantile_seed" => self.quantile_seed.to_string(),
            "bic" => match self.bic {
                BicConvention::LogL => "logl".into(),
                BicConvention::Textbook => "textbook".into(),
            },
            "suite" => self.suite.join(","),
            "reps" => self.reps.to_string(),
            "scenarios" => self.scenarios.iter().map(|s| s.name()).collect::<Vec<_>>().join(","),
            "bench_draws" => self.bench_draws.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => panic!("unknown key `{key}`"),
        }
    }

    /// Applies `key = value` lines; `#` starts a comment. Problems are
    /// appended to `errors` with their line numbers.
    pub fn apply_text(&mut self, text: &str, origin: &str, errors: &mut Vec<String>) {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k, v) {
                        errors.push(format!("{origin}:{}: {e}", i + 1));
                    }
                }
                None => errors.push(format!("{origin}:{}: expected `key = value`", i + 1)),
            }
        }
    }

    /// Range checks; returns every violation.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                out.push(msg);
            }
        };
        check(
            self.l1 >= 2 && self.l2 >= self.l1 + 2,
            format!("l1/l2: need 2 <= l1 < l2 - 1, got l1={} l2={}", self.l1, self.l2),
        );
        check(self.n_draws >= 1, "n_draws: must be at least 1".into());
        check(self.t_len >= 1, "t_len: must be at least 1".into());
        check((1..=1000).contains(&self.horizon), format!("horizon: must be in 1..=1000, got {}", self.horizon));
        check(self.n_sim >= 1, "n_sim: must be at least 1".into());
        check(
            !self.antithetic || (self.n_sim >= 2 && self.n_sim % 2 == 0),
            format!("n_sim: antithetic sampling needs an even count of at least 2, got {}", self.n_sim),
        );
        check(self.delta_x.abs() == 1.0, format!("delta_x: must be +1 or -1, got {}", self.delta_x));
        check(self.thin >= 1, "thin: must be at least 1".into());
        check(self.impact_m >= 1, "impact_m: must be at least 1".into());
        if let BinSpec::Seconds(w) = self.bin {
            check(w > 0.0 && w.is_finite(), format!("bin: width must be positive, got {w}"));
        }
        check(self.reps >= 1, "reps: must be at least 1".into());
        check(self.bench_draws >= 1, "bench_draws: must be at least 1".into());
        for s in &self.suite {
            check(SUITES.contains(&s.as_str()), format!("suite: unknown suite `{s}`"));
        }
        check(!self.scenarios.is_empty(), "scenarios: at least one scenario".into());
        check(
            self.format != IngestFormat::LobsterPair || self.orderbook.is_some(),
            "orderbook: lobster-pair input needs an orderbook file".into(),
        );
        out
    }

    /// Resolves defaults, environment, an optional file and flag overrides,
    /// reporting every problem at once.
    pub fn resolve(file: Option<&Path>, flags: &[(String, String)]) -> Result<Self, ConfigErrors> {
        let mut cfg = Self::default();
        let mut errors = Vec::new();
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            if !dir.is_empty() {
                cfg.out_dir = PathBuf::from(dir);
            }
        }
        if let Some(path) = file {
            match std::fs::read_to_string(path) {
                Ok(text) => cfg.apply_text(&text, &path.display().to_string(), &mut errors),
                Err(e) => errors.push(format!("{}: {e}", path.display())),
            }
        }
        for (k, v) in flags {
            if let Err(e) = cfg.set(k, v) {
                errors.push(format!("--{}: {e}", k.replace('_', "-")));
            }
        }
        errors.extend(cfg.problems());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// The resolved configuration as a config file.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|(k, _, _)| format!("{k} = {}\n", self.get(k))).collect()
    }
}
