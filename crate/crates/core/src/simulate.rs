//! Data-generating processes, impact scenarios and shock streams.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::score_update;
use crate::params::{logistic, StaticParams};
use crate::series::{TickSeries, TradeEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    FastSine,
    Step,
    Ramp,
    AR1,
    /// The model's own score recursion.
    ScoreDriven,
    /// `b0` held at its initial value.
    Constant,
}

impl ScenarioKind {
    pub const MISSPECIFIED: [ScenarioKind; 4] =
        [ScenarioKind::FastSine, ScenarioKind::Step, ScenarioKind::Ramp, ScenarioKind::AR1];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::FastSine => "fast-sine",
            ScenarioKind::Step => "step",
            ScenarioKind::Ramp => "ramp",
            ScenarioKind::AR1 => "ar1",
            ScenarioKind::ScoreDriven => "score-driven",
            ScenarioKind::Constant => "constant",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        match norm.as_str() {
            "fast-sine" | "fastsine" | "sine" => Ok(ScenarioKind::FastSine),
            "step" => Ok(ScenarioKind::Step),
            "ramp" => Ok(ScenarioKind::Ramp),
            "ar1" | "ar(1)" => Ok(ScenarioKind::AR1),
            "score-driven" | "sd" => Ok(ScenarioKind::ScoreDriven),
            "constant" => Ok(ScenarioKind::Constant),
            _ => Err(Error::UnknownScenario(s.to_string())),
        }
    }
}

/// Settings of the stochastic AR(1) scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Spec {
    pub c: f64,
    pub phi: f64,
    /// Standard deviation of the Gaussian innovation.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for Ar1Spec {
    fn default() -> Self {
        Self {
            c: 0.05,
            phi: 0.9,
            noise_sd: AR1_NOISE_SD,
            seed: 0,
        }
    }
}

/// Innovation scale of the AR(1) impact path when none is given.
pub const AR1_NOISE_SD: f64 = 0.025;

/// Impact path driving a simulation. `values` is empty for
/// [`ScenarioKind::ScoreDriven`] and [`ScenarioKind::Constant`], whose
/// paths come from the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioPath {
    pub kind: ScenarioKind,
    pub values: Vec<f64>,
    pub ar1: Option<Ar1Spec>,
}

impl ScenarioPath {
    pub fn score_driven() -> Self {
        Self {
            kind: ScenarioKind::ScoreDriven,
            values: Vec::new(),
            ar1: None,
        }
    }

    pub fn constant() -> Self {
        Self {
            kind: ScenarioKind::Constant,
            values: Vec::new(),
            ar1: None,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Deterministic scenarios evaluated at `i = 0..t_len`; AR(1) uses the
/// default [`Ar1Spec`].
pub fn scenario_path(kind: ScenarioKind, t_len: usize) -> Result<ScenarioPath> {
    scenario_path_with(kind, t_len, &Ar1Spec::default())
}

pub fn scenario_path_with(kind: ScenarioKind, t_len: usize, ar: &Ar1Spec) -> Result<ScenarioPath> {
    if t_len == 0 {
        return Err(Error::InvalidArgument("scenario length must be positive".into()));
    }
    let values: Vec<f64> = match kind {
        ScenarioKind::FastSine => (0..t_len)
            .map(|i| (0.5 + 0.5 * (2.0 * PI * i as f64 / 200.0).sin()).clamp(0.0, 1.0))
            .collect(),
        ScenarioKind::Step => (0..t_len).map(|i| if i > 500 { 1.0 } else { 0.0 }).collect(),
        ScenarioKind::Ramp => (0..t_len).map(|i| (i % 200) as f64 / 200.0).collect(),
        ScenarioKind::AR1 => {
            let mut rng = ChaCha8Rng::seed_from_u64(ar.seed);
            // start at the stationary mean
            let mut b = ar.c / (1.0 - ar.phi);
            let mut out = Vec::with_capacity(t_len);
            for _ in 0..t_len {
                out.push(b);
                let u: f64 = rng.sample(StandardNormal);
                b = ar.c + ar.phi * b + ar.noise_sd * u;
            }
            out
        }
        ScenarioKind::ScoreDriven => return Ok(ScenarioPath::score_driven()),
        ScenarioKind::Constant => return Ok(ScenarioPath::constant()),
    };
    Ok(ScenarioPath {
        kind,
        values,
        ar1: (kind == ScenarioKind::AR1).then_some(*ar),
    })
}

/// Pre-drawn innovations for one simulated path: Gaussians for the return
/// noise and uniforms on `(0, 1)` for trade-sign sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockStream {
    pub seed: u64,
    pub gaussians: Vec<f64>,
    pub uniforms: Vec<f64>,
    pub antithetic: bool,
}

impl ShockStream {
    pub fn generate(seed: u64, n: usize) -> Self {
        Self::for_path(seed, 0, n)
    }

    /// Independent sub-stream `path` of `seed`.
    pub fn for_path(seed: u64, path: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let gaussians = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let uniforms = (0..n).map(|_| rng.sample(Open01)).collect();
        Self {
            seed,
            gaussians,
            uniforms,
            antithetic: false,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Mirrored partner of `shocks`: negated Gaussians and reflected uniforms.
pub fn antithetic_pair(shocks: &ShockStream) -> Result<ShockStream> {
    if shocks.antithetic {
        return Err(Error::AlreadyMirrored);
    }
    Ok(ShockStream {
        seed: shocks.seed,
        gaussians: shocks.gaussians.iter().map(|g| -g).collect(),
        uniforms: shocks.uniforms.iter().map(|u| 1.0 - u).collect(),
        antithetic: true,
    })
}

/// Pre-sample history.
#[derive(Debug, Clone, Default)]
pub enum Warmup {
    /// 100 observations with zero return and alternating signs.
    #[default]
    Synthetic,
    Series(TickSeries),
}

pub const SYNTHETIC_WARMUP: usize = 100;

impl Warmup {
    fn columns(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Warmup::Synthetic => {
                let x = (0..SYNTHETIC_WARMUP).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
                (vec![0.0; SYNTHETIC_WARMUP], x)
            }
            Warmup::Series(s) => (s.returns().to_vec(), s.signs().to_vec()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimStep {
    pub x: f64,
    pub r: f64,
    /// Return mean net of the impact term.
    pub state: f64,
    pub mu2: f64,
    pub pi: f64,
}

/// One-step simulator over a growing history.
///
/// Also steps the linear variants, whose trade equation is
/// `x_t = mu2_t + sigma_x * Phi^{-1}(u_t)`. They are not proper DGPs and
/// only appear inside impulse-response simulations.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    params: &'a StaticParams,
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    rr: Vec<f64>,
    xr: Vec<f64>,
    sigma: f64,
    sigma_x: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(params: &'a StaticParams, r_hist: &[f64], x_hist: &[f64], extra: usize) -> Result<Self> {
        let warm = params.lags.warmup();
        if r_hist.len() < warm || x_hist.len() != r_hist.len() {
            return Err(Error::InsufficientHistory {
                t: r_hist.len().min(x_hist.len()),
                required: warm,
            });
        }
        let k = params.k();
        let mut r = Vec::with_capacity(r_hist.len() + extra);
        let mut x = Vec::with_capacity(r_hist.len() + extra);
        r.extend_from_slice(r_hist);
        x.extend_from_slice(x_hist);
        Ok(Self {
            params,
            r,
            x,
            rr: vec![0.0; k],
            xr: vec![0.0; k],
            sigma: params.sigma2.sqrt(),
            sigma_x: params.sigma2_x.sqrt(),
        })
    }

    /// Regressors for the next step: `(state, mu2)`.
    pub fn means(&mut self) -> (f64, f64) {
        let t = self.r.len();
        self.params.lags.fill(&self.r, &self.x, t, &mut self.rr, &mut self.xr);
        (self.params.state(&self.rr, &self.xr), self.params.trade_mean(&self.rr, &self.xr))
    }

    /// Draws the next trade and return. `force_x` replaces the sampled sign
    /// (nonlinear variants) or is added to the sampled trade value (linear).
    pub fn step(&mut self, b0: f64, z: f64, u: f64, force_x: Option<f64>) -> SimStep {
        let (state, mu2) = self.means();
        let (x, pi) = if self.params.variant.is_linear() {
            let noise = std_normal_quantile(u);
            let x = mu2 + self.sigma_x * noise + force_x.unwrap_or(0.0);
            (x, f64::NAN)
        } else {
            let pi = logistic(mu2);
            let x = force_x.unwrap_or(if u < pi { 1.0 } else { -1.0 });
            (x, pi)
        };
        let r = state + b0 * x + self.sigma * z;
        self.r.push(r);
        self.x.push(x);
        SimStep { x, r, state, mu2, pi }
    }
}

pub(crate) fn std_normal_quantile(u: f64) -> f64 {
    Normal::standard().inverse_cdf(u)
}

/// Simulated sample together with the impact coefficient used at each step.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Warm-up (when kept) followed by the `T` simulated trades.
    pub series: TickSeries,
    /// Number of leading warm-up observations in `series`.
    pub warmup_len: usize,
    /// Impact coefficient used at each simulated trade.
    pub b0: Vec<f64>,
    pub pi: Vec<f64>,
    pub state: Vec<f64>,
}

impl Simulation {
    /// Simulated part only.
    pub fn simulated(&self) -> TickSeries {
        self.series.slice(self.warmup_len, self.series.len())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub warmup: Warmup,
    pub keep_warmup: bool,
}

/// Simulates `t_len` trades. The impact follows the score recursion for
/// [`ScenarioKind::ScoreDriven`], stays at `params.b0` for
/// [`ScenarioKind::Constant`] and otherwise reads `scenario.values`.
pub fn simulate(
    params: &StaticParams,
    scenario: &ScenarioPath,
    t_len: usize,
    shocks: &ShockStream,
    opts: &SimOptions,
) -> Result<Simulation> {
    params.validate()?;
    if params.variant.is_linear() {
        return Err(Error::UnsupportedVariant {
            op: "simulate",
            variant: params.variant,
        });
    }
    if t_len == 0 {
        return Err(Error::InvalidArgument("T must be at least 1".into()));
    }
    if shocks.len() < t_len {
        return Err(Error::InvalidArgument(format!(
            "shock stream has {} draws for T={t_len}",
            shocks.len()
        )));
    }
    let explicit = !matches!(scenario.kind, ScenarioKind::ScoreDriven | ScenarioKind::Constant);
    if explicit && scenario.values.len() < t_len {
        return Err(Error::InvalidArgument(format!(
            "scenario path has {} values for T={t_len}",
            scenario.values.len()
        )));
    }
    if scenario.kind == ScenarioKind::ScoreDriven && !params.variant.is_score_driven() {
        return Err(Error::UnsupportedVariant {
            op: "score-driven scenario",
            variant: params.variant,
        });
    }
    let (r0, x0) = opts.warmup.columns();
    let warm = r0.len();
    let mut sim = Simulator::new(params, &r0, &x0, t_len)?;
    let mut b0_path = Vec::with_capacity(t_len);
    let mut pi = Vec::with_capacity(t_len);
    let mut state = Vec::with_capacity(t_len);
    let mut b = params.b0;
    for i in 0..t_len {
        if explicit {
            b = scenario.values[i];
        }
        let s = sim.step(b, shocks.gaussians[i], shocks.uniforms[i], None);
        b0_path.push(b);
        pi.push(s.pi);
        state.push(s.state);
        if scenario.kind == ScenarioKind::ScoreDriven {
            b = score_update(b, s.x, s.r, s.state + b * s.x, params)?;
        }
    }
    let from = if opts.keep_warmup { 0 } else { warm };
    let series = match (&opts.warmup, opts.keep_warmup) {
        (Warmup::Series(w), true) => {
            let mut out = w.clone();
            let mut next = w.indices().last().map_or(0, |i| i + 1);
            for i in warm..sim.r.len() {
                out.push(TradeEvent::new(next, sim.r[i], sim.x[i] as i8))?;
                next += 1;
            }
            out
        }
        _ => TickSeries::from_columns(&sim.r[from..], &sim.x[from..])?,
    };
    Ok(Simulation {
        series,
        warmup_len: if opts.keep_warmup { warm } else { 0 },
        b0: b0_path,
        pi,
        state,
    })
}
