//! Model variants, static parameters and the conditional means.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lags::{AggregationSpec, LagAggregates, LagSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Linear structural VAR on raw lags.
    H,
    /// Linear structural VAR on aggregated lags.
    AH,
    /// Logistic trade equation on raw lags.
    MH,
    /// Logistic trade equation on aggregated lags, constant impact.
    AMH,
    /// AMH with autoregressive score-driven impact.
    SdamhAr,
    /// AMH with integrated score-driven impact.
    SdamhInt,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::H,
        Variant::AH,
        Variant::MH,
        Variant::AMH,
        Variant::SdamhAr,
        Variant::SdamhInt,
    ];

    pub fn is_linear(self) -> bool {
        matches!(self, Variant::H | Variant::AH)
    }

    pub fn is_score_driven(self) -> bool {
        matches!(self, Variant::SdamhAr | Variant::SdamhInt)
    }

    pub fn is_aggregated(self) -> bool {
        !matches!(self, Variant::H | Variant::MH)
    }

    pub fn default_lags(self) -> LagSpec {
        if self.is_aggregated() {
            LagSpec::Aggregated(AggregationSpec::default())
        } else {
            LagSpec::Raw { p: 5 }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::H => "H",
            Variant::AH => "AH",
            Variant::MH => "MH",
            Variant::AMH => "AMH",
            Variant::SdamhAr => "SDAMH-AR",
            Variant::SdamhInt => "SDAMH-INT",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .or(match norm.as_str() {
                "SD-AR" => Some(Variant::SdamhAr),
                "SD-INT" | "SDAMH" => Some(Variant::SdamhInt),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

/// Constant coefficients of a model variant.
///
/// The lag coefficient vectors have one entry per regressor of `lags`:
/// `[lag 1, short aggregate, long aggregate]` for aggregated variants and
/// `[lag 1, ..., lag p]` for raw variants. `b0` is the constant impact for
/// static variants and the initial value `b0_1` of the recursion for
/// score-driven ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticParams {
    pub variant: Variant,
    pub lags: LagSpec,
    pub mu1: f64,
    pub mu2: f64,
    pub a: Vec<f64>,
    pub b0: f64,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub sigma2: f64,
    /// Working variance of the linear trade equation (H and AH only).
    pub sigma2_x: f64,
    pub omega: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl StaticParams {
    /// All coefficients zero, unit variances, no score dynamics.
    pub fn zeros(variant: Variant) -> Self {
        let lags = variant.default_lags();
        let k = lags.k();
        let mut p = Self {
            variant,
            lags,
            mu1: 0.0,
            mu2: 0.0,
            a: vec![0.0; k],
            b0: 0.0,
            b: vec![0.0; k],
            c: vec![0.0; k],
            d: vec![0.0; k],
            sigma2: 1.0,
            sigma2_x: 1.0,
            omega: 0.0,
            beta: 0.0,
            alpha: 0.0,
        };
        if variant == Variant::SdamhInt {
            p.beta = 1.0;
        }
        p
    }

    pub fn k(&self) -> usize {
        self.lags.k()
    }

    /// Same coefficients under another variant, resetting the score-dynamics
    /// coefficients to that variant's fixed values.
    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        if variant.is_aggregated() != self.variant.is_aggregated() {
            return Err(Error::InvalidParams(format!(
                "cannot reinterpret {} coefficients as {}",
                self.variant, variant
            )));
        }
        let mut p = self.clone();
        p.variant = variant;
        match variant {
            Variant::SdamhInt => {
                p.omega = 0.0;
                p.beta = 1.0;
            }
            Variant::SdamhAr => {}
            _ => {
                p.omega = 0.0;
                p.beta = 0.0;
                p.alpha = 0.0;
            }
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.lags.validate()?;
        if self.variant.is_aggregated() != matches!(self.lags, LagSpec::Aggregated(_)) {
            return Err(Error::InvalidParams(format!(
                "variant {} does not match lag structure {:?}",
                self.variant, self.lags
            )));
        }
        let k = self.k();
        for (name, v) in [("a", &self.a), ("b", &self.b), ("c", &self.c), ("d", &self.d)] {
            if v.len() != k {
                return Err(Error::InvalidParams(format!(
                    "coefficient vector `{name}` has {} entries, expected {k}",
                    v.len()
                )));
            }
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.variant.is_linear() && !(self.sigma2_x > 0.0 && self.sigma2_x.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "sigma2_x must be positive, got {}",
                self.sigma2_x
            )));
        }
        match self.variant {
            Variant::SdamhInt if self.omega != 0.0 || self.beta != 1.0 => {
                return Err(Error::InvalidParams(
                    "SDAMH-INT requires omega = 0 and beta = 1".into(),
                ))
            }
            v if !v.is_score_driven() && self.alpha != 0.0 => {
                return Err(Error::InvalidParams(format!("{v} requires alpha = 0")));
            }
            _ => {}
        }
        let all_finite = [self.mu1, self.mu2, self.b0, self.omega, self.beta, self.alpha]
            .iter()
            .chain(self.a.iter())
            .chain(self.b.iter())
            .chain(self.c.iter())
            .chain(self.d.iter())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Names of the lag coefficients of family `prefix` (`a`, `b`, `c`, `d`).
    pub fn lag_names(&self, prefix: char) -> Vec<String> {
        match self.lags {
            LagSpec::Aggregated(_) => vec![
                format!("{prefix}1"),
                format!("{prefix}10bar"),
                format!("{prefix}100bar"),
            ],
            LagSpec::Raw { p } => (1..=p).map(|i| format!("{prefix}{i}")).collect(),
        }
    }

    /// Every coefficient of the variant with its name, in a fixed order.
    pub fn named_values(&self) -> Vec<(String, f64)> {
        let mut out = vec![("mu1".to_string(), self.mu1), ("mu2".to_string(), self.mu2)];
        out.extend(self.lag_names('a').into_iter().zip(self.a.iter().copied()));
        out.push(("b0".to_string(), self.b0));
        out.extend(self.lag_names('b').into_iter().zip(self.b.iter().copied()));
        out.extend(self.lag_names('c').into_iter().zip(self.c.iter().copied()));
        out.extend(self.lag_names('d').into_iter().zip(self.d.iter().copied()));
        out.push(("sigma2".to_string(), self.sigma2));
        if self.variant.is_linear() {
            out.push(("sigma2_x".to_string(), self.sigma2_x));
        }
        out.push(("omega".to_string(), self.omega));
        out.push(("beta".to_string(), self.beta));
        out.push(("alpha".to_string(), self.alpha));
        out
    }

    /// Looks a coefficient up by the name used in [`named_values`].
    ///
    /// [`named_values`]: StaticParams::named_values
    pub fn get(&self, name: &str) -> Option<f64> {
        self.named_values().into_iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let unknown = || Error::InvalidArgument(format!("unknown parameter `{name}`"));
        match name {
            "mu1" => self.mu1 = value,
            "mu2" => self.mu2 = value,
            "b0" => self.b0 = value,
            "sigma2" => self.sigma2 = value,
            "sigma2_x" => self.sigma2_x = value,
            "omega" => self.omega = value,
            "beta" => self.beta = value,
            "alpha" => self.alpha = value,
            _ => {
                let family = name.chars().next().ok_or_else(unknown)?;
                let pos = self
                    .lag_names(family)
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(unknown)?;
                let v = match family {
                    'a' => &mut self.a,
                    'b' => &mut self.b,
                    'c' => &mut self.c,
                    'd' => &mut self.d,
                    _ => return Err(unknown()),
                };
                v[pos] = value;
            }
        }
        Ok(())
    }

    /// `mu1 + a . r_regs + b . x_regs`: the conditional return mean without
    /// the contemporaneous impact term.
    #[inline]
    pub fn state(&self, r_regs: &[f64], x_regs: &[f64]) -> f64 {
        let mut s = self.mu1;
        for j in 0..self.a.len() {
            s += self.a[j] * r_regs[j] + self.b[j] * x_regs[j];
        }
        s
    }

    /// `mu2 + c . r_regs + d . x_regs` on the logit (or linear) scale.
    #[inline]
    pub fn trade_mean(&self, r_regs: &[f64], x_regs: &[f64]) -> f64 {
        let mut s = self.mu2;
        for j in 0..self.c.len() {
            s += self.c[j] * r_regs[j] + self.d[j] * x_regs[j];
        }
        s
    }

    /// Sum of return-on-return coefficients.
    pub fn return_persistence(&self) -> f64 {
        self.a.iter().sum()
    }
}

/// Inverse logit evaluated without overflow for large `|z|`.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalMeans {
    pub mu1_t: f64,
    pub mu2_t: f64,
    /// Conditional return mean net of the contemporaneous impact.
    pub state_t: f64,
    pub pi_t: f64,
}

pub fn conditional_means(params: &StaticParams, b0_t: f64, lags: &LagAggregates, x_t: f64) -> ConditionalMeans {
    conditional_means_from_regs(params, b0_t, &lags.r_array(), &lags.x_array(), x_t)
}

/// Same as [`conditional_means`] for any lag structure.
pub fn conditional_means_from_regs(
    params: &StaticParams,
    b0_t: f64,
    r_regs: &[f64],
    x_regs: &[f64],
    x_t: f64,
) -> ConditionalMeans {
    let state_t = params.state(r_regs, x_regs);
    let mu2_t = params.trade_mean(r_regs, x_regs);
    ConditionalMeans {
        mu1_t: state_t + b0_t * x_t,
        mu2_t,
        state_t,
        pi_t: logistic(mu2_t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lags(vals: [f64; 6]) -> LagAggregates {
        LagAggregates {
            r_lag1: vals[0],
            r_l1: vals[1],
            r_l2: vals[2],
            x_lag1: vals[3],
            x_l1: vals[4],
            x_l2: vals[5],
        }
    }

    #[test]
    fn zero_logit_mean_is_fair_coin() {
        let p = StaticParams::zeros(Variant::AMH);
        let cm = conditional_means(&p, 0.0, &lags([0.3, 0.1, -0.2, 1.0, 0.4, -0.1]), 1.0);
        assert_eq!(cm.pi_t, 0.5);
    }

    #[test]
    fn impact_and_intercept_substitution() {
        let mut p = StaticParams::zeros(Variant::AMH);
        p.mu1 = 1e-3;
        p.b0 = 5e-3;
        let cm = conditional_means(&p, p.b0, &lags([0.0; 6]), 1.0);
        assert!((cm.mu1_t - 6e-3).abs() < 1e-18);
        assert_eq!(cm.state_t, 1e-3);
    }

    #[test]
    fn logistic_is_stable_in_the_tails() {
        assert_eq!(logistic(800.0), 1.0);
        assert_eq!(logistic(-800.0), 0.0);
        assert!(logistic(-745.0) > 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn variant_round_trip_and_aliases() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("sd-int".parse::<Variant>().unwrap(), Variant::SdamhInt);
        assert!("foo".parse::<Variant>().is_err());
    }

    #[test]
    fn validation_enforces_variant_constraints() {
        let mut p = StaticParams::zeros(Variant::SdamhInt);
        assert!(p.validate().is_ok());
        p.beta = 0.9;
        assert!(p.validate().is_err());
        let mut p = StaticParams::zeros(Variant::AMH);
        p.alpha = 0.1;
        assert!(p.validate().is_err());
        let mut p = StaticParams::zeros(Variant::AMH);
        p.sigma2 = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn names_set_and_get() {
        let mut p = StaticParams::zeros(Variant::SdamhInt);
        p.set("c10bar", -1.7).unwrap();
        p.set("b100bar", 1e-6).unwrap();
        assert_eq!(p.c[1], -1.7);
        assert_eq!(p.get("b100bar"), Some(1e-6));
        assert!(p.set("zz", 1.0).is_err());
        let names: Vec<String> = p.named_values().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 19);
        let mh = StaticParams::zeros(Variant::MH);
        assert!(mh.lag_names('d').contains(&"d5".to_string()));
    }

    proptest! {
        #[test]
        fn state_plus_impact_is_return_mean(
            vals in proptest::array::uniform6(-1.0f64..1.0),
            coefs in proptest::collection::vec(-2.0f64..2.0, 14),
            b0 in -0.1f64..0.1,
            buy in any::<bool>(),
        ) {
            let mut p = StaticParams::zeros(Variant::AMH);
            p.mu1 = coefs[0];
            p.mu2 = coefs[1];
            p.a = coefs[2..5].to_vec();
            p.b = coefs[5..8].to_vec();
            p.c = coefs[8..11].to_vec();
            p.d = coefs[11..14].to_vec();
            let x = if buy { 1.0 } else { -1.0 };
            let cm = conditional_means(&p, b0, &lags(vals), x);
            prop_assert_eq!(cm.state_t + b0 * x, cm.mu1_t);
            prop_assert!(cm.pi_t > 0.0 && cm.pi_t < 1.0);
        }

        #[test]
        fn logistic_symmetric_and_monotone(z in -700.0f64..700.0, dz in 1e-3f64..5.0) {
            prop_assert!((logistic(-z) - (1.0 - logistic(z))).abs() < 1e-15);
            prop_assert!(logistic(z + dz) >= logistic(z));
        }
    }
}
