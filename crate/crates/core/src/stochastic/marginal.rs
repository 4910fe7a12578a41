//! Continuous marginals with closed-form CDF, survival function and quantiles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::stochastic::StreamRng;

/// A continuous, strictly increasing marginal distribution.
///
/// `Pareto` has unit scale (support `[1, ∞)`), `Frechet` is standard
/// (support `(0, ∞)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Marginal {
    Pareto { alpha: f64 },
    Exponential { rate: f64 },
    Uniform01,
    Frechet { alpha: f64 },
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        domain(format!("{name} must be finite and > 0, got {v}"))
    }
}

fn open_prob(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        domain(format!("{name} must lie in (0, 1), got {p}"))
    }
}

impl Marginal {
    pub fn pareto(alpha: f64) -> Result<Self> {
        Ok(Self::Pareto {
            alpha: positive("pareto alpha", alpha)?,
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Ok(Self::Exponential {
            rate: positive("exponential rate", rate)?,
        })
    }

    pub fn frechet(alpha: f64) -> Result<Self> {
        Ok(Self::Frechet {
            alpha: positive("frechet alpha", alpha)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Pareto { alpha } | Self::Frechet { alpha } => positive("alpha", alpha).map(|_| ()),
            Self::Exponential { rate } => positive("rate", rate).map(|_| ()),
            Self::Uniform01 => Ok(()),
        }
    }

    /// `F(x)`; 0 below the support, 1 above it.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Pareto { alpha } => {
                if x <= 1.0 {
                    0.0
                } else {
                    -(-alpha * x.ln()).exp_m1()
                }
            }
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Self::Uniform01 => x.clamp(0.0, 1.0),
            Self::Frechet { alpha } => {
                if x <= 0.0 {
                    0.0
                } else {
                    (-x.powf(-alpha)).exp()
                }
            }
        }
    }

    /// `F̄(x) = 1 - F(x)`, evaluated without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            Self::Pareto { alpha } => {
                if x <= 1.0 {
                    1.0
                } else {
                    x.powf(-alpha)
                }
            }
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Self::Uniform01 => (1.0 - x).clamp(0.0, 1.0),
            Self::Frechet { alpha } => {
                if x <= 0.0 {
                    1.0
                } else {
                    -(-x.powf(-alpha)).exp_m1()
                }
            }
        }
    }

    /// `F^{-1}(prob)` for `prob` in (0, 1).
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        open_prob("quantile probability", prob)?;
        Ok(self.quantile_unchecked(prob))
    }

    #[inline]
    pub(crate) fn quantile_unchecked(&self, prob: f64) -> f64 {
        match *self {
            Self::Pareto { alpha } => ((-prob).ln_1p() * (-1.0 / alpha)).exp(),
            Self::Exponential { rate } => -(-prob).ln_1p() / rate,
            Self::Uniform01 => prob,
            Self::Frechet { alpha } => (-prob.ln()).powf(-1.0 / alpha),
        }
    }

    /// Inverse survival function: the level `x` with `F̄(x) = tail`.
    pub fn isf(&self, tail: f64) -> Result<f64> {
        open_prob("tail probability", tail)?;
        Ok(self.isf_unchecked(tail))
    }

    #[inline(always)]
    pub(crate) fn isf_unchecked(&self, tail: f64) -> f64 {
        match *self {
            Self::Pareto { alpha } => {
                if alpha == 1.0 {
                    1.0 / tail
                } else {
                    tail.powf(-1.0 / alpha)
                }
            }
            Self::Exponential { rate } => -tail.ln() / rate,
            Self::Uniform01 => 1.0 - tail,
            Self::Frechet { alpha } => (-(-tail).ln_1p()).powf(-1.0 / alpha),
        }
    }

    /// Unconditional draw.
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        self.isf_unchecked(rng.open01())
    }

    /// Draw from the law conditioned on `X > u` (inverse CDF on `(F(u), 1)`).
    pub fn sample_tail(&self, u: f64, rng: &mut StreamRng) -> Result<f64> {
        let tail = self.sf(u);
        if tail <= 0.0 {
            return domain(format!("F({u}) = 1: no mass above the level"));
        }
        loop {
            let x = self.isf_unchecked(tail * rng.open01());
            if x > u {
                return Ok(x);
            }
        }
    }

    /// Draw from the law conditioned on `X <= u`.
    pub fn sample_below(&self, u: f64, rng: &mut StreamRng) -> Result<f64> {
        let head = self.cdf(u);
        if head <= 0.0 {
            return domain(format!("F({u}) = 0: no mass below the level"));
        }
        loop {
            let v = head * rng.open01();
            let x = self.quantile_unchecked(v);
            if x <= u {
                return Ok(x);
            }
        }
    }
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pareto { alpha } => write!(f, "pareto:alpha={alpha:?}"),
            Self::Exponential { rate } => write!(f, "exp:rate={rate:?}"),
            Self::Uniform01 => write!(f, "uniform01"),
            Self::Frechet { alpha } => write!(f, "frechet:alpha={alpha:?}"),
        }
    }
}

const DISCRETE_FAMILIES: &[&str] = &[
    "bernoulli",
    "binomial",
    "geometric",
    "poisson",
    "negbinomial",
    "discrete",
    "dirac",
    "categorical",
];

fn parse_param(body: &str, name: &str) -> Result<f64> {
    let (key, value) = body
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected `{name}=<value>`, got `{body}`")))?;
    if key.trim() != name {
        return Err(Error::Parse(format!("unknown parameter `{}`, expected `{name}`", key.trim())));
    }
    value
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad value for `{name}`: {e}")))
}

impl FromStr for Marginal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, body) = match s.split_once(':') {
            Some((f, b)) => (f.trim(), Some(b.trim())),
            None => (s, None),
        };
        let family = family.to_ascii_lowercase();
        match (family.as_str(), body) {
            ("pareto", Some(b)) => Marginal::pareto(parse_param(b, "alpha")?),
            ("exp" | "exponential", Some(b)) => Marginal::exponential(parse_param(b, "rate")?),
            ("frechet", Some(b)) => Marginal::frechet(parse_param(b, "alpha")?),
            ("uniform01", None) => Ok(Marginal::Uniform01),
            (f, _) if DISCRETE_FAMILIES.contains(&f) => Err(Error::Config(format!(
                "discrete marginal `{f}` rejected: exceedance thresholds need a continuous law"
            ))),
            _ => Err(Error::Parse(format!("unknown marginal `{s}`"))),
        }
    }
}

impl TryFrom<String> for Marginal {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Marginal> for String {
    fn from(m: Marginal) -> Self {
        m.to_string()
    }
}

/// Law of the maximum of `copies` i.i.d. draws from `base`: `F^copies`.
///
/// This is the marginal of a moving-maximum scenery value; with `copies = 1`
/// it is `base` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxMarginal {
    pub base: Marginal,
    pub copies: u32,
}

impl MaxMarginal {
    pub fn new(base: Marginal, copies: u32) -> Self {
        assert!(copies >= 1, "a maximum needs at least one copy");
        Self { base, copies }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.base.cdf(x).powi(self.copies as i32)
    }

    pub fn sf(&self, x: f64) -> f64 {
        if self.copies == 1 {
            return self.base.sf(x);
        }
        let c = self.copies as f64;
        -(c * (-self.base.sf(x)).ln_1p()).exp_m1()
    }

    /// Survival probability of one underlying copy at the level with
    /// max-survival `tail`.
    pub fn base_tail(&self, tail: f64) -> f64 {
        if self.copies == 1 {
            tail
        } else {
            -((-tail).ln_1p() / self.copies as f64).exp_m1()
        }
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        open_prob("quantile probability", prob)?;
        self.base.quantile(prob.powf(1.0 / self.copies as f64))
    }

    pub fn isf(&self, tail: f64) -> Result<f64> {
        open_prob("tail probability", tail)?;
        self.base.isf(self.base_tail(tail))
    }
}
