//! Random sceneries over ℤ: i.i.d. fields and k-dependent moving maxima,
//! evaluated lazily per site, plus exact sampling conditioned on an exceedance
//! at the origin.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{domain, Error, Result};
use crate::stochastic::{site_counter, Marginal, MaxMarginal, RngStream, StreamRng, StreamTable};
use crate::walk::WalkPath;

const SITE_STREAM: u64 = 0x5c3e_0001;

/// Shape of the field.
///
/// `MovingMax { k, y }` is `ξ(s) = max(Y_s, ..., Y_{s+k})` with `Y` i.i.d. `y`;
/// `Iid(m)` is the `k = 0` case with `Y = ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SceneryKind {
    Iid(Marginal),
    MovingMax { k: u32, y: Marginal },
}

impl SceneryKind {
    pub fn window(&self) -> u32 {
        match self {
            Self::Iid(_) => 0,
            Self::MovingMax { k, .. } => *k,
        }
    }

    /// Law of the primitive i.i.d. field.
    pub fn primitive_marginal(&self) -> Marginal {
        match *self {
            Self::Iid(m) => m,
            Self::MovingMax { y, .. } => y,
        }
    }

    /// Extremal index of the field itself, `1 / (k + 1)`.
    pub fn extremal_index(&self) -> f64 {
        1.0 / (self.window() as f64 + 1.0)
    }
}

impl fmt::Display for SceneryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Iid(m) => write!(f, "iid({m})"),
            Self::MovingMax { k, y } => write!(f, "movingmax(k={k}, {y})"),
        }
    }
}

impl FromStr for SceneryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Parse(format!("expected `iid(...)` or `movingmax(...)`, got `{s}`")))?;
        if !s.ends_with(')') {
            return Err(Error::Parse(format!("unbalanced parentheses in `{s}`")));
        }
        let head = s[..open].trim().to_ascii_lowercase();
        let inner = &s[open + 1..s.len() - 1];
        match head.as_str() {
            "iid" => Ok(Self::Iid(inner.parse()?)),
            "movingmax" => {
                let (k_part, m_part) = inner
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("expected `movingmax(k=<int>, <marginal>)`, got `{s}`")))?;
                let k = k_part
                    .trim()
                    .strip_prefix("k")
                    .and_then(|r| r.trim_start().strip_prefix('='))
                    .ok_or_else(|| Error::Parse(format!("expected `k=<int>`, got `{}`", k_part.trim())))?
                    .trim()
                    .parse::<u32>()
                    .map_err(|e| Error::Parse(format!("bad window k: {e}")))?;
                if k == 0 {
                    return Err(Error::Config("movingmax needs k >= 1; use iid(...) for k = 0".into()));
                }
                Ok(Self::MovingMax { k, y: m_part.parse()? })
            }
            other => Err(Error::Parse(format!("unknown scenery `{other}`"))),
        }
    }
}

impl TryFrom<String> for SceneryKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SceneryKind> for String {
    fn from(k: SceneryKind) -> String {
        k.to_string()
    }
}

/// A scenery realization: a pure function of `(seed, site)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneryModel {
    pub kind: SceneryKind,
    pub seed: u64,
}

/// Anything that assigns a value to every site of ℤ.
pub trait Scenery: Sync {
    fn kind(&self) -> &SceneryKind;

    /// Value of the primitive i.i.d. field (`Y_s`; `ξ(s)` for i.i.d. sceneries).
    fn primitive(&self, site: i64) -> f64;

    fn value(&self, site: i64) -> f64 {
        let k = self.kind().window() as i64;
        (site..=site + k)
            .map(|t| self.primitive(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `ξ(lo), ..., ξ(hi)` into `out`.
    fn fill(&self, lo: i64, hi: i64, out: &mut Vec<f64>) {
        out.clear();
        let k = self.kind().window() as i64;
        if k == 0 {
            out.extend((lo..=hi).map(|s| self.primitive(s)));
            return;
        }
        let ys: Vec<f64> = (lo..=hi + k).map(|s| self.primitive(s)).collect();
        out.extend(
            ys.windows(k as usize + 1)
                .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        );
    }
}

impl SceneryModel {
    pub fn new(kind: SceneryKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { kind: self.kind, seed }
    }

    pub fn window(&self) -> u32 {
        self.kind.window()
    }

    fn table(&self) -> StreamTable {
        RngStream::new(self.seed, SITE_STREAM).table()
    }

    /// Reusable evaluator with the per-model stream key precomputed.
    pub fn evaluator(&self) -> SceneryEval {
        SceneryEval {
            kind: self.kind,
            table: self.table(),
        }
    }
}

impl Scenery for SceneryModel {
    fn kind(&self) -> &SceneryKind {
        &self.kind
    }

    fn primitive(&self, site: i64) -> f64 {
        self.kind
            .primitive_marginal()
            .isf_unchecked(self.table().uniform_at(site_counter(site)))
    }
}

/// [`SceneryModel`] with its stream key cached.
#[derive(Debug, Clone, Copy)]
pub struct SceneryEval {
    kind: SceneryKind,
    table: StreamTable,
}

impl Scenery for SceneryEval {
    fn kind(&self) -> &SceneryKind {
        &self.kind
    }

    #[inline(always)]
    fn primitive(&self, site: i64) -> f64 {
        self.kind
            .primitive_marginal()
            .isf_unchecked(self.table.uniform_at(site_counter(site)))
    }
}

pub fn scenery_value(model: &SceneryModel, site: i64) -> f64 {
    model.value(site)
}

/// Marginal law of `ξ(0)`: `F` for i.i.d., `F_Y^{k+1}` for moving maxima.
pub fn scenery_marginal(model: &SceneryModel) -> MaxMarginal {
    MaxMarginal::new(model.kind.primitive_marginal(), model.window() + 1)
}

/// The composed sequence `ξ(S_0), ..., ξ(S_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub values: Vec<f64>,
}

impl Observations {
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }
}

pub fn compose<S: Scenery + ?Sized>(path: &WalkPath, scenery: &S) -> Observations {
    let (lo, hi) = path.extent();
    let mut sites = Vec::new();
    scenery.fill(lo, hi, &mut sites);
    Observations {
        values: path
            .positions()
            .iter()
            .map(|&s| sites[(s - lo) as usize])
            .collect(),
    }
}

/// A scenery conditioned on `ξ(0) > u`: the primitive values at sites
/// `0..=k` are resampled, everything else comes from the base realization.
#[derive(Debug, Clone)]
pub struct ConditionedScenery {
    base: SceneryModel,
    eval: SceneryEval,
    /// Primitive values at sites `0..=k`.
    pub window_values: Vec<f64>,
    /// Number of primitive values above the level among sites `0..=k`.
    pub exceeders: u32,
}

impl ConditionedScenery {
    pub fn base(&self) -> &SceneryModel {
        &self.base
    }
}

impl Scenery for ConditionedScenery {
    fn kind(&self) -> &SceneryKind {
        &self.base.kind
    }

    #[inline]
    fn primitive(&self, site: i64) -> f64 {
        if site >= 0 && (site as usize) < self.window_values.len() {
            self.window_values[site as usize]
        } else {
            self.eval.primitive(site)
        }
    }

    fn fill(&self, lo: i64, hi: i64, out: &mut Vec<f64>) {
        out.clear();
        let eval = self.eval;
        let k = self.base.window() as i64;
        let prim = |s: i64| {
            if s >= 0 && s <= k {
                self.window_values[s as usize]
            } else {
                eval.primitive(s)
            }
        };
        if k == 0 {
            out.extend((lo..=hi).map(prim));
            return;
        }
        let ys: Vec<f64> = (lo..=hi + k).map(prim).collect();
        out.extend(
            ys.windows(k as usize + 1)
                .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        );
    }
}

/// Draws `B ~ Binomial(trials, tail)` conditioned on `B >= 1`.
pub fn sample_exceed_count(trials: u32, tail: f64, rng: &mut StreamRng) -> u32 {
    if trials == 1 {
        return 1;
    }
    let t = trials as u64;
    let log_s = tail.ln();
    let log_f = (-tail).ln_1p();
    let weights: Vec<f64> = (1..=t)
        .map(|b| (ln_binomial(t, b) + b as f64 * log_s + (t - b) as f64 * log_f).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut v = rng.open01() * total;
    for (i, w) in weights.iter().enumerate() {
        if v < *w {
            return i as u32 + 1;
        }
        v -= w;
    }
    trials
}

/// Realizes the scenery conditioned on `{ξ(0) > u}` by local surgery on the
/// primitive values that determine `ξ(0)`.
pub fn sample_conditional_window(model: &SceneryModel, u: f64, stream: &RngStream) -> Result<ConditionedScenery> {
    let marginal = scenery_marginal(model);
    if marginal.sf(u) <= 0.0 {
        return domain(format!("P(ξ(0) > {u}) = 0: cannot condition on an exceedance"));
    }
    let y = model.kind.primitive_marginal();
    let slots = model.window() + 1;
    let mut rng = stream.cursor();
    let exceeders = sample_exceed_count(slots, y.sf(u), &mut rng);
    // Partial Fisher–Yates: the first `exceeders` entries are the exceeding slots.
    let mut order: Vec<usize> = (0..slots as usize).collect();
    for i in 0..exceeders as usize {
        let j = i + (rand::RngCore::next_u64(&mut rng) % (order.len() - i) as u64) as usize;
        order.swap(i, j);
    }
    let mut window_values = vec![0.0; slots as usize];
    for (rank, &slot) in order.iter().enumerate() {
        window_values[slot] = if rank < exceeders as usize {
            y.sample_tail(u, &mut rng)?
        } else {
            y.sample_below(u, &mut rng)?
        };
    }
    Ok(ConditionedScenery {
        base: *model,
        eval: model.evaluator(),
        window_values,
        exceeders,
    })
}
