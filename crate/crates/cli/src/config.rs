//! Experiment configuration: a text file of `key = value` lines.
//!
//! ```text
//! # i.i.d. Pareto scenery, drift 1/2
//! p = 0.75
//! scenery = iid(pareto:alpha=1.0)
//! tau = 1
//! n = 1e4
//! replicates = 1000
//! seed = 42
//! estimators = logmax, clusters
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rws_core::diagnostics::EllRule;
use rws_core::scenery::SceneryKind;
use rws_core::walk::WalkParams;
use serde::{Deserialize, Serialize};

/// Validation failure tied to a config line when one is known.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}, field `{}`: {}", self.field, self.message),
            None => write!(f, "field `{}`: {}", self.field, self.message),
        }
    }
}

fn err(line: Option<usize>, field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Logmax,
    Runs,
    Clusters,
    Dk,
    Alpha,
    Concentration,
    Limits,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::Logmax,
        Estimator::Runs,
        Estimator::Clusters,
        Estimator::Dk,
        Estimator::Alpha,
        Estimator::Concentration,
        Estimator::Limits,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Logmax => "logmax",
            Estimator::Runs => "runs",
            Estimator::Clusters => "clusters",
            Estimator::Dk => "dk",
            Estimator::Alpha => "alpha",
            Estimator::Concentration => "concentration",
            Estimator::Limits => "limits",
        }
    }

    pub fn is_diagnostic(&self) -> bool {
        matches!(self, Estimator::Dk | Estimator::Alpha | Estimator::Concentration)
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown estimator `{s}`"))
    }
}

/// Block horizon for the conditional cluster counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockRule {
    /// `⌊n^0.7⌋`.
    Auto,
    Fixed(usize),
}

impl BlockRule {
    pub fn at(&self, n: usize) -> usize {
        match *self {
            BlockRule::Auto => rws_core::evt::default_block(n),
            BlockRule::Fixed(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub p: WalkParams,
    pub scenery: SceneryKind,
    pub tau: f64,
    pub n: Vec<usize>,
    pub k_n: BlockRule,
    pub replicates: u64,
    pub cluster_replicates: u64,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    /// Largest cluster size tabulated.
    pub j_max: usize,
    /// Absolute tolerance for extremal-index comparisons.
    pub theta_tolerance: f64,
    /// Total-variation tolerance for cluster-law comparisons.
    pub tv_tolerance: f64,
    /// Order of the `D^(k)` statistic on the composed sequence.
    pub dk_order: usize,
    /// Lag for `α̂_{n,ℓ}`; `None` means `⌈n^0.9⌉`.
    pub alpha_lag: Option<usize>,
    pub beta: f64,
    pub ell_rule: EllRule,
    /// Support bound for the exact count law.
    pub count_max: usize,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for every optional field.
    pub fn new(p: WalkParams, scenery: SceneryKind) -> Self {
        Self {
            p,
            scenery,
            tau: 1.0,
            n: vec![10_000],
            k_n: BlockRule::Auto,
            replicates: 1_000,
            cluster_replicates: 10_000,
            seed: 1,
            estimators: vec![Estimator::Logmax],
            j_max: 20,
            theta_tolerance: 0.03,
            tv_tolerance: 0.05,
            dk_order: 2,
            alpha_lag: None,
            beta: 0.75,
            ell_rule: EllRule::Power(0.9),
            count_max: 40,
            output: None,
        }
    }

    /// Lossless text form accepted by [`parse_config`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        line("p", format!("{:?}", self.p.p()));
        line("scenery", self.scenery.to_string());
        line("tau", format!("{:?}", self.tau));
        line("n", join(self.n.iter()));
        line(
            "k_n",
            match self.k_n {
                BlockRule::Auto => "auto".into(),
                BlockRule::Fixed(k) => k.to_string(),
            },
        );
        line("replicates", self.replicates.to_string());
        line("cluster_replicates", self.cluster_replicates.to_string());
        line("seed", self.seed.to_string());
        line("estimators", join(self.estimators.iter().map(|e| e.name())));
        line("j_max", self.j_max.to_string());
        line("theta_tolerance", format!("{:?}", self.theta_tolerance));
        line("tv_tolerance", format!("{:?}", self.tv_tolerance));
        line("dk_order", self.dk_order.to_string());
        line(
            "alpha_lag",
            self.alpha_lag.map_or("auto".into(), |l| l.to_string()),
        );
        line("beta", format!("{:?}", self.beta));
        line(
            "ell_rule",
            match self.ell_rule {
                EllRule::Power(e) => format!("pow:{e:?}"),
                EllRule::Constant(c) => format!("const:{c}"),
            },
        );
        line("count_max", self.count_max.to_string());
        if let Some(o) = &self.output {
            line("output", o.display().to_string());
        }
        out
    }

    /// Cross-field checks on an already-built config.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_at(&|_| None)
    }

    fn validate_at(&self, at: &dyn Fn(&str) -> Option<usize>) -> Result<(), ConfigError> {
        if !(self.tau > 0.0) {
            return Err(err(at("tau"), "tau", "must be > 0"));
        }
        if self.n.is_empty() {
            return Err(err(at("n"), "n", "at least one horizon is required"));
        }
        for &n in &self.n {
            if n < 2 {
                return Err(err(at("n"), "n", format!("horizon {n} is too small")));
            }
            if self.tau >= n as f64 {
                return Err(err(at("tau"), "tau", format!("tau = {} must be < n = {n}", self.tau)));
            }
            let k = self.k_n.at(n);
            if k >= n {
                return Err(err(at("k_n"), "k_n", format!("k_n = {k} must be < n = {n}")));
            }
            if let Some(l) = self.alpha_lag {
                if l == 0 || l >= n {
                    return Err(err(at("alpha_lag"), "alpha_lag", format!("need 1 <= lag < n = {n}")));
                }
            }
        }
        if self.replicates == 0 {
            return Err(err(at("replicates"), "replicates", "must be >= 1"));
        }
        if self.cluster_replicates == 0 {
            return Err(err(at("cluster_replicates"), "cluster_replicates", "must be >= 1"));
        }
        if self.j_max < 2 {
            return Err(err(at("j_max"), "j_max", "must be >= 2"));
        }
        if self.dk_order == 0 {
            return Err(err(at("dk_order"), "dk_order", "must be >= 1"));
        }
        if !(self.beta > 0.5 && self.beta < 1.0) {
            return Err(err(at("beta"), "beta", "must lie in (1/2, 1)"));
        }
        if self.estimators.is_empty() {
            return Err(err(at("estimators"), "estimators", "at least one estimator is required"));
        }
        Ok(())
    }
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Parses `1e4`, `10000` or `1_000` as an exact nonnegative integer.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let s = s.trim().replace('_', "");
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(63) {
        Ok(f as u64)
    } else {
        Err(format!("`{s}` is not a nonnegative integer"))
    }
}

pub fn parse_count_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|x| parse_count(x).map(|v| v as usize))
        .collect()
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

fn parse_ell_rule(s: &str) -> Result<EllRule, String> {
    if let Some(e) = s.strip_prefix("pow:") {
        let e = parse_f64(e)?;
        if !(e > 0.0 && e < 1.0) {
            return Err("power exponent must lie in (0, 1)".into());
        }
        return Ok(EllRule::Power(e));
    }
    if let Some(c) = s.strip_prefix("const:") {
        return Ok(EllRule::Constant(parse_count(c)? as usize));
    }
    Err(format!("`{s}`: expected pow:<e> or const:<c>"))
}

/// Parses and validates a config file body.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut seen: Vec<(String, usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(Some(lineno), line, "expected `key = value`"))?;
        let key = key.trim().to_string();
        if seen.iter().any(|(k, _, _)| *k == key) {
            return Err(err(Some(lineno), &key, "duplicate key"));
        }
        seen.push((key, lineno, value.trim().to_string()));
    }
    const KNOWN: [&str; 18] = [
        "p",
        "scenery",
        "tau",
        "n",
        "k_n",
        "replicates",
        "cluster_replicates",
        "seed",
        "estimators",
        "j_max",
        "theta_tolerance",
        "tv_tolerance",
        "dk_order",
        "alpha_lag",
        "beta",
        "ell_rule",
        "count_max",
        "output",
    ];
    if let Some((k, l, _)) = seen.iter().find(|(k, _, _)| !KNOWN.contains(&k.as_str())) {
        return Err(err(Some(*l), k, "unknown key"));
    }
    let get = |k: &str| seen.iter().find(|(key, _, _)| key == k).map(|(_, l, v)| (*l, v.as_str()));
    let line_of = |k: &str| get(k).map(|(l, _)| l);
    let field = |k: &str, e: String| err(line_of(k), k, e);

    let (pl, pv) = get("p").ok_or_else(|| err(None, "p", "missing required key"))?;
    let p = parse_f64(pv).map_err(|e| err(Some(pl), "p", e))?;
    let p = WalkParams::new(p).map_err(|e| err(Some(pl), "p", e.to_string()))?;
    let (sl, sv) = get("scenery").ok_or_else(|| err(None, "scenery", "missing required key"))?;
    let scenery: SceneryKind = sv.parse().map_err(|e: rws_core::Error| err(Some(sl), "scenery", e.to_string()))?;

    let mut cfg = ExperimentConfig::new(p, scenery);
    if let Some((_, v)) = get("tau") {
        cfg.tau = parse_f64(v).map_err(|e| field("tau", e))?;
    }
    if let Some((_, v)) = get("n") {
        cfg.n = parse_count_list(v).map_err(|e| field("n", e))?;
    }
    if let Some((_, v)) = get("k_n") {
        cfg.k_n = if v == "auto" {
            BlockRule::Auto
        } else {
            BlockRule::Fixed(parse_count(v).map_err(|e| field("k_n", e))? as usize)
        };
    }
    let count = |k: &str| -> Result<Option<u64>, ConfigError> {
        get(k)
            .map(|(_, v)| parse_count(v).map_err(|e| field(k, e)))
            .transpose()
    };
    if let Some(v) = count("replicates")? {
        cfg.replicates = v;
    }
    if let Some(v) = count("cluster_replicates")? {
        cfg.cluster_replicates = v;
    }
    if let Some(v) = count("seed")? {
        cfg.seed = v;
    }
    if let Some(v) = count("j_max")? {
        cfg.j_max = v as usize;
    }
    if let Some(v) = count("dk_order")? {
        cfg.dk_order = v as usize;
    }
    if let Some(v) = count("count_max")? {
        cfg.count_max = v as usize;
    }
    if let Some((_, v)) = get("estimators") {
        let mut set = BTreeSet::new();
        for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            set.insert(name.parse::<Estimator>().map_err(|e| field("estimators", e))?);
        }
        cfg.estimators = set.into_iter().collect();
    }
    for (k, slot) in [
        ("theta_tolerance", &mut cfg.theta_tolerance),
        ("tv_tolerance", &mut cfg.tv_tolerance),
        ("beta", &mut cfg.beta),
    ] {
        if let Some((_, v)) = get(k) {
            *slot = parse_f64(v).map_err(|e| field(k, e))?;
        }
    }
    if let Some((_, v)) = get("alpha_lag") {
        cfg.alpha_lag = if v == "auto" {
            None
        } else {
            Some(parse_count(v).map_err(|e| field("alpha_lag", e))? as usize)
        };
    }
    if let Some((_, v)) = get("ell_rule") {
        cfg.ell_rule = parse_ell_rule(v).map_err(|e| field("ell_rule", e))?;
    }
    if let Some((_, v)) = get("output") {
        cfg.output = Some(PathBuf::from(v));
    }
    cfg.validate_at(&line_of)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "p = 0.75\nscenery = iid(pareto:alpha=1.0)\n";

    #[test]
    fn minimal_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.p.p(), 0.75);
        assert_eq!(cfg.n, vec![10_000]);
        assert_eq!(cfg.estimators, vec![Estimator::Logmax]);
    }

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1e4"), Ok(10_000));
        assert_eq!(parse_count("1_000"), Ok(1_000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert_eq!(parse_count_list("1e3, 1e4,1e5"), Ok(vec![1_000, 10_000, 100_000]));
    }

    #[test]
    fn rejections_carry_lines() {
        let e = parse_config("scenery = iid(uniform01)\np = 0.5\n").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(2), "p"));
        let e = parse_config(&format!("{MINIMAL}n = 100\ntau = 100\n")).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(4), "tau"));
        let e = parse_config(&format!("{MINIMAL}n = 100\nk_n = 100\n")).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(4), "k_n"));
        let e = parse_config("p = 0.75\nscenery = iid(poisson:rate=1)\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse_config(&format!("{MINIMAL}estimators = logmax, bogus\n")).unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse_config(&format!("{MINIMAL}colour = red\n")).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(3), "colour"));
        let e = parse_config(&format!("{MINIMAL}p = 0.6\n")).unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse_config("scenery = iid(uniform01)\n").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (None, "p"));
        assert!(parse_config("p 0.75\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let text = "p = 0.6\nscenery = movingmax(k=2, frechet:alpha=1.5)\ntau = 0.5\nn = 1e3, 2e3\n\
                    k_n = 50\nestimators = runs, logmax, limits\nell_rule = const:3\nalpha_lag = 40\n\
                    output = out/dir\nseed = 9\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.estimators, vec![Estimator::Logmax, Estimator::Runs, Estimator::Limits]);
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }
}
