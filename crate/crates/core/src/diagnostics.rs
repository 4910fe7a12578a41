//! Empirical checks of the structural conditions behind the limit theorems:
//! the local clustering statistic `D^{(k)}(u_n)`, a block-maximum restriction
//! of the mixing coefficient `α_{n,ℓ}`, and the walk concentration event
//! `E_n`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::evt::{threshold, ComposedSampler};
use crate::parallel::replicate_reduce;
use crate::scenery::{sample_conditional_window, Scenery, SceneryModel};
use crate::stats::binomial_se;
use crate::stochastic::RngStream;
use crate::walk::{WalkParams, Walker};

const SCENERY_TAG: u64 = 11;
const CONDITION_TAG: u64 = 12;
const WALK_TAG: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkConfig {
    pub k: usize,
    pub n: usize,
    pub tau: f64,
    /// Number of blocks; block length is `r_n = ⌊n / s_n⌋`.
    pub s_n: usize,
    pub replicates: u64,
}

impl DkConfig {
    /// Uses the default `s_n = ⌈n^{1/3}⌉`.
    pub fn new(k: usize, n: usize, tau: f64, replicates: u64) -> Self {
        Self {
            k,
            n,
            tau,
            s_n: default_blocks(n),
            replicates,
        }
    }

    pub fn r_n(&self) -> usize {
        self.n / self.s_n.max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("D^(k) order must be >= 1".into()));
        }
        if self.s_n == 0 {
            return Err(Error::Config("s_n must be >= 1".into()));
        }
        if self.r_n() < self.k {
            return Err(Error::Config(format!(
                "block length r_n = {} is below the order k = {}",
                self.r_n(),
                self.k
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        Ok(())
    }
}

pub fn default_blocks(n: usize) -> usize {
    ((n as f64).cbrt().ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkEstimate {
    /// `τ · P̂(rest | ξ(S_0) > u_n)`.
    pub value: f64,
    pub stderr: f64,
    pub r_n: usize,
    pub replicates: u64,
}

/// `n P(ξ(0) > u_n >= M_{1,k-1}, M_{k,r_n} > u_n)` for the scenery itself.
pub fn dk_statistic_scenery(model: &SceneryModel, cfg: &DkConfig, stream: &RngStream) -> Result<DkEstimate> {
    dk_statistic(None, model, cfg, stream)
}

/// The same statistic along the composed sequence `ξ(S_t)`.
pub fn dk_statistic_composed(
    walk: &WalkParams,
    model: &SceneryModel,
    cfg: &DkConfig,
    stream: &RngStream,
) -> Result<DkEstimate> {
    dk_statistic(Some(walk), model, cfg, stream)
}

fn dk_statistic(
    walk: Option<&WalkParams>,
    model: &SceneryModel,
    cfg: &DkConfig,
    stream: &RngStream,
) -> Result<DkEstimate> {
    cfg.validate()?;
    let u = threshold(model, cfg.n, cfg.tau)?.u;
    let r_n = cfg.r_n();
    struct Acc {
        hits: u64,
        sites: Vec<i64>,
        vals: Vec<f64>,
        err: Option<Error>,
    }
    let acc = replicate_reduce(
        cfg.replicates,
        || Acc {
            hits: 0,
            sites: Vec::new(),
            vals: Vec::new(),
            err: None,
        },
        |acc, r| {
            let rep = stream.child(r);
            let base = model.with_seed(rep.child(SCENERY_TAG).u64_at(0));
            let scenery = match sample_conditional_window(&base, u, &rep.child(CONDITION_TAG)) {
                Ok(s) => s,
                Err(e) => {
                    acc.err.get_or_insert(e);
                    return;
                }
            };
            acc.sites.clear();
            match walk {
                Some(w) => {
                    let mut walker = Walker::new(w, &rep.child(WALK_TAG));
                    acc.sites.push(0);
                    for _ in 0..r_n {
                        acc.sites.push(walker.step());
                    }
                }
                None => acc.sites.extend(0..=r_n as i64),
            }
            let (lo, hi) = acc
                .sites
                .iter()
                .fold((i64::MAX, i64::MIN), |(a, b), &s| (a.min(s), b.max(s)));
            scenery.fill(lo, hi, &mut acc.vals);
            let v = |t: usize| acc.vals[(acc.sites[t] - lo) as usize];
            let quiet = (1..cfg.k).all(|t| v(t) <= u);
            if quiet && (cfg.k..=r_n).any(|t| v(t) > u) {
                acc.hits += 1;
            }
        },
        |a, b| {
            a.hits += b.hits;
            if a.err.is_none() {
                a.err = b.err;
            }
        },
    );
    if let Some(e) = acc.err {
        return Err(e);
    }
    let p = acc.hits as f64 / cfg.replicates as f64;
    Ok(DkEstimate {
        value: cfg.tau * p,
        stderr: cfg.tau * binomial_se(p, cfg.replicates),
        r_n,
        replicates: cfg.replicates,
    })
}

/// Number of `k` values in the rectangle family.
pub const ALPHA_GRID: usize = 16;

/// Up to [`ALPHA_GRID`] evenly spaced split points in `1..=n-ℓ`.
pub fn alpha_grid(n: usize, ell: usize) -> Vec<usize> {
    let top = n - ell;
    let mut ks: Vec<usize> = (0..ALPHA_GRID)
        .map(|i| 1 + ((top - 1) as f64 * i as f64 / (ALPHA_GRID - 1) as f64).round() as usize)
        .collect();
    ks.dedup();
    ks
}

/// Lower bound on `α_{n,ℓ}` from the block-maximum rectangles
/// `A = {max_{0..k} <= u_n}`, `B = {max_{k+ℓ..n} <= u_n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    /// Standard error of the maximizing term.
    pub stderr: f64,
    pub ell: usize,
    pub grid: Vec<usize>,
    /// `|P̂(A∩B) - P̂(A)P̂(B)|` per grid point.
    pub terms: Vec<f64>,
    /// Independence-null standard error per grid point.
    pub term_stderr: Vec<f64>,
    pub replicates: u64,
}

/// Counts of `A`, `B` and `A∩B` per grid point over shared replicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectangleCounts {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub ab: Vec<u64>,
    pub replicates: u64,
}

impl RectangleCounts {
    /// The same counts with the roles of the two blocks exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
            ab: self.ab.clone(),
            replicates: self.replicates,
        }
    }

    pub fn terms(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.replicates as f64;
        self.a
            .iter()
            .zip(&self.b)
            .zip(&self.ab)
            .map(|((&a, &b), &ab)| {
                let (pa, pb, pab) = (a as f64 / n, b as f64 / n, ab as f64 / n);
                let se = (pa * (1.0 - pa) * pb * (1.0 - pb) / n).sqrt();
                ((pab - pa * pb).abs(), se)
            })
            .unzip()
    }
}

pub fn rectangle_counts(sampler: &ComposedSampler, ell: usize, tau: f64, reps: u64) -> Result<RectangleCounts> {
    let n = sampler.n;
    if ell == 0 || ell >= n {
        return domain(format!("need 1 <= ell <= n - 1, got ell={ell}, n={n}"));
    }
    let u = threshold(&sampler.model, n, tau)?.u;
    let grid = alpha_grid(n, ell);
    let g = grid.len();
    struct Acc {
        counts: RectangleCounts,
        sites: Vec<i64>,
        vals: Vec<f64>,
        prefix: Vec<f64>,
        suffix: Vec<f64>,
    }
    let acc = replicate_reduce(
        reps,
        || Acc {
            counts: RectangleCounts {
                a: vec![0; g],
                b: vec![0; g],
                ab: vec![0; g],
                replicates: 0,
            },
            sites: Vec::new(),
            vals: Vec::new(),
            prefix: Vec::new(),
            suffix: Vec::new(),
        },
        |acc, r| {
            sampler.sites_into(r, &mut acc.sites);
            let (lo, hi) = acc
                .sites
                .iter()
                .fold((i64::MAX, i64::MIN), |(a, b), &s| (a.min(s), b.max(s)));
            sampler.scenery(r).evaluator().fill(lo, hi, &mut acc.vals);
            let seq = acc.sites.iter().map(|&s| acc.vals[(s - lo) as usize]);
            acc.prefix.clear();
            let mut m = f64::NEG_INFINITY;
            for v in seq {
                m = m.max(v);
                acc.prefix.push(m);
            }
            acc.suffix.resize(n + 1, 0.0);
            let mut m = f64::NEG_INFINITY;
            for t in (0..=n).rev() {
                m = m.max(acc.vals[(acc.sites[t] - lo) as usize]);
                acc.suffix[t] = m;
            }
            for (i, &k) in grid.iter().enumerate() {
                let a = acc.prefix[k] <= u;
                let b = acc.suffix[k + ell] <= u;
                acc.counts.a[i] += a as u64;
                acc.counts.b[i] += b as u64;
                acc.counts.ab[i] += (a && b) as u64;
            }
            acc.counts.replicates += 1;
        },
        |x, y| {
            for i in 0..g {
                x.counts.a[i] += y.counts.a[i];
                x.counts.b[i] += y.counts.b[i];
                x.counts.ab[i] += y.counts.ab[i];
            }
            x.counts.replicates += y.counts.replicates;
        },
    );
    Ok(acc.counts)
}

/// `α̂_{n,ℓ}` over the rectangle family; `sampler` selects the raw scenery or
/// the composed sequence.
pub fn alpha_hat(sampler: &ComposedSampler, ell: usize, tau: f64, reps: u64) -> Result<AlphaEstimate> {
    let counts = rectangle_counts(sampler, ell, tau, reps)?;
    let (terms, term_stderr) = counts.terms();
    let (best, alpha) = terms
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(AlphaEstimate {
        alpha,
        stderr: term_stderr[best],
        ell,
        grid: alpha_grid(sampler.n, ell),
        terms,
        term_stderr,
        replicates: reps,
    })
}

/// Rule for the sequence `ℓ_m` entering `ℓ̃_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EllRule {
    /// `ℓ_m = ⌈m^e⌉`.
    Power(f64),
    Constant(usize),
}

impl EllRule {
    pub fn at(&self, m: usize) -> usize {
        match *self {
            EllRule::Power(e) => (m as f64).powf(e).ceil() as usize,
            EllRule::Constant(c) => c,
        }
    }
}

impl Default for EllRule {
    fn default() -> Self {
        EllRule::Power(0.9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConfig {
    pub beta: f64,
    pub n: usize,
    pub ell: EllRule,
    pub replicates: u64,
}

impl ConcentrationConfig {
    /// `ℓ̃_n = ⌈(ℓ_{2n+1} + 2n^β) / |2p-1|⌉`.
    pub fn ell_tilde(&self, walk: &WalkParams) -> usize {
        let num = self.ell.at(2 * self.n + 1) as f64 + 2.0 * (self.n as f64).powf(self.beta);
        ((num / walk.escape_prob()).ceil() as usize).max(1)
    }

    /// `n² exp(-n^{2β-1} / 2)`.
    pub fn bound(&self) -> f64 {
        let n = self.n as f64;
        n * n * (-0.5 * n.powf(2.0 * self.beta - 1.0)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub violations: u64,
    pub replicates: u64,
    pub frequency: f64,
    pub stderr: f64,
    pub bound: f64,
    /// False when the bound is at least 1 and says nothing.
    pub bound_informative: bool,
    pub ell_tilde: usize,
    /// True when `ℓ̃_n > n`, so no split point exists and `E_n` holds surely.
    pub empty_family: bool,
}

/// Frequency of `E_n^c`, where `E_n` requires for every `0 <= k <= n - ℓ̃_n`
/// both `max{S_0..S_k} <= k|2p-1| + n^β` and
/// `min{S_{k+ℓ̃_n}..S_n} >= (k+ℓ̃_n)|2p-1| - n^β`. Left-drifting walks are
/// mirrored.
pub fn concentration_violation(
    walk: &WalkParams,
    cfg: &ConcentrationConfig,
    stream: &RngStream,
) -> Result<ConcentrationReport> {
    if !(cfg.beta > 0.5 && cfg.beta < 1.0) {
        return domain(format!("beta must lie in (1/2, 1), got {}", cfg.beta));
    }
    if cfg.replicates == 0 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    let n = cfg.n;
    let ell = cfg.ell_tilde(walk);
    let bound = cfg.bound();
    let base = ConcentrationReport {
        violations: 0,
        replicates: cfg.replicates,
        frequency: 0.0,
        stderr: 0.0,
        bound,
        bound_informative: bound < 1.0,
        ell_tilde: ell,
        empty_family: ell > n,
    };
    if ell > n {
        return Ok(base);
    }
    let last = n - ell;
    let d = walk.escape_prob();
    let slack = (n as f64).powf(cfg.beta);
    let sign = if walk.drifts_right() { 1 } else { -1 };
    struct Acc {
        hits: u64,
        path: Vec<i64>,
    }
    let acc = replicate_reduce(
        cfg.replicates,
        || Acc {
            hits: 0,
            path: Vec::new(),
        },
        |acc, r| {
            let mut walker = Walker::new(walk, &stream.child(r));
            acc.path.clear();
            acc.path.push(0);
            for _ in 0..n {
                acc.path.push(sign * walker.step());
            }
            let path = &acc.path;
            let mut run_max = i64::MIN;
            let early = (0..=last).any(|k| {
                run_max = run_max.max(path[k]);
                run_max as f64 > k as f64 * d + slack
            });
            let late = || {
                let mut run_min = i64::MAX;
                (ell..=n).rev().any(|t| {
                    run_min = run_min.min(path[t]);
                    // `run_min` is the suffix minimum from `t = k + ℓ̃`.
                    (run_min as f64) < t as f64 * d - slack
                })
            };
            if early || late() {
                acc.hits += 1;
            }
        },
        |a, b| a.hits += b.hits,
    );
    let p = acc.hits as f64 / cfg.replicates as f64;
    Ok(ConcentrationReport {
        violations: acc.hits,
        frequency: p,
        stderr: binomial_se(p, cfg.replicates),
        ..base
    })
}
