//! Thresholds, exceedance point processes, maxima, empirical cluster-size
//! statistics and extremal-index estimators for the raw and walk-composed
//! sequences.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::parallel::replicate_reduce;
use crate::scenery::{sample_conditional_window, scenery_marginal, Observations, Scenery, SceneryModel};
use crate::stats::binomial_se;
use crate::stochastic::{MaxMarginal, RngStream};
use crate::walk::{WalkParams, Walker};

const SCENERY_TAG: u64 = 1;
const WALK_TAG: u64 = 2;
const CONDITION_TAG: u64 = 3;

/// Level `u` with `n · P(ξ(0) > u) = τ` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub tau: f64,
    pub n: usize,
    pub u: f64,
}

impl Threshold {
    pub fn for_marginal(marginal: &MaxMarginal, n: usize, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || tau >= n as f64 {
            return domain(format!("need 0 < tau < n, got tau={tau}, n={n}"));
        }
        let u = marginal.isf(tau / n as f64)?;
        Ok(Self { tau, n, u })
    }
}

pub fn threshold(model: &SceneryModel, n: usize, tau: f64) -> Result<Threshold> {
    Threshold::for_marginal(&scenery_marginal(model), n, tau)
}

/// `Φ_n = {i/n : ξ(S_i) > u, 0 <= i <= n}`, stored by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceProcess {
    pub n: usize,
    pub u: f64,
    pub indices: Vec<usize>,
}

impl ExceedanceProcess {
    pub fn times(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| i as f64 / self.n as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn check_horizon(obs: &Observations, th: &Threshold) -> Result<()> {
    if obs.n() != th.n {
        return Err(Error::Config(format!(
            "observation horizon {} does not match threshold horizon {}",
            obs.n(),
            th.n
        )));
    }
    Ok(())
}

pub fn exceedance_process(obs: &Observations, th: &Threshold) -> Result<ExceedanceProcess> {
    check_horizon(obs, th)?;
    Ok(ExceedanceProcess {
        n: th.n,
        u: th.u,
        indices: obs
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > th.u)
            .map(|(i, _)| i)
            .collect(),
    })
}

/// Whether `max_i ξ(S_i) > u`.
pub fn max_exceeds(obs: &Observations, th: &Threshold) -> Result<bool> {
    check_horizon(obs, th)?;
    Ok(obs.values.iter().any(|&v| v > th.u))
}

/// Replicate generator for the composed sequence: replicate `r` draws a fresh
/// scenery and a fresh walk from sub-streams of `stream` keyed by `r`.
#[derive(Debug, Clone, Copy)]
pub struct ComposedSampler {
    pub walk: Option<WalkParams>,
    pub model: SceneryModel,
    pub n: usize,
    pub stream: RngStream,
}

impl ComposedSampler {
    /// Composed sequence `ξ(S_0..S_n)`.
    pub fn composed(walk: WalkParams, model: SceneryModel, n: usize, stream: RngStream) -> Self {
        Self {
            walk: Some(walk),
            model,
            n,
            stream,
        }
    }

    /// Raw scenery `ξ(0..n)` (no walk).
    pub fn raw(model: SceneryModel, n: usize, stream: RngStream) -> Self {
        Self {
            walk: None,
            model,
            n,
            stream,
        }
    }

    pub fn scenery(&self, replicate: u64) -> SceneryModel {
        let seed = self.stream.child(replicate).child(SCENERY_TAG).u64_at(0);
        self.model.with_seed(seed)
    }

    pub fn walk_stream(&self, replicate: u64) -> RngStream {
        self.stream.child(replicate).child(WALK_TAG)
    }

    /// Site sequence of replicate `r` (the walk, or `0..=n`).
    pub fn sites_into(&self, replicate: u64, out: &mut Vec<i64>) {
        out.clear();
        match self.walk {
            Some(w) => {
                let mut walker = Walker::new(&w, &self.walk_stream(replicate));
                out.push(0);
                for _ in 0..self.n {
                    out.push(walker.step());
                }
            }
            None => out.extend(0..=self.n as i64),
        }
    }

    /// `max_{0<=i<=n} ξ(S_i)` without storing the path.
    pub fn maximum(&self, replicate: u64, scratch: &mut Vec<f64>) -> f64 {
        let (lo, hi) = match self.walk {
            Some(w) => {
                let mut walker = Walker::new(&w, &self.walk_stream(replicate));
                let (mut lo, mut hi) = (0i64, 0i64);
                for _ in 0..self.n {
                    let s = walker.step();
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
                (lo, hi)
            }
            None => (0, self.n as i64),
        };
        let eval = self.scenery(replicate).evaluator();
        eval.fill(lo, hi, scratch);
        scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn observations(&self, replicate: u64) -> Observations {
        let mut sites = Vec::with_capacity(self.n + 1);
        self.sites_into(replicate, &mut sites);
        let eval = self.scenery(replicate).evaluator();
        let (lo, hi) = extent(&sites);
        let mut vals = Vec::new();
        eval.fill(lo, hi, &mut vals);
        Observations {
            values: sites.iter().map(|&s| vals[(s - lo) as usize]).collect(),
        }
    }

    /// Maxima of `reps` replicates, in replicate order.
    pub fn maxima(&self, reps: u64) -> Vec<f64> {
        replicate_reduce(
            reps,
            || (Vec::new(), Vec::new()),
            |(out, scratch): &mut (Vec<f64>, Vec<f64>), r| out.push(self.maximum(r, scratch)),
            |a, b| a.0.extend(b.0),
        )
        .0
    }

    /// Per-replicate exceedance count, cluster count (runs with `gap`) and
    /// whether the maximum exceeds `u`.
    pub fn exceedance_summaries(&self, reps: u64, u: f64, gap: usize) -> Vec<ExceedanceSummary> {
        struct Scratch {
            out: Vec<ExceedanceSummary>,
            sites: Vec<i64>,
            vals: Vec<f64>,
        }
        replicate_reduce(
            reps,
            || Scratch {
                out: Vec::new(),
                sites: Vec::new(),
                vals: Vec::new(),
            },
            |s, r| {
                self.sites_into(r, &mut s.sites);
                let (lo, hi) = extent(&s.sites);
                self.scenery(r).evaluator().fill(lo, hi, &mut s.vals);
                let mut tally = RunsTally::default();
                let mut last: Option<usize> = None;
                for (i, &site) in s.sites.iter().enumerate() {
                    if s.vals[(site - lo) as usize] > u {
                        tally.push(last, i, gap);
                        last = Some(i);
                    }
                }
                s.out.push(ExceedanceSummary {
                    exceedances: tally.exceedances,
                    clusters: tally.clusters,
                })
            },
            |a, b| a.out.extend(b.out),
        )
        .out
    }
}

fn extent(sites: &[i64]) -> (i64, i64) {
    sites
        .iter()
        .fold((i64::MAX, i64::MIN), |(lo, hi), &s| (lo.min(s), hi.max(s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceedanceSummary {
    pub exceedances: u64,
    pub clusters: u64,
}

impl ExceedanceSummary {
    pub fn max_exceeds(&self) -> bool {
        self.exceedances > 0
    }
}

/// Estimated `p_n(j) = P(#Φ_{k_n} = j | ξ(0) > u_n)`, `j = 1..=j_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCountEstimate {
    pub k_n: usize,
    pub j_max: usize,
    /// `p_hat[j - 1]` estimates `p_n(j)`.
    pub p_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Frequency of counts above `j_max`.
    pub overflow: f64,
    pub replicates: u64,
}

impl ClusterCountEstimate {
    /// `p̂(j)` for `j >= 1`; zero beyond `j_max`.
    pub fn p(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.p_hat.get(j - 1).copied().unwrap_or(0.0)
        }
    }
}

/// Default block horizon `⌊n^0.7⌋`.
pub fn default_block(n: usize) -> usize {
    (n as f64).powf(0.7).floor() as usize
}

/// Default runs gap `⌈ln n / q⌉`.
pub fn default_runs_gap(n: usize, q: f64) -> usize {
    ((n as f64).ln() / q).ceil() as usize
}

/// Monte Carlo estimate of the conditional block-count law: each replicate
/// conditions a fresh scenery on `ξ(0) > u_n`, runs a fresh walk for `k_n`
/// steps, and counts exceedances among times `0..=k_n`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_cluster_counts(
    walk: &WalkParams,
    model: &SceneryModel,
    n: usize,
    tau: f64,
    k_n: usize,
    j_max: usize,
    reps: u64,
    stream: &RngStream,
) -> Result<ClusterCountEstimate> {
    if k_n >= n {
        return Err(Error::Config(format!("block horizon k_n = {k_n} must be < n = {n}")));
    }
    if reps == 0 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    let th = threshold(model, n, tau)?;
    struct Acc {
        hist: Vec<u64>,
        sites: Vec<i64>,
        vals: Vec<f64>,
        err: Option<Error>,
    }
    let acc = replicate_reduce(
        reps,
        || Acc {
            hist: vec![0; j_max + 2],
            sites: Vec::new(),
            vals: Vec::new(),
            err: None,
        },
        |acc, r| {
            let rep = stream.child(r);
            let base = model.with_seed(rep.child(SCENERY_TAG).u64_at(0));
            let scenery = match sample_conditional_window(&base, th.u, &rep.child(CONDITION_TAG)) {
                Ok(s) => s,
                Err(e) => {
                    acc.err.get_or_insert(e);
                    return;
                }
            };
            acc.sites.clear();
            let mut walker = Walker::new(walk, &rep.child(WALK_TAG));
            acc.sites.push(0);
            for _ in 0..k_n {
                acc.sites.push(walker.step());
            }
            let (lo, hi) = extent(&acc.sites);
            scenery.fill(lo, hi, &mut acc.vals);
            let count = acc
                .sites
                .iter()
                .filter(|&&s| acc.vals[(s - lo) as usize] > th.u)
                .count();
            acc.hist[count.min(j_max + 1)] += 1;
        },
        |a, b| {
            for (x, y) in a.hist.iter_mut().zip(&b.hist) {
                *x += y;
            }
            if a.err.is_none() {
                a.err = b.err;
            }
        },
    );
    if let Some(e) = acc.err {
        return Err(e);
    }
    let total = reps as f64;
    let p_hat: Vec<f64> = acc.hist[1..=j_max].iter().map(|&c| c as f64 / total).collect();
    let stderr = p_hat.iter().map(|&p| binomial_se(p, reps)).collect();
    Ok(ClusterCountEstimate {
        k_n,
        j_max,
        p_hat,
        stderr,
        overflow: acc.hist[j_max + 1] as f64 / total,
        replicates: reps,
    })
}

/// Extremal index estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub theta: f64,
    pub stderr: f64,
    pub replicates: u64,
    /// Set when every replicate exceeded the level: `theta` is `+∞`.
    pub degenerate: bool,
}

/// Inverts `P(max <= u_n) ≈ exp(-θτ)`: `θ̂ = -ln(fraction not exceeding) / τ`,
/// with a delta-method standard error. `exceeds[r]` is true when replicate `r`
/// had `max > u_n`.
pub fn extremal_index_logmax(exceeds: &[bool], tau: f64) -> Result<IndexEstimate> {
    if exceeds.is_empty() {
        return Err(Error::Estimation("no replicates".into()));
    }
    if !(tau > 0.0) {
        return domain(format!("tau must be > 0, got {tau}"));
    }
    let reps = exceeds.len() as u64;
    let below = exceeds.iter().filter(|&&e| !e).count() as f64;
    let f = below / reps as f64;
    if below == 0.0 {
        return Ok(IndexEstimate {
            theta: f64::INFINITY,
            stderr: f64::NAN,
            replicates: reps,
            degenerate: true,
        });
    }
    Ok(IndexEstimate {
        theta: -f.ln() / tau,
        stderr: binomial_se(f, reps) / (f * tau),
        replicates: reps,
        degenerate: false,
    })
}

/// Clusters and exceedances accumulated under the runs rule: a new cluster
/// starts when more than `gap` non-exceedances separate consecutive
/// exceedances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunsTally {
    pub clusters: u64,
    pub exceedances: u64,
}

impl RunsTally {
    fn push(&mut self, last: Option<usize>, index: usize, gap: usize) {
        self.exceedances += 1;
        match last {
            Some(prev) if index - prev - 1 <= gap => {}
            _ => self.clusters += 1,
        }
    }

    pub fn from_indices(indices: &[usize], gap: usize) -> Self {
        let mut tally = Self::default();
        let mut last = None;
        for &i in indices {
            tally.push(last, i, gap);
            last = Some(i);
        }
        tally
    }

    pub fn merge(&mut self, other: RunsTally) {
        self.clusters += other.clusters;
        self.exceedances += other.exceedances;
    }

    /// `#clusters / #exceedances`, or 1 when there are no exceedances.
    pub fn theta(&self) -> f64 {
        if self.exceedances == 0 {
            1.0
        } else {
            self.clusters as f64 / self.exceedances as f64
        }
    }
}

/// Runs-declustering estimate `θ̂ = #clusters / #exceedances` on one sequence.
pub fn extremal_index_runs(obs: &Observations, th: &Threshold, gap: usize) -> Result<f64> {
    if gap == 0 {
        return domain("runs gap must be >= 1");
    }
    let process = exceedance_process(obs, th)?;
    Ok(RunsTally::from_indices(&process.indices, gap).theta())
}

/// Pooled runs estimate over replicates: total clusters over total
/// exceedances, with a replicate-level ratio-estimator standard error.
pub fn extremal_index_runs_pooled(summaries: &[ExceedanceSummary]) -> IndexEstimate {
    let reps = summaries.len() as u64;
    let c: f64 = summaries.iter().map(|s| s.clusters as f64).sum();
    let e: f64 = summaries.iter().map(|s| s.exceedances as f64).sum();
    if e == 0.0 {
        return IndexEstimate {
            theta: 1.0,
            stderr: f64::NAN,
            replicates: reps,
            degenerate: true,
        };
    }
    let ratio = c / e;
    let n = reps as f64;
    let mean_e = e / n;
    let resid_var = summaries
        .iter()
        .map(|s| (s.clusters as f64 - ratio * s.exceedances as f64).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    IndexEstimate {
        theta: ratio,
        stderr: (resid_var / n).sqrt() / mean_e,
        replicates: reps,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenery::{compose, SceneryKind};
    use crate::stochastic::Marginal;
    use crate::walk::simulate_walk;

    fn iid_pareto() -> SceneryModel {
        SceneryModel::new(SceneryKind::Iid(Marginal::pareto(1.0).unwrap()), 1)
    }

    #[test]
    fn threshold_examples() {
        let th = threshold(&iid_pareto(), 100, 1.0).unwrap();
        assert!((th.u - 100.0).abs() < 1e-10);
        // n = 148 with tau = 148 e^-5 places the level at 5 for Exp(1).
        let exp = SceneryModel::new(SceneryKind::Iid(Marginal::exponential(1.0).unwrap()), 1);
        let th = threshold(&exp, 148, 148.0 * (-5.0f64).exp()).unwrap();
        assert!((th.u - 5.0).abs() < 1e-12);
        let mm = SceneryModel::new(SceneryKind::MovingMax { k: 1, y: Marginal::Uniform01 }, 1);
        let th = threshold(&mm, 100, 1.0).unwrap();
        assert!((th.u - 0.99f64.sqrt()).abs() < 1e-12);
        assert!((th.u - 0.994987).abs() < 1e-6);
    }

    #[test]
    fn threshold_rejects_bad_rates() {
        assert!(threshold(&iid_pareto(), 100, 100.0).is_err());
        assert!(threshold(&iid_pareto(), 100, 0.0).is_err());
        assert!(threshold(&iid_pareto(), 100, 250.0).is_err());
    }

    #[test]
    fn threshold_is_exact() {
        let kinds = [
            SceneryKind::Iid(Marginal::pareto(1.0).unwrap()),
            SceneryKind::Iid(Marginal::pareto(3.0).unwrap()),
            SceneryKind::Iid(Marginal::exponential(2.0).unwrap()),
            SceneryKind::Iid(Marginal::Uniform01),
            SceneryKind::Iid(Marginal::frechet(1.5).unwrap()),
            SceneryKind::MovingMax { k: 1, y: Marginal::Uniform01 },
            SceneryKind::MovingMax { k: 2, y: Marginal::pareto(1.0).unwrap() },
            SceneryKind::MovingMax { k: 3, y: Marginal::frechet(1.0).unwrap() },
        ];
        for kind in kinds {
            let model = SceneryModel::new(kind, 0);
            for n in [1_000usize, 10_000, 100_000] {
                for tau in [0.5, 1.0, 2.0] {
                    let th = threshold(&model, n, tau).unwrap();
                    let got = n as f64 * scenery_marginal(&model).sf(th.u);
                    assert!((got - tau).abs() <= 1e-10 * tau, "{kind} n={n} tau={tau}: {got}");
                }
            }
        }
    }

    fn obs(values: Vec<f64>) -> Observations {
        Observations { values }
    }

    #[test]
    fn exceedance_examples() {
        let th = Threshold { tau: 1.0, n: 10, u: 5.0 };
        let flat = obs(vec![1.0; 11]);
        assert!(exceedance_process(&flat, &th).unwrap().is_empty());
        assert!(!max_exceeds(&flat, &th).unwrap());
        let mut v = vec![1.0; 11];
        v[3] = 9.0;
        let p = exceedance_process(&obs(v.clone()), &th).unwrap();
        assert_eq!(p.times(), vec![0.3]);
        assert!(max_exceeds(&obs(v), &th).unwrap());
        assert!(exceedance_process(&obs(vec![1.0; 5]), &th).is_err());
    }

    #[test]
    fn runs_examples() {
        let tally = RunsTally::from_indices(&[5, 6, 7, 40], 3);
        assert_eq!(tally, RunsTally { clusters: 2, exceedances: 4 });
        assert_eq!(tally.theta(), 0.5);
        assert_eq!(RunsTally::from_indices(&[], 3).theta(), 1.0);
        // Exactly `gap` non-exceedances keep the cluster open.
        assert_eq!(RunsTally::from_indices(&[0, 4], 3).clusters, 1);
        assert_eq!(RunsTally::from_indices(&[0, 5], 3).clusters, 2);

        let th = Threshold { tau: 1.0, n: 50, u: 0.5 };
        let mut v = vec![0.0; 51];
        for i in [5, 6, 7, 40] {
            v[i] = 1.0;
        }
        assert_eq!(extremal_index_runs(&obs(v), &th, 3).unwrap(), 0.5);
        assert_eq!(extremal_index_runs(&obs(vec![0.0; 51]), &th, 3).unwrap(), 1.0);
        assert!(extremal_index_runs(&obs(vec![0.0; 51]), &th, 0).is_err());
    }

    #[test]
    fn logmax_inversion() {
        let f = (-0.5f64).exp();
        let reps = 1_000_000usize;
        let below = (f * reps as f64).round() as usize;
        let flags: Vec<bool> = (0..reps).map(|i| i >= below).collect();
        let est = extremal_index_logmax(&flags, 1.0).unwrap();
        assert!((est.theta - 0.5).abs() < 1e-6);
        let none = vec![false; 10];
        assert_eq!(extremal_index_logmax(&none, 1.0).unwrap().theta, 0.0);
        let all = vec![true; 10];
        let est = extremal_index_logmax(&all, 1.0).unwrap();
        assert!(est.degenerate && est.theta.is_infinite());
        assert!(extremal_index_logmax(&[], 1.0).is_err());
    }

    #[test]
    fn sampler_maximum_equals_composed_observations() {
        let walk = WalkParams::new(0.75).unwrap();
        let model = SceneryModel::new(SceneryKind::MovingMax { k: 1, y: Marginal::pareto(1.0).unwrap() }, 0);
        let sampler = ComposedSampler::composed(walk, model, 2_000, RngStream::new(5, 0));
        let mut scratch = Vec::new();
        for r in 0..20 {
            let obs = sampler.observations(r);
            let path = simulate_walk(&walk, 2_000, &sampler.walk_stream(r));
            assert_eq!(obs, compose(&path, &sampler.scenery(r)));
            let m = obs.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(sampler.maximum(r, &mut scratch), m);
        }
        let raw = ComposedSampler::raw(model, 100, RngStream::new(5, 1));
        let obs = raw.observations(3);
        assert_eq!(obs.values.len(), 101);
        assert_eq!(obs.values[7], raw.scenery(3).value(7));
    }

    #[test]
    fn summaries_agree_with_process() {
        let walk = WalkParams::new(0.6).unwrap();
        let model = iid_pareto();
        let n = 1_000;
        let th = threshold(&model, n, 5.0).unwrap();
        let sampler = ComposedSampler::composed(walk, model, n, RngStream::new(6, 0));
        let sums = sampler.exceedance_summaries(50, th.u, 4);
        for (r, s) in sums.iter().enumerate() {
            let p = exceedance_process(&sampler.observations(r as u64), &th).unwrap();
            assert_eq!(s.exceedances as usize, p.len());
            assert_eq!(*s, {
                let t = RunsTally::from_indices(&p.indices, 4);
                ExceedanceSummary { exceedances: t.exceedances, clusters: t.clusters }
            });
        }
    }

    #[test]
    fn cluster_counts_degenerate_block() {
        let walk = WalkParams::new(0.75).unwrap();
        let est = empirical_cluster_counts(&walk, &iid_pareto(), 1000, 1.0, 0, 5, 200, &RngStream::new(1, 0)).unwrap();
        assert_eq!(est.p_hat[0], 1.0);
        assert!(est.p_hat[1..].iter().all(|&p| p == 0.0));
        assert!(empirical_cluster_counts(&walk, &iid_pareto(), 1000, 1.0, 1000, 5, 10, &RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn default_rules() {
        assert_eq!(default_block(100_000), 3162);
        assert_eq!(default_runs_gap(100_000, 0.5), 24);
    }
}
