//! The biased ±1 walk: simulation, escape and return probabilities, range,
//! visit counts, and the exact law of the total number of visits to a finite
//! site set.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{domain, Result};
use crate::stochastic::{RngStream, StreamRng};
use rand::RngCore;

/// Parameters of the nearest-neighbour walk with `P(step = +1) = p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct WalkParams {
    p: f64,
}

impl WalkParams {
    /// Rejects `p = 1/2` (recurrent walk) and `p` outside `(0, 1)`.
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("step probability must lie in (0, 1), got {p}"));
        }
        if p == 0.5 {
            return domain("p = 1/2 gives a recurrent walk; escape probability would be 0");
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Escape probability `q = P(S_i != 0 for all i >= 1) = |2p - 1|`.
    pub fn escape_prob(&self) -> f64 {
        (2.0 * self.p - 1.0).abs()
    }

    /// Mean step `2p - 1`.
    pub fn drift(&self) -> f64 {
        2.0 * self.p - 1.0
    }

    /// `ρ = (1 - p) / p`.
    pub fn rho(&self) -> f64 {
        (1.0 - self.p) / self.p
    }

    /// The reflected walk, with `p ↔ 1 - p`.
    pub fn mirrored(&self) -> Self {
        Self { p: 1.0 - self.p }
    }

    pub fn drifts_right(&self) -> bool {
        self.p > 0.5
    }

    #[inline]
    fn up_threshold(&self) -> u64 {
        // P(word < threshold) = p up to 2^-64.
        (self.p * 18_446_744_073_709_551_616.0) as u64
    }
}

impl TryFrom<f64> for WalkParams {
    type Error = crate::Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<WalkParams> for f64 {
    fn from(w: WalkParams) -> f64 {
        w.p
    }
}

pub fn escape_prob(params: &WalkParams) -> f64 {
    params.escape_prob()
}

/// Streaming walk generator; position 0 at time 0.
#[derive(Debug, Clone)]
pub struct Walker {
    pos: i64,
    threshold: u64,
    rng: StreamRng,
}

impl Walker {
    pub fn new(params: &WalkParams, stream: &RngStream) -> Self {
        Self {
            pos: 0,
            threshold: params.up_threshold(),
            rng: stream.cursor(),
        }
    }

    pub fn position(&self) -> i64 {
        self.pos
    }

    #[inline(always)]
    pub fn step(&mut self) -> i64 {
        if self.rng.next_u64() < self.threshold {
            self.pos += 1;
        } else {
            self.pos -= 1;
        }
        self.pos
    }
}

/// A realized trajectory `S_0, ..., S_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkPath {
    positions: Vec<i64>,
}

impl WalkPath {
    /// Validates `S_0 = 0` and unit steps.
    pub fn from_positions(positions: Vec<i64>) -> Result<Self> {
        if positions.first() != Some(&0) {
            return domain("a walk path starts at 0");
        }
        if positions.windows(2).any(|w| (w[1] - w[0]).abs() != 1) {
            return domain("walk steps must be ±1");
        }
        Ok(Self { positions })
    }

    /// Horizon (number of steps).
    pub fn n(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    /// `(min S_i, max S_i)`.
    pub fn extent(&self) -> (i64, i64) {
        self.positions
            .iter()
            .fold((0, 0), |(lo, hi), &s| (lo.min(s), hi.max(s)))
    }
}

pub fn simulate_walk(params: &WalkParams, n: usize, stream: &RngStream) -> WalkPath {
    let mut walker = Walker::new(params, stream);
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(0);
    for _ in 0..n {
        positions.push(walker.step());
    }
    WalkPath { positions }
}

/// Number of distinct sites visited. A nearest-neighbour path visits every site
/// of `[min, max]`.
pub fn range_count(path: &WalkPath) -> usize {
    let (lo, hi) = path.extent();
    (hi - lo + 1) as usize
}

/// A finite, nonempty, sorted set of sites.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteSet(Vec<i64>);

impl SiteSet {
    pub fn new(sites: impl IntoIterator<Item = i64>) -> Result<Self> {
        let mut v: Vec<i64> = sites.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return domain("site set must be nonempty");
        }
        Ok(Self(v))
    }

    /// `{lo, ..., hi}`.
    pub fn interval(lo: i64, hi: i64) -> Result<Self> {
        Self::new(lo..=hi)
    }

    pub fn sites(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> i64 {
        self.0[0]
    }

    pub fn max(&self) -> i64 {
        self.0[self.0.len() - 1]
    }

    pub fn contains(&self, s: i64) -> bool {
        self.0.binary_search(&s).is_ok()
    }

    pub fn index_of(&self, s: i64) -> Option<usize> {
        self.0.binary_search(&s).ok()
    }

    pub fn negated(&self) -> Self {
        let mut v: Vec<i64> = self.0.iter().map(|s| -s).collect();
        v.reverse();
        Self(v)
    }
}

/// `#{0 <= i <= n : S_i ∈ A}`.
pub fn visit_count(path: &WalkPath, sites: &SiteSet) -> usize {
    path.positions.iter().filter(|&&s| sites.contains(s)).count()
}

/// `P(S_k = 0)`.
pub fn return_prob_zero(params: &WalkParams, k: u64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let half = k / 2;
    let p = params.p;
    (ln_binomial(k, half) + half as f64 * (p.ln() + (1.0 - p).ln())).exp()
}

/// Gambler's ruin: probability that the walk started at `x` hits `b` before `a`.
pub fn hit_before(params: &WalkParams, a: i64, b: i64, x: i64) -> Result<f64> {
    if !(a < x && x < b) {
        return domain(format!("need a < x < b, got a={a}, x={x}, b={b}"));
    }
    let rho = params.rho();
    let (up, width) = ((x - a) as f64, (b - a) as f64);
    Ok(if rho < 1.0 {
        (1.0 - rho.powf(up)) / (1.0 - rho.powf(width))
    } else {
        // Divide through by ρ^{b-a} to stay finite.
        let inv = 1.0 / rho;
        (inv.powf(width - up) - inv.powf(width)) / (1.0 - inv.powf(width))
    })
}

/// Probability that the walk, started at `from`, ever visits `target`.
fn ever_hits(params: &WalkParams, from: i64, target: i64) -> f64 {
    let rho = params.rho();
    let d = (from - target).abs() as f64;
    if from > target {
        rho.min(1.0).powf(d)
    } else {
        (1.0 / rho).min(1.0).powf(d)
    }
}

/// Exact law of `N(A)`, the total number of visits of the walk started at 0
/// to the finite site set `A` (time 0 included).
///
/// With `K[a][b]` the probability that after leaving `a` the next visit to `A`
/// happens at `b`, `P(N(A) = j) = e_0 K^{j-1} (1 - K 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTypeLaw {
    pub sites: SiteSet,
    pub kernel: Vec<Vec<f64>>,
    pub start: usize,
    /// `pmf[j - 1] = P(N(A) = j)` for `j = 1..=J`.
    pub pmf: Vec<f64>,
    /// `P(N(A) > J) = e_0 K^J 1`.
    pub tail: f64,
}

impl PhaseTypeLaw {
    pub fn truncation(&self) -> usize {
        self.pmf.len()
    }

    /// `P(N(A) = j)`; zero for `j = 0` and beyond the truncation.
    pub fn prob(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.pmf.get(j - 1).copied().unwrap_or(0.0)
        }
    }

    /// `P(N(A) >= j)` for `1 <= j <= J + 1`.
    pub fn survival(&self, j: usize) -> f64 {
        if j <= 1 {
            return 1.0;
        }
        self.tail + self.pmf.iter().skip(j - 1).sum::<f64>()
    }

    /// `|Σ pmf + tail - 1|`.
    pub fn mass_error(&self) -> f64 {
        (self.pmf.iter().sum::<f64>() + self.tail - 1.0).abs()
    }

    pub fn mean_truncated(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

fn visit_kernel(params: &WalkParams, sites: &SiteSet) -> Result<Vec<Vec<f64>>> {
    let a = sites.sites();
    let m = a.len();
    let (up, down) = (params.p, 1.0 - params.p);
    let mut k = vec![vec![0.0; m]; m];
    for i in 0..m {
        let here = a[i];
        // First step to the right.
        let y = here + 1;
        if i + 1 < m && a[i + 1] == y {
            k[i][i + 1] += up;
        } else if i + 1 < m {
            let h = hit_before(params, here, a[i + 1], y)?;
            k[i][i + 1] += up * h;
            k[i][i] += up * (1.0 - h);
        } else {
            k[i][i] += up * ever_hits(params, y, here);
        }
        // First step to the left.
        let y = here - 1;
        if i > 0 && a[i - 1] == y {
            k[i][i - 1] += down;
        } else if i > 0 {
            let h = hit_before(params, a[i - 1], here, y)?;
            k[i][i] += down * h;
            k[i][i - 1] += down * (1.0 - h);
        } else {
            k[i][i] += down * ever_hits(params, y, here);
        }
    }
    Ok(k)
}

/// Exact phase-type law of `N(A)` truncated at `J` terms.
pub fn visit_set_law(params: &WalkParams, sites: &SiteSet, truncation: usize) -> Result<PhaseTypeLaw> {
    let start = match sites.index_of(0) {
        Some(i) => i,
        None => return domain("the site set must contain the origin"),
    };
    if truncation == 0 {
        return domain("truncation J must be >= 1");
    }
    let kernel = visit_kernel(params, sites)?;
    let m = kernel.len();
    // Interior sites have exit probability zero; keep rounding from going negative.
    let exit: Vec<f64> = kernel.iter().map(|row| (1.0 - row.iter().sum::<f64>()).max(0.0)).collect();
    let mut v = vec![0.0; m];
    v[start] = 1.0;
    let mut pmf = Vec::with_capacity(truncation);
    let mut next = vec![0.0; m];
    for _ in 0..truncation {
        pmf.push(v.iter().zip(&exit).map(|(x, e)| x * e).sum());
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (nj, kij) in next.iter_mut().zip(&kernel[i]) {
                    *nj += vi * kij;
                }
            }
        }
        std::mem::swap(&mut v, &mut next);
    }
    Ok(PhaseTypeLaw {
        sites: sites.clone(),
        kernel,
        start,
        pmf,
        tail: v.iter().sum(),
    })
}

/// Smallest margin `m` with `ρ^m < tol` (drift away from the set).
pub fn stop_margin(params: &WalkParams, tol: f64) -> i64 {
    let r = params.rho().min(1.0 / params.rho());
    (tol.ln() / r.ln()).floor() as i64 + 1
}

/// Simulates `N(A)` for the walk started at 0, stopping once the walk is more
/// than `stop_margin(tol)` sites past `A` in the drift direction.
pub fn sample_visit_count(params: &WalkParams, sites: &SiteSet, tol: f64, stream: &RngStream) -> u64 {
    let margin = stop_margin(params, tol);
    let mut walker = Walker::new(params, stream);
    let mut count = u64::from(sites.contains(0));
    if params.drifts_right() {
        let stop = sites.max() + margin;
        while walker.position() <= stop {
            if sites.contains(walker.step()) {
                count += 1;
            }
        }
    } else {
        let stop = sites.min() - margin;
        while walker.position() >= stop {
            if sites.contains(walker.step()) {
                count += 1;
            }
        }
    }
    count
}
