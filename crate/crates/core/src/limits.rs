//! Exact limit objects: the extremal index `θ = σq`, cluster-size laws,
//! compound Poisson sampling and count laws, the Laplace functional for step
//! functions, and total-variation distances.
//!
//! All pmfs are truncated with the missing mass kept as an explicit deficit;
//! nothing is renormalized.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scenery::SceneryKind;
use crate::stochastic::StreamRng;
use crate::walk::{visit_set_law, SiteSet, WalkParams};

/// `θ = σ q`.
pub fn theta(sigma: f64, q: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return domain(format!("scenery extremal index must lie in (0, 1], got {sigma}"));
    }
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("escape probability must lie in (0, 1), got {q}"));
    }
    Ok(sigma * q)
}

/// Truncated law on `{1, ..., J}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLaw {
    /// `pmf[j - 1] = π(j)`.
    pub pmf: Vec<f64>,
    /// `1 - Σ π(j)`.
    pub deficit: f64,
}

impl ClusterLaw {
    pub fn from_pmf(pmf: Vec<f64>) -> Self {
        let deficit = 1.0 - pmf.iter().sum::<f64>();
        Self { pmf, deficit }
    }

    pub fn truncation(&self) -> usize {
        self.pmf.len()
    }

    pub fn prob(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.pmf.get(j - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Probability generating transform `L_π(c) = Σ π(j) e^{-cj}`.
    pub fn laplace(&self, c: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| p * (-c * (i + 1) as f64).exp())
            .sum()
    }

    /// Rows `j,pmf,cumulative`.
    pub fn to_csv(&self) -> String {
        pmf_csv(&self.pmf, 1)
    }

    pub fn tv(&self, other: &ClusterLaw) -> f64 {
        tv_distance(&self.pmf, &other.pmf)
    }
}

fn pmf_csv(pmf: &[f64], first: usize) -> String {
    let mut out = String::from("j,pmf,cumulative\n");
    let mut cum = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        cum += p;
        out.push_str(&format!("{},{:e},{:e}\n", i + first, p, cum));
    }
    out
}

/// Geometric cluster law `π(j) = q(1-q)^{j-1}`, `j = 1..=J`.
pub fn cluster_law_iid(q: f64, truncation: usize) -> ClusterLaw {
    let ln_fail = (-q).ln_1p();
    ClusterLaw::from_pmf(
        (0..truncation)
            .map(|i| q * (i as f64 * ln_fail).exp())
            .collect(),
    )
}

/// Cluster law for a moving-maximum scenery of window `k`:
/// `π(j) = (1/q) Σ_m (P(N(A_m) = j) - P(N(A_m) = j+1))` over the `k+1`
/// intervals `A_m = {-m, ..., k-m}` containing 0.
pub fn cluster_law_moving_max(params: &WalkParams, k: u32, truncation: usize) -> Result<ClusterLaw> {
    if k == 0 {
        return domain("moving-maximum window must be >= 1");
    }
    let q = params.escape_prob();
    let mut pmf = vec![0.0; truncation];
    for m in 0..=k as i64 {
        let sites = SiteSet::interval(-m, k as i64 - m)?;
        let law = visit_set_law(params, &sites, truncation + 1)?;
        for (j, slot) in pmf.iter_mut().enumerate() {
            *slot += law.prob(j + 1) - law.prob(j + 2);
        }
    }
    for v in &mut pmf {
        *v /= q;
    }
    Ok(ClusterLaw::from_pmf(pmf))
}

/// Limit of `p_n(j) = P(#Φ_{k_n} = j | ξ(0) > u_n)`: the visit count of the
/// exceedance set seen from the origin. Given `ξ(0) > u_n`, the single large
/// primitive value sits in one of the `k+1` window slots with equal
/// probability, so this is the average of the `P(N(A_m) = j)`
/// (`P(N({0}) = j)` for i.i.d. sceneries).
pub fn exceedance_count_law(params: &WalkParams, kind: &SceneryKind, truncation: usize) -> Result<ClusterLaw> {
    let k = kind.window() as i64;
    let mut pmf = vec![0.0; truncation];
    for m in 0..=k {
        let law = visit_set_law(params, &SiteSet::interval(-m, k - m)?, truncation)?;
        for (j, slot) in pmf.iter_mut().enumerate() {
            *slot += law.prob(j + 1);
        }
    }
    for v in &mut pmf {
        *v /= (k + 1) as f64;
    }
    Ok(ClusterLaw::from_pmf(pmf))
}

/// Exact cluster law for a scenery kind.
pub fn cluster_law(params: &WalkParams, kind: &SceneryKind, truncation: usize) -> Result<ClusterLaw> {
    match kind {
        SceneryKind::Iid(_) => Ok(cluster_law_iid(params.escape_prob(), truncation)),
        SceneryKind::MovingMax { k, .. } => cluster_law_moving_max(params, *k, truncation),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PiWarning {
    /// `π(j)` came out negative beyond rounding noise: the input was not
    /// nonincreasing at `j`.
    Negative { j: usize, value: f64 },
    /// All differences vanish (constant input).
    Degenerate,
}

/// Cluster law recovered from exceedance-count tail probabilities:
/// `π(j) = (p(j) - p(j+1)) / θ` for `j = 1..J`, where `p_vec[i] = p(i+1)`
/// holds `J + 1` entries. Negative entries are kept as-is and reported.
pub fn pi_from_p(p_vec: &[f64], theta: f64) -> Result<(ClusterLaw, Vec<PiWarning>)> {
    if !(theta > 0.0) {
        return domain(format!("theta must be > 0, got {theta}"));
    }
    if p_vec.len() < 2 {
        return domain("need at least p(1) and p(2)");
    }
    let pmf: Vec<f64> = p_vec.windows(2).map(|w| (w[0] - w[1]) / theta).collect();
    let mut warnings: Vec<PiWarning> = pmf
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < -1e-12)
        .map(|(i, &v)| PiWarning::Negative { j: i + 1, value: v })
        .collect();
    if pmf.iter().all(|&v| v == 0.0) {
        warnings.push(PiWarning::Degenerate);
    }
    Ok((ClusterLaw::from_pmf(pmf), warnings))
}

/// Compound Poisson point process on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundPoissonSpec {
    pub intensity: f64,
    pub cluster: ClusterLaw,
}

impl CompoundPoissonSpec {
    pub fn new(intensity: f64, cluster: ClusterLaw) -> Result<Self> {
        if !(intensity > 0.0) || !intensity.is_finite() {
            return domain(format!("intensity must be > 0, got {intensity}"));
        }
        if cluster.pmf.iter().any(|&p| !(p >= 0.0)) || cluster.deficit < -1e-12 {
            return domain("cluster law must be a nonnegative (sub-)probability vector");
        }
        Ok(Self { intensity, cluster })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub x: f64,
    pub mark: usize,
}

/// Inverse-CDF sampler for cluster marks. Mass in the deficit maps to `J + 1`.
#[derive(Debug, Clone)]
pub struct MarkSampler {
    cumulative: Vec<f64>,
}

impl MarkSampler {
    pub fn new(law: &ClusterLaw) -> Self {
        let mut acc = 0.0;
        Self {
            cumulative: law
                .pmf
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect(),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> usize {
        let u = rng.open01();
        self.cumulative.partition_point(|&c| c < u) + 1
    }
}

/// Poisson many uniform centers with i.i.d. marks, sorted by location.
pub fn sample_compound_poisson(spec: &CompoundPoissonSpec, rng: &mut StreamRng) -> Vec<MarkedPoint> {
    let marks = MarkSampler::new(&spec.cluster);
    sample_with(spec.intensity, &marks, rng)
}

/// [`sample_compound_poisson`] with a prebuilt mark sampler.
pub fn sample_with(intensity: f64, marks: &MarkSampler, rng: &mut StreamRng) -> Vec<MarkedPoint> {
    let count = Poisson::new(intensity)
        .expect("intensity validated by CompoundPoissonSpec")
        .sample(rng) as usize;
    let mut points: Vec<MarkedPoint> = (0..count)
        .map(|_| MarkedPoint {
            x: rng.random::<f64>(),
            mark: marks.sample(rng),
        })
        .collect();
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    points
}

/// Law of the total count `Σ n_j` on `{0, ..., N_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountLaw {
    pub pmf: Vec<f64>,
    /// Mass above `N_max` plus whatever the cluster law's deficit feeds.
    pub deficit: f64,
}

impl CountLaw {
    pub fn prob(&self, m: usize) -> f64 {
        self.pmf.get(m).copied().unwrap_or(0.0)
    }

    /// Rows `j,pmf,cumulative` starting at `j = 0`.
    pub fn to_csv(&self) -> String {
        pmf_csv(&self.pmf, 0)
    }
}

/// `P(total = m) = Σ_c e^{-λ} λ^c / c! · π^{*c}(m)`. Marks are at least 1, so
/// only `c <= m` contributes and the sum below `N_max` is exact.
pub fn compound_count_law(spec: &CompoundPoissonSpec, n_max: usize) -> CountLaw {
    let lambda = spec.intensity;
    let pi = &spec.cluster.pmf;
    let mut pmf = vec![0.0; n_max + 1];
    // conv[m] = π^{*c}(m), starting from the point mass at 0.
    let mut conv = vec![0.0; n_max + 1];
    conv[0] = 1.0;
    let mut weight = (-lambda).exp();
    for c in 0..=n_max {
        for (slot, v) in pmf.iter_mut().zip(&conv) {
            *slot += weight * v;
        }
        if c == n_max {
            break;
        }
        let mut next = vec![0.0; n_max + 1];
        for (m, &v) in conv.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (i, &p) in pi.iter().enumerate() {
                let t = m + i + 1;
                if t > n_max {
                    break;
                }
                next[t] += v * p;
            }
        }
        conv = next;
        weight *= lambda / (c + 1) as f64;
    }
    let deficit = 1.0 - pmf.iter().sum::<f64>();
    CountLaw { pmf, deficit }
}

/// Nonnegative step function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    /// `0 = b_0 < b_1 < ... < b_m = 1`.
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    /// `values[i]` on `[breaks[i], breaks[i+1])` with `breaks` running from 0
    /// to 1.
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return domain("need one more break than values");
        }
        if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return domain("breaks must run from 0 to 1");
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("breaks must be strictly increasing");
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return domain("step function values must be finite and >= 0");
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b <= x).saturating_sub(1);
        self.values[i.min(self.values.len() - 1)]
    }

    /// `(width, value)` per piece.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breaks
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[1] - w[0], v))
    }
}

/// `E exp(-Σ n_j f(x_j)) = exp(-λ Σ_pieces width · (1 - L_π(value)))`.
pub fn laplace_functional(spec: &CompoundPoissonSpec, f: &StepFunction) -> f64 {
    let exponent: f64 = f
        .pieces()
        .map(|(w, c)| w * (1.0 - spec.cluster.laplace(c)))
        .sum();
    (-spec.intensity * exponent).exp()
}

/// `Σ n_j f(x_j)` for one realization.
pub fn point_functional(points: &[MarkedPoint], f: &StepFunction) -> f64 {
    points.iter().map(|p| p.mark as f64 * f.eval(p.x)).sum()
}

/// `½ Σ |a - b| + ½ |deficit_a - deficit_b|` for truncated pmfs sharing an
/// index origin; missing entries count as zero.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let body: f64 = (0..len).map(|i| (at(a, i) - at(b, i)).abs()).sum();
    let da = 1.0 - a.iter().sum::<f64>();
    let db = 1.0 - b.iter().sum::<f64>();
    (0.5 * body + 0.5 * (da - db).abs()).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngStream;

    #[test]
    fn theta_examples() {
        assert_eq!(theta(1.0, 0.5).unwrap(), 0.5);
        assert_eq!(theta(0.5, 0.5).unwrap(), 0.25);
        assert_eq!(theta(1.0, 0.2).unwrap(), 0.2);
        assert!(theta(0.0, 0.5).is_err());
        assert!(theta(1.5, 0.5).is_err());
        assert!(theta(1.0, 1.0).is_err());
        assert!(theta(1.0, 0.0).is_err());
    }

    #[test]
    fn geometric_law() {
        let g = cluster_law_iid(0.5, 200);
        assert_eq!(&g.pmf[..3], &[0.5, 0.25, 0.125]);
        assert!((g.mean() - 2.0).abs() < 1e-12);
        assert!(g.deficit.abs() < 1e-15);
        assert_eq!(cluster_law_iid(0.2, 5).pmf[0], 0.2);
    }

    #[test]
    fn moving_max_law_k1() {
        let w = WalkParams::new(0.75).unwrap();
        let law = cluster_law_moving_max(&w, 1, 400).unwrap();
        assert!(law.deficit.abs() < 1e-8, "deficit {}", law.deficit);
        assert!((law.mean() - 4.0).abs() < 1e-6, "mean {}", law.mean());
        assert!(law.pmf.iter().all(|&p| p >= -1e-15));
        // Explicit two-set form.
        let q = w.escape_prob();
        let a = visit_set_law(&w, &SiteSet::new([-1, 0]).unwrap(), 401).unwrap();
        let b = visit_set_law(&w, &SiteSet::new([0, 1]).unwrap(), 401).unwrap();
        for j in 1..=20 {
            let want = (a.prob(j) - a.prob(j + 1) + b.prob(j) - b.prob(j + 1)) / q;
            assert!((law.prob(j) - want).abs() < 1e-15);
        }
        assert!(cluster_law_moving_max(&w, 0, 10).is_err());
    }

    #[test]
    fn moving_max_mean_matches_window() {
        for p in [0.6, 0.75, 0.3] {
            let w = WalkParams::new(p).unwrap();
            for k in 1..=3u32 {
                let law = cluster_law_moving_max(&w, k, 600).unwrap();
                let want = (k + 1) as f64 / w.escape_prob();
                assert!((law.mean() - want).abs() < 1e-6, "p={p} k={k}: {}", law.mean());
                assert!(law.deficit.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn count_law_feeds_cluster_law() {
        // π(j) = (p(j) - p(j+1)) / θ with p the exact count law.
        use crate::stochastic::Marginal;
        let w = WalkParams::new(0.75).unwrap();
        let kinds = [
            SceneryKind::Iid(Marginal::Uniform01),
            SceneryKind::MovingMax { k: 1, y: Marginal::Uniform01 },
            SceneryKind::MovingMax { k: 2, y: Marginal::Uniform01 },
        ];
        for kind in kinds {
            let p = exceedance_count_law(&w, &kind, 201).unwrap();
            let th = theta(kind.extremal_index(), w.escape_prob()).unwrap();
            let (pi, warn) = pi_from_p(&p.pmf, th).unwrap();
            assert!(warn.is_empty());
            let exact = cluster_law(&w, &kind, 200).unwrap();
            assert!(pi.pmf.iter().zip(&exact.pmf).all(|(a, b)| (a - b).abs() < 1e-12), "{kind}");
        }
    }

    #[test]
    fn pi_from_p_examples() {
        // p(j) = P(N(0) >= j) scaled: with q = θ = 0.5, p(j) = θ Σ_{m>=j} π(m).
        let q = 0.5;
        let p: Vec<f64> = (1..=41).map(|j| q * (1.0f64 - q).powi(j - 1)).collect();
        let (law, warn) = pi_from_p(&p, q).unwrap();
        assert!(warn.is_empty());
        let g = cluster_law_iid(q, 40);
        assert!(law.tv(&g) < 1e-12);

        let (law, warn) = pi_from_p(&[0.3; 6], 0.5).unwrap();
        assert!(law.pmf.iter().all(|&v| v == 0.0));
        assert_eq!(warn, vec![PiWarning::Degenerate]);

        let (_, warn) = pi_from_p(&[0.3, 0.4, 0.1], 0.5).unwrap();
        assert!(matches!(warn[0], PiWarning::Negative { j: 1, .. }));
        assert!(pi_from_p(&[0.3, 0.1], 0.0).is_err());
    }

    #[test]
    fn count_law_zero_mass() {
        let spec = CompoundPoissonSpec::new(0.5, cluster_law_iid(0.5, 200)).unwrap();
        let law = compound_count_law(&spec, 60);
        assert_eq!(law.prob(0), (-0.5f64).exp());
        assert!((law.prob(0) - 0.606531).abs() < 1e-6);
        assert!(law.deficit.abs() < 1e-12);
        for lambda in [0.01, 1.0, 3.7] {
            let spec = CompoundPoissonSpec::new(lambda, cluster_law_iid(0.3, 50)).unwrap();
            assert_eq!(compound_count_law(&spec, 0).pmf, vec![(-lambda).exp()]);
        }
        assert!(CompoundPoissonSpec::new(0.0, cluster_law_iid(0.5, 5)).is_err());
    }

    #[test]
    fn tiny_intensity_is_empty() {
        let spec = CompoundPoissonSpec::new(1e-9, cluster_law_iid(0.5, 50)).unwrap();
        let mut rng = RngStream::new(3, 0).cursor();
        let nonempty = (0..10_000)
            .filter(|_| !sample_compound_poisson(&spec, &mut rng).is_empty())
            .count();
        assert_eq!(nonempty, 0);
    }

    #[test]
    fn deficit_marks_overflow() {
        let law = ClusterLaw::from_pmf(vec![0.5]);
        let sampler = MarkSampler::new(&law);
        let mut rng = RngStream::new(4, 0).cursor();
        let over = (0..10_000).filter(|_| sampler.sample(&mut rng) == 2).count();
        assert!((over as f64 / 10_000.0 - 0.5).abs() < 0.03);
    }

    #[test]
    fn laplace_examples() {
        let spec = CompoundPoissonSpec::new(0.5, cluster_law_iid(0.5, 200)).unwrap();
        assert_eq!(laplace_functional(&spec, &StepFunction::constant(0.0).unwrap()), 1.0);
        let v = laplace_functional(&spec, &StepFunction::constant(2f64.ln()).unwrap());
        assert!((v - (-1.0f64 / 3.0).exp()).abs() < 1e-12);
        assert!(StepFunction::constant(-1.0).is_err());
        assert!(StepFunction::new(vec![0.0, 0.5], vec![1.0]).is_err());
        let f = StepFunction::new(vec![0.0, 0.25, 0.5, 1.0], vec![1.0, 0.0, 2.0]).unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(0.3), 0.0);
        assert_eq!(f.eval(0.5), 2.0);
        assert_eq!(f.eval(1.0), 2.0);
    }

    #[test]
    fn tv_examples() {
        let g = cluster_law_iid(0.5, 100);
        assert_eq!(g.tv(&g), 0.0);
        assert_eq!(tv_distance(&[1.0], &[0.0, 1.0]), 1.0);
        assert_eq!(tv_distance(&[0.5], &[0.5, 0.5]), 0.5);
    }

    #[test]
    fn csv_layout() {
        let csv = cluster_law_iid(0.5, 2).to_csv();
        assert_eq!(csv, "j,pmf,cumulative\n1,5e-1,5e-1\n2,2.5e-1,7.5e-1\n");
    }
}
