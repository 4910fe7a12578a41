//! Limit laws against recursions, closed forms and simulation.

use proptest::prelude::*;
use rws_core::limits::{
    cluster_law_iid, cluster_law_moving_max, compound_count_law, exceedance_count_law, laplace_functional,
    pi_from_p, point_functional, PiWarning, sample_compound_poisson, tv_distance, ClusterLaw, CompoundPoissonSpec, MarkSampler,
    StepFunction,
};
use rws_core::scenery::SceneryKind;
use rws_core::stats::{chi_square_pvalue, mean_se};
use rws_core::stochastic::{Marginal, RngStream};
use rws_core::walk::WalkParams;

/// Compound Poisson count law by the Panjer recursion
/// `g(m) = (λ/m) Σ_j j π(j) g(m-j)`.
fn panjer(lambda: f64, pi: &[f64], n_max: usize) -> Vec<f64> {
    let mut g = vec![0.0; n_max + 1];
    g[0] = (-lambda).exp();
    for m in 1..=n_max {
        let s: f64 = (1..=m.min(pi.len())).map(|j| j as f64 * pi[j - 1] * g[m - j]).sum();
        g[m] = lambda / m as f64 * s;
    }
    g
}

#[test]
fn count_law_matches_panjer() {
    let walk = WalkParams::new(0.7).unwrap();
    let laws = [
        cluster_law_iid(0.5, 60),
        cluster_law_iid(0.2, 200),
        cluster_law_moving_max(&walk, 3, 100).unwrap(),
        ClusterLaw::from_pmf(vec![0.0, 0.0, 1.0]),
    ];
    for law in laws {
        for lambda in [0.3, 1.0, 4.5] {
            let spec = CompoundPoissonSpec::new(lambda, law.clone()).unwrap();
            let got = compound_count_law(&spec, 80);
            let want = panjer(lambda, &law.pmf, 80);
            for (m, (a, b)) in got.pmf.iter().zip(&want).enumerate() {
                assert!((a - b).abs() < 1e-13, "λ={lambda} m={m}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn geometric_tv_by_direct_summation() {
    let geo = |q: f64, j: usize| q * (1.0 - q).powi(j as i32 - 1);
    let direct: f64 = 0.5 * (1..=20_000).map(|j| (geo(0.5, j) - geo(0.6, j)).abs()).sum::<f64>();
    let a = cluster_law_iid(0.5, 1_000);
    let b = cluster_law_iid(0.6, 1_000);
    assert!((a.tv(&b) - direct).abs() < 1e-12, "{} vs {direct}", a.tv(&b));
    assert!((tv_distance(&a.pmf, &b.pmf) - a.tv(&b)).abs() == 0.0);
    // Crossing at j* = 1: the distance is π_0.6(1) - π_0.5(1) = 0.1.
    assert!((direct - 0.1).abs() < 1e-12);
}

#[test]
fn laplace_functional_closed_form() {
    // L_π(ln 2) = 1/3 for the geometric(1/2) law, so the functional is e^{-λ·2/3}.
    let spec = CompoundPoissonSpec::new(0.5, cluster_law_iid(0.5, 200)).unwrap();
    let f = StepFunction::constant(std::f64::consts::LN_2).unwrap();
    assert!((laplace_functional(&spec, &f) - (-1.0f64 / 3.0).exp()).abs() < 1e-14);
}

#[test]
fn wald_identities_hold_in_simulation() {
    let walk = WalkParams::new(0.6).unwrap();
    let specs = [
        CompoundPoissonSpec::new(0.5, cluster_law_iid(0.5, 200)).unwrap(),
        CompoundPoissonSpec::new(2.0, cluster_law_iid(0.2, 400)).unwrap(),
        CompoundPoissonSpec::new(0.1, cluster_law_moving_max(&walk, 2, 300).unwrap()).unwrap(),
    ];
    let reps = 100_000u64;
    for (i, spec) in specs.iter().enumerate() {
        let stream = RngStream::new(500, i as u64);
        let totals: Vec<f64> = (0..reps)
            .map(|r| {
                let pts = sample_compound_poisson(spec, &mut stream.child(r).cursor());
                pts.iter().map(|p| p.mark as f64).sum()
            })
            .collect();
        let (mean, se) = mean_se(&totals);
        let m1 = spec.cluster.mean();
        let m2: f64 = spec.cluster.pmf.iter().enumerate().map(|(j, p)| ((j + 1) as f64).powi(2) * p).sum();
        assert!((mean - spec.intensity * m1).abs() < 3.0 * se, "spec {i}: mean {mean} vs {}", spec.intensity * m1);
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        // The fourth moment of the cluster law bounds the spread of the sample variance.
        let m4: f64 = spec.cluster.pmf.iter().enumerate().map(|(j, p)| ((j + 1) as f64).powi(4) * p).sum();
        let var_se = ((spec.intensity * m4 + 2.0 * (spec.intensity * m2).powi(2)) / reps as f64).sqrt();
        assert!((var - spec.intensity * m2).abs() < 3.0 * var_se, "spec {i}: var {var} vs {}", spec.intensity * m2);
    }
}

#[test]
fn laplace_functional_matches_simulation() {
    let spec = CompoundPoissonSpec::new(1.5, cluster_law_iid(0.4, 300)).unwrap();
    let f = StepFunction::new(vec![0.0, 0.3, 0.7, 1.0], vec![0.5, 2.0, 0.1]).unwrap();
    let stream = RngStream::new(501, 0);
    let draws: Vec<f64> = (0..200_000u64)
        .map(|r| (-point_functional(&sample_compound_poisson(&spec, &mut stream.child(r).cursor()), &f)).exp())
        .collect();
    let (mean, se) = mean_se(&draws);
    let exact = laplace_functional(&spec, &f);
    assert!((mean - exact).abs() < 3.0 * se, "{mean} ± {se} vs {exact}");
}

#[test]
fn points_are_sorted_in_the_unit_interval() {
    let spec = CompoundPoissonSpec::new(20.0, cluster_law_iid(0.5, 50)).unwrap();
    let pts = sample_compound_poisson(&spec, &mut RngStream::new(502, 0).cursor());
    assert!(pts.windows(2).all(|w| w[0].x <= w[1].x));
    assert!(pts.iter().all(|p| (0.0..1.0).contains(&p.x) && p.mark >= 1));
}

#[test]
fn mark_sampler_frequencies() {
    // Deficit of 0.2 lands on J + 1 = 4.
    let law = ClusterLaw::from_pmf(vec![0.5, 0.2, 0.1]);
    let sampler = MarkSampler::new(&law);
    let mut rng = RngStream::new(503, 0).cursor();
    let mut counts = vec![0u64; 4];
    for _ in 0..200_000 {
        counts[sampler.sample(&mut rng) - 1] += 1;
    }
    let (_, pv) = chi_square_pvalue(&counts, &[0.5, 0.2, 0.1, 0.2]);
    assert!(pv > 1e-4, "{counts:?}");
}

#[test]
fn moving_max_mass_and_mean() {
    for p in [0.55, 0.6, 0.75, 0.9, 0.3] {
        let walk = WalkParams::new(p).unwrap();
        let q = walk.escape_prob();
        for k in 1..=4u32 {
            let law = cluster_law_moving_max(&walk, k, 4_000).unwrap();
            assert!(law.deficit.abs() < 1e-9, "p={p} k={k}: deficit {}", law.deficit);
            // Each of the k+1 window parts contributes 1/q.
            let want = (k + 1) as f64 / q;
            assert!((law.mean() - want).abs() < 1e-6 * want, "p={p} k={k}: {} vs {want}", law.mean());
        }
    }
}

#[test]
fn cluster_laws_follow_from_exceedance_counts() {
    let walk = WalkParams::new(0.7).unwrap();
    let q = walk.escape_prob();
    let y = Marginal::Pareto { alpha: 1.0 };
    for k in 0..=3u32 {
        let kind = if k == 0 { SceneryKind::Iid(y) } else { SceneryKind::MovingMax { k, y } };
        let p = exceedance_count_law(&walk, &kind, 41).unwrap();
        let (pi, warnings) = pi_from_p(&p.pmf, q / (k + 1) as f64).unwrap();
        assert!(warnings.is_empty());
        let direct = if k == 0 { cluster_law_iid(q, 40) } else { cluster_law_moving_max(&walk, k, 40).unwrap() };
        for j in 1..=40 {
            assert!((pi.prob(j) - direct.prob(j)).abs() < 1e-12, "k={k} j={j}");
        }
    }
}

fn cluster_laws() -> impl Strategy<Value = ClusterLaw> {
    proptest::collection::vec(0.0f64..1.0, 1..12).prop_map(|w| {
        let total: f64 = w.iter().sum::<f64>() + 1e-9;
        ClusterLaw::from_pmf(w.iter().map(|x| x / total).collect())
    })
}

proptest! {
    #[test]
    fn pi_telescopes(mut p in proptest::collection::vec(0.0f64..1.0, 2..40), theta in 0.05f64..1.0, zero_last in any::<bool>()) {
        p.sort_by(|a, b| b.total_cmp(a));
        if zero_last {
            *p.last_mut().unwrap() = 0.0;
        }
        let (pi, warnings) = pi_from_p(&p, theta).unwrap();
        let total: f64 = pi.pmf.iter().sum();
        prop_assert!((total - (p[0] - p[p.len() - 1]) / theta).abs() < 1e-12);
        let negative = warnings.iter().any(|w| matches!(w, PiWarning::Negative { .. }));
        prop_assert!(!negative);
    }

    #[test]
    fn count_law_recursion(law in cluster_laws(), lambda in 0.01f64..6.0) {
        let spec = CompoundPoissonSpec::new(lambda, law.clone()).unwrap();
        let got = compound_count_law(&spec, 60);
        let want = panjer(lambda, &law.pmf, 60);
        for (a, b) in got.pmf.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!(got.deficit >= -1e-12);
    }

    #[test]
    fn tv_is_a_metric(a in cluster_laws(), b in cluster_laws(), c in cluster_laws()) {
        let (ab, bc, ac) = (a.tv(&b), b.tv(&c), a.tv(&c));
        prop_assert!((ab - b.tv(&a)).abs() < 1e-15);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!(a.tv(&a) == 0.0);
    }

    #[test]
    fn laplace_functional_is_monotone(c1 in 0.0f64..5.0, c2 in 0.0f64..5.0, lambda in 0.1f64..5.0) {
        let spec = CompoundPoissonSpec::new(lambda, cluster_law_iid(0.4, 200)).unwrap();
        let (lo, hi) = if c1 < c2 { (c1, c2) } else { (c2, c1) };
        let l_lo = laplace_functional(&spec, &StepFunction::constant(lo).unwrap());
        let l_hi = laplace_functional(&spec, &StepFunction::constant(hi).unwrap());
        prop_assert!(l_hi <= l_lo + 1e-15 && l_lo <= 1.0 + 1e-15);
    }
}
