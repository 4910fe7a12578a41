//! Visit-count laws and ruin probabilities against independent oracles.

use proptest::prelude::*;
use rws_core::parallel::count_where;
use rws_core::stochastic::RngStream;
use rws_core::walk::{hit_before, visit_set_law, SiteSet, WalkParams, Walker};

/// Law of `N(A)` by pushing path weights forward in time, aggregated by
/// (position, visits so far). Positions are kept in `[-left, horizon]`; the
/// walks that fall off the left edge or still return after `horizon` steps
/// carry less mass than `ρ^{left}` and `ρ^{drift · horizon / 2}`.
fn path_weight_pmf(p: f64, sites: &[i64], horizon: usize, left: i64, cap: usize) -> Vec<f64> {
    let width = (left + horizon as i64 + 1) as usize;
    let idx = |x: i64| (x + left) as usize;
    let mut w = vec![vec![0.0f64; cap + 1]; width];
    let hits = |x: i64| sites.contains(&x);
    w[idx(0)][usize::from(hits(0)).min(cap)] = 1.0;
    let mut next = w.clone();
    for _ in 0..horizon {
        next.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v = 0.0));
        for (i, row) in w.iter().enumerate() {
            let x = i as i64 - left;
            for (c, &mass) in row.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (y, pr) in [(x + 1, p), (x - 1, 1.0 - p)] {
                    if y < -left || y > horizon as i64 {
                        continue;
                    }
                    let c2 = (c + usize::from(hits(y))).min(cap);
                    next[idx(y)][c2] += mass * pr;
                }
            }
        }
        std::mem::swap(&mut w, &mut next);
    }
    let mut pmf = vec![0.0; cap + 1];
    for row in &w {
        for (c, v) in row.iter().enumerate() {
            pmf[c] += v;
        }
    }
    pmf
}

#[test]
fn phase_type_matches_path_weights() {
    let sets: [&[i64]; 7] = [&[0], &[0, 1], &[-1, 0], &[-1, 0, 1], &[0, 2], &[-2, 0, 1], &[-1, 0, 3]];
    for p in [0.6, 0.75] {
        let walk = WalkParams::new(p).unwrap();
        for set in sets {
            let law = visit_set_law(&walk, &SiteSet::new(set.iter().copied()).unwrap(), 10).unwrap();
            let oracle = path_weight_pmf(p, set, 3_000, 150, 6);
            for j in 1..=3 {
                assert!(
                    (law.prob(j) - oracle[j]).abs() < 1e-6,
                    "p={p} A={set:?} j={j}: {} vs {}",
                    law.prob(j),
                    oracle[j]
                );
            }
        }
    }
}

#[test]
fn left_drift_is_the_mirror_image() {
    for (set, mirrored) in [(vec![0, 1], vec![-1, 0]), (vec![-2, 0, 1], vec![-1, 0, 2])] {
        let a = visit_set_law(&WalkParams::new(0.3).unwrap(), &SiteSet::new(set).unwrap(), 50).unwrap();
        let b = visit_set_law(&WalkParams::new(0.7).unwrap(), &SiteSet::new(mirrored).unwrap(), 50).unwrap();
        for j in 1..=50 {
            assert!((a.prob(j) - b.prob(j)).abs() < 1e-14);
        }
    }
}

/// `P(hit b before a | start x)` from the tridiagonal first-step equations.
fn ruin_by_elimination(p: f64, a: i64, b: i64) -> Vec<f64> {
    let m = (b - a - 1) as usize;
    // h_i - p h_{i+1} - (1-p) h_{i-1} = 0, h_a = 0, h_b = 1 (Thomas algorithm).
    let (lower, upper) = (-(1.0 - p), -p);
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    for i in 0..m {
        let rhs = if i == m - 1 { p } else { 0.0 };
        let denom = 1.0 - if i == 0 { 0.0 } else { lower * c[i - 1] };
        c[i] = upper / denom;
        d[i] = (rhs - if i == 0 { 0.0 } else { lower * d[i - 1] }) / denom;
    }
    let mut h = vec![0.0; m];
    for i in (0..m).rev() {
        h[i] = d[i] - if i + 1 < m { c[i] * h[i + 1] } else { 0.0 };
    }
    h
}

#[test]
fn ruin_matches_linear_system() {
    for p in [0.2, 0.45, 0.55, 0.6, 0.75, 0.9] {
        let walk = WalkParams::new(p).unwrap();
        let (a, b) = (-7, 13);
        let h = ruin_by_elimination(p, a, b);
        for x in a + 1..b {
            let got = hit_before(&walk, a, b, x).unwrap();
            assert!((got - h[(x - a - 1) as usize]).abs() < 1e-12, "p={p} x={x}");
        }
    }
}

#[test]
fn ruin_is_finite_on_wide_intervals() {
    for p in [0.05, 0.3, 0.7, 0.95] {
        let walk = WalkParams::new(p).unwrap();
        for x in [-999, -1, 0, 1, 999] {
            let h = hit_before(&walk, -1000, 1000, x).unwrap();
            assert!((0.0..=1.0).contains(&h), "p={p} x={x}: {h}");
        }
    }
}

#[test]
fn escape_probability_matches_no_return_frequency() {
    for p in [0.75, 0.3] {
        let walk = WalkParams::new(p).unwrap();
        let q = walk.escape_prob();
        let horizon = 400;
        let reps = 200_000u64;
        let stream = RngStream::new(31, 0);
        let escapes = count_where(reps, |r| {
            let mut w = Walker::new(&walk, &stream.child(r));
            (0..horizon).all(|_| w.step() != 0)
        });
        let f = escapes as f64 / reps as f64;
        let se = (q * (1.0 - q) / reps as f64).sqrt();
        assert!((f - q).abs() < 3.0 * se, "p={p}: {f} vs {q}");
    }
}

fn site_sets() -> impl Strategy<Value = Vec<i64>> {
    proptest::collection::btree_set(-4i64..=4, 0..5).prop_map(|s| {
        let mut v: Vec<i64> = s.into_iter().collect();
        if !v.contains(&0) {
            v.push(0);
        }
        v
    })
}

fn walk_param() -> impl Strategy<Value = f64> {
    prop_oneof![0.05f64..0.47, 0.53f64..0.95]
}

proptest! {
    #[test]
    fn phase_type_mass_is_conserved(p in walk_param(), set in site_sets(), j in 1usize..60) {
        let walk = WalkParams::new(p).unwrap();
        let law = visit_set_law(&walk, &SiteSet::new(set).unwrap(), j).unwrap();
        prop_assert!(law.mass_error() <= 1e-10);
        prop_assert!(law.pmf.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn visit_survival_is_nonincreasing(p in walk_param(), set in site_sets()) {
        let walk = WalkParams::new(p).unwrap();
        let law = visit_set_law(&walk, &SiteSet::new(set).unwrap(), 40).unwrap();
        for j in 1..=40 {
            prop_assert!(law.survival(j + 1) <= law.survival(j) + 1e-12);
        }
    }

    #[test]
    fn ruin_is_monotone_in_start(p in walk_param(), a in -30i64..0, width in 2i64..60) {
        let walk = WalkParams::new(p).unwrap();
        let b = a + width;
        let mut prev = 0.0;
        for x in a + 1..b {
            let h = hit_before(&walk, a, b, x).unwrap();
            prop_assert!(h >= prev - 1e-15 && h <= 1.0 + 1e-15);
            prev = h;
        }
    }
}
