use painfusion::stats::{kendall_tau_b, pearson_r, rank_with_ties, spearman_rho, StatsError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Independent reference implementations.

/// Rank of each value by counting: 1 + #smaller + (#equal - 1) / 2.
fn ranks_by_counting(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

/// Tau-b by enumerating every pair.
fn kendall_by_pairs(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (c - d) as f64 / ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt()
}

/// A random vector with planted ties: values drawn from a small pool with some probability.
fn tied_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let pool: Vec<f64> = (0..rng.random_range(1..6))
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let tie_rate = rng.random_range(0.0..0.7);
    (0..n)
        .map(|_| {
            if rng.random_bool(tie_rate) {
                pool[rng.random_range(0..pool.len())]
            } else {
                // coarse grid makes incidental ties too
                (rng.random_range(-50.0..50.0f64)).round() / 10.0
            }
        })
        .collect()
}

fn not_constant(v: &[f64]) -> bool {
    v.iter().any(|&a| a != v[0])
}

#[test]
fn ranks_match_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.random_range(1..120);
        let v = tied_vector(&mut rng, n);
        assert_eq!(rank_with_ties(&v).unwrap(), ranks_by_counting(&v));
    }
}

#[test]
fn correlations_match_oracles_on_random_tied_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(3..=500);
        let x = tied_vector(&mut rng, n);
        let mut y = tied_vector(&mut rng, n);
        // mix in some dependence
        if rng.random_bool(0.5) {
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi += xi;
            }
        }
        if !not_constant(&x) || !not_constant(&y) {
            continue;
        }
        let rho = spearman_rho(&x, &y).unwrap().coefficient;
        let oracle = textbook_pearson(&ranks_by_counting(&x), &ranks_by_counting(&y));
        assert!((rho - oracle).abs() <= 1e-12, "spearman {rho} vs {oracle}");

        let r = pearson_r(&x, &y).unwrap().coefficient;
        assert!((r - textbook_pearson(&x, &y)).abs() <= 1e-12);

        let tau = kendall_tau_b(&x, &y).unwrap().coefficient;
        assert_eq!(tau, kendall_by_pairs(&x, &y), "n = {n}");
        checked += 1;
    }
}

#[test]
fn small_kendall_examples() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(
        kendall_tau_b(&x, &[5.0, 4.0, 3.0, 2.0, 1.0])
            .unwrap()
            .coefficient,
        -1.0
    );
    let y = [1.0, 3.0, 2.0, 4.0, 5.0];
    // 9 concordant, 1 discordant
    assert!((kendall_tau_b(&x, &y).unwrap().coefficient - 0.8).abs() < 1e-15);
    let tied = [1.0, 1.0, 2.0, 2.0, 3.0];
    let zeros = [-0.0, 0.0, 1.0, -0.0, 2.0];
    assert_eq!(
        kendall_tau_b(&zeros, &[0.0, -0.0, 1.0, 0.0, 1.0])
            .unwrap()
            .coefficient,
        kendall_by_pairs(&zeros, &[0.0, -0.0, 1.0, 0.0, 1.0])
    );
    assert_eq!(
        kendall_tau_b(&x, &tied).unwrap().coefficient,
        kendall_by_pairs(&x, &tied)
    );
}

#[test]
fn length_and_domain_errors() {
    assert_eq!(
        spearman_rho(&[1.0, 2.0], &[1.0]),
        Err(StatsError::LengthMismatch(2, 1))
    );
    assert!(matches!(
        pearson_r(&[], &[]),
        Err(StatsError::TooFewSamples { needed: 3, got: 0 })
    ));
    assert!(matches!(
        kendall_tau_b(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]),
        Err(StatsError::NonFiniteInput(_))
    ));
}

fn finite_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(-100i32..100).prop_map(f64::from), -1e3..1e3f64],
        n,
    )
}

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..60).prop_flat_map(|n| (finite_vec(n), finite_vec(n)))
}

proptest! {
    #[test]
    fn coefficients_bounded_and_symmetric((x, y) in paired()) {
        for f in [spearman_rho, kendall_tau_b, pearson_r] {
            let a = f(&x, &y).unwrap();
            let b = f(&y, &x).unwrap();
            prop_assert!((-1.0..=1.0).contains(&a.coefficient));
            prop_assert_eq!(a.degenerate, b.degenerate);
            prop_assert!((a.coefficient - b.coefficient).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_methods_ignore_monotone_transforms((x, y) in paired()) {
        let tx: Vec<f64> = x.iter().map(|v| (v / 200.0).exp() * 3.0 + 1.0).collect();
        let rho = spearman_rho(&x, &y).unwrap().coefficient;
        let rho_t = spearman_rho(&tx, &y).unwrap().coefficient;
        prop_assert!((rho - rho_t).abs() < 1e-12);
        let tau = kendall_tau_b(&x, &y).unwrap().coefficient;
        prop_assert_eq!(tau, kendall_tau_b(&tx, &y).unwrap().coefficient);
    }

    #[test]
    fn ranks_sum_to_triangular(x in (1usize..80).prop_flat_map(finite_vec)) {
        let n = x.len() as f64;
        let s: f64 = rank_with_ties(&x).unwrap().iter().sum();
        prop_assert!((s - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_input_is_degenerate(c in -5.0..5.0f64, y in finite_vec(10)) {
        let x = vec![c; 10];
        for f in [spearman_rho, kendall_tau_b, pearson_r] {
            let r = f(&x, &y).unwrap();
            prop_assert!(r.degenerate);
            prop_assert_eq!(r.coefficient, 0.0);
        }
    }
}
