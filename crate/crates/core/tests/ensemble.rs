use cardioquant::ensemble::*;
use cardioquant::{Error, IndexVector, INDEX_COUNT};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves the 3×3 normal equations by Gauss-Jordan elimination with
/// partial pivoting.
fn normal_equation_oracle(x1: &[f64], x2: &[f64], y: &[f64]) -> [f64; 3] {
    let mut a = [[0.0f64; 4]; 3];
    for k in 0..y.len() {
        let row = [x1[k], x2[k], 1.0];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            a[i][3] += row[i] * y[k];
        }
    }
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        for r in 0..3 {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]]
}

fn mse(pred: impl Iterator<Item = f64>, y: &[f64]) -> f64 {
    pred.zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

fn samples_from(f: impl Fn(usize, usize) -> (f64, f64, f64), n: usize) -> Vec<StackSample> {
    (0..n)
        .map(|k| {
            let mut s = StackSample {
                direct: IndexVector::default(),
                seg: IndexVector::default(),
                truth: IndexVector::default(),
            };
            for i in 0..INDEX_COUNT {
                let (d, g, t) = f(k, i);
                s.direct.0[i] = d;
                s.seg.0[i] = g;
                s.truth.0[i] = t;
            }
            s
        })
        .collect()
}

#[test]
fn exact_affine_truth_is_recovered() {
    let samples = samples_from(
        |k, i| {
            let d = (k * 7 % 13) as f64 + i as f64;
            let g = (k * 5 % 11) as f64 * 0.5;
            (d, g, 2.0 * d - g + 3.0)
        },
        40,
    );
    let w = fit_ensemble(&samples).unwrap();
    for a in w.coefficients {
        assert!((a.w_direct - 2.0).abs() < 1e-9);
        assert!((a.w_seg + 1.0).abs() < 1e-9);
        assert!((a.bias - 3.0).abs() < 1e-8);
    }
    assert!(w.training_mse.iter().all(|&m| m < 1e-18));
    assert_eq!(w.samples, 40);
}

#[test]
fn equal_blend_is_found() {
    let samples = samples_from(
        |k, _| {
            let d = (k as f64).sin() * 10.0;
            let g = (k as f64 * 1.3).cos() * 10.0;
            (d, g, 0.5 * d + 0.5 * g)
        },
        25,
    );
    let w = fit_ensemble(&samples).unwrap();
    assert!((w.coefficients[0].w_direct - 0.5).abs() < 1e-9);
    assert!((w.coefficients[0].w_seg - 0.5).abs() < 1e-9);
    assert!(w.coefficients[0].bias.abs() < 1e-9);
}

#[test]
fn hundred_random_instances_match_the_oracle_and_project() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for inst in 0..100 {
        let n = rng.random_range(5..200);
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let b1: f64 = rng.random_range(-5.0..5.0);
        let b2: f64 = rng.random_range(-5.0..5.0);
        let x1: Vec<f64> = truth.iter().map(|t| t + b1 + rng.random_range(-10.0..10.0)).collect();
        let x2: Vec<f64> = truth.iter().map(|t| 0.9 * t + b2 + rng.random_range(-20.0..20.0)).collect();
        let (a, ridge) = least_squares_affine(&x1, &x2, &truth);
        assert!(!ridge);
        let o = normal_equation_oracle(&x1, &x2, &truth);
        for (got, want) in [a.w_direct, a.w_seg, a.bias].iter().zip(o) {
            assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "instance {inst}: {got} vs {want}");
        }
        let fit = mse(x1.iter().zip(&x2).map(|(&d, &s)| a.apply(d, s)), &truth);
        let base1 = mse(x1.iter().copied(), &truth);
        let base2 = mse(x2.iter().copied(), &truth);
        assert!(fit <= base1 + 1e-9 * base1 && fit <= base2 + 1e-9 * base2, "instance {inst}");
    }
}

#[test]
fn residuals_are_orthogonal_to_the_design() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 60;
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..50.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..50.0)).collect();
    let y: Vec<f64> = (0..n).map(|k| 0.3 * x1[k] + 0.6 * x2[k] + rng.random_range(-3.0..3.0)).collect();
    let (a, _) = least_squares_affine(&x1, &x2, &y);
    let r: Vec<f64> = (0..n).map(|k| y[k] - a.apply(x1[k], x2[k])).collect();
    let dot = |v: &[f64]| v.iter().zip(&r).map(|(p, q)| p * q).sum::<f64>();
    assert!(dot(&x1).abs() < 1e-8);
    assert!(dot(&x2).abs() < 1e-8);
    assert!(r.iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn identical_predictors_fall_back_to_ridge() {
    let samples = samples_from(|k, _| (k as f64, k as f64, 2.0 * k as f64 + 1.0), 10);
    let w = fit_ensemble(&samples).unwrap();
    assert!(w.ridge.iter().all(|&r| r));
    let a = w.coefficients[0];
    assert!((a.w_direct + a.w_seg - 2.0).abs() < 1e-4);
    assert!(w.training_mse[0] < 1e-6);
}

#[test]
fn too_few_or_non_finite_samples_rejected() {
    let two = samples_from(|k, _| (k as f64, 1.0, 1.0), 2);
    assert!(matches!(fit_ensemble(&two), Err(Error::InsufficientData { needed: 3, got: 2 })));
    let mut bad = samples_from(|k, _| (k as f64, 1.0, 1.0), 5);
    bad[3].seg.0[4] = f64::NAN;
    assert!(matches!(fit_ensemble(&bad), Err(Error::Validation(_))));
}

#[test]
fn prediction_is_clamped_but_combination_is_not() {
    let samples = samples_from(|k, _| (k as f64, 0.5 * k as f64, k as f64 - 10.0), 20);
    let w = fit_ensemble(&samples).unwrap();
    let d = IndexVector([0.0; INDEX_COUNT]);
    assert!(combine(&w, &d, &d).0[0] < 0.0);
    assert_eq!(predict_ensemble(&w, &d, &d).0[0], 0.0);
}

fn instance() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0), 6..40)
}

fn split(v: &[(f64, f64, f64)]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (v.iter().map(|t| t.0).collect(), v.iter().map(|t| t.1).collect(), v.iter().map(|t| t.2).collect())
}

proptest! {
    #[test]
    fn fit_never_worse_than_either_base(v in instance()) {
        let (x1, x2, y) = split(&v);
        let (a, _) = least_squares_affine(&x1, &x2, &y);
        let fit = mse(x1.iter().zip(&x2).map(|(&d, &s)| a.apply(d, s)), &y);
        let b1 = mse(x1.iter().copied(), &y);
        let b2 = mse(x2.iter().copied(), &y);
        prop_assert!(fit <= b1 * (1.0 + 1e-9) + 1e-9);
        prop_assert!(fit <= b2 * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn permutation_invariant(v in instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = v.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (a, _) = least_squares_affine(&split(&v).0, &split(&v).1, &split(&v).2);
        let (b, _) = least_squares_affine(&split(&shuffled).0, &split(&shuffled).1, &split(&shuffled).2);
        for (p, q) in [(a.w_direct, b.w_direct), (a.w_seg, b.w_seg), (a.bias, b.bias)] {
            prop_assert!((p - q).abs() <= 1e-6 * p.abs().max(1.0));
        }
    }

    #[test]
    fn linear_in_the_target(v in instance(), c in -5.0f64..5.0) {
        let (x1, x2, y) = split(&v);
        let scaled: Vec<f64> = y.iter().map(|t| c * t).collect();
        let (a, _) = least_squares_affine(&x1, &x2, &y);
        let (b, _) = least_squares_affine(&x1, &x2, &scaled);
        for (p, q) in [(a.w_direct, b.w_direct), (a.w_seg, b.w_seg), (a.bias, b.bias)] {
            prop_assert!((c * p - q).abs() <= 1e-6 * q.abs().max(1.0));
        }
    }
}
