//! Layer outputs against naive loop-nest reference implementations, plus
//! the hand-checkable examples for each op.

use cardioquant_tensor::ops::{self, BnMode};
use cardioquant_tensor::{Graph, ParamStore, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0f32..1.0))
}

/// Six nested loops, zero padding, cross-correlation.
fn conv_oracle(x: &Tensor<f32>, k: &Tensor<f32>, b: &Tensor<f32>) -> Vec<f32> {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let kk = k.shape()[0];
    let mut out = vec![0f32; n * kk * h * w];
    for bn in 0..n {
        for o in 0..kk {
            for y in 0..h as isize {
                for xx in 0..w as isize {
                    let mut acc = b.data()[o] as f64;
                    for ch in 0..c {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (iy, ix) = (y + ky - 1, xx + kx - 1);
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[((bn * c + ch) * h + iy as usize) * w + ix as usize];
                                let kv = k.data()[((o * c + ch) * 3 + ky as usize) * 3 + kx as usize];
                                acc += xv as f64 * kv as f64;
                            }
                        }
                    }
                    out[((bn * kk + o) * h + y as usize) * w + xx as usize] = acc as f32;
                }
            }
        }
    }
    out
}

fn pool_oracle(x: &Tensor<f32>) -> Vec<f32> {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let mut out = Vec::new();
    for p in 0..n * c {
        for y in (0..h).step_by(2) {
            for xx in (0..w).step_by(2) {
                let mut m = f32::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(x.data()[(p * h + y + dy) * w + xx + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

fn matmul_oracle(x: &Tensor<f32>, wt: &Tensor<f32>, b: &Tensor<f32>) -> Vec<f32> {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let g = wt.shape()[1];
    let mut out = vec![0f32; n * g];
    for i in 0..n {
        for j in 0..g {
            let mut acc = b.data()[j] as f64;
            for p in 0..f {
                acc += x.data()[i * f + p] as f64 * wt.data()[p * g + j] as f64;
            }
            out[i * g + j] = acc as f32;
        }
    }
    out
}

fn max_abs(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[test]
fn conv_identity_kernel_and_zero_kernel() {
    let x = Tensor::full(vec![1, 1, 3, 3], 1.0f32);
    let mut k = Tensor::zeros(vec![1, 1, 3, 3]);
    k.data_mut()[4] = 1.0;
    let y = ops::conv2d(&x, &k, &Tensor::zeros(vec![1])).unwrap();
    assert_eq!(y, x);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 3, 5, 6], &mut rng);
    let y = ops::conv2d(&x, &Tensor::zeros(vec![4, 3, 3, 3]), &Tensor::full(vec![4], 2.5)).unwrap();
    assert_eq!(y.shape(), &[2, 4, 5, 6]);
    assert!(y.data().iter().all(|&v| v == 2.5));
}

#[test]
fn conv_matches_loop_nest() {
    for (seed, shape) in [(0u64, [2usize, 4, 8, 8]), (1, [4, 8, 16, 16]), (2, [1, 1, 5, 7]), (3, [3, 2, 1, 1])] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&shape, &mut rng);
        let k = random(&[5, shape[1], 3, 3], &mut rng);
        let b = random(&[5], &mut rng);
        let y = ops::conv2d(&x, &k, &b).unwrap();
        assert!(max_abs(y.data(), &conv_oracle(&x, &k, &b)) <= 1e-5, "shape {shape:?}");
    }
}

#[test]
fn conv_rejects_channel_mismatch() {
    let x = Tensor::<f32>::zeros(vec![1, 2, 4, 4]);
    let k = Tensor::zeros(vec![1, 3, 3, 3]);
    let err = ops::conv2d(&x, &k, &Tensor::zeros(vec![1])).unwrap_err();
    assert!(matches!(err, TensorError::Shape { .. }));
}

#[test]
fn max_pool_examples() {
    let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    let (y, arg) = ops::max_pool2(&x).unwrap();
    assert_eq!(y.data(), &[4.0]);
    assert_eq!(arg, vec![3]);

    let c = Tensor::full(vec![2, 3, 4, 6], -0.75f32);
    let (y, _) = ops::max_pool2(&c).unwrap();
    assert!(y.data().iter().all(|&v| v == -0.75));

    for (seed, shape) in [(5u64, [1usize, 3, 8, 8]), (6, [4, 8, 16, 16])] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&shape, &mut rng);
        let (y, _) = ops::max_pool2(&x).unwrap();
        assert_eq!(y.data(), pool_oracle(&x).as_slice());
    }

    let odd = Tensor::<f32>::zeros(vec![1, 1, 3, 4]);
    assert!(matches!(ops::max_pool2(&odd), Err(TensorError::Shape { .. })));
}

#[test]
fn dense_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(&[3, 4], &mut rng);
    let eye = Tensor::from_fn(vec![4, 4], |i| if i / 4 == i % 4 { 1.0f32 } else { 0.0 });
    assert_eq!(ops::dense(&x, &eye, &Tensor::zeros(vec![4])).unwrap(), x);

    let b = Tensor::new(vec![2], vec![0.5f32, -1.5]).unwrap();
    let y = ops::dense(&x, &Tensor::zeros(vec![4, 2]), &b).unwrap();
    for row in y.data().chunks(2) {
        assert_eq!(row, b.data());
    }

    for (seed, (n, f, g)) in [(10u64, (5usize, 7usize, 3usize)), (11, (32, 256, 64)), (12, (1, 1, 1))] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[n, f], &mut rng);
        let w = random(&[f, g], &mut rng);
        let b = random(&[g], &mut rng);
        let y = ops::dense(&x, &w, &b).unwrap();
        assert!(max_abs(y.data(), &matmul_oracle(&x, &w, &b)) <= 1e-5);
    }

    let err = ops::dense(&x, &Tensor::zeros(vec![5, 2]), &Tensor::zeros(vec![2])).unwrap_err();
    assert!(matches!(err, TensorError::Shape { .. }));
}

#[test]
fn batch_norm_examples() {
    let x = Tensor::full(vec![2, 3, 4, 4], 7.0f32);
    let ones = Tensor::full(vec![3], 1.0f32);
    let zeros = Tensor::zeros(vec![3]);
    let (y, _) = ops::batch_norm_train(&x, &ones, &zeros).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
    let (y, _) = ops::batch_norm_train(&x, &ones, &Tensor::full(vec![3], 5.0)).unwrap();
    assert!(y.data().iter().all(|&v| v == 5.0));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::from_fn(vec![4, 3, 8, 8], |_| rng.random_range(-3.0f32..9.0));
    let (y, _) = ops::batch_norm_train(&x, &ones, &zeros).unwrap();
    for ch in 0..3 {
        let vals: Vec<f64> = (0..4)
            .flat_map(|b| y.data()[(b * 3 + ch) * 64..][..64].to_vec())
            .map(|v| v as f64)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-4, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-3, "var {var}");
    }

    let single = Tensor::full(vec![1, 2, 1, 1], 1.0f32);
    let err = ops::batch_norm_train(&single, &Tensor::full(vec![2], 1.0), &Tensor::zeros(vec![2])).unwrap_err();
    assert!(matches!(err, TensorError::DegenerateBatch { .. }));
}

#[test]
fn batch_norm_running_stats_and_infer_mode() {
    let mut store = ParamStore::<f64>::new();
    let gamma = store.add("g", Tensor::full(vec![1], 1.0), true);
    let beta = store.add("b", Tensor::zeros(vec![1]), true);
    let rm = store.add("rm", Tensor::zeros(vec![1]), false);
    let rv = store.add("rv", Tensor::full(vec![1], 1.0), false);
    let x = Tensor::new(vec![2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();

    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let (gv, bv) = (g.param(&store, gamma), g.param(&store, beta));
    g.batch_norm(xv, gv, bv, &mut store, (rm, rv), BnMode::Train).unwrap();
    // batch mean 4, biased variance 5
    assert!((store.get(rm).item() - 0.4).abs() < 1e-12);
    assert!((store.get(rv).item() - (0.9 + 0.5)).abs() < 1e-12);

    let mut g = Graph::new();
    let xv = g.input(x);
    let (gv, bv) = (g.param(&store, gamma), g.param(&store, beta));
    let y = g.batch_norm(xv, gv, bv, &mut store, (rm, rv), BnMode::Infer).unwrap();
    let want = (1.0 - 0.4) / (1.4f64 + 1e-5).sqrt();
    assert!((g.value(y).data()[0] - want).abs() < 1e-12);
    // inference leaves the buffers alone
    assert!((store.get(rm).item() - 0.4).abs() < 1e-12);
}

#[test]
fn activation_examples() {
    let x = Tensor::new(vec![2], vec![-1.0f32, 2.0]).unwrap();
    assert_eq!(ops::relu(&x).data(), &[0.0, 2.0]);
    assert_eq!(ops::sigmoid(&Tensor::scalar(0.0f32)).item(), 0.5);
    let logits = Tensor::full(vec![1, 3, 2, 2], 0.7f32);
    let p = ops::softmax_channels(&logits).unwrap();
    assert!(p.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-7));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let logits = random(&[2, 3, 4, 4], &mut rng).map(|v| 20.0 * v);
    let p = ops::softmax_channels(&logits).unwrap();
    for b in 0..2 {
        for i in 0..16 {
            let s: f32 = (0..3).map(|c| p.data()[(b * 3 + c) * 16 + i]).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn upsample_concat_examples() {
    let low = Tensor::new(vec![1, 1, 1, 1], vec![3.5f32]).unwrap();
    let up = ops::upsample2(&low).unwrap();
    assert_eq!(up.shape(), &[1, 1, 2, 2]);
    assert!(up.data().iter().all(|&v| v == 3.5));

    let low = Tensor::<f32>::zeros(vec![2, 3, 4, 4]);
    let skip = Tensor::full(vec![2, 5, 8, 8], 1.0f32);
    let cat = ops::upsample2_concat(&low, &skip).unwrap();
    assert_eq!(cat.shape(), &[2, 8, 8, 8]);
    assert_eq!(cat.data()[..3 * 64].iter().filter(|&&v| v == 0.0).count(), 3 * 64);

    let bad = Tensor::<f32>::zeros(vec![2, 5, 7, 8]);
    assert!(matches!(ops::upsample2_concat(&low, &bad), Err(TensorError::Shape { .. })));
}

#[test]
fn loss_examples() {
    let x = Tensor::new(vec![2], vec![0.0f32, 2.0]).unwrap();
    assert_eq!(ops::mse(&x, &x).unwrap(), 0.0);
    let t = Tensor::new(vec![2], vec![1.0f32, 0.0]).unwrap();
    assert_eq!(ops::mse(&x, &t).unwrap(), 2.5);
    assert!(ops::mse(&x, &Tensor::zeros(vec![3])).is_err());

    let probs = Tensor::new(vec![1, 3, 1, 2], vec![1.0f32, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    assert_eq!(ops::cross_entropy(&probs, &[0, 1]).unwrap(), 0.0);
    // a zero probability is clamped rather than producing infinity
    let ce = ops::cross_entropy(&probs, &[2, 2]).unwrap();
    assert!((ce as f64 - (-(1e-7f64).ln())).abs() < 1e-4);
}
