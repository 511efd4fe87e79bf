//! Per-channel batch normalization over the N, H and W axes.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running value in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Values the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn check_affine<T: Scalar>(c: usize, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::shape(
            "batch_norm",
            format!(
                "gamma/beta must be [{c}], got {:?}/{:?}",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    Ok(())
}

/// Normalizes with the batch's own (biased) statistics.
pub fn batch_norm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let (n, c, h, w) = input.dims4("batch_norm")?;
    check_affine(c, gamma, beta)?;
    let hw = h * w;
    let count = n * hw;
    if count < 2 {
        return Err(TensorError::DegenerateBatch { channel: 0 });
    }
    let x = input.data();
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut cache_mean = vec![0.0; c];
    let mut cache_var = vec![0.0; c];
    let mut inv_stds = vec![0.0; c];
    for ch in 0..c {
        let planes = || (0..n).map(move |b| (b * c + ch) * hw);
        let mut sum = 0.0f64;
        for p in planes() {
            sum += x[p..p + hw].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = sum / count as f64;
        let mut sq = 0.0f64;
        for p in planes() {
            sq += x[p..p + hw]
                .iter()
                .map(|v| {
                    let d = v.as_f64() - mean;
                    d * d
                })
                .sum::<f64>();
        }
        let var = sq / count as f64;
        let inv_std = 1.0 / (var + BN_EPS).sqrt();
        let g = gamma.data()[ch].as_f64();
        let bta = beta.data()[ch].as_f64();
        for p in planes() {
            for i in p..p + hw {
                let xh = (x[i].as_f64() - mean) * inv_std;
                xhat[i] = T::from_f64_lossy(xh);
                out[i] = T::from_f64_lossy(g * xh + bta);
            }
        }
        cache_mean[ch] = mean;
        cache_var[ch] = var;
        inv_stds[ch] = inv_std;
    }
    Ok((
        Tensor::new(input.shape().to_vec(), out)?,
        BnCache {
            xhat,
            inv_std: inv_stds,
            mean: cache_mean,
            var: cache_var,
        },
    ))
}

/// Normalizes with stored running statistics.
pub fn batch_norm_infer<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("batch_norm")?;
    check_affine(c, gamma, beta)?;
    check_affine(c, running_mean, running_var)?;
    let hw = h * w;
    let mut out = input.clone();
    for ch in 0..c {
        let inv_std = 1.0 / (running_var.data()[ch].as_f64() + BN_EPS).sqrt();
        let scale = gamma.data()[ch].as_f64() * inv_std;
        let shift = beta.data()[ch].as_f64() - running_mean.data()[ch].as_f64() * scale;
        for b in 0..n {
            let p = (b * c + ch) * hw;
            for v in &mut out.data_mut()[p..p + hw] {
                *v = T::from_f64_lossy(v.as_f64() * scale + shift);
            }
        }
    }
    Ok(out)
}

/// Blends batch statistics into the running buffers.
pub fn update_running_stats<T: Scalar>(
    cache: &BnCache<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
) {
    for (r, &m) in running_mean.data_mut().iter_mut().zip(&cache.mean) {
        *r = T::from_f64_lossy(BN_MOMENTUM * r.as_f64() + (1.0 - BN_MOMENTUM) * m);
    }
    for (r, &v) in running_var.data_mut().iter_mut().zip(&cache.var) {
        *r = T::from_f64_lossy(BN_MOMENTUM * r.as_f64() + (1.0 - BN_MOMENTUM) * v);
    }
}

pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn batch_norm_train_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BnCache<T>,
) -> Result<BnGrads<T>> {
    let (n, c, h, w) = grad_out.dims4("batch_norm_backward")?;
    let hw = h * w;
    let count = (n * hw) as f64;
    let dy = grad_out.data();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let planes = || (0..n).map(move |b| (b * c + ch) * hw);
        let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
        for p in planes() {
            for i in p..p + hw {
                let d = dy[i].as_f64();
                sum_dy += d;
                sum_dy_xhat += d * cache.xhat[i].as_f64();
            }
        }
        let g = gamma.data()[ch].as_f64();
        let k = g * cache.inv_std[ch] / count;
        for p in planes() {
            for i in p..p + hw {
                let v = count * dy[i].as_f64() - sum_dy - cache.xhat[i].as_f64() * sum_dy_xhat;
                dx[i] = T::from_f64_lossy(k * v);
            }
        }
        dgamma[ch] = T::from_f64_lossy(sum_dy_xhat);
        dbeta[ch] = T::from_f64_lossy(sum_dy);
    }
    Ok(BnGrads {
        input: Tensor::new(grad_out.shape().to_vec(), dx)?,
        gamma: Tensor::new(vec![c], dgamma)?,
        beta: Tensor::new(vec![c], dbeta)?,
    })
}

pub fn batch_norm_infer_backward<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    gamma: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
) -> Result<BnGrads<T>> {
    let (n, c, h, w) = grad_out.dims4("batch_norm_backward")?;
    let hw = h * w;
    let x = input.data();
    let dy = grad_out.data();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let inv_std = 1.0 / (running_var.data()[ch].as_f64() + BN_EPS).sqrt();
        let mean = running_mean.data()[ch].as_f64();
        let g = gamma.data()[ch].as_f64();
        let (mut sg, mut sb) = (0.0f64, 0.0f64);
        for b in 0..n {
            let p = (b * c + ch) * hw;
            for i in p..p + hw {
                let d = dy[i].as_f64();
                dx[i] = T::from_f64_lossy(d * g * inv_std);
                sg += d * (x[i].as_f64() - mean) * inv_std;
                sb += d;
            }
        }
        dgamma[ch] = T::from_f64_lossy(sg);
        dbeta[ch] = T::from_f64_lossy(sb);
    }
    Ok(BnGrads {
        input: Tensor::new(grad_out.shape().to_vec(), dx)?,
        gamma: Tensor::new(vec![c], dgamma)?,
        beta: Tensor::new(vec![c], dbeta)?,
    })
}
