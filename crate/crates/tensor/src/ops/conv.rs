//! 3×3 same-padded, stride-1 cross-correlation, lowered to GEMM through an
//! im2col buffer that spans the whole batch.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Fills `col` (shape `[C·9, N·H·W]`, row-major) from an `[N,C,H,W]` buffer.
fn im2col<T: Scalar>(input: &[T], n: usize, c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    let row_len = n * hw;
    for ch in 0..c {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[(ch * TAPS + ky * KERNEL + kx) * row_len..][..row_len];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize) as usize;
                for b in 0..n {
                    let plane = &input[(b * c + ch) * hw..][..hw];
                    for y in 0..h {
                        let dst = &mut row[b * hw + y * w..][..w];
                        let yy = y as isize + dy;
                        if yy < 0 || yy >= h as isize || x0 >= x1 {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[yy as usize * w..][..w];
                        dst[..x0].fill(T::zero());
                        dst[x1..].fill(T::zero());
                        let sx0 = (x0 as isize + dx) as usize;
                        dst[x0..x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                    }
                }
            }
        }
    }
}

/// Scatter-adds `col` back onto an `[N,C,H,W]` gradient buffer.
fn col2im<T: Scalar>(col: &[T], n: usize, c: usize, h: usize, w: usize, out: &mut [T]) {
    let hw = h * w;
    let row_len = n * hw;
    for ch in 0..c {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[(ch * TAPS + ky * KERNEL + kx) * row_len..][..row_len];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize) as usize;
                if x0 >= x1 {
                    continue;
                }
                for b in 0..n {
                    let plane = &mut out[(b * c + ch) * hw..][..hw];
                    for y in 0..h {
                        let yy = y as isize + dy;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        let src = &row[b * hw + y * w..][..w];
                        let sx0 = (x0 as isize + dx) as usize;
                        let dst = &mut plane[yy as usize * w + sx0..][..x1 - x0];
                        for (d, &s) in dst.iter_mut().zip(&src[x0..x1]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

fn check_conv<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
) -> Result<((usize, usize, usize, usize), usize)> {
    let (n, c, h, w) = input.dims4("conv2d")?;
    let (k, kc, kh, kw) = kernel.dims4("conv2d")?;
    if kh != KERNEL || kw != KERNEL {
        return Err(TensorError::shape(
            "conv2d",
            format!("kernel must be 3x3, got {kh}x{kw}"),
        ));
    }
    if kc != c {
        return Err(TensorError::shape(
            "conv2d",
            format!("input has {c} channels but kernel expects {kc}"),
        ));
    }
    Ok(((n, c, h, w), k))
}

/// `[N,C,H,W] ⋆ [K,C,3,3] + [K] → [N,K,H,W]` with zero same-padding.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let ((n, c, h, w), k) = check_conv(input, kernel)?;
    if bias.shape() != [k] {
        return Err(TensorError::shape(
            "conv2d",
            format!("bias must be [{k}], got {:?}", bias.shape()),
        ));
    }
    let hw = h * w;
    let cols = n * hw;
    let depth = c * TAPS;
    let mut col = vec![T::zero(); depth * cols];
    im2col(input.data(), n, c, h, w, &mut col);
    let mut prod = vec![T::zero(); k * cols];
    T::gemm(k, depth, cols, kernel.data(), (depth, 1), &col, (cols, 1), &mut prod, false);

    let mut out = vec![T::zero(); n * k * hw];
    for (kk, &b) in bias.data().iter().enumerate() {
        for nn in 0..n {
            let src = &prod[kk * cols + nn * hw..][..hw];
            let dst = &mut out[(nn * k + kk) * hw..][..hw];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
    Tensor::new(vec![n, k, h, w], out)
}

pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let ((n, c, h, w), k) = check_conv(input, kernel)?;
    if grad_out.shape() != [n, k, h, w] {
        return Err(TensorError::shape(
            "conv2d_backward",
            format!("grad has shape {:?}, expected {:?}", grad_out.shape(), [n, k, h, w]),
        ));
    }
    let hw = h * w;
    let cols = n * hw;
    let depth = c * TAPS;

    // [N,K,HW] -> [K, N·HW]
    let mut dprod = vec![T::zero(); k * cols];
    let mut dbias = vec![T::zero(); k];
    for kk in 0..k {
        let mut acc = 0.0f64;
        for nn in 0..n {
            let src = &grad_out.data()[(nn * k + kk) * hw..][..hw];
            dprod[kk * cols + nn * hw..][..hw].copy_from_slice(src);
            acc += src.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        dbias[kk] = T::from_f64_lossy(acc);
    }

    let mut col = vec![T::zero(); depth * cols];
    im2col(input.data(), n, c, h, w, &mut col);
    let mut dkernel = vec![T::zero(); k * depth];
    T::gemm(k, cols, depth, &dprod, (cols, 1), &col, (1, cols), &mut dkernel, false);

    // reuse the column buffer for d(col) = Wᵀ · dprod
    T::gemm(depth, k, cols, kernel.data(), (1, depth), &dprod, (cols, 1), &mut col, false);
    let mut dinput = vec![T::zero(); input.len()];
    col2im(&col, n, c, h, w, &mut dinput);

    Ok(Conv2dGrads {
        input: Tensor::new(input.shape().to_vec(), dinput)?,
        kernel: Tensor::new(kernel.shape().to_vec(), dkernel)?,
        bias: Tensor::new(vec![k], dbias)?,
    })
}

fn check_pointwise<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4("pointwise_conv")?;
    let (k, wc) = weight.dims2("pointwise_conv")?;
    if wc != c {
        return Err(TensorError::shape(
            "pointwise_conv",
            format!("input has {c} channels but weight expects {wc}"),
        ));
    }
    if bias.shape() != [k] {
        return Err(TensorError::shape(
            "pointwise_conv",
            format!("bias must be [{k}], got {:?}", bias.shape()),
        ));
    }
    Ok((n, c, h * w, k))
}

/// Per-pixel channel mixing: `[N,C,H,W] × [K,C] + [K] → [N,K,H,W]`.
pub fn pointwise_conv<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, hw, k) = check_pointwise(input, weight, bias)?;
    let (_, _, h, w) = input.dims4("pointwise_conv")?;
    let mut out = vec![T::zero(); n * k * hw];
    for nn in 0..n {
        let x = &input.data()[nn * c * hw..][..c * hw];
        let y = &mut out[nn * k * hw..][..k * hw];
        T::gemm(k, c, hw, weight.data(), (c, 1), x, (hw, 1), y, false);
        for (kk, &b) in bias.data().iter().enumerate() {
            y[kk * hw..][..hw].iter_mut().for_each(|v| *v += b);
        }
    }
    Tensor::new(vec![n, k, h, w], out)
}

pub fn pointwise_conv_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let (n, c, h, w) = input.dims4("pointwise_conv_backward")?;
    let (k, _) = weight.dims2("pointwise_conv_backward")?;
    let hw = h * w;
    if grad_out.shape() != [n, k, h, w] {
        return Err(TensorError::shape(
            "pointwise_conv_backward",
            format!("grad has shape {:?}", grad_out.shape()),
        ));
    }
    let mut dinput = vec![T::zero(); input.len()];
    let mut dweight = vec![T::zero(); k * c];
    let mut dbias = vec![0.0f64; k];
    for nn in 0..n {
        let x = &input.data()[nn * c * hw..][..c * hw];
        let dy = &grad_out.data()[nn * k * hw..][..k * hw];
        T::gemm(k, hw, c, dy, (hw, 1), x, (1, hw), &mut dweight, true);
        T::gemm(c, k, hw, weight.data(), (1, c), dy, (hw, 1), &mut dinput[nn * c * hw..][..c * hw], false);
        for (kk, acc) in dbias.iter_mut().enumerate() {
            *acc += dy[kk * hw..][..hw].iter().map(|v| v.as_f64()).sum::<f64>();
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::new(input.shape().to_vec(), dinput)?,
        kernel: Tensor::new(weight.shape().to_vec(), dweight)?,
        bias: Tensor::new(vec![k], dbias.into_iter().map(T::from_f64_lossy).collect())?,
    })
}
