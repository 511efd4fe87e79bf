use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (d, &v) in g.data_mut().iter_mut().zip(x.data()) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    g
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Takes the sigmoid's output, not its input.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (d, &s) in g.data_mut().iter_mut().zip(y.data()) {
        *d *= s * (T::one() - s);
    }
    g
}

/// `(outer, channels, inner)` view of a tensor with channels on axis 1.
fn channel_layout<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(TensorError::shape(
            "softmax_channels",
            format!("need a channel axis, got {shape:?}"),
        ));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

/// Softmax across axis 1, independently for every other coordinate.
pub fn softmax_channels<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (outer, c, inner) = channel_layout(x)?;
    let mut y = x.clone();
    let d = y.data_mut();
    let mut buf = vec![0.0f64; c];
    for o in 0..outer {
        let base = o * c * inner;
        for i in 0..inner {
            let mut max = f64::NEG_INFINITY;
            for (ch, b) in buf.iter_mut().enumerate() {
                *b = d[base + ch * inner + i].as_f64();
                max = max.max(*b);
            }
            let mut sum = 0.0;
            for b in buf.iter_mut() {
                *b = (*b - max).exp();
                sum += *b;
            }
            for (ch, b) in buf.iter().enumerate() {
                d[base + ch * inner + i] = T::from_f64_lossy(b / sum);
            }
        }
    }
    Ok(y)
}

/// Takes the softmax output `y`.
pub fn softmax_channels_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (outer, c, inner) = channel_layout(y)?;
    let mut g = grad_out.clone();
    let (yd, gd) = (y.data(), g.data_mut());
    for o in 0..outer {
        let base = o * c * inner;
        for i in 0..inner {
            let dot: f64 = (0..c)
                .map(|ch| {
                    let k = base + ch * inner + i;
                    yd[k].as_f64() * gd[k].as_f64()
                })
                .sum();
            for ch in 0..c {
                let k = base + ch * inner + i;
                gd[k] = T::from_f64_lossy(yd[k].as_f64() * (gd[k].as_f64() - dot));
            }
        }
    }
    Ok(g)
}
