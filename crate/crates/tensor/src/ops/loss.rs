use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped from below before taking the log.
pub const PROB_FLOOR: f64 = 1e-7;

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// Mean squared difference.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    same_shape("mse", pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    Ok(T::from_f64_lossy(sum / pred.len() as f64))
}

pub fn mse_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, upstream: T) -> Tensor<T> {
    let scale = 2.0 * upstream.as_f64() / pred.len() as f64;
    let mut g = pred.clone();
    for (d, &t) in g.data_mut().iter_mut().zip(target.data()) {
        *d = T::from_f64_lossy((d.as_f64() - t.as_f64()) * scale);
    }
    g
}

/// `(outer, classes, inner)` for probabilities laid out with classes on axis 1.
fn class_layout<T: Scalar>(probs: &Tensor<T>, labels: &[u8]) -> Result<(usize, usize, usize)> {
    let shape = probs.shape();
    if shape.len() < 2 {
        return Err(TensorError::shape("cross_entropy", "probabilities need a class axis"));
    }
    let (outer, classes) = (shape[0], shape[1]);
    let inner: usize = shape[2..].iter().product();
    if labels.len() != outer * inner {
        return Err(TensorError::shape(
            "cross_entropy",
            format!("{} labels for {} positions", labels.len(), outer * inner),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(TensorError::shape(
            "cross_entropy",
            format!("label {bad} out of range for {classes} classes"),
        ));
    }
    Ok((outer, classes, inner))
}

/// Mean negative log of the true-class probability. `labels` holds one class
/// id per position, ordered like the probability tensor with the class axis
/// removed.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[u8]) -> Result<T> {
    let (outer, classes, inner) = class_layout(probs, labels)?;
    let p = probs.data();
    let mut sum = 0.0f64;
    for o in 0..outer {
        for i in 0..inner {
            let l = labels[o * inner + i] as usize;
            let v = p[(o * classes + l) * inner + i].as_f64().max(PROB_FLOOR);
            sum -= v.ln();
        }
    }
    Ok(T::from_f64_lossy(sum / (outer * inner) as f64))
}

pub fn cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, labels: &[u8], upstream: T) -> Result<Tensor<T>> {
    let (outer, classes, inner) = class_layout(probs, labels)?;
    let scale = upstream.as_f64() / (outer * inner) as f64;
    let p = probs.data();
    let mut g = Tensor::zeros_like(probs);
    let gd = g.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let k = (o * classes + labels[o * inner + i] as usize) * inner + i;
            let v = p[k].as_f64();
            if v > PROB_FLOOR {
                gd[k] = T::from_f64_lossy(-scale / v);
            }
        }
    }
    Ok(g)
}
