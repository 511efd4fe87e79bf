use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, for every
/// output cell, the flat input index that won the window (first maximum in
/// row-major scan order).
pub fn max_pool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (n, c, h, w) = input.dims4("max_pool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::shape(
            "max_pool2",
            format!("spatial extent {h}x{w} is not even"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best_idx = base + 2 * y * w + 2 * x;
                let mut best = src[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if src[idx] > best {
                        best = src[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx as u32);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, argmax))
}

pub fn max_pool2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(TensorError::shape(
            "max_pool2_backward",
            format!("{} routes for {} gradients", argmax.len(), grad_out.len()),
        ));
    }
    let mut grad = Tensor::zeros(input_shape.to_vec());
    let g = grad.data_mut();
    for (&idx, &d) in argmax.iter().zip(grad_out.data()) {
        g[idx as usize] += d;
    }
    Ok(grad)
}
