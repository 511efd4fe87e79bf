use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `[N,F] · [F,G] + [G] → [N,G]`.
pub fn dense<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, f) = input.dims2("dense")?;
    let (wf, g) = weight.dims2("dense")?;
    if wf != f {
        return Err(TensorError::shape(
            "dense",
            format!("input has {f} features but weight expects {wf}"),
        ));
    }
    if bias.shape() != [g] {
        return Err(TensorError::shape(
            "dense",
            format!("bias must be [{g}], got {:?}", bias.shape()),
        ));
    }
    let mut out = Vec::with_capacity(n * g);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    T::gemm(n, f, g, input.data(), (f, 1), weight.data(), (g, 1), &mut out, true);
    Tensor::new(vec![n, g], out)
}

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, f) = input.dims2("dense_backward")?;
    let (_, g) = weight.dims2("dense_backward")?;
    if grad_out.shape() != [n, g] {
        return Err(TensorError::shape(
            "dense_backward",
            format!("grad has shape {:?}, expected [{n}, {g}]", grad_out.shape()),
        ));
    }
    let dy = grad_out.data();
    let mut dx = vec![T::zero(); n * f];
    T::gemm(n, g, f, dy, (g, 1), weight.data(), (1, g), &mut dx, false);
    let mut dw = vec![T::zero(); f * g];
    T::gemm(f, n, g, input.data(), (1, f), dy, (g, 1), &mut dw, false);
    let db = (0..g)
        .map(|j| T::from_f64_lossy((0..n).map(|i| dy[i * g + j].as_f64()).sum()))
        .collect();
    Ok(DenseGrads {
        input: Tensor::new(vec![n, f], dx)?,
        weight: Tensor::new(vec![f, g], dw)?,
        bias: Tensor::new(vec![g], db)?,
    })
}
