use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Nearest-neighbour 2× upsampling of `[N,C,H,W]`.
pub fn upsample2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("upsample2")?;
    let mut out = Tensor::zeros(vec![n, c, 2 * h, 2 * w]);
    write_upsampled(x.data(), n * c, h, w, out.data_mut());
    Ok(out)
}

fn write_upsampled<T: Scalar>(src: &[T], planes: usize, h: usize, w: usize, dst: &mut [T]) {
    let (oh, ow) = (2 * h, 2 * w);
    for p in 0..planes {
        let s = &src[p * h * w..][..h * w];
        let d = &mut dst[p * oh * ow..][..oh * ow];
        for y in 0..oh {
            let row = &s[(y / 2) * w..][..w];
            for (x, v) in d[y * ow..][..ow].iter_mut().enumerate() {
                *v = row[x / 2];
            }
        }
    }
}

/// Upsamples `low` 2× and stacks it in front of `skip` along the channel axis.
pub fn upsample2_concat<T: Scalar>(low: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = low.dims4("upsample2_concat")?;
    let (sn, c2, sh, sw) = skip.dims4("upsample2_concat")?;
    if sn != n || sh != 2 * h || sw != 2 * w {
        return Err(TensorError::shape(
            "upsample2_concat",
            format!(
                "skip {:?} must be [{n}, _, {}, {}] for low {:?}",
                skip.shape(),
                2 * h,
                2 * w,
                low.shape()
            ),
        ));
    }
    let plane = sh * sw;
    let mut out = Tensor::zeros(vec![n, c + c2, sh, sw]);
    let d = out.data_mut();
    for b in 0..n {
        let dst = &mut d[b * (c + c2) * plane..][..(c + c2) * plane];
        write_upsampled(&low.data()[b * c * h * w..][..c * h * w], c, h, w, &mut dst[..c * plane]);
        dst[c * plane..].copy_from_slice(&skip.data()[b * c2 * plane..][..c2 * plane]);
    }
    Ok(out)
}

/// Splits the concatenated gradient back into `(d_low, d_skip)`.
pub fn upsample2_concat_backward<T: Scalar>(
    low_shape: &[usize],
    skip_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = match *low_shape {
        [n, c, h, w] => (n, c, h, w),
        _ => return Err(TensorError::shape("upsample2_concat_backward", "low must be rank 4")),
    };
    let c2 = skip_shape[1];
    let (oh, ow) = (2 * h, 2 * w);
    let plane = oh * ow;
    let g = grad_out.data();
    let mut dlow = Tensor::zeros(low_shape.to_vec());
    let mut dskip = Tensor::zeros(skip_shape.to_vec());
    for b in 0..n {
        let src = &g[b * (c + c2) * plane..][..(c + c2) * plane];
        for ch in 0..c {
            let s = &src[ch * plane..][..plane];
            let d = &mut dlow.data_mut()[(b * c + ch) * h * w..][..h * w];
            for y in 0..oh {
                for x in 0..ow {
                    d[(y / 2) * w + x / 2] += s[y * ow + x];
                }
            }
        }
        dskip.data_mut()[b * c2 * plane..][..c2 * plane].copy_from_slice(&src[c * plane..]);
    }
    Ok((dlow, dskip))
}
