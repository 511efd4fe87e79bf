//! Second-level predictor: per-index affine regression of the truth on
//! the two base predictions.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indices::{IndexVector, INDEX_COUNT};

/// Ridge strength used when a design matrix is rank-deficient.
pub const RIDGE_LAMBDA: f64 = 1e-6;
const MIN_SAMPLES: usize = 3;
/// Relative size below which a diagonal entry of R counts as zero.
const RANK_TOL: f64 = 1e-10;

/// One frame's base predictions and truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackSample {
    pub direct: IndexVector,
    pub seg: IndexVector,
    pub truth: IndexVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w_direct: f64,
    pub w_seg: f64,
    pub bias: f64,
}

impl Affine {
    pub fn apply(&self, direct: f64, seg: f64) -> f64 {
        self.w_direct * direct + self.w_seg * seg + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub coefficients: [Affine; INDEX_COUNT],
    pub samples: usize,
    /// Mean squared residual of each fit on its training samples.
    pub training_mse: [f64; INDEX_COUNT],
    /// Indices whose design was rank-deficient and fell back to ridge.
    pub ridge: [bool; INDEX_COUNT],
}

/// Least squares of `y` on `[x1, x2, 1]`: Householder QR, or ridge
/// normal equations when the design is rank-deficient. Returns the
/// coefficients and whether ridge was used.
pub fn least_squares_affine(x1: &[f64], x2: &[f64], y: &[f64]) -> (Affine, bool) {
    let n = y.len();
    let design = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => x1[r],
        1 => x2[r],
        _ => 1.0,
    });
    let target = DVector::from_column_slice(y);
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..3).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let full_rank = scale > 0.0 && (0..3).all(|i| r[(i, i)].abs() > RANK_TOL * scale);
    let coef: Vector3<f64> = if full_rank {
        let qty = qr.q().transpose() * &target;
        let sol = r.solve_upper_triangular(&qty).expect("non-singular R");
        Vector3::new(sol[0], sol[1], sol[2])
    } else {
        let xtx: Matrix3<f64> = (design.transpose() * &design).fixed_view::<3, 3>(0, 0).into_owned();
        let xty: Vector3<f64> = (design.transpose() * &target).fixed_rows::<3>(0).into_owned();
        let reg = xtx + Matrix3::identity() * RIDGE_LAMBDA;
        reg.cholesky().expect("ridge system is positive definite").solve(&xty)
    };
    (Affine { w_direct: coef[0], w_seg: coef[1], bias: coef[2] }, !full_rank)
}

/// Fits the eleven independent affine maps.
pub fn fit_ensemble(pairs: &[StackSample]) -> Result<EnsembleWeights> {
    if pairs.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData { needed: MIN_SAMPLES, got: pairs.len() });
    }
    if let Some(k) = pairs
        .iter()
        .position(|p| !(p.direct.is_finite() && p.seg.is_finite() && p.truth.is_finite()))
    {
        return Err(Error::Validation(format!("stacking sample {k} has non-finite values")));
    }
    let mut coefficients = [Affine { w_direct: 0.0, w_seg: 0.0, bias: 0.0 }; INDEX_COUNT];
    let mut training_mse = [0.0; INDEX_COUNT];
    let mut ridge = [false; INDEX_COUNT];
    for i in 0..INDEX_COUNT {
        let x1: Vec<f64> = pairs.iter().map(|p| p.direct.0[i]).collect();
        let x2: Vec<f64> = pairs.iter().map(|p| p.seg.0[i]).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.truth.0[i]).collect();
        let (a, used_ridge) = least_squares_affine(&x1, &x2, &y);
        coefficients[i] = a;
        ridge[i] = used_ridge;
        training_mse[i] = x1
            .iter()
            .zip(&x2)
            .zip(&y)
            .map(|((&d, &s), &t)| (a.apply(d, s) - t).powi(2))
            .sum::<f64>()
            / y.len() as f64;
    }
    Ok(EnsembleWeights { coefficients, samples: pairs.len(), training_mse, ridge })
}

/// Per-index affine combination, unclamped.
pub fn combine(w: &EnsembleWeights, direct: &IndexVector, seg: &IndexVector) -> IndexVector {
    IndexVector(std::array::from_fn(|i| w.coefficients[i].apply(direct.0[i], seg.0[i])))
}

/// Per-index affine combination clamped at zero.
pub fn predict_ensemble(w: &EnsembleWeights, direct: &IndexVector, seg: &IndexVector) -> IndexVector {
    combine(w, direct, seg).clamp_non_negative()
}
