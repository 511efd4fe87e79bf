//! Central finite-difference check of [`Graph::backward`].
//!
//! The forward closure is evaluated on perturbed copies of each parameter;
//! the scalar being differentiated is a fixed random projection `Σ y·r` of
//! the closure's output, recomputed in f64 from the output values. Nothing
//! here touches the backward kernels except the single analytic sweep being
//! checked.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Larger parameters are checked on a seeded random subset.
    pub max_elements_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-3,
            max_elements_per_param: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over the checked
    /// elements; zero when both norms vanish.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// Below this norm a gradient is treated as exactly zero.
const ZERO_NORM: f64 = 1e-7;

fn projection<T: Scalar>(y: &Tensor<T>, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(v, w)| v.as_f64() * w).sum()
}

/// Compares analytic and numeric gradients for every trainable entry of
/// `store`. `forward` must be deterministic given the store contents.
pub fn check_gradients<T, F>(store: &mut ParamStore<T>, mut forward: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&mut Graph<T>, &mut ParamStore<T>) -> Result<Var>,
{
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);

    let mut g = Graph::new();
    let out = forward(&mut g, store)?;
    let r: Vec<f64> = (0..g.value(out).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r_t = Tensor::new(
        g.value(out).shape().to_vec(),
        r.iter().map(|&v| T::from_f64_lossy(v)).collect(),
    )?;
    let rv = g.input(r_t);
    let prod = g.mul(out, rv)?;
    let loss = g.sum(prod);
    let grads = g.backward(loss, store)?;

    let mut report = Vec::new();
    for id in store.ids().collect::<Vec<_>>() {
        if !store.entry(id).trainable {
            continue;
        }
        let len = store.get(id).len();
        let picks: Vec<usize> = if len <= opts.max_elements_per_param {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, opts.max_elements_per_param).into_vec();
            v.sort_unstable();
            v
        };
        let (mut diff2, mut an2, mut nu2) = (0.0f64, 0.0f64, 0.0f64);
        for &i in &picks {
            let orig = store.get(id).data()[i];
            let plus = T::from_f64_lossy(orig.as_f64() + opts.step);
            let minus = T::from_f64_lossy(orig.as_f64() - opts.step);

            store.get_mut(id).data_mut()[i] = plus;
            let mut gp = Graph::new();
            let yp = forward(&mut gp, store)?;
            let lp = projection(gp.value(yp), &r);

            store.get_mut(id).data_mut()[i] = minus;
            let mut gm = Graph::new();
            let ym = forward(&mut gm, store)?;
            let lm = projection(gm.value(ym), &r);

            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (lp - lm) / (plus.as_f64() - minus.as_f64());
            let analytic = grads.param(id).data()[i].as_f64();
            diff2 += (analytic - numeric).powi(2);
            an2 += analytic * analytic;
            nu2 += numeric * numeric;
        }
        let denom = an2.sqrt().max(nu2.sqrt());
        let rel_error = if denom < ZERO_NORM { 0.0 } else { diff2.sqrt() / denom };
        report.push(ParamCheck {
            name: store.entry(id).name.clone(),
            checked: picks.len(),
            rel_error,
            analytic_norm: an2.sqrt(),
        });
    }
    Ok(GradCheckReport { params: report })
}
