//! The three networks: DirectNet (image → indices), UNet (image → class
//! probabilities) and MaskNet (one-hot mask → indices).

mod arch;
mod featmap;
mod persist;
mod predict;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use cardioquant_tensor::{init, BnMode, Graph, ParamId, ParamStore, Scalar, Tensor, Var};

use crate::error::{Error, Result};
use crate::indices::{IndexGroup, IndexVector, INDEX_COUNT};

pub use arch::{Architecture, Init, ModelKind, PlannedParam};
pub use featmap::{export_feature_maps, feature_map_grid};
pub use persist::{load_weights, save_weights, weight_paths, WeightManifest, WEIGHT_FORMAT_VERSION};
pub use predict::{predict_direct, predict_direct_batch, predict_masknet_batch, predict_seg, predict_seg_batch, segment_batch, SegPrediction};
pub use train::{train_direct, train_masknet, train_unet, TrainConfig};

/// What a training run leaves behind besides the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub samples: usize,
    pub final_loss: f64,
    /// Mean training loss of every epoch.
    pub loss_history: Vec<f64>,
}

/// Named, ordered parameters of one network plus its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T = crate::Real> {
    pub architecture: Architecture,
    pub store: ParamStore<T>,
    pub meta: Option<TrainingMeta>,
}

impl<T: Scalar> ModelWeights<T> {
    /// Fresh parameters: fan-in uniform kernels, zero biases, unit gains.
    pub fn init<R: Rng + ?Sized>(architecture: Architecture, rng: &mut R) -> Result<Self> {
        architecture.validate()?;
        let mut store = ParamStore::new();
        for p in architecture.plan() {
            let value = match p.init {
                Init::FanIn(fan_in) => init::fan_in_uniform(p.shape.clone(), fan_in, rng),
                Init::Zeros => Tensor::zeros(p.shape.clone()),
                Init::Ones => Tensor::full(p.shape.clone(), T::one()),
            };
            store.add(p.name, value, p.trainable);
        }
        Ok(ModelWeights { architecture, store, meta: None })
    }

    /// Checks that the store holds exactly the architecture's plan.
    pub fn check_plan(&self) -> Result<()> {
        let plan = self.architecture.plan();
        if plan.len() != self.store.len() {
            return Err(Error::PlanMismatch(format!(
                "{} expects {} tensors, found {}",
                self.architecture,
                plan.len(),
                self.store.len()
            )));
        }
        for (p, e) in plan.iter().zip(self.store.entries()) {
            if p.name != e.name || p.shape != e.value.shape() || p.trainable != e.trainable {
                return Err(Error::PlanMismatch(format!(
                    "{}: expected {} {:?}, found {} {:?}",
                    self.architecture,
                    p.name,
                    p.shape,
                    e.name,
                    e.value.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        let mut store = ParamStore::new();
        for e in self.store.entries() {
            store.add(e.name.clone(), e.value.cast(), e.trainable);
        }
        ModelWeights { architecture: self.architecture.clone(), store, meta: self.meta.clone() }
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.architecture.kind != kind {
            return Err(Error::ArchitectureMismatch {
                expected: kind.to_string(),
                found: self.architecture.to_string(),
            });
        }
        Ok(())
    }
}

enum StoreAccess<'a, T> {
    Train(&'a mut ParamStore<T>),
    Infer(&'a ParamStore<T>),
}

struct Builder<'a, 'g, T> {
    g: &'g mut Graph<T>,
    store: StoreAccess<'a, T>,
    taps: Option<&'g mut Vec<(String, Var)>>,
}

impl<T: Scalar> Builder<'_, '_, T> {
    fn store(&self) -> &ParamStore<T> {
        match &self.store {
            StoreAccess::Train(s) => s,
            StoreAccess::Infer(s) => s,
        }
    }

    fn id(&self, name: &str) -> Result<ParamId> {
        self.store()
            .find(name)
            .ok_or_else(|| Error::PlanMismatch(format!("missing parameter {name}")))
    }

    fn p(&mut self, name: &str) -> Result<Var> {
        let id = self.id(name)?;
        let v = match &self.store {
            StoreAccess::Train(s) => self.g.param(s, id),
            StoreAccess::Infer(s) => self.g.param(s, id),
        };
        Ok(v)
    }

    fn conv(&mut self, name: &str, x: Var) -> Result<Var> {
        let k = self.p(&format!("{name}.weight"))?;
        let b = self.p(&format!("{name}.bias"))?;
        Ok(self.g.conv2d(x, k, b)?)
    }

    fn bn(&mut self, name: &str, x: Var) -> Result<Var> {
        let gamma = self.p(&format!("{name}.bn.gamma"))?;
        let beta = self.p(&format!("{name}.bn.beta"))?;
        let running = (self.id(&format!("{name}.bn.running_mean"))?, self.id(&format!("{name}.bn.running_var"))?);
        let y = match &mut self.store {
            StoreAccess::Train(s) => self.g.batch_norm(x, gamma, beta, s, running, BnMode::Train)?,
            StoreAccess::Infer(s) => self.g.batch_norm_infer(x, gamma, beta, s, running)?,
        };
        Ok(y)
    }

    fn conv_bn_relu(&mut self, name: &str, x: Var) -> Result<Var> {
        let y = self.conv(name, x)?;
        let y = self.bn(name, y)?;
        Ok(self.g.relu(y))
    }

    fn conv_relu_bn(&mut self, name: &str, x: Var) -> Result<Var> {
        let y = self.conv(name, x)?;
        let y = self.g.relu(y);
        self.bn(name, y)
    }

    fn dense(&mut self, name: &str, x: Var) -> Result<Var> {
        let w = self.p(&format!("{name}.weight"))?;
        let b = self.p(&format!("{name}.bias"))?;
        Ok(self.g.dense(x, w, b)?)
    }

    fn tap(&mut self, name: &str, v: Var) {
        if let Some(t) = self.taps.as_deref_mut() {
            t.push((name.to_string(), v));
        }
    }

    fn run(&mut self, arch: &Architecture, x: Var) -> Result<Var> {
        match arch.kind {
            ModelKind::Direct | ModelKind::MaskNet => {
                let mut h = x;
                for i in 1..=arch.channels.len() {
                    let name = format!("conv{i}");
                    h = if arch.kind == ModelKind::Direct {
                        self.conv_relu_bn(&name, h)?
                    } else {
                        self.conv_bn_relu(&name, h)?
                    };
                    self.tap(&name, h);
                    h = self.g.max_pool2(h)?;
                }
                let h = self.g.flatten(h)?;
                let h = self.dense("fc1", h)?;
                let h = self.g.relu(h);
                self.dense("fc2", h)
            }
            ModelKind::UNet => {
                let levels = arch.channels.len() - 1;
                let mut skips = Vec::with_capacity(levels);
                let mut h = x;
                for i in 1..=levels {
                    h = self.conv_bn_relu(&format!("enc{i}a"), h)?;
                    h = self.conv_bn_relu(&format!("enc{i}b"), h)?;
                    self.tap(&format!("enc{i}"), h);
                    skips.push(h);
                    h = self.g.max_pool2(h)?;
                }
                h = self.conv_bn_relu("bottleneck.a", h)?;
                h = self.conv_bn_relu("bottleneck.b", h)?;
                self.tap("bottleneck", h);
                for i in (1..=levels).rev() {
                    let skip = skips.pop().expect("one skip per encoder level");
                    h = self.g.upsample2_concat(h, skip)?;
                    h = self.conv_bn_relu(&format!("dec{i}a"), h)?;
                    h = self.conv_bn_relu(&format!("dec{i}b"), h)?;
                    self.tap(&format!("dec{i}"), h);
                }
                let k = self.p("head.weight")?;
                let b = self.p("head.bias")?;
                let logits = self.g.pointwise_conv(h, k, b)?;
                Ok(self.g.softmax_channels(logits)?)
            }
        }
    }
}

fn check_input<T: Scalar>(arch: &Architecture, x: &Tensor<T>) -> Result<()> {
    let s = arch.input_size;
    match *x.shape() {
        [_, c, h, w] if c == arch.in_channels && h == s && w == s => Ok(()),
        ref other => Err(Error::Validation(format!(
            "{arch} expects input [N,{},{s},{s}], got {other:?}",
            arch.in_channels
        ))),
    }
}

/// Records a training-mode forward pass (batch statistics, running stats
/// updated) and returns the output node.
pub fn forward_train<T: Scalar>(w: &mut ModelWeights<T>, g: &mut Graph<T>, x: Tensor<T>) -> Result<Var> {
    check_input(&w.architecture, &x)?;
    let xv = g.input(x);
    let arch = w.architecture.clone();
    Builder { g, store: StoreAccess::Train(&mut w.store), taps: None }.run(&arch, xv)
}

/// Inference forward pass with running statistics. `taps` collects the
/// named intermediate activations listed by [`Architecture::layer_names`].
pub fn forward_infer<T: Scalar>(
    w: &ModelWeights<T>,
    g: &mut Graph<T>,
    x: Tensor<T>,
    taps: Option<&mut Vec<(String, Var)>>,
) -> Result<Var> {
    check_input(&w.architecture, &x)?;
    let xv = g.input(x);
    Builder { g, store: StoreAccess::Infer(&w.store), taps }.run(&w.architecture, xv)
}

/// Scales indices to training units: areas by `size²`, lengths by `size`.
pub fn normalize_targets(v: &IndexVector, image_size: usize) -> [f64; INDEX_COUNT] {
    let s = image_size as f64;
    let mut out = [0.0; INDEX_COUNT];
    for (i, o) in out.iter_mut().enumerate() {
        *o = v.0[i] / s.powi(IndexGroup::of(i).length_power());
    }
    out
}

/// Inverse of [`normalize_targets`].
pub fn denormalize_targets(v: &[f64], image_size: usize) -> IndexVector {
    let s = image_size as f64;
    let mut out = [0.0; INDEX_COUNT];
    for (i, o) in out.iter_mut().enumerate() {
        *o = v[i] * s.powi(IndexGroup::of(i).length_power());
    }
    IndexVector(out)
}
