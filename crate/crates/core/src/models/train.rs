//! Minibatch Adam training loops.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use cardioquant_tensor::{AdamConfig, AdamState, Graph, Tensor};

use super::{forward_train, normalize_targets, Architecture, ModelKind, ModelWeights, TrainingMeta};
use crate::error::{Error, Result};
use crate::phantom::Subject;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Master seed of this run; initialization and shuffling use derived
    /// streams.
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        let (epochs, batch_size) = match kind {
            ModelKind::Direct | ModelKind::MaskNet => (40, 32),
            ModelKind::UNet => (30, 8),
        };
        TrainConfig { epochs, batch_size, lr: 1e-3, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

enum Targets {
    /// Normalized index vectors, `[n, 11]` row-major.
    Regression(Vec<f32>, usize),
    /// Per-pixel class ids, `hw` per sample.
    Classes(Vec<u8>, usize),
}

struct Samples {
    /// `[C, H, W]` inputs, concatenated.
    inputs: Vec<f32>,
    sample_shape: [usize; 3],
    targets: Targets,
    len: usize,
}

impl Samples {
    fn batch(&self, idx: &[usize]) -> Result<(Tensor<f32>, TargetBatch)> {
        let per = self.sample_shape.iter().product::<usize>();
        let mut x = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            x.extend_from_slice(&self.inputs[i * per..(i + 1) * per]);
        }
        let [c, h, w] = self.sample_shape;
        let x = Tensor::new(vec![idx.len(), c, h, w], x)?;
        let t = match &self.targets {
            Targets::Regression(v, k) => {
                let mut t = Vec::with_capacity(idx.len() * k);
                for &i in idx {
                    t.extend_from_slice(&v[i * k..(i + 1) * k]);
                }
                TargetBatch::Regression(Tensor::new(vec![idx.len(), *k], t)?)
            }
            Targets::Classes(v, hw) => {
                let mut t = Vec::with_capacity(idx.len() * hw);
                for &i in idx {
                    t.extend_from_slice(&v[i * hw..(i + 1) * hw]);
                }
                TargetBatch::Classes(t)
            }
        };
        Ok((x, t))
    }
}

enum TargetBatch {
    Regression(Tensor<f32>),
    Classes(Vec<u8>),
}

fn frame_size(subjects: &[&Subject]) -> Result<usize> {
    let first = subjects
        .iter()
        .flat_map(|s| s.frames.first())
        .next()
        .ok_or_else(|| Error::Validation("training set is empty".into()))?;
    let size = first.labels.width();
    for s in subjects {
        for f in &s.frames {
            if f.labels.width() != size || f.labels.height() != size {
                return Err(Error::Validation(format!("subject {} mixes frame sizes", s.id)));
            }
        }
    }
    Ok(size)
}

fn regression_samples(subjects: &[&Subject], size: usize, one_hot_masks: bool) -> Samples {
    let channels = if one_hot_masks { crate::geometry::CLASS_COUNT } else { 1 };
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut len = 0;
    for s in subjects {
        for f in &s.frames {
            if one_hot_masks {
                inputs.extend_from_slice(f.labels.one_hot().data());
            } else {
                inputs.extend_from_slice(f.image.data());
            }
            targets.extend(normalize_targets(&f.truth, size).iter().map(|&v| v as f32));
            len += 1;
        }
    }
    Samples {
        inputs,
        sample_shape: [channels, size, size],
        targets: Targets::Regression(targets, crate::INDEX_COUNT),
        len,
    }
}

fn segmentation_samples(subjects: &[&Subject], size: usize) -> Samples {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut len = 0;
    for s in subjects {
        for f in &s.frames {
            inputs.extend_from_slice(f.image.data());
            labels.extend_from_slice(f.labels.labels());
            len += 1;
        }
    }
    Samples {
        inputs,
        sample_shape: [1, size, size],
        targets: Targets::Classes(labels, size * size),
        len,
    }
}

fn fit(arch: Architecture, samples: &Samples, cfg: &TrainConfig) -> Result<ModelWeights<f32>> {
    cfg.validate()?;
    if samples.len == 0 {
        return Err(Error::Validation("training set is empty".into()));
    }
    let kind = arch.kind;
    let mut init_rng = seeds::stream(cfg.seed, "init");
    let mut shuffle_rng = seeds::stream(cfg.seed, "shuffle");
    let mut w = ModelWeights::<f32>::init(arch, &mut init_rng)?;
    if let Targets::Regression(t, k) = &samples.targets {
        let id = w.store.find("fc2.bias").expect("regression heads end in fc2");
        let mut mean = vec![0.0f64; *k];
        for row in t.chunks(*k) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += f64::from(v);
            }
        }
        for (b, m) in w.store.get_mut(id).data_mut().iter_mut().zip(&mean) {
            *b = (m / samples.len as f64) as f32;
        }
    }
    let mut adam = AdamState::new(&w.store, AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..samples.len).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0f64;
        for idx in order.chunks(cfg.batch_size) {
            let (x, target) = samples.batch(idx)?;
            let mut g = Graph::new();
            let out = forward_train(&mut w, &mut g, x)?;
            let loss = match target {
                TargetBatch::Regression(t) => g.mse(out, t)?,
                TargetBatch::Classes(labels) => g.cross_entropy(out, labels)?,
            };
            let value = f64::from(g.value(loss).item());
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            let grads = g.backward(loss, &w.store)?;
            adam.step(&mut w.store, &grads.params)?;
            total += value * idx.len() as f64;
        }
        let mean = total / samples.len as f64;
        if !mean.is_finite() || !w.store.entries().iter().all(|e| e.value.all_finite()) {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        log::info!("{kind} epoch {epoch}/{}: loss {mean:.6}", cfg.epochs);
        history.push(mean);
    }
    w.meta = Some(TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        samples: samples.len,
        final_loss: *history.last().expect("at least one epoch"),
        loss_history: history,
    });
    Ok(w)
}

/// Image → normalized indices, MSE.
pub fn train_direct(subjects: &[&Subject], cfg: &TrainConfig) -> Result<ModelWeights> {
    let size = frame_size(subjects)?;
    fit(Architecture::direct(size), &regression_samples(subjects, size, false), cfg)
}

/// Image → 3-class probabilities, pixel-wise cross-entropy.
pub fn train_unet(subjects: &[&Subject], cfg: &TrainConfig) -> Result<ModelWeights> {
    let size = frame_size(subjects)?;
    fit(Architecture::unet(size), &segmentation_samples(subjects, size), cfg)
}

/// Ground-truth one-hot mask → normalized indices, MSE.
pub fn train_masknet(subjects: &[&Subject], cfg: &TrainConfig) -> Result<ModelWeights> {
    let size = frame_size(subjects)?;
    fit(Architecture::masknet(size), &regression_samples(subjects, size, true), cfg)
}
