use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use cardioquant::harness::{CvConfig, StackingMode};
use cardioquant::models::{ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

/// Per-model hyperparameters as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Hyper {
    fn default_for(kind: ModelKind) -> Self {
        let t = TrainConfig::default_for(kind);
        Hyper { epochs: t.epochs, batch_size: t.batch_size, lr: t.lr }
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { epochs: self.epochs, batch_size: self.batch_size, lr: self.lr, seed }
    }
}

fn default_direct() -> Hyper {
    Hyper::default_for(ModelKind::Direct)
}
fn default_unet() -> Hyper {
    Hyper::default_for(ModelKind::UNet)
}
fn default_masknet() -> Hyper {
    Hyper::default_for(ModelKind::MaskNet)
}

/// Everything a run needs. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub image_size: usize,
    pub subjects: usize,
    pub folds: usize,
    pub stacking: StackingMode,
    pub stacking_folds: usize,
    #[serde(default = "default_direct")]
    pub direct: Hyper,
    #[serde(default = "default_unet")]
    pub unet: Hyper,
    #[serde(default = "default_masknet")]
    pub masknet: Hyper,
    pub pixel_spacing_mm: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cv = CvConfig::default();
        RunConfig {
            data: None,
            seed: 7,
            image_size: 64,
            subjects: 45,
            folds: cv.folds,
            stacking: cv.stacking,
            stacking_folds: cv.stacking_folds,
            direct: default_direct(),
            unet: default_unet(),
            masknet: default_masknet(),
            pixel_spacing_mm: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Checks the invariants flags and files must satisfy; failures are
    /// usage errors.
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("image_size", self.image_size),
            ("subjects", self.subjects),
            ("folds", self.folds),
            ("stacking_folds", self.stacking_folds),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        for (name, h) in [("direct", &self.direct), ("unet", &self.unet), ("masknet", &self.masknet)] {
            if h.epochs == 0 || h.batch_size == 0 || !(h.lr > 0.0 && h.lr.is_finite()) {
                return Err(format!("{name}: epochs, batch_size and lr must be positive"));
            }
        }
        if let Some(s) = self.pixel_spacing_mm {
            if !(s > 0.0 && s.is_finite()) {
                return Err("pixel_spacing_mm must be positive".into());
            }
        }
        Ok(())
    }

    pub fn hyper(&self, kind: ModelKind) -> &Hyper {
        match kind {
            ModelKind::Direct => &self.direct,
            ModelKind::UNet => &self.unet,
            ModelKind::MaskNet => &self.masknet,
        }
    }

    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        self.hyper(kind).train_config(self.seed)
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            seed: self.seed,
            folds: self.folds,
            stacking: self.stacking,
            stacking_folds: self.stacking_folds,
            direct: self.train_config(ModelKind::Direct),
            unet: self.train_config(ModelKind::UNet),
            masknet: self.train_config(ModelKind::MaskNet),
            pixel_spacing_mm: self.pixel_spacing_mm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 9, "direct": {"epochs": 3, "batch_size": 4, "lr": 0.01}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.direct.epochs, 3);
        assert_eq!(c.unet, default_unet());
        assert_eq!(c.subjects, 45);
    }

    #[test]
    fn unknown_fields_and_tokens_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 9}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"stacking": "sideways"}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"stacking": "in-sample"}"#).unwrap();
        assert_eq!(c.stacking, StackingMode::InSample);
    }

    #[test]
    fn zero_fields_invalid() {
        let c = RunConfig { subjects: 0, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.unet.lr = 0.0;
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
