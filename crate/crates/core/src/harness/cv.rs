use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldPlan};
use super::report::{build_report, EvalReport, FoldDice, StackingStats};
use crate::ensemble::{combine, fit_ensemble, predict_ensemble, EnsembleWeights, StackSample};
use crate::error::{Error, Result};
use crate::geometry::{dice, CAVITY, MYOCARDIUM};
use crate::indices::{IndexVector, INDEX_COUNT};
use crate::models::{
    predict_direct_batch, predict_seg_batch, train_direct, train_masknet, train_unet, ModelKind, ModelWeights,
    TrainConfig,
};
use crate::phantom::Subject;
use crate::seeds;

/// Where the second level gets its training predictions from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackingMode {
    /// Base models predict the very subjects they were trained on.
    InSample,
    /// Each training subject is predicted by base models that never saw it.
    OutOfFold,
}

impl StackingMode {
    pub fn token(self) -> &'static str {
        match self {
            StackingMode::InSample => "in-sample",
            StackingMode::OutOfFold => "out-of-fold",
        }
    }
}

impl fmt::Display for StackingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for StackingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-sample" => Ok(StackingMode::InSample),
            "out-of-fold" => Ok(StackingMode::OutOfFold),
            _ => Err(Error::Validation(format!("stacking mode {s:?} is not in-sample or out-of-fold"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub seed: u64,
    pub folds: usize,
    pub stacking: StackingMode,
    /// Inner rotations for out-of-fold stacking; 5 gives 80/20 splits.
    pub stacking_folds: usize,
    pub direct: TrainConfig,
    pub unet: TrainConfig,
    pub masknet: TrainConfig,
    /// Scales reported errors to mm (mm² for areas) when set.
    pub pixel_spacing_mm: Option<f64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            seed: 7,
            folds: 3,
            stacking: StackingMode::OutOfFold,
            stacking_folds: 5,
            direct: TrainConfig::default_for(ModelKind::Direct),
            unet: TrainConfig::default_for(ModelKind::UNet),
            masknet: TrainConfig::default_for(ModelKind::MaskNet),
            pixel_spacing_mm: None,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Validation("need at least 2 folds".into()));
        }
        if self.stacking == StackingMode::OutOfFold && self.stacking_folds < 2 {
            return Err(Error::Validation("out-of-fold stacking needs at least 2 inner folds".into()));
        }
        if let Some(s) = self.pixel_spacing_mm {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Validation(format!("pixel_spacing_mm {s} must be positive")));
            }
        }
        self.direct.validate()?;
        self.unet.validate()?;
        self.masknet.validate()
    }
}

/// The three first-level networks trained together on one subject set.
#[derive(Debug, Clone)]
pub struct BaseModels {
    pub direct: ModelWeights,
    pub unet: ModelWeights,
    pub masknet: ModelWeights,
}

/// Which subjects one set of base models was trained on and predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelAudit {
    pub fold: usize,
    pub stage: String,
    pub trained_on: Vec<usize>,
    pub predicted: Vec<usize>,
}

/// Held-out predictions for one subject, 20 frames per method.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPrediction {
    pub id: usize,
    pub fold: usize,
    pub direct: Vec<IndexVector>,
    pub seg: Vec<IndexVector>,
    pub ensemble: Vec<IndexVector>,
}

#[derive(Debug, Clone)]
pub struct FoldArtifacts {
    pub fold: usize,
    pub models: BaseModels,
    pub ensemble: EnsembleWeights,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub plan: FoldPlan,
    pub report: EvalReport,
    /// Sorted by subject id.
    pub predictions: Vec<SubjectPrediction>,
    pub folds: Vec<FoldArtifacts>,
    pub audit: Vec<ModelAudit>,
}

fn train_seed(master: u64, fold: usize, stage: &str, kind: ModelKind) -> u64 {
    seeds::derive(master, &format!("fold{fold}/{stage}/{kind}"))
}

/// Trains all three networks on `subjects`.
pub fn train_base(subjects: &[&Subject], cfg: &CvConfig, fold: usize, stage: &str) -> Result<BaseModels> {
    log::info!("fold {fold} {stage}: training on {} subjects", subjects.len());
    let direct = train_direct(subjects, &cfg.direct.clone().with_seed(train_seed(cfg.seed, fold, stage, ModelKind::Direct)))?;
    let unet = train_unet(subjects, &cfg.unet.clone().with_seed(train_seed(cfg.seed, fold, stage, ModelKind::UNet)))?;
    let masknet =
        train_masknet(subjects, &cfg.masknet.clone().with_seed(train_seed(cfg.seed, fold, stage, ModelKind::MaskNet)))?;
    Ok(BaseModels { direct, unet, masknet })
}

struct BasePredictions {
    direct: Vec<IndexVector>,
    seg: Vec<IndexVector>,
    cavity_dice: f64,
    myocardium_dice: f64,
}

fn predict_base(models: &BaseModels, subject: &Subject) -> Result<BasePredictions> {
    let images: Vec<_> = subject.frames.iter().map(|f| f.image.clone()).collect();
    let direct = predict_direct_batch(&models.direct, &images)?;
    let seg = predict_seg_batch(&models.unet, &models.masknet, &images)?;
    let (mut cav, mut myo) = (0.0, 0.0);
    for (p, f) in seg.iter().zip(&subject.frames) {
        cav += dice(&p.mask, &f.labels, CAVITY)?;
        myo += dice(&p.mask, &f.labels, MYOCARDIUM)?;
    }
    let n = subject.frames.len() as f64;
    Ok(BasePredictions {
        direct,
        seg: seg.into_iter().map(|p| p.indices).collect(),
        cavity_dice: cav / n,
        myocardium_dice: myo / n,
    })
}

fn stack_samples(subject: &Subject, p: &BasePredictions) -> Vec<StackSample> {
    subject
        .frames
        .iter()
        .zip(p.direct.iter().zip(&p.seg))
        .map(|(f, (&direct, &seg))| StackSample { direct, seg, truth: f.truth })
        .collect()
}

struct FoldResult {
    artifacts: FoldArtifacts,
    predictions: Vec<SubjectPrediction>,
    stacking: StackingStats,
    dice: FoldDice,
    audit: Vec<ModelAudit>,
}

fn mse_per_index(samples: &[StackSample], pick: impl Fn(&StackSample) -> IndexVector) -> [f64; INDEX_COUNT] {
    let mut out = [0.0; INDEX_COUNT];
    for s in samples {
        let p = pick(s);
        for (i, o) in out.iter_mut().enumerate() {
            *o += (p.0[i] - s.truth.0[i]).powi(2);
        }
    }
    out.map(|v| v / samples.len() as f64)
}

fn run_fold(subjects: &[Subject], plan: &FoldPlan, cfg: &CvConfig, fold: usize) -> Result<FoldResult> {
    let by_id = |ids: &[usize]| -> Vec<&Subject> {
        ids.iter().map(|id| subjects.iter().find(|s| s.id == *id).expect("plan covers dataset")).collect()
    };
    let train_ids = plan.complement(fold);
    let test_ids = plan.members(fold);
    let train = by_id(&train_ids);
    let mut audit = Vec::new();

    let mut samples = Vec::new();
    let final_models = match cfg.stacking {
        StackingMode::OutOfFold => {
            let inner = make_folds(&train_ids, cfg.stacking_folds, seeds::derive(cfg.seed, &format!("fold{fold}/stacking")))?;
            for j in 0..inner.k {
                let stage = format!("inner{j}");
                let inner_train = inner.complement(j);
                let inner_test = inner.members(j);
                let models = train_base(&by_id(&inner_train), cfg, fold, &stage)?;
                for s in by_id(&inner_test) {
                    samples.extend(stack_samples(s, &predict_base(&models, s)?));
                }
                audit.push(ModelAudit { fold, stage, trained_on: inner_train, predicted: inner_test });
            }
            train_base(&train, cfg, fold, "final")?
        }
        StackingMode::InSample => {
            let models = train_base(&train, cfg, fold, "final")?;
            for s in &train {
                samples.extend(stack_samples(s, &predict_base(&models, s)?));
            }
            audit.push(ModelAudit { fold, stage: "in-sample".into(), trained_on: train_ids.clone(), predicted: train_ids.clone() });
            models
        }
    };
    let ensemble = fit_ensemble(&samples)?;
    let stacking = StackingStats {
        fold,
        samples: samples.len(),
        ensemble_mse: ensemble.training_mse,
        direct_mse: mse_per_index(&samples, |s| s.direct),
        seg_mse: mse_per_index(&samples, |s| s.seg),
        combined_mse: mse_per_index(&samples, |s| combine(&ensemble, &s.direct, &s.seg)),
        ridge: ensemble.ridge,
    };

    let mut predictions = Vec::new();
    let (mut cav, mut myo) = (0.0, 0.0);
    for s in by_id(&test_ids) {
        let p = predict_base(&final_models, s)?;
        cav += p.cavity_dice;
        myo += p.myocardium_dice;
        let ens = p.direct.iter().zip(&p.seg).map(|(d, g)| predict_ensemble(&ensemble, d, g)).collect();
        predictions.push(SubjectPrediction { id: s.id, fold, direct: p.direct, seg: p.seg, ensemble: ens });
    }
    audit.push(ModelAudit { fold, stage: "final".into(), trained_on: train_ids, predicted: test_ids.clone() });
    let dice = FoldDice {
        fold,
        cavity: cav / test_ids.len() as f64,
        myocardium: myo / test_ids.len() as f64,
    };
    for a in &audit {
        if let Some(id) = a.trained_on.iter().find(|id| a.predicted.contains(id) && a.stage != "in-sample") {
            return Err(Error::Validation(format!("fold {fold} {}: subject {id} both trained on and predicted", a.stage)));
        }
        if let Some(id) = a.trained_on.iter().find(|id| test_ids.contains(id)) {
            return Err(Error::Validation(format!("fold {fold} {}: held-out subject {id} used for training", a.stage)));
        }
    }
    log::info!(
        "fold {fold}: held-out dice cavity {:.4} myocardium {:.4}",
        dice.cavity,
        dice.myocardium
    );
    Ok(FoldResult {
        artifacts: FoldArtifacts { fold, models: final_models, ensemble },
        predictions,
        stacking,
        dice,
        audit,
    })
}

/// Cross-validates the full two-level pipeline. Folds run on the current
/// rayon pool; every random stream is derived from `cfg.seed`, so results
/// do not depend on scheduling.
pub fn run_cv(subjects: &[Subject], plan: &FoldPlan, cfg: &CvConfig, dataset_hash: Option<String>) -> Result<CvOutcome> {
    cfg.validate()?;
    let mut ids: Vec<usize> = subjects.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    let planned: Vec<usize> = plan.assignments.keys().copied().collect();
    if ids != planned {
        return Err(Error::Validation("fold plan does not cover exactly the dataset's subjects".into()));
    }
    let results: Vec<FoldResult> = (0..plan.k)
        .into_par_iter()
        .map(|f| run_fold(subjects, plan, cfg, f).map_err(|e| Error::Fold { fold: f, source: Box::new(e) }))
        .collect::<Result<_>>()?;

    let mut predictions: Vec<SubjectPrediction> = results.iter().flat_map(|r| r.predictions.clone()).collect();
    predictions.sort_by_key(|p| p.id);
    let stacking: Vec<StackingStats> = results.iter().map(|r| r.stacking.clone()).collect();
    let dice: Vec<FoldDice> = results.iter().map(|r| r.dice.clone()).collect();
    let report = build_report(subjects, &predictions, plan, cfg, stacking, dice, dataset_hash)?;
    let mut audit = Vec::new();
    let mut folds = Vec::new();
    for r in results {
        audit.extend(r.audit);
        folds.push(r.artifacts);
    }
    Ok(CvOutcome { plan: plan.clone(), report, predictions, folds, audit })
}
