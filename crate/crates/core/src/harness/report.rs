use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cv::{CvConfig, CvOutcome, SubjectPrediction};
use super::folds::FoldPlan;
use crate::error::{Error, Result};
use crate::indices::{IndexGroup, IndexVector, INDEX_COUNT, INDEX_NAMES};
use crate::models::save_weights;
use crate::phantom::{Subject, FRAMES};
use crate::phase::{bit_accuracy, regularize_phase, threshold_phase, DIASTOLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Seg,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::Seg, Method::Ensemble];

    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Seg => "seg",
            Method::Ensemble => "ensemble",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::Direct => "Direct Estimation",
            Method::Seg => "Segmentation",
            Method::Ensemble => "Ensemble",
        }
    }

    pub fn pick(self, p: &SubjectPrediction) -> &[IndexVector] {
        match self {
            Method::Direct => &p.direct,
            Method::Seg => &p.seg,
            Method::Ensemble => &p.ensemble,
        }
    }
}

/// Mean and population standard deviation of absolute errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStat {
    pub mae: f64,
    pub std: f64,
}

impl ErrorStat {
    pub fn of(errors: &[f64]) -> ErrorStat {
        if errors.is_empty() {
            return ErrorStat { mae: 0.0, std: 0.0 };
        }
        let n = errors.len() as f64;
        let mae = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mae).powi(2)).sum::<f64>() / n;
        ErrorStat { mae, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: Method,
    pub indices: [ErrorStat; INDEX_COUNT],
    /// Pooled over every index of the group: Area, Dimension, RWT.
    pub groups: [ErrorStat; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub method: Method,
    pub group: IndexGroup,
    pub mae: [f64; FRAMES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub method: Method,
    /// Thresholded A1 before regularization.
    pub raw: f64,
    pub regularized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDice {
    pub fold: usize,
    pub cavity: f64,
    pub myocardium: f64,
}

/// Second-level fit diagnostics on one fold's stacking samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingStats {
    pub fold: usize,
    pub samples: usize,
    pub ensemble_mse: [f64; INDEX_COUNT],
    pub direct_mse: [f64; INDEX_COUNT],
    pub seg_mse: [f64; INDEX_COUNT],
    /// Unclamped ensemble output recomputed on the samples.
    pub combined_mse: [f64; INDEX_COUNT],
    pub ridge: [bool; INDEX_COUNT],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: CvConfig,
    pub fold_seed: u64,
    pub fold_sizes: Vec<usize>,
    pub subjects: usize,
    pub frames: usize,
    pub dataset_hash: Option<String>,
    /// "px" or "mm".
    pub units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<MethodStats>,
    pub curves: Vec<Curve>,
    pub phase: Vec<PhaseStats>,
    pub dice: Vec<FoldDice>,
    pub stacking: Vec<StackingStats>,
    pub meta: RunMeta,
}

impl EvalReport {
    pub fn method(&self, m: Method) -> &MethodStats {
        self.methods.iter().find(|s| s.method == m).expect("report covers every method")
    }

    pub fn phase_of(&self, m: Method) -> &PhaseStats {
        self.phase.iter().find(|s| s.method == m).expect("report covers every method")
    }
}

fn group_slot(g: IndexGroup) -> usize {
    IndexGroup::ALL.iter().position(|&x| x == g).expect("group listed in ALL")
}

/// Mean absolute error per frame index over subjects. Every row holds one
/// subject's per-frame errors; an empty input gives a zero curve.
pub fn framewise_curve(errors: &[[f64; FRAMES]]) -> [f64; FRAMES] {
    let mut out = [0.0; FRAMES];
    if errors.is_empty() {
        return out;
    }
    for row in errors {
        for (o, e) in out.iter_mut().zip(row) {
            *o += e.abs();
        }
    }
    out.map(|v| v / errors.len() as f64)
}

/// Raw and regularized phase from a sequence of predicted A1 values.
/// Constant areas threshold to all-diastole.
pub fn phase_from_areas(a1: &[f64]) -> (Vec<u8>, Vec<u8>) {
    let raw = threshold_phase(a1).unwrap_or_else(|_| vec![DIASTOLE; a1.len()]);
    let reg = regularize_phase(&raw).bits().to_vec();
    (raw, reg)
}

pub(crate) fn build_report(
    subjects: &[Subject],
    predictions: &[SubjectPrediction],
    plan: &FoldPlan,
    cfg: &CvConfig,
    stacking: Vec<StackingStats>,
    dice: Vec<FoldDice>,
    dataset_hash: Option<String>,
) -> Result<EvalReport> {
    let spacing = cfg.pixel_spacing_mm.unwrap_or(1.0);
    let scale: [f64; INDEX_COUNT] = std::array::from_fn(|i| spacing.powi(IndexGroup::of(i).length_power()));
    let truth_of = |id: usize| subjects.iter().find(|s| s.id == id).expect("prediction for a known subject");

    let mut truth_phase = Vec::new();
    for p in predictions {
        truth_phase.push(truth_of(p.id).phase()?.bits().to_vec());
        if Method::ALL.iter().any(|m| m.pick(p).len() != FRAMES) {
            return Err(Error::Validation(format!("subject {}: predictions do not cover {FRAMES} frames", p.id)));
        }
    }

    let mut methods = Vec::new();
    let mut curves = Vec::new();
    let mut phase = Vec::new();
    for m in Method::ALL {
        // errors[i] holds every held-out frame's absolute error for index i.
        let mut errors: Vec<Vec<f64>> = vec![Vec::new(); INDEX_COUNT];
        let mut per_frame: Vec<Vec<[f64; FRAMES]>> = vec![Vec::new(); 3];
        let (mut raw_bits, mut reg_bits) = (Vec::new(), Vec::new());
        for p in predictions {
            let subject = truth_of(p.id);
            let preds = m.pick(p);
            let mut rows = [[0.0; FRAMES]; 3];
            for (t, (pred, frame)) in preds.iter().zip(&subject.frames).enumerate() {
                for i in 0..INDEX_COUNT {
                    let e = (pred.0[i] - frame.truth.0[i]).abs() * scale[i];
                    errors[i].push(e);
                    let g = IndexGroup::of(i);
                    rows[group_slot(g)][t] += e / g.range().len() as f64;
                }
            }
            for (g, row) in rows.into_iter().enumerate() {
                per_frame[g].push(row);
            }
            let a1: Vec<f64> = preds.iter().map(|v| v.a1()).collect();
            let (raw, reg) = phase_from_areas(&a1);
            raw_bits.push(raw);
            reg_bits.push(reg);
        }
        let indices: [ErrorStat; INDEX_COUNT] = std::array::from_fn(|i| ErrorStat::of(&errors[i]));
        let groups = IndexGroup::ALL.map(|g| {
            let pooled: Vec<f64> = g.range().flat_map(|i| errors[i].iter().copied()).collect();
            ErrorStat::of(&pooled)
        });
        methods.push(MethodStats { method: m, indices, groups });
        for g in IndexGroup::ALL {
            curves.push(Curve { method: m, group: g, mae: framewise_curve(&per_frame[group_slot(g)]) });
        }
        let truth_refs: Vec<&[u8]> = truth_phase.iter().map(Vec::as_slice).collect();
        let raw_refs: Vec<&[u8]> = raw_bits.iter().map(Vec::as_slice).collect();
        let reg_refs: Vec<&[u8]> = reg_bits.iter().map(Vec::as_slice).collect();
        phase.push(PhaseStats {
            method: m,
            raw: bit_accuracy(&raw_refs, &truth_refs)?,
            regularized: bit_accuracy(&reg_refs, &truth_refs)?,
        });
    }

    Ok(EvalReport {
        methods,
        curves,
        phase,
        dice,
        stacking,
        meta: RunMeta {
            config: cfg.clone(),
            fold_seed: plan.seed,
            fold_sizes: plan.sizes(),
            subjects: predictions.len(),
            frames: predictions.len() * FRAMES,
            dataset_hash,
            units: if cfg.pixel_spacing_mm.is_some() { "mm" } else { "px" }.into(),
        },
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut s = String::from("method,group,index,mae,std\n");
    for m in &report.methods {
        for (i, stat) in m.indices.iter().enumerate() {
            let g = IndexGroup::of(i).name();
            writeln!(s, "{},{g},{},{},{}", m.method.name(), INDEX_NAMES[i], stat.mae, stat.std).unwrap();
        }
        for (g, stat) in IndexGroup::ALL.iter().zip(&m.groups) {
            writeln!(s, "{},{},mean,{},{}", m.method.name(), g.name(), stat.mae, stat.std).unwrap();
        }
    }
    s
}

pub fn report_markdown(report: &EvalReport) -> String {
    let units = &report.meta.units;
    let mut s = String::new();
    writeln!(s, "# Cross-validation errors\n").unwrap();
    writeln!(
        s,
        "MAE ± std of absolute error over {} held-out frames ({} subjects). Areas in {units}², lengths in {units}. Best per row in bold.\n",
        report.meta.frames, report.meta.subjects
    )
    .unwrap();
    write!(s, "| Group | Index |").unwrap();
    for m in &report.methods {
        write!(s, " {} |", m.method.title()).unwrap();
    }
    s.push('\n');
    s.push_str("|---|---|");
    for _ in &report.methods {
        s.push_str("---|");
    }
    s.push('\n');

    let row = |s: &mut String, group: &str, label: &str, stats: Vec<ErrorStat>| {
        let best = stats.iter().map(|x| x.mae).fold(f64::INFINITY, f64::min);
        write!(s, "| {group} | {label} |").unwrap();
        for st in stats {
            let cell = format!("{:.3} ± {:.3}", st.mae, st.std);
            if st.mae == best {
                write!(s, " **{cell}** |").unwrap();
            } else {
                write!(s, " {cell} |").unwrap();
            }
        }
        s.push('\n');
    };
    for g in IndexGroup::ALL {
        for i in g.range() {
            row(&mut s, g.name(), INDEX_NAMES[i], report.methods.iter().map(|m| m.indices[i]).collect());
        }
        row(&mut s, g.name(), "mean", report.methods.iter().map(|m| m.groups[group_slot(g)]).collect());
    }

    writeln!(s, "\n## Phase accuracy\n\n| Method | Raw threshold | Regularized |\n|---|---|---|").unwrap();
    for p in &report.phase {
        writeln!(s, "| {} | {:.4} | {:.4} |", p.method.title(), p.raw, p.regularized).unwrap();
    }
    writeln!(s, "\n## Held-out segmentation Dice\n\n| Fold | Cavity | Myocardium |\n|---|---|---|").unwrap();
    for d in &report.dice {
        writeln!(s, "| {} | {:.4} | {:.4} |", d.fold, d.cavity, d.myocardium).unwrap();
    }
    s
}

pub fn curves_csv(report: &EvalReport) -> String {
    let mut s = String::from("frame,method,group,mae\n");
    for c in &report.curves {
        for (t, v) in c.mae.iter().enumerate() {
            writeln!(s, "{},{},{},{v}", t + 1, c.method.name(), c.group.name()).unwrap();
        }
    }
    s
}

/// One row per method with the regularized accuracy, then `<method>-raw`
/// rows for the thresholded sequence.
pub fn phase_csv(report: &EvalReport) -> String {
    let mut s = String::from("method,accuracy\n");
    for p in &report.phase {
        writeln!(s, "{},{}", p.method.name(), p.regularized).unwrap();
    }
    for p in &report.phase {
        writeln!(s, "{}-raw,{}", p.method.name(), p.raw).unwrap();
    }
    s
}

/// Writes `report.csv`, `report.md`, `curves.csv`, `phase.csv` and
/// `report.json` into `out`.
pub fn emit_report(report: &EvalReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("report.csv"), &report_csv(report))?;
    write(&out.join("report.md"), &report_markdown(report))?;
    write(&out.join("curves.csv"), &curves_csv(report))?;
    write(&out.join("phase.csv"), &phase_csv(report))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Validation(e.to_string()))?;
    write(&out.join("report.json"), &json)
}

/// Per-frame predictions in pixel units with the method's regularized phase.
pub fn prediction_csv(preds: &[IndexVector]) -> String {
    let mut s = String::from("frame");
    for n in INDEX_NAMES {
        write!(s, ",{n}").unwrap();
    }
    s.push_str(",phase\n");
    let a1: Vec<f64> = preds.iter().map(|v| v.a1()).collect();
    let (_, phase) = phase_from_areas(&a1);
    for (t, (v, bit)) in preds.iter().zip(phase).enumerate() {
        write!(s, "{}", t + 1).unwrap();
        for x in v.0 {
            write!(s, ",{x}").unwrap();
        }
        writeln!(s, ",{bit}").unwrap();
    }
    s
}

/// Emits the report, per-subject prediction dumps and every fold's final
/// models and ensemble weights.
pub fn emit_outcome(outcome: &CvOutcome, out: &Path) -> Result<()> {
    emit_report(&outcome.report, out)?;
    for m in Method::ALL {
        let dir = out.join("predictions").join(m.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for p in &outcome.predictions {
            write(&dir.join(format!("subj_{}.csv", p.id)), &prediction_csv(m.pick(p)))?;
        }
    }
    for f in &outcome.folds {
        let dir = out.join("models").join(f.fold.to_string());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_weights(&f.models.direct, &dir.join("direct"))?;
        save_weights(&f.models.unet, &dir.join("unet"))?;
        save_weights(&f.models.masknet, &dir.join("masknet"))?;
        let json = serde_json::to_string_pretty(&f.ensemble).map_err(|e| Error::Validation(e.to_string()))?;
        write(&dir.join("ensemble.json"), &json)?;
    }
    let audit = serde_json::to_string_pretty(&outcome.audit).map_err(|e| Error::Validation(e.to_string()))?;
    write(&out.join("audit.json"), &audit)
}
