use std::collections::BTreeSet;
use std::fs;
use std::sync::OnceLock;

use cardioquant::harness::*;
use cardioquant::models::TrainConfig;
use cardioquant::phantom::{generate_subjects, PhantomSpec, FRAMES};
use cardioquant::{IndexGroup, Subject, INDEX_COUNT, INDEX_NAMES};

fn subjects() -> &'static Vec<Subject> {
    static S: OnceLock<Vec<Subject>> = OnceLock::new();
    S.get_or_init(|| generate_subjects(&PhantomSpec::default(), 6, 31).unwrap())
}

fn tiny_config(stacking: StackingMode) -> CvConfig {
    let t = |batch_size| TrainConfig { epochs: 1, batch_size, lr: 1e-3, seed: 0 };
    CvConfig {
        seed: 3,
        folds: 3,
        stacking,
        stacking_folds: 2,
        direct: t(32),
        unet: t(16),
        masknet: t(32),
        pixel_spacing_mm: None,
    }
}

fn plan() -> FoldPlan {
    let ids: Vec<usize> = subjects().iter().map(|s| s.id).collect();
    make_folds(&ids, 3, 3).unwrap()
}

fn outcome(stacking: StackingMode) -> &'static CvOutcome {
    static OOF: OnceLock<CvOutcome> = OnceLock::new();
    static IN: OnceLock<CvOutcome> = OnceLock::new();
    let cell = match stacking {
        StackingMode::OutOfFold => &OOF,
        StackingMode::InSample => &IN,
    };
    cell.get_or_init(|| run_cv(subjects(), &plan(), &tiny_config(stacking), Some("abc".into())).unwrap())
}

#[test]
fn fold_sizes_match_the_reference_splits() {
    let ids: Vec<usize> = (0..145).collect();
    let mut sizes = make_folds(&ids, 3, 1).unwrap().sizes();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    assert_eq!(sizes, vec![49, 48, 48]);
    assert!(make_folds(&ids[..2], 3, 1).is_err());
}

#[test]
fn curve_examples() {
    assert_eq!(framewise_curve(&[[0.0; FRAMES]; 4]), [0.0; FRAMES]);
    let row: [f64; FRAMES] = std::array::from_fn(|t| t as f64 * 0.5);
    assert_eq!(framewise_curve(&[row]), row);
    let rows: Vec<[f64; FRAMES]> = (0..7).map(|k| std::array::from_fn(|t| ((k * 31 + t * 17) % 13) as f64)).collect();
    let curve = framewise_curve(&rows);
    let overall = rows.iter().flatten().sum::<f64>() / (7 * FRAMES) as f64;
    assert!((curve.iter().sum::<f64>() / FRAMES as f64 - overall).abs() < 1e-9);
}

#[test]
fn report_covers_every_method_and_index() {
    let r = &outcome(StackingMode::OutOfFold).report;
    assert_eq!(r.methods.len(), 3);
    for m in &r.methods {
        assert!(m.indices.iter().all(|s| s.mae >= 0.0 && s.std >= 0.0 && s.mae.is_finite()));
    }
    assert_eq!(r.curves.len(), 9);
    assert_eq!(r.meta.subjects, 6);
    assert_eq!(r.meta.dataset_hash.as_deref(), Some("abc"));
    let csv = report_csv(r);
    assert_eq!(csv.lines().count(), 1 + 3 * INDEX_COUNT + 3 * 3);
    assert!(csv.starts_with("method,group,index,mae,std\n"));
}

#[test]
fn curves_average_to_the_group_mae() {
    let r = &outcome(StackingMode::OutOfFold).report;
    for c in &r.curves {
        let g = IndexGroup::ALL.iter().position(|&g| g == c.group).unwrap();
        let mae = r.method(c.method).groups[g].mae;
        assert!((c.mae.iter().sum::<f64>() / FRAMES as f64 - mae).abs() < 1e-9);
    }
}

#[test]
fn no_subject_is_predicted_by_a_model_that_saw_it() {
    let out = outcome(StackingMode::OutOfFold);
    let p = &out.plan;
    for a in &out.audit {
        let trained: BTreeSet<_> = a.trained_on.iter().collect();
        assert!(a.predicted.iter().all(|id| !trained.contains(id)), "{a:?}");
        assert!(p.members(a.fold).iter().all(|id| !trained.contains(id)), "{a:?}");
    }
    // Two inner rotations plus the final models per fold.
    assert_eq!(out.audit.len(), 3 * 3);
    for pred in &out.predictions {
        assert_eq!(pred.fold, p.assignments[&pred.id]);
    }
}

#[test]
fn in_sample_stacking_never_beats_bases_on_its_training_set() {
    let r = &outcome(StackingMode::InSample).report;
    for s in &r.stacking {
        for i in 0..INDEX_COUNT {
            let e = s.ensemble_mse[i];
            assert!(e <= s.direct_mse[i] * (1.0 + 1e-9) + 1e-9, "fold {} {}", s.fold, INDEX_NAMES[i]);
            assert!(e <= s.seg_mse[i] * (1.0 + 1e-9) + 1e-9, "fold {} {}", s.fold, INDEX_NAMES[i]);
            assert!((s.combined_mse[i] - e).abs() <= 1e-9 * e.max(1.0));
        }
    }
}

#[test]
fn stacking_modes_give_different_reports() {
    assert_ne!(
        report_csv(&outcome(StackingMode::InSample).report),
        report_csv(&outcome(StackingMode::OutOfFold).report)
    );
}

#[test]
fn rerun_is_identical() {
    let again = run_cv(subjects(), &plan(), &tiny_config(StackingMode::InSample), Some("abc".into())).unwrap();
    assert_eq!(again.report, outcome(StackingMode::InSample).report);
}

#[test]
fn emitted_files_are_stable_and_recomputable() {
    let out = outcome(StackingMode::OutOfFold);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_outcome(out, a.path()).unwrap();
    emit_report(&out.report, b.path()).unwrap();
    for f in ["report.csv", "report.md", "curves.csv", "phase.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    for fold in 0..3 {
        for name in ["direct", "unet", "masknet"] {
            assert!(a.path().join(format!("models/{fold}/{name}.weights.bin")).exists());
        }
    }

    // MAE of A1 for each method from the per-subject dumps.
    let report = &out.report;
    for m in Method::ALL {
        let (mut sum, mut n) = (0.0, 0usize);
        for s in subjects() {
            let text = fs::read_to_string(a.path().join(format!("predictions/{}/subj_{}.csv", m.name(), s.id))).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next().unwrap().split(',').count(), 1 + INDEX_COUNT + 1);
            for (line, frame) in lines.zip(&s.frames) {
                let a1: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
                sum += (a1 - frame.truth.a1()).abs();
                n += 1;
            }
        }
        assert_eq!(n, 6 * FRAMES);
        assert!((sum / n as f64 - report.method(m).indices[0].mae).abs() < 1e-9);
    }

    let phase = fs::read_to_string(a.path().join("phase.csv")).unwrap();
    assert_eq!(phase.lines().count(), 1 + 6);
}

#[test]
fn markdown_bolds_the_row_minimum() {
    let r = &outcome(StackingMode::OutOfFold).report;
    let md = report_markdown(r);
    let a1_row = md.lines().find(|l| l.starts_with("| area | A1 |")).unwrap();
    let best = r.methods.iter().map(|m| m.indices[0].mae).fold(f64::INFINITY, f64::min);
    let bold = a1_row.split('|').find(|c| c.contains("**")).unwrap();
    assert!(bold.contains(&format!("{best:.3}")), "{a1_row}");
}

#[test]
fn pixel_spacing_scales_errors() {
    let mut cfg = tiny_config(StackingMode::InSample);
    cfg.pixel_spacing_mm = Some(2.0);
    let mm = run_cv(subjects(), &plan(), &cfg, None).unwrap().report;
    let px = &outcome(StackingMode::InSample).report;
    let d = mm.method(Method::Direct);
    let p = px.method(Method::Direct);
    assert!((d.indices[0].mae - 4.0 * p.indices[0].mae).abs() < 1e-9 * d.indices[0].mae.max(1.0));
    assert!((d.indices[2].mae - 2.0 * p.indices[2].mae).abs() < 1e-9 * d.indices[2].mae.max(1.0));
    assert_eq!(mm.meta.units, "mm");
}

#[test]
fn mismatched_plan_rejected() {
    let ids: Vec<usize> = (0..5).collect();
    let bad = make_folds(&ids, 3, 3).unwrap();
    assert!(run_cv(subjects(), &bad, &tiny_config(StackingMode::InSample), None).is_err());
    let mut cfg = tiny_config(StackingMode::OutOfFold);
    cfg.stacking_folds = 1;
    assert!(run_cv(subjects(), &plan(), &cfg, None).is_err());
}

#[test]
fn stacking_mode_tokens() {
    assert_eq!("in-sample".parse::<StackingMode>().unwrap(), StackingMode::InSample);
    assert_eq!(StackingMode::OutOfFold.to_string(), "out-of-fold");
    assert!("both".parse::<StackingMode>().is_err());
}
