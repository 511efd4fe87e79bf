//! `cardioquant`: generate synthetic cine data, train the networks,
//! cross-validate the two-level pipeline and render diagnostics.

mod config;
mod viz;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use cardioquant::dataset::{generate_dataset, load_dataset, manifest_hash, MANIFEST};
use cardioquant::geometry::{dice, CAVITY, MYOCARDIUM};
use cardioquant::harness::{emit_outcome, make_folds, run_cv, Method, StackingMode};
use cardioquant::models::{save_weights, segment_batch, train_direct, train_masknet, train_unet, ModelKind};
use cardioquant::{IndexGroup, PhantomSpec, Subject};
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "cardioquant", version, about = "Left-ventricle quantification workbench")]
struct Cli {
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (the dataset root for `gen`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with checksums.
    Gen {
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train one network and save its weights.
    Train {
        /// direct, unet or masknet.
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Hold out this fold of the seeded fold plan.
        #[arg(long)]
        folds_exclude: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Cross-validate all three networks and the ensemble.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        /// in-sample or out-of-fold.
        #[arg(long)]
        stacking: Option<StackingMode>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        stacking_folds: Option<usize>,
        #[arg(long)]
        pixel_spacing_mm: Option<f64>,
    },
    /// Render feature maps or segmentation triptychs as PGM files.
    Viz {
        #[arg(long, value_enum)]
        kind: VizKind,
        /// Weight file stem, without `.weights.json`.
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        subject: usize,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Layer for feature maps; defaults to the first.
        #[arg(long)]
        layer: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VizKind {
    Featmaps,
    Segtriptych,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<cardioquant::Error> for Failure {
    fn from(e: cardioquant::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .parse_filters(&std::env::var("CARDIOQUANT_LOG").unwrap_or_else(|_| "off".into()))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain joined by ": ", skipping causes already quoted by
/// their parent's message.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads as usize)
        .build_global()
        .context("configuring the worker pool")?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    match cli.command {
        Command::Gen { subjects, size } => {
            set(&mut cfg.subjects, subjects);
            set(&mut cfg.image_size, size);
            cfg.validate().map_err(Failure::Usage)?;
            cmd_gen(&cfg)
        }
        Command::Train { model, data, folds_exclude, folds, epochs, batch_size, lr } => {
            override_path(&mut cfg.data, data);
            set(&mut cfg.folds, folds);
            let h = match model {
                ModelKind::Direct => &mut cfg.direct,
                ModelKind::UNet => &mut cfg.unet,
                ModelKind::MaskNet => &mut cfg.masknet,
            };
            set(&mut h.epochs, epochs);
            set(&mut h.batch_size, batch_size);
            set(&mut h.lr, lr);
            cfg.validate().map_err(Failure::Usage)?;
            if folds_exclude.is_some_and(|f| f >= cfg.folds) {
                return Err(Failure::Usage(format!("--folds-exclude must be below the fold count {}", cfg.folds)));
            }
            cmd_train(&cfg, model, folds_exclude)
        }
        Command::Eval { data, stacking, folds, stacking_folds, pixel_spacing_mm } => {
            override_path(&mut cfg.data, data);
            set(&mut cfg.stacking, stacking);
            set(&mut cfg.folds, folds);
            set(&mut cfg.stacking_folds, stacking_folds);
            if pixel_spacing_mm.is_some() {
                cfg.pixel_spacing_mm = pixel_spacing_mm;
            }
            cfg.validate().map_err(Failure::Usage)?;
            cmd_eval(&cfg)
        }
        Command::Viz { kind, weights, data, subject, frame, layer } => {
            override_path(&mut cfg.data, data);
            cmd_viz(&cfg, kind, &weights, subject, frame, layer.as_deref())
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn override_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn data_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    cfg.data.as_deref().ok_or_else(|| Failure::Usage("no dataset: pass --data or set \"data\" in the config".into()))
}

fn out_dir(cfg: &RunConfig, fallback: &str) -> anyhow::Result<PathBuf> {
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(fallback));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn load(cfg: &RunConfig) -> Result<Vec<Subject>, Failure> {
    let dir = data_dir(cfg)?;
    let subjects = load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    log::info!("loaded {} subjects from {}", subjects.len(), dir.display());
    Ok(subjects)
}

fn cmd_gen(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.subjects < cardioquant::dataset::MIN_SUBJECTS {
        return Err(Failure::Usage(format!("--subjects must be at least {}", cardioquant::dataset::MIN_SUBJECTS)));
    }
    let spec = PhantomSpec { image_size: cfg.image_size, seed: cfg.seed, ..PhantomSpec::default() };
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("data"));
    generate_dataset(&spec, cfg.subjects, cfg.seed, &out)?;
    println!("generated {} subjects in {}", cfg.subjects, out.display());
    println!("manifest sha256 {}", manifest_hash(&out)?);
    Ok(())
}

fn cmd_train(cfg: &RunConfig, kind: ModelKind, exclude: Option<usize>) -> Result<(), Failure> {
    let subjects = load(cfg)?;
    let (train, held): (Vec<&Subject>, Vec<&Subject>) = match exclude {
        Some(f) => {
            let ids: Vec<usize> = subjects.iter().map(|s| s.id).collect();
            let plan = make_folds(&ids, cfg.folds, cfg.seed)?;
            subjects.iter().partition(|s| plan.assignments[&s.id] != f)
        }
        None => (subjects.iter().collect(), Vec::new()),
    };
    let tc = cfg.train_config(kind);
    let w = match kind {
        ModelKind::Direct => train_direct(&train, &tc)?,
        ModelKind::UNet => train_unet(&train, &tc)?,
        ModelKind::MaskNet => train_masknet(&train, &tc)?,
    };
    let out = out_dir(cfg, "runs/train")?;
    let stem = out.join(kind.name());
    save_weights(&w, &stem)?;
    let loss = w.meta.as_ref().map_or(f64::NAN, |m| m.final_loss);
    println!("trained {kind} on {} subjects; final loss {loss}", train.len());
    println!("weights {}", stem.display());
    if kind == ModelKind::UNet && !held.is_empty() {
        let (mut cav, mut myo, mut n) = (0.0, 0.0, 0usize);
        for s in &held {
            let images: Vec<_> = s.frames.iter().map(|f| f.image.clone()).collect();
            for (m, f) in segment_batch(&w, &images)?.iter().zip(&s.frames) {
                cav += dice(m, &f.labels, CAVITY)?;
                myo += dice(m, &f.labels, MYOCARDIUM)?;
                n += 1;
            }
        }
        println!("held-out dice cavity {:.4} myocardium {:.4}", cav / n as f64, myo / n as f64);
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<(), Failure> {
    let subjects = load(cfg)?;
    let dir = data_dir(cfg)?;
    let hash = if dir.join(MANIFEST).exists() { Some(manifest_hash(dir)?) } else { None };
    let ids: Vec<usize> = subjects.iter().map(|s| s.id).collect();
    if cfg.folds > ids.len() {
        return Err(Failure::Usage(format!("{} folds for {} subjects", cfg.folds, ids.len())));
    }
    let plan = make_folds(&ids, cfg.folds, cfg.seed)?;
    let outcome = run_cv(&subjects, &plan, &cfg.cv_config(), hash)?;
    let out = out_dir(cfg, "runs/eval")?;
    emit_outcome(&outcome, &out)?;
    let report = &outcome.report;
    println!("{:<10} {:>10} {:>10} {:>10} {:>8}", "method", "area", "dimension", "rwt", "phase");
    for m in Method::ALL {
        let s = report.method(m);
        let g = |grp: IndexGroup| s.groups[IndexGroup::ALL.iter().position(|&x| x == grp).unwrap()].mae;
        println!(
            "{:<10} {:>10.3} {:>10.3} {:>10.3} {:>8.4}",
            m.name(),
            g(IndexGroup::Area),
            g(IndexGroup::Dimension),
            g(IndexGroup::Rwt),
            report.phase_of(m).regularized
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_viz(
    cfg: &RunConfig,
    kind: VizKind,
    weights: &Path,
    subject: usize,
    frame: usize,
    layer: Option<&str>,
) -> Result<(), Failure> {
    let expected = match kind {
        VizKind::Featmaps => None,
        VizKind::Segtriptych => Some(ModelKind::UNet),
    };
    let w = viz::load(weights, expected)?;
    let subjects = load(cfg)?;
    let s = subjects
        .iter()
        .find(|s| s.id == subject)
        .ok_or_else(|| anyhow::anyhow!("subject {subject} is not in the dataset"))?;
    let f = s
        .frames
        .get(frame)
        .ok_or_else(|| anyhow::anyhow!("subject {subject} has no frame {frame}"))?;
    let out = out_dir(cfg, "runs/viz")?;
    let paths = match kind {
        VizKind::Featmaps => {
            let first = w.architecture.layer_names().remove(0);
            vec![viz::featmaps(&w, f, layer.unwrap_or(&first), &out)?]
        }
        VizKind::Segtriptych => viz::triptych(&w, f, &format!("subj_{subject}_frame_{frame}"), &out)?,
    };
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}
