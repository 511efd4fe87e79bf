//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.json
//! <root>/subj_<k>/frame_<t>.pgm   8-bit image
//! <root>/subj_<k>/label_<t>.pgm   class ids 0/1/2
//! <root>/subj_<k>/truth.csv       frame,A1,...,RWT6,phase
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::LabelMask;
use crate::indices::{IndexVector, INDEX_COUNT, INDEX_NAMES};
use crate::phantom::{self, Frame, PhantomSpec, Subject, FRAMES};
use crate::pgm::{self, GrayImage};
use crate::phase::PhaseSequence;
use crate::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const MIN_SUBJECTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub subjects: usize,
    pub frames_per_subject: usize,
    pub image_size: usize,
    pub spec: PhantomSpec,
    /// Relative path → hex SHA-256 of every emitted data file.
    pub files: BTreeMap<String, String>,
}

pub fn subject_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("subj_{id}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the manifest file's bytes, the dataset's identity.
pub fn manifest_hash(root: &Path) -> Result<String> {
    let path = root.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Generates `n` subjects and writes them under `root`.
pub fn generate_dataset(spec: &PhantomSpec, n: usize, seed: u64, root: &Path) -> Result<(Vec<Subject>, DatasetManifest)> {
    if n < MIN_SUBJECTS {
        return Err(Error::Validation(format!("need at least {MIN_SUBJECTS} subjects, got {n}")));
    }
    let subjects = phantom::generate_subjects(spec, n, seed)?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let hashes: Vec<Vec<(String, String)>> = subjects.par_iter().map(|s| write_subject(root, s)).collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        seed,
        subjects: n,
        frames_per_subject: FRAMES,
        image_size: spec.image_size,
        spec: spec.clone(),
        files: hashes.into_iter().flatten().collect(),
    };
    let path = root.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse(&path, e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok((subjects, manifest))
}

fn to_gray(image: &Tensor) -> Result<GrayImage> {
    let [_, h, w] = *image.shape() else {
        return Err(Error::Validation(format!("frame image must be [1,H,W], got {:?}", image.shape())));
    };
    let pixels = image.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    GrayImage::new(w, h, pixels)
}

fn write_subject(root: &Path, subject: &Subject) -> Result<Vec<(String, String)>> {
    let dir = subject_dir(root, subject.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    let mut record = |name: String, dir: &Path| -> Result<()> {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        written.push((format!("subj_{}/{name}", subject.id), sha256_hex(&bytes)));
        Ok(())
    };
    for (t, frame) in subject.frames.iter().enumerate() {
        let name = format!("frame_{t}.pgm");
        pgm::write_pgm(&dir.join(&name), &to_gray(&frame.image)?)?;
        record(name, &dir)?;
        let name = format!("label_{t}.pgm");
        let labels = &frame.labels;
        pgm::write_pgm(&dir.join(&name), &GrayImage::new(labels.width(), labels.height(), labels.labels().to_vec())?)?;
        record(name, &dir)?;
    }
    let path = dir.join("truth.csv");
    fs::write(&path, truth_csv(subject)).map_err(|e| Error::io(&path, e))?;
    record("truth.csv".into(), &dir)?;
    Ok(written)
}

fn truth_csv(subject: &Subject) -> String {
    let mut s = format!("frame,{},phase\n", INDEX_NAMES.join(","));
    for (t, f) in subject.frames.iter().enumerate() {
        s.push_str(&t.to_string());
        for v in f.truth.values() {
            // shortest round-trip representation
            s.push_str(&format!(",{v}"));
        }
        s.push_str(&format!(",{}\n", f.phase));
    }
    s
}

/// Loads every `subj_<k>` directory under `root`, in increasing `k`.
///
/// When a manifest is present its subject count and file checksums are
/// enforced; directories without one (external data) are read as-is.
pub fn load_dataset(root: &Path) -> Result<Vec<Subject>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        let Some(id) = name.to_str().and_then(|n| n.strip_prefix("subj_")).and_then(|k| k.parse::<usize>().ok()) else {
            continue;
        };
        if entry.path().is_dir() {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    let manifest_path = root.join(MANIFEST);
    let manifest = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, format!("malformed manifest: {e}")))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                &manifest_path,
                format!("dataset format version {} (expected {FORMAT_VERSION})", m.format_version),
            ));
        }
        Some(m)
    } else {
        None
    };
    if ids.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    if let Some(m) = &manifest {
        if m.subjects != ids.len() {
            return Err(Error::parse(
                &manifest_path,
                format!("manifest lists {} subjects, found {} subject directories", m.subjects, ids.len()),
            ));
        }
    }
    ids.par_iter().map(|&id| load_subject(root, id, manifest.as_ref())).collect()
}

fn read_checked(root: &Path, rel: &str, manifest: Option<&DatasetManifest>) -> Result<Vec<u8>> {
    let path = root.join(rel);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if let Some(m) = manifest {
        match m.files.get(rel) {
            Some(expected) if *expected == sha256_hex(&bytes) => {}
            Some(_) => return Err(Error::parse(&path, "checksum does not match the dataset manifest")),
            None => return Err(Error::parse(&path, "file is not listed in the dataset manifest")),
        }
    }
    Ok(bytes)
}

fn load_subject(root: &Path, id: usize, manifest: Option<&DatasetManifest>) -> Result<Subject> {
    let dir = subject_dir(root, id);
    let fail = |detail: String| Error::parse(&dir, format!("subject {id}: {detail}"));
    let present = (0..)
        .take_while(|t| dir.join(format!("frame_{t}.pgm")).exists())
        .count();
    if present != FRAMES {
        return Err(fail(format!("expected {FRAMES} frames, found {present}")));
    }
    let truth_rel = format!("subj_{id}/truth.csv");
    let truth_bytes = read_checked(root, &truth_rel, manifest)?;
    let truth_text = String::from_utf8(truth_bytes).map_err(|_| fail("truth.csv is not UTF-8".into()))?;
    let rows = parse_truth(&truth_text).map_err(|d| Error::parse(root.join(&truth_rel), format!("subject {id}: {d}")))?;
    if rows.len() != FRAMES {
        return Err(fail(format!("truth.csv has {} rows, expected {FRAMES}", rows.len())));
    }

    let mut frames = Vec::with_capacity(FRAMES);
    let mut size = None;
    for (t, (truth, phase)) in rows.into_iter().enumerate() {
        let image = decode(root, &format!("subj_{id}/frame_{t}.pgm"), manifest)?;
        let labels = decode(root, &format!("subj_{id}/label_{t}.pgm"), manifest)?;
        let dims = (image.width, image.height);
        if (labels.width, labels.height) != dims || image.width != image.height {
            return Err(fail(format!("frame {t}: image and label must be equal squares")));
        }
        if *size.get_or_insert(dims) != dims {
            return Err(fail(format!("frame {t}: size {dims:?} differs from frame 0")));
        }
        let mask = LabelMask::new(labels.width, labels.height, labels.pixels)
            .map_err(|e| fail(format!("label_{t}.pgm: {e}")))?;
        let data = image.pixels.iter().map(|&p| p as f32 / 255.0).collect();
        frames.push(Frame {
            image: Tensor::new(vec![1, image.height, image.width], data)?,
            labels: mask,
            truth,
            phase,
        });
    }
    let bits: Vec<u8> = frames.iter().map(|f| f.phase).collect();
    PhaseSequence::new(bits).map_err(|e| fail(format!("truth.csv phase column: {e}")))?;
    Ok(Subject { id, frames })
}

fn decode(root: &Path, rel: &str, manifest: Option<&DatasetManifest>) -> Result<GrayImage> {
    if manifest.is_some() {
        read_checked(root, rel, manifest)?;
    }
    pgm::read_pgm(&root.join(rel))
}

fn parse_truth(text: &str) -> std::result::Result<Vec<(IndexVector, u8)>, String> {
    let mut lines = text.lines();
    let expected = format!("frame,{},phase", INDEX_NAMES.join(","));
    match lines.next() {
        Some(h) if h.trim() == expected => {}
        Some(h) => return Err(format!("unexpected header {h:?}")),
        None => return Err("empty file".into()),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != INDEX_COUNT + 2 {
            return Err(format!("line {}: expected {} fields, found {}", n + 2, INDEX_COUNT + 2, fields.len()));
        }
        let frame: usize = fields[0].parse().map_err(|_| format!("line {}: bad frame index {:?}", n + 2, fields[0]))?;
        if frame != rows.len() {
            return Err(format!("line {}: frame {frame} out of order", n + 2));
        }
        let mut v = [0.0; INDEX_COUNT];
        for (i, slot) in v.iter_mut().enumerate() {
            let raw = fields[i + 1];
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("line {}: bad {} value {raw:?}", n + 2, INDEX_NAMES[i]))?;
        }
        let phase = match fields[INDEX_COUNT + 1] {
            "0" => 0,
            "1" => 1,
            other => return Err(format!("line {}: phase must be 0 or 1, found {other:?}", n + 2)),
        };
        rows.push((IndexVector(v), phase));
    }
    Ok(rows)
}
