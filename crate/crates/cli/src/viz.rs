use std::path::Path;

use anyhow::Context;
use cardioquant::models::{export_feature_maps, load_weights, segment_batch, ModelKind, ModelWeights};
use cardioquant::pgm::{write_pgm, GrayImage};
use cardioquant::{Frame, LabelMask, Tensor};

/// Background black, myocardium gray, cavity near-white.
pub fn mask_image(mask: &LabelMask) -> anyhow::Result<GrayImage> {
    let px = mask.labels().iter().map(|&c| c * 127).collect();
    Ok(GrayImage::new(mask.width(), mask.height(), px)?)
}

pub fn intensity_image(image: &Tensor) -> anyhow::Result<GrayImage> {
    let shape = image.shape();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let px = image.data()[..h * w].iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    Ok(GrayImage::new(w, h, px)?)
}

pub fn load(stem: &Path, kind: Option<ModelKind>) -> anyhow::Result<ModelWeights> {
    load_weights(stem, kind).with_context(|| format!("loading weights {}", stem.display()))
}

/// Writes the activation grid of `layer` and returns the file path.
pub fn featmaps(w: &ModelWeights, frame: &Frame, layer: &str, out: &Path) -> anyhow::Result<std::path::PathBuf> {
    let input = match w.architecture.kind {
        ModelKind::MaskNet => frame.labels.one_hot(),
        _ => frame.image.clone(),
    };
    let path = out.join(format!("featmaps_{}_{layer}.pgm", w.architecture.kind));
    export_feature_maps(w, &input, layer, &path)?;
    Ok(path)
}

/// Input image, ground-truth mask and predicted mask side by side as three files.
pub fn triptych(unet: &ModelWeights, frame: &Frame, stem: &str, out: &Path) -> anyhow::Result<Vec<std::path::PathBuf>> {
    let pred = segment_batch(unet, std::slice::from_ref(&frame.image))?.remove(0);
    let parts = [
        ("input", intensity_image(&frame.image)?),
        ("truth", mask_image(&frame.labels)?),
        ("pred", mask_image(&pred)?),
    ];
    let mut paths = Vec::new();
    for (name, img) in parts {
        let path = out.join(format!("{stem}_{name}.pgm"));
        write_pgm(&path, &img)?;
        paths.push(path);
    }
    Ok(paths)
}
