//! Inference helpers for trained weights.

use cardioquant_tensor::Graph;

use super::{denormalize_targets, forward_infer, ModelKind, ModelWeights};
use crate::error::{Error, Result};
use crate::geometry::{mask_from_probs, LabelMask};
use crate::indices::IndexVector;
use crate::Tensor;

const INFER_BATCH: usize = 32;

/// Output of the segmentation branch for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegPrediction {
    pub mask: LabelMask,
    pub indices: IndexVector,
}

fn stack(samples: &[Tensor]) -> Result<Tensor> {
    let first = samples.first().ok_or_else(|| Error::Validation("no samples".into()))?;
    let mut shape = vec![samples.len()];
    let inner: Vec<usize> = match *first.shape() {
        [1, c, h, w] => vec![c, h, w],
        [c, h, w] => vec![c, h, w],
        ref s => return Err(Error::Validation(format!("expected a [C,H,W] sample, got {s:?}"))),
    };
    shape.extend(&inner);
    let mut data = Vec::with_capacity(shape.iter().product());
    for s in samples {
        if s.len() != first.len() {
            return Err(Error::Validation("samples differ in size".into()));
        }
        data.extend_from_slice(s.data());
    }
    Ok(Tensor::new(shape, data)?)
}

/// Runs a regression network on `[C,H,W]` samples, in batches.
fn regress(w: &ModelWeights, samples: &[Tensor]) -> Result<Vec<IndexVector>> {
    let size = w.architecture.input_size;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(INFER_BATCH) {
        let mut g = Graph::new();
        let y = forward_infer(w, &mut g, stack(chunk)?, None)?;
        let y = g.value(y);
        let k = y.shape()[1];
        for row in y.data().chunks(k) {
            let v: Vec<f64> = row.iter().map(|&x| f64::from(x)).collect();
            out.push(denormalize_targets(&v, size).clamp_non_negative());
        }
    }
    Ok(out)
}

/// DirectNet indices for each `[1,H,W]` image.
pub fn predict_direct_batch(w: &ModelWeights, images: &[Tensor]) -> Result<Vec<IndexVector>> {
    w.expect_kind(ModelKind::Direct)?;
    regress(w, images)
}

pub fn predict_direct(w: &ModelWeights, image: &Tensor) -> Result<IndexVector> {
    Ok(predict_direct_batch(w, std::slice::from_ref(image))?.remove(0))
}

/// MaskNet indices for `[3,H,W]` one-hot masks.
pub fn predict_masknet_batch(masknet: &ModelWeights, masks: &[Tensor]) -> Result<Vec<IndexVector>> {
    masknet.expect_kind(ModelKind::MaskNet)?;
    regress(masknet, masks)
}

/// UNet argmax masks after largest-component cleanup.
pub fn segment_batch(unet: &ModelWeights, images: &[Tensor]) -> Result<Vec<LabelMask>> {
    unet.expect_kind(ModelKind::UNet)?;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(INFER_BATCH) {
        let mut g = Graph::new();
        let y = forward_infer(unet, &mut g, stack(chunk)?, None)?;
        let probs = g.value(y);
        let (n, c, h, w) = probs.dims4("segment")?;
        for sample in probs.data().chunks(c * h * w).take(n) {
            out.push(mask_from_probs(&Tensor::new(vec![c, h, w], sample.to_vec())?)?);
        }
    }
    Ok(out)
}

/// UNet → mask cleanup → MaskNet on the one-hot mask.
pub fn predict_seg_batch(unet: &ModelWeights, masknet: &ModelWeights, images: &[Tensor]) -> Result<Vec<SegPrediction>> {
    masknet.expect_kind(ModelKind::MaskNet)?;
    let masks = segment_batch(unet, images)?;
    let one_hot: Vec<Tensor> = masks.iter().map(LabelMask::one_hot).collect();
    let indices = predict_masknet_batch(masknet, &one_hot)?;
    Ok(masks
        .into_iter()
        .zip(indices)
        .map(|(mask, indices)| SegPrediction { mask, indices })
        .collect())
}

pub fn predict_seg(unet: &ModelWeights, masknet: &ModelWeights, image: &Tensor) -> Result<(LabelMask, IndexVector)> {
    let p = predict_seg_batch(unet, masknet, std::slice::from_ref(image))?.remove(0);
    Ok((p.mask, p.indices))
}
