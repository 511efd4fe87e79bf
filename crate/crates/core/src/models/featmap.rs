//! Feature-map grids for inspecting intermediate activations.

use std::path::Path;

use cardioquant_tensor::Graph;

use super::{forward_infer, ModelWeights};
use crate::error::{Error, Result};
use crate::pgm::{self, GrayImage};
use crate::Tensor;

/// Value of the one-pixel lines between tiles.
pub const SEPARATOR: u8 = 255;

/// Tiles the channels of a `[1,C,H,W]` activation row-major into a grid
/// `ceil(sqrt(C))` tiles wide. Each channel is min-max scaled to 0..=255
/// on its own; a constant channel maps to 0.
pub fn feature_map_grid(act: &Tensor) -> Result<GrayImage> {
    let (n, c, h, w) = act.dims4("feature_map_grid")?;
    if n != 1 {
        return Err(Error::Validation(format!("expected a single sample, got {n}")));
    }
    let cols = (c as f64).sqrt().ceil() as usize;
    let rows = c.div_ceil(cols);
    let (gw, gh) = (cols * w + cols - 1, rows * h + rows - 1);
    let mut pixels = vec![SEPARATOR; gw * gh];
    for (ch, plane) in act.data().chunks(h * w).enumerate() {
        let lo = plane.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let (x0, y0) = ((ch % cols) * (w + 1), (ch / cols) * (h + 1));
        for y in 0..h {
            for x in 0..w {
                let v = plane[y * w + x];
                let g = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 0 };
                pixels[(y0 + y) * gw + x0 + x] = g;
            }
        }
    }
    GrayImage::new(gw, gh, pixels)
}

/// Runs `image` (`[1,H,W]`) through the network and writes the grid of
/// the named layer's activation (before pooling) to `out`.
pub fn export_feature_maps(w: &ModelWeights, image: &Tensor, layer: &str, out: &Path) -> Result<GrayImage> {
    let names = w.architecture.layer_names();
    if !names.iter().any(|n| n == layer) {
        return Err(Error::Validation(format!(
            "unknown layer {layer:?} for {} (available: {})",
            w.architecture,
            names.join(", ")
        )));
    }
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    if shape.len() != 4 {
        return Err(Error::Validation(format!("expected a [C,H,W] image, got {:?}", image.shape())));
    }
    let x = image.clone().reshape(shape)?;
    let mut g = Graph::new();
    let mut taps = Vec::new();
    forward_infer(w, &mut g, x, Some(&mut taps))?;
    let (_, var) = taps.into_iter().find(|(n, _)| n == layer).expect("tapped layer listed by the architecture");
    let grid = feature_map_grid(g.value(var))?;
    pgm::write_pgm(out, &grid)?;
    Ok(grid)
}
