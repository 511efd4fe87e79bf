//! Index measurement on label masks and overlap scoring.
//!
//! Angles follow one convention everywhere: 0° points to image "up"
//! (decreasing row) along the anterior-septal axis, and angles grow
//! counter-clockwise as seen on screen, so 90° points left. The unit
//! direction for angle θ is `(x, y) = (−sin θ, −cos θ)`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::indices::{IndexVector, INDEX_COUNT};
use crate::Tensor;

pub const BACKGROUND: u8 = 0;
pub const MYOCARDIUM: u8 = 1;
pub const CAVITY: u8 = 2;
pub const CLASS_COUNT: usize = 3;

/// Number of centroid rays, one per degree.
pub const RAYS: usize = 360;
const SECTOR: usize = RAYS / 6;
/// Diameters average the ray-pair sums within ±this many degrees of the
/// axis. A single pair is quantized by up to a pixel at each end.
pub const DIAMETER_HALF_WINDOW: usize = 5;

/// Row-major per-pixel class ids in `{0, 1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Validation(format!(
                "mask of {width}x{height} cannot hold {} labels",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= CLASS_COUNT) {
            return Err(Error::Validation(format!("label value {bad} is not a class id")));
        }
        Ok(LabelMask {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, class: u8) -> Self {
        LabelMask {
            width,
            height,
            labels: vec![class; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, class: u8) {
        self.labels[y * self.width + x] = class;
    }

    pub fn count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// `[1, 3, H, W]` one-hot encoding.
    pub fn one_hot(&self) -> Tensor {
        let plane = self.width * self.height;
        let mut t = Tensor::zeros(vec![1, CLASS_COUNT, self.height, self.width]);
        for (i, &l) in self.labels.iter().enumerate() {
            t.data_mut()[l as usize * plane + i] = 1.0;
        }
        t
    }
}

/// Per-ray endocardial and epicardial radii measured from the cavity
/// centroid.
#[derive(Debug, Clone)]
pub struct RayProfile {
    /// Absolute pixel coordinates (x, y) of the cavity centroid.
    pub centroid: (f64, f64),
    pub endo: Vec<f64>,
    pub epi: Vec<f64>,
}

impl RayProfile {
    /// Cavity diameter along the axis at `degrees`: the endocardial radii of
    /// the ray and its opposite, summed.
    pub fn diameter_at(&self, degrees: usize) -> f64 {
        self.endo[degrees % RAYS] + self.endo[(degrees + RAYS / 2) % RAYS]
    }

    /// Mean of [`Self::diameter_at`] over the rays within
    /// [`DIAMETER_HALF_WINDOW`] degrees of `degrees`.
    pub fn axis_diameter(&self, degrees: usize) -> f64 {
        let lo = degrees % RAYS + RAYS - DIAMETER_HALF_WINDOW;
        let n = 2 * DIAMETER_HALF_WINDOW + 1;
        (lo..lo + n).map(|d| self.diameter_at(d)).sum::<f64>() / n as f64
    }

    pub fn thickness(&self, ray: usize) -> f64 {
        self.epi[ray] - self.endo[ray]
    }

    /// Mean wall thickness of the 60° sector `sector` (0-based,
    /// counter-clockwise from 0°).
    pub fn sector_thickness(&self, sector: usize) -> f64 {
        let rays = sector * SECTOR..(sector + 1) * SECTOR;
        rays.map(|r| self.thickness(r)).sum::<f64>() / SECTOR as f64
    }
}

/// Unit direction of the ray at integer `degrees`.
pub fn ray_direction(degrees: usize) -> (f64, f64) {
    let t = (degrees as f64).to_radians();
    (-t.sin(), -t.cos())
}

/// Casts the 360 centroid rays. The centroid and every traversal are
/// computed relative to the cavity's bounding-box corner, which makes the
/// result bit-identical under integer translations of the mask.
pub fn ray_profile(mask: &LabelMask) -> Result<RayProfile> {
    let cavity = mask.count(CAVITY);
    let myo = mask.count(MYOCARDIUM);
    if cavity == 0 {
        return Err(Error::InvalidMask("no cavity (class 2) pixels".into()));
    }
    if myo == 0 {
        return Err(Error::InvalidMask("no myocardium (class 1) pixels".into()));
    }
    let (w, h) = (mask.width, mask.height);
    let (mut x0, mut y0) = (usize::MAX, usize::MAX);
    for (i, &l) in mask.labels.iter().enumerate() {
        if l == CAVITY {
            x0 = x0.min(i % w);
            y0 = y0.min(i / w);
        }
    }
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for (i, &l) in mask.labels.iter().enumerate() {
        if l == CAVITY {
            sx += (i % w - x0) as f64 + 0.5;
            sy += (i / w - y0) as f64 + 0.5;
        }
    }
    let (cx, cy) = (sx / cavity as f64, sy / cavity as f64);

    let mut endo = vec![0.0; RAYS];
    let mut epi = vec![0.0; RAYS];
    for deg in 0..RAYS {
        let (dx, dy) = ray_direction(deg);
        let (mut last_cavity, mut last_wall) = (0.0f64, 0.0f64);
        traverse(cx, cy, dx, dy, |cell_x, cell_y, t_exit| {
            let ax = cell_x + x0 as i64;
            let ay = cell_y + y0 as i64;
            if ax < 0 || ay < 0 || ax >= w as i64 || ay >= h as i64 {
                return false;
            }
            match mask.get(ax as usize, ay as usize) {
                CAVITY => {
                    last_cavity = t_exit;
                    last_wall = last_wall.max(t_exit);
                }
                MYOCARDIUM => last_wall = t_exit,
                _ => {}
            }
            true
        });
        endo[deg] = last_cavity;
        epi[deg] = last_wall.max(last_cavity);
    }
    Ok(RayProfile {
        centroid: (cx + x0 as f64, cy + y0 as f64),
        endo,
        epi,
    })
}

/// Grid traversal (Amanatides–Woo) from `(px, py)` along `(dx, dy)`. Calls
/// `visit(cell_x, cell_y, t_exit)` for each cell in order, where `t_exit` is
/// the ray parameter at which the ray leaves the cell; stops when `visit`
/// returns false.
fn traverse(px: f64, py: f64, dx: f64, dy: f64, mut visit: impl FnMut(i64, i64, f64) -> bool) {
    let mut cell_x = px.floor() as i64;
    let mut cell_y = py.floor() as i64;
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let boundary = |cell: i64, step: i64| (cell + i64::from(step > 0)) as f64;
    let mut t_max_x = if dx.abs() < 1e-12 { f64::INFINITY } else { (boundary(cell_x, step_x) - px) / dx };
    let mut t_max_y = if dy.abs() < 1e-12 { f64::INFINITY } else { (boundary(cell_y, step_y) - py) / dy };
    let t_delta_x = if dx.abs() < 1e-12 { f64::INFINITY } else { 1.0 / dx.abs() };
    let t_delta_y = if dy.abs() < 1e-12 { f64::INFINITY } else { 1.0 / dy.abs() };
    loop {
        let t_exit = t_max_x.min(t_max_y);
        if !visit(cell_x, cell_y, t_exit) {
            return;
        }
        if t_max_x < t_max_y {
            cell_x += step_x;
            t_max_x += t_delta_x;
        } else {
            cell_y += step_y;
            t_max_y += t_delta_y;
        }
    }
}

/// Measures the eleven indices of a label mask.
///
/// A1 and A2 are pixel counts of classes 2 and 1. From the cavity centroid,
/// 360 rays at 1° record the exit distance of the last cavity pixel (endo
/// radius) and of the last wall pixel (epi radius). D1–D3 are ray-pair
/// diameters along the 0°, 60° and 120° axes, averaged over ±5°; RWT1–RWT6
/// are sector means of epi − endo.
/// A ray that leaves the cavity and re-enters it keeps the farthest hit, so
/// non-star-convex cavities are measured rather than rejected.
pub fn quantify_mask(mask: &LabelMask) -> Result<IndexVector> {
    let profile = ray_profile(mask)?;
    let mut v = [0.0; INDEX_COUNT];
    v[0] = mask.count(CAVITY) as f64;
    v[1] = mask.count(MYOCARDIUM) as f64;
    for (i, axis) in [0usize, 60, 120].into_iter().enumerate() {
        v[2 + i] = profile.axis_diameter(axis);
    }
    for s in 0..6 {
        v[5 + s] = profile.sector_thickness(s);
    }
    Ok(IndexVector(v))
}

/// Dice overlap `2|P∩T| / (|P|+|T|)` of one class; 1 when both are empty.
pub fn dice(predicted: &LabelMask, truth: &LabelMask, class: u8) -> Result<f64> {
    if predicted.width != truth.width || predicted.height != truth.height {
        return Err(Error::Validation(format!(
            "dice: {}x{} vs {}x{}",
            predicted.width, predicted.height, truth.width, truth.height
        )));
    }
    let (mut both, mut p, mut t) = (0usize, 0usize, 0usize);
    for (&a, &b) in predicted.labels.iter().zip(&truth.labels) {
        let (ia, ib) = (a == class, b == class);
        p += usize::from(ia);
        t += usize::from(ib);
        both += usize::from(ia && ib);
    }
    if p + t == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + t) as f64)
}

/// 4-connected components of the pixels where `member` is true. Returns a
/// per-pixel component id (`u32::MAX` for non-members) and component sizes,
/// numbered in row-major discovery order.
pub fn components(width: usize, height: usize, member: &[bool]) -> (Vec<u32>, Vec<usize>) {
    let mut ids = vec![u32::MAX; member.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..member.len() {
        if !member[start] || ids[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        ids[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if member[j] && ids[j] == u32::MAX {
                    ids[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        sizes.push(size);
    }
    (ids, sizes)
}

/// Id of the largest component; the earliest discovered wins ties.
fn largest(sizes: &[usize]) -> Option<u32> {
    let mut best: Option<(usize, usize)> = None;
    for (i, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i as u32)
}

/// Hard labels from `[3, H, W]` (or `[1, 3, H, W]`) class probabilities.
///
/// Each pixel takes its most probable class, ties going to the lower class
/// id. Cleanup then keeps only the largest 4-connected foreground
/// (class 1 ∪ 2) component, sending everything else to background, and the
/// largest 4-connected cavity component; stray cavity pixels inside the kept
/// foreground become myocardium.
pub fn mask_from_probs(probs: &Tensor) -> Result<LabelMask> {
    let shape = probs.shape();
    let (c, h, w) = match *shape {
        [c, h, w] => (c, h, w),
        [1, c, h, w] => (c, h, w),
        _ => {
            return Err(Error::Validation(format!(
                "mask_from_probs expects [3,H,W], got {shape:?}"
            )))
        }
    };
    if c != CLASS_COUNT {
        return Err(Error::Validation(format!("expected {CLASS_COUNT} class channels, got {c}")));
    }
    let plane = h * w;
    let p = probs.data();
    let mut labels: Vec<u8> = (0..plane)
        .map(|i| {
            let mut best = 0u8;
            for class in 1..CLASS_COUNT {
                if p[class * plane + i] > p[best as usize * plane + i] {
                    best = class as u8;
                }
            }
            best
        })
        .collect();

    let fg: Vec<bool> = labels.iter().map(|&l| l != BACKGROUND).collect();
    let (fg_ids, fg_sizes) = components(w, h, &fg);
    if let Some(keep) = largest(&fg_sizes) {
        for (l, &id) in labels.iter_mut().zip(&fg_ids) {
            if id != keep {
                *l = BACKGROUND;
            }
        }
    }
    let cav: Vec<bool> = labels.iter().map(|&l| l == CAVITY).collect();
    let (cav_ids, cav_sizes) = components(w, h, &cav);
    if let Some(keep) = largest(&cav_sizes) {
        for (l, &id) in labels.iter_mut().zip(&cav_ids) {
            if *l == CAVITY && id != keep {
                *l = MYOCARDIUM;
            }
        }
    }
    LabelMask::new(w, h, labels)
}

/// Rotates a mask counter-clockwise by `degrees` about `center` (absolute
/// pixel coordinates), sampling the source at the nearest pixel. Content that
/// sat at angle θ ends up at θ + degrees; pixels mapping outside the frame
/// become background.
pub fn rotate_mask(mask: &LabelMask, center: (f64, f64), degrees: f64) -> LabelMask {
    let (w, h) = (mask.width, mask.height);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = LabelMask::filled(w, h, BACKGROUND);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 + 0.5 - center.0;
            let dy = y as f64 + 0.5 - center.1;
            // source sits at angle θ − degrees, same radius
            let sx = center.0 + c * dx - s * dy;
            let sy = center.1 + s * dx + c * dy;
            let (fx, fy) = (sx.floor(), sy.floor());
            if fx >= 0.0 && fy >= 0.0 && (fx as usize) < w && (fy as usize) < h {
                out.set(x, y, mask.get(fx as usize, fy as usize));
            }
        }
    }
    out
}
