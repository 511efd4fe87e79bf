//! Synthetic short-axis cine phantoms with exactly known label masks.
//!
//! Each subject is a nested pair of smooth star-shaped contours around a
//! jittered center. The endocardium contracts over a plateau-shaped systolic
//! window; the epicardium follows so that the myocardial area inside every
//! angular wedge is conserved, which thickens the wall in systole. Ground
//! truth indices are measured on the rasterized mask.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, LabelMask, BACKGROUND, CAVITY, MYOCARDIUM};
use crate::indices::IndexVector;
use crate::phase::{self, PhaseSequence};
use crate::{seeds, Tensor};

pub const FRAMES: usize = 20;
/// Harmonic orders of the contour perturbation.
pub const HARMONICS: [f64; 2] = [2.0, 3.0];
const MIN_ENDO_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub image_size: usize,
    /// Maximum offset of the LV center from the image center, px.
    pub center_jitter: f64,
    pub endo_radius: f64,
    pub epi_radius: f64,
    /// Per-subject relative variation of both base radii.
    pub radius_jitter: f64,
    /// Maximum amplitudes (fractions of radius) of the 2nd and 3rd harmonic.
    pub endo_harmonics: [f64; 2],
    pub wall_harmonics: [f64; 2],
    /// Per-subject fractional end-systolic shrink of the endocardial radius
    /// is drawn from this range.
    pub contraction_depth: [f64; 2],
    pub systole_onset: usize,
    pub systole_offset: usize,
    /// Per-subject shift of onset/offset, in frames.
    pub timing_jitter: usize,
    /// Frames over which contraction ramps in and out.
    pub ramp_frames: f64,
    pub intensity_cavity: f64,
    pub intensity_myocardium: f64,
    pub intensity_background: f64,
    pub noise_sigma: f64,
    pub texture_amplitude: f64,
    /// Counter-clockwise rotation of both contours about the LV center,
    /// degrees.
    pub orientation: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            image_size: 64,
            center_jitter: 3.0,
            endo_radius: 10.0,
            epi_radius: 16.0,
            radius_jitter: 0.12,
            endo_harmonics: [0.08, 0.04],
            wall_harmonics: [0.15, 0.1],
            contraction_depth: [0.25, 0.4],
            systole_onset: 2,
            systole_offset: 11,
            timing_jitter: 2,
            ramp_frames: 2.0,
            intensity_cavity: 0.85,
            intensity_myocardium: 0.45,
            intensity_background: 0.15,
            noise_sigma: 0.05,
            texture_amplitude: 0.05,
            orientation: 0.0,
            seed: 7,
        }
    }
}

impl PhantomSpec {
    /// Circles with no perturbation, jitter, texture or noise.
    pub fn clean_circles(endo: f64, epi: f64) -> Self {
        PhantomSpec {
            center_jitter: 0.0,
            endo_radius: endo,
            epi_radius: epi,
            radius_jitter: 0.0,
            endo_harmonics: [0.0; 2],
            wall_harmonics: [0.0; 2],
            noise_sigma: 0.0,
            texture_amplitude: 0.0,
            timing_jitter: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(format!("phantom spec: {m}")));
        if !(16..=128).contains(&self.image_size) || self.image_size % 16 != 0 {
            return fail(format!("image_size {} must be a multiple of 16 in 16..=128", self.image_size));
        }
        let [dmin, dmax] = self.contraction_depth;
        if !(0.1..=0.5).contains(&dmin) || !(0.1..=0.5).contains(&dmax) || dmin > dmax {
            return fail(format!("contraction_depth {:?} must be an ordered range within [0.1, 0.5]", self.contraction_depth));
        }
        if self.systole_onset >= FRAMES || self.systole_offset >= FRAMES {
            return fail("systole onset/offset must be frame indices in [0, 19]".into());
        }
        let window = (self.systole_offset + FRAMES - self.systole_onset) % FRAMES;
        if window < 2 * self.timing_jitter + 3 || window + 2 * self.timing_jitter + 3 > FRAMES {
            return fail(format!("systolic window of {window} frames leaves no room for jitter and diastole"));
        }
        if self.ramp_frames <= 0.0 || 2.0 * self.ramp_frames > (window - 2 * self.timing_jitter) as f64 {
            return fail(format!("ramp_frames {} does not fit the systolic window", self.ramp_frames));
        }
        if !(0.0..0.5).contains(&self.radius_jitter) {
            return fail("radius_jitter must be in [0, 0.5)".into());
        }
        let endo_wobble: f64 = self.endo_harmonics.iter().sum();
        let wall_wobble: f64 = self.wall_harmonics.iter().sum();
        if self.endo_harmonics.iter().chain(&self.wall_harmonics).any(|&a| a < 0.0) || endo_wobble >= 1.0 || wall_wobble >= 1.0 {
            return fail("harmonic amplitudes must be non-negative and sum below 1".into());
        }
        if self.epi_radius <= self.endo_radius {
            return fail("epi_radius must exceed endo_radius".into());
        }
        let smallest_endo = self.endo_radius * (1.0 - self.radius_jitter) * (1.0 - dmax) * (1.0 - endo_wobble);
        if smallest_endo < MIN_ENDO_RADIUS {
            return fail(format!("end-systolic endo radius can reach {smallest_endo:.2} px, below {MIN_ENDO_RADIUS}"));
        }
        // outermost epicardium: largest endo plus largest wall, inside the frame
        let largest = self.endo_radius * (1.0 + self.radius_jitter) * (1.0 + endo_wobble)
            + (self.epi_radius - self.endo_radius) * (1.0 + self.radius_jitter) * (1.0 + wall_wobble);
        let room = self.image_size as f64 / 2.0 - self.center_jitter - 1.0;
        if largest > room {
            return fail(format!("epicardium can reach {largest:.1} px from center, only {room:.1} px available"));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("texture_amplitude", self.texture_amplitude),
            ("center_jitter", self.center_jitter),
        ] {
            if !(v >= 0.0) {
                return fail(format!("{name} must be non-negative"));
            }
        }
        if !self.orientation.is_finite() {
            return fail("orientation must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `[1, H, W]`, values on the 8-bit grid `k / 255`.
    pub image: Tensor,
    pub labels: LabelMask,
    pub truth: IndexVector,
    pub phase: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: usize,
    pub frames: Vec<Frame>,
}

impl Subject {
    pub fn phase(&self) -> Result<PhaseSequence> {
        PhaseSequence::new(self.frames.iter().map(|f| f.phase).collect())
    }

    pub fn areas(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.truth.a1()).collect()
    }
}

/// Star-shaped contour `r(θ) = base · (1 + Σ aₖ cos(kθ + φₖ))`.
#[derive(Debug, Clone, Copy)]
struct Contour {
    base: f64,
    amp: [f64; 2],
    phase: [f64; 2],
}

impl Contour {
    fn draw(base: f64, max_amp: [f64; 2], rng: &mut ChaCha8Rng) -> Self {
        let mut amp = [0.0; 2];
        let mut phase = [0.0; 2];
        for k in 0..2 {
            amp[k] = if max_amp[k] > 0.0 { rng.random_range(0.0..max_amp[k]) } else { 0.0 };
            phase[k] = rng.random_range(0.0..std::f64::consts::TAU);
        }
        Contour { base, amp, phase }
    }

    fn radius(&self, theta: f64) -> f64 {
        let wobble: f64 = (0..2).map(|k| self.amp[k] * (HARMONICS[k] * theta + self.phase[k]).cos()).sum();
        self.base * (1.0 + wobble)
    }
}

/// Smooth plateau in `[0, 1]`: 0 in diastole, 1 through the systolic core,
/// raised-cosine ramps of `ramp` frames at both ends (cyclic).
fn contraction_profile(t: usize, onset: usize, offset: usize, ramp: f64) -> f64 {
    let window = ((offset + FRAMES - onset) % FRAMES) as f64;
    let u = ((t + FRAMES - onset) % FRAMES) as f64;
    if u >= window {
        return 0.0;
    }
    let rise = (u / ramp).min(1.0);
    let fall = ((window - u) / ramp).min(1.0);
    let s = rise.min(fall);
    0.5 * (1.0 - (std::f64::consts::PI * s).cos())
}

/// Low-frequency texture: a few random plane waves.
struct Texture {
    waves: Vec<(f64, f64, f64)>,
    amplitude: f64,
}

impl Texture {
    fn draw(amplitude: f64, size: usize, rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..4)
            .map(|_| {
                let cycles = rng.random_range(0.5..2.5);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU * cycles / size as f64;
                (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Texture { waves, amplitude }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let s: f64 = self.waves.iter().map(|&(kx, ky, p)| (kx * x + ky * y + p).sin()).sum();
        self.amplitude * s / self.waves.len() as f64
    }
}

/// Generates one subject from its own RNG stream.
pub fn generate_subject(spec: &PhantomSpec, id: usize, rng: &mut ChaCha8Rng) -> Result<Subject> {
    spec.validate()?;
    let size = spec.image_size;
    let half = size as f64 / 2.0;
    let jitter = |rng: &mut ChaCha8Rng, amount: f64| if amount > 0.0 { rng.random_range(-amount..amount) } else { 0.0 };

    let cx = half + jitter(rng, spec.center_jitter);
    let cy = half + jitter(rng, spec.center_jitter);
    let endo_base = spec.endo_radius * (1.0 + jitter(rng, spec.radius_jitter));
    let wall_base = (spec.epi_radius - spec.endo_radius) * (1.0 + jitter(rng, spec.radius_jitter));
    let endo = Contour::draw(endo_base, spec.endo_harmonics, rng);
    let wall = Contour::draw(wall_base, spec.wall_harmonics, rng);
    let [dmin, dmax] = spec.contraction_depth;
    let depth = if dmax > dmin { rng.random_range(dmin..dmax) } else { dmin };
    let tj = spec.timing_jitter as i64;
    let shift = |rng: &mut ChaCha8Rng, f: usize| {
        let d = if tj > 0 { rng.random_range(-tj..=tj) } else { 0 };
        ((f as i64 + d).rem_euclid(FRAMES as i64)) as usize
    };
    let onset = shift(rng, spec.systole_onset);
    let offset = shift(rng, spec.systole_offset);
    let texture = Texture::draw(spec.texture_amplitude, size, rng);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).map_err(|e| Error::Validation(e.to_string()))?;

    // per-pixel polar coordinates around the contour center
    let polar: Vec<(f64, f64)> = (0..size * size)
        .map(|i| {
            let dx = (i % size) as f64 + 0.5 - cx;
            let dy = (i / size) as f64 + 0.5 - cy;
            ((dx * dx + dy * dy).sqrt(), (-dx).atan2(-dy))
        })
        .collect();

    let mut frames = Vec::with_capacity(FRAMES);
    for t in 0..FRAMES {
        let scale = 1.0 - depth * contraction_profile(t, onset, offset, spec.ramp_frames);
        let mut labels = Vec::with_capacity(size * size);
        let mut pixels = Vec::with_capacity(size * size);
        for (i, &(r, theta)) in polar.iter().enumerate() {
            let theta = theta - spec.orientation.to_radians();
            let r_endo0 = endo.radius(theta);
            let r_epi0 = r_endo0 + wall.radius(theta);
            let r_endo = r_endo0 * scale;
            let r_epi = (r_endo * r_endo + r_epi0 * r_epi0 - r_endo0 * r_endo0).sqrt();
            let (class, base) = if r < r_endo {
                (CAVITY, spec.intensity_cavity)
            } else if r < r_epi {
                (MYOCARDIUM, spec.intensity_myocardium)
            } else {
                (BACKGROUND, spec.intensity_background)
            };
            labels.push(class);
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            let n = if spec.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            let v = (base + texture.at(x, y) + n).clamp(0.0, 1.0);
            pixels.push(quantize(v));
        }
        let labels = LabelMask::new(size, size, labels)?;
        let truth = geometry::quantify_mask(&labels)?;
        frames.push(Frame {
            image: Tensor::new(vec![1, size, size], pixels)?,
            labels,
            truth,
            phase: 0,
        });
    }

    let areas: Vec<f64> = frames.iter().map(|f| f.truth.a1()).collect();
    let bits = phase::infer_phase(&areas);
    if phase::cyclic_transitions(bits.bits()) != 2 {
        return Err(Error::Validation(format!(
            "subject {id}: cavity area cycle yields no single systolic arc"
        )));
    }
    for (f, &b) in frames.iter_mut().zip(bits.bits()) {
        f.phase = b;
    }
    Ok(Subject { id, frames })
}

/// Rounds to the nearest 8-bit gray level, as stored on disk.
pub fn quantize(v: f64) -> f32 {
    (v * 255.0).round().clamp(0.0, 255.0) as f32 / 255.0
}

/// `n` subjects with independent streams derived from `seed`.
pub fn generate_subjects(spec: &PhantomSpec, n: usize, seed: u64) -> Result<Vec<Subject>> {
    use rayon::prelude::*;
    spec.validate()?;
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeds::stream(seed, &format!("dataset/subject/{k}"));
            generate_subject(spec, k, &mut rng)
        })
        .collect()
}
