//! The seven augmentation policies and their composition.
//!
//! Every policy works on raw 0–255 crops, preserves the image shape, and is a
//! pure function of `(image, parameters, seed)`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::warp::{warp, DisplacementField};
use super::GrayImage;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// Axis-aligned box in pixel units, top-left origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutoutParams {
    pub min_boxes: usize,
    pub max_boxes: usize,
    /// Band thickness as a fraction of the spanned dimension.
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for CutoutParams {
    fn default() -> Self {
        Self {
            min_boxes: 1,
            max_boxes: 3,
            min_fraction: 0.05,
            max_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianNoiseParams {
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for GaussianNoiseParams {
    fn default() -> Self {
        Self {
            sigma_min: 5.0,
            sigma_max: 15.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftScaleRotateParams {
    /// Maximum shift as a fraction of the image size along each axis.
    pub shift_limit: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Maximum absolute rotation in degrees.
    pub rotate_limit: f64,
}

impl Default for ShiftScaleRotateParams {
    fn default() -> Self {
        Self {
            shift_limit: 0.06,
            scale_min: 0.9,
            scale_max: 1.1,
            rotate_limit: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridDistortionParams {
    pub cells: usize,
    /// Maximum offset of a lattice vertex in pixels.
    pub magnitude: f64,
}

impl Default for GridDistortionParams {
    fn default() -> Self {
        Self {
            cells: 4,
            magnitude: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticalDistortionParams {
    /// Radial coefficient is drawn from `[-k_limit, k_limit]`.
    pub k_limit: f64,
}

impl Default for OpticalDistortionParams {
    fn default() -> Self {
        Self { k_limit: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffineJitterParams {
    pub grid_step: usize,
    /// Standard deviation of each control point offset, in pixels.
    pub sigma: f64,
}

impl Default for AffineJitterParams {
    fn default() -> Self {
        Self {
            grid_step: 25,
            sigma: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum AugmentKind {
    CutoutH(CutoutParams),
    CutoutV(CutoutParams),
    GaussianNoise(GaussianNoiseParams),
    ShiftScaleRotate(ShiftScaleRotateParams),
    OpticalDistortion(OpticalDistortionParams),
    GridDistortion(GridDistortionParams),
    AffineJitter(AffineJitterParams),
}

impl AugmentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentKind::CutoutH(_) => "cutout_h",
            AugmentKind::CutoutV(_) => "cutout_v",
            AugmentKind::GaussianNoise(_) => "gaussian_noise",
            AugmentKind::ShiftScaleRotate(_) => "shift_scale_rotate",
            AugmentKind::OpticalDistortion(_) => "optical_distortion",
            AugmentKind::GridDistortion(_) => "grid_distortion",
            AugmentKind::AffineJitter(_) => "affine_jitter",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("{}: {msg}", self.name())));
        match self {
            AugmentKind::CutoutH(p) | AugmentKind::CutoutV(p) => {
                if p.min_boxes > p.max_boxes {
                    return bad("min_boxes > max_boxes".into());
                }
                if !(0.0..=1.0).contains(&p.min_fraction)
                    || !(0.0..=1.0).contains(&p.max_fraction)
                    || p.min_fraction > p.max_fraction
                {
                    return bad("fractions must satisfy 0 <= min <= max <= 1".into());
                }
            }
            AugmentKind::GaussianNoise(p) => {
                if !(p.sigma_min >= 0.0 && p.sigma_min <= p.sigma_max) {
                    return bad("need 0 <= sigma_min <= sigma_max".into());
                }
            }
            AugmentKind::ShiftScaleRotate(p) => {
                if !(0.0..=1.0).contains(&p.shift_limit) {
                    return bad("shift_limit outside [0, 1]".into());
                }
                if !(p.scale_min > 0.0 && p.scale_min <= p.scale_max) {
                    return bad("need 0 < scale_min <= scale_max".into());
                }
                if !(0.0..=180.0).contains(&p.rotate_limit) {
                    return bad("rotate_limit outside [0, 180]".into());
                }
            }
            AugmentKind::OpticalDistortion(p) => {
                if !(0.0..=1.0).contains(&p.k_limit) {
                    return bad("k_limit outside [0, 1]".into());
                }
            }
            AugmentKind::GridDistortion(p) => {
                if p.cells == 0 || !(p.magnitude >= 0.0) {
                    return bad("need cells >= 1 and magnitude >= 0".into());
                }
            }
            AugmentKind::AffineJitter(p) => {
                if p.grid_step == 0 || !(p.sigma >= 0.0) {
                    return bad("need grid_step >= 1 and sigma >= 0".into());
                }
            }
        }
        Ok(())
    }

    /// Applies this policy unconditionally.
    pub fn apply(&self, image: &GrayImage, seed: u64) -> GrayImage {
        match self {
            AugmentKind::CutoutH(p) => cutout(image, Orientation::Horizontal, p, seed),
            AugmentKind::CutoutV(p) => cutout(image, Orientation::Vertical, p, seed),
            AugmentKind::GaussianNoise(p) => {
                let mut rng = seed::rng(seed);
                let sigma = uniform(&mut rng, p.sigma_min, p.sigma_max);
                gaussian_noise(image, sigma, rng.random())
            }
            AugmentKind::ShiftScaleRotate(p) => shift_scale_rotate(image, p, seed),
            AugmentKind::OpticalDistortion(p) => optical_distortion(image, p.k_limit, seed),
            AugmentKind::GridDistortion(p) => grid_distortion(image, p.cells, p.magnitude, seed),
            AugmentKind::AffineJitter(p) => affine_jitter(image, p.grid_step, p.sigma, seed),
        }
    }
}

/// One entry of a policy file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    #[serde(flatten)]
    pub kind: AugmentKind,
    pub probability: f64,
}

impl AugmentPolicy {
    pub fn new(kind: AugmentKind, probability: f64) -> Self {
        Self { kind, probability }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidArgument(format!(
                "{}: probability {} outside [0, 1]",
                self.kind.name(),
                self.probability
            )));
        }
        self.kind.validate()
    }
}

/// The seven policies with their default parameters, each firing with p = 0.5.
pub fn default_policies() -> Vec<AugmentPolicy> {
    [
        AugmentKind::CutoutH(CutoutParams::default()),
        AugmentKind::CutoutV(CutoutParams::default()),
        AugmentKind::GaussianNoise(GaussianNoiseParams::default()),
        AugmentKind::ShiftScaleRotate(ShiftScaleRotateParams::default()),
        AugmentKind::OpticalDistortion(OpticalDistortionParams::default()),
        AugmentKind::GridDistortion(GridDistortionParams::default()),
        AugmentKind::AffineJitter(AffineJitterParams::default()),
    ]
    .into_iter()
    .map(|k| AugmentPolicy::new(k, 0.5))
    .collect()
}

pub fn load_policies(path: &Path) -> Result<Vec<AugmentPolicy>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let policies: Vec<AugmentPolicy> = serde_json::from_str(&text)?;
    for p in &policies {
        p.validate()?;
    }
    Ok(policies)
}

pub fn save_policies(path: &Path, policies: &[AugmentPolicy]) -> Result<()> {
    let text = serde_json::to_string_pretty(policies)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Applies `policies` in order; each fires independently with its own
/// probability drawn from a stream seeded by `seed`.
pub fn compose_augmentations(policies: &[AugmentPolicy], image: &GrayImage, seed: u64) -> GrayImage {
    let mut rng = seed::rng(seed);
    let mut out = image.clone();
    for policy in policies {
        // Both draws happen whether or not the policy fires, so the stream
        // seen by later policies does not depend on earlier outcomes.
        let roll: f64 = rng.random();
        let child: u64 = rng.random();
        if roll < policy.probability {
            out = policy.kind.apply(&out, child);
        }
    }
    out
}

/// Sets every pixel inside `boxes` (clipped to the image) to 0.
pub fn apply_cutout_boxes(image: &GrayImage, boxes: &[Rect]) -> GrayImage {
    let mut out = image.clone();
    for b in boxes {
        let y_end = (b.y + b.height).min(image.height());
        let x_end = (b.x + b.width).min(image.width());
        for y in b.y.min(y_end)..y_end {
            for x in b.x.min(x_end)..x_end {
                out.set(y, x, 0.0);
            }
        }
    }
    out
}

/// Erases random black bands. Horizontal bands span the full width with a
/// thickness drawn as a fraction of the height; vertical bands are the
/// transpose.
pub fn cutout(
    image: &GrayImage,
    orientation: Orientation,
    params: &CutoutParams,
    seed: u64,
) -> GrayImage {
    let mut rng = seed::rng(seed);
    let count = if params.max_boxes > params.min_boxes {
        rng.random_range(params.min_boxes..=params.max_boxes)
    } else {
        params.min_boxes
    };
    let (h, w) = (image.height(), image.width());
    let span = match orientation {
        Orientation::Horizontal => h,
        Orientation::Vertical => w,
    };
    let boxes: Vec<Rect> = (0..count)
        .map(|_| {
            let frac = uniform(&mut rng, params.min_fraction, params.max_fraction);
            let size = ((frac * span as f64).round() as usize).clamp(1, span);
            let start = rng.random_range(0..=span - size);
            match orientation {
                Orientation::Horizontal => Rect {
                    x: 0,
                    y: start,
                    width: w,
                    height: size,
                },
                Orientation::Vertical => Rect {
                    x: start,
                    y: 0,
                    width: size,
                    height: h,
                },
            }
        })
        .collect();
    apply_cutout_boxes(image, &boxes)
}

/// Adds i.i.d. `N(0, sigma²)` noise and clamps to `[0, 255]`.
pub fn gaussian_noise(image: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    if sigma <= 0.0 {
        return image.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let mut rng = seed::rng(seed);
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 255.0);
    }
    out
}

/// Draws a shift, scale and angle from `params` and applies the warp.
pub fn shift_scale_rotate(image: &GrayImage, params: &ShiftScaleRotateParams, seed: u64) -> GrayImage {
    let mut rng = seed::rng(seed);
    let sy = uniform(&mut rng, -params.shift_limit, params.shift_limit);
    let sx = uniform(&mut rng, -params.shift_limit, params.shift_limit);
    let scale = uniform(&mut rng, params.scale_min, params.scale_max);
    let angle = uniform(&mut rng, -params.rotate_limit, params.rotate_limit);
    warp_shift_scale_rotate(image, sy, sx, scale, angle)
}

/// Rotates by `angle_deg` and scales by `scale` about the image centre, then
/// translates by `(shift_y, shift_x)` fractions of the image size.
pub fn warp_shift_scale_rotate(
    image: &GrayImage,
    shift_y: f64,
    shift_x: f64,
    scale: f64,
    angle_deg: f64,
) -> GrayImage {
    let (h, w) = (image.height(), image.width());
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let ty = shift_y * h as f64;
    let tx = shift_x * w as f64;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let field = DisplacementField::from_fn(h, w, |y, x| {
        // Inverse map: undo translation, then rotation and scale.
        let py = y as f64 - cy - ty;
        let px = x as f64 - cx - tx;
        let src_x = (cos * px + sin * py) / scale + cx;
        let src_y = (-sin * px + cos * py) / scale + cy;
        (src_y - y as f64, src_x - x as f64)
    });
    warp(image, &field)
}

/// Barrel/pincushion distortion with a radial coefficient drawn from
/// `[-k_limit, k_limit]`; radii are normalized by the half diagonal.
pub fn optical_distortion(image: &GrayImage, k_limit: f64, seed: u64) -> GrayImage {
    let mut rng = seed::rng(seed);
    let k = uniform(&mut rng, -k_limit.abs(), k_limit.abs());
    warp(image, &optical_field(image.height(), image.width(), k))
}

pub(crate) fn optical_field(h: usize, w: usize, k: f64) -> DisplacementField {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let radius = cy.hypot(cx).max(1.0);
    DisplacementField::from_fn(h, w, |y, x| {
        let py = y as f64 - cy;
        let px = x as f64 - cx;
        let r2 = (py * py + px * px) / (radius * radius);
        (py * k * r2, px * k * r2)
    })
}

/// Moves the vertices of a `cells × cells` grid by random offsets of at most
/// `magnitude` pixels and interpolates the field bilinearly.
pub fn grid_distortion(image: &GrayImage, cells: usize, magnitude: f64, seed: u64) -> GrayImage {
    warp(image, &grid_field(image.height(), image.width(), cells, magnitude, seed))
}

pub(crate) fn grid_field(
    h: usize,
    w: usize,
    cells: usize,
    magnitude: f64,
    seed: u64,
) -> DisplacementField {
    let mut rng = seed::rng(seed);
    let n = cells.max(1) + 1;
    let offsets: Vec<(f64, f64)> = (0..n * n)
        .map(|_| {
            let r = uniform(&mut rng, 0.0, magnitude);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            (r * theta.sin(), r * theta.cos())
        })
        .collect();
    DisplacementField::from_lattice(h, w, n, n, &offsets)
}

/// Places control points every `grid_step` pixels, moves each by Gaussian
/// offsets with standard deviation `sigma` (truncated at 3σ), and interpolates.
pub fn affine_jitter(image: &GrayImage, grid_step: usize, sigma: f64, seed: u64) -> GrayImage {
    warp(
        image,
        &jitter_field(image.height(), image.width(), grid_step, sigma, seed),
    )
}

pub(crate) fn jitter_field(
    h: usize,
    w: usize,
    grid_step: usize,
    sigma: f64,
    seed: u64,
) -> DisplacementField {
    if sigma <= 0.0 {
        return DisplacementField::zeros(h, w);
    }
    let step = grid_step.max(1);
    let rows = (h - 1).div_ceil(step).max(1) + 1;
    let cols = (w - 1).div_ceil(step).max(1) + 1;
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let mut rng = seed::rng(seed);
    let limit = 3.0 * sigma;
    let offsets: Vec<(f64, f64)> = (0..rows * cols)
        .map(|_| {
            let dy: f64 = normal.sample(&mut rng);
            let dx: f64 = normal.sample(&mut rng);
            (dy.clamp(-limit, limit), dx.clamp(-limit, limit))
        })
        .collect();
    DisplacementField::from_lattice(h, w, rows, cols, &offsets)
}
