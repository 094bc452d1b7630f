//! Canvas reshaping, intensity normalization and augmentation.

mod augment;
mod warp;

pub use augment::{
    affine_jitter, apply_cutout_boxes, compose_augmentations, cutout, default_policies,
    gaussian_noise, grid_distortion, load_policies, optical_distortion, save_policies,
    shift_scale_rotate, warp_shift_scale_rotate, AffineJitterParams, AugmentKind, AugmentPolicy,
    CutoutParams, GaussianNoiseParams, GridDistortionParams, OpticalDistortionParams,
    Orientation, Rect, ShiftScaleRotateParams,
};
pub use warp::{warp, warp_with_probe, DisplacementField};

use std::path::Path;

use crate::error::{Error, Result};

/// Height of the network input canvas.
pub const CANVAS_HEIGHT: usize = 50;
/// Width of the network input canvas.
pub const CANVAS_WIDTH: usize = 200;
/// Intensity used for out-of-bounds samples in warps (white paper).
pub const BACKGROUND: f64 = 255.0;

/// Single-channel image with intensities on the 0–255 scale, row-major.
///
/// Crops loaded from disk hold integer values; augmentations and resampling
/// may leave fractional intensities, which are kept until normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty image {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Copies the rectangle `[y, y+h) × [x, x+w)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::Shape(format!(
                "crop [{x},{y},{w},{h}] outside {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }

    /// Converts a decoded image to grayscale by averaging the color channels
    /// (alpha ignored) and rounding to the nearest integer level.
    pub fn from_dynamic(img: &image::DynamicImage) -> Self {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb
            .pixels()
            .map(|p| {
                let sum = u32::from(p[0]) + u32::from(p[1]) + u32::from(p[2]);
                (f64::from(sum) / 3.0).round()
            })
            .collect();
        Self {
            height: h as usize,
            width: w as usize,
            data,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let gray = Self::from_dynamic(&img);
        if gray.height == 0 || gray.width == 0 {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: "image has no pixels".into(),
            });
        }
        Ok(gray)
    }

    /// Rounds and clamps to 8-bit luma.
    pub fn to_luma8(&self) -> image::GrayImage {
        let bytes = self
            .data
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_luma8().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Bilinear sample at real coordinates; neighbours outside the image
    /// contribute `fill`.
    #[inline]
    pub fn sample_bilinear(&self, sy: f64, sx: f64, fill: f64) -> f64 {
        let y0 = sy.floor();
        let x0 = sx.floor();
        let fy = sy - y0;
        let fx = sx - x0;
        let (y0, x0) = (y0 as isize, x0 as isize);
        let px = |yy: isize, xx: isize| -> f64 {
            if yy < 0 || xx < 0 || yy >= self.height as isize || xx >= self.width as isize {
                fill
            } else {
                self.data[yy as usize * self.width + xx as usize]
            }
        };
        let p00 = px(y0, x0);
        let p01 = px(y0, x0 + 1);
        let p10 = px(y0 + 1, x0);
        let p11 = px(y0 + 1, x0 + 1);
        let top = if fx == 0.0 { p00 } else { p00 + (p01 - p00) * fx };
        let bottom = if fx == 0.0 { p10 } else { p10 + (p11 - p10) * fx };
        if fy == 0.0 {
            top
        } else {
            top + (bottom - top) * fy
        }
    }
}

/// Bilinear resample onto the fixed 50×200 canvas, ignoring aspect ratio.
///
/// Pixel centres are aligned (`src = (dst + 0.5) * scale - 0.5`) and source
/// coordinates are clamped to the image, so a same-size input is returned
/// unchanged and constant images stay constant.
pub fn resize_to_canvas(image: &GrayImage) -> GrayImage {
    resize_bilinear(image, CANVAS_HEIGHT, CANVAS_WIDTH)
}

pub fn resize_bilinear(image: &GrayImage, out_h: usize, out_w: usize) -> GrayImage {
    let sy_scale = image.height as f64 / out_h as f64;
    let sx_scale = image.width as f64 / out_w as f64;
    let max_y = (image.height - 1) as f64;
    let max_x = (image.width - 1) as f64;
    GrayImage::from_fn(out_h, out_w, |y, x| {
        let sy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, max_y);
        let sx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, max_x);
        image.sample_bilinear(sy, sx, 0.0)
    })
}

/// A 50×200 image with values in `[-1, 1]`, ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage {
    data: Vec<f64>,
}

impl NormalizedImage {
    pub fn from_values(data: Vec<f64>) -> Result<Self> {
        if data.len() != CANVAS_HEIGHT * CANVAS_WIDTH {
            return Err(Error::Shape(format!(
                "normalized image needs {} values, got {}",
                CANVAS_HEIGHT * CANVAS_WIDTH,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "normalized value {v} outside [-1, 1]"
            )));
        }
        Ok(Self { data })
    }

    pub fn height(&self) -> usize {
        CANVAS_HEIGHT
    }

    pub fn width(&self) -> usize {
        CANVAS_WIDTH
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// `x / 127.5 - 1` elementwise.
#[inline]
pub fn normalize_value(x: f64) -> f64 {
    x / 127.5 - 1.0
}

/// Maps a canvas-sized 0–255 image to `[-1, 1]`.
pub fn normalize(image: &GrayImage) -> Result<NormalizedImage> {
    if image.height != CANVAS_HEIGHT || image.width != CANVAS_WIDTH {
        return Err(Error::Shape(format!(
            "normalize expects {CANVAS_HEIGHT}x{CANVAS_WIDTH}, got {}x{}",
            image.height, image.width
        )));
    }
    let data = image
        .data
        .iter()
        .map(|&v| normalize_value(v.clamp(0.0, 255.0)))
        .collect();
    Ok(NormalizedImage { data })
}

/// Resize followed by normalization.
pub fn preprocess(image: &GrayImage) -> NormalizedImage {
    normalize(&resize_to_canvas(image)).expect("canvas has the expected shape")
}
