use super::{GrayImage, BACKGROUND};

/// Per-pixel source offsets: output pixel `(y, x)` is sampled at
/// `(y + dy, x + dx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    height: usize,
    width: usize,
    dy: Vec<f64>,
    dx: Vec<f64>,
}

impl DisplacementField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            dy: vec![0.0; height * width],
            dx: vec![0.0; height * width],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut field = Self::zeros(height, width);
        for y in 0..height {
            for x in 0..width {
                let (dy, dx) = f(y, x);
                field.dy[y * width + x] = dy;
                field.dx[y * width + x] = dx;
            }
        }
        field
    }

    /// Interpolates offsets given on a coarse lattice of `rows × cols`
    /// control points spread evenly over the image (corners included).
    pub fn from_lattice(
        height: usize,
        width: usize,
        rows: usize,
        cols: usize,
        offsets: &[(f64, f64)],
    ) -> Self {
        assert!(rows >= 2 && cols >= 2 && offsets.len() == rows * cols);
        let span_y = (height.max(2) - 1) as f64;
        let span_x = (width.max(2) - 1) as f64;
        Self::from_fn(height, width, |y, x| {
            let gy = y as f64 / span_y * (rows - 1) as f64;
            let gx = x as f64 / span_x * (cols - 1) as f64;
            let r0 = (gy.floor() as usize).min(rows - 2);
            let c0 = (gx.floor() as usize).min(cols - 2);
            let ty = gy - r0 as f64;
            let tx = gx - c0 as f64;
            let at = |r: usize, c: usize| offsets[r * cols + c];
            let (a, b, c, d) = (at(r0, c0), at(r0, c0 + 1), at(r0 + 1, c0), at(r0 + 1, c0 + 1));
            let lerp2 = |p: f64, q: f64, s: f64, t: f64| {
                let top = p + (q - p) * tx;
                let bottom = s + (t - s) * tx;
                top + (bottom - top) * ty
            };
            (lerp2(a.0, b.0, c.0, d.0), lerp2(a.1, b.1, c.1, d.1))
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.dy[i], self.dx[i])
    }

    /// Largest Euclidean offset in the field.
    pub fn max_magnitude(&self) -> f64 {
        self.dy
            .iter()
            .zip(&self.dx)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.dy.iter().chain(&self.dx).all(|&v| v == 0.0)
    }
}

/// Resamples `image` through `field` with bilinear interpolation and white fill.
pub fn warp(image: &GrayImage, field: &DisplacementField) -> GrayImage {
    warp_with_probe(image, field, |_, _, _, _| {})
}

/// Like [`warp`], reporting each `(y, x, source_y, source_x)` to `probe`.
pub fn warp_with_probe(
    image: &GrayImage,
    field: &DisplacementField,
    mut probe: impl FnMut(usize, usize, f64, f64),
) -> GrayImage {
    assert_eq!(
        (field.height, field.width),
        (image.height(), image.width()),
        "field shape must match the image"
    );
    if field.is_zero() {
        for y in 0..image.height() {
            for x in 0..image.width() {
                probe(y, x, y as f64, x as f64);
            }
        }
        return image.clone();
    }
    GrayImage::from_fn(image.height(), image.width(), |y, x| {
        let (dy, dx) = field.at(y, x);
        let sy = y as f64 + dy;
        let sx = x as f64 + dx;
        probe(y, x, sy, sx);
        image.sample_bilinear(sy, sx, BACKGROUND)
    })
}
