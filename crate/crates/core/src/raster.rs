//! Digital images and their kernel-smoothed continuous counterparts.
//!
//! A [`SmoothImage`] is the unnormalized sum of linear-decay kernels in the
//! ℓ∞ metric, one per grid point, weighted by the pixel intensity:
//!
//! ```text
//! M(x) = Σ_z pixel(z) · max(0, 1 − ‖z − x‖∞ / cutoff)
//! ```
//!
//! Points are `[row, col]` pairs in grid units; grid point `(i, j)` sits at
//! `[i, j]` and has lexicographic index `i * cols + j`.

use crate::error::{Error, Result};
use crate::lattice::CanvasTransform;

/// A grayscale image on the grid `[rows] × [cols]` with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalImage {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
}

impl DigitalImage {
    /// Builds an image, rejecting out-of-range or non-finite intensities.
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols, pixels.len())?;
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "pixel intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self { rows, cols, pixels })
    }

    /// Builds an image, clamping every intensity into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols, pixels.len())?;
        let pixels = pixels
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Ok(Self { rows, cols, pixels })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        Self {
            rows,
            cols,
            pixels: vec![0.0; rows * cols],
        }
    }

    /// Maps raw 8-bit intensities to `[0, 1]` by division by 255.
    pub fn from_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        check_dims(rows, cols, bytes.len())?;
        Ok(Self {
            rows,
            cols,
            pixels: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.cols + col]
    }

    /// `1 − v` for every pixel.
    pub fn inverted(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Area-averaging resize. Each output pixel is the mean of the input over
    /// its footprint, with fractional coverage at footprint borders.
    pub fn resize_area(&self, rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        if (rows, cols) == self.dims() {
            return self.clone();
        }
        let row_weights = area_weights(self.rows, rows);
        let col_weights = area_weights(self.cols, cols);
        let mut pixels = Vec::with_capacity(rows * cols);
        for rw in &row_weights {
            for cw in &col_weights {
                let mut acc = 0.0;
                let mut mass = 0.0;
                for &(i, wi) in rw {
                    for &(j, wj) in cw {
                        acc += wi * wj * self.get(i, j);
                        mass += wi * wj;
                    }
                }
                pixels.push((acc / mass).clamp(0.0, 1.0));
            }
        }
        Self { rows, cols, pixels }
    }

    /// Quantizes to 8 bits, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

fn check_dims(rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput(format!(
            "image dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if rows * cols != len {
        return Err(Error::InvalidInput(format!(
            "{rows}x{cols} image needs {} pixels, got {len}",
            rows * cols
        )));
    }
    Ok(())
}

/// For each of `dst` output cells, the `(source index, overlap length)` pairs
/// covering it when `src` cells are stretched onto `dst` cells.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|k| {
            let lo = k as f64 * scale;
            let hi = (k + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                    (overlap > 1e-12).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

/// A digital image viewed as a continuous, piecewise-linear function on the plane.
#[derive(Debug, Clone)]
pub struct SmoothImage {
    source: DigitalImage,
    cutoff: f64,
}

/// Smooths `image` with cutoff radius `cutoff` (grid units).
pub fn smooth(image: &DigitalImage, cutoff: f64) -> Result<SmoothImage> {
    SmoothImage::new(image.clone(), cutoff)
}

impl SmoothImage {
    pub fn new(source: DigitalImage, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cutoff radius must be positive and finite, got {cutoff}"
            )));
        }
        Ok(Self { source, cutoff })
    }

    pub fn source(&self) -> &DigitalImage {
        &self.source
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Grid indices `k` along one axis with `|k − x| < cutoff`.
    #[inline]
    fn window(&self, x: f64, len: usize) -> Option<(usize, usize)> {
        if !x.is_finite() {
            return None;
        }
        let lo = (x - self.cutoff).floor() + 1.0;
        let hi = (x + self.cutoff).ceil() - 1.0;
        let lo = lo.max(0.0);
        let hi = hi.min(len as f64 - 1.0);
        if lo > hi {
            return None;
        }
        Some((lo as usize, hi as usize))
    }

    /// Evaluates the smooth image at one point.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let (Some((r0, r1)), Some((c0, c1))) = (
            self.window(x[0], self.source.rows),
            self.window(x[1], self.source.cols),
        ) else {
            return 0.0;
        };
        let inv = 1.0 / self.cutoff;
        let mut acc = 0.0;
        for i in r0..=r1 {
            let a0 = (x[0] - i as f64).abs();
            if a0 >= self.cutoff {
                continue;
            }
            let row = &self.source.pixels[i * self.source.cols..(i + 1) * self.source.cols];
            for (j, &v) in row.iter().enumerate().take(c1 + 1).skip(c0) {
                if v == 0.0 {
                    continue;
                }
                let a1 = (x[1] - j as f64).abs();
                if a1 >= self.cutoff {
                    continue;
                }
                acc += v * (1.0 - a0.max(a1) * inv);
            }
        }
        acc
    }

    /// Value and spatial gradient at one point.
    ///
    /// On the ℓ∞ diagonal `|Δrow| = |Δcol|` the row face is used; a kernel
    /// peak (zero offset) contributes no gradient along its axis; points on
    /// the cutoff boundary contribute nothing.
    pub fn eval_with_gradient(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let (Some((r0, r1)), Some((c0, c1))) = (
            self.window(x[0], self.source.rows),
            self.window(x[1], self.source.cols),
        ) else {
            return (0.0, [0.0, 0.0]);
        };
        let inv = 1.0 / self.cutoff;
        let mut acc = 0.0;
        let mut g0 = 0.0;
        let mut g1 = 0.0;
        for i in r0..=r1 {
            let d0 = x[0] - i as f64;
            let a0 = d0.abs();
            if a0 >= self.cutoff {
                continue;
            }
            let row = &self.source.pixels[i * self.source.cols..(i + 1) * self.source.cols];
            for (j, &v) in row.iter().enumerate().take(c1 + 1).skip(c0) {
                if v == 0.0 {
                    continue;
                }
                let d1 = x[1] - j as f64;
                let a1 = d1.abs();
                if a1 >= self.cutoff {
                    continue;
                }
                if a0 >= a1 {
                    acc += v * (1.0 - a0 * inv);
                    g0 -= v * inv * signum0(d0);
                } else {
                    acc += v * (1.0 - a1 * inv);
                    g1 -= v * inv * signum0(d1);
                }
            }
        }
        (acc, [g0, g1])
    }
}

#[inline]
fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Colors of `smooth` at every row of `points`.
pub fn sample(smooth: &SmoothImage, points: &CanvasTransform) -> Vec<f64> {
    points.points().iter().map(|&p| smooth.eval(p)).collect()
}

/// Spatial gradients of `smooth` at every row of `points`.
pub fn sample_gradient(smooth: &SmoothImage, points: &CanvasTransform) -> Vec<[f64; 2]> {
    points
        .points()
        .iter()
        .map(|&p| smooth.eval_with_gradient(p).1)
        .collect()
}

/// Colors and gradients in one pass; `values` and `grads` are overwritten.
pub fn sample_with_gradient_into(
    smooth: &SmoothImage,
    points: &[[f64; 2]],
    values: &mut Vec<f64>,
    grads: &mut Vec<[f64; 2]>,
) {
    values.clear();
    grads.clear();
    for &p in points {
        let (v, g) = smooth.eval_with_gradient(p);
        values.push(v);
        grads.push(g);
    }
}

pub fn sample_into(smooth: &SmoothImage, points: &[[f64; 2]], values: &mut Vec<f64>) {
    values.clear();
    values.extend(points.iter().map(|&p| smooth.eval(p)));
}
