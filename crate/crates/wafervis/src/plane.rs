//! 2-D activity planes and grayscale image conversions.
//!
//! All model activities are row-major `f32` grids; `Plane` indexing is
//! `[row, col]` (y first), matching `ndarray` convention.

use image::GrayImage;
use ndarray::Array2;

/// A 2-D scalar grid (neuronal activities, gray images in [0,1], maps).
pub type Plane = Array2<f32>;

/// Convenience operations used across the attention model.
pub trait PlaneExt {
    /// Clamp every entry to `[0, 1]`.
    fn clip01(&mut self);
    /// Largest entry (0.0 for an empty plane).
    fn max_value(&self) -> f32;
    /// `(row, col)` of the largest entry, row-major first on ties.
    fn argmax(&self) -> (usize, usize);
    /// Divide by the global max; no-op when the max is below `eps`.
    fn normalize_max(&mut self, eps: f32);
}

impl PlaneExt for Plane {
    fn clip01(&mut self) {
        self.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }

    fn max_value(&self) -> f32 {
        self.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    fn argmax(&self) -> (usize, usize) {
        let mut best = f32::NEG_INFINITY;
        let mut at = (0, 0);
        for ((r, c), &v) in self.indexed_iter() {
            if v > best {
                best = v;
                at = (r, c);
            }
        }
        at
    }

    fn normalize_max(&mut self, eps: f32) {
        let m = self.max_value();
        if m > eps {
            self.mapv_inplace(|v| v / m);
        }
    }
}

/// Convert an 8-bit grayscale image to a `[0,1]` plane.
pub fn plane_from_gray(img: &GrayImage) -> Plane {
    let (w, h) = img.dimensions();
    Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        f32::from(img.get_pixel(c as u32, r as u32)[0]) / 255.0
    })
}

/// Convert a plane to an 8-bit grayscale image, clamping to [0,1].
pub fn gray_from_plane(plane: &Plane) -> GrayImage {
    let (h, w) = plane.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = plane[[y as usize, x as usize]].clamp(0.0, 1.0);
        image::Luma([(v * 255.0).round() as u8])
    })
}
