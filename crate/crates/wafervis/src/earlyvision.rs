//! V1 front-end: Gabor edge planes, color opponency, and 10x aligned
//! max pooling.

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;

/// The V1-pool grid is exactly 1/10 of the V1-simple grid per axis.
pub const POOL_FACTOR: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct V1Params {
    pub n_orientations: usize,
    pub wavelengths: Vec<f32>,
    /// Gaussian envelope std as a fraction of the wavelength.
    pub sigma_factor: f32,
    /// Spatial aspect ratio of the envelope (elongation along the stimulus).
    pub aspect: f32,
    pub pool_factor: usize,
    pub color_enabled: bool,
}

impl Default for V1Params {
    fn default() -> Self {
        V1Params {
            n_orientations: 4,
            wavelengths: vec![4.0, 8.0],
            sigma_factor: 0.56,
            aspect: 0.5,
            pool_factor: POOL_FACTOR,
            color_enabled: false,
        }
    }
}

impl V1Params {
    pub fn validate(&self) -> Result<()> {
        if self.pool_factor != POOL_FACTOR {
            return Err(Error::Config(format!(
                "pool_factor must be {POOL_FACTOR} (V1 pool is aligned at exactly 1/{POOL_FACTOR} of V1 simple)"
            )));
        }
        if self.n_orientations == 0 || self.wavelengths.is_empty() {
            return Err(Error::Config("V1 needs orientations and wavelengths".into()));
        }
        if self.sigma_factor <= 0.0 || self.aspect <= 0.0 {
            return Err(Error::Config("V1 sigma/aspect must be positive".into()));
        }
        Ok(())
    }

    /// Stimulus orientation of plane `k` in degrees (0 = horizontal bar).
    pub fn orientation_deg(&self, k: usize) -> f32 {
        180.0 * k as f32 / self.n_orientations as f32
    }

    pub fn n_edge_planes(&self) -> usize {
        self.n_orientations * self.wavelengths.len()
    }

    pub fn n_planes(&self) -> usize {
        self.n_edge_planes() + if self.color_enabled { 2 } else { 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Rectified Gabor magnitude for a stimulus orientation/wavelength.
    Edge { orientation_deg: f32, wavelength: f32 },
    /// Red-green opponency contrast.
    OpponencyRG,
    /// Blue-yellow opponency contrast.
    OpponencyBY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Simple,
    Pool,
}

/// A stack of same-shaped activity planes with feature descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    /// (feature, row, col), activities in [0,1].
    pub planes: Array3<f32>,
    pub features: Vec<FeatureKind>,
    pub resolution: Resolution,
    /// Reflect padding (rows, cols) applied before pooling.
    pub pad: (usize, usize),
}

impl FeatureStack {
    pub fn grid(&self) -> (usize, usize) {
        let d = self.planes.dim();
        (d.1, d.2)
    }

    /// Dump all planes to a binary tensor container.
    pub fn dump<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        crate::tensorbin::write_array3(w, &self.planes)
    }
}

/// Input image: grayscale plane or (3, H, W) RGB planes, values in [0,1].
pub enum ImageInput<'a> {
    Gray(&'a Plane),
    Rgb(&'a Array3<f32>),
}

impl ImageInput<'_> {
    fn luminance(&self) -> Plane {
        match self {
            ImageInput::Gray(p) => (*p).clone(),
            ImageInput::Rgb(rgb) => {
                let d = rgb.dim();
                Array2::from_shape_fn((d.1, d.2), |(r, c)| {
                    (rgb[[0, r, c]] + rgb[[1, r, c]] + rgb[[2, r, c]]) / 3.0
                })
            }
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            ImageInput::Gray(p) => p.dim(),
            ImageInput::Rgb(rgb) => {
                let d = rgb.dim();
                (d.1, d.2)
            }
        }
    }
}

/// A zero-mean Gabor kernel tuned to a stimulus orientation.
///
/// The carrier runs perpendicular to the stimulus: a filter for vertical
/// structures modulates along x. The mean is subtracted so constant
/// regions produce exactly zero response.
pub fn gabor_kernel(orientation_deg: f32, wavelength: f32, sigma_factor: f32, aspect: f32) -> Array2<f32> {
    let sigma = sigma_factor * wavelength;
    let radius = (2.5 * sigma).ceil() as i64;
    let n = (2 * radius + 1) as usize;
    let psi = (orientation_deg + 90.0).to_radians();
    let (cos_p, sin_p) = (psi.cos(), psi.sin());
    let mut k = Array2::<f32>::zeros((n, n));
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let u = dx as f32 * cos_p + dy as f32 * sin_p;
            let v = -(dx as f32) * sin_p + dy as f32 * cos_p;
            let env = (-(u * u + aspect * aspect * v * v) / (2.0 * sigma * sigma)).exp();
            let carrier = (std::f32::consts::TAU * u / wavelength).sin();
            k[[(dy + radius) as usize, (dx + radius) as usize]] = env * carrier;
        }
    }
    let mean = k.sum() / (n * n) as f32;
    k.mapv_inplace(|v| v - mean);
    k
}

/// Mirror index for reflect padding (no edge duplication).
fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Same-size correlation with reflect border handling.
fn correlate_reflect(img: &Plane, kernel: &Array2<f32>) -> Plane {
    let (h, w) = img.dim();
    let (kh, kw) = kernel.dim();
    let (ry, rx) = ((kh / 2) as i64, (kw / 2) as i64);
    let mut out = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for ky in 0..kh {
                let sy = mirror(y as i64 + ky as i64 - ry, h);
                for kx in 0..kw {
                    let sx = mirror(x as i64 + kx as i64 - rx, w);
                    acc += img[[sy, sx]] * kernel[[ky, kx]];
                }
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Below this peak activity a plane counts as all-zero; keeps float noise
/// from constant regions out of the normalization.
const ZERO_FLOOR: f32 = 1e-4;

fn normalize_plane(p: &mut Plane) {
    let m = p.iter().copied().fold(0.0f32, f32::max);
    if m > ZERO_FLOOR {
        p.mapv_inplace(|v| v / m);
    } else {
        p.fill(0.0);
    }
}

/// V1 simple cells: one rectified, max-normalized Gabor magnitude plane per
/// (orientation x wavelength), plus red-green and blue-yellow opponency
/// planes when color is enabled.
pub fn v1_simple(image: &ImageInput<'_>, params: &V1Params) -> Result<FeatureStack> {
    params.validate()?;
    let (h, w) = image.dims();
    if h < 16 || w < 16 {
        return Err(Error::Shape(format!(
            "image {h}x{w} too small for V1 (min side 16)"
        )));
    }
    let lum = image.luminance();

    let mut specs = Vec::new();
    for k in 0..params.n_orientations {
        for &lambda in &params.wavelengths {
            specs.push((params.orientation_deg(k), lambda));
        }
    }
    let mut planes: Vec<(FeatureKind, Plane)> = specs
        .par_iter()
        .map(|&(deg, lambda)| {
            let kernel = gabor_kernel(deg, lambda, params.sigma_factor, params.aspect);
            let mut resp = correlate_reflect(&lum, &kernel);
            resp.mapv_inplace(f32::abs);
            normalize_plane(&mut resp);
            (
                FeatureKind::Edge {
                    orientation_deg: deg,
                    wavelength: lambda,
                },
                resp,
            )
        })
        .collect();

    if params.color_enabled {
        let (mut rg, mut by) = match image {
            ImageInput::Gray(_) => (Array2::zeros((h, w)), Array2::zeros((h, w))),
            ImageInput::Rgb(rgb) => {
                let rg = Array2::from_shape_fn((h, w), |(r, c)| {
                    (rgb[[0, r, c]] - rgb[[1, r, c]]).abs()
                });
                let by = Array2::from_shape_fn((h, w), |(r, c)| {
                    (rgb[[2, r, c]] - (rgb[[0, r, c]] + rgb[[1, r, c]]) / 2.0).abs()
                });
                (rg, by)
            }
        };
        normalize_plane(&mut rg);
        normalize_plane(&mut by);
        planes.push((FeatureKind::OpponencyRG, rg));
        planes.push((FeatureKind::OpponencyBY, by));
    }

    let mut stack = Array3::<f32>::zeros((planes.len(), h, w));
    let mut features = Vec::with_capacity(planes.len());
    for (i, (kind, p)) in planes.into_iter().enumerate() {
        stack.index_axis_mut(ndarray::Axis(0), i).assign(&p);
        features.push(kind);
    }
    Ok(FeatureStack {
        planes: stack,
        features,
        resolution: Resolution::Simple,
        pad: (0, 0),
    })
}

/// Aligned 10x max pooling: each 10x10 block reduces to its maximum, so
/// translating the input by 10 px translates the output by one cell.
/// Inputs not divisible by 10 are reflect-padded at the bottom/right and
/// the padding recorded.
pub fn v1_pool(simple: &FeatureStack) -> Result<FeatureStack> {
    if simple.resolution != Resolution::Simple {
        return Err(Error::Shape("v1_pool expects a simple-resolution stack".into()));
    }
    let (f, h, w) = simple.planes.dim();
    let pad_r = (POOL_FACTOR - h % POOL_FACTOR) % POOL_FACTOR;
    let pad_c = (POOL_FACTOR - w % POOL_FACTOR) % POOL_FACTOR;
    let (ph, pw) = (h + pad_r, w + pad_c);
    let (oh, ow) = (ph / POOL_FACTOR, pw / POOL_FACTOR);
    let mut out = Array3::<f32>::zeros((f, oh, ow));
    for fi in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = 0.0f32;
                for dy in 0..POOL_FACTOR {
                    let sy = mirror((oy * POOL_FACTOR + dy) as i64, h);
                    for dx in 0..POOL_FACTOR {
                        let sx = mirror((ox * POOL_FACTOR + dx) as i64, w);
                        m = m.max(simple.planes[[fi, sy, sx]]);
                    }
                }
                out[[fi, oy, ox]] = m;
            }
        }
    }
    Ok(FeatureStack {
        planes: out,
        features: simple.features.clone(),
        resolution: Resolution::Pool,
        pad: (pad_r, pad_c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, v: f32) -> Plane {
        Array2::from_elem((h, w), v)
    }

    #[test]
    fn constant_image_gives_zero_edge_planes() {
        let img = gray(32, 32, 0.5);
        let stack = v1_simple(&ImageInput::Gray(&img), &V1Params::default()).unwrap();
        for v in stack.planes.iter() {
            assert!(v.abs() < 1e-5, "nonzero response {v} on constant image");
        }
    }

    /// Independent brute-force Gabor response on a 32x32 step image: the
    /// vertical-orientation plane must peak on the edge column +-1 px.
    #[test]
    fn vertical_step_edge_peaks_on_edge_column() {
        let edge_col = 16usize;
        let img = Array2::from_shape_fn((32, 32), |(_, c)| if c >= edge_col { 1.0 } else { 0.0 });
        let params = V1Params::default();

        // Oracle: direct correlation at the image center row using the
        // closed-form kernel, scanning all columns.
        let kernel = gabor_kernel(90.0, params.wavelengths[0], params.sigma_factor, params.aspect);
        let (kh, kw) = kernel.dim();
        let (ry, rx) = (kh as i64 / 2, kw as i64 / 2);
        let mut best = (0usize, f32::MIN);
        for x in 0..32usize {
            let mut acc = 0.0f32;
            for ky in 0..kh {
                for kx in 0..kw {
                    let sy = mirror(16 + ky as i64 - ry, 32);
                    let sx = mirror(x as i64 + kx as i64 - rx, 32);
                    acc += img[[sy, sx]] * kernel[[ky, kx]];
                }
            }
            if acc.abs() > best.1 {
                best = (x, acc.abs());
            }
        }
        assert!(
            (best.0 as i64 - edge_col as i64).abs() <= 1,
            "oracle peak at {} not on edge",
            best.0
        );

        // Implementation: the vertical plane's argmax column matches.
        let stack = v1_simple(&ImageInput::Gray(&img), &params).unwrap();
        let vert_idx = stack
            .features
            .iter()
            .position(|f| matches!(f, FeatureKind::Edge { orientation_deg, wavelength }
                if *orientation_deg == 90.0 && *wavelength == params.wavelengths[0]))
            .unwrap();
        let plane = stack.planes.index_axis(ndarray::Axis(0), vert_idx);
        let mut best_impl = (0usize, f32::MIN);
        for ((_, c), &v) in plane.indexed_iter() {
            if v > best_impl.1 {
                best_impl = (c, v);
            }
        }
        assert!(
            (best_impl.0 as i64 - edge_col as i64).abs() <= 1,
            "impl peak at {} not on edge",
            best_impl.0
        );
    }

    #[test]
    fn grayscale_input_has_zero_opponency() {
        let img = Array2::from_shape_fn((32, 32), |(r, c)| ((r * 7 + c) % 13) as f32 / 13.0);
        let params = V1Params {
            color_enabled: true,
            ..V1Params::default()
        };
        let stack = v1_simple(&ImageInput::Gray(&img), &params).unwrap();
        assert_eq!(stack.features.len(), params.n_planes());
        for (f, kind) in stack.features.iter().enumerate() {
            if matches!(kind, FeatureKind::OpponencyRG | FeatureKind::OpponencyBY) {
                for v in stack.planes.index_axis(ndarray::Axis(0), f).iter() {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn pool_shape_is_one_tenth() {
        let img = Array2::from_shape_fn((100, 100), |(r, c)| ((r + c) % 5) as f32 / 5.0);
        let stack = v1_simple(&ImageInput::Gray(&img), &V1Params::default()).unwrap();
        let pooled = v1_pool(&stack).unwrap();
        assert_eq!(pooled.grid(), (10, 10));
        assert_eq!(pooled.pad, (0, 0));
    }

    #[test]
    fn pool_single_pixel_lands_in_expected_cell() {
        // Single active pixel at (row 37, col 52) with value 0.8 pools to
        // cell (3, 5) with value 0.8, rest 0.
        let mut plane = Array2::<f32>::zeros((100, 100));
        plane[[37, 52]] = 0.8;
        let stack = FeatureStack {
            planes: {
                let mut s = Array3::zeros((1, 100, 100));
                s.index_axis_mut(ndarray::Axis(0), 0).assign(&plane);
                s
            },
            features: vec![FeatureKind::Edge {
                orientation_deg: 0.0,
                wavelength: 4.0,
            }],
            resolution: Resolution::Simple,
            pad: (0, 0),
        };
        let pooled = v1_pool(&stack).unwrap();
        for ((_, r, c), &v) in pooled.planes.indexed_iter() {
            if (r, c) == (3, 5) {
                assert_eq!(v, 0.8);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn pool_alignment_shift_invariant() {
        // Shifting the input 10 px right shifts the output 1 cell right.
        let mut a = Array2::<f32>::zeros((60, 60));
        let mut b = Array2::<f32>::zeros((60, 60));
        for r in 20..30 {
            for c in 10..20 {
                a[[r, c]] = 0.7;
                b[[r, c + 10]] = 0.7;
            }
        }
        let wrap = |p: Plane| FeatureStack {
            planes: {
                let mut s = Array3::zeros((1, 60, 60));
                s.index_axis_mut(ndarray::Axis(0), 0).assign(&p);
                s
            },
            features: vec![FeatureKind::OpponencyRG],
            resolution: Resolution::Simple,
            pad: (0, 0),
        };
        let pa = v1_pool(&wrap(a)).unwrap();
        let pb = v1_pool(&wrap(b)).unwrap();
        for r in 0..6 {
            for c in 0..5 {
                assert_eq!(
                    pa.planes[[0, r, c]],
                    pb.planes[[0, r, c + 1]],
                    "misaligned at ({r},{c})"
                );
            }
        }
    }

    #[test]
    fn pool_pads_and_records_non_divisible_input() {
        let img = Array2::from_shape_fn((104, 97), |(r, c)| ((r * c) % 11) as f32 / 11.0);
        let stack = v1_simple(&ImageInput::Gray(&img), &V1Params::default()).unwrap();
        let pooled = v1_pool(&stack).unwrap();
        assert_eq!(pooled.grid(), (11, 10));
        assert_eq!(pooled.pad, (6, 3));
    }

    #[test]
    fn rotation_by_orientation_step_permutes_planes() {
        // A bar at 0 deg activates the 0-deg plane most; rotating the bar
        // by the orientation step moves the argmax plane accordingly.
        let params = V1Params::default();
        let bar = |deg: f32| -> Plane {
            let mut p = Array2::<f32>::zeros((48, 48));
            let t = deg.to_radians();
            let (dx, dy) = (t.cos(), t.sin());
            for s in -18..=18 {
                let x = 24.0 + dx * s as f32;
                let y = 24.0 + dy * s as f32;
                for oy in -1..=1i64 {
                    let (xi, yi) = (x.round() as i64, y.round() as i64 + oy);
                    if xi >= 0 && yi >= 0 && xi < 48 && yi < 48 {
                        p[[yi as usize, xi as usize]] = 1.0;
                    }
                }
            }
            p
        };
        let strongest_orientation = |p: &Plane| -> usize {
            let stack = v1_simple(&ImageInput::Gray(p), &params).unwrap();
            let mut sums = vec![0.0f32; params.n_orientations];
            for (f, kind) in stack.features.iter().enumerate() {
                if let FeatureKind::Edge { orientation_deg, .. } = kind {
                    let k = (orientation_deg / 45.0).round() as usize;
                    sums[k] += stack.planes.index_axis(ndarray::Axis(0), f).sum();
                }
            }
            sums.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        assert_eq!(strongest_orientation(&bar(0.0)), 0);
        assert_eq!(strongest_orientation(&bar(45.0)), 1);
        assert_eq!(strongest_orientation(&bar(90.0)), 2);
    }

    #[test]
    fn tiny_image_rejected() {
        let img = gray(8, 8, 0.2);
        assert!(v1_simple(&ImageInput::Gray(&img), &V1Params::default()).is_err());
    }
}
