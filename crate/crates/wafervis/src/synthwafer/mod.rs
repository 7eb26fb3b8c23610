//! Synthetic wafer generator with exact ground truth.
//!
//! Produces grayscale wafer images containing a chip grid, dicing streets
//! with a laser-kerf trace, seeded faults (kerf excursions leaving the
//! street), anomalies (blobs on the street), inner chip structures, and a
//! dark wafer border. All randomness derives from the spec seed, so a spec
//! fully determines the output bytes.

mod dataset;
mod manifest;

pub use dataset::{
    chip_image_rel, read_truth, wafer_image_rel, write_dataset, CorpusSpec, DatasetPaths,
};
pub use manifest::{
    class_balance, read_manifest, write_manifest, BalanceMode, DatasetManifest, Label,
    ManifestRecord, RecordSide, Split,
};

use image::GrayImage;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gray-level assignment of streets vs. chips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Dark streets between light chips.
    DarkStreet,
    /// Light streets between dark chips.
    LightStreet,
}

impl Polarity {
    /// (chip gray, street gray) in 8-bit levels.
    pub fn grays(self) -> (f32, f32) {
        match self {
            Polarity::DarkStreet => (200.0, 60.0),
            Polarity::LightStreet => (60.0, 200.0),
        }
    }
}

/// Street segment classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreetClass {
    Good,
    Anomaly,
    Bad,
}

impl StreetClass {
    pub fn index(self) -> usize {
        match self {
            StreetClass::Good => 0,
            StreetClass::Anomaly => 1,
            StreetClass::Bad => 2,
        }
    }
}

/// Chip side owning a street segment.
///
/// Wafer coordinates put grid row 0 at the top of the image with the
/// compass oriented notch-down: `N` points toward increasing row index,
/// `E` toward increasing column index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    N,
    E,
    S,
    W,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::N, Side::E, Side::S, Side::W];

    pub fn orientation(self) -> Orientation {
        match self {
            Side::N | Side::S => Orientation::Horizontal,
            Side::E | Side::W => Orientation::Vertical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// Parameters of one synthetic wafer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaferSpec {
    pub grid_cols: usize,
    pub grid_rows: usize,
    /// Chip side length in pixels.
    pub chip_px: usize,
    /// Street (dicing corridor) width in pixels, at least 4.
    pub street_width_px: usize,
    pub polarity: Polarity,
    /// Expected density of street-like structures inside chips, in [0,1].
    pub inner_structure_density: f32,
    /// Wafer disk radius in chip pitches; chips not fully inside are border chips.
    pub wafer_radius_chips: f32,
    /// Gaussian pixel noise std in gray levels.
    pub noise_sigma: f32,
    pub seed: u64,
    /// Per-segment probability of an anomaly (class 1).
    pub anomaly_rate: f32,
    /// Per-segment probability of a fault (class 2).
    pub fault_rate: f32,
    /// Maximum kerf excursion from the street centerline, in street widths.
    pub fault_extent_streets: f32,
}

impl Default for WaferSpec {
    fn default() -> Self {
        WaferSpec {
            grid_cols: 10,
            grid_rows: 10,
            chip_px: 240,
            street_width_px: 12,
            polarity: Polarity::DarkStreet,
            inner_structure_density: 0.5,
            wafer_radius_chips: 4.6,
            noise_sigma: 4.0,
            seed: 1,
            anomaly_rate: 0.037,
            fault_rate: 0.041,
            fault_extent_streets: 3.0,
        }
    }
}

impl WaferSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_cols == 0 || self.grid_rows == 0 {
            return Err(Error::Config("wafer grid counts must be positive".into()));
        }
        if self.chip_px < 32 {
            return Err(Error::Config(format!(
                "chip_px {} too small (minimum 32)",
                self.chip_px
            )));
        }
        if self.street_width_px < 4 {
            return Err(Error::Config(format!(
                "street_width_px {} below minimum 4",
                self.street_width_px
            )));
        }
        for (name, v) in [
            ("inner_structure_density", self.inner_structure_density),
            ("anomaly_rate", self.anomaly_rate),
            ("fault_rate", self.fault_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0,1]")));
            }
        }
        if self.anomaly_rate + self.fault_rate > 1.0 {
            return Err(Error::Config(
                "anomaly_rate + fault_rate exceeds 1".into(),
            ));
        }
        if self.wafer_radius_chips <= 0.0 {
            return Err(Error::Config("wafer_radius_chips must be positive".into()));
        }
        if self.fault_extent_streets < 1.0 {
            return Err(Error::Config(
                "fault_extent_streets must be at least 1 street width".into(),
            ));
        }
        Ok(())
    }
}

/// Pixel rectangle; origin may be negative for view crops at the image edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: usize,
    pub h: usize,
}

/// Derived pixel geometry of a wafer layout.
///
/// Streets surround every chip on all four sides: a vertical street line
/// `c` occupies `x in [c*pitch, c*pitch + street)` for `c in 0..=cols`,
/// and similarly for horizontal lines.
#[derive(Debug, Clone)]
pub struct WaferGeometry {
    pub cols: usize,
    pub rows: usize,
    pub chip_px: usize,
    pub street: usize,
    pub radius_px: f64,
    view_px: usize,
}

/// Pooling factor the attention model uses; chip views are sized to a
/// multiple of it so no padding is needed downstream.
pub const VIEW_ALIGN: usize = 10;

impl WaferGeometry {
    pub fn new(spec: &WaferSpec) -> Self {
        let base = spec.chip_px + 6 * spec.street_width_px;
        let view_px = base.div_ceil(VIEW_ALIGN) * VIEW_ALIGN;
        WaferGeometry {
            cols: spec.grid_cols,
            rows: spec.grid_rows,
            chip_px: spec.chip_px,
            street: spec.street_width_px,
            radius_px: spec.wafer_radius_chips as f64 * (spec.chip_px + spec.street_width_px) as f64,
            view_px,
        }
    }

    pub fn pitch(&self) -> usize {
        self.chip_px + self.street
    }

    /// (width, height) of the wafer image.
    pub fn image_size(&self) -> (usize, usize) {
        (
            self.cols * self.pitch() + self.street,
            self.rows * self.pitch() + self.street,
        )
    }

    /// Top-left pixel of the chip rectangle.
    pub fn chip_origin(&self, col: usize, row: usize) -> (usize, usize) {
        (
            self.street + col * self.pitch(),
            self.street + row * self.pitch(),
        )
    }

    /// Side length of the square chip view (chip plus surrounding streets
    /// and a margin), aligned to [`VIEW_ALIGN`].
    pub fn view_px(&self) -> usize {
        self.view_px
    }

    /// Chip-view rectangle in wafer coordinates (may exceed the image).
    pub fn view_rect(&self, col: usize, row: usize) -> Rect {
        let (x0, y0) = self.chip_origin(col, row);
        let expand = self.view_px - self.chip_px;
        let left = expand / 2;
        Rect {
            x: x0 as i64 - left as i64,
            y: y0 as i64 - left as i64,
            w: self.view_px,
            h: self.view_px,
        }
    }

    fn disk_center(&self) -> (f64, f64) {
        let (w, h) = self.image_size();
        (w as f64 / 2.0, h as f64 / 2.0)
    }

    fn inside_disk(&self, x: f64, y: f64) -> bool {
        let (cx, cy) = self.disk_center();
        let (dx, dy) = (x - cx, y - cy);
        dx * dx + dy * dy <= self.radius_px * self.radius_px
    }

    /// A chip is inside iff its whole view (chip + streets + margin) lies
    /// within the wafer disk.
    pub fn chip_inside(&self, col: usize, row: usize) -> bool {
        let r = self.view_rect(col, row);
        let corners = [
            (r.x, r.y),
            (r.x + r.w as i64, r.y),
            (r.x, r.y + r.h as i64),
            (r.x + r.w as i64, r.y + r.h as i64),
        ];
        corners
            .iter()
            .all(|&(x, y)| self.inside_disk(x as f64, y as f64))
    }

    /// Street segment center in wafer pixel coordinates.
    pub fn segment_center_wafer(&self, col: usize, row: usize, side: Side) -> (f64, f64) {
        let (x0, y0) = self.chip_origin(col, row);
        let (x0, y0) = (x0 as f64, y0 as f64);
        let c = self.chip_px as f64;
        let sw = self.street as f64;
        match side {
            Side::N => (x0 + c / 2.0, y0 + c + sw / 2.0),
            Side::S => (x0 + c / 2.0, y0 - sw / 2.0),
            Side::E => (x0 + c + sw / 2.0, y0 + c / 2.0),
            Side::W => (x0 - sw / 2.0, y0 + c / 2.0),
        }
    }

    /// Street segment center relative to the chip rectangle origin.
    pub fn segment_center_chip(&self, side: Side) -> (f64, f64) {
        let c = self.chip_px as f64;
        let sw = self.street as f64;
        match side {
            Side::N => (c / 2.0, c + sw / 2.0),
            Side::S => (c / 2.0, -sw / 2.0),
            Side::E => (c + sw / 2.0, c / 2.0),
            Side::W => (-sw / 2.0, c / 2.0),
        }
    }
}

/// Ground truth for one street segment, from the owning chip's viewpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub side: Side,
    pub class: StreetClass,
    /// Segment center in chip coordinates (relative to the chip rectangle
    /// origin; centers on the S/W sides have one negative coordinate).
    pub center_x: f64,
    pub center_y: f64,
    pub orientation: Orientation,
}

/// Ground truth for one chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipTruth {
    pub col: usize,
    pub row: usize,
    pub inside: bool,
    /// Exactly 4 entries for inside chips, empty for border chips.
    pub segments: Vec<SegmentTruth>,
}

impl ChipTruth {
    /// Chip class: bad if any side is bad, else anomaly if any side has one.
    pub fn chip_class(&self) -> StreetClass {
        let mut class = StreetClass::Good;
        for s in &self.segments {
            match s.class {
                StreetClass::Bad => return StreetClass::Bad,
                StreetClass::Anomaly => class = StreetClass::Anomaly,
                StreetClass::Good => {}
            }
        }
        class
    }
}

/// Complete per-wafer ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: WaferSpec,
    pub chips: Vec<ChipTruth>,
    pub warnings: Vec<String>,
}

impl GroundTruth {
    pub fn inside_chips(&self) -> impl Iterator<Item = &ChipTruth> {
        self.chips.iter().filter(|c| c.inside)
    }

    pub fn chip(&self, col: usize, row: usize) -> Option<&ChipTruth> {
        self.chips
            .get(row * self.spec.grid_cols + col)
            .filter(|c| c.col == col && c.row == row)
    }
}

/// Pixel masks recorded while drawing, for ground-truth soundness checks.
pub struct WaferMasks {
    /// 1 where the pixel lies in any street band.
    pub street_band: Array2<u8>,
    /// 1 where a kerf pixel was drawn.
    pub kerf: Array2<u8>,
}

const BORDER_GRAY: f32 = 25.0;

pub fn generate_wafer(spec: &WaferSpec) -> Result<(GrayImage, GroundTruth)> {
    let (img, truth, _) = generate_wafer_inner(spec, false)?;
    Ok((img, truth))
}

/// Like [`generate_wafer`] but also returns drawing masks for validation.
pub fn generate_wafer_with_masks(
    spec: &WaferSpec,
) -> Result<(GrayImage, GroundTruth, WaferMasks)> {
    let (img, truth, masks) = generate_wafer_inner(spec, true)?;
    Ok((img, truth, masks.expect("masks requested")))
}

struct KerfLine {
    /// Wiggle of the cut around the street centerline (sine mixture).
    amps: [f64; 3],
    freqs: [f64; 3],
    phases: [f64; 3],
    /// Smooth excursions for faulty segments: (center, half width, peak offset).
    bumps: Vec<(f64, f64, f64)>,
}

impl KerfLine {
    fn offset(&self, t: f64) -> f64 {
        let mut off = 0.0;
        for i in 0..3 {
            off += self.amps[i] * (self.freqs[i] * t + self.phases[i]).sin();
        }
        for &(c, h, p) in &self.bumps {
            let u = (t - c) / h;
            if u.abs() < 1.0 {
                let b = 1.0 - u * u;
                off += p * b * b;
            }
        }
        off
    }
}

fn generate_wafer_inner(
    spec: &WaferSpec,
    want_masks: bool,
) -> Result<(GrayImage, GroundTruth, Option<WaferMasks>)> {
    spec.validate()?;
    let geom = WaferGeometry::new(spec);
    let (w, h) = geom.image_size();
    let (chip_gray, street_gray) = spec.polarity.grays();
    let kerf_gray = if street_gray < 128.0 {
        street_gray + 80.0
    } else {
        street_gray - 80.0
    };
    let sw = spec.street_width_px as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut img = Array2::<f32>::from_elem((h, w), street_gray);
    let mut band = Array2::<u8>::zeros((h, w));
    let mut kerf_mask = Array2::<u8>::zeros((h, w));
    for li in 0..=spec.grid_rows {
        let y0 = li * geom.pitch();
        band.slice_mut(ndarray::s![y0..y0 + spec.street_width_px, ..])
            .fill(1);
    }
    for li in 0..=spec.grid_cols {
        let x0 = li * geom.pitch();
        band.slice_mut(ndarray::s![.., x0..x0 + spec.street_width_px])
            .fill(1);
    }

    // Chip fill and inner structures.
    for row in 0..spec.grid_rows {
        for col in 0..spec.grid_cols {
            let (x0, y0) = geom.chip_origin(col, row);
            let gray = chip_gray + rng.random_range(-8.0..8.0);
            img.slice_mut(ndarray::s![y0..y0 + spec.chip_px, x0..x0 + spec.chip_px])
                .fill(gray);
            draw_inner_structures(&mut img, spec, x0, y0, gray, &mut rng);
        }
    }

    // Kerf paths and per-segment classes. Horizontal lines first, then
    // vertical, each with a fixed rng consumption order.
    let wiggle_amp = ((sw / 2.0 - 2.2) * 0.5).max(0.0);
    let mut h_classes = vec![StreetClass::Good; (spec.grid_rows + 1) * spec.grid_cols];
    let mut v_classes = vec![StreetClass::Good; (spec.grid_cols + 1) * spec.grid_rows];

    for li in 0..=spec.grid_rows {
        let line = sample_kerf_line(spec, wiggle_amp, li, false, &mut h_classes, &mut rng);
        draw_kerf_h(
            &mut img,
            &mut kerf_mask,
            &geom,
            li,
            &line,
            kerf_gray,
            spec,
            &h_classes,
            &mut rng,
        );
    }
    for li in 0..=spec.grid_cols {
        let line = sample_kerf_line(spec, wiggle_amp, li, true, &mut v_classes, &mut rng);
        draw_kerf_v(
            &mut img,
            &mut kerf_mask,
            &geom,
            li,
            &line,
            kerf_gray,
            spec,
            &v_classes,
            &mut rng,
        );
    }

    // Wafer border: everything outside the disk is covered by the dark
    // border shape.
    let (cx, cy) = {
        let (w, h) = geom.image_size();
        (w as f64 / 2.0, h as f64 / 2.0)
    };
    let r2 = geom.radius_px * geom.radius_px;
    for y in 0..h {
        let dy = y as f64 + 0.5 - cy;
        for x in 0..w {
            let dx = x as f64 + 0.5 - cx;
            if dx * dx + dy * dy > r2 {
                img[[y, x]] = BORDER_GRAY;
                kerf_mask[[y, x]] = 0;
            }
        }
    }

    // Sensor noise.
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, spec.noise_sigma)
            .map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
        for v in img.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    let out = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([img[[y as usize, x as usize]].clamp(0.0, 255.0).round() as u8])
    });

    // Ground truth.
    let mut chips = Vec::with_capacity(spec.grid_cols * spec.grid_rows);
    let mut any_inside = false;
    for row in 0..spec.grid_rows {
        for col in 0..spec.grid_cols {
            let inside = geom.chip_inside(col, row);
            any_inside |= inside;
            let segments = if inside {
                Side::ALL
                    .iter()
                    .map(|&side| {
                        let class = segment_class(spec, &h_classes, &v_classes, col, row, side);
                        let (cx, cy) = geom.segment_center_chip(side);
                        SegmentTruth {
                            side,
                            class,
                            center_x: cx,
                            center_y: cy,
                            orientation: side.orientation(),
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            chips.push(ChipTruth {
                col,
                row,
                inside,
                segments,
            });
        }
    }
    let mut warnings = Vec::new();
    if !any_inside {
        warnings.push("wafer grid exceeds the disk; all chips are border-class".into());
    }

    let truth = GroundTruth {
        spec: spec.clone(),
        chips,
        warnings,
    };
    let masks = want_masks.then_some(WaferMasks {
        street_band: band,
        kerf: kerf_mask,
    });
    Ok((out, truth, masks))
}

/// Class of the physical street segment on `side` of chip `(col,row)`.
///
/// Horizontal street line `li` separates chip rows `li-1` (its N side)
/// and `li` (its S side); both chips see the same physical segment.
fn segment_class(
    spec: &WaferSpec,
    h_classes: &[StreetClass],
    v_classes: &[StreetClass],
    col: usize,
    row: usize,
    side: Side,
) -> StreetClass {
    match side {
        Side::N => h_classes[(row + 1) * spec.grid_cols + col],
        Side::S => h_classes[row * spec.grid_cols + col],
        Side::E => v_classes[(col + 1) * spec.grid_rows + row],
        Side::W => v_classes[col * spec.grid_rows + row],
    }
}

fn sample_kerf_line(
    spec: &WaferSpec,
    wiggle_amp: f64,
    li: usize,
    vertical: bool,
    classes: &mut [StreetClass],
    rng: &mut ChaCha8Rng,
) -> KerfLine {
    let chip = spec.chip_px as f64;
    let sw = spec.street_width_px as f64;
    let mut line = KerfLine {
        amps: [0.0; 3],
        freqs: [0.0; 3],
        phases: [0.0; 3],
        bumps: Vec::new(),
    };
    for i in 0..3 {
        line.amps[i] = rng.random_range(0.0..1.0) * wiggle_amp;
        line.freqs[i] = std::f64::consts::TAU / rng.random_range(0.7 * chip..2.5 * chip);
        line.phases[i] = rng.random_range(0.0..std::f64::consts::TAU);
    }
    // Keep the summed wiggle inside the class-0 envelope.
    let total: f64 = line.amps.iter().sum();
    if total > wiggle_amp && total > 0.0 {
        for a in &mut line.amps {
            *a *= wiggle_amp / total;
        }
    }

    let n_seg = if vertical { spec.grid_rows } else { spec.grid_cols };
    let pitch = (spec.chip_px + spec.street_width_px) as f64;
    let li_offset = spec.street_width_px as f64;
    for seg in 0..n_seg {
        let u: f32 = rng.random();
        let class = if u < spec.fault_rate {
            StreetClass::Bad
        } else if u < spec.fault_rate + spec.anomaly_rate {
            StreetClass::Anomaly
        } else {
            StreetClass::Good
        };
        classes[line_class_index(seg, li, n_seg)] = class;

        if class == StreetClass::Bad {
            let span0 = li_offset + seg as f64 * pitch;
            let span1 = span0 + chip;
            let len = span1 - span0;
            let h = rng.random_range(1.0 * sw..2.0 * sw).min(len * 0.3);
            let c = rng.random_range(span0 + h..span1 - h);
            let wiggle_sum: f64 = line.amps.iter().sum();
            let depth_min = (0.3 * sw).max(wiggle_sum + 1.5);
            let depth_max = ((spec.fault_extent_streets as f64 - 0.5) * sw).max(depth_min + 0.5);
            let depth = rng.random_range(depth_min..depth_max);
            let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
            line.bumps.push((c, h, dir * (sw / 2.0 + depth)));
        }
    }
    line
}

fn line_class_index(seg: usize, li: usize, n_seg: usize) -> usize {
    li * n_seg + seg
}

#[allow(clippy::too_many_arguments)]
fn draw_kerf_h(
    img: &mut Array2<f32>,
    kerf_mask: &mut Array2<u8>,
    geom: &WaferGeometry,
    li: usize,
    line: &KerfLine,
    kerf_gray: f32,
    spec: &WaferSpec,
    classes: &[StreetClass],
    rng: &mut ChaCha8Rng,
) {
    let (w, h) = geom.image_size();
    let base = li as f64 * geom.pitch() as f64 + geom.street as f64 / 2.0;
    for x in 0..w {
        let yc = base + line.offset(x as f64);
        let r0 = (yc - 0.5).floor() as i64;
        let r1 = (yc + 0.5).floor() as i64;
        for r in r0..=r1 {
            if r >= 0 && (r as usize) < h {
                img[[r as usize, x]] = kerf_gray;
                kerf_mask[[r as usize, x]] = 1;
            }
        }
    }
    draw_anomalies(img, geom, li, false, classes, spec, rng);
}

#[allow(clippy::too_many_arguments)]
fn draw_kerf_v(
    img: &mut Array2<f32>,
    kerf_mask: &mut Array2<u8>,
    geom: &WaferGeometry,
    li: usize,
    line: &KerfLine,
    kerf_gray: f32,
    spec: &WaferSpec,
    classes: &[StreetClass],
    rng: &mut ChaCha8Rng,
) {
    let (w, h) = geom.image_size();
    let base = li as f64 * geom.pitch() as f64 + geom.street as f64 / 2.0;
    for y in 0..h {
        let xc = base + line.offset(y as f64);
        let c0 = (xc - 0.5).floor() as i64;
        let c1 = (xc + 0.5).floor() as i64;
        for c in c0..=c1 {
            if c >= 0 && (c as usize) < w {
                img[[y, c as usize]] = kerf_gray;
                kerf_mask[[y, c as usize]] = 1;
            }
        }
    }
    draw_anomalies(img, geom, li, true, classes, spec, rng);
}

/// Draw anomaly blobs on class-1 segments of one street line. The blob is
/// confined to the street band (the event never crosses the street edge).
#[allow(clippy::too_many_arguments)]
fn draw_anomalies(
    img: &mut Array2<f32>,
    geom: &WaferGeometry,
    li: usize,
    vertical: bool,
    classes: &[StreetClass],
    spec: &WaferSpec,
    rng: &mut ChaCha8Rng,
) {
    let sw = spec.street_width_px as f64;
    let pitch = geom.pitch() as f64;
    let n_seg = if vertical {
        spec.grid_rows
    } else {
        spec.grid_cols
    };
    let center_axis = li as f64 * pitch + sw / 2.0;
    let (w, h) = geom.image_size();
    for seg in 0..n_seg {
        if classes[line_class_index(seg, li, n_seg)] != StreetClass::Anomaly {
            continue;
        }
        let span0 = spec.street_width_px as f64 + seg as f64 * pitch;
        let along = rng.random_range(span0 + sw..span0 + spec.chip_px as f64 - sw);
        let lateral = rng.random_range(-sw / 8.0..sw / 8.0);
        let max_r = (sw / 2.0 - 1.0 - lateral.abs()).max(1.0);
        let radius = rng.random_range(1.0..(sw / 3.0).max(1.01)).min(max_r);
        let delta: f64 = rng.random_range(40.0..90.0);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let gray = (spec.polarity.grays().1 as f64 + sign * delta).clamp(0.0, 255.0);
        let (bx, by) = if vertical {
            (center_axis + lateral, along)
        } else {
            (along, center_axis + lateral)
        };
        let r_i = radius.ceil() as i64;
        for dy in -r_i..=r_i {
            for dx in -r_i..=r_i {
                if (dx * dx + dy * dy) as f64 <= radius * radius {
                    let px = bx as i64 + dx;
                    let py = by as i64 + dy;
                    if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                        img[[py as usize, px as usize]] = gray as f32;
                    }
                }
            }
        }
    }
}

/// Street-like line structures inside the chip area.
fn draw_inner_structures(
    img: &mut Array2<f32>,
    spec: &WaferSpec,
    x0: usize,
    y0: usize,
    chip_gray: f32,
    rng: &mut ChaCha8Rng,
) {
    let lambda = spec.inner_structure_density * 5.0;
    let mut count = lambda.floor() as usize;
    if rng.random::<f32>() < lambda.fract() {
        count += 1;
    }
    let c = spec.chip_px as f64;
    for _ in 0..count {
        let vertical: bool = rng.random();
        let thickness = rng.random_range(1..=3usize);
        let len = rng.random_range(0.3 * c..0.8 * c);
        let pos = rng.random_range(0.2 * c..0.8 * c);
        let start = rng.random_range(0.1 * c..(0.9 * c - len));
        let delta = rng.random_range(30.0..70.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let gray = (chip_gray + delta as f32).clamp(0.0, 255.0);
        for t in 0..thickness {
            for s in 0..len as usize {
                let (x, y) = if vertical {
                    (pos as usize + t, start as usize + s)
                } else {
                    (start as usize + s, pos as usize + t)
                };
                if x < spec.chip_px && y < spec.chip_px {
                    img[[y0 + y, x0 + x]] = gray;
                }
            }
        }
    }
}

/// Crop `rect` out of `img`, filling out-of-bounds pixels with the wafer
/// border gray.
pub fn crop_with_fill(img: &GrayImage, rect: Rect) -> GrayImage {
    GrayImage::from_fn(rect.w as u32, rect.h as u32, |x, y| {
        let sx = rect.x + x as i64;
        let sy = rect.y + y as i64;
        if sx >= 0 && sy >= 0 && (sx as u32) < img.width() && (sy as u32) < img.height() {
            *img.get_pixel(sx as u32, sy as u32)
        } else {
            image::Luma([BORDER_GRAY as u8])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> WaferSpec {
        WaferSpec {
            grid_cols: 6,
            grid_rows: 6,
            chip_px: 48,
            street_width_px: 6,
            wafer_radius_chips: 2.8,
            noise_sigma: 3.0,
            inner_structure_density: 0.4,
            seed: 7,
            ..WaferSpec::default()
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let spec = small_spec();
        let (a, ta) = generate_wafer(&spec).unwrap();
        let (b, tb) = generate_wafer(&spec).unwrap();
        assert_eq!(a.as_raw(), b.as_raw());
        assert_eq!(ta, tb);
    }

    #[test]
    fn different_seed_changes_pixels() {
        let spec = small_spec();
        let (a, _) = generate_wafer(&spec).unwrap();
        let (b, _) = generate_wafer(&WaferSpec {
            seed: 8,
            ..spec
        })
        .unwrap();
        assert_ne!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn zero_fault_rate_gives_all_good() {
        let spec = WaferSpec {
            fault_rate: 0.0,
            anomaly_rate: 0.0,
            ..small_spec()
        };
        let (_, truth) = generate_wafer(&spec).unwrap();
        for chip in truth.inside_chips() {
            for seg in &chip.segments {
                assert_eq!(seg.class, StreetClass::Good);
            }
        }
    }

    #[test]
    fn four_segments_per_inside_chip() {
        let (_, truth) = generate_wafer(&small_spec()).unwrap();
        let inside: Vec<_> = truth.inside_chips().collect();
        assert!(!inside.is_empty());
        for chip in &inside {
            assert_eq!(chip.segments.len(), 4);
            let sides: Vec<_> = chip.segments.iter().map(|s| s.side).collect();
            assert_eq!(sides, Side::ALL.to_vec());
        }
        for chip in truth.chips.iter().filter(|c| !c.inside) {
            assert!(chip.segments.is_empty());
        }
    }

    #[test]
    fn class_ratio_matches_rates_over_large_corpus() {
        // Target ratio 92.2 : 3.7 : 4.1 within one percentage point over
        // at least 10k segments.
        let mut counts = [0usize; 3];
        for seed in 0..6 {
            let spec = WaferSpec {
                grid_cols: 24,
                grid_rows: 24,
                chip_px: 48,
                street_width_px: 6,
                wafer_radius_chips: 11.5,
                inner_structure_density: 0.0,
                noise_sigma: 0.0,
                seed: 100 + seed,
                ..WaferSpec::default()
            };
            let (_, truth) = generate_wafer(&spec).unwrap();
            for chip in truth.inside_chips() {
                for seg in &chip.segments {
                    counts[seg.class.index()] += 1;
                }
            }
        }
        let total: usize = counts.iter().sum();
        assert!(total >= 10_000, "only {total} segments");
        let pct = |i: usize| 100.0 * counts[i] as f64 / total as f64;
        assert!((pct(0) - 92.2).abs() <= 1.0, "good {}", pct(0));
        assert!((pct(1) - 3.7).abs() <= 1.0, "anomaly {}", pct(1));
        assert!((pct(2) - 4.1).abs() <= 1.0, "bad {}", pct(2));
    }

    #[test]
    fn ground_truth_soundness_by_mask_intersection() {
        let spec = WaferSpec {
            fault_rate: 0.2,
            anomaly_rate: 0.1,
            noise_sigma: 0.0,
            ..small_spec()
        };
        let (_, truth, masks) = generate_wafer_with_masks(&spec).unwrap();
        let geom = WaferGeometry::new(&spec);
        let sw = spec.street_width_px;
        let mut checked_bad = 0;
        for chip in truth.inside_chips() {
            for seg in &chip.segments {
                let (cx, cy) = geom.segment_center_wafer(chip.col, chip.row, seg.side);
                // Region: the segment's street span plus 3 street widths on
                // both sides across the street.
                let (x_lo, x_hi, y_lo, y_hi) = match seg.orientation {
                    Orientation::Horizontal => {
                        let (x0, _) = geom.chip_origin(chip.col, chip.row);
                        (
                            x0,
                            x0 + spec.chip_px,
                            (cy as i64 - 3 * sw as i64).max(0) as usize,
                            (cy as i64 + 3 * sw as i64) as usize,
                        )
                    }
                    Orientation::Vertical => {
                        let (_, y0) = geom.chip_origin(chip.col, chip.row);
                        (
                            (cx as i64 - 3 * sw as i64).max(0) as usize,
                            (cx as i64 + 3 * sw as i64) as usize,
                            y0,
                            y0 + spec.chip_px,
                        )
                    }
                };
                let mut outside = 0;
                for y in y_lo..y_hi.min(masks.kerf.dim().0) {
                    for x in x_lo..x_hi.min(masks.kerf.dim().1) {
                        if masks.kerf[[y, x]] == 1 && masks.street_band[[y, x]] == 0 {
                            outside += 1;
                        }
                    }
                }
                match seg.class {
                    StreetClass::Bad => {
                        assert!(outside > 0, "bad segment without kerf excursion");
                        checked_bad += 1;
                    }
                    StreetClass::Good | StreetClass::Anomaly => {
                        assert_eq!(outside, 0, "clean segment with kerf outside street");
                    }
                }
            }
        }
        assert!(checked_bad > 0, "corpus produced no bad segments");
    }

    #[test]
    fn oversized_grid_warns_and_marks_all_border() {
        let spec = WaferSpec {
            wafer_radius_chips: 0.5,
            ..small_spec()
        };
        let (_, truth) = generate_wafer(&spec).unwrap();
        assert!(truth.chips.iter().all(|c| !c.inside));
        assert!(!truth.warnings.is_empty());
    }

    #[test]
    fn view_rect_is_aligned_and_centered() {
        let spec = small_spec();
        let geom = WaferGeometry::new(&spec);
        assert_eq!(geom.view_px() % VIEW_ALIGN, 0);
        let r = geom.view_rect(2, 3);
        assert_eq!(r.w, geom.view_px());
        let (x0, y0) = geom.chip_origin(2, 3);
        let left = x0 as i64 - r.x;
        let right = r.x + r.w as i64 - (x0 + spec.chip_px) as i64;
        assert!((left - right).abs() <= 1);
        let top = y0 as i64 - r.y;
        assert!(top >= (spec.street_width_px * 2) as i64);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(WaferSpec {
            street_width_px: 3,
            ..small_spec()
        }
        .validate()
        .is_err());
        assert!(WaferSpec {
            grid_cols: 0,
            ..small_spec()
        }
        .validate()
        .is_err());
        assert!(WaferSpec {
            fault_rate: 1.5,
            ..small_spec()
        }
        .validate()
        .is_err());
    }
}
