//! Depth Motion Maps and their pseudo-color coding.
//!
//! Each depth frame is turned into three 2D projections. The front view is
//! the raw depth image. The side view is indexed by (image row, depth bin)
//! and stores, per cell, the right-most occupied image column as a fraction
//! of the width. The top view is indexed by (depth bin, image column) and
//! stores the highest occupied image row as a fraction of the height. Zero
//! depth pixels are treated as empty.
//!
//! A segment's maps are stacked as
//! `DMM = map¹ + Σ_{k=2}^{M-1} |map^{k+1} − map^k|`, so the step from the
//! first to the second frame is skipped unless `include_first_diff` is set.

mod classifier;

pub use classifier::{
    classify_features, classify_segment, content_box, segment_features, train_on_subset,
    train_segment_classifier,
    view_features,
    ClassifierConfig, SegmentClassifierModel, SoftmaxRegression, TrainReport,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DepthFrame, View};
use crate::error::{Error, Result};

/// Dense row-major 2D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn l1_distance(&self, other: &Grid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub depth_min_mm: f64,
    pub depth_max_mm: f64,
    /// Resolution of the depth axis in the side and top views.
    pub depth_bins: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            depth_min_mm: 500.0,
            depth_max_mm: 4500.0,
            depth_bins: 256,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_min_mm >= 0.0 && self.depth_max_mm > self.depth_min_mm) {
            return Err(Error::Config("depth range must satisfy 0 <= min < max".into()));
        }
        if self.depth_bins == 0 {
            return Err(Error::Config("depth_bins must be positive".into()));
        }
        Ok(())
    }

    /// Width and height of the grid produced for `view`.
    pub fn grid_shape(&self, view: View, width: usize, height: usize) -> (usize, usize) {
        match view {
            View::Front => (width, height),
            View::Side => (self.depth_bins, height),
            View::Top => (width, self.depth_bins),
        }
    }

    fn depth_bin(&self, d: f64) -> usize {
        let t = (d - self.depth_min_mm) / (self.depth_max_mm - self.depth_min_mm);
        ((t * self.depth_bins as f64).floor().max(0.0) as usize).min(self.depth_bins - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modulation {
    /// f(I) = I
    Identity,
    /// f(I) = 1
    Unit,
}

impl Modulation {
    pub fn apply(self, i: f64) -> f64 {
        match self {
            Modulation::Identity => i,
            Modulation::Unit => 1.0,
        }
    }

    pub fn max_value(self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColorConfig {
    pub phases: [f64; 3],
    pub modulation: Modulation,
}

impl Default for ColorConfig {
    fn default() -> Self {
        Self {
            phases: [0.0, 1.0 / 3.0, 2.0 / 3.0],
            modulation: Modulation::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DmmConfig {
    pub include_first_diff: bool,
    pub projection: ProjectionConfig,
    pub color: ColorConfig,
}

impl DmmConfig {
    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        if self.color.phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("color phases must be finite".into()));
        }
        Ok(())
    }
}

pub fn project_depth(frame: &DepthFrame, view: View, cfg: &ProjectionConfig) -> Grid {
    let (w, h) = (frame.width, frame.height);
    let (gw, gh) = cfg.grid_shape(view, w, h);
    let mut g = Grid::zeros(gw, gh);
    for v in 0..h {
        for u in 0..w {
            let d = frame.get(u, v) as f64;
            if d <= 0.0 {
                continue;
            }
            match view {
                View::Front => g.set(u, v, d),
                View::Side => {
                    let b = cfg.depth_bin(d);
                    let val = (u + 1) as f64 / w as f64;
                    if val > g.get(b, v) {
                        g.set(b, v, val);
                    }
                }
                View::Top => {
                    let b = cfg.depth_bin(d);
                    let val = (h - v) as f64 / h as f64;
                    if val > g.get(u, b) {
                        g.set(u, b, val);
                    }
                }
            }
        }
    }
    g
}

/// Streaming form of the stacked motion energy, fed one map at a time.
#[derive(Debug, Clone)]
pub struct DmmAccumulator {
    include_first_diff: bool,
    acc: Option<Grid>,
    prev: Option<Grid>,
    seen: usize,
}

impl DmmAccumulator {
    pub fn new(include_first_diff: bool) -> Self {
        Self {
            include_first_diff,
            acc: None,
            prev: None,
            seen: 0,
        }
    }

    pub fn push(&mut self, map: Grid) -> Result<()> {
        if let Some(prev) = &self.prev {
            if !prev.same_shape(&map) {
                return Err(Error::invalid(format!(
                    "map {} is {}x{}, expected {}x{}",
                    self.seen, map.width, map.height, prev.width, prev.height
                )));
            }
            // map index k+1 = seen+1 (1-based); diffs start at k = 2
            if self.seen >= 2 || self.include_first_diff {
                let acc = self.acc.as_mut().expect("accumulator set with first map");
                for ((a, x), y) in acc.data.iter_mut().zip(&map.data).zip(&prev.data) {
                    *a += (x - y).abs();
                }
            }
        } else {
            self.acc = Some(map.clone());
        }
        self.prev = Some(map);
        self.seen += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<Grid> {
        self.acc.ok_or_else(|| Error::invalid("empty segment"))
    }
}

pub fn compute_dmm(maps: &[Grid], include_first_diff: bool) -> Result<Grid> {
    let mut acc = DmmAccumulator::new(include_first_diff);
    for m in maps {
        acc.push(m.clone())?;
    }
    acc.finish()
}

/// Sum of all consecutive absolute differences without the first-frame term.
pub fn traditional_dmm(maps: &[Grid]) -> Result<Grid> {
    let first = maps.first().ok_or_else(|| Error::invalid("empty segment"))?;
    let mut acc = Grid::zeros(first.width, first.height);
    for w in maps.windows(2) {
        if !w[0].same_shape(&w[1]) {
            return Err(Error::invalid("maps differ in shape"));
        }
        for ((a, x), y) in acc.data.iter_mut().zip(&w[1].data).zip(&w[0].data) {
            *a += (x - y).abs();
        }
    }
    Ok(acc)
}

/// Front, side and top DMMs of a run of depth frames.
pub fn segment_dmms(frames: &[DepthFrame], cfg: &DmmConfig) -> Result<[Grid; 3]> {
    let mut accs = [
        DmmAccumulator::new(cfg.include_first_diff),
        DmmAccumulator::new(cfg.include_first_diff),
        DmmAccumulator::new(cfg.include_first_diff),
    ];
    for f in frames {
        for (acc, view) in accs.iter_mut().zip(View::ALL) {
            acc.push(project_depth(f, view, &cfg.projection))?;
        }
    }
    let [a, b, c] = accs;
    Ok([a.finish()?, b.finish()?, c.finish()?])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoColorImage {
    pub width: usize,
    pub height: usize,
    pub channels: [Vec<f64>; 3],
    pub phases: [f64; 3],
    pub modulation: Modulation,
}

/// Min/max normalization to [0, 1]; a constant grid maps to all zeros.
pub fn normalize_intensity(grid: &Grid) -> Vec<f64> {
    let lo = grid.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; grid.data.len()];
    }
    grid.data.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn color_channel(i: f64, phase: f64, modulation: Modulation) -> f64 {
    let s = (2.0 * std::f64::consts::PI * (-i + phase) * 0.5 + 0.5).sin();
    s * s * modulation.apply(i)
}

pub fn pseudo_color(dmm: &Grid, cfg: &ColorConfig) -> PseudoColorImage {
    let intensity = normalize_intensity(dmm);
    let channels = cfg
        .phases
        .map(|phi| intensity.iter().map(|&i| color_channel(i, phi, cfg.modulation)).collect());
    PseudoColorImage {
        width: dmm.width,
        height: dmm.height,
        channels,
        phases: cfg.phases,
        modulation: cfg.modulation,
    }
}

/// Binary PPM, channels 1..3 as red, green, blue.
pub fn write_ppm(path: &Path, img: &PseudoColorImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let scale = 255.0 / img.modulation.max_value();
    let mut bytes = Vec::with_capacity(img.width * img.height * 3);
    for p in 0..img.width * img.height {
        for c in &img.channels {
            bytes.push((c[p] * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    write!(out, "P6\n{} {}\n255\n", img.width, img.height)
        .and_then(|_| out.write_all(&bytes))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Area-average resampling of a `width × height` plane to `out_w × out_h`.
pub fn area_downsample(
    data: &[f64],
    width: usize,
    height: usize,
    out_w: usize,
    out_h: usize,
) -> Vec<f64> {
    let wx = area_weights(width, out_w);
    let wy = area_weights(height, out_h);
    let mut rows = vec![0.0; height * out_w];
    for y in 0..height {
        for (ox, taps) in wx.iter().enumerate() {
            rows[y * out_w + ox] = taps.iter().map(|&(x, w)| w * data[y * width + x]).sum();
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for (oy, taps) in wy.iter().enumerate() {
        for ox in 0..out_w {
            out[oy * out_w + ox] = taps.iter().map(|&(y, w)| w * rows[y * out_w + ox]).sum();
        }
    }
    out
}

/// For each output cell, the input indices it overlaps and their weights
/// (overlap length over cell length).
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let (lo, hi) = (o as f64 * ratio, (o + 1) as f64 * ratio);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap / ratio))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(w: usize, h: usize, v: &[f64]) -> Grid {
        Grid::from_vec(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn one_or_two_maps_give_first_map() {
        let a = g(2, 1, &[1.0, 2.0]);
        let b = g(2, 1, &[5.0, 0.0]);
        assert_eq!(compute_dmm(&[a.clone()], false).unwrap(), a);
        assert_eq!(compute_dmm(&[a.clone(), b], false).unwrap(), a);
    }

    #[test]
    fn three_maps_skip_first_difference() {
        let m1 = g(2, 1, &[1.0, 2.0]);
        let m2 = g(2, 1, &[4.0, 2.0]);
        let m3 = g(2, 1, &[3.0, 7.0]);
        let d = compute_dmm(&[m1.clone(), m2.clone(), m3.clone()], false).unwrap();
        assert_eq!(d.data, vec![1.0 + 1.0, 2.0 + 5.0]);
        let d = compute_dmm(&[m1, m2, m3], true).unwrap();
        assert_eq!(d.data, vec![1.0 + 3.0 + 1.0, 2.0 + 0.0 + 5.0]);
    }

    #[test]
    fn empty_and_mismatched_segments_rejected() {
        assert!(compute_dmm(&[], false).is_err());
        assert!(compute_dmm(&[Grid::zeros(2, 2), Grid::zeros(3, 2)], false).is_err());
        assert!(traditional_dmm(&[]).is_err());
    }

    #[test]
    fn reversal_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let maps: Vec<Grid> = (0..6)
            .map(|_| g(3, 3, &(0..9).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
            .collect();
        let rev: Vec<Grid> = maps.iter().rev().cloned().collect();
        let fwd = compute_dmm(&maps, false).unwrap();
        let back = compute_dmm(&rev, false).unwrap();
        assert!(fwd.l1_distance(&back) > 0.0);
        let tf = traditional_dmm(&maps).unwrap();
        let tb = traditional_dmm(&rev).unwrap();
        assert!(tf.l1_distance(&tb) < 1e-12);
    }

    #[test]
    fn scalar_color_values() {
        let c = color_channel(1.0, 0.0, Modulation::Identity);
        assert!((c - (0.5 - std::f64::consts::PI).sin().powi(2)).abs() < 1e-15);
        assert!((c - 0.2298).abs() < 1e-4);
        for phi in [0.0, 1.0 / 3.0, 2.0 / 3.0] {
            assert_eq!(color_channel(0.0, phi, Modulation::Identity), 0.0);
        }
    }

    #[test]
    fn constant_dmm_is_black() {
        let img = pseudo_color(&g(2, 2, &[3.0; 4]), &ColorConfig::default());
        assert!(img.channels.iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn projections_of_single_pixel() {
        let mut f = DepthFrame::zeros(4, 3);
        f.values[1 * 4 + 2] = 2500; // u = 2, v = 1
        let cfg = ProjectionConfig {
            depth_min_mm: 0.0,
            depth_max_mm: 4000.0,
            depth_bins: 8,
        };
        let front = project_depth(&f, View::Front, &cfg);
        assert_eq!(front.get(2, 1), 2500.0);
        assert_eq!(front.data.iter().filter(|&&v| v != 0.0).count(), 1);
        let side = project_depth(&f, View::Side, &cfg);
        assert_eq!((side.width, side.height), (8, 3));
        assert_eq!(side.get(5, 1), 3.0 / 4.0);
        let top = project_depth(&f, View::Top, &cfg);
        assert_eq!((top.width, top.height), (4, 8));
        assert_eq!(top.get(2, 5), 2.0 / 3.0);
    }

    #[test]
    fn downsample_preserves_mean_and_blocks() {
        let data: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let out = area_downsample(&data, 4, 4, 2, 2);
        assert_eq!(out, vec![2.5, 4.5, 10.5, 12.5]);
        // non-integer ratio keeps the mean
        let data: Vec<f64> = (0..35).map(|i| (i * 7 % 11) as f64).collect();
        let out = area_downsample(&data, 7, 5, 3, 2);
        let m_in = data.iter().sum::<f64>() / 35.0;
        let m_out = out.iter().sum::<f64>() / 6.0;
        assert!((m_in - m_out).abs() < 1e-12);
    }

    #[test]
    fn ppm_has_expected_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ppm");
        let img = pseudo_color(&g(3, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]), &ColorConfig::default());
        write_ppm(&p, &img).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P6\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 18);
    }

    proptest! {
        #[test]
        fn channels_bounded_and_scale_invariant(
            vals in prop::collection::vec(0.0f64..1000.0, 16),
            c in 0.01f64..100.0
        ) {
            let cfg = ColorConfig::default();
            let grid = g(4, 4, &vals);
            let a = pseudo_color(&grid, &cfg);
            let scaled = g(4, 4, &vals.iter().map(|v| v * c).collect::<Vec<_>>());
            let b = pseudo_color(&scaled, &cfg);
            let intensity = normalize_intensity(&grid);
            for ch in 0..3 {
                for p in 0..16 {
                    let v = a.channels[ch][p];
                    prop_assert!(v >= 0.0 && v <= intensity[p] + 1e-12);
                    prop_assert!((v - b.channels[ch][p]).abs() < 1e-9);
                }
            }
        }
    }
}
