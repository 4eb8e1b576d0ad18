//! Entropy-based temporal segmentation of skeleton sequences.
//!
//! For every consecutive frame pair, each joint's displacement is projected
//! onto the front, side and top planes and quantized by orientation and
//! magnitude. The three per-plane histograms are concatenated, so a frame
//! pair casts exactly `3 * J` votes. The entropy of that histogram forms a
//! curve over time; its salient peaks become key frames, and key frames
//! split the sequence into segments.
//!
//! Bin layout, with planes in front, side, top order:
//! `k = plane * (orientation_bins * magnitude_bins) + magnitude_bin * orientation_bins + orientation_bin`.

use serde::{Deserialize, Serialize};

use crate::data::{SkeletonFrame, SkeletonSequence, View};
use crate::error::{Error, Result};
use crate::math::orientation_bin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionHistogramConfig {
    pub orientation_bins: usize,
    pub magnitude_bins: usize,
    /// Ascending thresholds in meters/frame; `magnitude_bins - 1` of them.
    pub magnitude_edges: Vec<f64>,
}

impl Default for MotionHistogramConfig {
    fn default() -> Self {
        Self {
            orientation_bins: 8,
            magnitude_bins: 4,
            magnitude_edges: vec![0.005, 0.02, 0.05],
        }
    }
}

impl MotionHistogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orientation_bins == 0 || self.magnitude_bins == 0 {
            return Err(Error::Config("histogram bin counts must be positive".into()));
        }
        if self.magnitude_edges.len() + 1 != self.magnitude_bins {
            return Err(Error::Config(format!(
                "{} magnitude bins need {} edges, got {}",
                self.magnitude_bins,
                self.magnitude_bins - 1,
                self.magnitude_edges.len()
            )));
        }
        let ascending = self.magnitude_edges.windows(2).all(|w| w[0] < w[1]);
        let positive = self.magnitude_edges.iter().all(|&e| e > 0.0 && e.is_finite());
        if !ascending || !positive {
            return Err(Error::Config(
                "magnitude edges must be positive and strictly ascending".into(),
            ));
        }
        Ok(())
    }

    pub fn bins_per_plane(&self) -> usize {
        self.orientation_bins * self.magnitude_bins
    }

    pub fn total_bins(&self) -> usize {
        3 * self.bins_per_plane()
    }

    /// Bin of one 2D displacement within a plane. A zero vector has no
    /// orientation and goes to orientation 0, magnitude 0.
    pub fn plane_bin(&self, dx: f64, dy: f64) -> usize {
        if dx == 0.0 && dy == 0.0 {
            return 0;
        }
        let mag = dx.hypot(dy);
        let m = self.magnitude_edges.partition_point(|&e| e <= mag);
        m * self.orientation_bins + orientation_bin(dx, dy, self.orientation_bins)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaliencyWeighting {
    /// `η · (1 − mean neighbor intersection)`: frames unlike their neighbors
    /// score higher.
    Dissimilarity,
    /// `η · mean neighbor intersection`.
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaliencyParams {
    /// Keep candidates whose weighted entropy is at least this fraction of
    /// the maximum.
    pub peak_fraction: f64,
    /// Minimum distance in frames between two key frames.
    pub min_gap: usize,
    pub weighting: SaliencyWeighting,
}

impl Default for SaliencyParams {
    fn default() -> Self {
        Self {
            peak_fraction: 0.5,
            min_gap: 5,
            weighting: SaliencyWeighting::Dissimilarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    pub histogram: MotionHistogramConfig,
    pub saliency: SaliencyParams,
    pub min_segment_frames: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            histogram: MotionHistogramConfig::default(),
            saliency: SaliencyParams::default(),
            min_segment_frames: 5,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        self.histogram.validate()?;
        let s = &self.saliency;
        if !(0.0..=1.0).contains(&s.peak_fraction) {
            return Err(Error::Config("peak_fraction must lie in [0, 1]".into()));
        }
        if s.min_gap == 0 {
            return Err(Error::Config("min_gap must be at least 1".into()));
        }
        if self.min_segment_frames < 2 {
            return Err(Error::Config("min_segment_frames must be at least 2".into()));
        }
        Ok(())
    }
}

/// Joint-motion histogram of one frame pair over all three planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionHistogram {
    counts: Vec<u32>,
    joint_count: usize,
}

impl MotionHistogram {
    pub fn from_counts(counts: Vec<u32>, joint_count: usize) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != 3 * joint_count as u64 {
            return Err(Error::invalid(format!(
                "histogram holds {total} votes, expected {}",
                3 * joint_count
            )));
        }
        Ok(Self {
            counts,
            joint_count,
        })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn probability(&self, k: usize) -> f64 {
        self.counts[k] as f64 / (3 * self.joint_count) as f64
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|k| self.probability(k)).collect()
    }
}

pub fn motion_histogram(
    prev: &SkeletonFrame,
    next: &SkeletonFrame,
    cfg: &MotionHistogramConfig,
) -> Result<MotionHistogram> {
    let j = prev.joints.len();
    if next.joints.len() != j {
        return Err(Error::invalid(format!(
            "joint count mismatch: {j} vs {}",
            next.joints.len()
        )));
    }
    let per_plane = cfg.bins_per_plane();
    let mut counts = vec![0u32; cfg.total_bins()];
    for (plane, view) in View::ALL.iter().enumerate() {
        for (a, b) in prev.joints.iter().zip(&next.joints) {
            let pa = view.project(a);
            let pb = view.project(b);
            let bin = cfg.plane_bin(pb[0] - pa[0], pb[1] - pa[1]);
            counts[plane * per_plane + bin] += 1;
        }
    }
    Ok(MotionHistogram {
        counts,
        joint_count: j,
    })
}

/// `−Σ p log2 p` over occupied bins.
pub fn entropy(hist: &MotionHistogram) -> f64 {
    let h: f64 = (0..hist.bin_count())
        .map(|k| hist.probability(k))
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    // a single occupied bin yields -0.0
    h.max(0.0)
}

pub fn histogram_intersection(a: &MotionHistogram, b: &MotionHistogram) -> Result<f64> {
    if a.bin_count() != b.bin_count() {
        return Err(Error::invalid(format!(
            "histogram bin counts differ: {} vs {}",
            a.bin_count(),
            b.bin_count()
        )));
    }
    Ok((0..a.bin_count())
        .map(|k| a.probability(k).min(b.probability(k)))
        .sum())
}

/// Entropy per frame pair; entry `t` describes frames `(t, t + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyCurve {
    pub values: Vec<f64>,
    pub histograms: Vec<MotionHistogram>,
}

pub fn entropy_curve(seq: &SkeletonSequence, cfg: &MotionHistogramConfig) -> Result<EntropyCurve> {
    let histograms = seq
        .frames()
        .windows(2)
        .map(|w| motion_histogram(&w[0], &w[1], cfg))
        .collect::<Result<Vec<_>>>()?;
    let values = histograms.iter().map(entropy).collect();
    Ok(EntropyCurve { values, histograms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrameSet {
    /// Strict local maxima of the entropy curve, ascending.
    pub initial: Vec<usize>,
    /// Weighted entropy of each `initial` frame.
    pub weights: Vec<f64>,
    /// Selected key frames, ascending.
    pub keys: Vec<usize>,
}

pub fn extract_key_frames(
    seq: &SkeletonSequence,
    cfg: &MotionHistogramConfig,
    sal: &SaliencyParams,
) -> Result<KeyFrameSet> {
    if seq.len() < 4 {
        return Err(Error::invalid(format!(
            "sequence too short: {} frames, need at least 4",
            seq.len()
        )));
    }
    let curve = entropy_curve(seq, cfg)?;
    key_frames_from_curve(&curve, sal)
}

pub fn key_frames_from_curve(curve: &EntropyCurve, sal: &SaliencyParams) -> Result<KeyFrameSet> {
    let eta = &curve.values;
    let initial: Vec<usize> = (1..eta.len().saturating_sub(1))
        .filter(|&t| eta[t - 1] < eta[t] && eta[t] > eta[t + 1])
        .collect();

    let weights = initial
        .iter()
        .map(|&t| {
            let h = &curve.histograms;
            let mean = 0.5
                * (histogram_intersection(&h[t - 1], &h[t])?
                    + histogram_intersection(&h[t], &h[t + 1])?);
            Ok(match sal.weighting {
                SaliencyWeighting::Dissimilarity => eta[t] * (1.0 - mean),
                SaliencyWeighting::Intersection => eta[t] * mean,
            })
        })
        .collect::<Result<Vec<f64>>>()?;

    let max = weights.iter().copied().fold(0.0, f64::max);
    let mut keys = Vec::new();
    if max > 0.0 {
        let threshold = sal.peak_fraction * max;
        let mut order: Vec<usize> = (0..initial.len())
            .filter(|&i| weights[i] >= threshold)
            .collect();
        // heaviest first; stable sort keeps the earlier frame on exact ties
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        for i in order {
            let t = initial[i];
            if keys.iter().all(|&k: &usize| k.abs_diff(t) >= sal.min_gap) {
                keys.push(t);
            }
        }
        keys.sort_unstable();
    }
    Ok(KeyFrameSet {
        initial,
        weights,
        keys,
    })
}

/// Segment boundaries: `0`, the surviving key frames, and `T − 1`. Segment
/// `i` spans frames `boundaries[i] ..= boundaries[i + 1]`, so neighbors share
/// their boundary frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentBoundaries {
    pub boundaries: Vec<usize>,
    /// Key frames before short segments were merged.
    pub key_frame_count: usize,
}

impl SegmentBoundaries {
    pub fn segment_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Inclusive `(first, last)` frame of each segment.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }
}

pub fn split_segments(
    frame_count: usize,
    keys: &KeyFrameSet,
    min_segment_frames: usize,
) -> SegmentBoundaries {
    let last = frame_count.saturating_sub(1);
    let mut boundaries = Vec::with_capacity(keys.keys.len() + 2);
    boundaries.push(0);
    boundaries.extend(keys.keys.iter().copied().filter(|&k| k > 0 && k < last));
    boundaries.push(last);

    let len = |b: &[usize], i: usize| b[i + 1] - b[i] + 1;
    loop {
        let n = boundaries.len() - 1;
        if n <= 1 {
            break;
        }
        let Some(i) = (0..n).find(|&i| len(&boundaries, i) < min_segment_frames) else {
            break;
        };
        let merge_left = if i == 0 {
            false
        } else if i == n - 1 {
            true
        } else {
            len(&boundaries, i - 1) <= len(&boundaries, i + 1)
        };
        if merge_left {
            boundaries.remove(i);
        } else {
            boundaries.remove(i + 1);
        }
    }
    SegmentBoundaries {
        boundaries,
        key_frame_count: keys.keys.len(),
    }
}

/// Everything segmentation produces for one sequence, for inspection.
#[derive(Debug, Clone)]
pub struct SegmentationTrace {
    pub curve: EntropyCurve,
    pub key_frames: KeyFrameSet,
    pub boundaries: SegmentBoundaries,
}

pub fn segment_sequence(seq: &SkeletonSequence, cfg: &SegmentationConfig) -> Result<SegmentationTrace> {
    if seq.len() < 4 {
        return Err(Error::invalid(format!(
            "sequence too short: {} frames, need at least 4",
            seq.len()
        )));
    }
    let curve = entropy_curve(seq, &cfg.histogram)?;
    let key_frames = key_frames_from_curve(&curve, &cfg.saliency)?;
    let boundaries = split_segments(seq.len(), &key_frames, cfg.min_segment_frames);
    Ok(SegmentationTrace {
        curve,
        key_frames,
        boundaries,
    })
}
