//! Histogram of Oriented Displacements.
//!
//! Every joint trajectory is projected onto the front, side and top planes.
//! Within a plane, each consecutive displacement votes for its orientation
//! bin with weight equal to its length. Histograms are built over a binary
//! temporal pyramid (whole segment, halves, quarters, ...) and each node is
//! L1-normalized on its own; a node without motion stays all-zero.
//!
//! Layout of the descriptor: joint-major, then plane (front, side, top),
//! then pyramid node (level by level, left to right), then orientation bin:
//! `index = ((joint * 3 + plane) * nodes + node) * bins + bin`.

use serde::{Deserialize, Serialize};

use crate::data::{SkeletonFrame, View};
use crate::error::{Error, Result};
use crate::math::orientation_bin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HodConfig {
    pub orientation_bins: usize,
    pub pyramid_levels: usize,
}

impl Default for HodConfig {
    fn default() -> Self {
        Self {
            orientation_bins: 8,
            pyramid_levels: 3,
        }
    }
}

impl HodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orientation_bins == 0 || self.pyramid_levels == 0 {
            return Err(Error::Config("HOD bins and pyramid levels must be positive".into()));
        }
        if self.pyramid_levels > 16 {
            return Err(Error::Config("at most 16 pyramid levels".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        (1 << self.pyramid_levels) - 1
    }

    pub fn dimension(&self, joint_count: usize) -> usize {
        joint_count * 3 * self.orientation_bins * self.node_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HodDescriptor {
    pub values: Vec<f64>,
}

/// Frame range `[first, last]` covered by each pyramid node of a segment with
/// `frames` frames, in descriptor order.
pub fn pyramid_nodes(frames: usize, levels: usize) -> Vec<(usize, usize)> {
    let span = frames - 1;
    let mut nodes = Vec::with_capacity((1 << levels) - 1);
    for level in 0..levels {
        let parts = 1usize << level;
        for i in 0..parts {
            nodes.push((i * span / parts, (i + 1) * span / parts));
        }
    }
    nodes
}

pub fn compute_hod(segment: &[SkeletonFrame], cfg: &HodConfig) -> Result<HodDescriptor> {
    if segment.len() < 2 {
        return Err(Error::invalid(format!(
            "HOD needs at least 2 frames, got {}",
            segment.len()
        )));
    }
    let joints = segment[0].joints.len();
    if segment.iter().any(|f| f.joints.len() != joints) {
        return Err(Error::invalid("joint count varies within segment"));
    }
    let bins = cfg.orientation_bins;
    let nodes = pyramid_nodes(segment.len(), cfg.pyramid_levels);
    let mut values = vec![0.0; cfg.dimension(joints)];

    for j in 0..joints {
        for (plane, view) in View::ALL.iter().enumerate() {
            let track: Vec<[f64; 2]> = segment.iter().map(|f| view.project(&f.joints[j])).collect();
            for (n, &(first, last)) in nodes.iter().enumerate() {
                let base = ((j * 3 + plane) * nodes.len() + n) * bins;
                let hist = &mut values[base..base + bins];
                for w in track[first..=last].windows(2) {
                    let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
                    let mag = dx.hypot(dy);
                    if mag > 0.0 {
                        hist[orientation_bin(dx, dy, bins)] += mag;
                    }
                }
                let total: f64 = hist.iter().sum();
                if total > 0.0 {
                    hist.iter_mut().for_each(|v| *v /= total);
                }
            }
        }
    }
    Ok(HodDescriptor { values })
}
