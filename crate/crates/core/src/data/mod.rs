//! Skeleton and depth containers, file formats, view augmentation and the
//! synthetic action generator.

mod augment;
mod io;
pub mod synth;

pub use augment::{rotate_sample, rotate_skeleton, Camera, RotationSpec};
pub use io::{
    load_depth, load_skeleton, save_depth, save_skeleton, write_sample, Manifest, ManifestEntry,
};
pub use synth::{generate_synthetic, MotionTemplate, SynthOptions};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];
pub type Point2 = [f64; 2];

/// One of the three orthogonal projection planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    /// (x, y)
    Front,
    /// (z, y)
    Side,
    /// (x, z)
    Top,
}

impl View {
    pub const ALL: [View; 3] = [View::Front, View::Side, View::Top];

    pub fn project(self, p: &Point3) -> Point2 {
        match self {
            View::Front => [p[0], p[1]],
            View::Side => [p[2], p[1]],
            View::Top => [p[0], p[2]],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Side => "side",
            View::Top => "top",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub joints: Vec<Point3>,
    pub index: usize,
}

/// Joint positions projected onto the three planes, in joint order.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub front: Vec<Point2>,
    pub side: Vec<Point2>,
    pub top: Vec<Point2>,
}

impl Projections {
    pub fn view(&self, view: View) -> &[Point2] {
        match view {
            View::Front => &self.front,
            View::Side => &self.side,
            View::Top => &self.top,
        }
    }
}

pub fn project_skeleton(frame: &SkeletonFrame) -> Projections {
    let proj = |v: View| frame.joints.iter().map(|p| v.project(p)).collect();
    Projections {
        front: proj(View::Front),
        side: proj(View::Side),
        top: proj(View::Top),
    }
}

/// A validated skeleton sequence: constant joint count `J >= 2`, finite
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    frames: Vec<SkeletonFrame>,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<SkeletonFrame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::invalid("skeleton sequence has no frames"));
        };
        let joints = first.joints.len();
        if joints < 2 {
            return Err(Error::invalid(format!(
                "skeleton needs at least 2 joints, got {joints}"
            )));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.joints.len() != joints {
                return Err(Error::invalid(format!(
                    "frame {}: expected {joints} joints, found {}",
                    i + 1,
                    f.joints.len()
                )));
            }
            if f.joints.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!(
                    "frame {}: non-finite coordinate",
                    i + 1
                )));
            }
        }
        Ok(Self { frames })
    }

    /// Build from raw joint lists, numbering frames from zero.
    pub fn from_joints(frames: Vec<Vec<Point3>>) -> Result<Self> {
        Self::new(
            frames
                .into_iter()
                .enumerate()
                .map(|(index, joints)| SkeletonFrame { joints, index })
                .collect(),
        )
    }

    pub fn frames(&self) -> &[SkeletonFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.frames[0].joints.len()
    }

    /// Mean of every joint position over the whole sequence.
    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        let mut n = 0usize;
        for p in self.frames.iter().flat_map(|f| &f.joints) {
            for a in 0..3 {
                c[a] += p[a];
            }
            n += 1;
        }
        c.map(|v| v / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major millimeters; 0 marks a missing reading.
    pub values: Vec<u16>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, values: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("depth frame must have positive size"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "depth frame {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> u16 {
        self.values[row * self.width + col]
    }
}

/// Depth frames sharing one resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthSequence {
    frames: Vec<DepthFrame>,
}

impl DepthSequence {
    pub fn new(frames: Vec<DepthFrame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::invalid("depth sequence has no frames"));
        };
        let (w, h) = (first.width, first.height);
        if let Some(i) = frames.iter().position(|f| f.width != w || f.height != h) {
            return Err(Error::invalid(format!(
                "depth frame {} is {}x{}, expected {w}x{h}",
                i + 1,
                frames[i].width,
                frames[i].height
            )));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[DepthFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

/// One action instance: synchronized skeleton and depth streams.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub sample_id: String,
    pub label: Option<String>,
    pub skeleton: SkeletonSequence,
    pub depth: DepthSequence,
}

impl ActionSample {
    pub fn new(
        sample_id: impl Into<String>,
        label: Option<String>,
        skeleton: SkeletonSequence,
        depth: DepthSequence,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        if skeleton.len() != depth.len() {
            return Err(Error::invalid(format!(
                "sample {sample_id}: {} skeleton frames but {} depth frames",
                skeleton.len(),
                depth.len()
            )));
        }
        if skeleton.len() < 2 {
            return Err(Error::invalid(format!(
                "sample {sample_id}: needs at least 2 frames"
            )));
        }
        Ok(Self {
            sample_id,
            label,
            skeleton,
            depth,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.skeleton.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_drops_one_axis() {
        let f = SkeletonFrame {
            joints: vec![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]],
            index: 0,
        };
        let p = project_skeleton(&f);
        assert_eq!(p.front[0], [1.0, 2.0]);
        assert_eq!(p.side[0], [3.0, 2.0]);
        assert_eq!(p.top[0], [1.0, 3.0]);
        assert_eq!(p.front[1], [0.0, 0.0]);
        assert_eq!(p.side[1], [0.0, 0.0]);
        assert_eq!(p.top[1], [0.0, 0.0]);
    }

    #[test]
    fn sequence_rejects_ragged_frames() {
        let err = SkeletonSequence::from_joints(vec![vec![[0.0; 3]; 3], vec![[0.0; 3]; 2]])
            .unwrap_err();
        assert!(err.to_string().contains("frame 2: expected 3 joints"));
    }

    #[test]
    fn sequence_rejects_nan() {
        assert!(SkeletonSequence::from_joints(vec![vec![[0.0, f64::NAN, 0.0]; 2]]).is_err());
    }

    #[test]
    fn sample_requires_matching_lengths() {
        let sk = SkeletonSequence::from_joints(vec![vec![[0.0; 3]; 2]; 3]).unwrap();
        let d = DepthSequence::new(vec![DepthFrame::zeros(2, 2); 2]).unwrap();
        assert!(ActionSample::new("a", None, sk, d).is_err());
    }

    #[test]
    fn centroid_averages_all_joints() {
        let sk = SkeletonSequence::from_joints(vec![
            vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0.0, 4.0, 0.0], [2.0, 4.0, 2.0]],
        ])
        .unwrap();
        assert_eq!(sk.centroid(), [1.0, 2.0, 0.5]);
    }
}
