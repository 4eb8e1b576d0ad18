//! Rotation-based view augmentation.
//!
//! Camera coordinates are x right, y up, z away from the sensor, in meters.
//! A pixel `(u, v)` holding depth `d` mm back-projects to
//! `z = d / 1000`, `x = (u - cx) z / fx`, `y = (cy - v) z / fy`.

use serde::{Deserialize, Serialize};

use super::{ActionSample, DepthFrame, DepthSequence, Point3, SkeletonFrame, SkeletonSequence};
use crate::error::{Error, Result};

/// Pinhole depth camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fx: 285.0,
            fy: 285.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!("degenerate camera intrinsics {self:?}")));
        }
        Ok(())
    }

    pub fn back_project(&self, u: f64, v: f64, depth_mm: f64) -> Point3 {
        let z = depth_mm / 1000.0;
        [(u - self.cx) * z / self.fx, (self.cy - v) * z / self.fy, z]
    }

    /// Continuous pixel coordinates of a camera-space point (`z > 0`).
    pub fn project(&self, p: &Point3) -> (f64, f64) {
        (
            self.cx + self.fx * p[0] / p[2],
            self.cy - self.fy * p[1] / p[2],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSpec {
    /// About the vertical (y) axis.
    pub yaw_degrees: f64,
    /// About the horizontal (x) axis, applied after yaw.
    pub pitch_degrees: f64,
    /// Defaults to the centroid of all joints over the sequence.
    pub pivot: Option<Point3>,
}

impl RotationSpec {
    pub fn new(yaw_degrees: f64, pitch_degrees: f64) -> Self {
        Self {
            yaw_degrees,
            pitch_degrees,
            pivot: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in [self.yaw_degrees, self.pitch_degrees] {
            if !a.is_finite() || !(-180.0..=180.0).contains(&a) {
                return Err(Error::invalid(format!(
                    "rotation angle {a} outside [-180, 180]"
                )));
            }
        }
        Ok(())
    }

    /// Row-major `R = R_pitch * R_yaw`.
    fn matrix(&self) -> [[f64; 3]; 3] {
        let (sy, cy) = self.yaw_degrees.to_radians().sin_cos();
        let (sp, cp) = self.pitch_degrees.to_radians().sin_cos();
        let yaw = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let pitch = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| pitch[i][k] * yaw[k][j]).sum();
            }
        }
        r
    }
}

struct RigidRotation {
    r: [[f64; 3]; 3],
    pivot: Point3,
}

impl RigidRotation {
    #[inline]
    fn apply(&self, p: &Point3) -> Point3 {
        let d = [p[0] - self.pivot[0], p[1] - self.pivot[1], p[2] - self.pivot[2]];
        let mut out = self.pivot;
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.r[i][0] * d[0] + self.r[i][1] * d[1] + self.r[i][2] * d[2];
        }
        out
    }
}

pub fn rotate_skeleton(seq: &SkeletonSequence, spec: &RotationSpec) -> Result<SkeletonSequence> {
    spec.validate()?;
    let rot = RigidRotation {
        r: spec.matrix(),
        pivot: spec.pivot.unwrap_or_else(|| seq.centroid()),
    };
    Ok(rotate_with(seq, &rot))
}

fn rotate_with(seq: &SkeletonSequence, rot: &RigidRotation) -> SkeletonSequence {
    let frames = seq
        .frames()
        .iter()
        .map(|f| SkeletonFrame {
            joints: f.joints.iter().map(|p| rot.apply(p)).collect(),
            index: f.index,
        })
        .collect();
    // rotation keeps coordinates finite and joint counts unchanged
    SkeletonSequence::new(frames).expect("rotation preserves skeleton validity")
}

/// Rotate skeleton and depth together to mimic a virtual camera.
///
/// Depth pixels are back-projected, rotated, and re-rendered by nearest-pixel
/// splatting with a z-buffer; pixels that receive no point stay 0.
pub fn rotate_sample(
    sample: &ActionSample,
    spec: &RotationSpec,
    camera: &Camera,
) -> Result<ActionSample> {
    spec.validate()?;
    camera.validate()?;
    if sample.depth.is_empty() {
        return Err(Error::invalid("depth sequence is empty"));
    }
    let rot = RigidRotation {
        r: spec.matrix(),
        pivot: spec.pivot.unwrap_or_else(|| sample.skeleton.centroid()),
    };
    let skeleton = rotate_with(&sample.skeleton, &rot);
    let frames = sample
        .depth
        .frames()
        .iter()
        .map(|f| rerender(f, &rot, camera))
        .collect();
    ActionSample::new(
        sample.sample_id.clone(),
        sample.label.clone(),
        skeleton,
        DepthSequence::new(frames)?,
    )
}

fn rerender(frame: &DepthFrame, rot: &RigidRotation, camera: &Camera) -> DepthFrame {
    let (w, h) = (frame.width, frame.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    for row in 0..h {
        for col in 0..w {
            let d = frame.values[row * w + col];
            if d == 0 {
                continue;
            }
            let p = rot.apply(&camera.back_project(col as f64, row as f64, d as f64));
            if p[2] <= 0.0 {
                continue;
            }
            let (u, v) = camera.project(&p);
            let (u, v) = (u.round(), v.round());
            if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
                continue;
            }
            let idx = v as usize * w + u as usize;
            let mm = p[2] * 1000.0;
            if mm < zbuf[idx] {
                zbuf[idx] = mm;
            }
        }
    }
    let values = zbuf
        .into_iter()
        .map(|z| {
            if z.is_finite() {
                z.round().clamp(1.0, u16::MAX as f64) as u16
            } else {
                0
            }
        })
        .collect();
    DepthFrame {
        width: w,
        height: h,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(a: &Point3, b: &Point3) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    fn skeleton(seed: u64) -> SkeletonSequence {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..4)
            .map(|_| {
                (0..6)
                    .map(|_| {
                        [
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(1.5..3.5),
                        ]
                    })
                    .collect()
            })
            .collect();
        SkeletonSequence::from_joints(frames).unwrap()
    }

    #[test]
    fn identity_rotation_keeps_skeleton() {
        let s = skeleton(1);
        let r = rotate_skeleton(&s, &RotationSpec::new(0.0, 0.0)).unwrap();
        for (a, b) in s.frames().iter().zip(r.frames()) {
            for (p, q) in a.joints.iter().zip(&b.joints) {
                assert!(dist(p, q) < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_yaw_restores_joints() {
        let s = skeleton(2);
        let there = rotate_skeleton(&s, &RotationSpec::new(30.0, 0.0)).unwrap();
        let back = rotate_skeleton(&there, &RotationSpec::new(-30.0, 0.0)).unwrap();
        for (a, b) in s.frames().iter().zip(back.frames()) {
            for (p, q) in a.joints.iter().zip(&b.joints) {
                assert!(dist(p, q) < 1e-6);
            }
        }
    }

    #[test]
    fn out_of_range_angle_rejected() {
        assert!(rotate_skeleton(&skeleton(3), &RotationSpec::new(181.0, 0.0)).is_err());
    }

    #[test]
    fn identity_rotation_keeps_depth() {
        let mut values = vec![0u16; 32 * 24];
        for (i, v) in values.iter_mut().enumerate() {
            if i % 3 == 0 {
                *v = 1500 + (i as u16 % 700);
            }
        }
        let frame = DepthFrame::new(32, 24, values).unwrap();
        let cam = Camera {
            fx: 30.0,
            fy: 30.0,
            cx: 16.0,
            cy: 12.0,
            width: 32,
            height: 24,
        };
        let sk = SkeletonSequence::from_joints(vec![vec![[0.0, 0.0, 2.0], [0.1, 0.0, 2.0]]; 2])
            .unwrap();
        let sample = ActionSample::new(
            "s",
            None,
            sk,
            DepthSequence::new(vec![frame.clone(), frame.clone()]).unwrap(),
        )
        .unwrap();
        let out = rotate_sample(&sample, &RotationSpec::new(0.0, 0.0), &cam).unwrap();
        assert_eq!(out.depth.frames()[0], frame);
    }

    #[test]
    fn degenerate_camera_rejected() {
        let cam = Camera {
            fx: 0.0,
            ..Camera::default()
        };
        let sk = SkeletonSequence::from_joints(vec![vec![[0.0, 0.0, 2.0]; 2]; 2]).unwrap();
        let d = DepthSequence::new(vec![DepthFrame::zeros(4, 4); 2]).unwrap();
        let s = ActionSample::new("s", None, sk, d).unwrap();
        assert!(rotate_sample(&s, &RotationSpec::new(10.0, 0.0), &cam).is_err());
    }

    proptest! {
        #[test]
        fn rotation_is_isometry(
            yaw in -180.0f64..=180.0, pitch in -180.0f64..=180.0, seed in any::<u64>()
        ) {
            let s = skeleton(seed);
            let r = rotate_skeleton(&s, &RotationSpec::new(yaw, pitch)).unwrap();
            prop_assert_eq!(r.len(), s.len());
            for (a, b) in s.frames().iter().zip(r.frames()) {
                for i in 0..a.joints.len() {
                    for j in i + 1..a.joints.len() {
                        let before = dist(&a.joints[i], &a.joints[j]);
                        let after = dist(&b.joints[i], &b.joints[j]);
                        prop_assert!((before - after).abs() <= 1e-9);
                    }
                }
            }
        }
    }
}
