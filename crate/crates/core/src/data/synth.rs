//! Parametric synthetic actions on a 20-joint skeleton.
//!
//! Each template is a list of key poses (joint offsets from a standing rest
//! pose) at normalized times, blended with a cosine ease. A seed draws the
//! per-sample variation (key-time jitter, motion amplitude, body scale and
//! placement); Gaussian jitter of `noise_sigma` meters is added on top.
//! Depth frames render every joint as a small sphere.
//!
//! Joint order: hip center, spine, shoulder center, head, then left
//! shoulder/elbow/wrist/hand, right shoulder/elbow/wrist/hand, left
//! hip/knee/ankle/foot, right hip/knee/ankle/foot.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ActionSample, Camera, DepthFrame, DepthSequence, Point3, SkeletonSequence};
use crate::error::{Error, Result};

pub const JOINT_COUNT: usize = 20;

const REST: [Point3; JOINT_COUNT] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.25, 0.0],
    [0.0, 0.5, 0.0],
    [0.0, 0.68, 0.0],
    [-0.18, 0.45, 0.0],
    [-0.22, 0.18, 0.0],
    [-0.24, -0.05, 0.0],
    [-0.25, -0.12, 0.0],
    [0.18, 0.45, 0.0],
    [0.22, 0.18, 0.0],
    [0.24, -0.05, 0.0],
    [0.25, -0.12, 0.0],
    [-0.1, -0.05, 0.0],
    [-0.11, -0.45, 0.0],
    [-0.11, -0.85, 0.0],
    [-0.11, -0.9, -0.08],
    [0.1, -0.05, 0.0],
    [0.11, -0.45, 0.0],
    [0.11, -0.85, 0.0],
    [0.11, -0.9, -0.08],
];

const R_ELBOW: usize = 9;
const R_WRIST: usize = 10;
const R_HAND: usize = 11;
const L_ELBOW: usize = 5;
const L_WRIST: usize = 6;
const L_HAND: usize = 7;
const R_KNEE: usize = 17;
const R_ANKLE: usize = 18;
const R_FOOT: usize = 19;

/// Absolute target positions for a few joints; everything else stays at rest.
type Pose = &'static [(usize, Point3)];

const REST_POSE: Pose = &[];
const RIGHT_UP_INWARD: Pose = &[
    (R_ELBOW, [0.15, 0.45, -0.25]),
    (R_WRIST, [0.0, 0.65, -0.35]),
    (R_HAND, [-0.05, 0.7, -0.37]),
];
const RIGHT_UP_OUTWARD: Pose = &[
    (R_ELBOW, [0.35, 0.45, -0.2]),
    (R_WRIST, [0.5, 0.62, -0.3]),
    (R_HAND, [0.55, 0.68, -0.32]),
];
const BOTH_OVERHEAD: Pose = &[
    (R_ELBOW, [0.25, 0.7, 0.0]),
    (R_WRIST, [0.25, 0.95, 0.0]),
    (R_HAND, [0.25, 1.02, 0.0]),
    (L_ELBOW, [-0.25, 0.7, 0.0]),
    (L_WRIST, [-0.25, 0.95, 0.0]),
    (L_HAND, [-0.25, 1.02, 0.0]),
];
const RIGHT_CHEST: Pose = &[
    (R_ELBOW, [0.28, 0.25, 0.05]),
    (R_WRIST, [0.12, 0.38, -0.1]),
    (R_HAND, [0.08, 0.4, -0.12]),
];
const RIGHT_PUNCH: Pose = &[
    (R_ELBOW, [0.2, 0.42, -0.3]),
    (R_WRIST, [0.18, 0.43, -0.55]),
    (R_HAND, [0.18, 0.43, -0.62]),
];
const RIGHT_KICK: Pose = &[
    (R_KNEE, [0.13, -0.25, -0.35]),
    (R_ANKLE, [0.15, -0.45, -0.6]),
    (R_FOOT, [0.15, -0.45, -0.72]),
];
const BENT: Pose = &[
    (1, [0.0, 0.22, -0.08]),
    (2, [0.0, 0.38, -0.3]),
    (3, [0.0, 0.5, -0.42]),
    (4, [-0.18, 0.35, -0.28]),
    (5, [-0.2, 0.12, -0.35]),
    (6, [-0.2, -0.08, -0.4]),
    (7, [-0.2, -0.15, -0.42]),
    (8, [0.18, 0.35, -0.28]),
    (9, [0.2, 0.12, -0.35]),
    (10, [0.2, -0.08, -0.4]),
    (11, [0.2, -0.15, -0.42]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionTemplate {
    /// Right hand rises toward the body midline, then sweeps outward.
    SweepOut,
    /// Right hand rises to the outside, then sweeps toward the midline.
    SweepIn,
    /// Both arms raised overhead and lowered.
    BothArmsUp,
    /// Two right-hand punches toward the camera.
    Punch,
    /// Right-leg forward kick.
    Kick,
    /// Forward bend of the upper body.
    Bend,
}

impl MotionTemplate {
    pub const ALL: [MotionTemplate; 6] = [
        MotionTemplate::SweepOut,
        MotionTemplate::SweepIn,
        MotionTemplate::BothArmsUp,
        MotionTemplate::Punch,
        MotionTemplate::Kick,
        MotionTemplate::Bend,
    ];

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown motion template id {id}")))
    }

    pub fn id(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionTemplate::SweepOut => "sweep-out",
            MotionTemplate::SweepIn => "sweep-in",
            MotionTemplate::BothArmsUp => "both-arms-up",
            MotionTemplate::Punch => "punch",
            MotionTemplate::Kick => "kick",
            MotionTemplate::Bend => "bend",
        }
    }

    fn keys(self) -> &'static [(f64, Pose)] {
        match self {
            MotionTemplate::SweepOut => &[
                (0.0, REST_POSE),
                (0.12, REST_POSE),
                (0.32, RIGHT_UP_INWARD),
                (0.44, RIGHT_UP_INWARD),
                (0.64, RIGHT_UP_OUTWARD),
                (0.76, RIGHT_UP_OUTWARD),
                (0.92, REST_POSE),
                (1.0, REST_POSE),
            ],
            MotionTemplate::SweepIn => &[
                (0.0, REST_POSE),
                (0.12, REST_POSE),
                (0.32, RIGHT_UP_OUTWARD),
                (0.44, RIGHT_UP_OUTWARD),
                (0.64, RIGHT_UP_INWARD),
                (0.76, RIGHT_UP_INWARD),
                (0.92, REST_POSE),
                (1.0, REST_POSE),
            ],
            MotionTemplate::BothArmsUp => &[
                (0.0, REST_POSE),
                (0.15, REST_POSE),
                (0.4, BOTH_OVERHEAD),
                (0.55, BOTH_OVERHEAD),
                (0.8, REST_POSE),
                (1.0, REST_POSE),
            ],
            MotionTemplate::Punch => &[
                (0.0, REST_POSE),
                (0.1, REST_POSE),
                (0.25, RIGHT_CHEST),
                (0.38, RIGHT_PUNCH),
                (0.5, RIGHT_CHEST),
                (0.63, RIGHT_PUNCH),
                (0.76, RIGHT_CHEST),
                (0.92, REST_POSE),
                (1.0, REST_POSE),
            ],
            MotionTemplate::Kick => &[
                (0.0, REST_POSE),
                (0.2, REST_POSE),
                (0.45, RIGHT_KICK),
                (0.52, RIGHT_KICK),
                (0.77, REST_POSE),
                (1.0, REST_POSE),
            ],
            MotionTemplate::Bend => &[
                (0.0, REST_POSE),
                (0.2, REST_POSE),
                (0.48, BENT),
                (0.6, BENT),
                (0.86, REST_POSE),
                (1.0, REST_POSE),
            ],
        }
    }

    /// Noise-free joint positions at normalized time `t ∈ [0, 1]`.
    pub fn pose(self, params: &SampleParams, t: f64) -> Vec<Point3> {
        let keys = self.keys();
        let times = params.key_times(keys);
        let t = t.clamp(0.0, 1.0);
        let seg = (0..keys.len() - 1)
            .find(|&i| t <= times[i + 1])
            .unwrap_or(keys.len() - 2);
        let span = times[seg + 1] - times[seg];
        let s = if span > 0.0 {
            ((t - times[seg]) / span).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let ease = 0.5 - 0.5 * (PI * s).cos();
        let (from, to) = (keys[seg].1, keys[seg + 1].1);

        (0..JOINT_COUNT)
            .map(|j| {
                let a = offset(from, j);
                let b = offset(to, j);
                let mut p = [0.0; 3];
                for k in 0..3 {
                    let delta = a[k] + (b[k] - a[k]) * ease;
                    p[k] = params.position[k]
                        + params.body_scale * (REST[j][k] + params.amplitude * delta);
                }
                p
            })
            .collect()
    }
}

fn offset(pose: Pose, joint: usize) -> Point3 {
    pose.iter()
        .find(|(j, _)| *j == joint)
        .map(|(j, p)| {
            let r = REST[*j];
            [p[0] - r[0], p[1] - r[1], p[2] - r[2]]
        })
        .unwrap_or([0.0; 3])
}

/// Per-sample variation drawn from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleParams {
    pub amplitude: f64,
    pub body_scale: f64,
    /// Hip-center position in camera coordinates.
    pub position: Point3,
    /// Shift applied to every interior key time.
    pub time_jitter: Vec<f64>,
}

impl SampleParams {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            amplitude: rng.random_range(0.85..1.15),
            body_scale: rng.random_range(0.93..1.07),
            position: [
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.05..0.05),
                rng.random_range(2.3..2.8),
            ],
            time_jitter: (0..16).map(|_| rng.random_range(-0.03..0.03)).collect(),
        }
    }

    /// The parameters `generate_synthetic` uses for `seed`.
    pub fn for_seed(seed: u64) -> Self {
        Self::draw(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn key_times(&self, keys: &[(f64, Pose)]) -> Vec<f64> {
        let n = keys.len();
        let mut times: Vec<f64> = keys
            .iter()
            .enumerate()
            .map(|(i, (t, _))| {
                if i == 0 || i == n - 1 {
                    *t
                } else {
                    (t + self.time_jitter[i % self.time_jitter.len()]).clamp(0.0, 1.0)
                }
            })
            .collect();
        for i in 1..n {
            if times[i] < times[i - 1] {
                times[i] = times[i - 1];
            }
        }
        times
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub noise_sigma: f64,
    pub frames: usize,
    pub camera: Camera,
    /// Sphere radius used to render each joint, meters.
    pub joint_radius: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.002,
            frames: 40,
            camera: Camera::default(),
            joint_radius: 0.05,
        }
    }
}

pub fn generate_synthetic(
    template: MotionTemplate,
    opts: &SynthOptions,
    seed: u64,
    sample_id: impl Into<String>,
) -> Result<ActionSample> {
    if opts.frames < 4 {
        return Err(Error::invalid(format!(
            "synthetic samples need at least 4 frames, got {}",
            opts.frames
        )));
    }
    if !(opts.noise_sigma >= 0.0 && opts.noise_sigma.is_finite()) {
        return Err(Error::invalid("noise_sigma must be finite and >= 0"));
    }
    opts.camera.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = SampleParams::draw(&mut rng);
    let noise = Normal::new(0.0, opts.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;

    let frames: Vec<Vec<Point3>> = (0..opts.frames)
        .map(|f| {
            let t = f as f64 / (opts.frames - 1) as f64;
            let mut joints = template.pose(&params, t);
            if opts.noise_sigma > 0.0 {
                for p in &mut joints {
                    for c in p.iter_mut() {
                        *c += noise.sample(&mut rng);
                    }
                }
            }
            joints
        })
        .collect();

    let radius = opts.joint_radius * params.body_scale;
    let depth = frames
        .iter()
        .map(|joints| render_spheres(joints, radius, &opts.camera))
        .collect();
    ActionSample::new(
        sample_id,
        Some(template.name().to_string()),
        SkeletonSequence::from_joints(frames)?,
        DepthSequence::new(depth)?,
    )
}

fn render_spheres(joints: &[Point3], radius: f64, cam: &Camera) -> DepthFrame {
    let (w, h) = (cam.width, cam.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    for p in joints {
        if p[2] <= radius {
            continue;
        }
        let (uc, vc) = cam.project(p);
        let ru = cam.fx * radius / p[2];
        let rv = cam.fy * radius / p[2];
        let u0 = (uc - ru).floor().max(0.0) as usize;
        let v0 = (vc - rv).floor().max(0.0) as usize;
        let u1 = ((uc + ru).ceil() as isize).min(w as isize - 1);
        let v1 = ((vc + rv).ceil() as isize).min(h as isize - 1);
        if u1 < 0 || v1 < 0 {
            continue;
        }
        for v in v0..=v1 as usize {
            for u in u0..=u1 as usize {
                let dx = (u as f64 - uc) * p[2] / cam.fx;
                let dy = (v as f64 - vc) * p[2] / cam.fy;
                let rho2 = dx * dx + dy * dy;
                if rho2 > radius * radius {
                    continue;
                }
                let z = (p[2] - (radius * radius - rho2).sqrt()) * 1000.0;
                let idx = v * w + u;
                if z < zbuf[idx] {
                    zbuf[idx] = z;
                }
            }
        }
    }
    DepthFrame {
        width: w,
        height: h,
        values: zbuf
            .into_iter()
            .map(|z| {
                if z.is_finite() {
                    z.round().clamp(1.0, u16::MAX as f64) as u16
                } else {
                    0
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(noise: f64) -> SynthOptions {
        SynthOptions {
            noise_sigma: noise,
            frames: 12,
            camera: Camera {
                fx: 70.0,
                fy: 70.0,
                cx: 40.0,
                cy: 30.0,
                width: 80,
                height: 60,
            },
            joint_radius: 0.05,
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_synthetic(MotionTemplate::Punch, &opts(0.01), 7, "a").unwrap();
        let b = generate_synthetic(MotionTemplate::Punch, &opts(0.01), 7, "a").unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(MotionTemplate::Punch, &opts(0.01), 8, "a").unwrap();
        assert_ne!(a.skeleton, c.skeleton);
    }

    #[test]
    fn zero_noise_matches_closed_form() {
        let o = opts(0.0);
        let s = generate_synthetic(MotionTemplate::SweepIn, &o, 3, "x").unwrap();
        let params = SampleParams::for_seed(3);
        for (f, frame) in s.skeleton.frames().iter().enumerate() {
            let t = f as f64 / (o.frames - 1) as f64;
            assert_eq!(frame.joints, MotionTemplate::SweepIn.pose(&params, t));
        }
    }

    #[test]
    fn unknown_template_rejected() {
        assert!(MotionTemplate::from_id(MotionTemplate::ALL.len()).is_err());
        for t in MotionTemplate::ALL {
            assert_eq!(MotionTemplate::from_id(t.id()).unwrap(), t);
        }
    }

    #[test]
    fn too_few_frames_rejected() {
        let mut o = opts(0.0);
        o.frames = 3;
        assert!(generate_synthetic(MotionTemplate::Kick, &o, 1, "k").is_err());
    }

    #[test]
    fn depth_has_joint_pixels() {
        let s = generate_synthetic(MotionTemplate::Bend, &opts(0.0), 1, "b").unwrap();
        let f = &s.depth.frames()[0];
        let filled = f.values.iter().filter(|&&v| v > 0).count();
        assert!(filled > 20, "{filled}");
        assert!(f.values.iter().filter(|&&v| v > 0).all(|&v| (2000..3000).contains(&v)));
    }
}
