//! File formats.
//!
//! Skeleton text: first line `J T`, then `T * J` lines of `x y z` in meters,
//! frame-major. Blank lines are ignored.
//!
//! Depth binary: three little-endian `u32` (`T`, `width`, `height`) followed by
//! `T` frames of `width * height` little-endian `u16` millimeters, row-major.
//!
//! Manifest CSV (no header): `sample_id,skeleton_path,depth_path,label`, with
//! an empty label for unlabeled samples. Relative paths resolve against the
//! manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use super::{ActionSample, DepthFrame, DepthSequence, Point3, SkeletonSequence};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_skeleton(path: impl AsRef<Path>, joint_count: usize) -> Result<SkeletonSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_skeleton(path, &text, joint_count)
}

fn parse_skeleton(path: &Path, text: &str, joint_count: usize) -> Result<SkeletonSequence> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected header `J T`"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(parse_err(path, hline, "header must be `J T`"));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(path, hline, format!("bad count `{s}` in header")))
    };
    let (j, t) = (parse_count(fields[0])?, parse_count(fields[1])?);
    if j != joint_count {
        return Err(parse_err(
            path,
            hline,
            format!("expected {joint_count} joints per frame, header declares {j}"),
        ));
    }
    if j < 2 {
        return Err(parse_err(path, hline, "need at least 2 joints"));
    }

    let mut joints: Vec<Point3> = Vec::with_capacity(j * t);
    let mut last_line = hline;
    for (lno, line) in lines {
        last_line = lno;
        if joints.len() == j * t {
            return Err(parse_err(
                path,
                lno,
                format!("unexpected data after {t} frames"),
            ));
        }
        let mut p = [0.0; 3];
        let mut it = line.split_whitespace();
        for (axis, slot) in p.iter_mut().enumerate() {
            let tok = it.next().ok_or_else(|| {
                parse_err(path, lno, format!("expected 3 coordinates, found {axis}"))
            })?;
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, lno, format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, lno, format!("non-finite value `{tok}`")));
            }
            *slot = v;
        }
        if it.next().is_some() {
            return Err(parse_err(path, lno, "expected 3 coordinates, found more"));
        }
        joints.push(p);
    }
    if joints.len() < j * t {
        let frame = joints.len() / j + 1;
        return Err(parse_err(
            path,
            last_line,
            format!(
                "frame {frame}: expected {j} joints, found {}",
                joints.len() - (frame - 1) * j
            ),
        ));
    }
    let frames = joints.chunks(j).map(|c| c.to_vec()).collect();
    SkeletonSequence::from_joints(frames)
}

pub fn save_skeleton(path: impl AsRef<Path>, seq: &SkeletonSequence) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", seq.joint_count(), seq.len()));
    for f in seq.frames() {
        for p in &f.joints {
            // `{}` prints the shortest representation that parses back exactly
            out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_depth(path, &bytes)
}

fn decode_depth(path: &Path, bytes: &[u8]) -> Result<DepthSequence> {
    let bad = |m: String| Error::invalid(format!("{}: {m}", path.display()));
    if bytes.len() < 12 {
        return Err(bad("depth header truncated".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let (t, w, h) = (word(0), word(1), word(2));
    if t == 0 || w == 0 || h == 0 {
        return Err(bad(format!("degenerate depth header T={t} {w}x{h}")));
    }
    let expected = 12 + t * w * h * 2;
    if bytes.len() != expected {
        return Err(bad(format!(
            "depth payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let frames = bytes[12..]
        .chunks_exact(w * h * 2)
        .map(|chunk| {
            let values = chunk
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]))
                .collect();
            DepthFrame {
                width: w,
                height: h,
                values,
            }
        })
        .collect();
    DepthSequence::new(frames)
}

pub fn save_depth(path: impl AsRef<Path>, seq: &DepthSequence) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(12 + seq.len() * seq.width() * seq.height() * 2);
    for v in [seq.len(), seq.width(), seq.height()] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for f in seq.frames() {
        for v in &f.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub skeleton_path: PathBuf,
    pub depth_path: PathBuf,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(path, i + 1, e.to_string()))?;
            if rec.len() < 3 || rec.len() > 4 {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected 3 or 4 fields, found {}", rec.len()),
                ));
            }
            let resolve = |s: &str| {
                let p = PathBuf::from(s);
                if p.is_relative() {
                    base.join(p)
                } else {
                    p
                }
            };
            let label = rec.get(3).filter(|s| !s.is_empty()).map(str::to_string);
            entries.push(ManifestEntry {
                sample_id: rec[0].to_string(),
                skeleton_path: resolve(&rec[1]),
                depth_path: resolve(&rec[2]),
                label,
            });
        }
        Ok(Self { entries })
    }

    /// Write with paths as given (callers decide whether they are relative).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        for e in &self.entries {
            w.write_record([
                e.sample_id.as_str(),
                &e.skeleton_path.to_string_lossy(),
                &e.depth_path.to_string_lossy(),
                e.label.as_deref().unwrap_or(""),
            ])
            .map_err(|e| Error::invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load_sample(&self, index: usize, joint_count: usize) -> Result<ActionSample> {
        let e = &self.entries[index];
        let skeleton = load_skeleton(&e.skeleton_path, joint_count)?;
        let depth = load_depth(&e.depth_path)?;
        ActionSample::new(e.sample_id.clone(), e.label.clone(), skeleton, depth)
    }
}

/// Write a sample's skeleton and depth files into `dir` as
/// `<id>.skel.txt` / `<id>.depth.bin` and return the manifest row with paths
/// relative to `dir`.
pub fn write_sample(dir: &Path, sample: &ActionSample) -> Result<ManifestEntry> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let skel = format!("{}.skel.txt", sample.sample_id);
    let depth = format!("{}.depth.bin", sample.sample_id);
    save_skeleton(dir.join(&skel), &sample.skeleton)?;
    save_depth(dir.join(&depth), &sample.depth)?;
    Ok(ManifestEntry {
        sample_id: sample.sample_id.clone(),
        skeleton_path: skel.into(),
        depth_path: depth.into(),
        label: sample.label.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, j: usize) -> Result<SkeletonSequence> {
        parse_skeleton(Path::new("t.txt"), text, j)
    }

    #[test]
    fn zeros_parse() {
        let mut text = String::from("20 2\n");
        for _ in 0..40 {
            text.push_str("0 0 0\n");
        }
        let s = parse(&text, 20).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.joint_count(), 20);
        assert!(s.frames().iter().flat_map(|f| &f.joints).all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn short_frame_names_frame() {
        let mut text = String::from("20 2\n");
        for _ in 0..39 {
            text.push_str("0 0 0\n");
        }
        let err = parse(&text, 20).unwrap_err().to_string();
        assert!(err.contains("frame 2: expected 20 joints"), "{err}");
    }

    #[test]
    fn rejects_nan_with_line() {
        let err = parse("2 1\n0 0 0\n0 nan 0\n", 2).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn rejects_malformed_line() {
        assert!(parse("2 1\n0 0\n0 0 0\n", 2).is_err());
        assert!(parse("2 1\n0 0 0 0\n0 0 0\n", 2).is_err());
        assert!(parse("2 1\n0 x 0\n0 0 0\n", 2).is_err());
    }

    #[test]
    fn depth_truncated_is_rejected() {
        let mut bytes = Vec::new();
        for v in [1u32, 2, 2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[0u8; 7]);
        assert!(decode_depth(Path::new("d"), &bytes).is_err());
    }

    proptest! {
        #[test]
        fn skeleton_roundtrip_is_exact(
            frames in prop::collection::vec(
                prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), 3), 2..6)
        ) {
            let seq = SkeletonSequence::from_joints(frames).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.txt");
            save_skeleton(&p, &seq).unwrap();
            let back = load_skeleton(&p, 3).unwrap();
            for (a, b) in seq.frames().iter().zip(back.frames()) {
                for (pa, pb) in a.joints.iter().zip(&b.joints) {
                    for k in 0..3 {
                        prop_assert_eq!(pa[k].to_bits(), pb[k].to_bits());
                    }
                }
            }
        }

        #[test]
        fn depth_roundtrip_is_exact(
            w in 1usize..5, h in 1usize..5, t in 1usize..4, seed in any::<u64>()
        ) {
            let frames = (0..t).map(|k| {
                let values = (0..w * h)
                    .map(|i| (seed.wrapping_mul(31).wrapping_add((k * 97 + i) as u64) % 65536) as u16)
                    .collect();
                DepthFrame::new(w, h, values).unwrap()
            }).collect();
            let seq = DepthSequence::new(frames).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("d.bin");
            save_depth(&p, &seq).unwrap();
            prop_assert_eq!(load_depth(&p).unwrap(), seq);
        }
    }
}
