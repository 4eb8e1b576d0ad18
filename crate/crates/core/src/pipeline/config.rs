use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Camera, RotationSpec};
use crate::dmm::{ClassifierConfig, DmmConfig};
use crate::error::{Error, Result};
use crate::hod::HodConfig;
use crate::igmm::IgmmConfig;
use crate::segmentation::SegmentationConfig;
use crate::temporal::{FeatureConfig, HmmConfig, SvmConfig};

/// Rotation grid applied to every training sample; every (yaw, pitch) pair
/// yields one copy. A (0, 0) entry reuses the original sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub yaw_degrees: Vec<f64>,
    pub pitch_degrees: Vec<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            yaw_degrees: vec![-30.0, -15.0, 0.0, 15.0, 30.0],
            pitch_degrees: vec![0.0],
        }
    }
}

impl AugmentConfig {
    pub fn rotations(&self) -> Vec<RotationSpec> {
        let mut out = Vec::new();
        for &p in &self.pitch_degrees {
            for &y in &self.yaw_degrees {
                out.push(RotationSpec::new(y, p));
            }
        }
        out
    }
}

/// Which labels the per-action HMMs are trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HmmTrainSource {
    /// Re-encode training samples with the trained segment classifier.
    Classifier,
    /// Use the clustering labels directly.
    Igmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub joint_count: usize,
    pub hmm_train_source: HmmTrainSource,
    /// With the classifier source, each training sample is encoded by a
    /// classifier fitted on the other folds (class-stratified). Values below
    /// 2 encode with the final classifier, which has seen the sample.
    pub encode_folds: usize,
    pub camera: Camera,
    pub augment: AugmentConfig,
    pub segmentation: SegmentationConfig,
    pub hod: HodConfig,
    pub igmm: IgmmConfig,
    pub dmm: DmmConfig,
    pub classifier: ClassifierConfig,
    pub hmm: HmmConfig,
    pub features: FeatureConfig,
    pub svm: SvmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            joint_count: 20,
            hmm_train_source: HmmTrainSource::Classifier,
            encode_folds: 5,
            camera: Camera::default(),
            augment: AugmentConfig::default(),
            segmentation: SegmentationConfig::default(),
            hod: HodConfig::default(),
            igmm: IgmmConfig::default(),
            dmm: DmmConfig::default(),
            classifier: ClassifierConfig::default(),
            hmm: HmmConfig::default(),
            features: FeatureConfig::default(),
            svm: SvmConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.joint_count < 2 {
            return Err(Error::Config("joint_count must be at least 2".into()));
        }
        self.camera.validate()?;
        if self.augment.yaw_degrees.is_empty() || self.augment.pitch_degrees.is_empty() {
            return Err(Error::Config("augment grid must not be empty".into()));
        }
        for r in self.augment.rotations() {
            r.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.segmentation.validate()?;
        self.hod.validate()?;
        self.igmm.validate()?;
        self.dmm.validate()?;
        self.classifier.validate()?;
        self.hmm.validate()?;
        if !self.features.floor.is_finite() {
            return Err(Error::Config("features.floor must be finite".into()));
        }
        self.svm.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Read an optional TOML file, then apply `key.path=value` overrides in
    /// order. Values are parsed as TOML literals, falling back to strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse()
                    .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let cfg = PipelineConfig::load(
            None,
            &[
                "igmm.alpha.initial=2.5".into(),
                "segmentation.saliency.weighting=intersection".into(),
                "augment.yaw_degrees=[0, 10]".into(),
                "seed=7".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.igmm.alpha.initial, 2.5);
        assert_eq!(cfg.augment.yaw_degrees, vec![0.0, 10.0]);
        assert_eq!(cfg.seed, 7);
        assert!(PipelineConfig::load(None, &["igmm.bogus=1".into()]).is_err());
        assert!(PipelineConfig::load(None, &["nokey".into()]).is_err());
        assert!(PipelineConfig::from_toml_str("[hod]\norientation_bins = 0\n").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = PipelineConfig::from_toml_str("[svm]\nc = 3.0\n[camera]\nfx = 300.0\n").unwrap();
        assert_eq!(cfg.svm.c, 3.0);
        assert_eq!(cfg.svm.epochs, 200);
        assert_eq!(cfg.camera.fx, 300.0);
        assert_eq!(cfg.camera.width, 320);
    }
}
