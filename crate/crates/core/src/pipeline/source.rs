//! Lazily loaded sample collections, so training never holds every depth
//! sequence in memory at once.

use crate::data::{generate_synthetic, ActionSample, Manifest, MotionTemplate, SynthOptions};
use crate::error::{Error, Result};

pub trait SampleSource: Sync {
    fn len(&self) -> usize;
    fn sample_id(&self, index: usize) -> String;
    fn label(&self, index: usize) -> Option<String>;
    fn load(&self, index: usize) -> Result<ActionSample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct ManifestSource {
    pub manifest: Manifest,
    pub joint_count: usize,
}

impl SampleSource for ManifestSource {
    fn len(&self) -> usize {
        self.manifest.len()
    }

    fn sample_id(&self, index: usize) -> String {
        self.manifest.entries[index].sample_id.clone()
    }

    fn label(&self, index: usize) -> Option<String> {
        self.manifest.entries[index].label.clone()
    }

    fn load(&self, index: usize) -> Result<ActionSample> {
        self.manifest.load_sample(index, self.joint_count)
    }
}

impl SampleSource for [ActionSample] {
    fn len(&self) -> usize {
        <[ActionSample]>::len(self)
    }

    fn sample_id(&self, index: usize) -> String {
        self[index].sample_id.clone()
    }

    fn label(&self, index: usize) -> Option<String> {
        self[index].label.clone()
    }

    fn load(&self, index: usize) -> Result<ActionSample> {
        Ok(self[index].clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticItem {
    pub template: MotionTemplate,
    pub seed: u64,
    pub sample_id: String,
}

/// Samples rendered on demand by the synthetic generator.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub items: Vec<SyntheticItem>,
    pub options: SynthOptions,
}

impl SyntheticSource {
    /// `per_class` samples of each template. Seeds are derived from
    /// `base_seed`, the template id and the sample index, so two sources
    /// built with different `base_seed` never share a sample.
    pub fn balanced(
        templates: &[MotionTemplate],
        per_class: usize,
        base_seed: u64,
        prefix: &str,
        options: SynthOptions,
    ) -> Self {
        let mut items = Vec::with_capacity(templates.len() * per_class);
        for &t in templates {
            for i in 0..per_class {
                items.push(SyntheticItem {
                    template: t,
                    seed: base_seed
                        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                        .wrapping_add((t.id() as u64) << 32)
                        .wrapping_add(i as u64),
                    sample_id: format!("{prefix}{}_{i:03}", t.name()),
                });
            }
        }
        Self { items, options }
    }
}

impl SampleSource for SyntheticSource {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn sample_id(&self, index: usize) -> String {
        self.items[index].sample_id.clone()
    }

    fn label(&self, index: usize) -> Option<String> {
        Some(self.items[index].template.name().to_string())
    }

    fn load(&self, index: usize) -> Result<ActionSample> {
        let item = self
            .items
            .get(index)
            .ok_or_else(|| Error::invalid(format!("no synthetic sample {index}")))?;
        generate_synthetic(item.template, &self.options, item.seed, item.sample_id.clone())
    }
}
