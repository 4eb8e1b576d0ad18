//! Persistence of a trained pipeline as an [`Archive`].
//!
//! Components and their payloads:
//!
//! - `config`: the configuration snapshot as TOML text
//! - `classes`: class names
//! - `pca`: mean, component rows, eigenvalues
//! - `igmm`: α, prior (μ₀, κ₀, ν₀, Λ₀ rows), per-cluster count/sum/outer rows
//! - `classifier`: symbol count, image size, crop flag (u8), then front/side/top models
//!   (classes, dim, mean, scale, weights)
//! - `hmm`: per class π, A rows, B rows
//! - `svm`: C, mean, scale, weight rows, biases

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::archive::{Archive, Decoder, Encoder};
use super::{PipelineConfig, TrainedPipeline};
use crate::dmm::{SegmentClassifierModel, SoftmaxRegression};
use crate::error::{Error, ModelError, Result};
use crate::igmm::{ClusterModel, NiwPrior, PcaModel, SuffStats};
use crate::temporal::{HmmModel, SvmModel};

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn rows_matrix(d: &Decoder, rows: Vec<Vec<f64>>, n: usize) -> Result<DMatrix<f64>, ModelError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(d.error(format!("expected a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

fn put_softmax(e: &mut Encoder, m: &SoftmaxRegression) {
    e.usize(m.classes);
    e.usize(m.dim);
    e.f64s(&m.mean);
    e.f64s(&m.scale);
    e.f64s(&m.weights);
}

fn get_softmax(d: &mut Decoder) -> Result<SoftmaxRegression, ModelError> {
    let m = SoftmaxRegression {
        classes: d.usize()?,
        dim: d.usize()?,
        mean: d.f64s()?,
        scale: d.f64s()?,
        weights: d.f64s()?,
    };
    if m.mean.len() != m.dim || m.scale.len() != m.dim || m.weights.len() != m.classes * (m.dim + 1) {
        return Err(d.error("softmax parameter shapes are inconsistent"));
    }
    Ok(m)
}

impl TrainedPipeline {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new();

        let mut e = Encoder::new();
        e.str(&self.config.to_toml_string());
        a.add("config", e.finish());

        let mut e = Encoder::new();
        e.usize(self.class_names.len());
        self.class_names.iter().for_each(|c| e.str(c));
        a.add("classes", e.finish());

        let mut e = Encoder::new();
        e.f64s(&self.pca.mean);
        e.rows(&self.pca.components);
        e.f64s(&self.pca.eigenvalues);
        a.add("pca", e.finish());

        let mut e = Encoder::new();
        let p = &self.clusters.prior;
        e.f64(self.clusters.alpha);
        e.f64s(p.mu0.as_slice());
        e.f64(p.kappa0);
        e.f64(p.nu0);
        e.rows(&matrix_rows(&p.lambda0));
        e.usize(self.clusters.clusters.len());
        for c in &self.clusters.clusters {
            e.usize(c.count);
            e.f64s(c.sum.as_slice());
            e.rows(&matrix_rows(&c.outer));
        }
        a.add("igmm", e.finish());

        let mut e = Encoder::new();
        e.usize(self.classifier.classes);
        e.usize(self.classifier.size);
        e.bool(self.classifier.crop);
        self.classifier.views.iter().for_each(|v| put_softmax(&mut e, v));
        a.add("classifier", e.finish());

        let mut e = Encoder::new();
        e.usize(self.hmms.len());
        for h in &self.hmms {
            e.f64s(&h.pi);
            e.rows(&h.a);
            e.rows(&h.b);
        }
        a.add("hmm", e.finish());

        let mut e = Encoder::new();
        e.f64(self.svm.c);
        e.f64s(&self.svm.mean);
        e.f64s(&self.svm.scale);
        e.rows(&self.svm.weights);
        e.f64s(&self.svm.biases);
        a.add("svm", e.finish());
        a
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_archive().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let a = Archive::from_bytes(bytes)?;
        Ok(Self::from_archive(&a)?)
    }

    pub fn from_archive(a: &Archive) -> Result<Self, ModelError> {
        let malformed = |component: &str, message: String| ModelError::Malformed {
            component: component.into(),
            message,
        };

        let mut d = Decoder::new("config", a.get("config")?);
        let config = PipelineConfig::from_toml_str(&d.str()?)
            .map_err(|e| malformed("config", e.to_string()))?;
        d.finish()?;

        let mut d = Decoder::new("classes", a.get("classes")?);
        let n = d.usize()?;
        let class_names = (0..n).map(|_| d.str()).collect::<Result<Vec<_>, _>>()?;
        d.finish()?;

        let mut d = Decoder::new("pca", a.get("pca")?);
        let pca = PcaModel {
            mean: d.f64s()?,
            components: d.rows()?,
            eigenvalues: d.f64s()?,
        };
        d.finish()?;
        if pca.components.iter().any(|c| c.len() != pca.mean.len())
            || pca.eigenvalues.len() != pca.components.len()
        {
            return Err(malformed("pca", "component shapes are inconsistent".into()));
        }

        let mut d = Decoder::new("igmm", a.get("igmm")?);
        let alpha = d.f64()?;
        let mu0 = DVector::from_vec(d.f64s()?);
        let dim = mu0.len();
        let kappa0 = d.f64()?;
        let nu0 = d.f64()?;
        let rows = d.rows()?;
        let lambda0 = rows_matrix(&d, rows, dim)?;
        let prior = NiwPrior::new(mu0, kappa0, nu0, lambda0).map_err(|e| malformed("igmm", e.to_string()))?;
        let k = d.usize()?;
        let mut stats = Vec::new();
        for _ in 0..k {
            let count = d.usize()?;
            let sum = d.f64s()?;
            if sum.len() != dim {
                return Err(d.error("cluster sum has wrong dimension"));
            }
            let rows = d.rows()?;
            let outer = rows_matrix(&d, rows, dim)?;
            stats.push(SuffStats {
                count,
                sum: DVector::from_vec(sum),
                outer,
            });
        }
        d.finish()?;
        let clusters = ClusterModel::new(prior, alpha, stats).map_err(|e| malformed("igmm", e.to_string()))?;

        let mut d = Decoder::new("classifier", a.get("classifier")?);
        let classes = d.usize()?;
        let size = d.usize()?;
        let crop = d.bool()?;
        let views = [get_softmax(&mut d)?, get_softmax(&mut d)?, get_softmax(&mut d)?];
        d.finish()?;
        let classifier = SegmentClassifierModel {
            classes,
            size,
            crop,
            views,
        };

        let mut d = Decoder::new("hmm", a.get("hmm")?);
        let n = d.usize()?;
        let mut hmms = Vec::with_capacity(n);
        for _ in 0..n {
            let h = HmmModel {
                pi: d.f64s()?,
                a: d.rows()?,
                b: d.rows()?,
            };
            h.validate().map_err(|e| malformed("hmm", e.to_string()))?;
            hmms.push(h);
        }
        d.finish()?;

        let mut d = Decoder::new("svm", a.get("svm")?);
        let c = d.f64()?;
        let mean = d.f64s()?;
        let scale = d.f64s()?;
        let weights = d.rows()?;
        let biases = d.f64s()?;
        d.finish()?;
        let svm = SvmModel {
            classes: weights.len(),
            c,
            mean,
            scale,
            weights,
            biases,
        };

        let model = Self {
            config,
            class_names,
            pca,
            clusters,
            classifier,
            hmms,
            svm,
        };
        model.check_compatibility()?;
        Ok(model)
    }

    /// Cross-component shape agreement.
    pub fn check_compatibility(&self) -> Result<(), ModelError> {
        let bad = |message: String| ModelError::Malformed {
            component: "<model>".into(),
            message,
        };
        let k = self.clusters.symbol_count();
        if self.classifier.classes != k || self.classifier.views.iter().any(|v| v.classes != k) {
            return Err(bad(format!("classifier symbols differ from the {k} clusters")));
        }
        let feat = 3 * self.classifier.size * self.classifier.size;
        if self.classifier.views.iter().any(|v| v.dim != feat) {
            return Err(bad("classifier input size disagrees with its image size".into()));
        }
        if self.pca.output_dim() != self.clusters.dim() {
            return Err(bad("PCA output and cluster dimension differ".into()));
        }
        let c = self.class_names.len();
        if c < 2 || self.hmms.len() != c || self.svm.classes != c {
            return Err(bad(format!("expected {c} class models")));
        }
        if self.hmms.iter().any(|h| h.states() != k || h.symbols() != k) {
            return Err(bad(format!("every HMM must have {k} states and symbols")));
        }
        if self.svm.mean.len() != c
            || self.svm.scale.len() != c
            || self.svm.biases.len() != c
            || self.svm.weights.iter().any(|w| w.len() != c)
        {
            return Err(bad("SVM shapes disagree with the class count".into()));
        }
        Ok(())
    }
}

pub fn save_model(model: &TrainedPipeline, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedPipeline> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TrainedPipeline::from_bytes(&bytes)
}
