//! Three-view segment classifier: one multinomial logistic regression per
//! view over area-downsampled pseudo-color images, with the three class
//! posteriors averaged at prediction time.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{area_downsample, PseudoColorImage};
use crate::error::{Error, Result};
use crate::math::{argmax, log_sum_exp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// Images are resampled to `size × size` per channel.
    pub size: usize,
    /// Crop each view to the bounding box of its non-black pixels before
    /// resampling, which removes position and scale of the subject.
    pub crop: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            size: 32,
            crop: true,
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            l2: 1e-4,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("classifier size, epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::Config("classifier learning_rate must be > 0 and l2 >= 0".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        3 * self.size * self.size
    }
}

/// Softmax regression on standardized features. `weights` is row-major
/// `classes × (dim + 1)` with the bias in the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    pub classes: usize,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SoftmaxRegression {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            weights: vec![0.0; classes * (dim + 1)],
        }
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn logits(&self, z: &[f64]) -> Vec<f64> {
        let stride = self.dim + 1;
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * stride..(c + 1) * stride];
                row[..self.dim].iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + row[self.dim]
            })
            .collect()
    }

    fn softmax_of(&self, z: &[f64]) -> Vec<f64> {
        let l = self.logits(z);
        let norm = log_sum_exp(&l);
        l.iter().map(|v| (v - norm).exp()).collect()
    }

    /// Class posterior of a raw (unstandardized) feature vector.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.softmax_of(&self.standardize(x))
    }

    /// Mean cross-entropy plus `l2/2 · ‖W‖²` (bias excluded) over already
    /// standardized rows, and its gradient in the layout of `weights`.
    pub fn loss_and_grad(&self, zs: &[&[f64]], labels: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let stride = self.dim + 1;
        let mut grad = vec![0.0; self.weights.len()];
        let mut loss = 0.0;
        let n = zs.len().max(1) as f64;
        for (z, &y) in zs.iter().zip(labels) {
            let l = self.logits(z);
            let norm = log_sum_exp(&l);
            loss += norm - l[y];
            for c in 0..self.classes {
                let p = (l[c] - norm).exp() - if c == y { 1.0 } else { 0.0 };
                if p == 0.0 {
                    continue;
                }
                let row = &mut grad[c * stride..(c + 1) * stride];
                for (g, v) in row[..self.dim].iter_mut().zip(z.iter()) {
                    *g += p * v;
                }
                row[self.dim] += p;
            }
        }
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        for c in 0..self.classes {
            for j in 0..self.dim {
                let w = self.weights[c * stride + j];
                loss += 0.5 * l2 * w * w;
                grad[c * stride + j] += l2 * w;
            }
        }
        (loss, grad)
    }

    /// Mini-batch gradient descent. Returns the model and the full-data
    /// objective before training and after every epoch.
    pub fn fit(
        rows: &[&[f64]],
        labels: &[usize],
        classes: usize,
        cfg: &ClassifierConfig,
        seed: u64,
    ) -> Result<(Self, Vec<f64>)> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("feature rows differ in length"));
        }
        let mut model = Self::zeros(classes, dim);
        let n = rows.len() as f64;
        for r in rows {
            for (m, v) in model.mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&model.mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        model.scale = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();

        let zs: Vec<Vec<f64>> = rows.iter().map(|r| model.standardize(r)).collect();
        let all: Vec<&[f64]> = zs.iter().map(|z| z.as_slice()).collect();
        let mut trace = vec![model.loss_and_grad(&all, labels, cfg.l2).0];
        let mut order: Vec<usize> = (0..zs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let bz: Vec<&[f64]> = batch.iter().map(|&i| zs[i].as_slice()).collect();
                let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                let (_, g) = model.loss_and_grad(&bz, &by, cfg.l2);
                for (w, g) in model.weights.iter_mut().zip(&g) {
                    *w -= cfg.learning_rate * g;
                }
            }
            trace.push(model.loss_and_grad(&all, labels, cfg.l2).0);
        }
        Ok((model, trace))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentClassifierModel {
    pub classes: usize,
    pub size: usize,
    pub crop: bool,
    /// Front, side, top.
    pub views: [SoftmaxRegression; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub loss_per_epoch: [Vec<f64>; 3],
    pub train_accuracy: f64,
}

/// Inclusive `(x0, y0, x1, y1)` box around pixels where any channel is
/// positive, or `None` for an all-black image.
pub fn content_box(img: &PseudoColorImage) -> Option<(usize, usize, usize, usize)> {
    let mut b: Option<(usize, usize, usize, usize)> = None;
    for y in 0..img.height {
        for x in 0..img.width {
            let p = y * img.width + x;
            if img.channels.iter().any(|c| c[p] > 0.0) {
                b = Some(match b {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    b
}

/// Resampled, channel-major feature vector of one view image.
pub fn view_features(img: &PseudoColorImage, size: usize, crop: bool) -> Vec<f64> {
    let (x0, y0, x1, y1) = match crop.then(|| content_box(img)).flatten() {
        Some(b) => b,
        None => (0, 0, img.width - 1, img.height - 1),
    };
    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
    img.channels
        .iter()
        .flat_map(|c| {
            let sub: Vec<f64> = (y0..=y1)
                .flat_map(|y| c[y * img.width + x0..=y * img.width + x1].iter().copied())
                .collect();
            area_downsample(&sub, w, h, size, size)
        })
        .collect()
}

pub fn segment_features(images: &[PseudoColorImage; 3], size: usize, crop: bool) -> [Vec<f64>; 3] {
    images.each_ref().map(|img| view_features(img, size, crop))
}

pub fn train_segment_classifier(
    features: &[[Vec<f64>; 3]],
    labels: &[usize],
    classes: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(SegmentClassifierModel, TrainReport)> {
    let mut seen = vec![false; classes];
    labels.iter().filter(|&&l| l < classes).for_each(|&l| seen[l] = true);
    let missing: Vec<usize> = (0..classes).filter(|&k| !seen[k]).collect();
    if classes >= 2 && !missing.is_empty() {
        return Err(Error::invalid(format!(
            "symbols with no training example: {missing:?}"
        )));
    }
    let refs: Vec<&[Vec<f64>; 3]> = features.iter().collect();
    train_on_subset(&refs, labels, classes, cfg, seed)
}

/// Like [`train_segment_classifier`] over borrowed rows, but symbols without
/// examples are allowed; they are simply never favored.
pub fn train_on_subset(
    features: &[&[Vec<f64>; 3]],
    labels: &[usize],
    classes: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(SegmentClassifierModel, TrainReport)> {
    cfg.validate()?;
    if classes < 2 {
        return Err(Error::invalid(format!(
            "segment classifier needs at least 2 symbols, got {classes}"
        )));
    }
    if features.len() != labels.len() {
        return Err(Error::invalid("feature and label counts differ"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} symbols")));
    }
    let dim = cfg.feature_dim();
    for f in features {
        if f.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid(format!("expected {dim} features per view")));
        }
    }

    let fitted: Vec<(SoftmaxRegression, Vec<f64>)> = (0..3)
        .into_par_iter()
        .map(|v| {
            let rows: Vec<&[f64]> = features.iter().map(|f| f[v].as_slice()).collect();
            SoftmaxRegression::fit(&rows, labels, classes, cfg, seed.wrapping_add(v as u64))
        })
        .collect::<Result<_>>()?;
    let mut it = fitted.into_iter();
    let (front, l0) = it.next().unwrap();
    let (side, l1) = it.next().unwrap();
    let (top, l2) = it.next().unwrap();
    let model = SegmentClassifierModel {
        classes,
        size: cfg.size,
        crop: cfg.crop,
        views: [front, side, top],
    };
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(f, &y)| classify_features(&model, f).map(|r| r.0 == y).unwrap_or(false))
        .count();
    let report = TrainReport {
        loss_per_epoch: [l0, l1, l2],
        train_accuracy: correct as f64 / features.len().max(1) as f64,
    };
    Ok((model, report))
}

pub fn classify_features(
    model: &SegmentClassifierModel,
    features: &[Vec<f64>; 3],
) -> Result<(usize, Vec<f64>)> {
    let mut mean = vec![0.0; model.classes];
    for (view, f) in model.views.iter().zip(features) {
        if f.len() != view.dim {
            return Err(Error::invalid(format!(
                "view has {} features, classifier expects {}",
                f.len(),
                view.dim
            )));
        }
        for (m, p) in mean.iter_mut().zip(view.predict_proba(f)) {
            *m += p / 3.0;
        }
    }
    Ok((argmax(&mean), mean))
}

pub fn classify_segment(
    model: &SegmentClassifierModel,
    images: &[PseudoColorImage; 3],
) -> Result<(usize, Vec<f64>)> {
    classify_features(model, &segment_features(images, model.size, model.crop))
}
