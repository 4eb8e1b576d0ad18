//! One-vs-rest linear SVM trained by stochastic sub-gradient descent on the
//! L2-regularized hinge loss with a `1/(λt)` step and iterate averaging.
//! The bias is learned as the weight of a constant feature.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 200 }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || self.epochs == 0 {
            return Err(Error::Config("svm c must be > 0 and epochs positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub classes: usize,
    pub c: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z = standardize(x, &self.mean, &self.scale);
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, &z) + b)
            .collect()
    }
}

/// Trace of the binary objective of the averaged iterate, one entry per
/// epoch, for each class.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmTrainReport {
    pub objective: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn standardize(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

/// `λ/2 ‖w‖² + mean hinge` with `w` including the bias weight as its last
/// entry and rows already augmented with a trailing 1.
pub fn hinge_objective(w: &[f64], rows: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let reg = 0.5 * lambda * dot(w, w);
    let loss: f64 = rows
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * dot(w, x)).max(0.0))
        .sum();
    reg + loss / rows.len() as f64
}

fn train_binary(
    rows: &[Vec<f64>],
    ys: &[f64],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let mut w = vec![0.0; d];
    let mut avg = vec![0.0; d];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(epochs);
    let mut t = 0usize;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = ys[i] * dot(&w, &rows[i]);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (v, x) in w.iter_mut().zip(&rows[i]) {
                    *v += eta * ys[i] * x;
                }
            }
            let tf = t as f64;
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += (v - *a) / tf;
            }
        }
        trace.push(hinge_objective(&avg, rows, ys, lambda));
    }
    (avg, trace)
}

pub fn train_svm(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    cfg: &SvmConfig,
    seed: u64,
) -> Result<(SvmModel, SvmTrainReport)> {
    cfg.validate()?;
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::invalid("SVM needs matching, non-empty features and labels"));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::invalid("SVM feature vectors differ in length"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    let mut present = vec![false; classes];
    labels.iter().for_each(|&l| present[l] = true);
    if classes < 2 || present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid("SVM training data must contain at least 2 classes"));
    }

    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for f in features {
        for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let scale: Vec<f64> = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
    let rows: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            let mut z = standardize(f, &mean, &scale);
            z.push(1.0);
            z
        })
        .collect();

    let lambda = 1.0 / (cfg.c * n);
    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    let mut objective = Vec::with_capacity(classes);
    for c in 0..classes {
        let ys: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let (mut w, trace) = train_binary(&rows, &ys, lambda, cfg.epochs, seed.wrapping_add(c as u64));
        biases.push(w.pop().unwrap());
        weights.push(w);
        objective.push(trace);
    }
    Ok((
        SvmModel {
            classes,
            c: cfg.c,
            mean,
            scale,
            weights,
            biases,
        },
        SvmTrainReport { objective },
    ))
}

/// Highest-scoring class; ties go to the lower id.
pub fn svm_predict(model: &SvmModel, features: &[f64]) -> Result<usize> {
    if features.len() != model.dim() {
        return Err(Error::invalid(format!(
            "SVM expects {} features, got {}",
            model.dim(),
            features.len()
        )));
    }
    Ok(argmax(&model.scores(features)))
}
