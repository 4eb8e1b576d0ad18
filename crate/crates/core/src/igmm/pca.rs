//! Principal component projection of segment descriptors.
//!
//! Covariance uses the population divisor `W`, so the mean squared
//! reconstruction error equals the sum of the discarded eigenvalues.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Below this size the covariance (or Gram) matrix is decomposed directly.
const EXACT_LIMIT: usize = 400;
const OVERSAMPLE: usize = 10;
const MAX_SUBSPACE_ITERS: usize = 500;
/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d` unit-norm principal directions, each of input dimension.
    pub components: Vec<Vec<f64>>,
    /// Variance captured by each component, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(ci, (xi, mi))| ci * (xi - mi))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &yi) in self.components.iter().zip(y) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += yi * ci;
            }
        }
        out
    }
}

/// Project `rows` (W × n) onto their top `target_dim` principal directions.
pub fn reduce_dim(rows: &[Vec<f64>], target_dim: usize) -> Result<(Vec<Vec<f64>>, PcaModel)> {
    let w = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if w == 0 || n == 0 {
        return Err(Error::invalid("PCA needs a non-empty matrix"));
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("PCA rows differ in length"));
    }
    if target_dim == 0 || target_dim > w.min(n) {
        return Err(Error::invalid(format!(
            "PCA target dimension {target_dim} must lie in 1..={}",
            w.min(n)
        )));
    }

    let mut mean = vec![0.0; n];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= w as f64);
    let centered = DMatrix::from_fn(w, n, |i, j| rows[i][j] - mean[j]);

    let (eigenvalues, vectors) = top_eigenpairs(&centered, target_dim)?;
    let top = eigenvalues[0];
    let rank = eigenvalues.iter().filter(|&&l| l > RANK_TOL * top).count();
    if top <= 0.0 || rank < target_dim {
        return Err(Error::invalid(format!(
            "PCA target dimension {target_dim} exceeds data rank {}",
            if top <= 0.0 { 0 } else { rank }
        )));
    }

    let components: Vec<Vec<f64>> = vectors
        .into_iter()
        .map(|mut v| {
            // deterministic sign: largest-magnitude entry positive
            let idx = (0..v.len())
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
                .unwrap();
            if v[idx] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let model = PcaModel {
        mean,
        components,
        eigenvalues,
    };
    let projected = rows.iter().map(|r| model.transform(r)).collect();
    Ok((projected, model))
}

/// Top `k` eigenpairs of `Xᵀ X / W` for centered `X` (W × n), descending.
fn top_eigenpairs(x: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (w, n) = x.shape();
    let scale = 1.0 / w as f64;
    if n <= EXACT_LIMIT {
        let cov = x.transpose() * x * scale;
        return Ok(sorted_pairs(SymmetricEigen::new(cov), k));
    }
    if w <= EXACT_LIMIT {
        // eigenvectors of X Xᵀ map to those of Xᵀ X through Xᵀ
        let gram = x * x.transpose() * scale;
        let (vals, vecs) = sorted_pairs(SymmetricEigen::new(gram), k);
        let mapped = vecs
            .into_iter()
            .map(|u| {
                let v = x.transpose() * DVector::from_vec(u);
                let norm = v.norm();
                if norm > 0.0 {
                    (v / norm).as_slice().to_vec()
                } else {
                    v.as_slice().to_vec()
                }
            })
            .collect();
        return Ok((vals, mapped));
    }
    subspace_iteration(x, k)
}

fn sorted_pairs(eig: SymmetricEigen<f64, nalgebra::Dyn>, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().take(k).map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vecs = order
        .iter()
        .take(k)
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (vals, vecs)
}

/// Block power iteration with Rayleigh-Ritz extraction.
fn subspace_iteration(x: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (w, n) = x.shape();
    let p = (k + OVERSAMPLE).min(w).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let start = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    let mut q = start.qr().q();
    let mut previous: Option<Vec<f64>> = None;

    for iter in 0..MAX_SUBSPACE_ITERS {
        let xq = x * &q;
        if iter % 5 == 4 {
            let ritz = SymmetricEigen::new(xq.transpose() * &xq / w as f64);
            let (vals, _) = sorted_pairs(ritz, k);
            if let Some(prev) = &previous {
                let top = vals[0].max(f64::MIN_POSITIVE);
                let converged = vals
                    .iter()
                    .zip(prev)
                    .all(|(a, b)| (a - b).abs() <= 1e-13 * top);
                if converged {
                    break;
                }
            }
            previous = Some(vals);
        }
        let y = x.transpose() * xq;
        q = y.qr().q();
    }

    let xq = x * &q;
    let ritz = SymmetricEigen::new(xq.transpose() * &xq / w as f64);
    let (vals, small) = sorted_pairs(ritz, k);
    let vecs = small
        .into_iter()
        .map(|s| (&q * DVector::from_vec(s)).as_slice().to_vec())
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("PCA eigenvalues are not finite"));
    }
    Ok((vals, vecs))
}
