//! Normal–inverse-Wishart conjugate algebra.
//!
//! With prior `Σ ~ IW(ν₀, Λ₀)`, `μ | Σ ~ N(μ₀, Σ/κ₀)` and `n` observations
//! with mean `x̄` and scatter `S`:
//!
//! ```text
//! κₙ = κ₀ + n,  νₙ = ν₀ + n,  μₙ = (κ₀ μ₀ + n x̄) / κₙ
//! Λₙ = Λ₀ + S + κ₀ n / κₙ (x̄ − μ₀)(x̄ − μ₀)ᵀ
//! ```
//!
//! and the posterior predictive is a multivariate Student-t with
//! `νₙ − d + 1` degrees of freedom, location `μₙ` and scale
//! `Λₙ (κₙ + 1) / (κₙ (νₙ − d + 1))`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NiwPrior {
    pub mu0: DVector<f64>,
    pub kappa0: f64,
    pub nu0: f64,
    pub lambda0: DMatrix<f64>,
}

impl NiwPrior {
    pub fn new(mu0: DVector<f64>, kappa0: f64, nu0: f64, lambda0: DMatrix<f64>) -> Result<Self> {
        let d = mu0.len();
        if d == 0 || lambda0.shape() != (d, d) {
            return Err(Error::invalid(format!(
                "NIW prior: mean has dimension {d} but scale is {:?}",
                lambda0.shape()
            )));
        }
        if !(kappa0 > 0.0 && kappa0.is_finite()) {
            return Err(Error::invalid("NIW prior: kappa0 must be positive"));
        }
        if !(nu0 >= d as f64 && nu0.is_finite()) {
            return Err(Error::invalid(format!("NIW prior: nu0 must be at least {d}")));
        }
        if Cholesky::new(lambda0.clone()).is_none() {
            return Err(Error::invalid("NIW prior: lambda0 is not positive definite"));
        }
        Ok(Self {
            mu0,
            kappa0,
            nu0,
            lambda0,
        })
    }

    /// Data-driven defaults: `μ₀` = data mean, `κ₀ = 1`, `ν₀ = d + 2` and
    /// `Λ₀` = diagonal of the data covariance times `scale_factor`.
    /// Zero-variance coordinates get a small floor so `Λ₀` stays definite.
    pub fn from_data(rows: &[Vec<f64>], scale_factor: f64) -> Result<Self> {
        let w = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if w == 0 || d == 0 {
            return Err(Error::invalid("cannot derive a prior from no data"));
        }
        let mut mean = DVector::zeros(d);
        for r in rows {
            mean += DVector::from_column_slice(r);
        }
        mean /= w as f64;
        let mut var = vec![0.0; d];
        for r in rows {
            for k in 0..d {
                var[k] += (r[k] - mean[k]).powi(2) / w as f64;
            }
        }
        let mean_var = var.iter().sum::<f64>() / d as f64;
        let floor = (1e-6 * mean_var).max(1e-12);
        let diag = DVector::from_iterator(d, var.iter().map(|v| v.max(floor) * scale_factor));
        Self::new(mean, 1.0, d as f64 + 2.0, DMatrix::from_diagonal(&diag))
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
}

/// Count, sum and sum of outer products of a cluster's members.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub count: usize,
    pub sum: DVector<f64>,
    pub outer: DMatrix<f64>,
}

impl SuffStats {
    pub fn empty(d: usize) -> Self {
        Self {
            count: 0,
            sum: DVector::zeros(d),
            outer: DMatrix::zeros(d, d),
        }
    }

    pub fn add(&mut self, x: &DVector<f64>) {
        self.count += 1;
        self.sum += x;
        self.outer.ger(1.0, x, x, 1.0);
    }

    pub fn remove(&mut self, x: &DVector<f64>) {
        self.count -= 1;
        self.sum -= x;
        self.outer.ger(-1.0, x, x, 1.0);
    }
}

struct Posterior {
    kappa: f64,
    nu: f64,
    mu: DVector<f64>,
    lambda: DMatrix<f64>,
}

fn posterior(prior: &NiwPrior, stats: &SuffStats) -> Posterior {
    let n = stats.count as f64;
    let kappa = prior.kappa0 + n;
    let nu = prior.nu0 + n;
    let mu = (&prior.mu0 * prior.kappa0 + &stats.sum) / kappa;
    let mut lambda = &prior.lambda0 + &stats.outer;
    lambda.ger(prior.kappa0, &prior.mu0, &prior.mu0, 1.0);
    lambda.ger(-kappa, &mu, &mu, 1.0);
    // restore exact symmetry lost to rounding
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    Posterior {
        kappa,
        nu,
        mu,
        lambda,
    }
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let diag: Vec<f64> = m.diagonal().iter().copied().collect();
    Cholesky::new(m).ok_or_else(|| {
        Error::numerical(format!(
            "{what} is not positive definite (diagonal {diag:?})"
        ))
    })
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Multivariate Student-t, evaluated through the Cholesky factor of its
/// scale matrix.
#[derive(Debug, Clone)]
pub struct StudentT {
    pub df: f64,
    pub location: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    norm_const: f64,
}

impl StudentT {
    pub fn new(df: f64, location: DVector<f64>, scale: DMatrix<f64>) -> Result<Self> {
        let d = location.len() as f64;
        let chol = cholesky(scale, "Student-t scale")?;
        let norm_const = ln_gamma((df + d) / 2.0)
            - ln_gamma(df / 2.0)
            - 0.5 * d * (df * PI).ln()
            - 0.5 * log_det(&chol);
        Ok(Self {
            df,
            location,
            chol,
            norm_const,
        })
    }

    pub fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = self.location.len() as f64;
        let diff = x - &self.location;
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        let maha = z.norm_squared();
        self.norm_const - 0.5 * (self.df + d) * (maha / self.df).ln_1p()
    }

    pub fn scale(&self) -> DMatrix<f64> {
        self.chol.l() * self.chol.l().transpose()
    }
}

pub fn predictive(prior: &NiwPrior, stats: &SuffStats) -> Result<StudentT> {
    let d = prior.dim() as f64;
    let post = posterior(prior, stats);
    let df = post.nu - d + 1.0;
    let scale = post.lambda * ((post.kappa + 1.0) / (post.kappa * df));
    StudentT::new(df, post.mu, scale)
}

/// `ln Γ_d(a)`, the multivariate gamma function.
fn ln_mv_gamma(d: usize, a: f64) -> f64 {
    0.25 * (d * (d - 1)) as f64 * PI.ln()
        + (0..d).map(|j| ln_gamma(a - 0.5 * j as f64)).sum::<f64>()
}

/// Log marginal likelihood of a cluster's data under the prior.
pub fn log_marginal(prior: &NiwPrior, stats: &SuffStats) -> Result<f64> {
    if stats.count == 0 {
        return Ok(0.0);
    }
    let d = prior.dim();
    let n = stats.count as f64;
    let post = posterior(prior, stats);
    let prior_chol = cholesky(prior.lambda0.clone(), "prior scale")?;
    let post_chol = cholesky(post.lambda, "posterior scale")?;
    Ok(-0.5 * n * d as f64 * PI.ln() + ln_mv_gamma(d, post.nu / 2.0)
        - ln_mv_gamma(d, prior.nu0 / 2.0)
        + 0.5 * prior.nu0 * log_det(&prior_chol)
        - 0.5 * post.nu * log_det(&post_chol)
        + 0.5 * d as f64 * (prior.kappa0.ln() - post.kappa.ln()))
}
