//! Infinite Gaussian mixture over segment descriptors.
//!
//! Mixture weights and component parameters are integrated out, so the
//! sampler state is just the partition. Each sweep reseats every point with
//!
//! ```text
//! P(c_i = k | c_-i, X) ∝ N_-i,k · t(x_i | cluster k posterior predictive)
//! P(c_i = new | c_-i, X) ∝ α · t(x_i | prior predictive)
//! ```
//!
//! (the common `1 / (W − 1 + α)` factor cancels). After burn-in the state
//! with the highest joint score `ln P(C | α) + Σ_k ln p(X_k)` is kept.

mod niw;
mod pca;

pub use niw::{log_marginal, predictive, NiwPrior, StudentT, SuffStats};
pub use pca::{reduce_dim, PcaModel};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::math::{argmax, sample_log_categorical};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaConfig {
    pub initial: f64,
    /// Metropolis-resample `α` each sweep under a Gamma(shape, rate) prior.
    pub resample: bool,
    pub prior_shape: f64,
    pub prior_rate: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            initial: 1.0,
            resample: false,
            prior_shape: 1.0,
            prior_rate: 1.0,
        }
    }
}

/// Overrides for the data-driven prior. `ν₀ = d + nu0_offset` and
/// `Λ₀ = lambda0_scale · diag(cov)`; `μ₀` defaults to the data mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    pub kappa0: f64,
    pub nu0_offset: f64,
    pub lambda0_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mu0: None,
            kappa0: 1.0,
            nu0_offset: 2.0,
            lambda0_scale: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn build(&self, rows: &[Vec<f64>]) -> Result<NiwPrior> {
        let base = NiwPrior::from_data(rows, self.lambda0_scale)?;
        let d = base.dim();
        let mu0 = match &self.mu0 {
            Some(m) if m.len() != d => {
                return Err(Error::Config(format!(
                    "prior mu0 has {} entries, data has dimension {d}",
                    m.len()
                )))
            }
            Some(m) => DVector::from_column_slice(m),
            None => base.mu0,
        };
        NiwPrior::new(mu0, self.kappa0, d as f64 + self.nu0_offset, base.lambda0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IgmmConfig {
    /// Descriptors are projected to this many principal components first.
    pub pca_dim: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub alpha: AlphaConfig,
    pub prior: PriorConfig,
}

impl Default for IgmmConfig {
    fn default() -> Self {
        Self {
            pca_dim: 10,
            iterations: 200,
            burn_in: 100,
            alpha: AlphaConfig::default(),
            prior: PriorConfig::default(),
        }
    }
}

impl IgmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pca_dim == 0 {
            return Err(Error::Config("pca_dim must be positive".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::Config("iterations must exceed burn_in".into()));
        }
        let a = &self.alpha;
        if !(a.initial > 0.0 && a.prior_shape > 0.0 && a.prior_rate > 0.0) {
            return Err(Error::Config("alpha parameters must be positive".into()));
        }
        let p = &self.prior;
        if !(p.kappa0 > 0.0 && p.lambda0_scale > 0.0 && p.nu0_offset >= 0.0) {
            return Err(Error::Config("invalid NIW prior overrides".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IgmmState {
    /// Cluster of each observation; ids are contiguous and numbered by first
    /// appearance.
    pub assignments: Vec<usize>,
    pub clusters: Vec<SuffStats>,
    pub alpha: f64,
    pub seed: u64,
    /// Sweep that produced this state (0 = initial single cluster).
    pub iteration: usize,
    pub log_score: f64,
    /// Joint score after every sweep, starting with the initial state.
    pub score_trace: Vec<f64>,
    /// Cluster count after every sweep, starting with the initial state.
    pub k_trace: Vec<usize>,
}

impl IgmmState {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.count).collect()
    }

    /// Largest relative deviation between the stored statistics and a fresh
    /// recomputation from `assignments`.
    pub fn stats_drift(&self, data: &[Vec<f64>]) -> f64 {
        let d = self.clusters.first().map_or(0, |c| c.sum.len());
        let mut fresh = vec![SuffStats::empty(d); self.clusters.len()];
        for (x, &k) in data.iter().zip(&self.assignments) {
            fresh[k].add(&DVector::from_column_slice(x));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.clusters.iter().zip(&fresh) {
            if a.count != b.count {
                return f64::INFINITY;
            }
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
            for (x, y) in a.sum.iter().zip(b.sum.iter()) {
                worst = worst.max(rel(*x, *y));
            }
            for (x, y) in a.outer.iter().zip(b.outer.iter()) {
                worst = worst.max(rel(*x, *y));
            }
        }
        worst
    }
}

/// `ln P(partition | α)` under the Chinese restaurant process.
pub fn crp_log_prob(counts: &[usize], alpha: f64) -> f64 {
    let w: usize = counts.iter().sum();
    counts.len() as f64 * alpha.ln() + counts.iter().map(|&n| ln_gamma(n as f64)).sum::<f64>()
        + ln_gamma(alpha)
        - ln_gamma(alpha + w as f64)
}

pub fn joint_log_score(clusters: &[SuffStats], alpha: f64, prior: &NiwPrior) -> Result<f64> {
    let counts: Vec<usize> = clusters.iter().map(|c| c.count).collect();
    let mut score = crp_log_prob(&counts, alpha);
    for c in clusters {
        score += log_marginal(prior, c)?;
    }
    Ok(score)
}

/// Pick an existing cluster or a new one (index `counts.len()`), weighting
/// cluster `k` by `counts[k] · exp(log_liks[k])` and a new cluster by
/// `α · exp(new_log_lik)`.
fn choose_cluster<R: Rng + ?Sized>(
    counts: &[usize],
    log_liks: &[f64],
    new_log_lik: f64,
    alpha: f64,
    rng: &mut R,
) -> usize {
    let mut w: Vec<f64> = counts
        .iter()
        .zip(log_liks)
        .map(|(&n, &l)| (n as f64).ln() + l)
        .collect();
    w.push(alpha.ln() + new_log_lik);
    sample_log_categorical(&w, rng)
}

/// Seat `n` customers by the Chinese restaurant process alone (every
/// likelihood equal). Returns each customer's table.
pub fn crp_seating<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::new();
    let mut seats = Vec::with_capacity(n);
    for _ in 0..n {
        let flat = vec![0.0; counts.len()];
        let k = choose_cluster(&counts, &flat, 0.0, alpha, rng);
        if k == counts.len() {
            counts.push(0);
        }
        counts[k] += 1;
        seats.push(k);
    }
    seats
}

struct Sampler<'a> {
    xs: Vec<DVector<f64>>,
    prior: &'a NiwPrior,
    assignments: Vec<usize>,
    clusters: Vec<SuffStats>,
    cache: Vec<Option<StudentT>>,
    new_cluster: StudentT,
    alpha: f64,
}

impl Sampler<'_> {
    fn predictive(&mut self, k: usize) -> Result<&StudentT> {
        if self.cache[k].is_none() {
            self.cache[k] = Some(predictive(self.prior, &self.clusters[k])?);
        }
        Ok(self.cache[k].as_ref().unwrap())
    }

    fn drop_cluster(&mut self, k: usize) {
        let last = self.clusters.len() - 1;
        self.clusters.swap_remove(k);
        self.cache.swap_remove(k);
        if k != last {
            for z in &mut self.assignments {
                if *z == last {
                    *z = k;
                }
            }
        }
    }

    fn sweep<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        for i in 0..self.xs.len() {
            let old = self.assignments[i];
            self.clusters[old].remove(&self.xs[i]);
            self.cache[old] = None;
            if self.clusters[old].count == 0 {
                self.drop_cluster(old);
            }

            let mut log_liks = Vec::with_capacity(self.clusters.len());
            for k in 0..self.clusters.len() {
                let x = &self.xs[i];
                let l = match &self.cache[k] {
                    Some(t) => t.ln_pdf(x),
                    None => {
                        let x = x.clone();
                        self.predictive(k)?.ln_pdf(&x)
                    }
                };
                log_liks.push(l);
            }
            let counts: Vec<usize> = self.clusters.iter().map(|c| c.count).collect();
            let new_ll = self.new_cluster.ln_pdf(&self.xs[i]);
            let k = choose_cluster(&counts, &log_liks, new_ll, self.alpha, rng);
            if k == self.clusters.len() {
                self.clusters.push(SuffStats::empty(self.prior.dim()));
                self.cache.push(None);
            }
            self.clusters[k].add(&self.xs[i]);
            self.cache[k] = None;
            self.assignments[i] = k;
        }
        Ok(())
    }

    fn resample_alpha<R: Rng>(&mut self, cfg: &AlphaConfig, rng: &mut R) {
        let k = self.clusters.len() as f64;
        let w = self.xs.len() as f64;
        // log target over η = ln α, including the Jacobian α
        let target = |a: f64| {
            (cfg.prior_shape - 1.0) * a.ln() - cfg.prior_rate * a + k * a.ln() + ln_gamma(a)
                - ln_gamma(a + w)
                + a.ln()
        };
        let step = Normal::new(0.0, 0.5).expect("valid proposal scale");
        let proposal = (self.alpha.ln() + step.sample(rng)).exp();
        let log_accept = target(proposal) - target(self.alpha);
        if rng.random::<f64>().ln() < log_accept {
            self.alpha = proposal;
        }
    }

    fn score(&self, cfg: &AlphaConfig) -> Result<f64> {
        let mut s = joint_log_score(&self.clusters, self.alpha, self.prior)?;
        if cfg.resample {
            s += (cfg.prior_shape - 1.0) * self.alpha.ln() - cfg.prior_rate * self.alpha;
        }
        Ok(s)
    }
}

/// Relabel clusters by order of first appearance.
fn canonicalize(assignments: &[usize], clusters: &[SuffStats]) -> (Vec<usize>, Vec<SuffStats>) {
    let mut map = vec![usize::MAX; clusters.len()];
    let mut order = Vec::with_capacity(clusters.len());
    for &z in assignments {
        if map[z] == usize::MAX {
            map[z] = order.len();
            order.push(z);
        }
    }
    (
        assignments.iter().map(|&z| map[z]).collect(),
        order.iter().map(|&k| clusters[k].clone()).collect(),
    )
}

/// Collapsed Gibbs sampling from a single all-in-one-cluster start.
pub fn igmm_fit(data: &[Vec<f64>], prior: &NiwPrior, cfg: &IgmmConfig, seed: u64) -> Result<IgmmState> {
    if data.len() < 2 {
        return Err(Error::invalid("IGMM needs at least 2 observations"));
    }
    if cfg.iterations <= cfg.burn_in {
        return Err(Error::invalid("iterations must exceed burn_in"));
    }
    let d = prior.dim();
    if let Some(bad) = data.iter().position(|x| x.len() != d) {
        return Err(Error::invalid(format!(
            "observation {bad} has dimension {}, prior has {d}",
            data[bad].len()
        )));
    }
    let xs: Vec<DVector<f64>> = data.iter().map(|x| DVector::from_column_slice(x)).collect();
    let mut all = SuffStats::empty(d);
    for x in &xs {
        all.add(x);
    }
    let mut sampler = Sampler {
        assignments: vec![0; xs.len()],
        clusters: vec![all],
        cache: vec![None],
        new_cluster: predictive(prior, &SuffStats::empty(d))?,
        alpha: cfg.alpha.initial,
        prior,
        xs,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let initial_score = sampler.score(&cfg.alpha)?;
    let mut best = (
        initial_score,
        0usize,
        sampler.assignments.clone(),
        sampler.clusters.clone(),
        sampler.alpha,
    );
    let mut score_trace = vec![initial_score];
    let mut k_trace = vec![1];

    for sweep in 1..=cfg.iterations {
        sampler.sweep(&mut rng)?;
        if cfg.alpha.resample {
            sampler.resample_alpha(&cfg.alpha, &mut rng);
        }
        let score = sampler.score(&cfg.alpha)?;
        score_trace.push(score);
        k_trace.push(sampler.clusters.len());
        if sweep > cfg.burn_in && score > best.0 {
            best = (
                score,
                sweep,
                sampler.assignments.clone(),
                sampler.clusters.clone(),
                sampler.alpha,
            );
        }
    }

    let (log_score, iteration, assignments, clusters, alpha) = best;
    let (assignments, clusters) = canonicalize(&assignments, &clusters);
    Ok(IgmmState {
        assignments,
        clusters,
        alpha,
        seed,
        iteration,
        log_score,
        score_trace,
        k_trace,
    })
}

/// Which predictive to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterRef {
    Existing(usize),
    New,
}

pub fn posterior_predictive(
    state: &IgmmState,
    prior: &NiwPrior,
    x: &[f64],
    cluster: ClusterRef,
) -> Result<f64> {
    let stats = match cluster {
        ClusterRef::Existing(k) => state
            .clusters
            .get(k)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("no active cluster {k}")))?,
        ClusterRef::New => SuffStats::empty(prior.dim()),
    };
    Ok(predictive(prior, &stats)?.ln_pdf(&DVector::from_column_slice(x)))
}

/// Fitted clusters frozen for labeling new descriptors.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub prior: NiwPrior,
    pub alpha: f64,
    pub clusters: Vec<SuffStats>,
    predictives: Vec<StudentT>,
}

// predictives are derived from the other fields
impl PartialEq for ClusterModel {
    fn eq(&self, other: &Self) -> bool {
        self.prior == other.prior && self.alpha == other.alpha && self.clusters == other.clusters
    }
}

impl ClusterModel {
    pub fn new(prior: NiwPrior, alpha: f64, clusters: Vec<SuffStats>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::invalid("cluster model needs at least one cluster"));
        }
        let predictives = clusters
            .iter()
            .map(|c| predictive(&prior, c))
            .collect::<Result<_>>()?;
        Ok(Self {
            prior,
            alpha,
            clusters,
            predictives,
        })
    }

    pub fn from_state(state: &IgmmState, prior: &NiwPrior) -> Result<Self> {
        Self::new(prior.clone(), state.alpha, state.clusters.clone())
    }

    pub fn symbol_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    /// Most probable existing cluster; opening a new cluster is not an
    /// option here, and ties go to the lower symbol.
    pub fn hard_assign(&self, x: &[f64]) -> usize {
        let x = DVector::from_column_slice(x);
        let scores: Vec<f64> = self
            .clusters
            .iter()
            .zip(&self.predictives)
            .map(|(c, t)| (c.count as f64).ln() + t.ln_pdf(&x))
            .collect();
        argmax(&scores)
    }
}
