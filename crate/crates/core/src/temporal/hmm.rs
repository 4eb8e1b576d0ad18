//! Discrete hidden Markov models with scaled forward-backward and
//! Baum-Welch re-estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmmConfig {
    /// Keep emissions at the identity so every state emits its own symbol.
    pub freeze_b: bool,
    /// Pseudo-count added to every transition and start count in the
    /// M-step.
    pub smoothing: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            freeze_b: true,
            smoothing: 1.0,
            max_iters: 100,
            tol: 1e-8,
        }
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config("hmm smoothing must be finite and >= 0".into()));
        }
        if self.max_iters == 0 || !(self.tol >= 0.0) {
            return Err(Error::Config("hmm max_iters must be positive and tol >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub pi: Vec<f64>,
    /// `a[i][j] = P(state j at t+1 | state i at t)`
    pub a: Vec<Vec<f64>>,
    /// `b[j][m] = P(symbol m | state j)`
    pub b: Vec<Vec<f64>>,
}

impl HmmModel {
    pub fn states(&self) -> usize {
        self.pi.len()
    }

    pub fn symbols(&self) -> usize {
        self.b.first().map_or(0, |r| r.len())
    }

    /// Uniform start and transitions with identity emissions.
    pub fn identity(k: usize) -> Self {
        let u = 1.0 / k as f64;
        Self {
            pi: vec![u; k],
            a: vec![vec![u; k]; k],
            b: (0..k)
                .map(|j| (0..k).map(|m| if j == m { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.states();
        let m = self.symbols();
        if k == 0 || m == 0 {
            return Err(Error::invalid("HMM needs at least one state and symbol"));
        }
        if self.a.len() != k || self.a.iter().any(|r| r.len() != k) || self.b.len() != k
            || self.b.iter().any(|r| r.len() != m)
        {
            return Err(Error::invalid("HMM parameter shapes are inconsistent"));
        }
        let simplex = |r: &[f64]| {
            r.iter().all(|&v| v >= 0.0 && v.is_finite())
                && (r.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        };
        if !simplex(&self.pi) || !self.a.iter().all(|r| simplex(r)) || !self.b.iter().all(|r| simplex(r))
        {
            return Err(Error::invalid("HMM rows must be probability vectors"));
        }
        Ok(())
    }
}

/// Scaled forward pass: normalized alphas per step and the scaling factors.
/// `None` when the sequence has probability zero.
fn forward(model: &HmmModel, seq: &[usize]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let k = model.states();
    let mut alphas = Vec::with_capacity(seq.len());
    let mut scales = Vec::with_capacity(seq.len());
    for (t, &o) in seq.iter().enumerate() {
        if o >= model.symbols() {
            return None;
        }
        let mut alpha: Vec<f64> = if t == 0 {
            (0..k).map(|j| model.pi[j] * model.b[j][o]).collect()
        } else {
            let prev: &Vec<f64> = &alphas[t - 1];
            (0..k)
                .map(|j| (0..k).map(|i| prev[i] * model.a[i][j]).sum::<f64>() * model.b[j][o])
                .collect()
        };
        let c: f64 = alpha.iter().sum();
        if !(c > 0.0) {
            return None;
        }
        alpha.iter_mut().for_each(|v| *v /= c);
        alphas.push(alpha);
        scales.push(c);
    }
    Some((alphas, scales))
}

/// `ln P(seq | model)`; `-inf` for impossible sequences, including symbols
/// outside the model's alphabet. An empty sequence has log-likelihood 0.
pub fn forward_log_likelihood(model: &HmmModel, seq: &[usize]) -> f64 {
    match forward(model, seq) {
        Some((_, scales)) => scales.iter().map(|c| c.ln()).sum(),
        None => f64::NEG_INFINITY,
    }
}

/// Expected counts gathered in one E-step.
struct Counts {
    first: Vec<f64>,
    trans: Vec<Vec<f64>>,
    emit: Vec<Vec<f64>>,
    log_lik: f64,
}

fn e_step(model: &HmmModel, seqs: &[Vec<usize>]) -> Result<Counts> {
    let k = model.states();
    let m = model.symbols();
    let mut c = Counts {
        first: vec![0.0; k],
        trans: vec![vec![0.0; k]; k],
        emit: vec![vec![0.0; m]; k],
        log_lik: 0.0,
    };
    for (s, seq) in seqs.iter().enumerate() {
        if seq.is_empty() {
            continue;
        }
        let (alphas, scales) = forward(model, seq).ok_or_else(|| {
            Error::numerical(format!("training sequence {s} has zero probability under the model"))
        })?;
        c.log_lik += scales.iter().map(|v| v.ln()).sum::<f64>();
        let n = seq.len();
        let mut beta = vec![1.0; k];
        for t in (0..n).rev() {
            let gamma: Vec<f64> = (0..k).map(|j| alphas[t][j] * beta[j]).collect();
            let norm: f64 = gamma.iter().sum();
            for j in 0..k {
                let g = gamma[j] / norm;
                c.emit[j][seq[t]] += g;
                if t == 0 {
                    c.first[j] += g;
                }
            }
            if t > 0 {
                let o = seq[t];
                // ξ_{t-1}(i, j) = α_{t-1}(i) a_ij b_j(o_t) β_t(j) / c_t
                for i in 0..k {
                    for j in 0..k {
                        c.trans[i][j] += alphas[t - 1][i] * model.a[i][j] * model.b[j][o] * beta[j]
                            / scales[t];
                    }
                }
                beta = (0..k)
                    .map(|i| {
                        (0..k).map(|j| model.a[i][j] * model.b[j][o] * beta[j]).sum::<f64>()
                            / scales[t]
                    })
                    .collect();
            }
        }
    }
    Ok(c)
}

fn normalized(row: &[f64], fallback: &[f64]) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter().map(|v| v / s).collect()
    } else {
        fallback.to_vec()
    }
}

/// Log-likelihood plus the Dirichlet smoothing term
/// `ε (Σ ln π_i + Σ ln a_ij)`, the quantity each EM iteration cannot
/// decrease.
pub fn penalized_objective(model: &HmmModel, log_lik: f64, smoothing: f64) -> f64 {
    if smoothing == 0.0 {
        return log_lik;
    }
    let logs: f64 = model.pi.iter().chain(model.a.iter().flatten()).map(|v| v.ln()).sum();
    log_lik + smoothing * logs
}

#[derive(Debug, Clone)]
pub struct BaumWelchResult {
    pub model: HmmModel,
    /// Objective of the parameters entering each iteration, then of the
    /// final parameters.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Baum-Welch from the identity-emission start with `k` states and symbols.
pub fn baum_welch(seqs: &[Vec<usize>], k: usize, cfg: &HmmConfig) -> Result<BaumWelchResult> {
    if k == 0 {
        return Err(Error::invalid("HMM needs at least one state"));
    }
    let mut init = HmmModel::identity(k);
    if !cfg.freeze_b {
        let w = 1.0 / (k as f64 + 1.0);
        init.b = (0..k)
            .map(|j| (0..k).map(|m| if j == m { 2.0 * w } else { w }).collect())
            .collect();
    }
    baum_welch_from(init, seqs, cfg)
}

/// Baum-Welch from explicit starting parameters.
pub fn baum_welch_from(init: HmmModel, seqs: &[Vec<usize>], cfg: &HmmConfig) -> Result<BaumWelchResult> {
    cfg.validate()?;
    init.validate()?;
    if seqs.is_empty() {
        return Err(Error::invalid("Baum-Welch needs at least one sequence"));
    }
    let m = init.symbols();
    for (s, seq) in seqs.iter().enumerate() {
        if let Some(&bad) = seq.iter().find(|&&o| o >= m) {
            return Err(Error::invalid(format!(
                "sequence {s} contains symbol {bad}, alphabet size is {m}"
            )));
        }
    }
    let k = init.states();
    let uniform = vec![1.0 / k as f64; k];
    let mut model = init;
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    loop {
        let counts = e_step(&model, seqs)?;
        let objective = penalized_objective(&model, counts.log_lik, cfg.smoothing);
        if let Some(&last) = trace.last() {
            let gain: f64 = objective - last;
            if iterations >= cfg.max_iters || gain.abs() <= cfg.tol * last.abs().max(1.0) {
                trace.push(objective);
                break;
            }
        }
        trace.push(objective);
        if iterations >= cfg.max_iters {
            break;
        }
        let first: Vec<f64> = counts.first.iter().map(|v| v + cfg.smoothing).collect();
        model.pi = normalized(&first, &model.pi);
        model.a = counts
            .trans
            .iter()
            .map(|row| {
                let smoothed: Vec<f64> = row.iter().map(|v| v + cfg.smoothing).collect();
                normalized(&smoothed, &uniform)
            })
            .collect();
        if !cfg.freeze_b {
            model.b = counts
                .emit
                .iter()
                .zip(&model.b)
                .map(|(row, old)| normalized(row, old))
                .collect();
        }
        iterations += 1;
    }
    Ok(BaumWelchResult {
        model,
        trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn no_smoothing() -> HmmConfig {
        HmmConfig {
            smoothing: 0.0,
            ..HmmConfig::default()
        }
    }

    /// Direct frequency counts of first symbols and transitions.
    fn counting_oracle(seqs: &[Vec<usize>], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut pi = vec![0.0; k];
        let mut a = vec![vec![0.0; k]; k];
        for s in seqs {
            pi[s[0]] += 1.0;
            for w in s.windows(2) {
                a[w[0]][w[1]] += 1.0;
            }
        }
        let n: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= n);
        for row in &mut a {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / k as f64);
            }
        }
        (pi, a)
    }

    /// Sum over every state path.
    fn brute_force_likelihood(model: &HmmModel, seq: &[usize]) -> f64 {
        let k = model.states();
        let n = seq.len();
        let mut total = 0.0;
        for code in 0..k.pow(n as u32) {
            let path: Vec<usize> = (0..n).map(|t| code / k.pow(t as u32) % k).collect();
            let mut p = model.pi[path[0]] * model.b[path[0]][seq[0]];
            for t in 1..n {
                p *= model.a[path[t - 1]][path[t]] * model.b[path[t]][seq[t]];
            }
            total += p;
        }
        total.ln()
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    fn random_model(rng: &mut ChaCha8Rng, k: usize, m: usize) -> HmmModel {
        HmmModel {
            pi: random_simplex(rng, k),
            a: (0..k).map(|_| random_simplex(rng, k)).collect(),
            b: (0..k).map(|_| random_simplex(rng, m)).collect(),
        }
    }

    #[test]
    fn constant_sequence_gives_one_hot_parameters() {
        let r = baum_welch(&[vec![0, 0, 0]], 2, &no_smoothing()).unwrap();
        assert_eq!(r.model.pi, vec![1.0, 0.0]);
        assert_eq!(r.model.a[0], vec![1.0, 0.0]);
    }

    #[test]
    fn frozen_identity_reduces_to_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = rng.random_range(2..5);
            let seqs: Vec<Vec<usize>> = (0..rng.random_range(1..6))
                .map(|_| (0..rng.random_range(1..9)).map(|_| rng.random_range(0..k)).collect())
                .collect();
            let r = baum_welch(&seqs, k, &no_smoothing()).unwrap();
            let (pi, a) = counting_oracle(&seqs, k);
            for j in 0..k {
                assert!((r.model.pi[j] - pi[j]).abs() <= 1e-10);
                for i in 0..k {
                    assert!((r.model.a[i][j] - a[i][j]).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn identity_model_likelihood_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = random_model(&mut rng, 3, 3);
        m.b = HmmModel::identity(3).b;
        let seq = [2, 0, 0, 1, 2, 1];
        let mut expect = m.pi[seq[0]].ln();
        for w in seq.windows(2) {
            expect += m.a[w[0]][w[1]].ln();
        }
        assert!((forward_log_likelihood(&m, &seq) - expect).abs() <= 1e-10);
        assert!((forward_log_likelihood(&m, &[1]) - m.pi[1].ln()).abs() <= 1e-15);
    }

    #[test]
    fn impossible_sequences_are_negative_infinity() {
        let mut m = HmmModel::identity(2);
        m.a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(forward_log_likelihood(&m, &[0, 1]), f64::NEG_INFINITY);
        assert_eq!(forward_log_likelihood(&m, &[5]), f64::NEG_INFINITY);
    }

    #[test]
    fn out_of_range_training_symbol_rejected() {
        assert!(baum_welch(&[vec![0, 3]], 2, &HmmConfig::default()).is_err());
        assert!(baum_welch(&[], 2, &HmmConfig::default()).is_err());
    }

    #[test]
    fn general_emissions_stay_on_simplex_and_improve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let truth = random_model(&mut rng, 2, 3);
        let seqs: Vec<Vec<usize>> = (0..10)
            .map(|_| (0..12).map(|_| rng.random_range(0..3)).collect())
            .collect();
        let cfg = HmmConfig {
            freeze_b: false,
            smoothing: 0.0,
            max_iters: 30,
            tol: 0.0,
        };
        let r = baum_welch_from(truth, &seqs, &cfg).unwrap();
        r.model.validate().unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    proptest! {
        #[test]
        fn forward_matches_path_enumeration(
            seed in 0u64..1000, k in 1usize..4, m in 1usize..4, n in 1usize..7
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, k, m);
            let seq: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
            let fast = forward_log_likelihood(&model, &seq);
            let slow = brute_force_likelihood(&model, &seq);
            prop_assert!((fast - slow).abs() <= 1e-10);
        }

        #[test]
        fn smoothed_em_is_monotone(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.random_range(2..5);
            let seqs: Vec<Vec<usize>> = (0..rng.random_range(1..5))
                .map(|_| (0..rng.random_range(2..10)).map(|_| rng.random_range(0..k)).collect())
                .collect();
            let r = baum_welch(&seqs, k, &HmmConfig::default()).unwrap();
            r.model.validate().unwrap();
            for w in r.trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }
}
