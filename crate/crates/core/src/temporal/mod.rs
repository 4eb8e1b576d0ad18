//! Sequence-level modelling of segment symbols: one HMM per action, the
//! per-action likelihoods as a feature vector, and a linear SVM on top.

mod hmm;
mod svm;

pub use hmm::{
    baum_welch, baum_welch_from, forward_log_likelihood, penalized_objective, BaumWelchResult,
    HmmConfig, HmmModel,
};
pub use svm::{hinge_objective, svm_predict, train_svm, SvmConfig, SvmModel, SvmTrainReport};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Divide each log-likelihood by the sequence length.
    pub normalize: bool,
    /// Lower bound applied to every feature.
    pub floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            floor: -50.0,
        }
    }
}

pub fn build_features(models: &[HmmModel], seq: &[usize], cfg: &FeatureConfig) -> Vec<f64> {
    let len = if cfg.normalize { seq.len().max(1) as f64 } else { 1.0 };
    models
        .iter()
        .map(|m| (forward_log_likelihood(m, seq) / len).max(cfg.floor))
        .collect()
}

/// One row of the symbol-sequence interchange file.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolRecord {
    pub sample_id: String,
    pub label: Option<String>,
    pub symbols: Vec<usize>,
}

/// CSV rows `sample_id,label,s1;s2;...`, no header.
pub fn write_symbol_csv(path: &Path, records: &[SymbolRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    for r in records {
        let symbols: Vec<String> = r.symbols.iter().map(|s| s.to_string()).collect();
        w.write_record([
            r.sample_id.as_str(),
            r.label.as_deref().unwrap_or(""),
            &symbols.join(";"),
        ])
        .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_symbol_csv(path: &Path) -> Result<Vec<SymbolRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        if rec.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", rec.len())));
        }
        let symbols = if rec[2].is_empty() {
            Vec::new()
        } else {
            rec[2]
                .split(';')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(format!("bad symbol list: {e}")))?
        };
        out.push(SymbolRecord {
            sample_id: rec[0].to_string(),
            label: (!rec[1].is_empty()).then(|| rec[1].to_string()),
            symbols,
        });
    }
    Ok(out)
}

/// Diagnostic dump: header `sample_id,label,<class names...>` then one row
/// per sample.
pub fn write_features_csv(
    path: &Path,
    class_names: &[String],
    rows: &[(String, Option<String>, Vec<f64>)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut header = vec!["sample_id".to_string(), "label".to_string()];
    header.extend(class_names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
    for (id, label, f) in rows {
        let mut rec = vec![id.clone(), label.clone().unwrap_or_default()];
        rec.extend(f.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_chain(rng: &mut ChaCha8Rng, a: &[[f64; 3]; 3], len: usize) -> Vec<usize> {
        let mut s = vec![rng.random_range(0..3)];
        while s.len() < len {
            let row = a[*s.last().unwrap()];
            let u: f64 = rng.random();
            let next = if u < row[0] {
                0
            } else if u < row[0] + row[1] {
                1
            } else {
                2
            };
            s.push(next);
        }
        s
    }

    #[test]
    fn disjoint_support_prefers_own_model() {
        let cfg = HmmConfig::default();
        let a = baum_welch(&[vec![0, 1, 0, 1, 0]], 4, &cfg).unwrap().model;
        let b = baum_welch(&[vec![2, 3, 3, 2, 3]], 4, &cfg).unwrap().model;
        let f = build_features(&[a, b], &[0, 1, 0], &FeatureConfig::default());
        assert_eq!(f.len(), 2);
        assert!(f[0] > f[1]);
        assert!(f.iter().all(|v| v.is_finite() && *v >= -50.0));
    }

    #[test]
    fn identical_models_give_constant_features() {
        let m = HmmModel::identity(3);
        let f = build_features(&[m.clone(), m.clone(), m], &[0, 2, 1, 1], &FeatureConfig::default());
        assert!(f.iter().all(|&v| v == f[0]));
    }

    #[test]
    fn floor_applies_to_impossible_sequences() {
        let mut m = HmmModel::identity(2);
        m.pi = vec![1.0, 0.0];
        let f = build_features(&[m], &[1, 1], &FeatureConfig::default());
        assert_eq!(f, vec![-50.0]);
    }

    #[test]
    fn two_markov_chains_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let chains = [
            [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]],
            [[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]],
        ];
        let make = |rng: &mut ChaCha8Rng| -> Vec<Vec<Vec<usize>>> {
            chains
                .iter()
                .map(|a| (0..50).map(|_| sample_chain(rng, a, 10)).collect())
                .collect()
        };
        let train = make(&mut rng);
        let test = make(&mut rng);
        let hmms: Vec<HmmModel> = train
            .iter()
            .map(|seqs| baum_welch(seqs, 3, &HmmConfig::default()).unwrap().model)
            .collect();
        let fc = FeatureConfig::default();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (c, seqs) in train.iter().enumerate() {
            for s in seqs {
                xs.push(build_features(&hmms, s, &fc));
                ys.push(c);
            }
        }
        let (svm, _) = train_svm(&xs, &ys, 2, &SvmConfig::default(), 0).unwrap();
        let mut correct = 0;
        for (c, seqs) in test.iter().enumerate() {
            for s in seqs {
                correct += usize::from(svm_predict(&svm, &build_features(&hmms, s, &fc)).unwrap() == c);
            }
        }
        assert!(correct as f64 / 100.0 >= 0.95, "accuracy {correct}/100");
    }

    #[test]
    fn symbol_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let recs = vec![
            SymbolRecord {
                sample_id: "a1".into(),
                label: Some("wave".into()),
                symbols: vec![3, 0, 2],
            },
            SymbolRecord {
                sample_id: "a2".into(),
                label: None,
                symbols: vec![1],
            },
        ];
        write_symbol_csv(&p, &recs).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().next().unwrap(), "a1,wave,3;0;2");
        assert_eq!(read_symbol_csv(&p).unwrap(), recs);
        std::fs::write(&p, "x,y,1;z\n").unwrap();
        let err = read_symbol_csv(&p).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
