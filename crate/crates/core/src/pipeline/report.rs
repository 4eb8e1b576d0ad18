use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePrediction {
    pub sample_id: String,
    pub truth: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub accuracy: f64,
    /// Zero for a class that was never predicted.
    pub precision: Vec<f64>,
    /// Zero for a class with no samples.
    pub recall: Vec<f64>,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<SamplePrediction>,
    /// Seconds per stage.
    pub timings: Vec<(String, f64)>,
}

impl EvalReport {
    /// Aggregate `(sample_id, truth, predicted)` triples.
    pub fn from_predictions(class_names: Vec<String>, results: Vec<(String, usize, usize)>) -> Self {
        let k = class_names.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (_, t, p) in &results {
            confusion[*t][*p] += 1;
        }
        let total = results.len();
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = (0..k)
            .map(|c| ratio(confusion[c][c], (0..k).map(|t| confusion[t][c]).sum()))
            .collect();
        let recall = (0..k)
            .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
            .collect();
        let predictions = results
            .into_iter()
            .map(|(sample_id, t, p)| SamplePrediction {
                sample_id,
                truth: class_names[t].clone(),
                predicted: class_names[p].clone(),
            })
            .collect();
        Self {
            accuracy: ratio(correct, total),
            precision,
            recall,
            confusion,
            predictions,
            class_names,
            timings: Vec::new(),
        }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|c| format!("c{c}")).collect()
    }

    #[test]
    fn perfect_predictor_is_diagonal() {
        let res: Vec<_> = (0..30).map(|i| (format!("s{i}"), i % 3, i % 3)).collect();
        let r = EvalReport::from_predictions(names(3), res);
        assert_eq!(r.accuracy, 1.0);
        for t in 0..3 {
            for p in 0..3 {
                assert_eq!(r.confusion[t][p], if t == p { 10 } else { 0 });
            }
        }
        assert_eq!(r.precision, vec![1.0; 3]);
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let res: Vec<_> = (0..40).map(|i| (format!("s{i}"), i % 4, 2)).collect();
        let r = EvalReport::from_predictions(names(4), res);
        assert_eq!(r.accuracy, 0.25);
        let trace: usize = (0..4).map(|c| r.confusion[c][c]).sum();
        assert_eq!(r.accuracy, trace as f64 / r.total() as f64);
        for c in 0..4 {
            assert_eq!(r.confusion[c].iter().sum::<usize>(), 10);
        }
        assert_eq!(r.precision[0], 0.0);
        assert_eq!(r.recall[2], 1.0);
    }
}
