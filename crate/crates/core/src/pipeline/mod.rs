//! End-to-end training, prediction and evaluation.
//!
//! Training runs, in order: rotation augmentation of each training sample,
//! key-frame segmentation of the original skeleton, HOD per segment, PCA and
//! IGMM clustering of the HODs, DMM pseudo-color features per segment and
//! view (for the original and every rotated copy, which inherit the symbol
//! of the segment they were cut from), the three-view segment classifier,
//! re-encoding of every training sample into a symbol sequence, one HMM per
//! action, and finally the SVM on HMM likelihood features.
//!
//! Prediction never augments: segment, classify each segment, score the
//! symbol sequence under every action HMM, and let the SVM decide.

mod archive;
mod config;
mod model;
mod report;
mod source;

pub use archive::{Archive, Decoder, Encoder, FORMAT_VERSION, MAGIC};
pub use config::{AugmentConfig, HmmTrainSource, PipelineConfig};
pub use model::{load_model, save_model};
pub use report::EvalReport;
pub use source::{ManifestSource, SampleSource, SyntheticItem, SyntheticSource};

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::data::{rotate_sample, ActionSample, DepthFrame};
use crate::dmm::{
    classify_features, pseudo_color, segment_dmms, segment_features, train_on_subset, train_segment_classifier,
    PseudoColorImage, SegmentClassifierModel,
};
use crate::error::{Error, Result};
use crate::hod::compute_hod;
use crate::igmm::{igmm_fit, reduce_dim, ClusterModel, IgmmState, NiwPrior, PcaModel};
use crate::segmentation::{segment_sequence, SegmentationTrace};
use crate::temporal::{
    baum_welch, build_features, svm_predict, train_svm, HmmModel, SvmModel, SymbolRecord,
};

/// Three per-view feature vectors of one segment (front, side, top).
pub type ViewFeatures = [Vec<f64>; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub config: PipelineConfig,
    pub class_names: Vec<String>,
    pub pca: PcaModel,
    pub clusters: ClusterModel,
    pub classifier: SegmentClassifierModel,
    /// One per class, in `class_names` order.
    pub hmms: Vec<HmmModel>,
    pub svm: SvmModel,
}

impl TrainedPipeline {
    pub fn symbol_count(&self) -> usize {
        self.classifier.classes
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub sample_count: usize,
    pub segment_count: usize,
    /// Classifier training examples, originals plus rotated copies.
    pub classifier_examples: usize,
    pub symbol_count: usize,
    pub igmm: IgmmState,
    pub classifier_train_accuracy: f64,
    /// SVM accuracy on the (unaugmented) training samples.
    pub training_accuracy: f64,
    /// Symbol sequences the HMMs were trained on.
    pub encodings: Vec<SymbolRecord>,
    pub timings: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sample_id: String,
    pub class_id: usize,
    pub class_name: String,
    pub segments: Vec<(usize, usize)>,
    pub symbols: Vec<usize>,
    /// Averaged three-view posterior of each segment.
    pub segment_probabilities: Vec<Vec<f64>>,
    pub features: Vec<f64>,
}

struct Timer {
    entries: Vec<(String, f64)>,
    last: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            entries: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let secs = self.last.elapsed().as_secs_f64();
        info!("{stage}: {secs:.3}s");
        self.entries.push((stage.to_string(), secs));
        self.last = Instant::now();
    }
}

/// Segmentation of the skeleton and one HOD per segment.
pub fn segment_hods(
    sample: &ActionSample,
    cfg: &PipelineConfig,
) -> Result<(SegmentationTrace, Vec<Vec<f64>>)> {
    let trace = segment_sequence(&sample.skeleton, &cfg.segmentation)?;
    let frames = sample.skeleton.frames();
    let hods = trace
        .boundaries
        .segments()
        .map(|(s, e)| compute_hod(&frames[s..=e], &cfg.hod).map(|h| h.values))
        .collect::<Result<_>>()?;
    Ok((trace, hods))
}

/// Pseudo-colored DMMs of the three views for frames `first..=last`.
pub fn segment_images(
    frames: &[DepthFrame],
    (first, last): (usize, usize),
    cfg: &PipelineConfig,
) -> Result<[PseudoColorImage; 3]> {
    let dmms = segment_dmms(&frames[first..=last], &cfg.dmm)?;
    Ok(dmms.map(|g| pseudo_color(&g, &cfg.dmm.color)))
}

fn segment_view_features(
    frames: &[DepthFrame],
    span: (usize, usize),
    cfg: &PipelineConfig,
) -> Result<ViewFeatures> {
    Ok(segment_features(&segment_images(frames, span, cfg)?, cfg.classifier.size, cfg.classifier.crop))
}

/// PCA projection of the descriptors, the data-driven prior and the IGMM fit.
pub fn fit_clusters(
    hods: &[Vec<f64>],
    cfg: &PipelineConfig,
) -> Result<(PcaModel, NiwPrior, IgmmState)> {
    if hods.len() < 2 {
        return Err(Error::invalid(format!(
            "clustering needs at least 2 segments, got {}",
            hods.len()
        )));
    }
    let d = cfg.igmm.pca_dim.min(hods.len() - 1).min(hods[0].len());
    let (projected, pca) = reduce_dim(hods, d)?;
    let prior = cfg.igmm.prior.build(&projected)?;
    let state = igmm_fit(&projected, &prior, &cfg.igmm, cfg.seed)?;
    Ok((pca, prior, state))
}

/// Per-sample training artifacts.
struct SampleWork {
    sample_id: String,
    class: usize,
    hods: Vec<Vec<f64>>,
    /// Per segment, unrotated.
    original: Vec<ViewFeatures>,
    /// Per rotated copy, per segment.
    rotated: Vec<Vec<ViewFeatures>>,
}

fn prepare_sample(
    source: &dyn SampleSource,
    index: usize,
    class: usize,
    cfg: &PipelineConfig,
) -> Result<SampleWork> {
    let id = source.sample_id(index);
    let sample = source.load(index).map_err(|e| e.in_stage("load", &id))?;
    let (trace, hods) = segment_hods(&sample, cfg).map_err(|e| e.in_stage("segment", &id))?;
    let spans: Vec<(usize, usize)> = trace.boundaries.segments().collect();
    let dmm_err = |e: Error| e.in_stage("dmm", &id);
    let frames = sample.depth.frames();
    let original = spans
        .iter()
        .map(|&s| segment_view_features(frames, s, cfg))
        .collect::<Result<_>>()
        .map_err(dmm_err)?;
    let mut rotated = Vec::new();
    for spec in cfg.augment.rotations() {
        if spec.yaw_degrees == 0.0 && spec.pitch_degrees == 0.0 {
            continue;
        }
        let copy = rotate_sample(&sample, &spec, &cfg.camera).map_err(|e| e.in_stage("augment", &id))?;
        let feats = spans
            .iter()
            .map(|&s| segment_view_features(copy.depth.frames(), s, cfg))
            .collect::<Result<_>>()
            .map_err(dmm_err)?;
        rotated.push(feats);
    }
    Ok(SampleWork {
        sample_id: id,
        class,
        hods,
        original,
        rotated,
    })
}

/// Class-stratified fold index per sample: the j-th sample of each class
/// goes to fold `j % folds`.
fn fold_of(work: &[SampleWork], folds: usize) -> Vec<usize> {
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    work.iter()
        .map(|w| {
            let j = seen.entry(w.class).or_insert(0);
            *j += 1;
            (*j - 1) % folds
        })
        .collect()
}

fn encode_features(model: &SegmentClassifierModel, feats: &[ViewFeatures]) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut symbols = Vec::with_capacity(feats.len());
    let mut probs = Vec::with_capacity(feats.len());
    for f in feats {
        let (s, p) = classify_features(model, f)?;
        symbols.push(s);
        probs.push(p);
    }
    Ok((symbols, probs))
}

pub fn train_pipeline(
    source: &dyn SampleSource,
    cfg: &PipelineConfig,
) -> Result<(TrainedPipeline, TrainReport)> {
    cfg.validate()?;
    let n = source.len();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        labels.push(source.label(i).ok_or_else(|| {
            Error::invalid("training samples must be labeled").in_stage("load", source.sample_id(i))
        })?);
    }
    let class_names: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if class_names.len() < 2 {
        return Err(Error::invalid(format!(
            "training needs at least 2 classes, found {}",
            class_names.len()
        )));
    }
    let class_of = |l: &String| class_names.iter().position(|c| c == l).expect("label collected");
    let mut timer = Timer::new();

    let work: Vec<SampleWork> = (0..n)
        .into_par_iter()
        .map(|i| prepare_sample(source, i, class_of(&labels[i]), cfg))
        .collect::<Result<_>>()?;
    timer.lap("augment+segment+hod+dmm");

    let hods: Vec<Vec<f64>> = work.iter().flat_map(|w| w.hods.iter().cloned()).collect();
    let (pca, prior, state) = fit_clusters(&hods, cfg).map_err(|e| e.in_stage("igmm", "<all>"))?;
    let k = state.cluster_count();
    info!("igmm: {} segments, {} clusters, best sweep {}", hods.len(), k, state.iteration);
    if k < 2 {
        return Err(Error::numerical(
            "clustering produced a single symbol; the segment classifier needs at least 2",
        )
        .in_stage("igmm", "<all>"));
    }
    let clusters = ClusterModel::from_state(&state, &prior)?;
    timer.lap("pca+igmm");

    // segment symbols in the same order as `hods`
    let mut sample_symbols = Vec::with_capacity(work.len());
    let mut offset = 0;
    for w in &work {
        sample_symbols.push(state.assignments[offset..offset + w.hods.len()].to_vec());
        offset += w.hods.len();
    }
    let mut examples = Vec::new();
    let mut example_labels = Vec::new();
    for (w, syms) in work.iter().zip(&sample_symbols) {
        for copy in std::iter::once(&w.original).chain(&w.rotated) {
            examples.extend(copy.iter().cloned());
            example_labels.extend(syms.iter().copied());
        }
    }
    let (classifier, clf_report) = train_segment_classifier(
        &examples,
        &example_labels,
        k,
        &cfg.classifier,
        cfg.seed.wrapping_add(1),
    )
    .map_err(|e| e.in_stage("classifier", "<all>"))?;
    drop(examples);
    timer.lap("classifier");

    let encoders = match cfg.hmm_train_source {
        HmmTrainSource::Classifier if cfg.encode_folds >= 2 => {
            let folds = fold_of(&work, cfg.encode_folds);
            let fold_models = (0..cfg.encode_folds)
                .map(|f| {
                    let mut rows = Vec::new();
                    let mut labels = Vec::new();
                    for ((w, syms), _) in work.iter().zip(&sample_symbols).zip(&folds).filter(|(_, &g)| g != f) {
                        for copy in std::iter::once(&w.original).chain(&w.rotated) {
                            rows.extend(copy.iter());
                            labels.extend(syms.iter().copied());
                        }
                    }
                    let seed = cfg.seed.wrapping_add(100 + f as u64);
                    train_on_subset(&rows, &labels, k, &cfg.classifier, seed).map(|r| r.0)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_stage("classifier", "<folds>"))?;
            Some((folds, fold_models))
        }
        _ => None,
    };
    timer.lap("fold classifiers");

    let encodings: Vec<SymbolRecord> = match cfg.hmm_train_source {
        HmmTrainSource::Classifier => work
            .par_iter()
            .enumerate()
            .map(|(i, w)| {
                let model = encoders.as_ref().map_or(&classifier, |(folds, models)| &models[folds[i]]);
                let (symbols, _) =
                    encode_features(model, &w.original).map_err(|e| e.in_stage("encode", &w.sample_id))?;
                Ok(SymbolRecord {
                    sample_id: w.sample_id.clone(),
                    label: Some(class_names[w.class].clone()),
                    symbols,
                })
            })
            .collect::<Result<_>>()?,
        HmmTrainSource::Igmm => work
            .iter()
            .zip(&sample_symbols)
            .map(|(w, s)| SymbolRecord {
                sample_id: w.sample_id.clone(),
                label: Some(class_names[w.class].clone()),
                symbols: s.clone(),
            })
            .collect(),
    };
    let hmms: Vec<HmmModel> = (0..class_names.len())
        .into_par_iter()
        .map(|c| {
            let seqs: Vec<Vec<usize>> = work
                .iter()
                .zip(&encodings)
                .filter(|(w, _)| w.class == c)
                .map(|(_, e)| e.symbols.clone())
                .collect();
            baum_welch(&seqs, k, &cfg.hmm)
                .map(|r| r.model)
                .map_err(|e| e.in_stage("hmm", class_names[c].clone()))
        })
        .collect::<Result<_>>()?;
    timer.lap("encode+hmm");

    let features: Vec<Vec<f64>> = encodings
        .iter()
        .map(|e| build_features(&hmms, &e.symbols, &cfg.features))
        .collect();
    let classes: Vec<usize> = work.iter().map(|w| w.class).collect();
    let (svm, _) = train_svm(&features, &classes, class_names.len(), &cfg.svm, cfg.seed.wrapping_add(2))
        .map_err(|e| e.in_stage("svm", "<all>"))?;
    let correct = features
        .iter()
        .zip(&classes)
        .filter(|(f, &c)| svm_predict(&svm, f).map(|p| p == c).unwrap_or(false))
        .count();
    timer.lap("svm");

    let report = TrainReport {
        sample_count: n,
        segment_count: hods.len(),
        classifier_examples: example_labels.len(),
        symbol_count: k,
        igmm: state,
        classifier_train_accuracy: clf_report.train_accuracy,
        training_accuracy: correct as f64 / n as f64,
        encodings,
        timings: timer.entries,
    };
    let model = TrainedPipeline {
        config: cfg.clone(),
        class_names,
        pca,
        clusters,
        classifier,
        hmms,
        svm,
    };
    Ok((model, report))
}

/// Classify one sample. Any label on the sample is ignored.
pub fn predict_sample(model: &TrainedPipeline, sample: &ActionSample) -> Result<Prediction> {
    let cfg = &model.config;
    let id = &sample.sample_id;
    let trace = segment_sequence(&sample.skeleton, &cfg.segmentation).map_err(|e| e.in_stage("segment", id))?;
    let segments: Vec<(usize, usize)> = trace.boundaries.segments().collect();
    let feats: Vec<ViewFeatures> = segments
        .iter()
        .map(|&s| segment_view_features(sample.depth.frames(), s, cfg))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("dmm", id))?;
    let (symbols, segment_probabilities) =
        encode_features(&model.classifier, &feats).map_err(|e| e.in_stage("classify", id))?;
    let features = build_features(&model.hmms, &symbols, &cfg.features);
    let class_id = svm_predict(&model.svm, &features).map_err(|e| e.in_stage("svm", id))?;
    Ok(Prediction {
        sample_id: id.clone(),
        class_id,
        class_name: model.class_names[class_id].clone(),
        segments,
        symbols,
        segment_probabilities,
        features,
    })
}

/// Predict every sample of a labeled source and aggregate.
pub fn evaluate(model: &TrainedPipeline, source: &dyn SampleSource) -> Result<EvalReport> {
    if source.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let start = Instant::now();
    let results: Vec<(String, usize, usize)> = (0..source.len())
        .into_par_iter()
        .map(|i| {
            let id = source.sample_id(i);
            let label = source
                .label(i)
                .ok_or_else(|| Error::invalid("evaluation samples must be labeled").in_stage("load", &id))?;
            let truth = model.class_id(&label).ok_or_else(|| {
                Error::invalid(format!("label `{label}` was not seen in training")).in_stage("load", &id)
            })?;
            let sample = source.load(i).map_err(|e| e.in_stage("load", &id))?;
            let p = predict_sample(model, &sample)?;
            Ok((id, truth, p.class_id))
        })
        .collect::<Result<_>>()?;
    let mut report = EvalReport::from_predictions(model.class_names.clone(), results);
    let secs = start.elapsed().as_secs_f64();
    info!("predict: {} samples in {secs:.3}s", source.len());
    report.timings.push(("predict".into(), secs));
    Ok(report)
}
