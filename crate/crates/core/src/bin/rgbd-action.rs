use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use rgbd_action::data::{generate_synthetic, write_sample, Manifest, MotionTemplate, SynthOptions};
use rgbd_action::dmm::write_ppm;
use rgbd_action::pipeline::{
    evaluate, fit_clusters, load_model, predict_sample, save_model, segment_hods, segment_images,
    train_pipeline, ManifestSource, PipelineConfig, SampleSource,
};
use rgbd_action::segmentation::segment_sequence;
use rgbd_action::temporal::{write_features_csv, write_symbol_csv, SymbolRecord};
use rgbd_action::{Error, Result};

const VIEW_NAMES: [&str; 3] = ["front", "side", "top"];

#[derive(Parser)]
#[command(name = "rgbd-action", version, about = "Skeleton/depth action recognition")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set igmm.iterations=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Master seed; overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArg {
    /// Manifest CSV: `sample_id,skeleton,depth[,label]`.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic samples and a manifest.
    SynthGen {
        #[arg(long)]
        out: PathBuf,
        /// Template ids (0 sweep-out, 1 sweep-in, 2 both-arms-up, 3 punch, 4 kick, 5 bend).
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        templates: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 40)]
        frames: usize,
        /// Joint jitter, meters.
        #[arg(long, default_value_t = 0.002)]
        noise: f64,
        /// Prefix for sample ids.
        #[arg(long, default_value = "")]
        prefix: String,
        /// Write the manifest without labels.
        #[arg(long)]
        unlabeled: bool,
    },
    /// Key frames and segment boundaries per sample.
    Segment {
        #[command(flatten)]
        input: ManifestArg,
        /// Also write `sample_id,frame,entropy` rows to this file.
        #[arg(long)]
        dump_entropy: Option<PathBuf>,
    },
    /// HOD descriptor per segment.
    Hod {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the IGMM on all segments and write per-sample symbol sequences.
    Cluster {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump pseudo-colored DMMs of every segment as PPM images.
    Dmm {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        out: PathBuf,
        /// Only this sample.
        #[arg(long)]
        sample: Option<String>,
    },
    /// Train the full pipeline and save a model archive.
    Train {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        model: PathBuf,
        /// Write the training symbol sequences here.
        #[arg(long)]
        symbols: Option<PathBuf>,
    },
    /// Predict every sample of a manifest; labels are ignored.
    Predict {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        model: PathBuf,
        /// Write the per-class HMM likelihood features here.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Accuracy, per-class precision/recall and confusion on a labeled manifest.
    Evaluate {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Serialize)]
struct SynthSummary {
    manifest: String,
    samples: usize,
}

#[derive(Serialize)]
struct ClusterSummary {
    segments: usize,
    clusters: usize,
    alpha: f64,
    log_score: f64,
    pca_dim: usize,
}

#[derive(Serialize)]
struct TrainSummary {
    model: String,
    samples: usize,
    segments: usize,
    classifier_examples: usize,
    symbols: usize,
    classifier_train_accuracy: f64,
    training_accuracy: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn source(path: &Path, cfg: &PipelineConfig) -> Result<ManifestSource> {
    let manifest = Manifest::load(path)?;
    if manifest.is_empty() {
        return Err(Error::invalid(format!("{}: manifest is empty", path.display())));
    }
    Ok(ManifestSource {
        manifest,
        joint_count: cfg.joint_count,
    })
}

fn print_toml<T: Serialize>(value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::invalid(e.to_string()))?;
    print!("{text}");
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, e.into())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::SynthGen {
            out,
            templates,
            per_class,
            frames,
            noise,
            prefix,
            unlabeled,
        } => {
            let opts = SynthOptions {
                noise_sigma: noise,
                frames,
                camera: cfg.camera,
                ..SynthOptions::default()
            };
            let mut manifest = Manifest::default();
            for &t in &templates {
                let template = MotionTemplate::from_id(t)?;
                for i in 0..per_class {
                    let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add((t * 10_000 + i) as u64);
                    let id = format!("{prefix}{}_{i:03}", template.name());
                    let mut sample = generate_synthetic(template, &opts, seed, id)?;
                    if unlabeled {
                        sample.label = None;
                    }
                    manifest.entries.push(write_sample(&out, &sample)?);
                }
            }
            let path = out.join("manifest.csv");
            manifest.save(&path)?;
            info!("wrote {} samples to {}", manifest.len(), out.display());
            print_toml(&SynthSummary {
                manifest: path.display().to_string(),
                samples: manifest.len(),
            })
        }
        Command::Segment { input, dump_entropy } => {
            let src = source(&input.manifest, &cfg)?;
            let mut entropy = dump_entropy.as_deref().map(csv_writer).transpose()?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            writeln!(out, "sample_id,frames,key_frames,boundaries").map_err(|e| Error::io("<stdout>", e))?;
            for i in 0..src.len() {
                let sample = src.load(i)?;
                let id = &sample.sample_id;
                let trace = segment_sequence(&sample.skeleton, &cfg.segmentation).map_err(|e| e.in_stage("segment", id))?;
                writeln!(
                    out,
                    "{id},{},{},{}",
                    sample.skeleton.len(),
                    join(&trace.key_frames.keys),
                    join(&trace.boundaries.boundaries)
                )
                .map_err(|e| Error::io("<stdout>", e))?;
                if let (Some(w), Some(path)) = (entropy.as_mut(), dump_entropy.as_deref()) {
                    for (f, v) in trace.curve.values.iter().enumerate() {
                        w.write_record([id.clone(), f.to_string(), v.to_string()]).map_err(csv_err(path))?;
                    }
                }
            }
            if let (Some(mut w), Some(path)) = (entropy, dump_entropy.as_deref()) {
                w.flush().map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        }
        Command::Hod { input, out } => {
            let src = source(&input.manifest, &cfg)?;
            let mut w = csv_writer(&out)?;
            let mut rows = 0;
            for i in 0..src.len() {
                let sample = src.load(i)?;
                let id = &sample.sample_id;
                let (trace, hods) = segment_hods(&sample, &cfg).map_err(|e| e.in_stage("hod", id))?;
                for (k, ((first, last), h)) in trace.boundaries.segments().zip(&hods).enumerate() {
                    let mut rec = vec![id.clone(), k.to_string(), first.to_string(), last.to_string()];
                    rec.extend(h.iter().map(|v| v.to_string()));
                    w.write_record(&rec).map_err(csv_err(&out))?;
                    rows += 1;
                }
            }
            w.flush().map_err(|e| Error::io(&out, e))?;
            info!("wrote {rows} descriptors to {}", out.display());
            Ok(())
        }
        Command::Cluster { input, out } => {
            let src = source(&input.manifest, &cfg)?;
            let mut all = Vec::new();
            let mut owners = Vec::new();
            for i in 0..src.len() {
                let sample = src.load(i)?;
                let (_, hods) = segment_hods(&sample, &cfg).map_err(|e| e.in_stage("hod", &sample.sample_id))?;
                owners.push((sample.sample_id.clone(), sample.label.clone(), hods.len()));
                all.extend(hods);
            }
            let (pca, _, state) = fit_clusters(&all, &cfg)?;
            let mut records = Vec::with_capacity(owners.len());
            let mut next = 0;
            for (sample_id, label, n) in owners {
                records.push(SymbolRecord {
                    sample_id,
                    label,
                    symbols: state.assignments[next..next + n].to_vec(),
                });
                next += n;
            }
            write_symbol_csv(&out, &records)?;
            print_toml(&ClusterSummary {
                segments: all.len(),
                clusters: state.cluster_count(),
                alpha: state.alpha,
                log_score: state.log_score,
                pca_dim: pca.output_dim(),
            })
        }
        Command::Dmm { input, out, sample } => {
            let src = source(&input.manifest, &cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let mut written = 0;
            for i in 0..src.len() {
                if sample.as_ref().is_some_and(|s| *s != src.sample_id(i)) {
                    continue;
                }
                let smp = src.load(i)?;
                let id = &smp.sample_id;
                let trace = segment_sequence(&smp.skeleton, &cfg.segmentation).map_err(|e| e.in_stage("segment", id))?;
                for (k, span) in trace.boundaries.segments().enumerate() {
                    let images = segment_images(smp.depth.frames(), span, &cfg).map_err(|e| e.in_stage("dmm", id))?;
                    for (img, view) in images.iter().zip(VIEW_NAMES) {
                        write_ppm(&out.join(format!("{id}_seg{k:02}_{view}.ppm")), img)?;
                        written += 1;
                    }
                }
            }
            if written == 0 {
                return Err(Error::invalid("no matching sample"));
            }
            info!("wrote {written} images to {}", out.display());
            Ok(())
        }
        Command::Train { input, model, symbols } => {
            let src = source(&input.manifest, &cfg)?;
            let (trained, report) = train_pipeline(&src, &cfg)?;
            save_model(&trained, &model)?;
            if let Some(path) = symbols {
                write_symbol_csv(&path, &report.encodings)?;
            }
            print_toml(&TrainSummary {
                model: model.display().to_string(),
                samples: report.sample_count,
                segments: report.segment_count,
                classifier_examples: report.classifier_examples,
                symbols: report.symbol_count,
                classifier_train_accuracy: report.classifier_train_accuracy,
                training_accuracy: report.training_accuracy,
            })
        }
        Command::Predict { input, model, features } => {
            let trained = load_model(&model)?;
            let src = source(&input.manifest, &trained.config)?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            let mut rows = Vec::new();
            writeln!(out, "sample_id,predicted,symbols").map_err(|e| Error::io("<stdout>", e))?;
            for i in 0..src.len() {
                let sample = src.load(i)?;
                let p = predict_sample(&trained, &sample)?;
                writeln!(out, "{},{},{}", p.sample_id, p.class_name, join(&p.symbols)).map_err(|e| Error::io("<stdout>", e))?;
                rows.push((p.sample_id, None, p.features));
            }
            if let Some(path) = features {
                write_features_csv(&path, &trained.class_names, &rows)?;
            }
            Ok(())
        }
        Command::Evaluate { input, model } => {
            let trained = load_model(&model)?;
            let src = source(&input.manifest, &trained.config)?;
            let report = evaluate(&trained, &src)?;
            info!("accuracy {:.4} on {} samples", report.accuracy, report.total());
            print_toml(&report)
        }
    }
}
