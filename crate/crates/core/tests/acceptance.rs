//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rgbd_action::data::{generate_synthetic, MotionTemplate, SkeletonFrame, SkeletonSequence, SynthOptions};
use rgbd_action::dmm::{
    color_channel, compute_dmm, pseudo_color, traditional_dmm, ColorConfig, Grid, Modulation, SoftmaxRegression,
};
use rgbd_action::igmm::{crp_seating, igmm_fit, IgmmConfig, PriorConfig};
use rgbd_action::pipeline::{
    evaluate, predict_sample, train_pipeline, PipelineConfig, SyntheticSource, TrainedPipeline,
};
use rgbd_action::segmentation::{
    entropy, entropy_curve, extract_key_frames, key_frames_from_curve, motion_histogram, split_segments,
    MotionHistogram, MotionHistogramConfig, SegmentationConfig,
};
use rgbd_action::temporal::{
    baum_welch, forward_log_likelihood, svm_predict, train_svm, HmmConfig, HmmModel, SvmConfig,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

// ---------------------------------------------------------------------------
// 1. entropy and segmentation

fn random_frame(rng: &mut ChaCha8Rng, joints: usize, index: usize) -> SkeletonFrame {
    SkeletonFrame {
        joints: (0..joints)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(1.0..4.0)])
            .collect(),
        index,
    }
}

/// Random-walk skeleton with rest phases of random length.
fn fuzz_sequence(rng: &mut ChaCha8Rng) -> SkeletonSequence {
    let joints = rng.random_range(5..=20);
    let len = rng.random_range(8..=80);
    let mut frames = vec![random_frame(rng, joints, 0)];
    let mut moving = true;
    for t in 1..len {
        if rng.random_bool(0.15) {
            moving = !moving;
        }
        let mut f = frames[t - 1].clone();
        f.index = t;
        for p in &mut f.joints {
            let step = if moving { 0.05 } else { 0.001 };
            for c in p.iter_mut() {
                *c += rng.random_range(-step..step);
            }
        }
        frames.push(f);
    }
    SkeletonSequence::new(frames).unwrap()
}

fn segmentation_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = MotionHistogramConfig::default();
    let k_max = cfg.total_bins();

    for _ in 0..200 {
        let j = rng.random_range(2..=25);
        let a = random_frame(&mut rng, j, 0);
        let b = random_frame(&mut rng, j, 1);
        let h = motion_histogram(&a, &b, &cfg).unwrap();
        let sum: f64 = h.probabilities().iter().sum();
        check((sum - 1.0).abs() <= 1e-12, || format!("sum p = {sum}"))?;
        let eta = entropy(&h);
        check((0.0..=(k_max as f64).log2()).contains(&eta), || format!("entropy {eta} outside [0, log2 {k_max}]"))?;
    }

    let j = 20;
    let mut peaked = vec![0u32; k_max];
    peaked[7] = 3 * j as u32;
    let eta = entropy(&MotionHistogram::from_counts(peaked, j).unwrap());
    check(eta == 0.0, || format!("peaked histogram entropy {eta}"))?;
    let uniform = MotionHistogram::from_counts(vec![1; 3 * j], j).unwrap();
    let eta = entropy(&uniform);
    let want = ((3 * j) as f64).log2();
    check((eta - want).abs() <= 1e-12, || format!("uniform entropy {eta} vs {want}"))?;

    let seg = SegmentationConfig::default();
    let mut total_keys = 0;
    for n in 0..100 {
        let seq = fuzz_sequence(&mut rng);
        let a = extract_key_frames(&seq, &seg.histogram, &seg.saliency).unwrap();
        let b = extract_key_frames(&seq, &seg.histogram, &seg.saliency).unwrap();
        check(a.keys == b.keys && a.weights == b.weights, || format!("sequence {n}: key frames not deterministic"))?;

        // independent scan for strict local maxima
        let curve = entropy_curve(&seq, &seg.histogram).unwrap();
        let v = &curve.values;
        let peaks: Vec<usize> = (1..v.len() - 1).filter(|&t| v[t] > v[t - 1] && v[t] > v[t + 1]).collect();
        check(peaks == a.initial, || format!("sequence {n}: candidate peaks differ"))?;
        check(a.keys.iter().all(|k| a.initial.contains(k)), || format!("sequence {n}: key frame is not a peak"))?;

        let unmerged = split_segments(seq.len(), &a, 1);
        check(unmerged.segment_count() == a.keys.len() + 1, || {
            format!("sequence {n}: {} keys but {} segments", a.keys.len(), unmerged.segment_count())
        })?;
        total_keys += a.keys.len();

        let merged = split_segments(seq.len(), &a, seg.min_segment_frames);
        if seq.len() >= seg.min_segment_frames {
            check(merged.segments().all(|(s, e)| e - s + 1 >= seg.min_segment_frames), || {
                format!("sequence {n}: short segment survived merging")
            })?;
        }
        let again = key_frames_from_curve(&curve, &seg.saliency).unwrap();
        check(again.keys == a.keys, || format!("sequence {n}: curve route disagrees"))?;
    }
    check(total_keys > 50, || format!("fuzz produced only {total_keys} key frames"))?;
    within(Duration::from_secs(10), start)?;
    Ok(format!("100 fuzzed sequences, {total_keys} key frames, {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------------------
// 2. IGMM recovery and CRP

fn igmm_suite() -> Outcome {
    let start = Instant::now();
    let cfg = IgmmConfig {
        iterations: 200,
        burn_in: 100,
        ..IgmmConfig::default()
    };
    let mut recovered = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for blob in 0..2 {
            for _ in 0..50 {
                let cx = 20.0 * blob as f64;
                data.push(vec![cx + noise.sample(&mut rng), noise.sample(&mut rng)]);
                truth.push(blob);
            }
        }
        let prior = PriorConfig::default().build(&data).unwrap();
        let state = igmm_fit(&data, &prior, &cfg, seed).unwrap();
        let a = &state.assignments;
        let consistent = (0..data.len()).all(|i| (a[i] == a[0]) == (truth[i] == truth[0]));
        if state.cluster_count() == 2 && consistent {
            recovered += 1;
        }
    }
    check(recovered >= 19, || format!("recovered K=2 in {recovered}/20 runs"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 100_000;
    let n = 12;
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 1.0, 3.0] {
        let mut opened = vec![0usize; n];
        for _ in 0..draws {
            let seats = crp_seating(alpha, n, &mut rng);
            let mut tables = 0;
            for (i, &s) in seats.iter().enumerate() {
                if s == tables {
                    opened[i] += 1;
                    tables += 1;
                }
            }
        }
        for (i, &o) in opened.iter().enumerate() {
            let want = alpha / (i as f64 + alpha);
            let got = o as f64 / draws as f64;
            worst = worst.max((got - want).abs());
            check((got - want).abs() <= 0.02, || {
                format!("alpha {alpha}, customer {}: new-table rate {got:.4} vs {want:.4}", i + 1)
            })?;
        }
    }
    within(Duration::from_secs(120), start)?;
    Ok(format!("{recovered}/20 runs recovered K=2; CRP max deviation {worst:.4}; {:.1?}", start.elapsed()))
}

// ---------------------------------------------------------------------------
// 3. DMM and pseudo-coloring

fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Grid {
    Grid::from_vec(w, h, (0..w * h).map(|_| rng.random_range(0..4) as f64).collect()).unwrap()
}

fn dmm_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..100 {
        let (w, h) = (rng.random_range(1..12), rng.random_range(1..12));
        let m = rng.random_range(1..10);
        let maps: Vec<Grid> = (0..m).map(|_| random_grid(&mut rng, w, h)).collect();
        let got = compute_dmm(&maps, false).unwrap();
        // brute force: first map plus |map[k+1] - map[k]| for 1-based k >= 2
        let mut want = maps[0].data.clone();
        for k in 2..m {
            for (p, v) in want.iter_mut().enumerate() {
                *v += (maps[k].data[p] - maps[k - 1].data[p]).abs();
            }
        }
        check(got.data == want, || format!("segment {n}: DMM differs from accumulation oracle"))?;
    }

    // a one-way motion: blob moving right then a pause
    let frames: Vec<Grid> = (0..7)
        .map(|t| {
            let mut g = Grid::zeros(10, 3);
            g.set(t.min(5) + 2, 1, 1.0);
            g.set(t.min(5), 0, 2.0);
            g
        })
        .collect();
    let reversed: Vec<Grid> = frames.iter().rev().cloned().collect();
    let fwd = compute_dmm(&frames, false).unwrap();
    let bwd = compute_dmm(&reversed, false).unwrap();
    check(fwd.l1_distance(&bwd) > 0.0, || "modified DMM is blind to reversal".into())?;
    let t_fwd = traditional_dmm(&frames[1..]).unwrap();
    let t_bwd = traditional_dmm(&reversed[..reversed.len() - 1]).unwrap();
    check(t_fwd.l1_distance(&t_bwd) == 0.0, || "traditional DMM changed under reversal".into())?;

    let cfg = ColorConfig::default();
    for n in 0..100 {
        let (w, h) = (rng.random_range(2..16), rng.random_range(2..16));
        let g = Grid::from_vec(w, h, (0..w * h).map(|_| rng.random_range(0.0..50.0)).collect()).unwrap();
        let img = pseudo_color(&g, &cfg);
        for ch in &img.channels {
            check(ch.iter().all(|&c| (0.0..=1.0).contains(&c)), || format!("image {n}: channel outside [0, 1]"))?;
        }
        let scale = rng.random_range(0.01..100.0);
        let scaled = Grid::from_vec(w, h, g.data.iter().map(|v| v * scale).collect()).unwrap();
        let img2 = pseudo_color(&scaled, &cfg);
        for (a, b) in img.channels.iter().zip(&img2.channels) {
            let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            check(diff <= 1e-12, || format!("image {n}: scaling by {scale} moved a channel by {diff}"))?;
        }
        let i: f64 = rng.random_range(0.0..1.0);
        let phi: f64 = rng.random_range(0.0..1.0);
        let s = (std::f64::consts::PI * (phi - i) + 0.5).sin();
        let direct = s * s * i;
        check((color_channel(i, phi, Modulation::Identity) - direct).abs() <= 1e-12, || {
            format!("channel value at I={i}, phase={phi}")
        })?;
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("100 oracle segments, reversal, 100 colored images; {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------------------
// 4. HMM

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn hmm_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    let mut worst_count: f64 = 0.0;
    for eps in [1e-3, 0.5] {
        for _ in 0..20 {
            let k = rng.random_range(2..6);
            let seqs: Vec<Vec<usize>> = (0..rng.random_range(1..8))
                .map(|_| (0..rng.random_range(1..15)).map(|_| rng.random_range(0..k)).collect())
                .collect();
            let cfg = HmmConfig {
                smoothing: eps,
                ..HmmConfig::default()
            };
            let fit = baum_welch(&seqs, k, &cfg).unwrap().model;
            let mut first = vec![eps; k];
            let mut trans = vec![vec![eps; k]; k];
            for s in &seqs {
                first[s[0]] += 1.0;
                for w in s.windows(2) {
                    trans[w[0]][w[1]] += 1.0;
                }
            }
            let fs: f64 = first.iter().sum();
            for i in 0..k {
                worst_count = worst_count.max((fit.pi[i] - first[i] / fs).abs());
                let rs: f64 = trans[i].iter().sum();
                for j in 0..k {
                    worst_count = worst_count.max((fit.a[i][j] - trans[i][j] / rs).abs());
                }
            }
        }
    }
    check(worst_count <= 1e-10, || format!("frozen-B fit differs from counts by {worst_count:e}"))?;

    let mut worst_fwd: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=3);
        let m = rng.random_range(1..=4);
        let model = HmmModel {
            pi: random_stochastic(&mut rng, k),
            a: (0..k).map(|_| random_stochastic(&mut rng, k)).collect(),
            b: (0..k).map(|_| random_stochastic(&mut rng, m)).collect(),
        };
        let len = rng.random_range(1..=6);
        let seq: Vec<usize> = (0..len).map(|_| rng.random_range(0..m)).collect();
        let mut total = 0.0;
        for code in 0..k.pow(len as u32) {
            let path: Vec<usize> = (0..len).map(|t| code / k.pow(t as u32) % k).collect();
            let mut p = model.pi[path[0]] * model.b[path[0]][seq[0]];
            for t in 1..len {
                p *= model.a[path[t - 1]][path[t]] * model.b[path[t]][seq[t]];
            }
            total += p;
        }
        let fwd = forward_log_likelihood(&model, &seq).exp();
        worst_fwd = worst_fwd.max((fwd - total).abs() / total);
    }
    check(worst_fwd <= 1e-10, || format!("forward vs enumeration relative error {worst_fwd:e}"))?;

    for corpus in 0..50 {
        let k = rng.random_range(2..5);
        let seqs: Vec<Vec<usize>> = (0..rng.random_range(2..10))
            .map(|_| (0..rng.random_range(2..20)).map(|_| rng.random_range(0..k)).collect())
            .collect();
        let cfg = HmmConfig {
            freeze_b: false,
            max_iters: 50,
            tol: 0.0,
            ..HmmConfig::default()
        };
        let trace = baum_welch(&seqs, k, &cfg).unwrap().trace;
        for w in trace.windows(2) {
            check(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), || {
                format!("corpus {corpus}: objective fell from {} to {}", w[0], w[1])
            })?;
        }
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!(
        "counting error {worst_count:.1e}, forward error {worst_fwd:.1e}, 50 monotone corpora; {:.2?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------------------
// 5. classifier numerics

fn classifier_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (classes, dim, n) = (4, 6, 9);
    let mut model = SoftmaxRegression::zeros(classes, dim);
    model.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let zs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let l2 = 0.01;
    let (_, grad) = model.loss_and_grad(&zs, &labels, l2);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for p in 0..model.weights.len() {
        let mut plus = model.clone();
        plus.weights[p] += h;
        let mut minus = model.clone();
        minus.weights[p] -= h;
        let num = (plus.loss_and_grad(&zs, &labels, l2).0 - minus.loss_and_grad(&zs, &labels, l2).0) / (2.0 * h);
        let rel = (grad[p] - num).abs() / grad[p].abs().max(num.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    check(worst <= 1e-4, || format!("gradient relative error {worst:e}"))?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    while features.len() < 200 {
        let x: f64 = rng.random_range(-5.0..5.0);
        let y: f64 = rng.random_range(-5.0..5.0);
        let margin = 0.8 * x - y + 1.0;
        if margin.abs() < 0.3 {
            continue;
        }
        features.push(vec![x, y]);
        labels.push(usize::from(margin > 0.0));
    }
    let (svm, _) = train_svm(&features, &labels, 2, &SvmConfig::default(), 11).unwrap();
    let correct = features
        .iter()
        .zip(&labels)
        .filter(|(f, &l)| svm_predict(&svm, f).unwrap() == l)
        .count();
    check(correct == features.len(), || format!("SVM {correct}/{} on separable data", features.len()))?;
    Ok(format!("gradient relative error {worst:.1e}; SVM {correct}/{}", features.len()))
}

// ---------------------------------------------------------------------------
// 6. end-to-end benchmark

const BENCH_TRAIN_SEED: u64 = 1;
const BENCH_TEST_SEED: u64 = 2;

fn benchmark_templates() -> Vec<MotionTemplate> {
    MotionTemplate::ALL[..5].to_vec()
}

fn benchmark(model_out: &mut Option<TrainedPipeline>) -> Outcome {
    let start = Instant::now();
    let t = benchmark_templates();
    let train = SyntheticSource::balanced(&t, 20, BENCH_TRAIN_SEED, "train_", SynthOptions::default());
    let test = SyntheticSource::balanced(&t, 10, BENCH_TEST_SEED, "test_", SynthOptions::default());
    let cfg = PipelineConfig::default();
    let (model, report) = train_pipeline(&train, &cfg).map_err(|e| e.to_string())?;
    let eval = evaluate(&model, &test).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    *model_out = Some(model);
    let summary = format!(
        "test accuracy {:.3}, training accuracy {:.3}, {} symbols, {:.1?}",
        eval.accuracy, report.training_accuracy, report.symbol_count, elapsed
    );
    check(eval.accuracy >= 0.90, || format!("{summary}: test accuracy below 0.90"))?;
    check(report.training_accuracy >= 0.95, || format!("{summary}: training accuracy below 0.95"))?;
    within(Duration::from_secs(600), start)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// 7. determinism and persistence

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rgbd-action"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism(model: Option<&TrainedPipeline>) -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = d.join("data");
    run_cli(&["synth-gen", "--out", &s(&data), "--templates", "0,2,4", "--per-class", "8", "--seed", "5"])?;
    let manifest = s(&data.join("manifest.csv"));
    let (a, b) = (d.join("a.model"), d.join("b.model"));
    run_cli(&["train", "--manifest", &manifest, "--model", &s(&a)])?;
    run_cli(&["train", "--manifest", &manifest, "--model", &s(&b)])?;
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    check(ba == bb, || format!("archives differ ({} vs {} bytes)", ba.len(), bb.len()))?;

    let model = model.ok_or("benchmark model unavailable")?;
    let loaded = TrainedPipeline::from_bytes(&model.to_bytes()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let templates = benchmark_templates();
    let mut classes = BTreeMap::new();
    for n in 0..50 {
        let t = templates[rng.random_range(0..templates.len())];
        let opts = SynthOptions {
            noise_sigma: rng.random_range(0.0..0.01),
            frames: rng.random_range(20..60),
            ..SynthOptions::default()
        };
        let sample = generate_synthetic(t, &opts, rng.random(), format!("r{n}")).unwrap();
        let p = predict_sample(model, &sample).map_err(|e| e.to_string())?;
        let q = predict_sample(&loaded, &sample).map_err(|e| e.to_string())?;
        let same = p.class_id == q.class_id
            && p.symbols == q.symbols
            && p.segments == q.segments
            && p.features.iter().map(|f| f.to_bits()).eq(q.features.iter().map(|f| f.to_bits()))
            && p.segment_probabilities == q.segment_probabilities;
        check(same, || format!("random sample {n}: prediction changed after reload"))?;
        *classes.entry(p.class_name).or_insert(0) += 1;
    }
    Ok(format!(
        "{} identical bytes twice; 50 reloaded predictions identical over {} classes; {:.1?}",
        ba.len(),
        classes.len(),
        start.elapsed()
    ))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match out {
        Ok(msg) => {
            println!("PASS {name}: {msg}");
            true
        }
        Err(msg) => {
            println!("FAIL {name}: {msg}");
            false
        }
    }
}

fn main() {
    let mut model = None;
    let results = [
        run("1 entropy/segmentation", segmentation_suite),
        run("2 IGMM recovery and CRP", igmm_suite),
        run("3 DMM and pseudo-color", dmm_suite),
        run("4 HMM", hmm_suite),
        run("5 classifier numerics", classifier_suite),
        run("6 end-to-end benchmark", || benchmark(&mut model)),
        run("7 determinism and persistence", || determinism(model.as_ref())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
