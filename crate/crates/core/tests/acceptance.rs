//! End-to-end acceptance run. Every criterion runs in sequence inside one
//! test so the latency measurement never overlaps with training, and each
//! prints one PASS/FAIL line.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use castnet::augment::{zca_fit, AugmentConfig};
use castnet::bench::{
    latency_sweep, param_size_ratios, published_latency_reports, speed_ratios, TimingConfig, PARAM_RATIO_COLUMN,
    SIZE_RATIO_COLUMN,
};
use castnet::cli::{aug_study, AUGMENTED_TRAIN_TAG, NORMAL_TAG};
use castnet::dataio::{split_train_val, synth_generate, DatasetSplit};
use castnet::eval::{evaluate, DatasetTag};
use castnet::model::{encode_model, reference_stats, LayerSpec, Model, ModelSpec};
use castnet::tensor::{conv2d_forward, maxpool2d, ConvParams, Padding, Tensor};
use castnet::train::{
    early_stopping_update, fit, reduce_lr_on_plateau, EarlyStopConfig, EarlyStopState, PlateauConfig, PlateauState,
    TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    check(
        elapsed < budget,
        format!("took {:.1}s, budget {:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64()),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ratio tables recomputed from the reference parameter counts, sizes and
/// timings, compared with the published ratio tables.
fn ratio_reproduction() -> Outcome {
    let t3 = param_size_ratios(reference_stats(), "Custom model").map_err(|e| e.to_string())?;
    let cell = |m: &str, c: &str| t3.get(m, c).ok_or(format!("missing {m}/{c}"));
    let expected_params = [("Resnet50", vec![4022.0]), ("NasNet", vec![728.0]), ("MobileNetV2", vec![385.0, 386.0])];
    for (model, accepted) in expected_params {
        let r = cell(model, PARAM_RATIO_COLUMN)?.round();
        check(accepted.contains(&r), format!("{model} parameter ratio {r}, want one of {accepted:?}"))?;
    }
    for (model, want) in [("Resnet50", 1186.0), ("NasNet", 229.0), ("MobileNetV2", 119.0)] {
        let r = cell(model, SIZE_RATIO_COLUMN)?.round();
        check(r == want, format!("{model} size ratio {r}, want {want}"))?;
    }

    let t5 = speed_ratios(&published_latency_reports(), "Custom model").map_err(|e| e.to_string())?;
    let published: [(&str, [f64; 5]); 4] = [
        ("Custom model", [1.0, 1.0, 1.0, 1.0, 1.0]),
        ("MobileNetV2", [2.58, 2.34, 3.30, 2.27, 1.72]),
        ("NasNet", [3.23, 8.81, 9.07, 2.97, 2.11]),
        ("Resnet50", [9.02, 9.90, 9.09, 8.08, 6.08]),
    ];
    let columns = ["1", "10", "50", "100", "700"];
    let mut worst: f64 = 0.0;
    for (model, row) in published {
        for (col, want) in columns.iter().zip(row) {
            let got = t5.get(model, col).ok_or(format!("missing {model}/{col}"))?;
            worst = worst.max((got - want).abs());
            check((got - want).abs() <= 0.06, format!("{model} @ {col}: {got:.4} vs {want}"))?;
        }
    }
    let r = t5.get("Resnet50", "10").unwrap();
    check(format!("{r:.2}") == "9.90", format!("Resnet50 @ 10 renders {r:.2}"))?;
    Ok(format!("3 models x 2 columns and 20 speed cells match; worst speed gap {worst:.4}"))
}

fn latency_records() -> Vec<castnet::dataio::ImageRecord> {
    synth_generate(200, 0.5, 64, 11).unwrap()
}

/// Per-batch time times batch count equals total time on measured rows.
fn eq1_identity(report: &castnet::bench::LatencyReport) -> Outcome {
    let mut worst: f64 = 0.0;
    for r in &report.rows {
        let gap = (r.per_batch_s * r.n_batches as f64 - r.total_s).abs();
        worst = worst.max(gap);
        check(gap <= 1e-12, format!("batch {}: gap {gap:e}", r.batch_size))?;
        check(r.n_batches == r.n_images.div_ceil(r.batch_size), "batch count")?;
    }
    Ok(format!("{} measured rows, worst gap {worst:.1e}", report.rows.len()))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let err = common::whole_model_gradient_error(seed, 1e-5);
        worst = worst.max(err);
        check(err <= 1e-4, format!("seed {seed}: max relative error {err:e}"))?;
    }
    within_budget(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("5 seeds, worst max relative error {worst:.2e}"))
}

fn kernel_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for case in 0..10 {
        let n = rng.random_range(1..=2);
        let h = rng.random_range(4..=16);
        let w = rng.random_range(4..=16);
        let cin = rng.random_range(1..=4);
        let cout = rng.random_range(1..=4);
        let k = [1, 3][rng.random_range(0..2)];
        let stride = rng.random_range(1..=2);
        let padding = if rng.random_bool(0.5) { Padding::Same } else { Padding::Valid };
        let input = Tensor::from_fn(vec![n, h, w, cin], |_| rng.random_range(-1.0..1.0)).unwrap();
        let kernels = Tensor::from_fn(vec![k, k, cin, cout], |_| rng.random_range(-1.0..1.0)).unwrap();
        let bias: Vec<f64> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();

        let want = common::naive_conv(&input, &kernels, &bias, stride, padding);
        let params = ConvParams { kernels: kernels.clone(), bias: bias.clone(), stride, padding };
        let got = conv2d_forward(&input, &params).map_err(|e| e.to_string())?;
        check(got.shape() == want.shape(), format!("case {case}: conv shape {:?} vs {:?}", got.shape(), want.shape()))?;
        let d = got.max_abs_diff(&want);
        worst = worst.max(d);
        check(d <= 1e-5, format!("case {case}: conv diff {d:e}"))?;

        let (pooled, _) = maxpool2d(&input, 2, 2).map_err(|e| e.to_string())?;
        let want = common::naive_maxpool(&input, 2, 2);
        check(pooled.shape() == want.shape(), format!("case {case}: pool shape"))?;
        let d = pooled.max_abs_diff(&want);
        worst = worst.max(d);
        check(d <= 1e-5, format!("case {case}: pool diff {d:e}"))?;
    }
    Ok(format!("10 random conv and maxpool instances, worst diff {worst:.1e}"))
}

fn desk_training() -> Outcome {
    let start = Instant::now();
    let seed = 7;
    let records = synth_generate(400, 0.5, 64, seed).map_err(|e| e.to_string())?;
    let test = synth_generate(100, 0.5, 64, seed + 1).map_err(|e| e.to_string())?;
    let (train, validation) = split_train_val(records, 0.2, seed).map_err(|e| e.to_string())?;
    let split = DatasetSplit { train, validation, test, seed };
    let cfg = TrainConfig::desk_scale(seed);
    check(cfg.epochs_max <= 50, "epoch cap")?;
    let spec = ModelSpec::castnet_tiny((64, 64, 1)).map_err(|e| e.to_string())?;
    let outcome = fit(&spec, &split, &cfg).map_err(|e| e.to_string())?;
    let report = evaluate(&outcome.model, &split.test, DatasetTag::Standard, "castnet-tiny").map_err(|e| e.to_string())?;
    let summary = format!(
        "{} epochs, test accuracy {:.3}, F1 {:.3}, {:.0}s",
        outcome.logs.len(),
        report.accuracy,
        report.f1,
        start.elapsed().as_secs_f64()
    );
    check(report.accuracy >= 0.95 && report.f1 >= 0.95, summary.clone())?;
    within_budget(start.elapsed(), Duration::from_secs(300))?;
    Ok(summary)
}

fn augmentation_direction() -> Outcome {
    let start = Instant::now();
    let size = 48;
    let spec = ModelSpec::castnet_tiny((size, size, 1)).map_err(|e| e.to_string())?;
    let (mut aug_aug, mut norm_aug, mut norm_std) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 1..=3u64 {
        let records = synth_generate(400, 0.5, size, seed).map_err(|e| e.to_string())?;
        let test = synth_generate(100, 0.5, size, seed + 1).map_err(|e| e.to_string())?;
        let (train, validation) = split_train_val(records, 0.2, seed).map_err(|e| e.to_string())?;
        let data = DatasetSplit { train, validation, test, seed };
        let train_cfg = TrainConfig { epochs_max: 40, ..TrainConfig::desk_scale(seed) };
        let augment = AugmentConfig { seed, ..AugmentConfig::default() };
        let study = aug_study(&spec, &data, &train_cfg, &augment).map_err(|e| e.to_string())?;
        let f1 = |m: &str, d: DatasetTag| study.report(m, d).map(|r| r.f1).ok_or(format!("missing {m}/{d}"));
        aug_aug.push(f1(AUGMENTED_TRAIN_TAG, DatasetTag::Augmented)?);
        norm_aug.push(f1(NORMAL_TAG, DatasetTag::Augmented)?);
        norm_std.push(f1(NORMAL_TAG, DatasetTag::Standard)?);
    }
    let (aa, na, ns) = (median(aug_aug), median(norm_aug), median(norm_std));
    let summary = format!(
        "median F1: augmented-train/augmented {aa:.3}, normal/augmented {na:.3}, normal/standard {ns:.3}, {:.0}s",
        start.elapsed().as_secs_f64()
    );
    check(aa >= na && ns >= na, summary.clone())?;
    within_budget(start.elapsed(), Duration::from_secs(900))?;
    Ok(summary)
}

fn zca_property() -> Outcome {
    let dim = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    // Correlated full-rank data: independent draws mixed by a random matrix.
    let mix: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let images: Vec<Tensor> = (0..200)
        .map(|_| {
            let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f32> = (0..dim)
                .map(|i| (0..dim).map(|j| mix[i * dim + j] * z[j]).sum::<f64>() as f32)
                .collect();
            Tensor::new(vec![4, 4, 1], x).unwrap()
        })
        .collect();
    let refs: Vec<&Tensor> = images.iter().collect();
    let zca = zca_fit(&refs, 0.0).map_err(|e| e.to_string())?;

    let w = &zca.whitening;
    let mut asym: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            asym = asym.max((w[(i, j)] - w[(j, i)]).abs());
        }
    }
    check(asym <= 1e-10, format!("whitening asymmetry {asym:e}"))?;

    let whitened: Vec<Vec<f64>> = images
        .iter()
        .map(|img| {
            let c: Vec<f64> = img.data().iter().zip(zca.mean.iter()).map(|(&x, m)| x as f64 - m).collect();
            (0..dim).map(|i| (0..dim).map(|j| w[(i, j)] * c[j]).sum()).collect()
        })
        .collect();
    let cov = common::covariance(&whitened);
    let mut off: f64 = 0.0;
    for (i, row) in cov.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            off = off.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    check(off <= 1e-6, format!("whitened covariance off identity by {off:e}"))?;
    Ok(format!("identity gap {off:.1e}, asymmetry {asym:.1e}"))
}

fn model_size_accounting() -> Outcome {
    let spec = ModelSpec::castnet_tiny((64, 64, 1)).map_err(|e| e.to_string())?;
    let model = Model::init(spec.clone(), 3).map_err(|e| e.to_string())?;
    let bytes = encode_model(&model).map_err(|e| e.to_string())?;

    let header = 16;
    let layer_bytes: usize = spec
        .layers
        .iter()
        .map(|l| {
            1 + 4 * match l {
                LayerSpec::Conv { .. } => 5,
                LayerSpec::BatchNorm { .. } => 1,
                LayerSpec::MaxPool { .. } | LayerSpec::Dense { .. } => 2,
                _ => 0,
            }
        })
        .sum();
    let spec_block = 4 * 4 + spec.name.len() + layer_bytes;
    // Conv 1->16, BN 16, conv 16->16, BN 16, conv 16->8, dense 8->1.
    let total_params = (9 * 16 + 16) + 4 * 16 + (9 * 16 * 16 + 16) + 4 * 16 + (9 * 16 * 8 + 8) + (8 + 1);
    check(total_params == 3777, format!("hand count {total_params}"))?;
    let expected = header + spec_block + 4 * total_params + 4;
    check(bytes.len() == expected, format!("file {} bytes, expected {expected}", bytes.len()))?;
    let mb = bytes.len() as f64 / 1e6;
    check(mb < 0.08, format!("{mb} MB"))?;
    Ok(format!("{} bytes = {header} + {spec_block} + 4x{total_params} + 4 ({mb:.4} MB)", bytes.len()))
}

fn callback_traces() -> Outcome {
    let es_cfg = EarlyStopConfig { patience: 3, min_delta: 0.0 };
    let mut es = EarlyStopState::default();
    let mut stop_epoch = None;
    for (i, loss) in [1.0, 0.9, 0.91, 0.92, 0.93].into_iter().enumerate() {
        early_stopping_update(&mut es, loss, &es_cfg);
        if es.stopped && stop_epoch.is_none() {
            stop_epoch = Some(i + 1);
        }
    }
    check(stop_epoch == Some(5), format!("early stop after epoch {stop_epoch:?}, want 5"))?;
    check(es.best_epoch == 2, format!("best epoch {}, want 2", es.best_epoch))?;

    let pl_cfg = PlateauConfig { factor: 0.5, patience: 2, min_delta: 0.0, min_lr: 1e-6 };
    let mut pl = PlateauState::new(1e-3);
    let lrs: Vec<f64> = [1.0, 1.0, 1.0].into_iter().map(|l| reduce_lr_on_plateau(&mut pl, l, &pl_cfg)).collect();
    check(lrs == [1e-3, 1e-3, 5e-4], format!("plateau lr trace {lrs:?}"))?;
    Ok("early stop at epoch 5 restoring epoch 2; lr 1e-3, 1e-3, 5e-4".into())
}

fn latency_scaling(report: &castnet::bench::LatencyReport) -> Outcome {
    let per_image: Vec<f64> = [1, 10, 50, 100]
        .iter()
        .map(|&b| report.row(b).map(|r| r.per_image_s).ok_or(format!("no row for batch {b}")))
        .collect::<Result<_, _>>()?;
    let (lo, hi) = per_image.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let spread = hi / lo - 1.0;
    let summary = format!(
        "per-image ms {:?}, spread {:.1}%",
        per_image.iter().map(|v| (v * 1e5).round() / 100.0).collect::<Vec<_>>(),
        100.0 * spread
    );
    check(spread <= 0.25, summary.clone())?;
    Ok(summary)
}

/// Writes to the process stdout directly, which the test harness does not
/// capture, so the per-criterion lines show up in ordinary test logs.
fn report_line(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").and_then(|_| out.flush()).expect("write to stdout");
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
        let detail = match &outcome {
            Ok(s) | Err(s) => s.clone(),
        };
        report_line(&format!("criterion {id:>2} {status} {name}: {detail} [{secs:.1}s]"));
        results.push((id, name, outcome, secs));
    };

    // The latency sweep runs first, before any training has warmed caches
    // or spawned worker threads.
    let latency_start = Instant::now();
    let model = Model::init(ModelSpec::castnet_tiny((64, 64, 1)).unwrap(), 0).unwrap();
    let timing = TimingConfig { repeats: 7, warmup: 2 };
    let sweep = latency_sweep(&model, "castnet-tiny", &latency_records(), &[1, 10, 50, 100], &timing);
    let sweep_secs = latency_start.elapsed();

    run(1, "ratio reproduction", &mut ratio_reproduction);
    run(2, "time-per-batch identity", &mut || eq1_identity(sweep.as_ref().map_err(|e| e.to_string())?));
    run(3, "gradient correctness", &mut gradient_correctness);
    run(4, "kernel oracles", &mut kernel_oracles);
    run(5, "desk-scale training", &mut desk_training);
    run(6, "augmentation direction", &mut augmentation_direction);
    run(7, "ZCA property", &mut zca_property);
    run(8, "model size accounting", &mut model_size_accounting);
    run(9, "callback state machines", &mut callback_traces);
    run(10, "latency scaling", &mut || {
        within_budget(sweep_secs, Duration::from_secs(120))?;
        latency_scaling(sweep.as_ref().map_err(|e| e.to_string())?)
    });

    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.2.is_err())
        .map(|r| format!("{} ({})", r.0, r.1))
        .collect();
    report_line(&format!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    ));
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
