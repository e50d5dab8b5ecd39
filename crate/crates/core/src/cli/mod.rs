//! The `castnet` command line.
//!
//! Every subcommand reads an optional flat TOML [`RunConfig`] (`--config`),
//! applies flag overrides on top (flags win), writes the resolved
//! configuration to `run_config.toml` in the output directory and then runs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod config;
mod report;
mod study;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};

pub use config::{RunConfig, RUN_CONFIG_FILE};
pub use report::{model_size_markdown, render_report};
pub use study::{
    aug_study, aug_study_markdown, augmented_test_gain, normal_model_shift_drop, AugStudy,
    AUGMENTED_TRAIN_TAG, NORMAL_TAG,
};

use crate::augment::{augmented_test_set, ZcaTransform};
use crate::bench::{emit_report, latency_sweep, reference_report, speed_ratios, BenchReport};
use crate::dataio::write_synth_dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate_with, write_metrics_csv, DatasetTag};
use crate::model::{load_model, save_model, Model, ModelSpec};
use crate::train::{fit, write_training_log};

pub const MODEL_FILE: &str = "model.cnet";
pub const ZCA_FILE: &str = "zca.bin";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const METRICS_FILE: &str = "metrics_report.csv";
pub const AUG_STUDY_CSV: &str = "aug_study.csv";
pub const AUG_STUDY_MD: &str = "aug_study.md";
pub const REPORT_FILE: &str = "report.md";

/// Model tag used for locally trained or benchmarked models.
pub const MODEL_TAG: &str = "castnet-tiny";

#[derive(Debug, Parser)]
#[command(name = "castnet", version, about = "Tiny CNN for casting-defect classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Flat TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset root with train|test / ok_front|def_front; synthetic data is
    /// used when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Square image side in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Number of synthetic training images.
    #[arg(long)]
    n: Option<usize>,
    /// Number of synthetic test images.
    #[arg(long)]
    n_test: Option<usize>,
    /// Fraction of defective synthetic images.
    #[arg(long)]
    defect_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Maximum number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Train with augmentation.
    #[arg(long)]
    augment: bool,
    /// Add ZCA whitening to the augmentation pipeline.
    #[arg(long)]
    zca: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset tree into the output directory.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train a model and write its weights and training log.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate a trained model on the standard and/or augmented test set.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Weights to evaluate; defaults to model.cnet in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Evaluate on the standard test set (the default).
        #[arg(long)]
        standard: bool,
        /// Evaluate on the seeded augmented test set.
        #[arg(long)]
        augmented: bool,
    },
    /// Inference latency and ratio tables.
    #[command(group(ArgGroup::new("mode").required(true).args(["reference", "measured"])))]
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Recompute the ratio tables from published constants.
        #[arg(long)]
        reference: bool,
        /// Time the local model on this machine.
        #[arg(long)]
        measured: bool,
        /// Weights to time; defaults to model.cnet in the output directory,
        /// or freshly initialized weights when that is absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated batch sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Timed passes per batch size; the median is reported.
        #[arg(long)]
        repeats: Option<usize>,
        /// Untimed passes before timing starts.
        #[arg(long)]
        warmup: Option<usize>,
    },
    /// Merge the results in the output directory into report.md. Settings
    /// come from the directory's run_config.toml unless --config is given.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// Square image side used for the model size row.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train with and without augmentation and evaluate both models on both
    /// test sets.
    AugStudy {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
}

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, data: &DataArgs) {
    if let Some(d) = &data.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(v) = data.size {
        cfg.image_size = v;
    }
    if let Some(v) = data.n {
        cfg.synth_n_train = v;
    }
    if let Some(v) = data.n_test {
        cfg.synth_n_test = v;
    }
    if let Some(v) = data.defect_fraction {
        cfg.defect_fraction = v;
    }
}

fn apply_train(cfg: &mut RunConfig, train: &TrainArgs) {
    if let Some(v) = train.epochs {
        cfg.epochs_max = v;
    }
    if let Some(v) = train.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = train.lr {
        cfg.learning_rate = v;
    }
    if train.augment {
        cfg.augment = true;
    }
    if train.zca {
        cfg.aug_zca = true;
    }
}

/// Validates `cfg` and stores it in the output directory.
fn prepare(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let path = cfg.persist(&cfg.out)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn castnet_spec(cfg: &RunConfig) -> Result<ModelSpec> {
    ModelSpec::castnet_tiny((cfg.image_size, cfg.image_size, 1))
}

fn sibling_zca(model_path: &Path) -> Result<Option<ZcaTransform>> {
    let path = model_path.with_file_name(ZCA_FILE);
    if path.is_file() {
        Ok(Some(ZcaTransform::load(&path)?))
    } else {
        Ok(None)
    }
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    prepare(cfg)?;
    if let Some(d) = &cfg.dataset {
        return Err(Error::Config(format!(
            "synth writes a new dataset; remove dataset = {:?} from the configuration",
            d.display().to_string()
        )));
    }
    let rows = write_synth_dataset(
        &cfg.out,
        cfg.synth_n_train,
        cfg.synth_n_test,
        cfg.defect_fraction,
        cfg.image_size,
        cfg.seed,
    )?;
    println!("wrote {} images to {}", rows.len(), cfg.out.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    prepare(cfg)?;
    let data = cfg.load_data()?;
    let outcome = fit(&castnet_spec(cfg)?, &data, &cfg.train_config())?;
    save_model(&outcome.model, cfg.out.join(MODEL_FILE))?;
    write_training_log(&cfg.out.join(TRAINING_LOG_FILE), &outcome.logs)?;
    if let Some(zca) = &outcome.zca {
        zca.save(&cfg.out.join(ZCA_FILE))?;
    }
    let last = outcome.logs.last().expect("at least one epoch");
    println!(
        "trained {} epochs (best {}, stopped early: {}), final val_loss {:.4}, val_accuracy {:.4}",
        outcome.logs.len(),
        outcome.best_epoch,
        outcome.stopped_early,
        last.val_loss,
        last.val_accuracy
    );
    println!("wrote {}", cfg.out.join(MODEL_FILE).display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, model_path: Option<&Path>, standard: bool, augmented: bool) -> Result<()> {
    prepare(cfg)?;
    let model_path = model_path.map_or_else(|| cfg.out.join(MODEL_FILE), Path::to_path_buf);
    let model = load_model(&model_path)?;
    let zca = sibling_zca(&model_path)?;
    let test = cfg.load_test()?;
    let mut reports = Vec::new();
    if standard || !augmented {
        reports.push(evaluate_with(&model, &test, zca.as_ref(), DatasetTag::Standard, MODEL_TAG)?);
    }
    if augmented {
        let aug = augmented_test_set(&test, &cfg.augment_config())?;
        reports.push(evaluate_with(&model, &aug, zca.as_ref(), DatasetTag::Augmented, MODEL_TAG)?);
    }
    for r in &reports {
        println!(
            "{} test: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} (n={})",
            r.dataset_tag, r.accuracy, r.precision, r.recall, r.f1, r.n
        );
    }
    write_metrics_csv(&cfg.out.join(METRICS_FILE), &reports)?;
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, reference: bool, model_path: Option<&Path>) -> Result<()> {
    prepare(cfg)?;
    let report = if reference {
        reference_report()?
    } else {
        let default_path = cfg.out.join(MODEL_FILE);
        let model = match model_path {
            Some(p) => load_model(p)?,
            None if default_path.is_file() => load_model(&default_path)?,
            None => Model::init(castnet_spec(cfg)?, cfg.seed)?,
        };
        let records = cfg.load_test()?;
        let latency = latency_sweep(&model, MODEL_TAG, &records, &cfg.bench_sizes, &cfg.timing())?;
        BenchReport {
            ratios: vec![speed_ratios(std::slice::from_ref(&latency), MODEL_TAG)?],
            latency: vec![latency],
        }
    };
    for path in emit_report(&report, &cfg.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_report(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    cfg.validate()?;
    let path = cfg.out.join(REPORT_FILE);
    fs::write(&path, render_report(&cfg.out, cfg.image_size)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_aug_study(cfg: &RunConfig) -> Result<()> {
    prepare(cfg)?;
    let data = cfg.load_data()?;
    let study = aug_study(&castnet_spec(cfg)?, &data, &cfg.train_config(), &cfg.augment_config())?;
    write_metrics_csv(&cfg.out.join(AUG_STUDY_CSV), &study.reports)?;
    let md = study.markdown();
    fs::write(cfg.out.join(AUG_STUDY_MD), &md)?;
    print!("{md}");
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, data } => {
            let mut cfg = base_config(&common)?;
            apply_data(&mut cfg, &data);
            cmd_synth(&cfg)
        }
        Command::Train { common, data, train } => {
            let mut cfg = base_config(&common)?;
            apply_data(&mut cfg, &data);
            apply_train(&mut cfg, &train);
            cmd_train(&cfg)
        }
        Command::Eval {
            common,
            data,
            model,
            standard,
            augmented,
        } => {
            let mut cfg = base_config(&common)?;
            apply_data(&mut cfg, &data);
            cmd_eval(&cfg, model.as_deref(), standard, augmented)
        }
        Command::Bench {
            common,
            data,
            reference,
            measured: _,
            model,
            sizes,
            repeats,
            warmup,
        } => {
            let mut cfg = base_config(&common)?;
            apply_data(&mut cfg, &data);
            if let Some(s) = sizes {
                cfg.bench_sizes = s;
            }
            if let Some(r) = repeats {
                cfg.bench_repeats = r;
            }
            if let Some(w) = warmup {
                cfg.bench_warmup = w;
            }
            cmd_bench(&cfg, reference, model.as_deref())
        }
        Command::Report { common, size } => {
            let mut cfg = base_config(&common)?;
            let stored = cfg.out.join(RUN_CONFIG_FILE);
            if common.config.is_none() && stored.is_file() {
                let out = cfg.out.clone();
                cfg = RunConfig::load(&stored)?;
                cfg.out = out;
            }
            if let Some(s) = size {
                cfg.image_size = s;
            }
            cmd_report(&cfg)
        }
        Command::AugStudy { common, data, train } => {
            let mut cfg = base_config(&common)?;
            apply_data(&mut cfg, &data);
            apply_train(&mut cfg, &train);
            cmd_aug_study(&cfg)
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::Data { .. }
        | Error::Shape(_)
        | Error::Format(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::Numeric(_) | Error::Diverged { .. } => 3,
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
