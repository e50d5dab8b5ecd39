//! Single-threaded CPU inference latency and ratio tables.
//!
//! Latency follows one rule: the wall time to run the forward pass over a
//! whole test set, divided by the number of batches it was cut into, is the
//! time per batch. Timings are the median over several repeats after warmup
//! runs, on a one-thread pool, with batches stacked before the clock starts.
//!
//! Ratio tables divide every model's value by a baseline model's value. The
//! published parameter/size and timing constants for the custom model and
//! three pretrained baselines are included so the published ratio tables can
//! be recomputed without any measurement.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::{make_batches, Batch, BatchPlan, ImageRecord};
use crate::error::{Error, Result};
use crate::model::{Model, ReferenceModelStats};

/// Batch sizes of the default latency sweep.
pub const DEFAULT_BATCH_SIZES: [usize; 5] = [1, 10, 50, 100, 715];

/// Column labels of the published timing table. Its last column is labeled
/// 700 images even though the sweep that produced it used 715.
pub const PUBLISHED_BATCH_LABELS: [usize; 5] = [1, 10, 50, 100, 700];

/// Environment variable naming a CPU core to pin the timing thread to.
pub const PIN_CPU_ENV: &str = "BENCH_PIN_CPU";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub repeats: usize,
    pub warmup: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self { repeats: 5, warmup: 1 }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 5 {
            return Err(Error::Config(format!(
                "bench repeats must be >= 5, got {}",
                self.repeats
            )));
        }
        if self.warmup < 1 {
            return Err(Error::Config("bench warmup must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub batch_size: usize,
    pub n_images: usize,
    pub n_batches: usize,
    pub total_s: f64,
    pub per_batch_s: f64,
    /// `total_s / n_images`, which equals `per_batch_s / batch_size` when
    /// every batch is full.
    pub per_image_s: f64,
}

impl LatencyRow {
    /// Builds a row from a measured total, deriving the per-batch and
    /// per-image times.
    pub fn from_total(batch_size: usize, n_images: usize, total_s: f64) -> Result<Self> {
        if batch_size == 0 || n_images == 0 {
            return Err(Error::invalid("latency rows need batch_size and n_images >= 1"));
        }
        let n_batches = n_images.div_ceil(batch_size);
        Ok(Self {
            batch_size,
            n_images,
            n_batches,
            total_s,
            per_batch_s: total_s / n_batches as f64,
            per_image_s: total_s / n_images as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchEnvironment {
    pub thread_count: usize,
    pub warmup_runs: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub model_tag: String,
    /// Sorted ascending by batch size.
    pub rows: Vec<LatencyRow>,
    pub environment: BenchEnvironment,
}

impl LatencyReport {
    pub fn row(&self, batch_size: usize) -> Option<&LatencyRow> {
        self.rows.iter().find(|r| r.batch_size == batch_size)
    }

    fn total_per_batch(&self) -> f64 {
        self.rows.iter().map(|r| r.per_batch_s).sum()
    }
}

fn single_thread_pool() -> Result<rayon::ThreadPool> {
    let pin = std::env::var(PIN_CPU_ENV).ok();
    let pin = match pin.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(v) => Some(v.parse::<usize>().map_err(|_| {
            Error::Config(format!("{PIN_CPU_ENV} must be a CPU index, got {v:?}"))
        })?),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .start_handler(move |_| {
            if let Some(cpu) = pin {
                pin_current_thread(cpu);
            }
        })
        .build()
        .map_err(|e| Error::Config(format!("cannot build timing thread pool: {e}")))
}

#[cfg(target_os = "linux")]
fn pin_current_thread(cpu: usize) {
    // SAFETY: `set` is a zero-initialized cpu_set_t owned by this frame, and
    // pid 0 addresses the calling thread.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            log::warn!("could not pin timing thread to CPU {cpu}");
        }
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_current_thread(cpu: usize) {
    log::warn!("CPU pinning is only supported on Linux; ignoring CPU {cpu}");
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn time_on_pool(
    pool: &rayon::ThreadPool,
    model: &Model,
    records: &[ImageRecord],
    sizes: &[usize],
    timing: &TimingConfig,
) -> Result<Vec<LatencyRow>> {
    if records.is_empty() {
        return Err(Error::invalid("cannot time inference on an empty record set"));
    }
    let plans = sizes
        .iter()
        .map(|&b| make_batches(records, &BatchPlan::sequential(b)))
        .collect::<Result<Vec<_>>>()?;
    pool.install(|| {
        let run = |batches: &[Batch]| -> Result<f64> {
            let start = Instant::now();
            for batch in batches {
                std::hint::black_box(model.predict(&batch.images)?);
            }
            Ok(start.elapsed().as_secs_f64())
        };
        for batches in &plans {
            for _ in 0..timing.warmup {
                run(batches)?;
            }
        }
        // Repeats are interleaved across batch sizes, and each round starts
        // at the next size, so drifts in machine load affect every size alike.
        let n = plans.len();
        let mut times = vec![Vec::with_capacity(timing.repeats); n];
        for round in 0..timing.repeats {
            for k in 0..n {
                let i = (round + k) % n;
                times[i].push(run(&plans[i])?);
            }
        }
        sizes
            .iter()
            .zip(&mut times)
            .map(|(&b, t)| LatencyRow::from_total(b, records.len(), median(t)))
            .collect()
    })
}

/// Times forward passes over all `records` cut into batches of
/// `batch_size`, on a single thread.
pub fn time_inference(
    model: &Model,
    records: &[ImageRecord],
    batch_size: usize,
    timing: &TimingConfig,
) -> Result<LatencyRow> {
    timing.validate()?;
    let rows = time_on_pool(&single_thread_pool()?, model, records, &[batch_size], timing)?;
    Ok(rows.into_iter().next().expect("one row per batch size"))
}

/// Times several batch sizes, interleaving their repeats. Sizes larger than
/// the record count are dropped and the rest are sorted and deduplicated.
pub fn latency_sweep(
    model: &Model,
    model_tag: &str,
    records: &[ImageRecord],
    sizes: &[usize],
    timing: &TimingConfig,
) -> Result<LatencyReport> {
    timing.validate()?;
    if records.is_empty() {
        return Err(Error::invalid("cannot time inference on an empty record set"));
    }
    let mut sizes: Vec<usize> = sizes
        .iter()
        .copied()
        .filter(|&s| s >= 1 && s <= records.len())
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() {
        return Err(Error::invalid(format!(
            "no batch size fits the {} available records",
            records.len()
        )));
    }
    let rows = time_on_pool(&single_thread_pool()?, model, records, &sizes, timing)?;
    Ok(LatencyReport {
        model_tag: model_tag.to_string(),
        rows,
        environment: BenchEnvironment {
            thread_count: 1,
            warmup_runs: timing.warmup,
            repeats: timing.repeats,
        },
    })
}

/// Published seconds per batch for one model, in [`PUBLISHED_BATCH_LABELS`]
/// column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedTiming {
    pub model_tag: &'static str,
    pub per_batch_s: [f64; 5],
}

pub const PUBLISHED_TIMINGS: [PublishedTiming; 4] = [
    PublishedTiming {
        model_tag: "Custom model",
        per_batch_s: [0.0176, 0.1344, 0.3936, 1.1853, 12.6198],
    },
    PublishedTiming {
        model_tag: "MobileNetV2",
        per_batch_s: [0.0456, 0.3151, 1.2970, 2.6959, 21.7204],
    },
    PublishedTiming {
        model_tag: "NasNet",
        per_batch_s: [0.0572, 1.1835, 3.5687, 3.5167, 26.6517],
    },
    PublishedTiming {
        model_tag: "Resnet50",
        per_batch_s: [0.1596, 1.3304, 3.5780, 9.5807, 76.7329],
    },
];

/// Published speed ratios against the custom model, as printed (two
/// decimals), in [`PUBLISHED_BATCH_LABELS`] column order.
pub const PUBLISHED_SPEED_RATIOS: [(&str, [f64; 5]); 4] = [
    ("Custom model", [1.0, 1.0, 1.0, 1.0, 1.0]),
    ("MobileNetV2", [2.58, 2.34, 3.30, 2.27, 1.72]),
    ("NasNet", [3.23, 8.81, 9.07, 2.97, 2.11]),
    ("Resnet50", [9.02, 9.90, 9.09, 8.08, 6.08]),
];

/// Published parameter and size ratios against the custom model, as printed.
pub const PUBLISHED_PARAM_SIZE_RATIOS: [(&str, u64, u64); 4] = [
    ("Custom model", 1, 1),
    ("MobileNetV2", 386, 119),
    ("NasNet", 728, 229),
    ("Resnet50", 4022, 1186),
];

/// The published timings as latency reports, each cell read as a single
/// batch of that many images.
pub fn published_latency_reports() -> Vec<LatencyReport> {
    PUBLISHED_TIMINGS
        .iter()
        .map(|p| LatencyReport {
            model_tag: p.model_tag.to_string(),
            rows: PUBLISHED_BATCH_LABELS
                .iter()
                .zip(p.per_batch_s)
                .map(|(&b, t)| LatencyRow {
                    batch_size: b,
                    n_images: b,
                    n_batches: 1,
                    total_s: t,
                    per_batch_s: t,
                    per_image_s: t / b as f64,
                })
                .collect(),
            environment: BenchEnvironment {
                thread_count: 1,
                warmup_runs: 0,
                repeats: 1,
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub model_tag: String,
    pub column_tag: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRatioTable {
    pub title: String,
    pub baseline_tag: String,
    /// Column tags in display order.
    pub columns: Vec<String>,
    /// Model tags in display order.
    pub models: Vec<String>,
    pub entries: Vec<RatioEntry>,
    /// Decimal places used when the table is rendered.
    pub decimals: usize,
}

impl SpeedRatioTable {
    pub fn get(&self, model_tag: &str, column_tag: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.model_tag == model_tag && e.column_tag == column_tag)
            .map(|e| e.ratio)
    }

    /// Renders `ratio` the way the emitted tables show it, e.g. `9.90x` or
    /// `4022x`.
    pub fn format_ratio(&self, ratio: f64) -> String {
        format!("{ratio:.*}x", self.decimals)
    }
}

pub const PARAM_RATIO_COLUMN: &str = "params";
pub const SIZE_RATIO_COLUMN: &str = "size";

/// Parameter-count and file-size ratios of every model against `baseline`
/// (matched by key or display name). Rendered as whole numbers.
pub fn param_size_ratios(stats: &[ReferenceModelStats], baseline: &str) -> Result<SpeedRatioTable> {
    let needle = baseline.to_ascii_lowercase();
    let base = stats
        .iter()
        .find(|s| s.key == needle || s.name.to_ascii_lowercase() == needle)
        .ok_or_else(|| Error::invalid(format!("baseline {baseline:?} is not among the models")))?;
    if base.total_params == 0 || base.size_mb <= 0.0 {
        return Err(Error::invalid(format!(
            "baseline {} has a zero parameter count or size",
            base.name
        )));
    }
    let mut entries = Vec::with_capacity(2 * stats.len());
    for s in stats {
        entries.push(RatioEntry {
            model_tag: s.name.to_string(),
            column_tag: PARAM_RATIO_COLUMN.into(),
            ratio: s.total_params as f64 / base.total_params as f64,
        });
        entries.push(RatioEntry {
            model_tag: s.name.to_string(),
            column_tag: SIZE_RATIO_COLUMN.into(),
            ratio: s.size_mb / base.size_mb,
        });
    }
    Ok(SpeedRatioTable {
        title: "Parameter and model size ratios".into(),
        baseline_tag: base.name.to_string(),
        columns: vec![PARAM_RATIO_COLUMN.into(), SIZE_RATIO_COLUMN.into()],
        models: stats.iter().map(|s| s.name.to_string()).collect(),
        entries,
        decimals: 0,
    })
}

/// Orders reports fastest first by summed per-batch time.
pub fn sort_by_speed(reports: &mut [LatencyReport]) {
    reports.sort_by(|a, b| a.total_per_batch().total_cmp(&b.total_per_batch()));
}

/// Per-batch time of every report divided by the baseline's, one column
/// per batch size. Models appear fastest first.
pub fn speed_ratios(reports: &[LatencyReport], baseline_tag: &str) -> Result<SpeedRatioTable> {
    let base = reports
        .iter()
        .find(|r| r.model_tag == baseline_tag)
        .ok_or_else(|| Error::invalid(format!("baseline {baseline_tag:?} has no latency report")))?;
    let sizes: Vec<usize> = base.rows.iter().map(|r| r.batch_size).collect();
    let mut ordered = reports.to_vec();
    sort_by_speed(&mut ordered);
    let mut entries = Vec::new();
    for report in &ordered {
        let report_sizes: Vec<usize> = report.rows.iter().map(|r| r.batch_size).collect();
        if report_sizes != sizes {
            return Err(Error::invalid(format!(
                "report {} has batch sizes {report_sizes:?}, baseline has {sizes:?}",
                report.model_tag
            )));
        }
        for (row, base_row) in report.rows.iter().zip(&base.rows) {
            if base_row.per_batch_s <= 0.0 {
                return Err(Error::invalid(format!(
                    "baseline time for batch size {} is not positive",
                    base_row.batch_size
                )));
            }
            entries.push(RatioEntry {
                model_tag: report.model_tag.clone(),
                column_tag: row.batch_size.to_string(),
                ratio: row.per_batch_s / base_row.per_batch_s,
            });
        }
    }
    Ok(SpeedRatioTable {
        title: "Inference speed ratios".into(),
        baseline_tag: baseline_tag.to_string(),
        columns: sizes.iter().map(usize::to_string).collect(),
        models: ordered.iter().map(|r| r.model_tag.clone()).collect(),
        entries,
        decimals: 2,
    })
}

/// The published speed ratios as a table, for side-by-side display with
/// ratios recomputed from timings.
pub fn published_speed_ratio_table() -> SpeedRatioTable {
    let columns: Vec<String> = PUBLISHED_BATCH_LABELS.iter().map(usize::to_string).collect();
    let entries = PUBLISHED_SPEED_RATIOS
        .iter()
        .flat_map(|(tag, ratios)| {
            columns.iter().zip(ratios).map(|(c, &r)| RatioEntry {
                model_tag: tag.to_string(),
                column_tag: c.clone(),
                ratio: r,
            })
        })
        .collect();
    SpeedRatioTable {
        title: "Inference speed ratios (published)".into(),
        baseline_tag: PUBLISHED_SPEED_RATIOS[0].0.to_string(),
        columns,
        models: PUBLISHED_SPEED_RATIOS.iter().map(|(t, _)| t.to_string()).collect(),
        entries,
        decimals: 2,
    }
}

/// Latency reports and ratio tables written together by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub latency: Vec<LatencyReport>,
    pub ratios: Vec<SpeedRatioTable>,
}

fn column_heading(column: &str) -> String {
    match column {
        PARAM_RATIO_COLUMN => "Parameter ratio".into(),
        SIZE_RATIO_COLUMN => "Model size ratio".into(),
        "1" => "Single Image".into(),
        n => format!("{n} images"),
    }
}

fn markdown_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

/// Markdown for the latency table (seconds per batch) and every ratio
/// table.
pub fn bench_markdown(report: &BenchReport) -> String {
    let mut md = String::new();
    if let Some(first) = report.latency.first() {
        md.push_str("### Inference time per batch (s)\n\n");
        let mut head = vec!["Models".to_string()];
        head.extend(first.rows.iter().map(|r| format!("Test batch {}", r.batch_size)));
        md.push_str(&markdown_row(&head));
        md.push_str(&markdown_row(&vec!["---".to_string(); head.len()]));
        for rep in &report.latency {
            let mut cells = vec![rep.model_tag.clone()];
            cells.extend(rep.rows.iter().map(|r| format!("{:.4}", r.per_batch_s)));
            md.push_str(&markdown_row(&cells));
        }
        md.push('\n');
    }
    for table in &report.ratios {
        let _ = writeln!(md, "### {} (baseline: {})\n", table.title, table.baseline_tag);
        let mut head = vec!["Models".to_string()];
        head.extend(table.columns.iter().map(|c| column_heading(c)));
        md.push_str(&markdown_row(&head));
        md.push_str(&markdown_row(&vec!["---".to_string(); head.len()]));
        for model in &table.models {
            let mut cells = vec![model.clone()];
            for c in &table.columns {
                cells.push(
                    table
                        .get(model, c)
                        .map(|r| table.format_ratio(r))
                        .unwrap_or_else(|| "-".into()),
                );
            }
            md.push_str(&markdown_row(&cells));
        }
        md.push('\n');
    }
    md
}

#[derive(Serialize)]
struct LatencyCsvRow<'a> {
    model_tag: &'a str,
    batch_size: usize,
    n_batches: usize,
    total_s: f64,
    per_batch_s: f64,
    per_image_s: f64,
}

#[derive(Serialize)]
struct RatioCsvRow<'a> {
    table: &'a str,
    baseline_tag: &'a str,
    model_tag: &'a str,
    column_tag: &'a str,
    ratio: f64,
}

#[derive(Serialize)]
struct PlotCsvRow<'a> {
    batch_size: usize,
    model_tag: &'a str,
    per_batch_s: f64,
}

/// Writes `latency_report.csv`, `ratios.csv`, `ratios.md`, `ratios.json`
/// and `plot_data.csv` into `dir`. Identical reports give identical bytes.
pub fn emit_report(report: &BenchReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = [
        "latency_report.csv",
        "ratios.csv",
        "ratios.md",
        "ratios.json",
        "plot_data.csv",
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect();

    let mut w = csv::Writer::from_path(&paths[0])?;
    for rep in &report.latency {
        for r in &rep.rows {
            w.serialize(LatencyCsvRow {
                model_tag: &rep.model_tag,
                batch_size: r.batch_size,
                n_batches: r.n_batches,
                total_s: r.total_s,
                per_batch_s: r.per_batch_s,
                per_image_s: r.per_image_s,
            })?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[1])?;
    for table in &report.ratios {
        for e in &table.entries {
            w.serialize(RatioCsvRow {
                table: &table.title,
                baseline_tag: &table.baseline_tag,
                model_tag: &e.model_tag,
                column_tag: &e.column_tag,
                ratio: e.ratio,
            })?;
        }
    }
    w.flush()?;

    fs::write(&paths[2], bench_markdown(report))?;
    fs::write(&paths[3], serde_json::to_string_pretty(report)?)?;

    let mut w = csv::Writer::from_path(&paths[4])?;
    let mut plot: Vec<PlotCsvRow> = report
        .latency
        .iter()
        .flat_map(|rep| {
            rep.rows.iter().map(|r| PlotCsvRow {
                batch_size: r.batch_size,
                model_tag: &rep.model_tag,
                per_batch_s: r.per_batch_s,
            })
        })
        .collect();
    plot.sort_by_key(|p| p.batch_size);
    for row in plot {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(paths)
}

/// Reads a report written by [`emit_report`] back from `ratios.json`.
pub fn read_report(dir: impl AsRef<Path>) -> Result<BenchReport> {
    let path = dir.as_ref().join("ratios.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::data(&path, e.to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reference mode: the published timings, the ratio tables recomputed from
/// them, the published speed ratios, and the parameter/size ratios.
pub fn reference_report() -> Result<BenchReport> {
    let latency = published_latency_reports();
    let baseline = PUBLISHED_TIMINGS[0].model_tag;
    let mut recomputed = speed_ratios(&latency, baseline)?;
    recomputed.title = "Inference speed ratios (recomputed from timings)".into();
    Ok(BenchReport {
        ratios: vec![
            param_size_ratios(crate::model::reference_stats(), "custom")?,
            recomputed,
            published_speed_ratio_table(),
        ],
        latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth_generate;
    use crate::model::{reference_stats, ModelSpec};

    #[test]
    fn per_batch_is_total_over_batches() {
        let row = LatencyRow::from_total(8, 64, 12.0).unwrap();
        assert_eq!(row.n_batches, 8);
        assert_eq!(row.per_batch_s, 1.5);
        let whole = LatencyRow::from_total(20, 20, 0.7).unwrap();
        assert_eq!((whole.n_batches, whole.per_batch_s), (1, 0.7));
        let partial = LatencyRow::from_total(10, 25, 3.0).unwrap();
        assert_eq!(partial.n_batches, 3);
        assert!(LatencyRow::from_total(0, 5, 1.0).is_err());
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn timing_config_limits() {
        assert!(TimingConfig::default().validate().is_ok());
        assert!(TimingConfig { repeats: 4, warmup: 1 }.validate().is_err());
        assert!(TimingConfig { repeats: 5, warmup: 0 }.validate().is_err());
    }

    #[test]
    fn sweep_trims_sorts_and_keeps_identity() {
        let spec = ModelSpec::castnet_tiny((32, 32, 1)).unwrap();
        let model = Model::init(spec, 0).unwrap();
        let records = synth_generate(12, 0.5, 32, 1).unwrap();
        let report = latency_sweep(&model, "tiny", &records, &[10, 1, 50, 10, 4], &TimingConfig::default()).unwrap();
        let sizes: Vec<usize> = report.rows.iter().map(|r| r.batch_size).collect();
        assert_eq!(sizes, vec![1, 4, 10]);
        assert_eq!(report.environment.thread_count, 1);
        for r in &report.rows {
            assert_eq!(r.n_images, 12);
            assert!((r.per_batch_s * r.n_batches as f64 - r.total_s).abs() <= 1e-12);
        }
        assert!(time_inference(&model, &[], 1, &TimingConfig::default()).is_err());
    }

    #[test]
    fn baseline_against_itself_is_one() {
        let reports = published_latency_reports();
        let t = speed_ratios(&reports[..1], "Custom model").unwrap();
        assert!(t.entries.iter().all(|e| e.ratio == 1.0));
        assert!(speed_ratios(&reports, "missing").is_err());
        let mut short = reports.clone();
        short[2].rows.pop();
        assert!(speed_ratios(&short, "Custom model").is_err());
    }

    #[test]
    fn param_ratio_baseline_checks() {
        let t = param_size_ratios(reference_stats(), "Custom model").unwrap();
        assert_eq!(t.get("Custom model", PARAM_RATIO_COLUMN), Some(1.0));
        assert!(param_size_ratios(reference_stats(), "vgg").is_err());
        let mut zero = reference_stats().to_vec();
        zero[0].total_params = 0;
        assert!(param_size_ratios(&zero, "custom").is_err());
    }

    #[test]
    fn reference_order_is_fastest_first() {
        let t = speed_ratios(&published_latency_reports(), "Custom model").unwrap();
        assert_eq!(t.models, ["Custom model", "MobileNetV2", "NasNet", "Resnet50"]);
    }

    #[test]
    fn published_table_renders_verbatim() {
        let md = bench_markdown(&reference_report().unwrap());
        assert!(md.contains("| Resnet50 | 9.02x | 9.90x | 9.09x | 8.08x | 6.08x |"));
        assert!(md.contains("| Resnet50 | 4022x | 1186x |"));
        assert!(md.contains("Test batch 700"));
    }

    #[test]
    fn emitted_files_are_deterministic_and_round_trip() {
        let report = reference_report().unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = emit_report(&report, a.path()).unwrap();
        let pb = emit_report(&report, b.path()).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
        assert_eq!(read_report(a.path()).unwrap(), report);
        let plot = fs::read_to_string(a.path().join("plot_data.csv")).unwrap();
        assert!(plot.starts_with("batch_size,model_tag,per_batch_s\n1,Custom model,0.0176\n"));
    }
}
