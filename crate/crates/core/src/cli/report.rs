use std::fmt::Write as _;
use std::path::Path;

use crate::bench::{bench_markdown, read_report};
use crate::error::Result;
use crate::eval::{metrics_markdown, read_metrics_csv, PUBLISHED_MODEL_METRICS};
use crate::model::{encode_model, reference_stats, Model, ModelSpec};

use super::study::aug_study_markdown;
use super::{AUG_STUDY_CSV, METRICS_FILE};

/// Parameter counts and file sizes of the reference models plus this
/// build's model at `image_size`. Sizes are in MB of 10^6 bytes.
pub fn model_size_markdown(image_size: usize) -> Result<String> {
    let spec = ModelSpec::castnet_tiny((image_size, image_size, 1))?;
    let counts = spec.count_params();
    let bytes = encode_model(&Model::zeroed(spec)?)?.len();
    let mut md = String::from(
        "### Model sizes and parameters\n\n| Models | Total params | Trainable | Non-trainable | Size (MB) |\n|---|---|---|---|---|\n",
    );
    for r in reference_stats() {
        let _ = writeln!(
            md,
            "| {} (published) | {} | {} | {} | {:.2} |",
            r.name, r.total_params, r.trainable, r.non_trainable, r.size_mb
        );
    }
    let _ = writeln!(
        md,
        "| CastNet-Tiny ({image_size}x{image_size}, this build) | {} | {} | {} | {:.4} |",
        counts.total,
        counts.trainable,
        counts.non_trainable,
        bytes as f64 / 1e6
    );
    Ok(md)
}

fn published_metrics_markdown() -> String {
    let mut md = String::from(
        "### Evaluation metrics, published reference (original dataset)\n\n| Model | Accuracy | Recall | F1 Score | Precision |\n|---|---|---|---|---|\n",
    );
    for p in PUBLISHED_MODEL_METRICS {
        let _ = writeln!(
            md,
            "| {} | {:.2} | {:.2} | {:.2} | {:.2} |",
            p.model, p.accuracy, p.recall, p.f1, p.precision
        );
    }
    md
}

/// Merges whatever results exist in `dir` (evaluation metrics, latency and
/// ratio tables, augmentation study) into one markdown document. Missing
/// inputs are noted rather than treated as errors.
pub fn render_report(dir: &Path, image_size: usize) -> Result<String> {
    let mut md = String::from("# CastNet-Tiny results\n\n");
    md.push_str(&model_size_markdown(image_size)?);
    md.push('\n');

    let metrics_path = dir.join(METRICS_FILE);
    if metrics_path.is_file() {
        let rows: Vec<_> = read_metrics_csv(&metrics_path)?
            .into_iter()
            .map(|r| (format!("{} ({} test)", r.model_tag, r.dataset_tag), r))
            .collect();
        md.push_str("### Evaluation metrics\n\n");
        md.push_str(&metrics_markdown(&rows));
    } else {
        md.push_str("### Evaluation metrics\n\nNo `metrics_report.csv` found; run `castnet eval`.\n");
    }
    md.push('\n');
    md.push_str(&published_metrics_markdown());
    md.push('\n');

    if dir.join("ratios.json").is_file() {
        md.push_str(&bench_markdown(&read_report(dir)?));
    } else {
        md.push_str("### Inference timing\n\nNo bench results found; run `castnet bench`.\n\n");
    }

    let study_path = dir.join(AUG_STUDY_CSV);
    if study_path.is_file() {
        md.push_str(&aug_study_markdown(&read_metrics_csv(&study_path)?));
    } else {
        md.push_str("### Augmentation study\n\nNo `aug_study.csv` found; run `castnet aug-study`.\n");
    }
    Ok(md)
}
