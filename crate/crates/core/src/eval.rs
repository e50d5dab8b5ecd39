//! Confusion matrices and classification metrics. The positive class is
//! [`Label::Defective`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{zca_apply, ZcaTransform};
use crate::dataio::{stack_records, ImageRecord, Label};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// Probabilities at or above this value are predicted defective.
pub const DECISION_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Tallies predictions with `p >= threshold` counted as positive.
pub fn confusion(probs: &[f32], labels: &[Label], threshold: f32) -> Result<ConfusionMatrix> {
    if probs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y) {
            (true, Label::Defective) => cm.tp += 1,
            (true, Label::Ok) => cm.fp += 1,
            (false, Label::Defective) => cm.fn_ += 1,
            (false, Label::Ok) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTag {
    Standard,
    Augmented,
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetTag::Standard => "standard",
            DatasetTag::Augmented => "augmented",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_tag: String,
    pub dataset_tag: DatasetTag,
    pub n: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 are 0 when their denominators are 0.
pub fn metrics(
    cm: &ConfusionMatrix,
    dataset_tag: DatasetTag,
    model_tag: impl Into<String>,
) -> Result<MetricsReport> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::invalid("cannot compute metrics over zero samples"));
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricsReport {
        model_tag: model_tag.into(),
        dataset_tag,
        n,
        accuracy: ratio(cm.tp + cm.tn, n),
        precision,
        recall,
        f1,
    })
}

/// Inference-mode predictions for every record, in record order.
pub fn predict_records(model: &Model, records: &[ImageRecord]) -> Result<Vec<f32>> {
    predict_records_with(model, records, None)
}

/// Like [`predict_records`], whitening each image first when `zca` is given.
pub fn predict_records_with(
    model: &Model,
    records: &[ImageRecord],
    zca: Option<&ZcaTransform>,
) -> Result<Vec<f32>> {
    if records.is_empty() {
        return Err(Error::invalid("no records to evaluate"));
    }
    let (h, w, c) = model.spec.input_shape;
    let mut probs = Vec::with_capacity(records.len());
    for chunk in records.chunks(128) {
        let refs: Vec<&ImageRecord> = chunk.iter().collect();
        let mut batch = stack_records(&refs)?;
        if batch.shape()[1..] != [h, w, c] {
            return Err(Error::shape(format!(
                "model expects ({h}, {w}, {c}) images, got {:?}",
                &batch.shape()[1..]
            )));
        }
        if let Some(t) = zca {
            let whitened = refs
                .iter()
                .map(|r| zca_apply(t, &r.pixels))
                .collect::<Result<Vec<_>>>()?;
            batch = Tensor::stack(&whitened.iter().collect::<Vec<_>>())?;
        }
        probs.extend(model.predict(&batch)?);
    }
    Ok(probs)
}

pub fn evaluate(
    model: &Model,
    records: &[ImageRecord],
    dataset_tag: DatasetTag,
    model_tag: impl Into<String>,
) -> Result<MetricsReport> {
    evaluate_with(model, records, None, dataset_tag, model_tag)
}

/// Evaluates a model trained on whitened inputs.
pub fn evaluate_with(
    model: &Model,
    records: &[ImageRecord],
    zca: Option<&ZcaTransform>,
    dataset_tag: DatasetTag,
    model_tag: impl Into<String>,
) -> Result<MetricsReport> {
    let probs = predict_records_with(model, records, zca)?;
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    metrics(&confusion(&probs, &labels, DECISION_THRESHOLD)?, dataset_tag, model_tag)
}

/// `0.99444` becomes `"99.44"`.
pub fn percent(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

pub fn write_metrics_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model_tag", "dataset_tag", "n", "accuracy", "precision", "recall", "f1"])?;
    for r in reports {
        w.write_record([
            r.model_tag.clone(),
            r.dataset_tag.to_string(),
            r.n.to_string(),
            r.accuracy.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Markdown table with percentages to two decimals, in the column order
/// accuracy, recall, F1, precision.
pub fn metrics_markdown(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("| Model | Accuracy | Recall | F1 Score | Precision |\n|---|---|---|---|---|\n");
    for (label, r) in rows {
        s.push_str(&format!(
            "| {label} | {} | {} | {} | {} |\n",
            percent(r.accuracy),
            percent(r.recall),
            percent(r.f1),
            percent(r.precision)
        ));
    }
    s
}

/// Published metrics (percent) for the four architectures on the original
/// casting dataset. Not reproducible without that dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedMetrics {
    pub model: &'static str,
    pub accuracy: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision: f64,
}

pub const PUBLISHED_MODEL_METRICS: [PublishedMetrics; 4] = [
    PublishedMetrics { model: "Custom Model", accuracy: 99.44, recall: 99.44, f1: 99.44, precision: 99.45 },
    PublishedMetrics { model: "MobileNetV2", accuracy: 98.04, recall: 98.04, f1: 98.05, precision: 98.14 },
    PublishedMetrics { model: "NasNet", accuracy: 99.3, recall: 99.05, f1: 99.3, precision: 99.31 },
    PublishedMetrics { model: "Resnet50", accuracy: 99.16, recall: 99.16, f1: 99.16, precision: 99.16 },
];

/// Published custom-model results for the train/test augmentation grid.
pub const PUBLISHED_AUGMENTATION_METRICS: [PublishedMetrics; 4] = [
    PublishedMetrics { model: "Custom model – Normal", accuracy: 99.44, recall: 99.44, f1: 99.44, precision: 99.45 },
    PublishedMetrics { model: "Custom model – Augmented", accuracy: 98.04, recall: 98.04, f1: 98.04, precision: 98.05 },
    PublishedMetrics { model: "Custom model (Aug) - Normal test", accuracy: 99.16, recall: 99.16, f1: 99.16, precision: 99.17 },
    PublishedMetrics { model: "Custom model (Aug) - Augmented test", accuracy: 98.18, recall: 98.18, f1: 98.17, precision: 98.2 },
];
