use std::fmt::Write as _;

use crate::augment::{augmented_test_set, AugmentConfig};
use crate::dataio::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{evaluate_with, metrics_markdown, DatasetTag, MetricsReport, PUBLISHED_AUGMENTATION_METRICS};
use crate::model::ModelSpec;
use crate::train::{fit, FitOutcome, TrainConfig};

/// Model tag of the model trained without augmentation.
pub const NORMAL_TAG: &str = "normal";
/// Model tag of the model trained with augmentation.
pub const AUGMENTED_TRAIN_TAG: &str = "augmented-train";

/// Two trainings (augmentation off and on) each evaluated on the standard
/// and the augmented test set.
#[derive(Debug, Clone)]
pub struct AugStudy {
    /// Rows in the order normal/standard, normal/augmented,
    /// augmented-train/standard, augmented-train/augmented.
    pub reports: Vec<MetricsReport>,
    pub normal: FitOutcome,
    pub augmented: FitOutcome,
}

fn f1_of(reports: &[MetricsReport], model_tag: &str, dataset: DatasetTag) -> f64 {
    reports
        .iter()
        .find(|r| r.model_tag == model_tag && r.dataset_tag == dataset)
        .map_or(f64::NAN, |r| r.f1)
}

/// Augmented-test F1 of the augmentation-trained model minus that of the
/// normally trained model. NaN when a row is missing.
pub fn augmented_test_gain(reports: &[MetricsReport]) -> f64 {
    f1_of(reports, AUGMENTED_TRAIN_TAG, DatasetTag::Augmented) - f1_of(reports, NORMAL_TAG, DatasetTag::Augmented)
}

/// Standard-test F1 of the normally trained model minus its augmented-test
/// F1. NaN when a row is missing.
pub fn normal_model_shift_drop(reports: &[MetricsReport]) -> f64 {
    f1_of(reports, NORMAL_TAG, DatasetTag::Standard) - f1_of(reports, NORMAL_TAG, DatasetTag::Augmented)
}

/// The study rows next to the published reference rows, followed by the
/// two headline comparisons.
pub fn aug_study_markdown(reports: &[MetricsReport]) -> String {
    let label = |r: &MetricsReport| {
        let model = if r.model_tag == NORMAL_TAG { "Custom model" } else { "Custom model (Aug)" };
        let test = match r.dataset_tag {
            DatasetTag::Standard => "Normal test",
            DatasetTag::Augmented => "Augmented test",
        };
        format!("{model} - {test}")
    };
    let rows: Vec<(String, MetricsReport)> = reports.iter().map(|r| (label(r), r.clone())).collect();
    let mut md = String::from("### Augmentation study\n\n");
    md.push_str(&metrics_markdown(&rows));
    md.push_str("\n### Augmentation study, published reference (original dataset)\n\n| Model | Accuracy | Recall | F1 Score | Precision |\n|---|---|---|---|---|\n");
    for p in PUBLISHED_AUGMENTATION_METRICS {
        let _ = writeln!(
            md,
            "| {} | {:.2} | {:.2} | {:.2} | {:.2} |",
            p.model, p.accuracy, p.recall, p.f1, p.precision
        );
    }
    let _ = write!(
        md,
        "\nAugmented-test F1, augmentation-trained minus normally trained: {:+.4}\n\
         Normally trained F1, standard test minus augmented test: {:+.4}\n",
        augmented_test_gain(reports),
        normal_model_shift_drop(reports)
    );
    md
}

impl AugStudy {
    pub fn report(&self, model_tag: &str, dataset: DatasetTag) -> Option<&MetricsReport> {
        self.reports
            .iter()
            .find(|r| r.model_tag == model_tag && r.dataset_tag == dataset)
    }

    pub fn augmented_test_gain(&self) -> f64 {
        augmented_test_gain(&self.reports)
    }

    pub fn normal_model_shift_drop(&self) -> f64 {
        normal_model_shift_drop(&self.reports)
    }

    pub fn markdown(&self) -> String {
        aug_study_markdown(&self.reports)
    }
}

/// Trains with augmentation off and on (same seed, otherwise identical
/// settings) and evaluates both models on the standard test set and on its
/// seeded augmented copy built from `augment`.
pub fn aug_study(
    spec: &ModelSpec,
    data: &DatasetSplit,
    train: &TrainConfig,
    augment: &AugmentConfig,
) -> Result<AugStudy> {
    if data.test.is_empty() {
        return Err(Error::invalid("augmentation study needs a non-empty test set"));
    }
    let augmented_test = augmented_test_set(&data.test, augment)?;
    let normal = fit(spec, data, &TrainConfig { augment: None, ..train.clone() })?;
    let augmented = fit(spec, data, &TrainConfig { augment: Some(*augment), ..train.clone() })?;
    let mut reports = Vec::with_capacity(4);
    for (tag, outcome) in [(NORMAL_TAG, &normal), (AUGMENTED_TRAIN_TAG, &augmented)] {
        let zca = outcome.zca.as_ref();
        reports.push(evaluate_with(&outcome.model, &data.test, zca, DatasetTag::Standard, tag)?);
        reports.push(evaluate_with(&outcome.model, &augmented_test, zca, DatasetTag::Augmented, tag)?);
    }
    Ok(AugStudy {
        reports,
        normal,
        augmented,
    })
}
