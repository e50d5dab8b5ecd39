use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::bench::{TimingConfig, DEFAULT_BATCH_SIZES};
use crate::dataio::{load_dataset_resized, split_train_val, synth_generate, DatasetSplit, ImageRecord};
use crate::error::{Error, Result};
use crate::train::{EarlyStopConfig, OptimizerKind, PlateauConfig, TrainConfig};

/// File name under which every run stores the configuration it used.
pub const RUN_CONFIG_FILE: &str = "run_config.toml";

/// Everything a run depends on, as one flat TOML table.
///
/// Unknown keys are rejected. When `dataset` is unset, train and test sets
/// are synthesized from `seed` (test set from `seed + 1`). `out` is not
/// written to the persisted copy because that copy lives inside `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub image_size: usize,
    pub synth_n_train: usize,
    pub synth_n_test: usize,
    pub defect_fraction: f64,
    pub val_fraction: f64,

    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub early_stop: bool,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub plateau: bool,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub plateau_min_lr: f64,

    pub augment: bool,
    pub aug_horizontal_flip: bool,
    pub aug_vertical_flip: bool,
    pub aug_rotation_deg: f64,
    pub aug_zoom_min: f64,
    pub aug_zoom_max: f64,
    pub aug_zca: bool,
    pub aug_zca_epsilon: f64,

    pub bench_sizes: Vec<usize>,
    pub bench_repeats: usize,
    pub bench_warmup: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let es = EarlyStopConfig::default();
        let pl = PlateauConfig::default();
        let aug = AugmentConfig::default();
        let timing = TimingConfig::default();
        let desk = TrainConfig::desk_scale(7);
        Self {
            seed: desk.seed,
            out: PathBuf::from("castnet-out"),
            dataset: None,
            image_size: 64,
            synth_n_train: 400,
            synth_n_test: 100,
            defect_fraction: 0.5,
            val_fraction: 0.2,
            epochs_max: desk.epochs_max,
            batch_size: desk.batch_size,
            learning_rate: desk.learning_rate,
            optimizer: desk.optimizer,
            early_stop: true,
            early_stop_patience: es.patience,
            early_stop_min_delta: es.min_delta,
            plateau: true,
            plateau_factor: pl.factor,
            plateau_patience: pl.patience,
            plateau_min_delta: pl.min_delta,
            plateau_min_lr: pl.min_lr,
            augment: false,
            aug_horizontal_flip: aug.horizontal_flip,
            aug_vertical_flip: aug.vertical_flip,
            aug_rotation_deg: aug.rotation_max_deg,
            aug_zoom_min: aug.zoom_range.0,
            aug_zoom_max: aug.zoom_range.1,
            aug_zca: aug.zca,
            aug_zca_epsilon: aug.zca_epsilon,
            bench_sizes: DEFAULT_BATCH_SIZES.to_vec(),
            bench_repeats: timing.repeats,
            bench_warmup: timing.warmup,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Writes the configuration to `RUN_CONFIG_FILE` inside `dir`.
    pub fn persist(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(RUN_CONFIG_FILE);
        fs::write(&path, self.to_toml_string()?)?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 {
            return Err(Error::Config(format!("image_size must be >= 32, got {}", self.image_size)));
        }
        if self.synth_n_train < 2 || self.synth_n_test < 1 {
            return Err(Error::Config("synth_n_train must be >= 2 and synth_n_test >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.defect_fraction) {
            return Err(Error::Config(format!(
                "defect_fraction must be in [0, 1], got {}",
                self.defect_fraction
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.bench_sizes.is_empty() || self.bench_sizes.contains(&0) {
            return Err(Error::Config("bench_sizes must be non-empty and positive".into()));
        }
        self.timing().validate()?;
        self.augment_config().validate()?;
        self.train_config().validate()
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            horizontal_flip: self.aug_horizontal_flip,
            vertical_flip: self.aug_vertical_flip,
            rotation_max_deg: self.aug_rotation_deg,
            zoom_range: (self.aug_zoom_min, self.aug_zoom_max),
            zca: self.aug_zca,
            zca_epsilon: self.aug_zca_epsilon,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs_max: self.epochs_max,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            early_stop: self.early_stop.then_some(EarlyStopConfig {
                patience: self.early_stop_patience,
                min_delta: self.early_stop_min_delta,
            }),
            plateau: self.plateau.then_some(PlateauConfig {
                factor: self.plateau_factor,
                patience: self.plateau_patience,
                min_delta: self.plateau_min_delta,
                min_lr: self.plateau_min_lr,
            }),
            seed: self.seed,
            augment: self.augment.then(|| self.augment_config()),
        }
    }

    pub fn timing(&self) -> TimingConfig {
        TimingConfig {
            repeats: self.bench_repeats,
            warmup: self.bench_warmup,
        }
    }

    /// Train/validation/test records from `dataset`, or synthesized when no
    /// dataset is configured.
    pub fn load_data(&self) -> Result<DatasetSplit> {
        let (train, test) = self.load_records()?;
        let (train, validation) = split_train_val(train, self.val_fraction, self.seed)?;
        Ok(DatasetSplit {
            train,
            validation,
            test,
            seed: self.seed,
        })
    }

    /// Only the test records, loaded or synthesized as in
    /// [`RunConfig::load_data`].
    pub fn load_test(&self) -> Result<Vec<ImageRecord>> {
        match &self.dataset {
            Some(_) => Ok(self.load_records()?.1),
            None => synth_generate(
                self.synth_n_test,
                self.defect_fraction,
                self.image_size,
                self.seed.wrapping_add(1),
            ),
        }
    }

    fn load_records(&self) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>)> {
        match &self.dataset {
            Some(root) => {
                let raw = load_dataset_resized(root, Some(self.image_size))?;
                if raw.train.is_empty() || raw.test.is_empty() {
                    return Err(Error::data(root, "train and test splits must both contain images"));
                }
                Ok((raw.train, raw.test))
            }
            None => Ok((
                synth_generate(self.synth_n_train, self.defect_fraction, self.image_size, self.seed)?,
                synth_generate(
                    self.synth_n_test,
                    self.defect_fraction,
                    self.image_size,
                    self.seed.wrapping_add(1),
                )?,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("seed = 1\nbatchsize = 8\n").unwrap_err();
        assert!(err.to_string().contains("batchsize"), "{err}");
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml_str("seed = 3\naugment = true\noptimizer = \"sgd_momentum\"\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.optimizer, OptimizerKind::SgdMomentum);
        assert_eq!(cfg.train_config().augment.unwrap().seed, 3);
        assert_eq!(cfg.image_size, 64);
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "image_size = 16",
            "val_fraction = 1.0",
            "batch_size = 0",
            "plateau_factor = 1.5",
            "bench_repeats = 2",
            "aug_zoom_min = 1.2",
        ] {
            assert!(RunConfig::from_toml_str(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn switches_map_to_train_config() {
        let cfg = RunConfig {
            early_stop: false,
            plateau: false,
            ..RunConfig::default()
        };
        let tc = cfg.train_config();
        assert!(tc.early_stop.is_none() && tc.plateau.is_none() && tc.augment.is_none());
    }
}
