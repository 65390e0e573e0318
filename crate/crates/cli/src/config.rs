//! Run configuration for `fedvit train`.
//!
//! ```json
//! {
//!   "model":   { "height": 32, "width": 32, "channels": 1, "patch": 8, "hidden": 32,
//!                "depth": 2, "heads": 4, "mlp_ratio": 2, "classes": 3 },
//!   "fl":      { "n_clients": 4, "rounds": 10, "local_epochs": 1, "lr": 0.001,
//!                "momentum": 0.9, "batch_size": 8, "algorithm": "fedavg",
//!                "weighting": "samples", "partition": "iid", "participation": 1.0,
//!                "seed": 0, "threads": 1 },
//!   "dataset": { "kind": "synthetic", "train": 2400, "test": 300, "noise": 0.1, "seed": 1 }
//! }
//! ```
//!
//! Every section is optional. `fl` and `dataset` fields fall back to the values
//! above individually; a `model` section must list all of its fields.
//! `dataset` may instead be `{ "kind": "cifar10", "dir": "..." }` (or `cifar100`);
//! CIFAR images are resized to the model's height and width.

use std::path::{Path, PathBuf};

use fedvit::data::{load_cifar, synth_dataset, CifarVariant, LabeledDataset, DEFAULT_NOISE};
use fedvit::fl::FlConfig;
use fedvit::linalg::RngState;
use fedvit::vit::ViTConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        #[serde(default = "default_train")]
        train: usize,
        #[serde(default = "default_test")]
        test: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_data_seed")]
        seed: u64,
    },
    Cifar10 {
        dir: PathBuf,
    },
    Cifar100 {
        dir: PathBuf,
    },
}

fn default_train() -> usize {
    2400
}
fn default_test() -> usize {
    300
}
fn default_noise() -> f64 {
    DEFAULT_NOISE
}
fn default_data_seed() -> u64 {
    1
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            train: default_train(),
            test: default_test(),
            noise: default_noise(),
            seed: default_data_seed(),
        }
    }
}

impl DatasetSource {
    /// Parses the `--dataset` flag: `synthetic[:TEST[:SEED]]`, `cifar10:DIR` or `cifar100:DIR`.
    pub fn parse_flag(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Validation(format!("unrecognized dataset `{s}`"));
        if let Some(dir) = s.strip_prefix("cifar100:") {
            return Ok(DatasetSource::Cifar100 { dir: dir.into() });
        }
        if let Some(dir) = s.strip_prefix("cifar10:") {
            return Ok(DatasetSource::Cifar10 { dir: dir.into() });
        }
        let mut parts = s.split(':');
        if parts.next() != Some("synthetic") {
            return Err(bad());
        }
        let test = parts
            .next()
            .map(str::parse)
            .transpose()
            .map_err(|_| bad())?;
        let seed = parts
            .next()
            .map(str::parse)
            .transpose()
            .map_err(|_| bad())?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(DatasetSource::Synthetic {
            train: 0,
            test: test.unwrap_or_else(default_test),
            noise: default_noise(),
            seed: seed.unwrap_or_else(default_data_seed),
        })
    }

    /// Files whose contents determine the dataset.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let (dir, names): (&Path, &[&str]) = match self {
            DatasetSource::Synthetic { .. } => return Vec::new(),
            DatasetSource::Cifar10 { dir } => (
                dir,
                &[
                    "data_batch_1.bin",
                    "data_batch_2.bin",
                    "data_batch_3.bin",
                    "data_batch_4.bin",
                    "data_batch_5.bin",
                    "test_batch.bin",
                ],
            ),
            DatasetSource::Cifar100 { dir } => (dir, &["train.bin", "test.bin"]),
        };
        names.iter().map(|n| dir.join(n)).collect()
    }

    /// Loads `(train, test)` shaped for `model`.
    pub fn load(&self, model: &ViTConfig) -> Result<(LabeledDataset, LabeledDataset), CliError> {
        let dims = (model.height, model.width, model.channels);
        match self {
            DatasetSource::Synthetic {
                train,
                test,
                noise,
                seed,
            } => {
                let tr = synth_dataset(
                    *train,
                    model.classes,
                    dims,
                    *noise,
                    &mut RngState::derive(*seed, &[0]),
                )?;
                let te = synth_dataset(
                    *test,
                    model.classes,
                    dims,
                    *noise,
                    &mut RngState::derive(*seed, &[1]),
                )?;
                Ok((tr, te))
            }
            DatasetSource::Cifar10 { dir } => cifar(dir, CifarVariant::Cifar10, model),
            DatasetSource::Cifar100 { dir } => cifar(dir, CifarVariant::Cifar100, model),
        }
    }
}

fn cifar(
    dir: &Path,
    variant: CifarVariant,
    model: &ViTConfig,
) -> Result<(LabeledDataset, LabeledDataset), CliError> {
    if model.channels != 3 {
        return Err(CliError::Validation(format!(
            "model.channels = {} but CIFAR images have 3 channels",
            model.channels
        )));
    }
    if model.classes != variant.classes() {
        return Err(CliError::Validation(format!(
            "model.classes = {} but the dataset has {} classes",
            model.classes,
            variant.classes()
        )));
    }
    let (train, test) = load_cifar(dir, variant)?;
    if (model.height, model.width) == (32, 32) {
        return Ok((train, test));
    }
    Ok((
        train.resized(model.height, model.width)?,
        test.resized(model.height, model.width)?,
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ViTConfig,
    pub fl: FlConfig,
    pub dataset: DatasetSource,
}

impl RunConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, CliError> {
        serde_json::from_slice(bytes).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field =
            |section: &str, e: fedvit::Error| CliError::Validation(format!("{section}: {e}"));
        self.model.validate().map_err(|e| field("model", e))?;
        self.fl.validate().map_err(|e| field("fl", e))?;
        if let DatasetSource::Synthetic {
            train, test, noise, ..
        } = &self.dataset
        {
            if *train < self.fl.n_clients {
                return Err(CliError::Validation(format!(
                    "dataset.train = {train} is smaller than fl.n_clients = {}",
                    self.fl.n_clients
                )));
            }
            if *test == 0 {
                return Err(CliError::Validation("dataset.test must be >= 1".into()));
            }
            if !(noise.is_finite() && *noise >= 0.0) {
                return Err(CliError::Validation(format!(
                    "dataset.noise = {noise} must be >= 0"
                )));
            }
            if self.model.classes < 2 {
                return Err(CliError::Validation("model.classes must be >= 2".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(RunConfig::from_json(b"{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_fill_in() {
        let c = RunConfig::from_json(
            br#"{"fl": {"rounds": 2}, "dataset": {"kind": "synthetic", "train": 40}}"#,
        )
        .unwrap();
        assert_eq!(c.fl.rounds, 2);
        assert_eq!(c.fl.batch_size, 8);
        assert!(matches!(
            c.dataset,
            DatasetSource::Synthetic {
                train: 40,
                test: 300,
                ..
            }
        ));
    }

    #[test]
    fn unknown_field_is_named() {
        let err = RunConfig::from_json(br#"{"fl": {"roundz": 2}}"#).unwrap_err();
        assert!(err.to_string().contains("roundz"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::default();
        c.model.heads = 5;
        assert!(c.validate().unwrap_err().to_string().starts_with("model:"));
        let mut c = RunConfig::default();
        c.fl.batch_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("batch_size"));
    }

    #[test]
    fn dataset_flags() {
        assert!(matches!(
            DatasetSource::parse_flag("synthetic:50:9").unwrap(),
            DatasetSource::Synthetic {
                test: 50,
                seed: 9,
                ..
            }
        ));
        assert_eq!(
            DatasetSource::parse_flag("cifar100:/data/c").unwrap(),
            DatasetSource::Cifar100 {
                dir: "/data/c".into()
            }
        );
        assert!(DatasetSource::parse_flag("mnist").is_err());
        assert!(DatasetSource::parse_flag("synthetic:x").is_err());
    }
}
