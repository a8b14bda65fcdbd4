//! Run configuration, read from TOML with `[model]`, `[optimizer]`, `[training]`, `[data]`
//! and `[synth]` sections. Every key is optional; missing keys take the profile defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FusionMode, LossKind, NestedConfig};
use crate::nn::AdamHyper;
use crate::sim::DatasetSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSettings {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            batch_size: 8,
            epochs: 80,
            seed: 0,
            deterministic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSettings {
    /// Pair manifest written by `synth`.
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// The first `train_count` records (sorted by input path) train; the rest test.
    pub train_count: usize,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            manifest: PathBuf::from("data/manifest.tsv"),
            out_dir: PathBuf::from("runs/default"),
            train_count: 675,
        }
    }
}

/// The part of a run configuration that determines the trained weights. Embedded in checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRunConfig {
    pub model: NestedConfig,
    pub optimizer: AdamHyper,
    pub training: TrainingSettings,
}

impl ModelRunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: NestedConfig,
    pub optimizer: AdamHyper,
    pub training: TrainingSettings,
    pub data: DataSettings,
    pub synth: DatasetSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::full()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Full-scale protocol: lr 0.01, batch 8, 80 epochs, four levels, 675 training items.
    Full,
    /// Small enough to train on one CPU core in minutes.
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Profile::Full),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!("unknown profile {other:?} (expected full or desk)"))),
        }
    }
}

impl RunConfig {
    pub fn full() -> Self {
        RunConfig {
            model: NestedConfig::default(),
            optimizer: AdamHyper::default(),
            training: TrainingSettings::default(),
            data: DataSettings::default(),
            synth: DatasetSpec::default(),
        }
    }

    pub fn desk() -> Self {
        RunConfig {
            model: NestedConfig {
                levels: 2,
                unet_depth: 2,
                base_channels: 8,
                in_channels: 2,
                out_channels: 2,
                fusion_mode: FusionMode::Residual,
                loss_kind: LossKind::L1,
            },
            optimizer: AdamHyper {
                lr: 1e-3,
                ..AdamHyper::default()
            },
            training: TrainingSettings {
                epochs: 20,
                ..TrainingSettings::default()
            },
            data: DataSettings {
                train_count: 160,
                ..DataSettings::default()
            },
            synth: DatasetSpec::default(),
        }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Full => Self::full(),
            Profile::Desk => Self::desk(),
        }
    }

    /// Parses TOML on top of `base`: keys present in the file replace the profile defaults.
    pub fn from_toml_over(text: &str, base: &RunConfig) -> Result<Self> {
        let mut merged = match toml::Value::try_from(base).map_err(|e| Error::Config(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("a struct serialises to a table"),
        };
        let over: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, over);
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_over(text, &RunConfig::full())
    }

    pub fn load(path: &Path, base: &RunConfig) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml_over(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        if self.training.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.training.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_run(&self) -> ModelRunConfig {
        ModelRunConfig {
            model: self.model,
            optimizer: self.optimizer,
            training: self.training,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_profile_defaults() {
        let c = RunConfig::full();
        assert_eq!(c.optimizer.lr, 0.01);
        assert_eq!(c.optimizer.beta1, 0.9);
        assert_eq!(c.training.batch_size, 8);
        assert_eq!(c.training.epochs, 80);
        assert_eq!(c.data.train_count, 675);
    }

    #[test]
    fn partial_file_overrides_profile() {
        let c = RunConfig::from_toml_over(
            "[model]\nlevels = 3\nfusion_mode = \"concat\"\n[training]\nepochs = 2\n",
            &RunConfig::desk(),
        )
        .unwrap();
        assert_eq!(c.model.levels, 3);
        assert_eq!(c.model.fusion_mode, FusionMode::Concat);
        assert_eq!(c.model.base_channels, 8);
        assert_eq!(c.training.epochs, 2);
        assert_eq!(c.optimizer.lr, 1e-3);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::desk();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let m = c.model_run();
        assert_eq!(ModelRunConfig::from_toml(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[training]\nbatch_size = 0\n",
            "[training]\nepochs = 0\n",
            "[model]\nlevels = 0\n",
            "[optimizer]\nlr = -1.0\n",
            "[model]\nwidth = 3\n",
            "not toml at all [",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }
}
