//! Run configuration file shared by all commands.
//!
//! A run config is JSON with exactly one data source (`dataset` directory
//! or inline `synthetic` spec) plus optional `train`, `eval`, `variants`
//! and `output_dir` sections. Missing fields take their defaults; command
//! line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, make_synthetic_dataset, DatasetBundle, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::trainer::{TrainConfig, Variant};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Subdirectory of `dataset` to load; empty loads `dataset` itself.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<Variant>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Values given on the command line; each replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub n_per_class: Option<usize>,
}

impl RunConfig {
    /// Parse a config file. A relative `dataset` path is resolved against
    /// the directory holding the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if let (Some(ds), Some(parent)) = (&config.dataset, path.parent()) {
            if ds.is_relative() {
                config.dataset = Some(parent.join(ds));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "config sets both `dataset` and `synthetic`; exactly one is allowed",
                ))
            }
            (None, None) => {
                return Err(Error::validation(
                    "config needs one of `dataset` or `synthetic`",
                ))
            }
            (Some(dir), None) => {
                if !dir.join(&self.split).is_dir() {
                    return Err(Error::validation(format!(
                        "`dataset` directory {} does not exist",
                        dir.join(&self.split).display()
                    )));
                }
            }
            (None, Some(spec)) => spec.validate()?,
        }
        self.train.validate()?;
        self.eval.validate()
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.train.seed = seed;
            self.eval.seed = seed;
        }
        if let Some(v) = o.variant {
            self.train.variant = v;
        }
        if let Some(n) = o.n_per_class {
            self.eval.n_per_class = n;
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("dascn_run"))
    }

    /// Load or synthesize the dataset, applying opt-in normalization.
    pub fn bundle(&self) -> Result<DatasetBundle> {
        let mut bundle = match (&self.dataset, &self.synthetic) {
            (Some(dir), None) => load_dataset(dir, &self.split)?,
            (None, Some(spec)) => make_synthetic_dataset(spec)?,
            _ => return Err(Error::validation("exactly one of `dataset` or `synthetic` is required")),
        };
        if self.train.normalize_features {
            bundle.normalize_features();
        }
        Ok(bundle)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("effective config", e))
    }
}
