//! Declarative experiment configuration with dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datapipe::{self, Dataset, VALIDATION_SEED};
use crate::error::{Error, Result};
use crate::evalbench::TsneConfig;
use crate::netspec::ArchSpec;
use crate::trainer::{ExperimentData, Grid, Schedule, TrainConfig};

/// Environment variable naming the default dataset root.
pub const DATA_ROOT_ENV: &str = "ACGAN_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    FashionMnist,
    Cifar10,
    ImageFolder,
}

impl DatasetKind {
    fn default_dir(self) -> &'static str {
        match self {
            DatasetKind::FashionMnist => "fashion-mnist",
            DatasetKind::Cifar10 => "cifar-10-batches-bin",
            DatasetKind::ImageFolder => "images",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Directory holding the files; defaults to `$ACGAN_DATA_ROOT/<kind dir>`
    /// (or `data/<kind dir>` when the variable is unset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    /// Image folders only: class-per-subdirectory test tree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_root: Option<PathBuf>,
    /// Image folders only: `[height, width]` every image is resized to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resize: Option<[usize; 2]>,
    #[serde(default = "d_val_size")]
    pub val_size: usize,
    #[serde(default = "d_val_seed")]
    pub val_seed: u64,
}

fn d_val_size() -> usize {
    5000
}
fn d_val_seed() -> u64 {
    VALIDATION_SEED
}

/// Settings of the embedding analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "d_analysis_size")]
    pub train_size: usize,
    #[serde(default = "d_analysis_seed")]
    pub run_seed: u64,
    #[serde(default = "d_per_origin")]
    pub samples_per_origin: usize,
    #[serde(default = "d_tsne_seeds")]
    pub tsne_seeds: Vec<u64>,
    #[serde(default)]
    pub tsne: TsneConfig,
}

fn d_analysis_size() -> usize {
    500
}
fn d_analysis_seed() -> u64 {
    0
}
fn d_per_origin() -> usize {
    300
}
fn d_tsne_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            train_size: d_analysis_size(),
            run_seed: d_analysis_seed(),
            samples_per_origin: d_per_origin(),
            tsne_seeds: d_tsne_seeds(),
            tsne: TsneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run directory; relative paths resolve against the working directory.
    pub output_dir: PathBuf,
    /// Architecture spec file; relative paths resolve against the config file.
    pub arch: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub trainer: Schedule,
    pub grid: Grid,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Directory of the config file, used to resolve `arch`.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.variants.is_empty() || g.train_sizes.is_empty() || g.seeds.is_empty() {
            return Err(Error::Config(
                "grid needs at least one variant, train size and seed".into(),
            ));
        }
        if g.train_sizes.contains(&0) {
            return Err(Error::Config("train sizes must be positive".into()));
        }
        if self.dataset.val_size == 0 {
            return Err(Error::Config("dataset.val_size must be positive".into()));
        }
        if self.dataset.kind == DatasetKind::ImageFolder && self.dataset.resize.is_none() {
            return Err(Error::Config(
                "image folders need dataset.resize = [height, width]".into(),
            ));
        }
        for &v in &g.variants {
            TrainConfig {
                variant: v,
                seed: 0,
                schedule: self.trainer.clone(),
            }
            .validate()?;
        }
        Ok(())
    }

    /// Applies `key=value` where `key` is a dotted path and `value` is a
    /// TOML literal (bare words are taken as strings). The result is
    /// re-validated, so unknown keys are rejected.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for (i, part) in parts.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| {
                Error::Config(format!("`{}` is not a table", parts[..i].join(".")))
            })?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let base = std::mem::take(&mut self.base_dir);
        let mut next: ExperimentConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("--set {key}: {e}")))?;
        next.validate()?;
        next.base_dir = base;
        *self = next;
        Ok(())
    }

    pub fn arch_path(&self) -> PathBuf {
        if self.arch.is_absolute() {
            self.arch.clone()
        } else {
            self.base_dir.join(&self.arch)
        }
    }

    pub fn load_arch(&self) -> Result<ArchSpec> {
        ArchSpec::load(self.arch_path())
    }

    pub fn data_root(&self) -> PathBuf {
        match &self.dataset.root {
            Some(r) => r.clone(),
            None => {
                let base = std::env::var_os(DATA_ROOT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("data"));
                base.join(self.dataset.kind.default_dir())
            }
        }
    }

    /// Parses the train and test files and splits off validation.
    pub fn load_data(&self) -> Result<ExperimentData> {
        let (train, test) = load_dataset(&self.dataset, &self.data_root())?;
        ExperimentData::new(train, test, self.dataset.val_size, self.dataset.val_seed)
    }
}

fn load_dataset(cfg: &DatasetConfig, root: &Path) -> Result<(Dataset, Dataset)> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    match cfg.kind {
        DatasetKind::FashionMnist => {
            let f = |n: &str| root.join(n);
            Ok((
                datapipe::load_idx(f("train-images-idx3-ubyte"), f("train-labels-idx1-ubyte"))?,
                datapipe::load_idx(f("t10k-images-idx3-ubyte"), f("t10k-labels-idx1-ubyte"))?,
            ))
        }
        DatasetKind::Cifar10 => {
            let train: Vec<PathBuf> = (1..=5)
                .map(|i| root.join(format!("data_batch_{i}.bin")))
                .collect();
            Ok((
                datapipe::load_cifar10_binary(&train)?,
                datapipe::load_cifar10_binary(&[root.join("test_batch.bin")])?,
            ))
        }
        DatasetKind::ImageFolder => {
            let [h, w] = cfg.resize.expect("validated");
            let test_root = cfg
                .test_root
                .as_ref()
                .ok_or_else(|| Error::Config("image folders need dataset.test_root".into()))?;
            let (train, skipped_train) = datapipe::load_image_folder(root, h, w)?;
            let (test, skipped_test) = datapipe::load_image_folder(test_root, h, w)?;
            if skipped_train + skipped_test > 0 {
                log::warn!(
                    "skipped {} undecodable images",
                    skipped_train + skipped_test
                );
            }
            if train.class_names != test.class_names {
                return Err(Error::format(
                    test_root,
                    "test classes differ from training classes",
                ));
            }
            Ok((train, test))
        }
    }
}
