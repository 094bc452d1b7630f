use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::dataset::MAX_WORD_LEN;
use crate::imageproc::load_policies;
use crate::network::{CellKind, NetworkConfig, KERNEL, RNN_LAYERS};
use crate::trainer::TrainConfig;

/// Extractor width and recurrent cell; the class count comes from the charset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub cell: CellKind,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::medium(CellKind::Lstm)
    }
}

impl ModelSpec {
    pub fn small(cell: CellKind) -> Self {
        Self {
            conv_channels: vec![8, 16, 32],
            hidden: 32,
            cell,
        }
    }

    pub fn medium(cell: CellKind) -> Self {
        Self {
            conv_channels: vec![16, 32, 48],
            hidden: 64,
            cell,
        }
    }

    pub fn network(&self, num_classes: usize) -> NetworkConfig {
        NetworkConfig {
            conv_channels: self.conv_channels.clone(),
            kernel: KERNEL,
            cell: self.cell,
            hidden: self.hidden,
            rnn_layers: RNN_LAYERS,
            num_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPreset {
    pub name: String,
    #[serde(flatten)]
    pub model: ModelSpec,
}

/// Everything a command needs; every field has a default so partial JSON works.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    /// Seeds the split and, through `train.seed`, training.
    pub seed: u64,
    pub max_word_len: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Policy file used when `train.augmentation` is not given inline.
    pub augmentation_policy: Option<PathBuf>,
    pub out: PathBuf,
    pub benchmark_presets: Vec<BenchmarkPreset>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            seed: 0,
            max_word_len: MAX_WORD_LEN,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            augmentation_policy: None,
            out: PathBuf::from("hwr-out"),
            benchmark_presets: vec![
                BenchmarkPreset {
                    name: "small".into(),
                    model: ModelSpec::small(CellKind::Lstm),
                },
                BenchmarkPreset {
                    name: "medium".into(),
                    model: ModelSpec::medium(CellKind::Lstm),
                },
            ],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(m) = &cfg.manifest {
            anyhow::ensure!(m.exists(), "manifest {} does not exist", m.display());
        }
        if let Some(p) = &cfg.augmentation_policy {
            anyhow::ensure!(p.exists(), "augmentation policy {} does not exist", p.display());
        }
        Ok(cfg)
    }

    /// Training configuration with the run seed and policy file applied.
    pub fn resolved_train(&self) -> anyhow::Result<TrainConfig> {
        let mut tc = self.train.clone();
        tc.seed = self.seed;
        if tc.augmentation.is_none() {
            if let Some(p) = &self.augmentation_policy {
                tc.augmentation = Some(load_policies(p)?);
            }
        }
        tc.validate()?;
        Ok(tc)
    }
}
