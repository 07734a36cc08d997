use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocators::AqkaConfig;
use crate::error::{AqkaError, Result};
use crate::kernelgen::{FeatureMapConfig, InputDist, KernelSpec};
use crate::pairs::n_pairs;

use super::methods::Method;

/// How the data for one seed is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// `y = (K + λI)c` with `c` on `m` random anchors.
    Planted {
        n: usize,
        n_test: usize,
        m: usize,
        inputs: InputDist,
        kernel: KernelSpec,
    },
    /// Balanced labels from a Haar-random measurement of the feature state.
    HaarAdhoc {
        n: usize,
        n_test: usize,
        feature_map: FeatureMapConfig,
        margin_frac: f64,
    },
    /// Features and binary labels from a CSV file, split at random.
    Csv {
        path: PathBuf,
        kernel: KernelSpec,
        test_frac: f64,
    },
}

impl DatasetSpec {
    pub fn n_train(&self) -> Option<usize> {
        match self {
            DatasetSpec::Planted { n, .. } | DatasetSpec::HaarAdhoc { n, .. } => Some(*n),
            DatasetSpec::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Krr,
    Svm,
}

/// A parameter swept across cells in addition to method, budget and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub key: SweepKey,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKey {
    /// Number of planted anchors.
    M,
    /// Training-set size.
    N,
    /// Support threshold of the two-phase support allocator.
    Tau,
    /// Landmark count for Nyström-based methods.
    Landmarks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    pub dataset: DatasetSpec,
    pub methods: Vec<String>,
    /// Absolute budgets; ignored when `budget_multipliers` is non-empty.
    #[serde(default)]
    pub budgets: Vec<u64>,
    /// Budgets as multiples of the pair count M.
    #[serde(default)]
    pub budget_multipliers: Vec<f64>,
    pub seeds: usize,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_c")]
    pub svm_c: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Landmark count; defaults to ⌈√N⌉.
    #[serde(default)]
    pub landmarks: Option<usize>,
    #[serde(default)]
    pub aqka: AqkaConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// When set, every seed shares the data drawn from this seed and only the
    /// shot noise varies.
    #[serde(default)]
    pub fixed_data_seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    /// Write per-round plans and ledgers for every cell.
    #[serde(default)]
    pub dump_plans: bool,
    /// Free-form notes such as desk-scaling factors.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

fn default_ridge() -> f64 {
    0.01
}
fn default_c() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| AqkaError::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can fail before any cell runs.
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(AqkaError::Config("seeds must be at least 1".into()));
        }
        if self.budgets.is_empty() && self.budget_multipliers.is_empty() {
            return Err(AqkaError::Config("budget grid is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(AqkaError::Config("method list is empty".into()));
        }
        for m in &self.methods {
            Method::parse(m)?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(AqkaError::Config("sweep has no values".into()));
            }
        }
        if !(self.ridge > 0.0) {
            return Err(AqkaError::Config("ridge must be positive".into()));
        }
        let mut a = self.aqka.clone();
        a.budget = 1;
        a.validate().map_err(|e| AqkaError::Config(e.to_string()))
    }

    /// Resolved budgets for a training set of size `n`.
    pub fn budgets_for(&self, n: usize) -> Vec<u64> {
        if self.budget_multipliers.is_empty() {
            self.budgets.clone()
        } else {
            let m = n_pairs(n) as f64;
            self.budget_multipliers
                .iter()
                .map(|x| ((x * m).round() as u64).max(1))
                .collect()
        }
    }

    pub fn sweep_values(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            None => vec![None],
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
        }
    }
}
