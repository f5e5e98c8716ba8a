//! Versioned JSON run configuration and its resolution against presets.

use std::path::{Path, PathBuf};

use pinn_pricing::models::PdeModel;
use pinn_pricing::sampling::PointCounts;
use pinn_pricing::training::{LossWeights, NetworkConfig, Strategy, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::presets;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Optional overrides of the training schedule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub adam_iters: Option<usize>,
    pub lbfgs_iters: Option<usize>,
    pub lr: Option<f64>,
    pub k: Option<f64>,
    pub rounds: Option<usize>,
    pub epsilon: Option<f64>,
    pub n_max: Option<usize>,
    pub candidate_factor: Option<usize>,
    pub weights: Option<LossWeights>,
    pub lbfgs_memory: Option<usize>,
    pub network: Option<NetworkConfig>,
    pub eval_nodes: Option<usize>,
    pub eval_time_slice: Option<f64>,
}

/// The file as written by the user; every field but the schema version is
/// optional and falls back to the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub name: Option<String>,
    pub model: Option<PdeModel>,
    pub strategies: Option<Vec<Strategy>>,
    pub budgets: Option<Vec<PointCounts>>,
    pub train: Option<TrainOverrides>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid {
                field: "schema_version".into(),
                message: format!("expected {SCHEMA_VERSION}, found {}", file.schema_version),
            });
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Command-line flags that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub preset: Option<String>,
    pub strategies: Option<Vec<Strategy>>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Fully resolved experiment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: PdeModel,
    pub strategies: Vec<Strategy>,
    pub budgets: Vec<PointCounts>,
    /// Shared schedule; strategy, counts and seed are set per cell.
    pub train: TrainConfig,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// One (strategy, budget, repetition) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub strategy: Strategy,
    pub counts: PointCounts,
    pub rep: usize,
    pub seed: u64,
}

impl Cell {
    /// Directory of the cell, relative to the run directory.
    pub fn dir(&self) -> PathBuf {
        let c = self.counts;
        PathBuf::from("cells")
            .join(format!("{}_p{}-{}_i{}_b{}", self.strategy.label(), c.fixed, c.movable, c.initial, c.boundary))
            .join(format!("rep{}", self.rep))
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

impl RunConfig {
    pub fn resolve(file: Option<ConfigFile>, cli: CliOverrides) -> Result<Self, ConfigError> {
        let file = file.unwrap_or(ConfigFile { schema_version: SCHEMA_VERSION, ..Default::default() });
        let preset_name = cli.preset.clone().or(file.preset.clone());
        let mut cfg = match &preset_name {
            Some(p) => presets::preset(p).ok_or_else(|| {
                invalid("preset", format!("unknown preset {p:?}; available: {}", presets::NAMES.join(", ")))
            })?,
            None => {
                let model = file.model.clone().ok_or_else(|| invalid("model", "required when no preset is given"))?;
                let mut base = presets::preset("example1").expect("built-in preset");
                base.name = model.name().to_string();
                base.out = PathBuf::from("runs").join(model.name());
                base.model = model;
                base
            }
        };
        if let Some(m) = file.model {
            cfg.model = m;
        }
        if let Some(n) = file.name {
            cfg.name = n;
        }
        if let Some(s) = file.strategies {
            cfg.strategies = s;
        }
        if let Some(b) = file.budgets {
            cfg.budgets = b;
        }
        if let Some(t) = file.train {
            apply_train(&mut cfg.train, t);
        }
        cfg.reps = cli.reps.or(file.reps).unwrap_or(cfg.reps);
        cfg.seed = cli.seed.or(file.seed).unwrap_or(cfg.seed);
        cfg.out = cli.out.or(file.out).unwrap_or(cfg.out);
        if let Some(s) = cli.strategies {
            cfg.strategies = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| invalid("model", e.to_string()))?;
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "at least one strategy is required"));
        }
        if self.budgets.is_empty() {
            return Err(invalid("budgets", "at least one point budget is required"));
        }
        for (i, b) in self.budgets.iter().enumerate() {
            if b.fixed == 0 || b.movable == 0 || b.initial == 0 || b.boundary == 0 {
                return Err(invalid(&format!("budgets[{i}]"), "every point count must be positive"));
            }
        }
        if self.reps == 0 {
            return Err(invalid("reps", "must be at least 1"));
        }
        if self.train.rounds == 0 {
            return Err(invalid("train.rounds", "must be at least 1"));
        }
        self.train.validate().map_err(|e| invalid("train", e.to_string()))?;
        for s in &self.strategies {
            self.train.network.architecture(&self.model, *s).map_err(|e| invalid("train.network", e.to_string()))?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for counts in &self.budgets {
            for strategy in &self.strategies {
                for rep in 0..self.reps {
                    cells.push(Cell { strategy: *strategy, counts: *counts, rep, seed: self.seed + rep as u64 });
                }
            }
        }
        cells
    }

    /// Training settings of one cell.
    pub fn train_config(&self, cell: &Cell) -> TrainConfig {
        TrainConfig { strategy: cell.strategy, counts: cell.counts, seed: cell.seed, ..self.train.clone() }
    }
}

fn apply_train(t: &mut TrainConfig, o: TrainOverrides) {
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { t.$f = v; } )* };
    }
    set!(adam_iters, lbfgs_iters, lr, k, rounds, epsilon, candidate_factor, weights, lbfgs_memory, network, eval_nodes);
    if o.n_max.is_some() {
        t.n_max = o.n_max;
    }
    if o.eval_time_slice.is_some() {
        t.eval_time_slice = o.eval_time_slice;
    }
}
