//! Built-in experiment setups.

use std::path::PathBuf;

use pinn_pricing::models::{BarlesSonerParams, CevParams, GbsParams, HestonParams, PdeModel};
use pinn_pricing::sampling::PointCounts;
use pinn_pricing::training::{Strategy, TrainConfig};

use crate::config::{RunConfig, SCHEMA_VERSION};

pub const NAMES: [&str; 5] = ["example1", "example2", "example3", "example4", "example4_full"];

const ONE_FACTOR: PointCounts = PointCounts { fixed: 1500, movable: 500, initial: 100, boundary: 200 };
const HESTON_REDUCED: PointCounts = PointCounts { fixed: 2000, movable: 500, initial: 200, boundary: 400 };
const HESTON_FULL: PointCounts = PointCounts { fixed: 15000, movable: 5000, initial: 1000, boundary: 2000 };

pub fn preset(name: &str) -> Option<RunConfig> {
    let (model, budget) = match name {
        "example1" => (PdeModel::Gbs(GbsParams::default()), ONE_FACTOR),
        "example2" => (PdeModel::BarlesSoner(BarlesSonerParams::default()), ONE_FACTOR),
        "example3" => (PdeModel::Cev(CevParams::default()), ONE_FACTOR),
        "example4" => (PdeModel::Heston(HestonParams::default()), HESTON_REDUCED),
        "example4_full" => (PdeModel::Heston(HestonParams::default()), HESTON_FULL),
        _ => return None,
    };
    Some(RunConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        model,
        strategies: Strategy::ALL.to_vec(),
        budgets: vec![budget],
        train: TrainConfig { counts: budget, ..TrainConfig::default() },
        reps: 1,
        seed: 0,
        out: PathBuf::from("runs").join(name),
    })
}
