//! Executes an experiment matrix and writes per-cell artifacts plus
//! `metrics.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pinn_pricing::network::checkpoint::Checkpoint;
use pinn_pricing::optim::Termination;
use pinn_pricing::oracles::EvalGrid;
use pinn_pricing::sampling::PointCounts;
use pinn_pricing::training::{solve_on_grid, RunReport, StopReason, Strategy};
use serde::{Deserialize, Serialize};

use crate::cache;
use crate::config::{Cell, RunConfig};
use crate::output;

pub const METRICS_FORMAT: &str = "pinn-pricing-metrics";
pub const METRICS_VERSION: u32 = 1;
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    pub rep: usize,
    pub seed: u64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub relative_l2: Option<f64>,
    pub residual_mse: Option<f64>,
    pub final_loss: Option<f64>,
    pub rounds_run: usize,
    pub stop_reason: Option<StopReason>,
    pub lbfgs_termination: Option<Termination>,
    /// Directory of the repetition, relative to the run directory.
    pub dir: String,
    /// Files written for the repetition, relative to the run directory.
    pub artifacts: Vec<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub strategy: Strategy,
    pub budget: PointCounts,
    pub status: Status,
    pub relative_l2: Option<Summary>,
    pub residual_mse: Option<Summary>,
    pub reps: Vec<RepMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub model: String,
    pub eval_nodes: usize,
    pub cells: Vec<CellMetrics>,
    pub wall_seconds: f64,
}

impl Metrics {
    pub fn load(dir: &Path) -> Result<Self, String> {
        let path = dir.join(METRICS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.status == Status::Failed)
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

fn rel(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

fn write_artifacts(root: &Path, rel_dir: &Path, cfg: &RunConfig, report: &RunReport) -> Result<Vec<String>, BoxError> {
    let dir = root.join(rel_dir);
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut emit = |name: String, write: &dyn Fn(&Path) -> std::io::Result<()>| -> std::io::Result<()> {
        write(&dir.join(&name))?;
        files.push(rel(&rel_dir.join(&name)));
        Ok(())
    };
    emit("convergence.csv".into(), &|p| output::write_convergence(p, report))?;
    emit("loss_trace.csv".into(), &|p| output::write_loss_trace(p, report))?;
    emit("field.csv".into(), &|p| output::write_field(p, &cfg.model, report))?;
    for round in 1..=report.snapshots.len() {
        emit(format!("points_round_{round}.csv"), &|p| output::write_points(p, &cfg.model, round, report))?;
    }
    emit("checkpoint.json".into(), &|p| {
        let ck =
            Checkpoint { architecture: report.architecture.clone(), seed: report.seed, params: report.params.clone() };
        std::fs::write(p, ck.to_json())
    })?;
    emit("rounds.json".into(), &|p| {
        std::fs::write(p, serde_json::to_string_pretty(&report.rounds).expect("rounds serialize"))
    })?;
    Ok(files)
}

fn run_cell(cfg: &RunConfig, cell: &Cell, grid: &EvalGrid, reference: &Option<Vec<f64>>) -> RepMetrics {
    let started = Instant::now();
    let rel_dir = cell.dir();
    let mut m = RepMetrics {
        rep: cell.rep,
        seed: cell.seed,
        status: Status::Failed,
        error: None,
        relative_l2: None,
        residual_mse: None,
        final_loss: None,
        rounds_run: 0,
        stop_reason: None,
        lbfgs_termination: None,
        dir: rel(&rel_dir),
        artifacts: Vec::new(),
        wall_seconds: 0.0,
    };
    let outcome = solve_on_grid(&cfg.model, &cfg.train_config(cell), grid.clone(), reference.clone())
        .map_err(BoxError::from)
        .and_then(|report| {
            let files = write_artifacts(&cfg.out, &rel_dir, cfg, &report)?;
            Ok((report, files))
        });
    match outcome {
        Ok((report, files)) => {
            let last = report.final_round();
            m.status = Status::Ok;
            m.relative_l2 = last.relative_l2;
            m.residual_mse = Some(last.residual_mse);
            m.final_loss = Some(last.loss.total);
            m.rounds_run = report.rounds.len();
            m.stop_reason = Some(report.stop_reason);
            m.lbfgs_termination = last.lbfgs_termination;
            m.artifacts = files;
        }
        Err(e) => m.error = Some(e.to_string()),
    }
    m.wall_seconds = started.elapsed().as_secs_f64();
    m
}

/// Runs every cell of the matrix. Cells that fail are recorded and the
/// remaining cells still run. `progress` receives one line per repetition.
pub fn run(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<Metrics, BoxError> {
    let started = Instant::now();
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;

    let grid = EvalGrid::for_model(&cfg.model, cfg.train.eval_nodes, cfg.train.eval_time_slice)?;
    let reference = cache::reference_values(&cfg.out, &cfg.model, &grid);
    let (reference, reference_error) = match reference {
        Ok(r) => (r, None),
        Err(e) => (None, Some(format!("reference solution: {e}"))),
    };

    let mut cells: Vec<CellMetrics> = Vec::new();
    for cell in cfg.cells() {
        let rep = match &reference_error {
            Some(err) => RepMetrics {
                rep: cell.rep,
                seed: cell.seed,
                status: Status::Failed,
                error: Some(err.clone()),
                relative_l2: None,
                residual_mse: None,
                final_loss: None,
                rounds_run: 0,
                stop_reason: None,
                lbfgs_termination: None,
                dir: rel(&cell.dir()),
                artifacts: Vec::new(),
                wall_seconds: 0.0,
            },
            None => run_cell(cfg, &cell, &grid, &reference),
        };
        progress(&match rep.status {
            Status::Ok => format!(
                "{} {} rep {}: relative L2 {} residual MSE {} ({:.1}s)",
                cell.strategy,
                budget_label(&cell.counts),
                cell.rep,
                rep.relative_l2.map_or("n/a".into(), |v| format!("{v:.3e}")),
                rep.residual_mse.map_or("n/a".into(), |v| format!("{v:.3e}")),
                rep.wall_seconds
            ),
            Status::Failed => format!(
                "{} {} rep {}: FAILED: {}",
                cell.strategy,
                budget_label(&cell.counts),
                cell.rep,
                rep.error.as_deref().unwrap_or("unknown error")
            ),
        });
        match cells.iter_mut().find(|c| c.strategy == cell.strategy && c.budget == cell.counts) {
            Some(c) => c.reps.push(rep),
            None => cells.push(CellMetrics {
                strategy: cell.strategy,
                budget: cell.counts,
                status: Status::Ok,
                relative_l2: None,
                residual_mse: None,
                reps: vec![rep],
            }),
        }
    }
    for c in &mut cells {
        let ok: Vec<&RepMetrics> = c.reps.iter().filter(|r| r.status == Status::Ok).collect();
        if ok.len() != c.reps.len() {
            c.status = Status::Failed;
        }
        c.relative_l2 = Summary::of(&ok.iter().filter_map(|r| r.relative_l2).collect::<Vec<_>>());
        c.residual_mse = Summary::of(&ok.iter().filter_map(|r| r.residual_mse).collect::<Vec<_>>());
    }

    let metrics = Metrics {
        format: METRICS_FORMAT.into(),
        version: METRICS_VERSION,
        name: cfg.name.clone(),
        model: cfg.model.name().into(),
        eval_nodes: cfg.train.eval_nodes,
        cells,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let path: PathBuf = cfg.out.join(METRICS_FILE);
    std::fs::write(path, serde_json::to_string_pretty(&metrics)?)?;
    Ok(metrics)
}

pub fn budget_label(c: &PointCounts) -> String {
    format!("{}+{}", c.fixed, c.movable)
}
