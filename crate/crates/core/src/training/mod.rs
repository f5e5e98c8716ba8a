//! The PINN loss, the per-round optimization schedule and the adaptive
//! outer loop that moves collocation points between rounds.

mod loss;

pub use loss::{LossEvaluator, LossTerms, LossWeights};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PdeModel;
use crate::network::{init_params, Architecture, InputScaling, NetworkParams};
use crate::optim::{lbfgs_minimize, Adam, AdamConfig, LbfgsConfig, LbfgsOutcome, Termination};
use crate::oracles::{relative_l2, EvalGrid};
use crate::sampling::{
    monitor_density, residual_density, sample_uniform_with, CollocationState, DensityKind, PointCounts,
};

/// Network plus point-movement scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "PINN")]
    Pinn,
    #[serde(rename = "RAM-PINN")]
    RamPinn,
    #[serde(rename = "WAM-PINN")]
    WamPinn,
    #[serde(rename = "AM-PIRN")]
    AmPirn,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Pinn, Strategy::RamPinn, Strategy::WamPinn, Strategy::AmPirn];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Pinn => "PINN",
            Strategy::RamPinn => "RAM-PINN",
            Strategy::WamPinn => "WAM-PINN",
            Strategy::AmPirn => "AM-PIRN",
        }
    }

    pub fn density(self) -> DensityKind {
        match self {
            Strategy::Pinn => DensityKind::Static,
            Strategy::RamPinn | Strategy::AmPirn => DensityKind::Residual,
            Strategy::WamPinn => DensityKind::Monitor,
        }
    }

    pub fn uses_resnet(self) -> bool {
        self == Strategy::AmPirn
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_uppercase().replace('_', "-");
        Strategy::ALL.into_iter().find(|st| st.label() == key).ok_or_else(|| {
            Error::Config(format!("unknown strategy {s:?} (expected PINN, RAM-PINN, WAM-PINN or AM-PIRN)"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkFamily {
    Mlp,
    ResNet,
}

/// Sizes of the two network families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Overrides the strategy's usual family (ResNet for AM-PIRN, MLP otherwise).
    pub family: Option<NetworkFamily>,
    pub mlp_hidden_layers: usize,
    pub mlp_width: usize,
    pub resnet_blocks: usize,
    pub resnet_block_layers: usize,
    pub resnet_width: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            family: None,
            mlp_hidden_layers: 5,
            mlp_width: 20,
            resnet_blocks: 3,
            resnet_block_layers: 2,
            resnet_width: 20,
        }
    }
}

impl NetworkConfig {
    /// Network for `strategy`, with inputs rescaled from the model's box.
    pub fn architecture(&self, model: &PdeModel, strategy: Strategy) -> Result<Architecture> {
        let dom = model.domain();
        let scaling = InputScaling { lower: dom.lower, upper: dom.upper };
        let family = match (self.family, strategy) {
            (Some(NetworkFamily::Mlp), Strategy::AmPirn) => {
                return Err(Error::Config("AM-PIRN requires the residual network".into()))
            }
            (Some(f), _) => f,
            (None, s) if s.uses_resnet() => NetworkFamily::ResNet,
            (None, _) => NetworkFamily::Mlp,
        };
        let mut arch = match family {
            NetworkFamily::ResNet => Architecture::resnet(scaling),
            NetworkFamily::Mlp => Architecture::mlp(scaling),
        };
        match &mut arch {
            Architecture::Mlp(a) => {
                a.hidden_layers = self.mlp_hidden_layers;
                a.width = self.mlp_width;
            }
            Architecture::ResNet(a) => {
                a.blocks = self.resnet_blocks;
                a.block_hidden_layers = self.resnet_block_layers;
                a.width = self.resnet_width;
            }
        }
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    /// Adam steps per round.
    pub adam_iters: usize,
    /// L-BFGS iterations per round.
    pub lbfgs_iters: usize,
    pub lr: f64,
    pub k: f64,
    pub rounds: usize,
    /// Stop once the total loss after a round falls below this.
    pub epsilon: f64,
    /// Stop once the optimizer iterations of all rounds exceed this.
    pub n_max: Option<usize>,
    pub seed: u64,
    pub counts: PointCounts,
    /// Candidate pool size as a multiple of the movable count.
    pub candidate_factor: usize,
    pub weights: LossWeights,
    pub lbfgs_memory: usize,
    pub network: NetworkConfig,
    pub eval_nodes: usize,
    /// Time coordinate of the evaluation slice for two-factor models.
    pub eval_time_slice: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::AmPirn,
            adam_iters: 2000,
            lbfgs_iters: 5000,
            lr: 1e-3,
            k: 2.0,
            rounds: 10,
            epsilon: 0.0,
            n_max: None,
            seed: 0,
            counts: PointCounts { fixed: 1500, movable: 500, initial: 100, boundary: 200 },
            candidate_factor: 10,
            weights: LossWeights::default(),
            lbfgs_memory: 20,
            network: NetworkConfig::default(),
            eval_nodes: 100,
            eval_time_slice: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::Config(format!("power k must be non-negative, got {}", self.k)));
        }
        if self.epsilon.is_nan() {
            return Err(Error::Config("epsilon is NaN".into()));
        }
        if self.candidate_factor == 0 {
            return Err(Error::Config("candidate_factor must be at least 1".into()));
        }
        if self.eval_nodes < 2 {
            return Err(Error::Config("eval_nodes must be at least 2".into()));
        }
        self.weights.validate()?;
        self.lbfgs().validate()
    }

    pub fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            max_iters: self.lbfgs_iters,
            memory: self.lbfgs_memory,
            initial_step: self.lr,
            ..Default::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: usize,
    /// Running optimizer iteration count over the whole run.
    pub iteration: usize,
    pub phase: Phase,
    pub loss: f64,
}

/// What one round of optimization did.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTraining {
    pub initial: LossTerms,
    pub final_loss: LossTerms,
    pub adam_iters: usize,
    /// Loss seen at each Adam step (before the update) then after each L-BFGS iteration.
    pub trace: Vec<(Phase, f64)>,
    pub lbfgs: Option<LbfgsOutcome>,
}

/// Fresh Adam for `adam_iters` steps, then L-BFGS for up to `lbfgs_iters`
/// iterations, on the evaluator's current points.
pub fn train_round(ev: &LossEvaluator, params: &mut NetworkParams, cfg: &TrainConfig) -> Result<RoundTraining> {
    let n = params.len();
    let initial = ev.loss(params)?;
    let mut trace = Vec::with_capacity(cfg.adam_iters + cfg.lbfgs_iters);
    let mut grad = vec![0.0; n];
    let mut adam = Adam::new(cfg.adam(), n);
    for _ in 0..cfg.adam_iters {
        let l = ev.loss_and_gradient(params, &mut grad)?;
        trace.push((Phase::Adam, l.total));
        adam.step(params.as_mut_slice(), &grad)?;
    }
    let mut lbfgs = None;
    if cfg.lbfgs_iters > 0 {
        let mut x = params.as_slice().to_vec();
        let scratch = params.clone();
        let out = lbfgs_minimize(
            |theta, g| {
                let p = scratch.with_values(theta.to_vec())?;
                Ok(ev.loss_and_gradient(&p, g)?.total)
            },
            &mut x,
            &cfg.lbfgs(),
        );
        let out = out.map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("L-BFGS phase: {msg}")),
            other => other,
        })?;
        trace.extend(out.steps.iter().map(|s| (Phase::Lbfgs, s.loss_after)));
        *params = params.with_values(x)?;
        lbfgs = Some(out);
    }
    let final_loss = ev.loss(params)?;
    Ok(RoundTraining { initial, final_loss, adam_iters: cfg.adam_iters, trace, lbfgs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    IterationBudget,
    RoundsExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub loss: LossTerms,
    /// Mean squared PDE residual over the evaluation grid nodes where the
    /// PDE governs (boundary faces and the data surface excluded).
    pub residual_mse: f64,
    pub relative_l2: Option<f64>,
    pub adam_iters: usize,
    pub lbfgs_iters: usize,
    pub lbfgs_termination: Option<Termination>,
    pub lbfgs_pairs_skipped: usize,
    pub armijo_violations: usize,
    pub wall_seconds: f64,
    /// The resampling after this round fell back to uniform weights.
    pub density_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub model: String,
    pub strategy: Strategy,
    pub architecture: Architecture,
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
    pub trace: Vec<TraceEntry>,
    /// Point sets used for training in each round.
    pub snapshots: Vec<CollocationState>,
    pub stop_reason: StopReason,
    pub params: NetworkParams,
    pub grid: EvalGrid,
    pub prediction: Vec<f64>,
    pub residual: Vec<f64>,
    pub reference: Option<Vec<f64>>,
}

impl RunReport {
    pub fn final_round(&self) -> &RoundRecord {
        self.rounds.last().expect("at least one round")
    }
}

/// SplitMix64 finalizer, to derive independent seeds from one run seed.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the adaptive algorithm with reference values computed on the
/// default grid.
pub fn solve(model: &PdeModel, cfg: &TrainConfig) -> Result<RunReport> {
    cfg.validate()?;
    let grid = EvalGrid::for_model(model, cfg.eval_nodes, cfg.eval_time_slice)?;
    let reference = if model.has_reference() { Some(grid.reference_values(model)?) } else { None };
    solve_on_grid(model, cfg, grid, reference)
}

/// Runs the adaptive algorithm, reporting against the given grid values.
pub fn solve_on_grid(
    model: &PdeModel,
    cfg: &TrainConfig,
    grid: EvalGrid,
    reference: Option<Vec<f64>>,
) -> Result<RunReport> {
    cfg.validate()?;
    model.validate()?;
    if let Some(r) = &reference {
        if r.len() != grid.len() {
            return Err(Error::Shape(format!("{} reference values for {} grid points", r.len(), grid.len())));
        }
    }
    let governed: Vec<bool> = grid.points().iter().map(|x| model.pde_governs(x)).collect();
    let n_governed = governed.iter().filter(|&&g| g).count();
    if n_governed == 0 {
        return Err(Error::Config("evaluation grid has no nodes off the boundary and data surface".into()));
    }
    let arch = cfg.network.architecture(model, cfg.strategy)?;
    let mut params = init_params(&arch, derive_seed(cfg.seed, 1));
    let mut state = CollocationState::initialize(model, cfg.counts, derive_seed(cfg.seed, 2))?;
    let mut ev = LossEvaluator::new(model, &arch, &state, cfg.weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3));
    let domain = model.domain();
    let pool = cfg.candidate_factor * cfg.counts.movable;

    let mut rounds = Vec::new();
    let mut trace = Vec::new();
    let mut snapshots = Vec::new();
    let mut iterations = 0usize;
    let mut stop_reason = StopReason::RoundsExhausted;
    for round in 1..=cfg.rounds {
        let started = Instant::now();
        snapshots.push(state.clone());
        let trained = train_round(&ev, &mut params, cfg)?;
        for (phase, loss) in &trained.trace {
            iterations += 1;
            trace.push(TraceEntry { round, iteration: iterations, phase: *phase, loss: *loss });
        }
        let residual = ev.residuals(&params, grid.points())?;
        let residual_mse =
            residual.iter().zip(&governed).filter(|(_, g)| **g).map(|(r, _)| r * r).sum::<f64>() / n_governed as f64;
        let relative = match &reference {
            Some(r) => Some(relative_l2(&ev.predict(&params, grid.points())?, r)?),
            None => None,
        };
        let lb = trained.lbfgs.as_ref();
        let mut record = RoundRecord {
            round,
            loss: trained.final_loss,
            residual_mse,
            relative_l2: relative,
            adam_iters: trained.adam_iters,
            lbfgs_iters: lb.map_or(0, |o| o.iterations),
            lbfgs_termination: lb.map(|o| o.termination),
            lbfgs_pairs_skipped: lb.map_or(0, |o| o.pairs_skipped),
            armijo_violations: lb.map_or(0, |o| o.steps.iter().filter(|s| !s.armijo).count()),
            wall_seconds: 0.0,
            density_fallback: false,
        };

        let done = if trained.final_loss.total < cfg.epsilon {
            Some(StopReason::Tolerance)
        } else if cfg.n_max.is_some_and(|n| iterations > n) {
            Some(StopReason::IterationBudget)
        } else if round == cfg.rounds {
            Some(StopReason::RoundsExhausted)
        } else {
            None
        };
        if done.is_none() && cfg.strategy.density() != DensityKind::Static && cfg.counts.movable > 0 {
            let candidates = sample_uniform_with(&domain, pool, &mut rng)?;
            let density = match cfg.strategy.density() {
                DensityKind::Residual => residual_density(&ev.residuals(&params, &candidates)?, cfg.k)?,
                DensityKind::Monitor => monitor_density(&ev.gradient_norms(&params, &candidates)?, cfg.k)?,
                DensityKind::Static => unreachable!("static strategies never resample"),
            };
            record.density_fallback = density.used_uniform_fallback();
            state = state.resample_movable(&candidates, &density, &mut rng)?;
            ev.set_residual_points(state.residual_points())?;
        }
        record.wall_seconds = started.elapsed().as_secs_f64();
        rounds.push(record);
        if let Some(reason) = done {
            stop_reason = reason;
            break;
        }
    }

    let prediction = ev.predict(&params, grid.points())?;
    let residual = ev.residuals(&params, grid.points())?;
    Ok(RunReport {
        model: model.name().to_string(),
        strategy: cfg.strategy,
        architecture: arch,
        seed: cfg.seed,
        rounds,
        trace,
        snapshots,
        stop_reason,
        params,
        grid,
        prediction,
        residual,
        reference,
    })
}
