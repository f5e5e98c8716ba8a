use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BLOCK: usize = 4096;

/// Risk-neutral dynamics simulated by [`mc_price`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum McModel {
    /// `dS = rS dt + σS dW`, stepped exactly in log space.
    Gbm { r: f64, sigma: f64 },
    /// `dS = rS dt + σS^{β/2} dW`, Euler steps, absorbed at zero.
    Cev { r: f64, sigma: f64, beta: f64 },
    /// Heston with full truncation `v⁺ = max(v, 0)` in drift and diffusion;
    /// the price is stepped in log space.
    Heston { r: f64, kappa: f64, theta: f64, sigma: f64, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: 1_000_000, steps: 500, seed: 0 }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 {
            return Err(Error::Config("Monte Carlo needs at least one path and one step".into()));
        }
        Ok(())
    }
}

/// Discounted mean payoff and its standard error.
///
/// Paths are split into fixed blocks, each with its own ChaCha8 stream, so
/// the result does not depend on the thread count. `v0` is ignored unless
/// the model is Heston.
pub fn mc_price<P>(model: &McModel, payoff: P, s0: f64, v0: f64, tau: f64, cfg: &McConfig) -> Result<(f64, f64)>
where
    P: Fn(f64) -> f64 + Sync,
{
    cfg.validate()?;
    if !(s0 >= 0.0) || !(tau >= 0.0) || !(v0 >= 0.0) {
        return Err(Error::Domain(format!("Monte Carlo start S0 = {s0}, v0 = {v0}, tau = {tau}")));
    }
    let blocks = cfg.paths.div_ceil(BLOCK);
    let dt = tau / cfg.steps as f64;
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let n = BLOCK.min(cfg.paths - b * BLOCK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let st = simulate(model, s0, v0, dt, cfg.steps, &mut rng);
                let x = payoff(st);
                s1 += x;
                s2 += x * x;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = cfg.paths as f64;
    let mean = s1 / n;
    let var = if cfg.paths > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let r = match model {
        McModel::Gbm { r, .. } | McModel::Cev { r, .. } | McModel::Heston { r, .. } => *r,
    };
    let disc = (-r * tau).exp();
    Ok((disc * mean, disc * (var / n).sqrt()))
}

fn simulate(model: &McModel, s0: f64, v0: f64, dt: f64, steps: usize, rng: &mut ChaCha8Rng) -> f64 {
    let sq = dt.sqrt();
    match *model {
        McModel::Gbm { r, sigma } => {
            let mut ls = s0.ln();
            for _ in 0..steps {
                let z: f64 = rng.sample(StandardNormal);
                ls += (r - 0.5 * sigma * sigma) * dt + sigma * sq * z;
            }
            ls.exp()
        }
        McModel::Cev { r, sigma, beta } => {
            let mut s = s0;
            for _ in 0..steps {
                if s <= 0.0 {
                    return 0.0;
                }
                let z: f64 = rng.sample(StandardNormal);
                s += r * s * dt + sigma * s.powf(0.5 * beta) * sq * z;
            }
            s.max(0.0)
        }
        McModel::Heston { r, kappa, theta, sigma, rho } => {
            let mut ls = s0.ln();
            let mut v = v0;
            let rho_c = (1.0 - rho * rho).max(0.0).sqrt();
            for _ in 0..steps {
                let z1: f64 = rng.sample(StandardNormal);
                let z3: f64 = rng.sample(StandardNormal);
                let z2 = rho * z1 + rho_c * z3;
                let vp = v.max(0.0);
                let root = (vp * dt).sqrt();
                ls += (r - 0.5 * vp) * dt + root * z1;
                v += kappa * (theta - vp) * dt + sigma * root * z2;
            }
            ls.exp()
        }
    }
}
