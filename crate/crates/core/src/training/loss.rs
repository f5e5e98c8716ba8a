//! Batched PINN loss and its parameter gradient.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PdeModel;
use crate::network::batch::{Channels, Engine, Forward};
use crate::network::{Architecture, NetworkParams};
use crate::points::PointSet;
use crate::sampling::CollocationState;

const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub omega_p: f64,
    pub omega_b: f64,
    pub omega_i: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { omega_p: 1.0, omega_b: 1.0, omega_i: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.omega_p, self.omega_b, self.omega_i];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config(format!("loss weights must be non-negative and not all zero: {self:?}")));
        }
        Ok(())
    }
}

/// Loss components; `total = ω_p·pde + ω_b·boundary + ω_i·initial`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub pde: f64,
    pub boundary: f64,
    pub initial: f64,
}

/// Loss over a fixed set of collocation points.
///
/// Boundary and data targets are computed once at construction; only the
/// interior residual points change between rounds.
#[derive(Debug, Clone)]
pub struct LossEvaluator {
    model: PdeModel,
    engine: Engine,
    weights: LossWeights,
    residual_channels: Channels,
    value_channels: Channels,
    residual_pts: PointSet,
    boundary_pts: PointSet,
    boundary_targets: Vec<f64>,
    initial_pts: PointSet,
    initial_targets: Vec<f64>,
}

struct Partial {
    sum: f64,
    grad: Vec<f64>,
}

impl LossEvaluator {
    pub fn new(model: &PdeModel, arch: &Architecture, state: &CollocationState, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        if arch.input_dim() != model.input_dim() {
            return Err(Error::Shape(format!(
                "network takes {} inputs, model {} has {}",
                arch.input_dim(),
                model.name(),
                model.input_dim()
            )));
        }
        let d = model.input_dim();
        let ta = d - 1;
        let boundary_targets: Vec<f64> = {
            let pts: Vec<&[f64]> = state.boundary().iter().collect();
            pts.par_iter().map(|x| model.boundary_value(x)).collect::<Result<_>>()?
        };
        let initial_targets = state.initial().iter().map(|x| model.initial_value(&x[..ta])).collect();
        let mut ev = Self {
            model: model.clone(),
            engine: Engine::new(arch)?,
            weights,
            residual_channels: Channels::with_pairs(d, &model.hessian_pairs()),
            value_channels: Channels::value_only(d),
            residual_pts: PointSet::new(d),
            boundary_pts: state.boundary().clone(),
            boundary_targets,
            initial_pts: state.initial().clone(),
            initial_targets,
        };
        ev.set_residual_points(state.residual_points())?;
        for (w, n, name) in
            [(weights.omega_b, ev.boundary_pts.len(), "boundary"), (weights.omega_i, ev.initial_pts.len(), "initial")]
        {
            if w > 0.0 && n == 0 {
                return Err(Error::Config(format!("{name} loss has weight {w} but no points")));
            }
        }
        Ok(ev)
    }

    pub fn set_residual_points(&mut self, pts: PointSet) -> Result<()> {
        if self.weights.omega_p > 0.0 && pts.is_empty() {
            return Err(Error::Config("PDE loss has positive weight but no residual points".into()));
        }
        self.residual_pts = pts;
        Ok(())
    }

    pub fn model(&self) -> &PdeModel {
        &self.model
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn param_count(&self) -> usize {
        self.engine.param_count()
    }

    pub fn loss(&self, params: &NetworkParams) -> Result<LossTerms> {
        self.run(params, None)
    }

    /// Loss terms, with `grad` overwritten by ∂total/∂Θ.
    pub fn loss_and_gradient(&self, params: &NetworkParams, grad: &mut [f64]) -> Result<LossTerms> {
        if grad.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "gradient buffer of {} for {} parameters",
                grad.len(),
                self.param_count()
            )));
        }
        self.run(params, Some(grad))
    }

    fn run(&self, params: &NetworkParams, grad: Option<&mut [f64]>) -> Result<LossTerms> {
        let want = grad.is_some();
        let np = self.residual_pts.len();
        let nb = self.boundary_pts.len();
        let ni = self.initial_pts.len();
        let cp = if np > 0 { 2.0 * self.weights.omega_p / np as f64 } else { 0.0 };
        let cb = if nb > 0 { 2.0 * self.weights.omega_b / nb as f64 } else { 0.0 };
        let ci = if ni > 0 { 2.0 * self.weights.omega_i / ni as f64 } else { 0.0 };

        let pde = self.residual_part(params, cp, want)?;
        let bnd = self.value_part(params, &self.boundary_pts, &self.boundary_targets, cb, want)?;
        let ini = self.value_part(params, &self.initial_pts, &self.initial_targets, ci, want)?;
        let mean = |s: f64, n: usize| if n > 0 { s / n as f64 } else { 0.0 };
        let (lp, lb, li) = (mean(pde.sum, np), mean(bnd.sum, nb), mean(ini.sum, ni));
        let total = self.weights.omega_p * lp + self.weights.omega_b * lb + self.weights.omega_i * li;
        if let Some(g) = grad {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = pde.grad[k] + bnd.grad[k] + ini.grad[k];
            }
        }
        Ok(LossTerms { total, pde: lp, boundary: lb, initial: li })
    }

    fn chunks(&self, pts: &PointSet) -> Vec<(usize, usize)> {
        (0..pts.len()).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(pts.len()))).collect()
    }

    fn reduce(&self, parts: Vec<Partial>, want: bool) -> Partial {
        let mut out = Partial { sum: 0.0, grad: vec![0.0; self.param_count()] };
        for p in parts {
            out.sum += p.sum;
            if want {
                out.grad.iter_mut().zip(&p.grad).for_each(|(a, b)| *a += b);
            }
        }
        out
    }

    fn residual_part(&self, params: &NetworkParams, coef: f64, want: bool) -> Result<Partial> {
        let d = self.model.input_dim();
        let pts = &self.residual_pts;
        let ch = &self.residual_channels;
        let c = ch.count();
        let pairs = ch.pairs().to_vec();
        let parts = self
            .chunks(pts)
            .into_par_iter()
            .map(|(s, e)| {
                let flat = &pts.as_flat()[s * d..e * d];
                let fwd = self.engine.forward(params, flat, ch)?;
                let mut sum = 0.0;
                let mut seed = if want { vec![0.0; (e - s) * c] } else { Vec::new() };
                for p in 0..e - s {
                    let x = &flat[p * d..(p + 1) * d];
                    let (r, sens) = self.model.residual_with_sensitivity(x, &fwd.jet(p))?;
                    if !r.is_finite() {
                        return Err(Error::Numeric(format!("PDE residual at {x:?}")));
                    }
                    sum += r * r;
                    if want {
                        let f = coef * r;
                        let row = &mut seed[p * c..(p + 1) * c];
                        row[0] = f * sens.value;
                        for i in 0..d {
                            row[ch.first_index(i)] = f * sens.d(i);
                        }
                        for &(i, j) in &pairs {
                            row[ch.pair_index(i, j).expect("requested pair")] = f * sens.d2(i, j);
                        }
                    }
                }
                let mut grad = Vec::new();
                if want {
                    grad = vec![0.0; self.param_count()];
                    self.engine.backward(params, &fwd, &seed, &mut grad)?;
                }
                Ok(Partial { sum, grad })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.reduce(parts, want))
    }

    fn value_part(
        &self,
        params: &NetworkParams,
        pts: &PointSet,
        targets: &[f64],
        coef: f64,
        want: bool,
    ) -> Result<Partial> {
        let d = self.model.input_dim();
        let ch = &self.value_channels;
        let parts = self
            .chunks(pts)
            .into_par_iter()
            .map(|(s, e)| {
                let fwd = self.engine.forward(params, &pts.as_flat()[s * d..e * d], ch)?;
                let mut sum = 0.0;
                let mut seed = vec![0.0; if want { e - s } else { 0 }];
                for p in 0..e - s {
                    let diff = fwd.value(p) - targets[s + p];
                    if !diff.is_finite() {
                        return Err(Error::Numeric(format!("network output at {:?}", pts.get(s + p))));
                    }
                    sum += diff * diff;
                    if want {
                        seed[p] = coef * diff;
                    }
                }
                let mut grad = Vec::new();
                if want {
                    grad = vec![0.0; self.param_count()];
                    self.engine.backward(params, &fwd, &seed, &mut grad)?;
                }
                Ok(Partial { sum, grad })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.reduce(parts, want))
    }

    fn map_chunks<T: Send>(
        &self,
        params: &NetworkParams,
        pts: &PointSet,
        ch: &Channels,
        per_point: impl Fn(&[f64], &Forward, usize) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        let d = self.model.input_dim();
        let parts = self
            .chunks(pts)
            .into_par_iter()
            .map(|(s, e)| {
                let flat = &pts.as_flat()[s * d..e * d];
                let fwd = self.engine.forward(params, flat, ch)?;
                (0..e - s).map(|p| per_point(&flat[p * d..(p + 1) * d], &fwd, p)).collect::<Result<Vec<T>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.into_iter().flatten().collect())
    }

    /// Network values at `pts`.
    pub fn predict(&self, params: &NetworkParams, pts: &PointSet) -> Result<Vec<f64>> {
        self.map_chunks(params, pts, &self.value_channels, |_, f, p| Ok(f.value(p)))
    }

    /// PDE residuals of the network at `pts`.
    pub fn residuals(&self, params: &NetworkParams, pts: &PointSet) -> Result<Vec<f64>> {
        self.map_chunks(params, pts, &self.residual_channels, |x, f, p| self.model.residual(x, &f.jet(p)))
    }

    /// `‖∇_x f‖` over every input coordinate at `pts`.
    pub fn gradient_norms(&self, params: &NetworkParams, pts: &PointSet) -> Result<Vec<f64>> {
        let ch = Channels::gradient(self.model.input_dim());
        self.map_chunks(params, pts, &ch, |_, f, p| {
            let out = f.output(p);
            Ok(out[1..].iter().map(|v| v * v).sum::<f64>().sqrt())
        })
    }
}
