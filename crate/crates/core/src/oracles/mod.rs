//! Reference prices and error metrics.

mod cev;
mod chisq;
mod heston;
mod mc;
mod quadrature;

pub use cev::cev_put_price;
pub use chisq::{noncentral_chisq_cdf, noncentral_chisq_sf};
pub use heston::heston_call_price;
pub use mc::{mc_price, McConfig, McModel};
pub use quadrature::GaussLegendre;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::DiffValue;
use crate::error::{Error, Result};
use crate::models::PdeModel;
use crate::points::PointSet;

/// `cos(2πt)·cos(2πS)`.
pub fn gbs_exact(s: f64, t: f64) -> f64 {
    (2.0 * PI * t).cos() * (2.0 * PI * s).cos()
}

/// Value, gradient and Hessian of [`gbs_exact`] in `(S, t)`.
pub fn gbs_exact_jet(s: f64, t: f64) -> DiffValue {
    let w = 2.0 * PI;
    let (cs, ss) = ((w * s).cos(), (w * s).sin());
    let (ct, st) = ((w * t).cos(), (w * t).sin());
    let mut j = DiffValue::constant(2, ct * cs);
    j.set_d(0, -w * ct * ss);
    j.set_d(1, -w * st * cs);
    j.set_d2(0, 0, -w * w * ct * cs);
    j.set_d2(0, 1, w * w * st * ss);
    j.set_d2(1, 1, -w * w * ct * cs);
    j
}

/// `‖Û − U‖₂ / ‖U‖₂`.
pub fn relative_l2(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::Shape(format!(
            "relative_l2: {} predictions against {} reference values",
            predicted.len(),
            reference.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, u) in predicted.iter().zip(reference) {
        num += (p - u) * (p - u);
        den += u * u;
    }
    if !(den > 0.0) {
        return Err(Error::Numeric("relative_l2: reference has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

/// Tensor grid used for error evaluation.
///
/// Every input coordinate owns an axis; an axis with a single node pins that
/// coordinate (the time slice of the Heston surface, for instance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    axes: Vec<Vec<f64>>,
    #[serde(skip)]
    points: PointSet,
}

impl EvalGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::Shape("eval grid needs at least one node per axis".into()));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.windows(2).any(|w| !(w[0] < w[1])) || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("eval grid axis {k} is not strictly increasing")));
            }
        }
        let dim = axes.len();
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = PointSet::with_capacity(dim, total);
        let mut idx = vec![0usize; dim];
        let mut x = vec![0.0; dim];
        for _ in 0..total {
            for k in 0..dim {
                x[k] = axes[k][idx[k]];
            }
            points.push(&x);
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self { axes, points })
    }

    /// `n` equispaced nodes per free axis over the model's box. For
    /// two-factor models the time coordinate is pinned at `time_slice`
    /// (default: the far end of the time axis).
    pub fn for_model(model: &PdeModel, n: usize, time_slice: Option<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("eval grid needs at least 2 nodes per axis".into()));
        }
        let dom = model.domain();
        let ta = dom.time_axis();
        let mut axes = Vec::with_capacity(dom.dim());
        for k in 0..dom.dim() {
            if k == ta && model.space_dim() > 1 {
                let t = time_slice.unwrap_or(dom.upper[ta]);
                if t < dom.lower[ta] || t > dom.upper[ta] {
                    return Err(Error::Domain(format!("time slice {t} outside the domain")));
                }
                axes.push(vec![t]);
            } else {
                axes.push(linspace(dom.lower[k], dom.upper[k], n));
            }
        }
        Self::new(axes)
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reference values at every grid point, in point order.
    pub fn reference_values(&self, model: &PdeModel) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        if !model.has_reference() {
            return Err(Error::Unsupported(format!("{} has no reference solution", model.name())));
        }
        let pts: Vec<&[f64]> = self.points.iter().collect();
        pts.par_iter().map(|x| model.reference(x).expect("reference exists")).collect()
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let h = (b - a) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
    v[n - 1] = b;
    v
}
