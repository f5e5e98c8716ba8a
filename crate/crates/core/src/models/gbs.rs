use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::DiffValue;
use crate::error::{Error, Result};

/// Coefficients of the manufactured-solution Black–Scholes test problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbsParams {
    pub sigma: f64,
    pub r: f64,
}

impl Default for GbsParams {
    fn default() -> Self {
        Self { sigma: 0.25, r: 0.05 }
    }
}

impl GbsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.r >= 0.0) {
            return Err(Error::Config(format!("gbs: need sigma > 0 and r >= 0, got {self:?}")));
        }
        Ok(())
    }

    /// Source term making `cos(2πt)·cos(2πS)` an exact solution.
    pub fn forcing(&self, s: f64, t: f64) -> f64 {
        let (cs, ss) = ((2.0 * PI * s).cos(), (2.0 * PI * s).sin());
        let (ct, st) = ((2.0 * PI * t).cos(), (2.0 * PI * t).sin());
        (self.r + 2.0 * PI * PI * self.sigma * self.sigma * s * s) * cs * ct
            + 2.0 * PI * cs * st
            + 2.0 * PI * self.r * s * ss * ct
    }

    pub(super) fn residual(&self, x: &[f64], jet: &DiffValue) -> (f64, DiffValue) {
        let (s, t) = (x[0], x[1]);
        let half_var = 0.5 * self.sigma * self.sigma * s * s;
        let r = jet.d(1) + half_var * jet.d2(0, 0) + self.r * s * jet.d(0) - self.r * jet.value + self.forcing(s, t);
        let mut sens = DiffValue::constant(2, -self.r);
        sens.set_d(0, self.r * s);
        sens.set_d(1, 1.0);
        sens.set_d2(0, 0, half_var);
        (r, sens)
    }
}

pub(super) fn initial(s: f64) -> f64 {
    (2.0 * PI * s).cos()
}

pub(super) fn boundary(t: f64) -> f64 {
    (2.0 * PI * t).cos()
}
