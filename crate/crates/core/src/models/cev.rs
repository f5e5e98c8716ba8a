use serde::{Deserialize, Serialize};

use crate::autodiff::DiffValue;
use crate::error::{Error, Result};

/// Dirichlet data used on the `S = 0` and `S = S_max` faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CevBoundary {
    /// `U(0,τ) = 0` and `U(S_max,τ) = K·e^{-rτ}`, literally.
    AsStated,
    /// Values of the closed-form put on both faces.
    Oracle,
}

/// European put under constant elasticity of variance, `dS = rS dt + σ S^{β/2} dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CevParams {
    pub beta: f64,
    pub sigma: f64,
    pub r: f64,
    pub k: f64,
    pub s_max: f64,
    pub maturity: f64,
    /// Reference level in `δ² = σ²·s0^{2-β}`.
    pub s0: f64,
    pub boundary: CevBoundary,
}

impl Default for CevParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            sigma: 0.3,
            r: 0.01,
            k: 80.0,
            s_max: 100.0,
            maturity: 1.0,
            s0: 1.0,
            boundary: CevBoundary::AsStated,
        }
    }
}

impl CevParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0
            && self.beta.is_finite()
            && self.beta >= 0.0
            && self.k > 0.0
            && self.s_max > 0.0
            && self.maturity > 0.0
            && self.s0 > 0.0
            && self.r.is_finite();
        if !ok {
            return Err(Error::Config(format!("cev: invalid parameters {self:?}")));
        }
        Ok(())
    }

    pub fn payoff(&self, s: f64) -> f64 {
        (self.k - s).max(0.0)
    }

    pub(super) fn boundary(&self, x: &[f64]) -> Result<f64> {
        let (s, tau) = (x[0], x[1]);
        let at_zero = s <= 0.5 * self.s_max;
        match self.boundary {
            CevBoundary::AsStated => Ok(if at_zero { 0.0 } else { self.k * (-self.r * tau).exp() }),
            CevBoundary::Oracle => crate::oracles::cev_put_price(self, s, tau),
        }
    }

    pub(super) fn residual(&self, x: &[f64], jet: &DiffValue) -> Result<(f64, DiffValue)> {
        let s = x[0];
        if s < 0.0 {
            return Err(Error::Domain(format!("cev residual at negative asset price {s}")));
        }
        let diff = 0.5 * self.sigma * self.sigma * s.powf(self.beta);
        let r = -jet.d(1) + diff * jet.d2(0, 0) + self.r * s * jet.d(0) - self.r * jet.value;
        let mut sens = DiffValue::constant(2, -self.r);
        sens.set_d(0, self.r * s);
        sens.set_d(1, -1.0);
        sens.set_d2(0, 0, diff);
        Ok((r, sens))
    }
}
