use serde::{Deserialize, Serialize};

use crate::autodiff::DiffValue;
use crate::error::{Error, Result};

/// Butterfly spread under transaction-cost volatility
/// `σ² = σ0²·(1 + e^{rτ}·a²·S²·U_SS)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarlesSonerParams {
    pub sigma0: f64,
    pub r: f64,
    pub a: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub maturity: f64,
    pub s_max: f64,
}

impl Default for BarlesSonerParams {
    fn default() -> Self {
        Self { sigma0: 0.2, r: 0.1, a: 0.02, k1: 30.0, k2: 40.0, k3: 50.0, maturity: 1.0, s_max: 80.0 }
    }
}

impl BarlesSonerParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma0 > 0.0
            && self.a >= 0.0
            && self.k1 < self.k2
            && self.k2 < self.k3
            && self.k3 <= self.s_max
            && self.maturity > 0.0;
        if !ok {
            return Err(Error::Config(format!("barles_soner: invalid parameters {self:?}")));
        }
        Ok(())
    }

    pub fn payoff(&self, s: f64) -> f64 {
        (s - self.k1).max(0.0) - 2.0 * (s - self.k2).max(0.0) + (s - self.k3).max(0.0)
    }

    /// Squared volatility at `(S, τ)` for a given `U_SS`.
    pub fn variance(&self, s: f64, tau: f64, u_ss: f64) -> f64 {
        self.sigma0 * self.sigma0 * (1.0 + (self.r * tau).exp() * self.a * self.a * s * s * u_ss)
    }

    /// The part of the residual that is quadratic in `U_SS`.
    pub fn quadratic_part(&self, x: &[f64], jet: &DiffValue) -> f64 {
        let (s, tau) = (x[0], x[1]);
        let u_ss = jet.d2(0, 0);
        0.5 * self.sigma0 * self.sigma0 * (self.r * tau).exp() * self.a * self.a * s.powi(4) * u_ss * u_ss
    }

    pub(super) fn residual(&self, x: &[f64], jet: &DiffValue) -> (f64, DiffValue) {
        let (s, tau) = (x[0], x[1]);
        let u_ss = jet.d2(0, 0);
        let s2 = s * s;
        let var = self.variance(s, tau, u_ss);
        let r = -jet.d(1) + 0.5 * var * s2 * u_ss + self.r * s * jet.d(0) - self.r * jet.value;
        let mut sens = DiffValue::constant(2, -self.r);
        sens.set_d(0, self.r * s);
        sens.set_d(1, -1.0);
        let s0 = self.sigma0 * self.sigma0;
        sens.set_d2(0, 0, 0.5 * s0 * s2 * (1.0 + 2.0 * (self.r * tau).exp() * self.a * self.a * s2 * u_ss));
        (r, sens)
    }
}
