use serde::{Deserialize, Serialize};

use crate::autodiff::DiffValue;
use crate::error::{Error, Result};

/// European call under Heston stochastic volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub r: f64,
    pub k: f64,
    pub lambda_risk: f64,
    pub s_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub maturity: f64,
}

impl Default for HestonParams {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            theta: 0.2,
            sigma: 0.3,
            rho: 0.8,
            r: 0.03,
            k: 20.0,
            lambda_risk: 0.0,
            s_max: 40.0,
            v_min: 0.01,
            v_max: 1.0,
            maturity: 0.5,
        }
    }
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa > 0.0
            && self.theta > 0.0
            && self.sigma > 0.0
            && self.rho.abs() <= 1.0
            && self.k > 0.0
            && self.lambda_risk == 0.0
            && self.s_max > 0.0
            && self.v_min >= 0.0
            && self.v_min < self.v_max
            && self.maturity > 0.0
            && self.r.is_finite();
        if !ok {
            return Err(Error::Config(format!("heston: invalid parameters {self:?}")));
        }
        Ok(())
    }

    pub fn payoff(&self, s: f64) -> f64 {
        (s - self.k).max(0.0)
    }

    pub(super) fn boundary(&self, x: &[f64]) -> Result<f64> {
        let (s, v, tau) = (x[0], x[1], x[2]);
        if s <= 0.0 {
            Ok(0.0)
        } else if s >= self.s_max {
            Ok(self.s_max - self.k * (-self.r * tau).exp())
        } else {
            crate::oracles::heston_call_price(self, s, v, tau)
        }
    }

    pub(super) fn residual(&self, x: &[f64], jet: &DiffValue) -> Result<(f64, DiffValue)> {
        let (s, v) = (x[0], x[1]);
        if v < 0.0 {
            return Err(Error::Domain(format!("heston residual at negative variance {v}")));
        }
        let c_ss = 0.5 * v * s * s;
        let c_sv = self.rho * self.sigma * v * s;
        let c_vv = 0.5 * self.sigma * self.sigma * v;
        let c_s = self.r * s;
        let c_v = self.kappa * (self.theta - v) - self.lambda_risk;
        let r = -jet.d(2)
            + c_ss * jet.d2(0, 0)
            + c_sv * jet.d2(0, 1)
            + c_vv * jet.d2(1, 1)
            + c_s * jet.d(0)
            + c_v * jet.d(1)
            - self.r * jet.value;
        let mut sens = DiffValue::constant(3, -self.r);
        sens.set_d(0, c_s);
        sens.set_d(1, c_v);
        sens.set_d(2, -1.0);
        sens.set_d2(0, 0, c_ss);
        sens.set_d2(0, 1, c_sv);
        sens.set_d2(1, 1, c_vv);
        Ok((r, sens))
    }
}
