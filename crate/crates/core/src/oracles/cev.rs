use crate::error::{Error, Result};
use crate::models::CevParams;

use super::chisq::{noncentral_chisq_cdf, noncentral_chisq_sf};

/// Closed-form CEV put for `β < 2` at time to expiry `tau`.
///
/// At `S = 0` the asset is absorbed and the put pays `K·e^{-rτ}` for sure;
/// at `tau = 0` the payoff is returned.
pub fn cev_put_price(p: &CevParams, s: f64, tau: f64) -> Result<f64> {
    if p.beta >= 2.0 {
        return Err(Error::Unsupported(format!("CEV closed form for beta = {} >= 2", p.beta)));
    }
    if !(s >= 0.0) || !(tau >= 0.0) {
        return Err(Error::Domain(format!("CEV put at S = {s}, tau = {tau}")));
    }
    let disc_k = p.k * (-p.r * tau).exp();
    if tau == 0.0 {
        return Ok(p.payoff(s));
    }
    if s == 0.0 {
        return Ok(disc_k);
    }
    let k2 = 2.0 - p.beta;
    let delta2 = p.sigma * p.sigma * p.s0.powf(k2);
    let growth = (p.r * k2 * tau).exp();
    let d = if p.r.abs() * k2 * tau < 1e-12 {
        2.0 / (delta2 * k2 * k2 * tau)
    } else {
        2.0 * p.r / (delta2 * k2 * (growth - 1.0))
    };
    let x = s.powf(k2) * growth * d;
    let y = p.k.powf(k2) * d;
    let nu = 2.0 / k2;
    let first = noncentral_chisq_sf(2.0 * x, nu, 2.0 * y)?;
    let second = noncentral_chisq_cdf(2.0 * y, 2.0 + nu, 2.0 * x)?;
    Ok(disc_k * first - s * second)
}
