use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

const MAX_TERMS: usize = 1_000_000;
const REL_TOL: f64 = 1e-12;

/// Survival function `Q(w; ν, λ) = 1 − F(w)` of the noncentral chi-square law.
pub fn noncentral_chisq_sf(w: f64, nu: f64, lambda: f64) -> Result<f64> {
    Ok(cdf_and_sf(w, nu, lambda)?.1)
}

/// Distribution function of the noncentral chi-square law.
pub fn noncentral_chisq_cdf(w: f64, nu: f64, lambda: f64) -> Result<f64> {
    Ok(cdf_and_sf(w, nu, lambda)?.0)
}

/// Poisson mixture of central chi-square laws, summed outward from the
/// Poisson mode until the remaining Poisson mass drops below 1e-12 of the
/// accumulated total. Upward from the mode the upper regularized gammas grow by
/// `x^a e^{-x}/Γ(a+1)`; downward the lower ones do. Both tails accumulate
/// additively so neither side cancels.
fn cdf_and_sf(w: f64, nu: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(w >= 0.0) || !(nu > 0.0) || !(lambda >= 0.0) || !lambda.is_finite() || !nu.is_finite() {
        return Err(Error::Domain(format!("noncentral chi-square at w={w}, nu={nu}, lambda={lambda}")));
    }
    if w == 0.0 {
        return Ok((0.0, 1.0));
    }
    if w.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let x = 0.5 * w;
    let mu = 0.5 * lambda;
    let lx = x.ln();
    let mode = mu.floor();
    let m = mode as usize;
    let a_m = 0.5 * nu + mode;
    let log_pois = |j: f64| {
        if mu == 0.0 {
            if j == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            j * mu.ln() - mu - ln_gamma(j + 1.0)
        }
    };
    // ln(x^a e^{-x} / Γ(a+1))
    let log_inc = |a: f64| a * lx - x - ln_gamma(a + 1.0);

    let (mut cdf, mut sf) = (0.0, 0.0);

    // j = m, m+1, ...
    let mut q = gamma_ur(a_m, x);
    let mut p = 1.0 - q;
    let mut j = m;
    let mut lp = log_pois(mode);
    let mut steps = 0;
    loop {
        let wj = lp.exp();
        sf += wj * q;
        cdf += wj * p;
        let a = 0.5 * nu + j as f64;
        let inc = log_inc(a).exp();
        q = (q + inc).min(1.0);
        p = (p - inc).max(0.0);
        j += 1;
        if mu == 0.0 {
            break;
        }
        lp += mu.ln() - (j as f64).ln();
        let rho = mu / (j as f64 + 1.0);
        let tail = if rho < 1.0 { lp.exp() * rho / (1.0 - rho) } else { f64::INFINITY };
        if tail <= REL_TOL * sf.max(cdf) || lp.exp() == 0.0 && j as f64 > mu {
            break;
        }
        steps += 1;
        if steps > MAX_TERMS {
            return Err(Error::Convergence(format!(
                "noncentral chi-square series did not converge (w={w}, nu={nu}, lambda={lambda})"
            )));
        }
    }

    // j = m-1, m-2, ..., 0
    if m > 0 {
        let mut p = gamma_lr(a_m, x);
        let mut q = 1.0 - p;
        let mut lp = log_pois(mode);
        let mut j = m;
        while j > 0 {
            let a = 0.5 * nu + (j - 1) as f64;
            let inc = log_inc(a).exp();
            p = (p + inc).min(1.0);
            q = (q - inc).max(0.0);
            lp += (j as f64).ln() - mu.ln();
            j -= 1;
            let wj = lp.exp();
            sf += wj * q;
            cdf += wj * p;
            let rho = j as f64 / mu;
            let tail = wj * rho / (1.0 - rho).max(f64::MIN_POSITIVE);
            if tail <= REL_TOL * sf.max(cdf) || wj == 0.0 {
                break;
            }
        }
    }
    let total = cdf + sf;
    Ok((cdf / total, sf / total))
}
