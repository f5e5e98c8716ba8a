//! Semi-analytic prices against independent Monte Carlo simulation.

use pinn_pricing::models::{CevParams, HestonParams};
use pinn_pricing::oracles::{cev_put_price, heston_call_price, mc_price, McConfig, McModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn cev_put_agrees_with_simulation() {
    let p = CevParams::default();
    let model = McModel::Cev { r: p.r, sigma: p.sigma, beta: p.beta };
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for i in 0..5 {
        let s = rng.random_range(60.0..88.0);
        let tau = rng.random_range(0.2..1.0);
        let exact = cev_put_price(&p, s, tau).unwrap();
        let cfg = McConfig { paths: 400_000, steps: 100, seed: 7 + i };
        let (mc, se) = mc_price(&model, |x| p.payoff(x), s, 0.0, tau, &cfg).unwrap();
        println!("cev S={s:.3} tau={tau:.3}: exact {exact:.6} mc {mc:.6} ± {se:.6}");
        assert!((exact - mc).abs() <= 3.0 * se + 1e-10, "S={s}, tau={tau}: {exact} vs {mc} ± {se}");
    }
}

#[test]
fn heston_call_agrees_with_simulation() {
    let p = HestonParams::default();
    let model = McModel::Heston { r: p.r, kappa: p.kappa, theta: p.theta, sigma: p.sigma, rho: p.rho };
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for i in 0..5 {
        let s = rng.random_range(15.0..28.0);
        let v = rng.random_range(0.05..0.6);
        let tau = rng.random_range(0.1..0.5);
        let exact = heston_call_price(&p, s, v, tau).unwrap();
        let cfg = McConfig { paths: 200_000, steps: 200, seed: 70 + i };
        let (mc, se) = mc_price(&model, |x| p.payoff(x), s, v, tau, &cfg).unwrap();
        println!("heston S={s:.3} v={v:.3} tau={tau:.3}: exact {exact:.6} mc {mc:.6} ± {se:.6}");
        assert!((exact - mc).abs() <= 3.0 * se, "{exact} vs {mc} ± {se}");
    }
}
