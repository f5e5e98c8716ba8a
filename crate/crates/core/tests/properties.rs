use pinn_pricing::models::{CevParams, HestonParams, PdeModel};
use pinn_pricing::network::{forward, init_params, Activation, Architecture, InputScaling, ResNetArchitecture};
use pinn_pricing::optim::{lbfgs_minimize, LbfgsConfig};
use pinn_pricing::oracles::{cev_put_price, heston_call_price};
use pinn_pricing::sampling::{
    monitor_density, residual_density, sample_uniform, weighted_subset, CollocationState, PointCounts,
};
use pinn_pricing::training::{LossEvaluator, LossWeights, NetworkConfig, Strategy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn densities_ignore_positive_rescaling(
        r in prop::collection::vec(-50.0f64..50.0, 2..40),
        c in 1e-3f64..1e3,
        k in 0.0f64..4.0,
    ) {
        let scaled: Vec<f64> = r.iter().map(|x| c * x).collect();
        let a = residual_density(&r, k).unwrap();
        let b = residual_density(&scaled, k).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.max(*y).max(1e-300), "{x} vs {y}");
        }
        let total: f64 = a.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(a.weights().iter().all(|w| *w >= 0.0));
        let norms: Vec<f64> = r.iter().map(|x| x.abs()).collect();
        let m = monitor_density(&norms, k).unwrap();
        prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_subsets_are_distinct_in_range_and_sized(
        r in prop::collection::vec(0.0f64..5.0, 1..60),
        frac in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let density = residual_density(&r, 2.0).unwrap();
        let m = (frac * r.len() as f64).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = weighted_subset(&density, m, &mut rng).unwrap();
        prop_assert_eq!(picks.len(), m);
        picks.sort_unstable();
        picks.dedup();
        prop_assert_eq!(picks.len(), m);
        prop_assert!(picks.iter().all(|&i| i < r.len()));
        prop_assert!(weighted_subset(&density, r.len() + 1, &mut rng).is_err());
    }

    #[test]
    fn resampling_keeps_counts_and_draws_from_candidates(seed in any::<u64>(), movable in 1usize..30) {
        let model = PdeModel::Cev(CevParams::default());
        let counts = PointCounts { fixed: 25, movable, initial: 5, boundary: 6 };
        let state = CollocationState::initialize(&model, counts, seed).unwrap();
        let candidates = sample_uniform(&model.domain(), 4 * movable, seed ^ 1).unwrap();
        let scores: Vec<f64> = candidates.iter().map(|x| x[0] * x[1]).collect();
        let density = residual_density(&scores, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let next = state.resample_movable(&candidates, &density, &mut rng).unwrap();
        prop_assert_eq!(next.counts(), counts);
        prop_assert_eq!(next.fixed(), state.fixed());
        prop_assert_eq!(next.initial(), state.initial());
        prop_assert_eq!(next.boundary(), state.boundary());
        prop_assert_eq!(next.residual_points().len(), counts.fixed + counts.movable);
        let pool: Vec<&[f64]> = candidates.iter().collect();
        let mut seen: Vec<&[f64]> = Vec::new();
        for p in next.movable().iter() {
            prop_assert!(pool.contains(&p));
            prop_assert!(!seen.contains(&p));
            seen.push(p);
        }
    }

    #[test]
    fn accepted_lbfgs_steps_satisfy_armijo(
        diag in prop::collection::vec(0.01f64..100.0, 2..8),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = diag.len();
        let center: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..n {
                let d = x[i] - center[i];
                v += 0.5 * diag[i] * d * d + (d * d + 1.0).ln();
                g[i] = diag[i] * d + 2.0 * d / (d * d + 1.0);
            }
            Ok(v)
        };
        let mut x = vec![0.0; n];
        let cfg = LbfgsConfig { max_iters: 200, ..Default::default() };
        let out = lbfgs_minimize(f, &mut x, &cfg).unwrap();
        let mut prev = out.initial_loss;
        for s in &out.steps {
            prop_assert!(s.armijo);
            prop_assert!(s.slope < 0.0);
            prop_assert!(s.loss_after <= s.loss_before + cfg.c1 * s.step * s.slope + 1e-12 * s.loss_before.abs());
            prop_assert_eq!(s.loss_before, prev);
            prev = s.loss_after;
        }
        prop_assert_eq!(out.loss, prev);
        let mut again = vec![0.0; n];
        let out2 = lbfgs_minimize(f, &mut again, &cfg).unwrap();
        prop_assert_eq!(x, again);
        prop_assert_eq!(out.iterations, out2.iterations);
    }

    #[test]
    fn loss_terms_are_nonnegative_and_add_up(
        seed in any::<u64>(),
        wp in 0.0f64..3.0,
        wb in 0.0f64..3.0,
        wi in 0.1f64..3.0,
    ) {
        let model = PdeModel::BarlesSoner(Default::default());
        let arch = NetworkConfig::default().architecture(&model, Strategy::AmPirn).unwrap();
        let params = init_params(&arch, seed);
        let counts = PointCounts { fixed: 6, movable: 4, initial: 5, boundary: 5 };
        let state = CollocationState::initialize(&model, counts, seed).unwrap();
        let w = LossWeights { omega_p: wp, omega_b: wb, omega_i: wi };
        let t = LossEvaluator::new(&model, &arch, &state, w).unwrap().loss(&params).unwrap();
        prop_assert!(t.pde >= 0.0 && t.boundary >= 0.0 && t.initial >= 0.0);
        prop_assert_eq!(t.total, wp * t.pde + wb * t.boundary + wi * t.initial);
    }

    #[test]
    fn cev_put_is_monotone_and_bounded(tau in 0.05f64..1.0, s in 0.0f64..99.0, ds in 0.01f64..1.0) {
        let p = CevParams::default();
        let cap = p.k * (-p.r * tau).exp();
        let a = cev_put_price(&p, s, tau).unwrap();
        let b = cev_put_price(&p, s + ds, tau).unwrap();
        prop_assert!(b <= a + 1e-9, "{a} then {b}");
        prop_assert!((-1e-12..=cap + 1e-12).contains(&a));
        prop_assert!(a >= cap - s - 1e-9, "below intrinsic lower bound");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn heston_call_respects_arbitrage_bounds(s in 1.0f64..40.0, v in 0.01f64..1.0, tau in 0.02f64..0.5) {
        let p = HestonParams::default();
        let c = heston_call_price(&p, s, v, tau).unwrap();
        let lower = (s - p.k * (-p.r * tau).exp()).max(0.0);
        prop_assert!(c >= lower - 1e-8, "{c} below {lower}");
        prop_assert!(c <= s + 1e-8, "{c} above {s}");
        let higher = heston_call_price(&p, s, (v + 0.05).min(1.0), tau).unwrap();
        prop_assert!(higher >= c - 1e-8);
    }

    #[test]
    fn resnet_skip_contribution_is_linear_in_the_projection(
        seed in any::<u64>(),
        x in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let arch = Architecture::ResNet(ResNetArchitecture {
            input_dim: 2,
            blocks: 1,
            block_hidden_layers: 1,
            width: 5,
            activation: Activation::Tanh,
            scaling: InputScaling::identity(2),
        });
        // Layers: block affine, bias-free projection, linear head.
        let params = init_params(&arch, seed);
        let mut bare = params.clone();
        bare.weights_mut(1).iter_mut().for_each(|w| *w = 0.0);
        let full = forward(&arch, &params, &x).unwrap();
        let block = forward(&arch, &bare, &x).unwrap();
        let proj = params.weights(1);
        let head = params.weights(2);
        let skip: f64 = (0..5).map(|r| head[r] * (proj[2 * r] * x[0] + proj[2 * r + 1] * x[1])).sum();
        prop_assert!((full.value - block.value - skip).abs() < 1e-12);
        let inner: f64 = (0..5)
            .map(|r| {
                let w = params.weights(0);
                head[r] * (w[2 * r] * x[0] + w[2 * r + 1] * x[1] + params.bias(0)[r]).tanh()
            })
            .sum::<f64>()
            + params.bias(2)[0];
        prop_assert!((block.value - inner).abs() < 1e-12);
    }
}
