//! Solves the manufactured GBS problem with AM-PIRN on a small budget and
//! prints the per-round metrics.
//!
//! `cargo run --release -p pinn-pricing --example gbs_quickstart`

use pinn_pricing::models::PdeModel;
use pinn_pricing::sampling::PointCounts;
use pinn_pricing::training::{solve, Strategy, TrainConfig};

fn main() -> pinn_pricing::Result<()> {
    let model = PdeModel::Gbs(Default::default());
    let cfg = TrainConfig {
        strategy: Strategy::AmPirn,
        adam_iters: 500,
        lbfgs_iters: 1000,
        rounds: 3,
        counts: PointCounts { fixed: 750, movable: 250, initial: 100, boundary: 200 },
        ..Default::default()
    };
    let report = solve(&model, &cfg)?;
    println!("{} on {} ({} parameters)", report.strategy, report.model, report.params.len());
    for r in &report.rounds {
        println!(
            "round {:>2}  loss {:.3e}  residual MSE {:.3e}  relative L2 {:.3e}  {:.1}s",
            r.round,
            r.loss.total,
            r.residual_mse,
            r.relative_l2.unwrap_or(f64::NAN),
            r.wall_seconds
        );
    }
    Ok(())
}
