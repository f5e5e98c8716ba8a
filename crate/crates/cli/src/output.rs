//! Artifact writers. Floats are written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use pinn_pricing::models::{PdeModel, TimeOrientation};
use pinn_pricing::training::RunReport;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Column names of the model's input coordinates. The last one is calendar
/// time `t` or time to expiry `tau`.
pub fn coordinate_names(model: &PdeModel) -> &'static [&'static str] {
    match (model, model.orientation()) {
        (PdeModel::Heston(_), _) => &["S", "v", "tau"],
        (_, TimeOrientation::Calendar) => &["S", "t"],
        (_, TimeOrientation::ToExpiry) => &["S", "tau"],
    }
}

fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_convergence(path: &Path, report: &RunReport) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "round,relative_l2,residual_mse,loss_total,loss_pde,loss_boundary,loss_initial")?;
    for r in &report.rounds {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.round,
            fmt_opt(r.relative_l2),
            fmt_f64(r.residual_mse),
            fmt_f64(r.loss.total),
            fmt_f64(r.loss.pde),
            fmt_f64(r.loss.boundary),
            fmt_f64(r.loss.initial)
        )?;
    }
    w.flush()
}

pub fn write_loss_trace(path: &Path, report: &RunReport) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iteration,round,phase,loss")?;
    for t in &report.trace {
        writeln!(w, "{},{},{},{}", t.iteration, t.round, t.phase.label(), fmt_f64(t.loss))?;
    }
    w.flush()
}

pub fn write_points(path: &Path, model: &PdeModel, round: usize, report: &RunReport) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "round,set,{}", coordinate_names(model).join(","))?;
    let state = &report.snapshots[round - 1];
    for (name, set) in [
        ("fixed", state.fixed()),
        ("movable", state.movable()),
        ("initial", state.initial()),
        ("boundary", state.boundary()),
    ] {
        for p in set.iter() {
            let coords: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{round},{name},{}", coords.join(","))?;
        }
    }
    w.flush()
}

pub fn write_field(path: &Path, model: &PdeModel, report: &RunReport) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{},prediction,reference,abs_error,residual", coordinate_names(model).join(","))?;
    for (i, p) in report.grid.points().iter().enumerate() {
        let coords: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
        let pred = report.prediction[i];
        let reference = report.reference.as_ref().map(|r| r[i]);
        let err = reference.map(|r| (pred - r).abs());
        writeln!(
            w,
            "{},{},{},{},{}",
            coords.join(","),
            fmt_f64(pred),
            fmt_opt(reference),
            fmt_opt(err),
            fmt_f64(report.residual[i])
        )?;
    }
    w.flush()
}
