//! Adam and L-BFGS minimizers over flat parameter vectors.

mod adam;
mod lbfgs;

pub use adam::{Adam, AdamConfig};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsOutcome, LineStep, Termination};
