mod ode;
mod scaling;
mod simulate;
mod tagged;
mod verify;

pub use ode::ode;
pub use scaling::scaling;
pub use simulate::simulate;
pub use tagged::tagged;
pub use verify::verify;

use std::fs::File;

use anyhow::{Context, Result};
use edg_core::io::read_profile_csv;
use edg_core::MeanFieldState;

use crate::config::RunConfig;

/// The configured initial profile, or Poisson(ρ).
fn initial_profile(cfg: &RunConfig) -> Result<MeanFieldState> {
    match &cfg.ode.init {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Ok(read_profile_csv(file, &path.display().to_string())?)
        }
        None => Ok(MeanFieldState::poisson(cfg.rho)?),
    }
}
