//! Builds a model from Fourier data, rejects a non-monotone kernel, and
//! round-trips the model through JSON.

use std::f64::consts::PI;

use mfg_torus::mfg_ergodic::{solve_ergodic, ErgodicOptions};
use mfg_torus::model::{Coupling, ModelSpec};
use mfg_torus::{Density, TorusGrid};

fn main() -> mfg_torus::Result<()> {
    let grid = TorusGrid::new(64)?;
    let potential = grid.sample(|x| (4.0 * PI * x).cos());
    let zero = grid.sample(|_| 0.0);

    let bad = ModelSpec::from_modes(grid, potential.clone(), &[1.0, -0.5], zero.clone(), &[], zero.clone());
    println!("negative mode rejected: {}", bad.unwrap_err());

    let spec = ModelSpec::from_modes(grid, potential, &[0.0, 0.8, 0.2], zero.clone(), &[0.0, 0.1], zero)?;
    let m1 = Density::from_modes(&grid, &[0.3], &[])?;
    let m2 = Density::from_modes(&grid, &[], &[0.3])?;
    println!("monotonicity gap {:.4e}", spec.monotonicity_gap(Coupling::F, &m1, &m2)?);

    let json = serde_json::to_string(&spec)?;
    let back: ModelSpec = serde_json::from_str(&json)?;
    let erg = solve_ergodic(&back, &ErgodicOptions::default())?;
    println!("{} bytes of JSON; lambda_bar = {:.10}", json.len(), erg.lambda_bar);
    Ok(())
}
