//! Linearized systems: the ergodic constant `theta_bar`, its discount
//! extrapolation, and a finite-difference check of the Gateaux derivative.

use std::f64::consts::PI;

use mfg_torus::grid::SignedField;
use mfg_torus::linearized::{gateaux_consistency_check, solve_linearized_ergodic, theta_by_discount_extrapolation};
use mfg_torus::mfg_ergodic::{solve_ergodic, ErgodicOptions};
use mfg_torus::mfg_finite::{PicardOptions, TimeGrid};
use mfg_torus::model::{preset_model, Preset};
use mfg_torus::{Density, TorusGrid};

fn main() -> mfg_torus::Result<()> {
    let grid = TorusGrid::new(64)?;
    let spec = preset_model(Preset::Standard, grid)?;
    let erg = solve_ergodic(&spec, &ErgodicOptions::default())?;
    let lin = solve_linearized_ergodic(&spec, &erg)?;
    println!("theta_bar = {:.10} (residuals {:.1e}, {:.1e})", lin.theta_bar, lin.residuals.0, lin.residuals.1);
    let est = theta_by_discount_extrapolation(&spec, &erg, &[0.1, 0.05, 0.025])?;
    println!("discount extrapolation: {est:?}");

    let m0 = Density::from_modes(&grid, &[0.3], &[0.1])?;
    let mu0 = SignedField::centered(&grid, grid.sample(|x| (2.0 * PI * x).cos()).into_vec())?;
    let tg = TimeGrid::with_factor(2.0, &grid, 0.25)?;
    let r = gateaux_consistency_check(&spec, &tg, &m0, &mu0, &[1e-2, 5e-3, 2.5e-3], &PicardOptions::default())?;
    for (e, err) in r.eps.iter().zip(&r.err) {
        println!("eps = {e:.1e}: |(U(m + eps mu) - U(m))/eps - v| = {err:.3e}");
    }
    println!("slope {:?}", r.slope);
    Ok(())
}
