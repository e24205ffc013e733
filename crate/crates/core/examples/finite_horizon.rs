//! Solves the finite-horizon system and prints how close the optimal path
//! stays to the stationary state (the turnpike).

use mfg_torus::mfg_ergodic::{solve_ergodic, ErgodicOptions};
use mfg_torus::mfg_finite::{solve_mfg_finite, turnpike_distance_curve, PicardOptions, TerminalCondition, TimeGrid};
use mfg_torus::model::{preset_model, Preset};
use mfg_torus::{Density, TorusGrid};

fn main() -> mfg_torus::Result<()> {
    let grid = TorusGrid::new(64)?;
    let spec = preset_model(Preset::Standard, grid)?;
    let m0 = Density::from_modes(&grid, &[0.4], &[0.2])?;
    let tg = TimeGrid::with_factor(6.0, &grid, 0.25)?;

    let sol = solve_mfg_finite(&spec, &tg, &m0, &TerminalCondition::CouplingG, 0.0, &PicardOptions::default())?;
    let d = sol.diagnostics();
    println!("picard iterations {}, residual {:.2e}, mass error {:.1e}", d.iterations, d.final_residual, d.max_mass_error);

    let erg = solve_ergodic(&spec, &ErgodicOptions::default())?;
    let curve = turnpike_distance_curve(&sol, &erg)?;
    for s in curve.iter().step_by(curve.len() / 12) {
        println!("t = {:5.2}  |m - m_bar| = {:.3e}  |Du - Du_bar| = {:.3e}", s.t, s.dist_m, s.dist_du);
    }
    Ok(())
}
