//! Ergodic constant, corrector and invariant density. For the decoupled
//! model the constant is a Schroedinger ground-state energy and the density
//! is the Gibbs measure `exp(-u)/Z`.

use mfg_torus::grid::linf_distance;
use mfg_torus::mfg_ergodic::{solve_ergodic, ErgodicOptions};
use mfg_torus::model::{preset_model, Preset};
use mfg_torus::{Density, TorusGrid};

fn main() -> mfg_torus::Result<()> {
    for preset in [Preset::Decoupled, Preset::Standard] {
        for n in [64, 128, 256] {
            let spec = preset_model(preset, TorusGrid::new(n)?)?;
            let erg = solve_ergodic(&spec, &ErgodicOptions::default())?;
            print!("{preset:?} n = {n:3}: lambda = {:.10}, min m = {:.4}", erg.lambda_bar, erg.m_bar.min());
            if spec.is_decoupled() {
                let gibbs = Density::from_unnormalized(spec.grid(), erg.u_bar.iter().map(|u| (-u).exp()).collect())?;
                print!(", |m - gibbs| = {:.2e}", linf_distance(&erg.m_bar, &gibbs));
            }
            println!(", residuals {:.1e} {:.1e}", erg.residuals.0, erg.residuals.1);
        }
    }
    Ok(())
}
