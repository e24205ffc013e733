//! Evaluates the cell-problem corrector at a few densities by both routes
//! (long horizon and vanishing discount) and compares them.

use mfg_torus::grid::{spread_of_difference, linf_distance};
use mfg_torus::master::{CorrectorMethod, CorrectorPipeline, MasterOptions, Normalization};
use mfg_torus::model::{preset_model, Preset};
use mfg_torus::{Density, TorusGrid};

fn main() -> mfg_torus::Result<()> {
    let grid = TorusGrid::new(64)?;
    let spec = preset_model(Preset::Standard, grid)?;
    let opts = MasterOptions::default();
    let long = CorrectorPipeline::new(&spec, CorrectorMethod::Longtime, Normalization::ThetaSelected, opts)?;
    let disc = CorrectorPipeline::with_ergodic(&spec, CorrectorMethod::Discount, Normalization::ThetaSelected, opts, long.ergodic().clone())?;

    let at_bar = long.evaluate(&long.ergodic().m_bar)?;
    let target = long.ergodic().u_bar.map(|u| u + long.linearized().theta_bar);
    println!("chi(m_bar) vs u_bar + theta_bar: {:.2e}", linf_distance(&at_bar.chi, &target));

    for m0 in [Density::uniform(&grid), Density::from_modes(&grid, &[0.4], &[0.2])?, Density::from_modes(&grid, &[0.0, 0.3], &[])?] {
        let a = long.evaluate(&m0)?;
        let b = disc.evaluate(&m0)?;
        println!(
            "T* = {:<5} delta* = {:<7} gaps {:.1e} {:.1e}; spread of difference {:.2e}",
            a.t_or_delta_used,
            b.t_or_delta_used,
            a.cauchy_gap,
            b.cauchy_gap,
            spread_of_difference(&a.chi, &b.chi)
        );
    }
    Ok(())
}
