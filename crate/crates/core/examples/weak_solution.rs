//! Checks the trajectory property of the corrector: solving on [0, T] with
//! terminal data `chi(., m(T))` returns `chi(., m0)` at time zero.

use mfg_torus::experiments::random_probes;
use mfg_torus::master::{weak_solution_selfcheck, CorrectorMethod, CorrectorPipeline, MasterOptions, Normalization};
use mfg_torus::model::{preset_model, Preset};
use mfg_torus::TorusGrid;

fn main() -> mfg_torus::Result<()> {
    let grid = TorusGrid::new(64)?;
    let spec = preset_model(Preset::Standard, grid)?;
    let p = CorrectorPipeline::new(&spec, CorrectorMethod::Longtime, Normalization::ThetaSelected, MasterOptions::default())?;
    for m0 in random_probes(&grid, 3, 1)? {
        let r = weak_solution_selfcheck(&p, &m0, 2.0)?;
        println!("discrepancy {:.3e} after {} picard iterations", r.discrepancy, r.diagnostics.iterations);
    }
    Ok(())
}
