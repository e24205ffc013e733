//! Population flow driven by the corrector's feedback drift; the density
//! relaxes to the stationary one.

use mfg_torus::grid::linf_distance;
use mfg_torus::master::{mckean_vlasov_flow, CorrectorMethod, CorrectorPipeline, FlowOptions, MasterOptions, Normalization};
use mfg_torus::model::{preset_model, Preset};
use mfg_torus::{Density, TorusGrid};

fn main() -> mfg_torus::Result<()> {
    let grid = TorusGrid::new(64)?;
    let spec = preset_model(Preset::Standard, grid)?;
    let p = CorrectorPipeline::new(&spec, CorrectorMethod::Longtime, Normalization::ThetaSelected, MasterOptions::default())?;
    let m0 = Density::from_modes(&grid, &[0.4], &[0.2])?;
    let flow = FlowOptions { dt: 0.01, stride: 5 };
    let path = mckean_vlasov_flow(&p, &m0, 0.5, &flow)?;
    for (k, m) in path.iter().enumerate().step_by(5) {
        println!("t = {:.2}  |m - m_bar| = {:.3e}  mass = {:.15}", k as f64 * flow.dt, linf_distance(m, &p.ergodic().m_bar), m.mass());
    }
    Ok(())
}
