//! Stationary discounted pairs approaching the ergodic limit as the
//! discount rate vanishes, and one truncated-horizon discounted solve.

use mfg_torus::grid::linf_distance;
use mfg_torus::linearized::solve_linearized_ergodic;
use mfg_torus::mfg_discounted::{discounted_decay_curve, solve_discounted_mfg_with, solve_discounted_stationary, DiscountedOptions};
use mfg_torus::mfg_ergodic::{solve_ergodic, ErgodicOptions};
use mfg_torus::mfg_finite::PicardOptions;
use mfg_torus::model::{preset_model, Preset};
use mfg_torus::{Density, TorusGrid};

fn main() -> mfg_torus::Result<()> {
    let grid = TorusGrid::new(64)?;
    let spec = preset_model(Preset::Standard, grid)?;
    let erg = solve_ergodic(&spec, &ErgodicOptions::default())?;
    let theta = solve_linearized_ergodic(&spec, &erg)?.theta_bar;
    let opts = PicardOptions::default();

    for delta in [0.2, 0.1, 0.05, 0.025] {
        let st = solve_discounted_stationary(&spec, delta, &opts)?;
        let shifted = st.u_bar_delta.map(|u| u - erg.lambda_bar / delta);
        let limit = erg.u_bar.map(|u| u + theta);
        println!(
            "delta = {delta:<6} |delta u - lambda| = {:.3e}  |u - lambda/delta - (u_bar + theta)| = {:.3e}",
            st.u_bar_delta.iter().map(|u| (delta * u - erg.lambda_bar).abs()).fold(0.0, f64::max),
            linf_distance(&shifted, &limit)
        );
    }

    let m0 = Density::from_modes(&grid, &[0.4], &[0.2])?;
    let st = solve_discounted_stationary(&spec, 0.1, &opts)?;
    let sol = solve_discounted_mfg_with(&spec, &st, &m0, Some(20.0), &DiscountedOptions::default())?;
    let curve = discounted_decay_curve(&sol, &st)?;
    println!("truncated at T = {}; |m(t) - m_bar_delta|:", sol.t_trunc);
    for s in curve.iter().filter(|s| s.t <= 1.0).step_by(8) {
        println!("  t = {:.3}  {:.3e}", s.t, s.dist_m);
    }
    Ok(())
}
