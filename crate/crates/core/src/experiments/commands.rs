//! Single-solve commands behind the CLI. Each writes JSON and CSV into the
//! output directory and reports whether its checks hold.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{Cell, Check, ExperimentConfig, Table};
use crate::error::Result;
use crate::grid::{Density, TorusGrid};
use crate::linearized::solve_linearized_ergodic;
use crate::master::{lipschitz_estimate, CorrectorMethod, CorrectorPipeline, Normalization};
use crate::mfg_discounted::{solve_discounted_mfg_with, solve_discounted_stationary, DiscountedOptions};
use crate::mfg_ergodic::solve_ergodic;
use crate::mfg_finite::{solve_mfg_finite, TerminalCondition, TimeGrid, MASS_DRIFT_TOL};

/// Most time slices written for a path.
const MAX_SLICES: usize = 200;

#[derive(Clone, Debug, Serialize)]
pub struct CommandOutcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl CommandOutcome {
    pub fn checks_hold(&self) -> bool {
        self.checks.iter().all(|c| c.status != super::CheckStatus::Fail)
    }
}

/// `count` smooth positive densities with random low Fourier modes.
pub fn random_probes(grid: &TorusGrid, count: usize, seed: u64) -> Result<Vec<Density>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            // total amplitude below 1 keeps the density positive
            let cos: Vec<f64> = (0..3).map(|_| rng.random_range(-0.15..0.15)).collect();
            let sin: Vec<f64> = (0..3).map(|_| rng.random_range(-0.15..0.15)).collect();
            Density::from_modes(grid, &cos, &sin)
        })
        .collect()
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value)?)?;
    files.push(p);
    Ok(())
}

fn write_table(dir: &Path, t: &Table, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(format!("{}.csv", t.name));
    std::fs::write(&p, t.to_csv()?)?;
    files.push(p);
    Ok(())
}

/// Rows `(t, x, u, m)` on at most `MAX_SLICES + 1` time slices.
fn path_table(name: &str, grid: &TorusGrid, tg: &TimeGrid, u: &[crate::grid::Field], m: &[Density]) -> Table {
    let mut t = Table::new(name, &["t", "x", "u", "m"]);
    let stride = tg.nt().div_ceil(MAX_SLICES).max(1);
    let mut ks: Vec<usize> = (0..=tg.nt()).step_by(stride).collect();
    if ks.last() != Some(&tg.nt()) {
        ks.push(tg.nt());
    }
    for k in ks {
        for i in 0..grid.n() {
            t.push(vec![Cell::Num(tg.time(k)), Cell::Num(grid.node(i)), Cell::Num(u[k][i]), Cell::Num(m[k][i])]);
        }
    }
    t
}

fn mass_checks(max_mass_error: f64, min_density: f64) -> Vec<Check> {
    vec![
        Check::new("mass conserved", max_mass_error <= MASS_DRIFT_TOL, format!("{max_mass_error:.3e}")),
        Check::new("density nonnegative", min_density >= -1e-14, format!("{min_density:.3e}")),
    ]
}

pub fn solve_finite_command(cfg: &ExperimentConfig, horizon: f64, out: &Path) -> Result<CommandOutcome> {
    let spec = cfg.model_spec()?;
    let m0 = cfg.initial_density(&spec)?;
    let tg = TimeGrid::with_factor(horizon, spec.grid(), cfg.time.dt_factor)?;
    let sol = solve_mfg_finite(&spec, &tg, &m0, &TerminalCondition::CouplingG, 0.0, &cfg.solver)?;
    let d = sol.diagnostics();
    let mut files = Vec::new();
    write_json(out, "finite.json", &json!({ "horizon": horizon, "nt": tg.nt(), "diagnostics": d }), &mut files)?;
    write_table(out, &path_table("finite_path", spec.grid(), &tg, &sol.u_path, &sol.m_path), &mut files)?;
    Ok(CommandOutcome {
        files,
        checks: mass_checks(d.max_mass_error, d.min_density),
    })
}

pub fn solve_ergodic_command(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutcome> {
    let spec = cfg.model_spec()?;
    let erg = solve_ergodic(&spec, &cfg.ergodic)?;
    let mut files = Vec::new();
    write_json(out, "ergodic.json", &erg, &mut files)?;
    let mut t = Table::new("ergodic", &["x", "u_bar", "m_bar"]);
    for i in 0..spec.grid().n() {
        t.push(vec![Cell::Num(spec.grid().node(i)), Cell::Num(erg.u_bar[i]), Cell::Num(erg.m_bar[i])]);
    }
    write_table(out, &t, &mut files)?;
    let tol = 10.0 * cfg.ergodic.tol;
    let r = erg.residuals;
    Ok(CommandOutcome {
        files,
        checks: vec![Check::new("stationary residuals <= 10 tol", r.0 <= tol && r.1 <= tol, format!("{:.3e}, {:.3e}", r.0, r.1))],
    })
}

pub fn solve_discounted_command(cfg: &ExperimentConfig, delta: f64, out: &Path) -> Result<CommandOutcome> {
    let spec = cfg.model_spec()?;
    let m0 = cfg.initial_density(&spec)?;
    let stat = solve_discounted_stationary(&spec, delta, &cfg.solver)?;
    let opts = DiscountedOptions {
        picard: cfg.solver,
        dt_factor: cfg.time.dt_factor,
        check_tail: cfg.check_tail,
    };
    let sol = solve_discounted_mfg_with(&spec, &stat, &m0, cfg.t_trunc, &opts)?;
    let d = sol.solution.diagnostics();
    let mut files = Vec::new();
    write_json(
        out,
        "discounted.json",
        &json!({
            "delta": delta,
            "t_trunc": sol.t_trunc,
            "tail_change": sol.tail_change,
            "warnings": sol.warnings,
            "diagnostics": d,
            "stationary_residuals": [stat.residuals.0, stat.residuals.1],
        }),
        &mut files,
    )?;
    let mut t = Table::new("discounted_stationary", &["x", "u_bar_delta", "m_bar_delta"]);
    for i in 0..spec.grid().n() {
        t.push(vec![Cell::Num(spec.grid().node(i)), Cell::Num(stat.u_bar_delta[i]), Cell::Num(stat.m_bar_delta[i])]);
    }
    write_table(out, &t, &mut files)?;
    write_table(out, &path_table("discounted_path", spec.grid(), &sol.solution.time, &sol.solution.u_path, &sol.solution.m_path), &mut files)?;
    Ok(CommandOutcome {
        files,
        checks: mass_checks(d.max_mass_error, d.min_density),
    })
}

pub fn linearize_ergodic_command(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutcome> {
    let spec = cfg.model_spec()?;
    let erg = solve_ergodic(&spec, &cfg.ergodic)?;
    let lin = solve_linearized_ergodic(&spec, &erg)?;
    let mut files = Vec::new();
    write_json(out, "linearized_ergodic.json", &json!({ "lambda_bar": erg.lambda_bar, "linearized": lin }), &mut files)?;
    let mut t = Table::new("linearized_ergodic", &["x", "v_bar", "mu_bar"]);
    for i in 0..spec.grid().n() {
        t.push(vec![Cell::Num(spec.grid().node(i)), Cell::Num(lin.v_bar[i]), Cell::Num(lin.mu_bar[i])]);
    }
    write_table(out, &t, &mut files)?;
    let tol = 10.0 * cfg.ergodic.tol;
    Ok(CommandOutcome {
        files,
        checks: vec![Check::new(
            "linear residuals <= 10 tol",
            lin.residuals.0 <= tol && lin.residuals.1 <= tol,
            format!("{:.3e}, {:.3e}", lin.residuals.0, lin.residuals.1),
        )],
    })
}

/// Corrector at `m0` and at `probes` random densities, with the Lipschitz
/// estimate over consecutive pairs.
pub fn master_eval_command(
    cfg: &ExperimentConfig,
    method: CorrectorMethod,
    normalization: Normalization,
    probes: usize,
    out: &Path,
) -> Result<CommandOutcome> {
    let spec = cfg.model_spec()?;
    let m0 = cfg.initial_density(&spec)?;
    let pipeline = CorrectorPipeline::new(&spec, method, normalization, cfg.master_options())?;
    let mut densities = vec![m0];
    densities.extend(random_probes(spec.grid(), probes, cfg.seed)?);
    let mut t = Table::new("corrector", &["probe", "x", "m", "chi"]);
    let mut meta = Vec::new();
    for (p, m) in densities.iter().enumerate() {
        let c = pipeline.evaluate(m)?;
        for i in 0..spec.grid().n() {
            t.push(vec![Cell::Int(p as i64), Cell::Num(spec.grid().node(i)), Cell::Num(m[i]), Cell::Num(c.chi[i])]);
        }
        meta.push(json!({
            "probe": p,
            "shift_constant": c.shift_constant,
            "t_or_delta_used": c.t_or_delta_used,
            "cauchy_gap": c.cauchy_gap,
        }));
    }
    let pairs: Vec<(Density, Density)> = densities.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
    let lip = lipschitz_estimate(&pipeline, &pairs)?;
    let mut files = Vec::new();
    write_json(
        out,
        "master_eval.json",
        &json!({
            "method": method,
            "normalization": normalization,
            "lambda_bar": pipeline.ergodic().lambda_bar,
            "theta_bar": pipeline.linearized().theta_bar,
            "seed": cfg.seed,
            "probes": meta,
            "lipschitz_estimate": lip,
        }),
        &mut files,
    )?;
    write_table(out, &t, &mut files)?;
    Ok(CommandOutcome {
        files,
        checks: vec![Check::new("Lipschitz estimate finite", lip.is_finite(), format!("{lip:.4e}"))],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ModelChoice;

    #[test]
    fn probes_are_seeded_densities() {
        let g = TorusGrid::new(32).unwrap();
        let a = random_probes(&g, 3, 7).unwrap();
        let b = random_probes(&g, 3, 7).unwrap();
        let c = random_probes(&g, 3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|m| m.min() > 0.0 && (m.mass() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn commands_write_their_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            grid: crate::experiments::GridConfig { n: 16 },
            model: ModelChoice::Preset("standard".into()),
            t_trunc: Some(2.0),
            ..ExperimentConfig::default()
        };
        let o = solve_finite_command(&cfg, 1.0, dir.path()).unwrap();
        assert!(o.checks_hold() && o.files.iter().all(|f| f.exists()));
        assert!(solve_ergodic_command(&cfg, dir.path()).unwrap().checks_hold());
        assert!(solve_discounted_command(&cfg, 0.2, dir.path()).unwrap().checks_hold());
        assert!(linearize_ergodic_command(&cfg, dir.path()).unwrap().checks_hold());
        let o = master_eval_command(&cfg, CorrectorMethod::Longtime, Normalization::ThetaSelected, 2, dir.path()).unwrap();
        assert!(o.checks_hold());
        let text = std::fs::read_to_string(dir.path().join("corrector.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 16);
    }
}
