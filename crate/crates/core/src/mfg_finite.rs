//! Finite-horizon MFG system
//!
//! ```text
//! -d_t u - Delta u + H(x, Du) + lambda = F(x, m)      on (0, T)
//!  d_t m - Delta m - div(m H_p(x, Du)) = 0            on (0, T)
//!  m(0) = m0,  u(T) = terminal(m(T))
//! ```
//!
//! Time stepping is backward Euler for both equations. Step `k` of the HJB
//! equation is implicit in `u^k` and sees `F(m^{k+1})`; step `k -> k+1` of the
//! Fokker-Planck equation is implicit in `m^{k+1}` and uses the drift of
//! `u^k`. This pairing makes the discrete duality identity exact, so
//! `sum (u1 - u2)(m1 - m2)` is nonincreasing step by step for monotone
//! couplings. The coupled system is solved by a damped Picard iteration on
//! the density path.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{l2_distance, linf_distance, pairing, Density, Field, TorusGrid};
use crate::model::{Coupling, ModelSpec};
use crate::scheme::{drift_operator, hamiltonian_field, hamiltonian_jacobian, neg_laplacian};
use crate::tridiag::CyclicTridiag;

/// Upper bound of `dt / h`.
pub const MAX_DT_FACTOR: f64 = 0.25;

/// Largest per-step mass drift accepted from the Fokker-Planck sweep.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    nt: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, nt: usize, grid: &TorusGrid) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if nt == 0 {
            return Err(Error::InvalidArgument("need at least one time step".into()));
        }
        let tg = Self { horizon, nt };
        if tg.dt() > MAX_DT_FACTOR * grid.h() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} exceeds {MAX_DT_FACTOR} h = {}",
                tg.dt(),
                MAX_DT_FACTOR * grid.h()
            )));
        }
        Ok(tg)
    }

    /// Smallest step count with `dt <= dt_factor * h`.
    pub fn with_factor(horizon: f64, grid: &TorusGrid, dt_factor: f64) -> Result<Self> {
        if !(dt_factor > 0.0) {
            return Err(Error::InvalidArgument(format!("dt_factor must be positive, got {dt_factor}")));
        }
        let nt = (horizon / (dt_factor * grid.h()) - 1e-9).ceil().max(1.0) as usize;
        Self::new(horizon, nt, grid)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

/// How `u(T)` is obtained from `m(T)`.
pub enum TerminalCondition<'a> {
    /// `u(T) = G(., m(T))`.
    CouplingG,
    FixedField(Field),
    /// `u(T) = chi(., m(T))` for an arbitrary map on densities.
    FieldOfMeasure(&'a (dyn Fn(&Density) -> Result<Field> + Sync)),
}

impl TerminalCondition<'_> {
    pub fn evaluate(&self, spec: &ModelSpec, m: &Density) -> Result<Field> {
        match self {
            TerminalCondition::CouplingG => spec.coupling_field(Coupling::G, m),
            TerminalCondition::FixedField(f) => {
                spec.grid().check_len(f)?;
                Ok(f.clone())
            }
            TerminalCondition::FieldOfMeasure(chi) => chi(m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardOptions {
    #[serde(alias = "alpha")]
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

impl PicardOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument("tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MfgSolution {
    pub time: TimeGrid,
    pub u_path: Vec<Field>,
    pub m_path: Vec<Density>,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// `max_k |mass(m_k) - 1|`
    pub max_mass_error: f64,
    pub min_density: f64,
}

/// `(max_k |mass(m_k) - 1|, min_k min_i m_k(i))` over a path.
pub fn density_path_stats(path: &[Density]) -> (f64, f64) {
    path.iter().fold((0.0_f64, f64::INFINITY), |(e, lo), m| (e.max((m.mass() - 1.0).abs()), lo.min(m.min())))
}

impl MfgSolution {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            iterations: self.iterations,
            final_residual: self.final_residual,
            converged: self.converged,
            max_mass_error: density_path_stats(&self.m_path).0,
            min_density: density_path_stats(&self.m_path).1,
        }
    }

    pub fn u0(&self) -> &Field {
        &self.u_path[0]
    }

    pub fn terminal_density(&self) -> &Density {
        self.m_path.last().expect("paths are never empty")
    }
}

/// One step of the backward HJB equation. Solves
/// `(u - u_next)/dt + discount u - Delta_h u + H_h(u) + shift = f` by Newton,
/// started from `u_next`.
pub(crate) fn hjb_step(
    spec: &ModelSpec,
    lap: &CyclicTridiag,
    u_next: &[f64],
    f: &[f64],
    dt: f64,
    shift: f64,
    discount: f64,
) -> Result<Vec<f64>> {
    let inv_dt = 1.0 / dt;
    let mut u = u_next.to_vec();
    let scale = 1.0 + u_next.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for _ in 0..30 {
        let lu = lap.apply(&u);
        let h = hamiltonian_field(spec, &u)?;
        let res: Vec<f64> = (0..u.len())
            .map(|i| (u[i] - u_next[i]) * inv_dt + discount * u[i] + lu[i] + h[i] + shift - f[i])
            .collect();
        let mut jac = hamiltonian_jacobian(spec, &u)?;
        jac.add_scaled(1.0, lap);
        jac.add_diagonal(inv_dt + discount);
        let du = jac.solve(&res)?;
        let step = du.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (ui, d) in u.iter_mut().zip(&du) {
            *ui -= d;
        }
        if step <= 4.0 * f64::EPSILON * scale {
            return Ok(u);
        }
    }
    Err(Error::NonConvergence {
        iterations: 30,
        residual: f64::NAN,
    })
}

pub(crate) fn hjb_sweep_with(
    spec: &ModelSpec,
    tg: &TimeGrid,
    m_path: &[Density],
    terminal: Field,
    shift: f64,
    discount: f64,
) -> Result<Vec<Field>> {
    let nt = tg.nt();
    if m_path.len() != nt + 1 {
        return Err(Error::SizeMismatch {
            expected: nt + 1,
            found: m_path.len(),
        });
    }
    let lap = neg_laplacian(spec.grid());
    let dt = tg.dt();
    let mut path = vec![Field::zeros(spec.grid()); nt + 1];
    path[nt] = terminal;
    for k in (0..nt).rev() {
        let f = spec.coupling_field(Coupling::F, &m_path[k + 1])?;
        let u = hjb_step(spec, &lap, &path[k + 1], &f, dt, shift, discount)?;
        path[k] = Field::from_vec(u);
    }
    Ok(path)
}

/// Backward sweep for `u` given the density path; `u[nt]` is the terminal
/// condition evaluated on `m_path[nt]`.
pub fn hjb_backward_sweep(
    spec: &ModelSpec,
    tg: &TimeGrid,
    m_path: &[Density],
    terminal: &TerminalCondition<'_>,
    lambda_shift: f64,
) -> Result<Vec<Field>> {
    let last = m_path.last().ok_or(Error::SizeMismatch {
        expected: tg.nt() + 1,
        found: 0,
    })?;
    let ut = terminal.evaluate(spec, last)?;
    hjb_sweep_with(spec, tg, m_path, ut, lambda_shift, 0.0)
}

/// One implicit Fokker-Planck step `m^k -> m^{k+1}` with the drift of `u`.
pub(crate) fn fp_step(spec: &ModelSpec, lap: &CyclicTridiag, u: &[f64], m: &[f64], dt: f64) -> Result<Vec<f64>> {
    let inv_dt = 1.0 / dt;
    let mut a = drift_operator(spec, u)?;
    a.add_scaled(1.0, lap);
    a.add_diagonal(inv_dt);
    let rhs: Vec<f64> = m.iter().map(|v| v * inv_dt).collect();
    a.solve(&rhs)
}

/// `fp_step` followed by the mass check and a rescale to `target_mass`.
/// The scheme conserves mass exactly; the rescale removes the round-off
/// drift that otherwise accumulates over long horizons.
pub(crate) fn conservative_fp_step(
    spec: &ModelSpec,
    lap: &CyclicTridiag,
    u: &[f64],
    m: &[f64],
    dt: f64,
    target_mass: f64,
    step: usize,
) -> Result<Vec<f64>> {
    let mut next = fp_step(spec, lap, u, m, dt)?;
    let before = m.iter().sum::<f64>() / m.len() as f64;
    let after = next.iter().sum::<f64>() / next.len() as f64;
    if (after - before).abs() > MASS_DRIFT_TOL {
        return Err(Error::MassDrift {
            step,
            drift: after - before,
        });
    }
    let scale = target_mass / after;
    next.iter_mut().for_each(|v| *v *= scale);
    Ok(next)
}

/// Forward conservative sweep. Each implicit matrix is an M-matrix with unit
/// column sums (after scaling by `dt`), so mass and nonnegativity carry over.
pub fn fp_forward_sweep(spec: &ModelSpec, tg: &TimeGrid, u_path: &[Field], m0: &Density) -> Result<Vec<Density>> {
    let nt = tg.nt();
    if u_path.len() != nt + 1 {
        return Err(Error::SizeMismatch {
            expected: nt + 1,
            found: u_path.len(),
        });
    }
    spec.grid().check_len(m0)?;
    let lap = neg_laplacian(spec.grid());
    let dt = tg.dt();
    let mut path = Vec::with_capacity(nt + 1);
    path.push(m0.clone());
    let mass = m0.mass();
    for k in 0..nt {
        let next = conservative_fp_step(spec, &lap, &u_path[k], &path[k], dt, mass, k)?;
        path.push(Density::from_vec_unchecked(next));
    }
    Ok(path)
}

/// The nonlinear problem behind the finite and discounted solvers.
pub(crate) struct Problem<'a> {
    pub spec: &'a ModelSpec,
    pub tg: TimeGrid,
    pub m0: &'a Density,
    pub terminal: &'a TerminalCondition<'a>,
    pub shift: f64,
    pub discount: f64,
}

fn path_distance(a: &[Density], b: &[Density]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |acc, (x, y)| acc.max(linf_distance(x, y)))
}

pub(crate) fn picard(problem: &Problem<'_>, opts: &PicardOptions, guess: Option<Vec<Density>>) -> Result<MfgSolution> {
    opts.validate()?;
    let Problem {
        spec,
        tg,
        m0,
        terminal,
        shift,
        discount,
    } = *problem;
    let nt = tg.nt();
    let grid = spec.grid();
    grid.check_len(m0)?;
    let mut m_iter = match guess {
        Some(g) => {
            if g.len() != nt + 1 {
                return Err(Error::SizeMismatch {
                    expected: nt + 1,
                    found: g.len(),
                });
            }
            g
        }
        None => vec![m0.clone(); nt + 1],
    };
    m_iter[0] = m0.clone();

    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let ut = terminal.evaluate(spec, &m_iter[nt])?;
        let u_path = hjb_sweep_with(spec, &tg, &m_iter, ut, shift, discount)?;
        let m_new = fp_forward_sweep(spec, &tg, &u_path, m0)?;
        residual = path_distance(&m_new, &m_iter);
        // Without couplings the sweeps do not depend on the iterate, so the
        // first forward sweep is already the fixed point.
        if spec.is_decoupled() {
            residual = 0.0;
        }
        if residual <= opts.tol {
            return Ok(MfgSolution {
                time: tg,
                u_path,
                m_path: m_new,
                iterations: it,
                final_residual: residual,
                converged: true,
            });
        }
        if opts.damping == 1.0 {
            m_iter = m_new;
        } else {
            for (mi, mn) in m_iter.iter_mut().zip(&m_new) {
                *mi = mi.blend(mn, opts.damping);
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

pub fn solve_mfg_finite(
    spec: &ModelSpec,
    tg: &TimeGrid,
    m0: &Density,
    terminal: &TerminalCondition<'_>,
    lambda_shift: f64,
    opts: &PicardOptions,
) -> Result<MfgSolution> {
    solve_mfg_finite_from(spec, tg, m0, terminal, lambda_shift, opts, None)
}

/// [`solve_mfg_finite`] started from a given density path instead of the
/// constant path `m0`.
pub fn solve_mfg_finite_from(
    spec: &ModelSpec,
    tg: &TimeGrid,
    m0: &Density,
    terminal: &TerminalCondition<'_>,
    lambda_shift: f64,
    opts: &PicardOptions,
    initial_guess: Option<Vec<Density>>,
) -> Result<MfgSolution> {
    let problem = Problem {
        spec,
        tg: *tg,
        m0,
        terminal,
        shift: lambda_shift,
        discount: 0.0,
    };
    picard(&problem, opts, initial_guess)
}

fn check_same_shape(a: &MfgSolution, b: &MfgSolution) -> Result<()> {
    if a.time != b.time || a.u_path.len() != b.u_path.len() || a.u_path[0].len() != b.u_path[0].len() {
        return Err(Error::InvalidArgument("solutions live on different grids".into()));
    }
    Ok(())
}

/// `t_k -> h sum (u1 - u2)(m1 - m2)`.
pub fn duality_curve(sol1: &MfgSolution, sol2: &MfgSolution) -> Result<Vec<(f64, f64)>> {
    check_same_shape(sol1, sol2)?;
    Ok((0..sol1.u_path.len())
        .map(|k| {
            let du: Vec<f64> = sol1.u_path[k].iter().zip(sol2.u_path[k].iter()).map(|(a, b)| a - b).collect();
            let dm: Vec<f64> = sol1.m_path[k].iter().zip(sol2.m_path[k].iter()).map(|(a, b)| a - b).collect();
            (sol1.time.time(k), pairing(&du, &dm))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistanceSample {
    pub t: f64,
    pub dist_m: f64,
    pub dist_du: f64,
    pub dist_m_l2: f64,
    pub dist_du_l2: f64,
}

pub(crate) fn distance_curve(
    grid: &TorusGrid,
    time: &TimeGrid,
    u_path: &[Field],
    m_path: &[Density],
    u_ref: &[f64],
    m_ref: &[f64],
) -> Result<Vec<DistanceSample>> {
    grid.check_len(u_ref)?;
    grid.check_len(m_ref)?;
    let du_ref = grid.gradient(u_ref)?;
    u_path
        .iter()
        .zip(m_path)
        .enumerate()
        .map(|(k, (u, m))| {
            let du = grid.gradient(u)?;
            Ok(DistanceSample {
                t: time.time(k),
                dist_m: linf_distance(m, m_ref),
                dist_du: linf_distance(&du, &du_ref),
                dist_m_l2: l2_distance(m, m_ref),
                dist_du_l2: l2_distance(&du, &du_ref),
            })
        })
        .collect()
}

/// Per-slice `||m(t) - m_bar||_inf` and `||Du(t) - Du_bar||_inf` (plus L2).
pub fn turnpike_distance_curve(
    sol: &MfgSolution,
    erg: &crate::mfg_ergodic::ErgodicSolution,
) -> Result<Vec<DistanceSample>> {
    let grid = TorusGrid::new(erg.u_bar.len())?;
    distance_curve(&grid, &sol.time, &sol.u_path, &sol.m_path, &erg.u_bar, &erg.m_bar)
}
