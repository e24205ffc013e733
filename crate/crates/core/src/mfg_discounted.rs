//! Discounted MFG system on a truncated horizon and its stationary version
//!
//! ```text
//! -d_t u + delta u - Delta u + H(x, Du) = F(x, m(t)),   m(0) = m0
//!  delta u - Delta u + H(x, Du) = F(x, m),  -Delta m - div(m H_p(x, Du)) = 0
//! ```
//!
//! The stationary pair is not normalized: `delta u - Delta u + H = f` is
//! uniquely solvable on its own, and `delta * u` tends to the ergodic
//! constant as `delta -> 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{linf_distance, Density, Field};
use crate::mfg_ergodic::{fp_residual, stationary_fp};
use crate::mfg_finite::{distance_curve, picard, DistanceSample, MfgSolution, PicardOptions, Problem, TerminalCondition, TimeGrid};
use crate::model::{Coupling, ModelSpec};
use crate::scheme::{hamiltonian_jacobian, hjb_stationary_residual, neg_laplacian};

/// Largest admissible discount rate.
pub const DELTA_MAX: f64 = 0.5;

/// Longest truncated horizon.
pub const T_TRUNC_CAP: f64 = 200.0;

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= DELTA_MAX) {
        return Err(Error::InvalidArgument(format!("delta out of range (0, {DELTA_MAX}]: {delta}")));
    }
    Ok(())
}

/// Default truncation `max(20, 5/delta)` capped at [`T_TRUNC_CAP`].
pub fn default_truncation(delta: f64) -> f64 {
    (5.0 / delta).clamp(20.0, T_TRUNC_CAP)
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscountedStationary {
    pub delta: f64,
    pub u_bar_delta: Field,
    pub m_bar_delta: Density,
    /// `(HJB residual, FP residual)` in the sup norm.
    pub residuals: (f64, f64),
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct DiscountedOptions {
    pub picard: PicardOptions,
    pub dt_factor: f64,
    /// Re-solve on the doubled horizon and fail with `TailSensitive` if
    /// `u(0)` moves by more than `10 tol`.
    pub check_tail: bool,
}

impl Default for DiscountedOptions {
    fn default() -> Self {
        Self {
            picard: PicardOptions::default(),
            dt_factor: 0.25,
            check_tail: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscountedSolution {
    pub delta: f64,
    pub t_trunc: f64,
    #[serde(flatten)]
    pub solution: MfgSolution,
    /// `||u(0) - u_2T(0)||_inf` when the tail check ran.
    pub tail_change: Option<f64>,
    pub warnings: Vec<String>,
}

/// Residual of `delta u - Delta_h u + H_h(u) = f`, evaluated on `u - <u>`
/// so that the large constant part `~ lambda/delta` does not pollute the
/// difference quotients with rounding.
pub(crate) fn discounted_residual(spec: &ModelSpec, u: &[f64], f: &[f64], delta: f64) -> Result<Vec<f64>> {
    let c = u.iter().sum::<f64>() / u.len() as f64;
    let w: Vec<f64> = u.iter().map(|v| v - c).collect();
    hjb_stationary_residual(spec, &w, f, delta * c, delta)
}

/// Newton with backtracking for `delta u - Delta_h u + H_h(u) = f`, run on
/// the centered part `w = u - c` with the constant `c` frozen.
pub(crate) fn discounted_hjb(spec: &ModelSpec, f: &[f64], delta: f64, guess: Option<&[f64]>, tol: f64) -> Result<Field> {
    let grid = spec.grid();
    grid.check_len(f)?;
    let n = grid.n();
    let lap = neg_laplacian(grid);
    let (c, mut w) = match guess {
        Some(g) => {
            let c = g.iter().sum::<f64>() / n as f64;
            (c, g.iter().map(|v| v - c).collect::<Vec<_>>())
        }
        None => {
            // H(x, 0) = -V, so this constant solves the spatially averaged equation
            let c = f.iter().zip(spec.potential().iter()).map(|(a, v)| a + v).sum::<f64>() / (n as f64 * delta);
            (c, vec![0.0; n])
        }
    };
    let norm = |r: &[f64]| r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let residual = |w: &[f64]| hjb_stationary_residual(spec, w, f, delta * c, delta);
    let mut res = residual(&w)?;
    let mut rn = norm(&res);
    let target = (1e-3 * tol).max(1e-14);
    let mut iterations = 0;
    while iterations < 100 && rn > target {
        iterations += 1;
        let mut jac = hamiltonian_jacobian(spec, &w)?;
        jac.add_scaled(1.0, &lap);
        jac.add_diagonal(delta);
        let step = jac.solve(&res)?;
        let mut t = 1.0;
        let (trial, r, trn) = loop {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let r = residual(&trial)?;
            let trn = norm(&r);
            if trn < rn || t < 1e-4 {
                break (trial, r, trn);
            }
            t *= 0.5;
        };
        let stalled = trn >= rn || t * norm(&step) <= 8.0 * f64::EPSILON * (1.0 + norm(&trial));
        w = trial;
        res = r;
        rn = trn;
        if stalled {
            // rounding floor of the residual evaluation
            break;
        }
    }
    if rn <= tol {
        return Ok(Field::from_vec(w.into_iter().map(|v| v + c).collect()));
    }
    Err(Error::NonConvergence {
        iterations,
        residual: rn,
    })
}

/// Outer damped fixed point between the discounted HJB equation and the
/// stationary Fokker-Planck equation.
pub fn solve_discounted_stationary(spec: &ModelSpec, delta: f64, opts: &PicardOptions) -> Result<DiscountedStationary> {
    check_delta(delta)?;
    opts.validate()?;
    let mut m = Density::uniform(spec.grid());
    let mut u: Option<Field> = None;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let f = spec.coupling_field(Coupling::F, &m)?;
        let un = discounted_hjb(spec, &f, delta, u.as_deref(), opts.tol)?;
        let m_new = stationary_fp(spec, &un)?;
        change = linf_distance(&m_new, &m);
        u = Some(un);
        if change <= opts.tol || spec.is_decoupled() {
            // make the returned pair consistent with each other
            let f = spec.coupling_field(Coupling::F, &m_new)?;
            let u = discounted_hjb(spec, &f, delta, u.as_deref(), opts.tol)?;
            let m = stationary_fp(spec, &u)?;
            let f = spec.coupling_field(Coupling::F, &m)?;
            let hjb = discounted_residual(spec, &u, &f, delta)?
                .iter()
                .fold(0.0_f64, |a, v| a.max(v.abs()));
            let fp = fp_residual(spec, &u, &m)?;
            return Ok(DiscountedStationary {
                delta,
                u_bar_delta: u,
                m_bar_delta: m,
                residuals: (hjb, fp),
                iterations: it,
            });
        }
        m = m.blend(&m_new, opts.damping);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: change,
    })
}

fn solve_truncated(
    spec: &ModelSpec,
    stat: &DiscountedStationary,
    m0: &Density,
    t_trunc: f64,
    opts: &DiscountedOptions,
) -> Result<MfgSolution> {
    let tg = TimeGrid::with_factor(t_trunc, spec.grid(), opts.dt_factor)?;
    let terminal = TerminalCondition::FixedField(stat.u_bar_delta.clone());
    let problem = Problem {
        spec,
        tg,
        m0,
        terminal: &terminal,
        shift: 0.0,
        discount: stat.delta,
    };
    // The solution relaxes to the stationary density, which is therefore a
    // better Picard start than the constant path m0.
    let mut guess = vec![stat.m_bar_delta.clone(); tg.nt() + 1];
    guess[0] = m0.clone();
    picard(&problem, &opts.picard, Some(guess))
}

/// Discounted MFG system on `[0, t_trunc]` with `u(t_trunc) = u_bar_delta`.
/// `t_trunc = None` selects [`default_truncation`].
pub fn solve_discounted_mfg(
    spec: &ModelSpec,
    delta: f64,
    m0: &Density,
    t_trunc: Option<f64>,
    opts: &DiscountedOptions,
) -> Result<DiscountedSolution> {
    let stat = solve_discounted_stationary(spec, delta, &opts.picard)?;
    solve_discounted_mfg_with(spec, &stat, m0, t_trunc, opts)
}

/// [`solve_discounted_mfg`] around an already computed stationary pair.
pub fn solve_discounted_mfg_with(
    spec: &ModelSpec,
    stat: &DiscountedStationary,
    m0: &Density,
    t_trunc: Option<f64>,
    opts: &DiscountedOptions,
) -> Result<DiscountedSolution> {
    check_delta(stat.delta)?;
    spec.grid().check_len(m0)?;
    let mut warnings = Vec::new();
    let t_trunc = match t_trunc {
        Some(t) => t,
        None => {
            if 5.0 / stat.delta > T_TRUNC_CAP {
                warnings.push(format!(
                    "truncated horizon capped at {T_TRUNC_CAP} for delta = {}",
                    stat.delta
                ));
            }
            default_truncation(stat.delta)
        }
    };
    let solution = solve_truncated(spec, stat, m0, t_trunc, opts)?;
    let mut tail_change = None;
    if opts.check_tail {
        let long = solve_truncated(spec, stat, m0, 2.0 * t_trunc, opts)?;
        let change = linf_distance(solution.u0(), long.u0());
        tail_change = Some(change);
        if change > 10.0 * opts.picard.tol {
            return Err(Error::TailSensitive { change });
        }
    }
    Ok(DiscountedSolution {
        delta: stat.delta,
        t_trunc,
        solution,
        tail_change,
        warnings,
    })
}

/// Per-slice distances of the truncated solution to the stationary pair.
pub fn discounted_decay_curve(sol: &DiscountedSolution, stat: &DiscountedStationary) -> Result<Vec<DistanceSample>> {
    if sol.delta != stat.delta {
        return Err(Error::InvalidArgument(format!(
            "delta mismatch: solution has {}, stationary pair has {}",
            sol.delta, stat.delta
        )));
    }
    let grid = crate::grid::TorusGrid::new(stat.u_bar_delta.len())?;
    let s = &sol.solution;
    distance_curve(&grid, &s.time, &s.u_path, &s.m_path, &stat.u_bar_delta, &stat.m_bar_delta)
}
