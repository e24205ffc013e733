//! Linearized MFG systems around a base solution.
//!
//! The time-dependent systems are the exact derivative of the discrete
//! scheme in [`crate::mfg_finite`]: for a base `(u, m)` and a centered
//! initial perturbation `mu0`,
//!
//! ```text
//! (v^k - v^{k+1})/dt + delta v^k - Delta_h v^k + B_{u^k} v^k = dF(mu^{k+1})
//! (mu^{k+1} - mu^k)/dt - Delta_h mu^{k+1} + A_{u^k} mu^{k+1} + C_{m^{k+1}} v^k = 0
//! ```
//!
//! with `B` the linearized Hamiltonian, `A = B^T` the drift and `C` the
//! `-div(m H_pp D.)` operator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{linf_distance, pairing, Density, Field, SignedField};
use crate::mfg_discounted::{solve_discounted_mfg_with, DiscountedOptions, DiscountedSolution, DiscountedStationary};
use crate::mfg_ergodic::ErgodicSolution;
use crate::mfg_finite::{density_path_stats, solve_mfg_finite, MfgSolution, PicardOptions, TerminalCondition, TimeGrid};
use crate::model::{Coupling, ModelSpec};
use crate::scheme::{drift_operator, hamiltonian_jacobian, hpp_operator, neg_laplacian};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// `v(T) = dG/dm(m(T))(mu(T))`.
    DgDm,
    Zero,
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearizedSolution {
    pub time: TimeGrid,
    pub v_path: Vec<Field>,
    pub mu_path: Vec<SignedField>,
    pub iterations: usize,
    /// Last sup-in-time change of the `mu` path relative to `||mu0||_inf`.
    pub final_residual: f64,
    pub converged: bool,
}

impl LinearizedSolution {
    pub fn v0(&self) -> &Field {
        &self.v_path[0]
    }

    /// `t_k -> h sum mu(t_k) v(t_k)`.
    pub fn pairing_curve(&self) -> Vec<(f64, f64)> {
        self.v_path
            .iter()
            .zip(&self.mu_path)
            .enumerate()
            .map(|(k, (v, mu))| (self.time.time(k), pairing(v, mu)))
            .collect()
    }
}

struct LinearProblem<'a> {
    spec: &'a ModelSpec,
    tg: TimeGrid,
    u_path: &'a [Field],
    m_path: &'a [Density],
    terminal: TerminalMode,
    discount: f64,
}

fn zeros_solution(grid: &crate::grid::TorusGrid, tg: TimeGrid) -> LinearizedSolution {
    LinearizedSolution {
        time: tg,
        v_path: vec![Field::zeros(grid); tg.nt() + 1],
        mu_path: vec![SignedField::zeros(grid); tg.nt() + 1],
        iterations: 0,
        final_residual: 0.0,
        converged: true,
    }
}

fn linear_picard(p: &LinearProblem<'_>, mu0: &SignedField, opts: &PicardOptions) -> Result<LinearizedSolution> {
    opts.validate()?;
    let spec = p.spec;
    let grid = spec.grid();
    grid.check_len(mu0)?;
    if !mu0.is_centered() {
        return Err(Error::NotCentered { mass: mu0.mass() });
    }
    let nt = p.tg.nt();
    if p.u_path.len() != nt + 1 || p.m_path.len() != nt + 1 {
        return Err(Error::SizeMismatch {
            expected: nt + 1,
            found: p.u_path.len().min(p.m_path.len()),
        });
    }
    let scale = mu0.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Ok(zeros_solution(grid, p.tg));
    }
    let n = grid.n();
    let dt = p.tg.dt();
    let inv_dt = 1.0 / dt;
    let lap = neg_laplacian(grid);

    let mut mu_iter: Vec<Vec<f64>> = vec![vec![0.0; n]; nt + 1];
    mu_iter[0] = mu0.to_vec();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        // backward sweep for v
        let mut v_path = vec![Vec::new(); nt + 1];
        v_path[nt] = match p.terminal {
            TerminalMode::DgDm => spec.convolve(Coupling::G, &mu_iter[nt])?.into_vec(),
            TerminalMode::Zero => vec![0.0; n],
        };
        for k in (0..nt).rev() {
            let src = spec.convolve(Coupling::F, &mu_iter[k + 1])?;
            let mut a = hamiltonian_jacobian(spec, &p.u_path[k])?;
            a.add_scaled(1.0, &lap);
            a.add_diagonal(inv_dt + p.discount);
            let rhs: Vec<f64> = (0..n).map(|i| v_path[k + 1][i] * inv_dt + src[i]).collect();
            v_path[k] = a.solve(&rhs)?;
        }
        // forward sweep for mu
        let mut mu_new: Vec<Vec<f64>> = Vec::with_capacity(nt + 1);
        mu_new.push(mu0.to_vec());
        for k in 0..nt {
            let mut a = drift_operator(spec, &p.u_path[k])?;
            a.add_scaled(1.0, &lap);
            a.add_diagonal(inv_dt);
            let cv = hpp_operator(spec, &p.m_path[k + 1])?.apply(&v_path[k]);
            let rhs: Vec<f64> = (0..n).map(|i| mu_new[k][i] * inv_dt - cv[i]).collect();
            mu_new.push(a.solve(&rhs)?);
        }
        residual = mu_new
            .iter()
            .zip(&mu_iter)
            .fold(0.0_f64, |acc, (a, b)| acc.max(linf_distance(a, b)))
            / scale;
        if residual <= opts.tol || spec.is_decoupled() {
            return Ok(LinearizedSolution {
                time: p.tg,
                v_path: v_path.into_iter().map(Field::from_vec).collect(),
                mu_path: mu_new.into_iter().map(SignedField::from_vec_centered).collect(),
                iterations: it,
                final_residual: if spec.is_decoupled() { 0.0 } else { residual },
                converged: true,
            });
        }
        let a = opts.damping;
        for (mi, mn) in mu_iter.iter_mut().zip(&mu_new) {
            for (x, y) in mi.iter_mut().zip(mn) {
                *x = (1.0 - a) * *x + a * y;
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Linearization of the finite-horizon system around `base`.
pub fn solve_linearized_finite(
    spec: &ModelSpec,
    base: &MfgSolution,
    mu0: &SignedField,
    terminal_mode: TerminalMode,
    opts: &PicardOptions,
) -> Result<LinearizedSolution> {
    let p = LinearProblem {
        spec,
        tg: base.time,
        u_path: &base.u_path,
        m_path: &base.m_path,
        terminal: terminal_mode,
        discount: 0.0,
    };
    linear_picard(&p, mu0, opts)
}

/// Linearization of the truncated discounted system, with `v(T) = 0`.
pub fn solve_linearized_discounted(
    spec: &ModelSpec,
    base: &DiscountedSolution,
    mu0: &SignedField,
    delta: f64,
    opts: &PicardOptions,
) -> Result<LinearizedSolution> {
    if delta != base.delta {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} differs from the base solution's {}",
            base.delta
        )));
    }
    let p = LinearProblem {
        spec,
        tg: base.solution.time,
        u_path: &base.solution.u_path,
        m_path: &base.solution.m_path,
        terminal: TerminalMode::Zero,
        discount: delta,
    };
    linear_picard(&p, mu0, opts)
}

/// Solves the discounted base and its linearization on `t_trunc` and on
/// `2 t_trunc`; fails with `TailSensitive` if `v(0)` moves by more than
/// `10 tol` relative to `||mu0||_inf`.
pub fn linearized_discounted_tail_check(
    spec: &ModelSpec,
    stat: &DiscountedStationary,
    m0: &Density,
    mu0: &SignedField,
    t_trunc: f64,
    opts: &DiscountedOptions,
) -> Result<f64> {
    let lin = |t: f64| -> Result<LinearizedSolution> {
        let base = solve_discounted_mfg_with(spec, stat, m0, Some(t), opts)?;
        solve_linearized_discounted(spec, &base, mu0, stat.delta, &opts.picard)
    };
    let a = lin(t_trunc)?;
    let b = lin(2.0 * t_trunc)?;
    let scale = mu0.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let change = linf_distance(a.v0(), b.v0()) / scale;
    if change > 10.0 * opts.picard.tol {
        return Err(Error::TailSensitive { change });
    }
    Ok(change)
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearizedErgodic {
    pub theta_bar: f64,
    pub v_bar: Field,
    pub mu_bar: SignedField,
    /// `(v-equation residual, mu-equation residual)` in the sup norm.
    pub residuals: (f64, f64),
}

/// Dense operators of the stationary linear systems around `erg`.
struct StationaryBlocks {
    /// `-Delta_h + B_u`
    hjb: DMatrix<f64>,
    /// `-Delta_h + A_u`
    fp: DMatrix<f64>,
    /// `C_m`
    hpp: DMatrix<f64>,
    /// `dF/dm(m)` as a matrix acting on perturbations
    df: DMatrix<f64>,
}

fn stationary_blocks(spec: &ModelSpec, erg: &ErgodicSolution) -> Result<StationaryBlocks> {
    let grid = spec.grid();
    grid.check_len(&erg.u_bar)?;
    let n = grid.n();
    let lap = neg_laplacian(grid);
    let mut hjb = hamiltonian_jacobian(spec, &erg.u_bar)?;
    hjb.add_scaled(1.0, &lap);
    let mut fp = drift_operator(spec, &erg.u_bar)?;
    fp.add_scaled(1.0, &lap);
    let hpp = hpp_operator(spec, &erg.m_bar)?;
    let mut df = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = spec.convolve(Coupling::F, &e)?;
        df.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    Ok(StationaryBlocks {
        hjb: hjb.to_dense(),
        fp: fp.to_dense(),
        hpp: hpp.to_dense(),
        df,
    })
}

fn residuals(b: &StationaryBlocks, u_bar: &[f64], theta: f64, delta: f64, v: &DVector<f64>, mu: &DVector<f64>) -> (f64, f64) {
    let u = DVector::from_column_slice(u_bar);
    let r1 = &b.hjb * v + v * delta + u.add_scalar(theta) - &b.df * mu;
    let r2 = &b.fp * mu + &b.hpp * v;
    (r1.amax(), r2.amax())
}

/// Linearized ergodic system in `(v_bar, mu_bar, theta_bar)`:
///
/// ```text
/// u_bar + theta - Delta v + H_p(Du_bar).Dv = dF/dm(m_bar)(mu)
/// -Delta mu - div(mu H_p(Du_bar)) - div(m_bar H_pp Dv) = 0
/// <mu> = <v> = 0
/// ```
///
/// assembled as one dense bordered system. The `mu` equation has a
/// redundant row (its columns sum to zero), which is absorbed by an extra
/// multiplier that vanishes at the solution.
pub fn solve_linearized_ergodic(spec: &ModelSpec, erg: &ErgodicSolution) -> Result<LinearizedErgodic> {
    let b = stationary_blocks(spec, erg)?;
    let n = spec.grid().n();
    let h = spec.grid().h();
    // unknowns: v (0..n), mu (n..2n), theta (2n), sigma (2n+1)
    let dim = 2 * n + 2;
    let mut a = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    a.view_mut((0, 0), (n, n)).copy_from(&b.hjb);
    a.view_mut((0, n), (n, n)).copy_from(&(-&b.df));
    a.view_mut((n, 0), (n, n)).copy_from(&b.hpp);
    a.view_mut((n, n), (n, n)).copy_from(&b.fp);
    for i in 0..n {
        a[(i, 2 * n)] = 1.0;
        a[(n + i, 2 * n + 1)] = 1.0;
        rhs[i] = -erg.u_bar[i];
        a[(2 * n, i)] = h;
        a[(2 * n + 1, n + i)] = h;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("linearized ergodic system".into()))?;
    let v = sol.rows(0, n).into_owned();
    let mu = sol.rows(n, n).into_owned();
    let theta = sol[2 * n];
    let res = residuals(&b, &erg.u_bar, theta, 0.0, &v, &mu);
    Ok(LinearizedErgodic {
        theta_bar: theta,
        v_bar: Field::from_vec(v.iter().copied().collect()),
        mu_bar: SignedField::from_vec_centered(mu.iter().copied().collect()),
        residuals: res,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscountedThetaEstimate {
    /// `(delta, delta <v_delta>)` per discount rate
    pub samples: Vec<(f64, f64)>,
    /// Polynomial extrapolation of the samples to `delta = 0`.
    pub theta_extrapolated: f64,
}

/// Discounted linear system
/// `u_bar + delta v - Delta v + H_p(Du_bar).Dv = dF/dm(m_bar)(mu)`,
/// `-Delta mu - div(mu H_p) - div(m_bar H_pp Dv) = 0`, `<mu> = 0`.
/// Returns `(v, mu)`.
pub fn solve_discounted_linear_ergodic(spec: &ModelSpec, erg: &ErgodicSolution, delta: f64) -> Result<(Field, SignedField)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let b = stationary_blocks(spec, erg)?;
    let n = spec.grid().n();
    let dim = 2 * n + 1;
    let mut a = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut hjb = b.hjb.clone();
    for i in 0..n {
        hjb[(i, i)] += delta;
    }
    a.view_mut((0, 0), (n, n)).copy_from(&hjb);
    a.view_mut((0, n), (n, n)).copy_from(&(-&b.df));
    a.view_mut((n, 0), (n, n)).copy_from(&b.hpp);
    a.view_mut((n, n), (n, n)).copy_from(&b.fp);
    for i in 0..n {
        rhs[i] = -erg.u_bar[i];
        a[(n + i, 2 * n)] = 1.0;
        a[(2 * n, n + i)] = spec.grid().h();
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("discounted linear ergodic system".into()))?;
    Ok((
        Field::from_vec(sol.rows(0, n).iter().copied().collect()),
        SignedField::from_vec_centered(sol.rows(n, n).iter().copied().collect()),
    ))
}

/// The discount route to `theta_bar`: `delta <v_delta>` for each rate, then
/// the interpolating polynomial in `delta` evaluated at zero.
pub fn theta_by_discount_extrapolation(spec: &ModelSpec, erg: &ErgodicSolution, deltas: &[f64]) -> Result<DiscountedThetaEstimate> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("need at least one discount rate".into()));
    }
    let samples = deltas
        .iter()
        .map(|&d| {
            let (v, _) = solve_discounted_linear_ergodic(spec, erg, d)?;
            Ok((d, d * v.average()))
        })
        .collect::<Result<Vec<_>>>()?;
    // Lagrange interpolation at zero
    let mut theta = 0.0;
    for (j, &(dj, yj)) in samples.iter().enumerate() {
        let mut w = 1.0;
        for (k, &(dk, _)) in samples.iter().enumerate() {
            if k != j {
                w *= dk / (dk - dj);
            }
        }
        theta += w * yj;
    }
    Ok(DiscountedThetaEstimate {
        samples,
        theta_extrapolated: theta,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GateauxReport {
    pub eps: Vec<f64>,
    pub err: Vec<f64>,
    /// Least-squares slope of `log err` against `log eps`; `None` when some
    /// error vanishes.
    pub slope: Option<f64>,
    /// `v(0)` from the linearized solver.
    pub derivative: Field,
    /// Worst mass error and smallest density value over all nonlinear solves.
    pub max_mass_error: f64,
    pub min_density: f64,
}

/// Compares difference quotients of `m0 -> u(0)` with the linearized
/// solver's `v(0)`.
pub fn gateaux_consistency_check(
    spec: &ModelSpec,
    tg: &TimeGrid,
    m0: &Density,
    mu0: &SignedField,
    eps_list: &[f64],
    opts: &PicardOptions,
) -> Result<GateauxReport> {
    let grid = spec.grid();
    let perturbed: Vec<Density> = eps_list
        .iter()
        .map(|&e| m0.perturbed(grid, mu0, e))
        .collect::<Result<_>>()?;
    let terminal = TerminalCondition::CouplingG;
    let base = solve_mfg_finite(spec, tg, m0, &terminal, 0.0, opts)?;
    let lin = solve_linearized_finite(spec, &base, mu0, TerminalMode::DgDm, opts)?;
    let v0 = lin.v0().clone();
    let mut err = Vec::with_capacity(eps_list.len());
    let (mut mass_err, mut min_m) = density_path_stats(&base.m_path);
    for (mp, &e) in perturbed.iter().zip(eps_list) {
        let sol = solve_mfg_finite(spec, tg, mp, &terminal, 0.0, opts)?;
        let (a, b) = density_path_stats(&sol.m_path);
        mass_err = mass_err.max(a);
        min_m = min_m.min(b);
        let e_val = sol
            .u0()
            .iter()
            .zip(base.u0().iter())
            .zip(v0.iter())
            .fold(0.0_f64, |acc, ((a, b), v)| acc.max(((a - b) / e - v).abs()));
        err.push(e_val);
    }
    let slope = if err.iter().all(|e| *e > 0.0) && err.len() >= 2 {
        let pts: Vec<(f64, f64)> = eps_list.iter().zip(&err).map(|(e, r)| (e.ln(), r.ln())).collect();
        Some(least_squares_slope(&pts))
    } else {
        None
    };
    Ok(GateauxReport {
        eps: eps_list.to_vec(),
        err,
        slope,
        derivative: v0,
        max_mass_error: mass_err,
        min_density: min_m,
    })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::mfg_ergodic::{solve_ergodic, ErgodicOptions};
    use crate::model::{preset_model, Preset};
    use std::f64::consts::PI;

    fn setup(p: Preset, n: usize) -> (ModelSpec, TorusGrid) {
        let g = TorusGrid::new(n).unwrap();
        (preset_model(p, g).unwrap(), g)
    }

    fn mode(g: &TorusGrid, k: f64, a: f64) -> SignedField {
        SignedField::centered(g, g.sample(|x| a * (2.0 * PI * k * x).cos()).into_vec()).unwrap()
    }

    fn tight() -> PicardOptions {
        PicardOptions {
            tol: 1e-12,
            ..PicardOptions::default()
        }
    }

    #[test]
    fn zero_perturbation_gives_zero() {
        let (s, g) = setup(Preset::Standard, 32);
        let tg = TimeGrid::with_factor(1.0, &g, 0.25).unwrap();
        let base = solve_mfg_finite(&s, &tg, &Density::uniform(&g), &TerminalCondition::CouplingG, 0.0, &tight()).unwrap();
        let lin = solve_linearized_finite(&s, &base, &SignedField::zeros(&g), TerminalMode::DgDm, &tight()).unwrap();
        assert!(lin.v_path.iter().all(|v| v.iter().all(|x| *x == 0.0)));
        assert!(lin.mu_path.iter().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn non_centered_perturbation_is_rejected() {
        let (s, g) = setup(Preset::Standard, 32);
        let tg = TimeGrid::with_factor(0.5, &g, 0.25).unwrap();
        let base = solve_mfg_finite(&s, &tg, &Density::uniform(&g), &TerminalCondition::CouplingG, 0.0, &tight()).unwrap();
        let mu = SignedField::new(&g, vec![1.0; 32]).unwrap();
        let err = solve_linearized_finite(&s, &base, &mu, TerminalMode::DgDm, &tight()).unwrap_err();
        assert!(err.to_string().contains("derivative requires centered perturbation"));
    }

    #[test]
    fn trivial_model_is_heat_decay() {
        let (s, g) = setup(Preset::Trivial, 64);
        let tg = TimeGrid::with_factor(0.05, &g, 0.25).unwrap();
        let base = solve_mfg_finite(&s, &tg, &Density::uniform(&g), &TerminalCondition::CouplingG, 0.0, &tight()).unwrap();
        let lin = solve_linearized_finite(&s, &base, &mode(&g, 1.0, 0.2), TerminalMode::DgDm, &tight()).unwrap();
        let h = g.h();
        let factor = 1.0 / (1.0 + tg.dt() * 4.0 * (PI * h).sin().powi(2) / (h * h));
        for (k, mu) in lin.mu_path.iter().enumerate() {
            let c = 2.0 * g.cosine_coefficient(mu, 1).unwrap();
            assert!((c - 0.2 * factor.powi(k as i32)).abs() < 1e-14);
            assert!(mu.mass().abs() < 1e-14);
        }
        assert!(lin.v_path.iter().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn finite_linearization_is_homogeneous_and_additive() {
        let (s, g) = setup(Preset::Standard, 32);
        let tg = TimeGrid::with_factor(1.0, &g, 0.25).unwrap();
        let m0 = Density::from_modes(&g, &[0.3], &[0.1]).unwrap();
        let base = solve_mfg_finite(&s, &tg, &m0, &TerminalCondition::CouplingG, 0.0, &tight()).unwrap();
        let a = mode(&g, 1.0, 0.3);
        let b = mode(&g, 2.0, -0.2);
        let la = solve_linearized_finite(&s, &base, &a, TerminalMode::DgDm, &tight()).unwrap();
        let l2a = solve_linearized_finite(&s, &base, &a.scaled(2.0), TerminalMode::DgDm, &tight()).unwrap();
        for (x, y) in la.v_path.iter().zip(&l2a.v_path) {
            assert!(x.iter().zip(y.iter()).all(|(p, q)| 2.0 * p == *q));
        }
        let lb = solve_linearized_finite(&s, &base, &b, TerminalMode::DgDm, &tight()).unwrap();
        let sum = SignedField::centered(&g, a.iter().zip(b.iter()).map(|(p, q)| p + q).collect()).unwrap();
        let ls = solve_linearized_finite(&s, &base, &sum, TerminalMode::DgDm, &tight()).unwrap();
        let d = ls.v0().iter().zip(la.v0().iter().zip(lb.v0().iter())).fold(0.0_f64, |m, (s, (p, q))| m.max((s - p - q).abs()));
        assert!(d < 1e-10, "additivity gap {d}");
        for mu in &ls.mu_path {
            assert!(mu.mass().abs() < 1e-10);
        }
    }

    #[test]
    fn pairing_is_nonincreasing_with_terminal_coupling() {
        let (s, g) = setup(Preset::Standard, 32);
        let tg = TimeGrid::with_factor(1.0, &g, 0.25).unwrap();
        let base = solve_mfg_finite(&s, &tg, &Density::uniform(&g), &TerminalCondition::CouplingG, 0.0, &tight()).unwrap();
        let lin = solve_linearized_finite(&s, &base, &mode(&g, 1.0, 0.5), TerminalMode::DgDm, &tight()).unwrap();
        let curve = lin.pairing_curve();
        for w in curve.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
    }

    #[test]
    fn trivial_linearized_ergodic_is_zero() {
        let (s, _) = setup(Preset::Trivial, 32);
        let erg = solve_ergodic(&s, &ErgodicOptions::default()).unwrap();
        let le = solve_linearized_ergodic(&s, &erg).unwrap();
        assert!(le.theta_bar.abs() < 1e-12);
        assert!(le.v_bar.iter().all(|v| v.abs() < 1e-12));
        assert!(le.mu_bar.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn decoupled_theta_is_minus_pairing_of_u_and_m() {
        let (s, _) = setup(Preset::Decoupled, 64);
        let erg = solve_ergodic(&s, &ErgodicOptions::default()).unwrap();
        let le = solve_linearized_ergodic(&s, &erg).unwrap();
        let expected = -pairing(&erg.u_bar, &erg.m_bar);
        assert!((le.theta_bar - expected).abs() < 1e-10, "{} vs {expected}", le.theta_bar);
        assert!(le.v_bar.average().abs() < 1e-12 && le.mu_bar.mass().abs() < 1e-12);
    }

    #[test]
    fn direct_and_discounted_theta_agree() {
        let (s, _) = setup(Preset::Standard, 64);
        let erg = solve_ergodic(&s, &ErgodicOptions { tol: 1e-12, ..ErgodicOptions::default() }).unwrap();
        let le = solve_linearized_ergodic(&s, &erg).unwrap();
        assert!(le.residuals.0 < 1e-9 && le.residuals.1 < 1e-9, "{:?}", le.residuals);
        let est = theta_by_discount_extrapolation(&s, &erg, &[0.1, 0.05, 0.025]).unwrap();
        assert!((est.theta_extrapolated - le.theta_bar).abs() < 1e-3);
    }

    #[test]
    fn gateaux_trivial_and_zero_cases() {
        let (s, g) = setup(Preset::Trivial, 32);
        let tg = TimeGrid::with_factor(0.5, &g, 0.25).unwrap();
        let rep = gateaux_consistency_check(&s, &tg, &Density::uniform(&g), &mode(&g, 1.0, 0.5), &[1e-2, 5e-3], &tight()).unwrap();
        assert!(rep.err.iter().all(|e| *e == 0.0));
        let (s, g) = setup(Preset::Standard, 32);
        let rep = gateaux_consistency_check(&s, &tg, &Density::uniform(&g), &SignedField::zeros(&g), &[1e-2, 5e-3], &tight()).unwrap();
        assert!(rep.err.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn gateaux_first_order_remainder() {
        let (s, g) = setup(Preset::Standard, 32);
        let tg = TimeGrid::with_factor(1.0, &g, 0.25).unwrap();
        let m0 = Density::from_modes(&g, &[0.3], &[]).unwrap();
        let rep = gateaux_consistency_check(&s, &tg, &m0, &mode(&g, 1.0, 0.5), &[1e-2, 5e-3, 2.5e-3], &tight()).unwrap();
        assert!(rep.err.windows(2).all(|w| w[1] < w[0]));
        let slope = rep.slope.unwrap();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    }
}
