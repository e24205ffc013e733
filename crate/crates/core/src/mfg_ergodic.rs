//! Ergodic MFG system
//!
//! ```text
//! lambda - Delta u + H(x, Du) = F(x, m),   -Delta m - div(m H_p(x, Du)) = 0,
//! <m> = 1,  <u> = 0
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{linf_distance, Density, Field};
use crate::model::{Coupling, ModelSpec};
use crate::scheme::{fokker_planck_operator, hamiltonian_field, hamiltonian_jacobian, hjb_stationary_residual, neg_laplacian};
use crate::tridiag::CyclicTridiag;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicOptions {
    /// Outer damping on the density.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Pseudo time step of the parabolic warm start.
    pub pseudo_dt: f64,
    pub max_pseudo_steps: usize,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-8,
            max_iter: 500,
            pseudo_dt: 0.01,
            max_pseudo_steps: 20_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicSolution {
    pub lambda_bar: f64,
    pub u_bar: Field,
    pub m_bar: Density,
    /// `(HJB residual, FP residual)` in the sup norm.
    pub residuals: (f64, f64),
    pub iterations: usize,
}

/// Newton on the bordered system `lambda + (-Delta_h) u + H_h(u) = f`,
/// `<u> = 0`, from the given starting point.
fn bordered_newton(spec: &ModelSpec, f: &[f64], mut u: Vec<f64>, mut lambda: f64, tol: f64) -> Result<(f64, Vec<f64>, f64)> {
    let n = u.len();
    let lap = neg_laplacian(spec.grid());
    let target = (tol * 1e-3).max(1e-14);
    let mut res_norm = f64::INFINITY;
    for _ in 0..50 {
        let res = hjb_stationary_residual(spec, &u, f, lambda, 0.0)?;
        let avg = u.iter().sum::<f64>() / n as f64;
        res_norm = res.iter().fold(avg.abs(), |a, r| a.max(r.abs()));
        let mut jac = hamiltonian_jacobian(spec, &u)?;
        jac.add_scaled(1.0, &lap);
        let mut dense = DMatrix::zeros(n + 1, n + 1);
        dense.view_mut((0, 0), (n, n)).copy_from(&jac.to_dense());
        for i in 0..n {
            dense[(i, n)] = 1.0;
            dense[(n, i)] = 1.0 / n as f64;
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from_slice(&res);
        rhs[n] = avg;
        let step = dense
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("bordered ergodic Jacobian".into()))?;
        let step_norm = step.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            u[i] -= step[i];
        }
        lambda -= step[n];
        if step_norm <= target {
            let res = hjb_stationary_residual(spec, &u, f, lambda, 0.0)?;
            res_norm = res.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
            return Ok((lambda, u, res_norm));
        }
    }
    Err(Error::NonConvergence {
        iterations: 50,
        residual: res_norm,
    })
}

/// Solves `lambda - Delta u + H(x, Du) = f`, `<u> = 0`.
///
/// A normalized parabolic flow (implicit diffusion, explicit Hamiltonian,
/// re-centered every step) brings `u` close to the cell solution and tracks
/// `lambda` as the mean drift; a bordered Newton solve then polishes both.
pub fn ergodic_hjb(spec: &ModelSpec, f: &[f64], opts: &ErgodicOptions) -> Result<(f64, Field)> {
    ergodic_hjb_from(spec, f, opts, None)
}

pub(crate) fn ergodic_hjb_from(
    spec: &ModelSpec,
    f: &[f64],
    opts: &ErgodicOptions,
    warm: Option<(f64, &[f64])>,
) -> Result<(f64, Field)> {
    let grid = spec.grid();
    grid.check_len(f)?;
    let n = grid.n();
    let (mut lambda, mut u) = match warm {
        Some((l, u)) => (l, u.to_vec()),
        None => (f.iter().sum::<f64>() / n as f64, vec![0.0; n]),
    };
    let tau = opts.pseudo_dt;
    let mut sys = CyclicTridiag::identity_scaled(n, 1.0 / tau);
    sys.add_scaled(1.0, &neg_laplacian(grid));
    // Loose warm-start tolerance; the Newton polish provides the accuracy.
    let warm_tol = 1e-6;
    let mut change = f64::INFINITY;
    let mut steps = 0;
    if warm.is_none() {
        while steps < opts.max_pseudo_steps {
            steps += 1;
            let h = hamiltonian_field(spec, &u)?;
            let rhs: Vec<f64> = (0..n).map(|i| u[i] / tau - h[i] + f[i]).collect();
            let next = sys.solve(&rhs)?;
            let drift = next.iter().zip(&u).map(|(a, b)| a - b).sum::<f64>() / (n as f64 * tau);
            let avg = next.iter().sum::<f64>() / n as f64;
            let next: Vec<f64> = next.iter().map(|v| v - avg).collect();
            change = linf_distance(&next, &u) / tau;
            u = next;
            lambda = drift;
            if !change.is_finite() {
                break;
            }
            if change <= warm_tol {
                break;
            }
        }
        if !change.is_finite() {
            return Err(Error::NonConvergence {
                iterations: steps,
                residual: change,
            });
        }
    }
    match bordered_newton(spec, f, u, lambda, opts.tol) {
        Ok((lambda, u, res)) if res <= opts.tol => Ok((lambda, Field::from_vec(u))),
        Ok((_, _, res)) => Err(Error::NonConvergence {
            iterations: steps,
            residual: res,
        }),
        Err(Error::NonConvergence { residual, .. }) => Err(Error::NonConvergence {
            iterations: steps,
            residual,
        }),
        Err(e) => Err(e),
    }
}

/// Kernel of the stationary Fokker-Planck operator with unit mass, from the
/// bordered system `[[A, 1], [h 1^T, 0]]`.
pub fn stationary_fp(spec: &ModelSpec, u: &[f64]) -> Result<Density> {
    let grid = spec.grid();
    grid.check_len(u)?;
    let n = grid.n();
    let a = fokker_planck_operator(spec, u)?.to_dense();
    let mut dense = DMatrix::zeros(n + 1, n + 1);
    dense.view_mut((0, 0), (n, n)).copy_from(&a);
    for i in 0..n {
        dense[(i, n)] = 1.0;
        dense[(n, i)] = grid.h();
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = dense
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("stationary Fokker-Planck kernel is not one-dimensional".into()))?;
    let m: Vec<f64> = sol.iter().take(n).copied().collect();
    if let Some((i, v)) = m.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidDensity(format!("stationary density not positive at node {i}: {v:e}")));
    }
    // renormalize away the rounding in the mass row
    let mass = grid.h() * m.iter().sum::<f64>();
    Ok(Density::from_vec_unchecked(m.into_iter().map(|v| v / mass).collect()))
}

/// `max |A_u m|`, the stationary Fokker-Planck residual.
pub(crate) fn fp_residual(spec: &ModelSpec, u: &[f64], m: &[f64]) -> Result<f64> {
    let r = fokker_planck_operator(spec, u)?.apply(m);
    Ok(r.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
}

fn outer_loop<S>(
    spec: &ModelSpec,
    opts: &ErgodicOptions,
    start: Density,
    mut solve_u: S,
) -> Result<(Field, Density, f64, usize)>
where
    S: FnMut(&Field, Option<&Field>) -> Result<(f64, Field)>,
{
    if !(opts.damping > 0.0 && opts.damping <= 1.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("damping must lie in (0, 1] and tol be positive".into()));
    }
    let mut m = start;
    let mut prev_u: Option<Field> = None;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let f = spec.coupling_field(Coupling::F, &m)?;
        let (lambda, u) = solve_u(&f, prev_u.as_ref())?;
        let m_new = stationary_fp(spec, &u)?;
        change = linf_distance(&m_new, &m);
        if change <= opts.tol || spec.is_decoupled() {
            return Ok((u, m_new, lambda, it));
        }
        m = m.blend(&m_new, opts.damping);
        prev_u = Some(u);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: change,
    })
}

pub fn solve_ergodic(spec: &ModelSpec, opts: &ErgodicOptions) -> Result<ErgodicSolution> {
    solve_ergodic_from(spec, opts, Density::uniform(spec.grid()))
}

/// [`solve_ergodic`] with the outer loop started from `m_start`.
pub fn solve_ergodic_from(spec: &ModelSpec, opts: &ErgodicOptions, m_start: Density) -> Result<ErgodicSolution> {
    spec.grid().check_len(&m_start)?;
    let mut last_lambda = 0.0;
    let (u, m, _, iterations) = outer_loop(spec, opts, m_start, |f, warm| {
        let warm = warm.map(|u| (last_lambda, &u[..]));
        let (l, u) = ergodic_hjb_from(spec, f, opts, warm)?;
        last_lambda = l;
        Ok((l, u))
    })?;
    // Final cell problem against the converged density so that both
    // residuals refer to the returned triple.
    let f = spec.coupling_field(Coupling::F, &m)?;
    let (lambda, u) = ergodic_hjb_from(spec, &f, opts, Some((last_lambda, &u)))?;
    let m = stationary_fp(spec, &u)?;
    let f = spec.coupling_field(Coupling::F, &m)?;
    let hjb = hjb_stationary_residual(spec, &u, &f, lambda, 0.0)?
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    let fp = fp_residual(spec, &u, &m)?;
    Ok(ErgodicSolution {
        lambda_bar: lambda,
        u_bar: u,
        m_bar: m,
        residuals: (hjb, fp),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::model::{preset_model, Preset};
    use std::f64::consts::PI;

    fn spec(preset: Preset, n: usize) -> ModelSpec {
        preset_model(preset, TorusGrid::new(n).unwrap()).unwrap()
    }

    /// Principal eigenvalue of `-2 Delta_h + V` (Hopf-Cole oracle).
    fn schroedinger_eigenvalue(spec: &ModelSpec, f: &[f64]) -> f64 {
        let n = spec.grid().n();
        let mut a = neg_laplacian(spec.grid()).to_dense() * 2.0;
        for i in 0..n {
            a[(i, i)] += spec.potential()[i] + f[i];
        }
        a.symmetric_eigenvalues().min()
    }

    #[test]
    fn constant_source_without_potential() {
        let s = spec(Preset::Trivial, 32);
        let f = vec![0.7; 32];
        let (lambda, u) = ergodic_hjb(&s, &f, &ErgodicOptions::default()).unwrap();
        assert!((lambda - 0.7).abs() < 1e-12);
        assert!(u.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cell_problem_matches_hopf_cole_eigenvalue() {
        // The face-averaged Hamiltonian is not exactly transformed by
        // u = -2 log phi on the grid, so agreement is O(h^2).
        for n in [64, 128] {
            let s = spec(Preset::Decoupled, n);
            let f = vec![0.0; n];
            let (lambda, u) = ergodic_hjb(&s, &f, &ErgodicOptions::default()).unwrap();
            let oracle = schroedinger_eigenvalue(&s, &f);
            assert!((lambda - oracle).abs() < 20.0 / (n * n) as f64, "n = {n}: {lambda} vs {oracle}");
            assert!(u.average().abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalue_converges_at_second_order() {
        let lam = |n: usize| {
            let s = spec(Preset::Decoupled, n);
            ergodic_hjb(&s, &vec![0.0; n], &ErgodicOptions::default()).unwrap().0
        };
        let (a, b, c) = (lam(32), lam(64), lam(128));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn stationary_fp_of_zero_is_uniform() {
        let s = spec(Preset::Trivial, 32);
        let m = stationary_fp(&s, &[0.0; 32]).unwrap();
        assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn stationary_fp_matches_gibbs_form() {
        let mut prev = f64::INFINITY;
        for n in [32, 64, 128] {
            let s = spec(Preset::Trivial, n);
            let g = s.grid();
            let u = g.sample(|x| 0.8 * (2.0 * PI * x).cos() + 0.3 * (4.0 * PI * x).sin());
            let m = stationary_fp(&s, &u).unwrap();
            let gibbs = Density::from_unnormalized(g, u.iter().map(|v| (-v).exp()).collect()).unwrap();
            let err = linf_distance(&m, &gibbs);
            assert!(err * ((n * n) as f64) < 20.0, "n = {n}: {err}");
            assert!(err < prev);
            assert!(m.min() > 0.0);
            prev = err;
        }
    }

    #[test]
    fn trivial_model_solution() {
        let sol = solve_ergodic(&spec(Preset::Trivial, 32), &ErgodicOptions::default()).unwrap();
        assert!(sol.lambda_bar.abs() < 1e-12);
        assert!(sol.u_bar.iter().all(|v| v.abs() < 1e-12));
        assert!(sol.m_bar.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn decoupled_model_converges_in_one_outer_iteration() {
        let s = spec(Preset::Decoupled, 64);
        let sol = solve_ergodic(&s, &ErgodicOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        let oracle = schroedinger_eigenvalue(&s, &[0.0; 64]);
        assert!((sol.lambda_bar - oracle).abs() < 5e-3);
    }

    #[test]
    fn standard_model_residuals_and_uniqueness() {
        let s = spec(Preset::Standard, 64);
        let opts = ErgodicOptions::default();
        let a = solve_ergodic(&s, &opts).unwrap();
        assert!(a.residuals.0 <= opts.tol && a.residuals.1 <= opts.tol, "{:?}", a.residuals);
        assert!(a.u_bar.average().abs() < 1e-12);
        assert!(a.m_bar.min() > 0.0);
        let start = Density::from_modes(s.grid(), &[0.3, -0.2], &[0.5]).unwrap();
        let b = solve_ergodic_from(&s, &opts, start).unwrap();
        assert!((a.lambda_bar - b.lambda_bar).abs() <= 10.0 * opts.tol);
        assert!(linf_distance(&a.m_bar, &b.m_bar) <= 10.0 * opts.tol);
        assert!(linf_distance(&a.u_bar, &b.u_bar) <= 10.0 * opts.tol);
    }
}
