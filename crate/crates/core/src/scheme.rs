//! Discrete operators shared by every solver.
//!
//! The node Hamiltonian averages the two one-sided gradients,
//! `H_h(u)_i = (H(x_i, D+u_i) + H(x_i, D-u_i)) / 2`, and the Fokker-Planck
//! drift term is the conservative flux `m_{i+1/2} H_p(D+u_i)` on faces with
//! `m_{i+1/2}` the arithmetic face average. With these choices the
//! Fokker-Planck drift operator is exactly the transpose of the linearized
//! Hamiltonian, so discrete duality identities hold to rounding.

use crate::error::Result;
use crate::grid::{Field, TorusGrid};
use crate::model::ModelSpec;
use crate::tridiag::CyclicTridiag;

/// `-Delta_h` as a cyclic tridiagonal matrix.
pub fn neg_laplacian(grid: &TorusGrid) -> CyclicTridiag {
    let n = grid.n();
    let inv_h2 = (n * n) as f64;
    CyclicTridiag {
        lower: vec![-inv_h2; n],
        diag: vec![2.0 * inv_h2; n],
        upper: vec![-inv_h2; n],
    }
}

/// `H_h(u)`.
pub fn hamiltonian_field(spec: &ModelSpec, u: &[f64]) -> Result<Field> {
    let grid = spec.grid();
    let g = grid.face_gradient(u)?;
    let mut out = Vec::with_capacity(grid.n());
    for i in 0..grid.n() {
        let fwd = spec.hamiltonian_eval(i, g[i])?;
        let bwd = spec.hamiltonian_eval(i, g[grid.prev(i)])?;
        out.push(0.5 * (fwd.h + bwd.h));
    }
    Ok(Field::from_vec(out))
}

/// Jacobian of `u -> H_h(u)`: `v -> (H_p(D+u) D+v + H_p(D-u) D-v) / 2`.
pub fn hamiltonian_jacobian(spec: &ModelSpec, u: &[f64]) -> Result<CyclicTridiag> {
    let grid = spec.grid();
    let n = grid.n();
    let g = grid.face_gradient(u)?;
    let half_inv_h = 0.5 * n as f64;
    let mut b = CyclicTridiag::zeros(n);
    for i in 0..n {
        let pf = spec.hamiltonian_eval(i, g[i])?.hp;
        let pb = spec.hamiltonian_eval(i, g[grid.prev(i)])?.hp;
        b.upper[i] = pf * half_inv_h;
        b.diag[i] = (pb - pf) * half_inv_h;
        b.lower[i] = -pb * half_inv_h;
    }
    Ok(b)
}

/// `m -> -div_h(m_{face} H_p(D+u))`, the transpose of [`hamiltonian_jacobian`].
pub fn drift_operator(spec: &ModelSpec, u: &[f64]) -> Result<CyclicTridiag> {
    Ok(hamiltonian_jacobian(spec, u)?.transpose())
}

/// `v -> -div_h(m_{face} H_pp D+v)`, the derivative of the drift term in `u`.
pub fn hpp_operator(spec: &ModelSpec, m: &[f64]) -> Result<CyclicTridiag> {
    let grid = spec.grid();
    let n = grid.n();
    grid.check_len(m)?;
    let inv_h2 = (n * n) as f64;
    let mut c = CyclicTridiag::zeros(n);
    for i in 0..n {
        let next = grid.next(i);
        let prev = grid.prev(i);
        let mf = 0.5 * (m[i] + m[next]);
        let mb = 0.5 * (m[prev] + m[i]);
        // H_pp = 1 for the quadratic family
        c.upper[i] = -mf * inv_h2;
        c.lower[i] = -mb * inv_h2;
        c.diag[i] = (mf + mb) * inv_h2;
    }
    Ok(c)
}

/// Fokker-Planck generator `(-Delta_h + drift)`; stationary densities span
/// its kernel and every column sums to zero.
pub fn fokker_planck_operator(spec: &ModelSpec, u: &[f64]) -> Result<CyclicTridiag> {
    let mut a = neg_laplacian(spec.grid());
    a.add_scaled(1.0, &drift_operator(spec, u)?);
    Ok(a)
}

/// Residual `shift + discount*u - Delta_h u + H_h(u) - f`.
pub fn hjb_stationary_residual(
    spec: &ModelSpec,
    u: &[f64],
    f: &[f64],
    shift: f64,
    discount: f64,
) -> Result<Vec<f64>> {
    let lu = neg_laplacian(spec.grid()).apply(u);
    let h = hamiltonian_field(spec, u)?;
    Ok((0..u.len())
        .map(|i| shift + discount * u[i] + lu[i] + h[i] - f[i])
        .collect())
}
