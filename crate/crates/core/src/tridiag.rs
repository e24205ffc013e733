//! Periodic (cyclic) tridiagonal matrices: every implicit step on the torus
//! reduces to one of these.

use crate::error::{Error, Result};

/// Row `i` reads `lower[i] x_{i-1} + diag[i] x_i + upper[i] x_{i+1}`, indices
/// taken modulo `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclicTridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CyclicTridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn identity_scaled(n: usize, c: f64) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![c; n],
            upper: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// `self + c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &CyclicTridiag) {
        for i in 0..self.n() {
            self.lower[i] += c * other.lower[i];
            self.diag[i] += c * other.diag[i];
            self.upper[i] += c * other.upper[i];
        }
    }

    pub fn add_diagonal(&mut self, c: f64) {
        for d in &mut self.diag {
            *d += c;
        }
    }

    pub fn transpose(&self) -> CyclicTridiag {
        let n = self.n();
        let mut t = CyclicTridiag::zeros(n);
        for i in 0..n {
            let next = (i + 1) % n;
            let prev = (i + n - 1) % n;
            t.diag[i] = self.diag[i];
            // entry (i, i+1) of the transpose is entry (i+1, i) of self
            t.upper[i] = self.lower[next];
            t.lower[i] = self.upper[prev];
        }
        t
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                self.lower[i] * x[(i + n - 1) % n] + self.diag[i] * x[i] + self.upper[i] * x[(i + 1) % n]
            })
            .collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, (i + n - 1) % n)] += self.lower[i];
            m[(i, i)] += self.diag[i];
            m[(i, (i + 1) % n)] += self.upper[i];
        }
        m
    }

    /// Sherman-Morrison reduction of the periodic system to two Thomas solves
    /// sharing one elimination.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if rhs.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let alpha = self.upper[n - 1];
        let beta = self.lower[0];
        let gamma = -self.diag[0];
        if gamma == 0.0 {
            return Err(Error::SingularSystem("zero leading diagonal".into()));
        }

        let mut b = self.diag.clone();
        b[0] -= gamma;
        b[n - 1] -= alpha * beta / gamma;

        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;

        let mut cp = vec![0.0; n];
        let mut x = rhs.to_vec();
        let mut z = u;

        let mut piv = b[0];
        if piv == 0.0 {
            return Err(Error::SingularSystem("zero pivot at row 0".into()));
        }
        cp[0] = self.upper[0] / piv;
        x[0] /= piv;
        z[0] /= piv;
        for i in 1..n {
            piv = b[i] - self.lower[i] * cp[i - 1];
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::SingularSystem(format!("zero pivot at row {i}")));
            }
            if i < n - 1 {
                cp[i] = self.upper[i] / piv;
            }
            x[i] = (x[i] - self.lower[i] * x[i - 1]) / piv;
            z[i] = (z[i] - self.lower[i] * z[i - 1]) / piv;
        }
        for i in (0..n - 1).rev() {
            x[i] -= cp[i] * x[i + 1];
            z[i] -= cp[i] * z[i + 1];
        }

        let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
        if denom == 0.0 {
            return Err(Error::SingularSystem("Sherman-Morrison denominator vanished".into()));
        }
        let fact = (x[0] + beta * x[n - 1] / gamma) / denom;
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi -= fact * zi;
        }
        Ok(x)
    }
}
