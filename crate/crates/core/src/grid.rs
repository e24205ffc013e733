//! Discrete calculus on the periodic unit interval.
//!
//! Nodes sit at `x_i = i h` with `h = 1/n`; faces at `x_{i+1/2}`. Densities
//! are cell values whose mass is `h * sum`, so the periodic unit interval has
//! measure one and `average == mass`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible grid.
pub const MIN_NODES: usize = 8;

/// Mass tolerance for [`Density`] and centered [`SignedField`] values.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TorusGrid {
    n: usize,
}

impl TryFrom<usize> for TorusGrid {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        TorusGrid::new(n)
    }
}

impl From<TorusGrid> for usize {
    fn from(g: TorusGrid) -> usize {
        g.n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Mass,
    Average,
    L2,
    Linf,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::GridTooCoarse { n, min: MIN_NODES });
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Spacing, always derived from `n`.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    /// Position of face `i + 1/2`.
    #[inline]
    pub fn face(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    #[inline]
    pub(crate) fn next(&self, i: usize) -> usize {
        if i + 1 == self.n {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    pub(crate) fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n - 1
        } else {
            i - 1
        }
    }

    pub(crate) fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                found: values.len(),
            });
        }
        Ok(())
    }

    /// Field sampled from `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field((0..self.n).map(|i| f(self.node(i))).collect())
    }

    /// `(f_{i-1} - 2 f_i + f_{i+1}) / h^2`.
    pub fn laplacian(&self, f: &[f64]) -> Result<Field> {
        self.check_len(f)?;
        let inv_h2 = (self.n * self.n) as f64;
        Ok(Field(
            (0..self.n)
                .map(|i| (f[self.prev(i)] - 2.0 * f[i] + f[self.next(i)]) * inv_h2)
                .collect(),
        ))
    }

    /// Centered difference `(f_{i+1} - f_{i-1}) / (2h)`.
    pub fn gradient(&self, f: &[f64]) -> Result<Field> {
        self.check_len(f)?;
        let scale = 0.5 * self.n as f64;
        Ok(Field(
            (0..self.n)
                .map(|i| (f[self.next(i)] - f[self.prev(i)]) * scale)
                .collect(),
        ))
    }

    /// One-sided difference `(f_{i+1} - f_i) / h`, living on face `i + 1/2`.
    pub fn face_gradient(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let inv_h = self.n as f64;
        Ok((0..self.n)
            .map(|i| (f[self.next(i)] - f[i]) * inv_h)
            .collect())
    }

    /// `(flux_{i+1/2} - flux_{i-1/2}) / h`; sums to zero by telescoping.
    pub fn div_flux(&self, flux_at_faces: &[f64]) -> Result<Field> {
        self.check_len(flux_at_faces)?;
        let inv_h = self.n as f64;
        Ok(Field(
            (0..self.n)
                .map(|i| (flux_at_faces[i] - flux_at_faces[self.prev(i)]) * inv_h)
                .collect(),
        ))
    }

    pub fn reduce(&self, f: &[f64], kind: Reduction) -> Result<f64> {
        self.check_len(f)?;
        let h = self.h();
        Ok(match kind {
            Reduction::Mass | Reduction::Average => h * f.iter().sum::<f64>(),
            Reduction::L2 => (h * f.iter().map(|v| v * v).sum::<f64>()).sqrt(),
            Reduction::Linf => f.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
        })
    }

    /// `out_i = h * sum_j kernel_{(i-j) mod n} * values_j`, by direct summation.
    pub fn circular_convolve(&self, kernel: &[f64], values: &[f64]) -> Result<Field> {
        self.check_len(kernel)?;
        self.check_len(values)?;
        let n = self.n;
        let h = self.h();
        Ok(Field(
            (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for (j, vj) in values.iter().enumerate() {
                        acc += kernel[(i + n - j) % n] * vj;
                    }
                    h * acc
                })
                .collect(),
        ))
    }

    /// Discrete Fourier cosine coefficient `h * sum_j f_j cos(2 pi k x_j)`.
    pub fn cosine_coefficient(&self, f: &[f64], k: usize) -> Result<f64> {
        self.check_len(f)?;
        let h = self.h();
        let w = 2.0 * std::f64::consts::PI * k as f64;
        Ok(h * f
            .iter()
            .enumerate()
            .map(|(j, v)| v * (w * self.node(j)).cos())
            .sum::<f64>())
    }

    /// Sine counterpart of [`TorusGrid::cosine_coefficient`].
    pub fn sine_coefficient(&self, f: &[f64], k: usize) -> Result<f64> {
        self.check_len(f)?;
        let h = self.h();
        let w = 2.0 * std::f64::consts::PI * k as f64;
        Ok(h * f
            .iter()
            .enumerate()
            .map(|(j, v)| v * (w * self.node(j)).sin())
            .sum::<f64>())
    }

    /// Cyclic shift by `d` nodes: `out_i = f_{(i - d) mod n}`.
    pub fn shift(&self, f: &[f64], d: usize) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let n = self.n;
        Ok((0..n).map(|i| f[(i + n - d % n) % n]).collect())
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Real grid function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self(vec![0.0; grid.n()])
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self(vec![c; grid.n()])
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn average(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Copy with the average removed.
    pub fn centered(&self) -> Field {
        let avg = self.average();
        Field(self.0.iter().map(|v| v - avg).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &[f64], f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.0.len(), other.len());
        Field(self.0.iter().zip(other).map(|(&a, &b)| f(a, b)).collect())
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Probability density stored as nonnegative cell values of unit mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Density(Vec<f64>);

impl Density {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        check_finite(&values)?;
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidDensity(format!("negative value {v:e} at node {i}")));
        }
        let mass = grid.h() * values.iter().sum::<f64>();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!("mass {mass} differs from 1")));
        }
        Ok(Self(values))
    }

    /// Normalizes any nonnegative, nonzero profile to unit mass.
    pub fn from_unnormalized(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        check_finite(&values)?;
        if values.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidDensity("negative entries".into()));
        }
        let mass = grid.h() * values.iter().sum::<f64>();
        if mass <= 0.0 {
            return Err(Error::InvalidDensity("zero mass".into()));
        }
        Ok(Self(values.into_iter().map(|v| v / mass).collect()))
    }

    pub fn uniform(grid: &TorusGrid) -> Self {
        Self(vec![1.0; grid.n()])
    }

    /// Density proportional to `1 + sum_k (a_k cos 2 pi k x + b_k sin 2 pi k x)`,
    /// `k` starting at 1.
    pub fn from_modes(grid: &TorusGrid, cos: &[f64], sin: &[f64]) -> Result<Self> {
        let tau = 2.0 * std::f64::consts::PI;
        let profile = grid.sample(|x| {
            let mut v = 1.0;
            for (k, a) in cos.iter().enumerate() {
                v += a * (tau * (k + 1) as f64 * x).cos();
            }
            for (k, b) in sin.iter().enumerate() {
                v += b * (tau * (k + 1) as f64 * x).sin();
            }
            v
        });
        if let Some(v) = profile.iter().find(|v| **v <= 0.0) {
            return Err(Error::InvalidDensity(format!(
                "Fourier profile is not positive (value {v:e})"
            )));
        }
        Self::from_unnormalized(grid, profile.into_vec())
    }

    /// Trusted constructor for solver output; mass is checked by the caller.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mass(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `(1 - alpha) * self + alpha * other`, which stays a density.
    pub fn blend(&self, other: &Density, alpha: f64) -> Density {
        Density(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
                .collect(),
        )
    }

    /// Perturbation `self + eps * mu`; fails if it leaves the simplex.
    pub fn perturbed(&self, grid: &TorusGrid, mu: &SignedField, eps: f64) -> Result<Density> {
        if !mu.is_centered() {
            return Err(Error::NotCentered { mass: mu.mass() });
        }
        let values: Vec<f64> = self.0.iter().zip(mu.iter()).map(|(m, d)| m + eps * d).collect();
        Density::new(grid, values)
    }
}

impl Deref for Density {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Signed perturbation; `centered` records whether its mass vanishes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignedField {
    values: Vec<f64>,
    centered: bool,
}

impl SignedField {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        check_finite(&values)?;
        let centered = (grid.h() * values.iter().sum::<f64>()).abs() <= MASS_TOL;
        Ok(Self { values, centered })
    }

    /// Like [`SignedField::new`] but rejects a nonzero mass.
    pub fn centered(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        let s = Self::new(grid, values)?;
        if !s.centered {
            return Err(Error::NotCentered { mass: s.mass() });
        }
        Ok(s)
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            values: vec![0.0; grid.n()],
            centered: true,
        }
    }

    /// Difference of two densities, centered by construction.
    pub fn difference(a: &Density, b: &Density) -> Self {
        Self {
            values: a.iter().zip(b.iter()).map(|(x, y)| x - y).collect(),
            centered: true,
        }
    }

    pub(crate) fn from_vec_centered(values: Vec<f64>) -> Self {
        Self {
            values,
            centered: true,
        }
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn scaled(&self, c: f64) -> SignedField {
        SignedField {
            values: self.values.iter().map(|v| c * v).collect(),
            centered: self.centered,
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for SignedField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// `max_i |a_i - b_i|`.
pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// `(h * sum (a_i - b_i)^2)^(1/2)`.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / a.len() as f64).sqrt()
}

/// Discrete L1 distance `h * sum |a_i - b_i|`, the stand-in for `d_1`.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// `max - min` of `a - b`: zero iff the two fields differ by a constant.
pub fn spread_of_difference(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    hi - lo
}

/// `h * sum a_i b_i`.
pub fn pairing(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    #[test]
    fn build_grid_spacing_and_rejection() {
        assert_eq!(grid(8).h(), 0.125);
        assert_eq!(grid(128).h(), 1.0 / 128.0);
        let err = TorusGrid::new(7).unwrap_err();
        assert!(err.to_string().contains("grid too coarse"));
    }

    #[test]
    fn laplacian_and_gradient_kill_constants() {
        let g = grid(32);
        let c = Field::constant(&g, 3.7);
        assert!(g.laplacian(&c).unwrap().iter().all(|v| *v == 0.0));
        assert!(g.gradient(&c).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_of_cosine_matches_closed_form() {
        let g = grid(128);
        let f = g.sample(|x| (2.0 * PI * x).cos());
        let lap = g.laplacian(&f).unwrap();
        let h = g.h();
        let bound = 4.0 * PI.powi(4) * h * h;
        for (i, v) in lap.iter().enumerate() {
            let exact = -4.0 * PI * PI * (2.0 * PI * g.node(i)).cos();
            assert!((v - exact).abs() <= bound, "node {i}");
        }
    }

    #[test]
    fn laplacian_impulse_row_sums_to_zero() {
        let g = grid(16);
        let mut e = vec![0.0; 16];
        e[5] = 1.0;
        let col = g.laplacian(&e).unwrap();
        let inv_h2 = 256.0;
        assert_eq!(col[4], inv_h2);
        assert_eq!(col[5], -2.0 * inv_h2);
        assert_eq!(col[6], inv_h2);
        assert_eq!(col.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn laplacian_converges_at_second_order() {
        let mut errs = Vec::new();
        for n in [32, 64, 128, 256] {
            let g = grid(n);
            let f = g.sample(|x| (6.0 * PI * x).cos());
            let lap = g.laplacian(&f).unwrap();
            let err = lap
                .iter()
                .enumerate()
                .map(|(i, v)| (v + 36.0 * PI * PI * (6.0 * PI * g.node(i)).cos()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.9..=2.1).contains(&order), "order {order}");
        }
    }

    #[test]
    fn gradient_of_sine() {
        let g = grid(128);
        let f = g.sample(|x| (2.0 * PI * x).sin());
        let d = g.gradient(&f).unwrap();
        let h = g.h();
        for (i, v) in d.iter().enumerate() {
            let exact = 2.0 * PI * (2.0 * PI * g.node(i)).cos();
            assert!((v - exact).abs() <= 8.0 * PI.powi(3) * h * h / 6.0 + 1e-12);
        }
    }

    #[test]
    fn gradient_of_nyquist_sawtooth_vanishes() {
        // The centered stencil cannot see the alternating mode at all.
        let g = grid(16);
        let f: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(g.gradient(&f).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn div_flux_cases() {
        let g = grid(128);
        let c = vec![2.5; 128];
        assert!(g.div_flux(&c).unwrap().iter().all(|v| *v == 0.0));
        let flux: Vec<f64> = (0..128).map(|i| (2.0 * PI * g.face(i)).sin()).collect();
        let div = g.div_flux(&flux).unwrap();
        assert!(g.reduce(&div, Reduction::Mass).unwrap().abs() < 1e-13);
        for (i, v) in div.iter().enumerate() {
            let exact = 2.0 * PI * (2.0 * PI * g.node(i)).cos();
            assert!((v - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn reductions() {
        let g = grid(128);
        assert!((g.reduce(&vec![3.0; 128], Reduction::Mass).unwrap() - 3.0).abs() < 1e-15);
        let s = g.sample(|x| (2.0 * PI * x).sin());
        assert!(g.reduce(&s, Reduction::Average).unwrap().abs() < 1e-14);
        let mut e = vec![0.0; 128];
        e[17] = 1.0;
        assert_eq!(g.reduce(&e, Reduction::Linf).unwrap(), 1.0);
        assert!((g.reduce(&s, Reduction::L2).unwrap() - 0.5_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let g = grid(16);
        assert!(matches!(
            g.laplacian(&[0.0; 15]),
            Err(Error::SizeMismatch { expected: 16, found: 15 })
        ));
        assert!(g.circular_convolve(&[0.0; 16], &[0.0; 17]).is_err());
    }

    #[test]
    fn convolution_identities() {
        let g = grid(32);
        let dens = Density::from_modes(&g, &[0.3], &[0.2]).unwrap();
        let mut delta = vec![0.0; 32];
        delta[0] = 1.0 / g.h();
        let same = g.circular_convolve(&delta, &dens).unwrap();
        assert!(linf_distance(&same, &dens) < 1e-14);

        let ones = g.circular_convolve(&vec![1.0; 32], &dens).unwrap();
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-14));

        let cosk = g.sample(|x| (2.0 * PI * x).cos());
        let zero = g.circular_convolve(&cosk, &Density::uniform(&g)).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn density_validation() {
        let g = grid(8);
        assert!(Density::new(&g, vec![1.0; 8]).is_ok());
        assert!(Density::new(&g, vec![2.0; 8]).is_err());
        let mut v = vec![1.0; 8];
        v[0] = -0.1;
        v[1] = 1.1;
        assert!(Density::new(&g, v).is_err());
        assert!(Density::from_modes(&g, &[1.5], &[]).is_err());
    }

    #[test]
    fn signed_field_centering() {
        let g = grid(8);
        assert!(SignedField::new(&g, vec![1.0; 8]).unwrap().mass() > 0.0);
        assert!(SignedField::centered(&g, vec![1.0; 8]).is_err());
        let c = SignedField::centered(&g, vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
        assert!(c.is_centered());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn div_flux_is_conservative(flux in prop::collection::vec(-1e3..1e3f64, 64)) {
                let g = grid(64);
                let div = g.div_flux(&flux).unwrap();
                let scale = flux.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
                prop_assert!(g.reduce(&div, Reduction::Mass).unwrap().abs() <= 1e-12 * scale);
            }

            #[test]
            fn convolution_commutes_with_shift(
                kernel in prop::collection::vec(-1.0..1.0f64, 16),
                raw in prop::collection::vec(0.1..2.0f64, 16),
                d in 0usize..16,
            ) {
                let g = grid(16);
                let dens = Density::from_unnormalized(&g, raw).unwrap();
                let shifted = Density::from_unnormalized(&g, g.shift(&dens, d).unwrap()).unwrap();
                let lhs = g.circular_convolve(&kernel, &shifted).unwrap();
                let rhs = g.shift(&g.circular_convolve(&kernel, &dens).unwrap(), d).unwrap();
                prop_assert!(linf_distance(&lhs, &rhs) < 1e-12);
            }

            #[test]
            fn convolution_is_linear(
                kernel in prop::collection::vec(-1.0..1.0f64, 16),
                a in prop::collection::vec(-1.0..1.0f64, 16),
                b in prop::collection::vec(-1.0..1.0f64, 16),
                s in -3.0..3.0f64,
            ) {
                let g = grid(16);
                let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
                let lhs = g.circular_convolve(&kernel, &combo).unwrap();
                let ca = g.circular_convolve(&kernel, &a).unwrap();
                let cb = g.circular_convolve(&kernel, &b).unwrap();
                let rhs: Vec<f64> = ca.iter().zip(cb.iter()).map(|(x, y)| x + s * y).collect();
                prop_assert!(linf_distance(&lhs, &rhs) < 1e-12);
            }
        }
    }
}
