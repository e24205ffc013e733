//! Model data: the Hamiltonian `H(x, p) = p^2/2 - V(x)` and convolution
//! couplings `F(x, m) = (rho_F * m)(x) + f0(x)`, `G` alike.
//!
//! Monotonicity of a convolution coupling is equivalent to the circulant
//! kernel matrix being positive semidefinite, i.e. every discrete Fourier
//! coefficient of the (even) kernel being nonnegative. This is checked once,
//! at construction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{pairing, Density, Field, SignedField, TorusGrid};

/// Tolerance on negative Fourier coefficients of a kernel.
pub const KERNEL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    F,
    G,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianEval {
    pub h: f64,
    pub hp: f64,
    pub hpp: f64,
    pub hx: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    grid: TorusGrid,
    potential: Field,
    potential_gradient: Field,
    kernel_f: Field,
    offset_f: Field,
    kernel_g: Field,
    offset_g: Field,
    coeffs_f: Vec<f64>,
    coeffs_g: Vec<f64>,
    modal_f: ModalKernel,
    modal_g: ModalKernel,
}

/// Sparse Fourier representation of an even kernel: `rho * m` evaluated from
/// the significant cosine modes only. Exact (to rounding) because the
/// discrete Fourier inversion of an even kernel is exact on the grid.
#[derive(Clone, Debug, PartialEq)]
struct ModalKernel {
    // (weight, cos table, sin table) per significant mode; mode 0 tables unused
    mass_weight: f64,
    modes: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

impl ModalKernel {
    fn new(grid: &TorusGrid, coeffs: &[f64]) -> Self {
        let n = grid.n();
        let scale = coeffs.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let significant = |c: f64| scale > 0.0 && c.abs() > 1e-15 * scale;
        let mass_weight = if significant(coeffs[0]) { coeffs[0] } else { 0.0 };
        let mut modes = Vec::new();
        for (k, &c) in coeffs.iter().enumerate().skip(1) {
            if !significant(c) {
                continue;
            }
            // the Nyquist mode is its own conjugate
            let w = if 2 * k == n { c } else { 2.0 * c };
            let arg = |i: usize| 2.0 * PI * k as f64 * grid.node(i);
            let cos = (0..n).map(|i| arg(i).cos()).collect();
            let sin = (0..n).map(|i| arg(i).sin()).collect();
            modes.push((w, cos, sin));
        }
        Self { mass_weight, modes }
    }

    fn convolve(&self, values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let h = 1.0 / n as f64;
        let mass = h * values.iter().sum::<f64>();
        let mut out = vec![self.mass_weight * mass; n];
        for (w, cos, sin) in &self.modes {
            let a = h * values.iter().zip(cos).map(|(v, c)| v * c).sum::<f64>();
            let b = h * values.iter().zip(sin).map(|(v, s)| v * s).sum::<f64>();
            for i in 0..n {
                out[i] += w * (a * cos[i] + b * sin[i]);
            }
        }
        out
    }
}

/// Plain serialized form of a [`ModelSpec`]; all arrays have length `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecData {
    pub n: usize,
    pub potential: Vec<f64>,
    pub kernel_f: Vec<f64>,
    pub offset_f: Vec<f64>,
    pub kernel_g: Vec<f64>,
    pub offset_g: Vec<f64>,
}

impl TryFrom<ModelSpecData> for ModelSpec {
    type Error = Error;
    fn try_from(d: ModelSpecData) -> Result<Self> {
        let g = TorusGrid::new(d.n)?;
        ModelSpec::new(
            g,
            Field::new(&g, d.potential)?,
            Field::new(&g, d.kernel_f)?,
            Field::new(&g, d.offset_f)?,
            Field::new(&g, d.kernel_g)?,
            Field::new(&g, d.offset_g)?,
        )
    }
}

impl From<&ModelSpec> for ModelSpecData {
    fn from(s: &ModelSpec) -> Self {
        Self {
            n: s.grid.n(),
            potential: s.potential.to_vec(),
            kernel_f: s.kernel_f.to_vec(),
            offset_f: s.offset_f.to_vec(),
            kernel_g: s.kernel_g.to_vec(),
            offset_g: s.offset_g.to_vec(),
        }
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelSpecData::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let data = ModelSpecData::deserialize(d)?;
        ModelSpec::try_from(data).map_err(serde::de::Error::custom)
    }
}

/// Kernel `a_0 + 2 sum_{k>=1} a_k cos(2 pi k x)`, whose discrete Fourier
/// coefficients are exactly `a_k` for `k < n/2`.
pub fn kernel_from_coefficients(grid: &TorusGrid, coeffs: &[f64]) -> Field {
    grid.sample(|x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| if k == 0 { *a } else { 2.0 * a * (2.0 * PI * k as f64 * x).cos() })
            .sum()
    })
}

fn validate_kernel(grid: &TorusGrid, kernel: &Field) -> Result<Vec<f64>> {
    let n = grid.n();
    let scale = kernel.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for i in 1..n {
        if (kernel[i] - kernel[n - i]).abs() > 1e-12 * scale {
            return Err(Error::KernelNotEven { index: i });
        }
    }
    let coeffs: Vec<f64> = (0..=n / 2)
        .map(|k| grid.cosine_coefficient(kernel, k))
        .collect::<Result<_>>()?;
    if let Some((mode, &c)) = coeffs.iter().enumerate().find(|(_, c)| **c < -KERNEL_TOL) {
        return Err(Error::KernelNotMonotone {
            mode,
            coefficient: c,
        });
    }
    Ok(coeffs)
}

impl ModelSpec {
    pub fn new(
        grid: TorusGrid,
        potential: Field,
        kernel_f: Field,
        offset_f: Field,
        kernel_g: Field,
        offset_g: Field,
    ) -> Result<Self> {
        for f in [&potential, &kernel_f, &offset_f, &kernel_g, &offset_g] {
            grid.check_len(f)?;
        }
        let coeffs_f = validate_kernel(&grid, &kernel_f)?;
        let coeffs_g = validate_kernel(&grid, &kernel_g)?;
        let potential_gradient = grid.gradient(&potential)?;
        let modal_f = ModalKernel::new(&grid, &coeffs_f);
        let modal_g = ModalKernel::new(&grid, &coeffs_g);
        Ok(Self {
            grid,
            potential,
            potential_gradient,
            kernel_f,
            offset_f,
            kernel_g,
            offset_g,
            coeffs_f,
            coeffs_g,
            modal_f,
            modal_g,
        })
    }

    /// Builds both kernels from nonnegative Fourier coefficients.
    pub fn from_modes(
        grid: TorusGrid,
        potential: Field,
        coeffs_f: &[f64],
        offset_f: Field,
        coeffs_g: &[f64],
        offset_g: Field,
    ) -> Result<Self> {
        let kf = kernel_from_coefficients(&grid, coeffs_f);
        let kg = kernel_from_coefficients(&grid, coeffs_g);
        Self::new(grid, potential, kf, offset_f, kg, offset_g)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }

    pub fn kernel(&self, which: Coupling) -> &Field {
        match which {
            Coupling::F => &self.kernel_f,
            Coupling::G => &self.kernel_g,
        }
    }

    pub fn offset(&self, which: Coupling) -> &Field {
        match which {
            Coupling::F => &self.offset_f,
            Coupling::G => &self.offset_g,
        }
    }

    /// Discrete Fourier coefficients of the kernel, modes `0..=n/2`.
    pub fn kernel_coefficients(&self, which: Coupling) -> &[f64] {
        match which {
            Coupling::F => &self.coeffs_f,
            Coupling::G => &self.coeffs_g,
        }
    }

    /// True when both kernels vanish, so `F` and `G` do not depend on `m`.
    pub fn is_decoupled(&self) -> bool {
        self.kernel_f.iter().chain(self.kernel_g.iter()).all(|v| *v == 0.0)
    }

    pub fn hamiltonian_eval(&self, i: usize, p: f64) -> Result<HamiltonianEval> {
        let n = self.grid.n();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        Ok(HamiltonianEval {
            h: 0.5 * p * p - self.potential[i],
            hp: p,
            hpp: 1.0,
            hx: -self.potential_gradient[i],
        })
    }

    fn modal(&self, which: Coupling) -> &ModalKernel {
        match which {
            Coupling::F => &self.modal_f,
            Coupling::G => &self.modal_g,
        }
    }

    /// `rho * values` through the modal representation; agrees with
    /// [`TorusGrid::circular_convolve`] to rounding.
    pub fn convolve(&self, which: Coupling, values: &[f64]) -> Result<Field> {
        self.grid.check_len(values)?;
        Ok(Field::from_vec(self.modal(which).convolve(values)))
    }

    pub fn coupling_field(&self, which: Coupling, m: &Density) -> Result<Field> {
        let conv = self.convolve(which, m)?;
        Ok(conv.zip_map(self.offset(which), |c, o| c + o))
    }

    /// `delta F / delta m (mu) = rho * mu`, independent of the base measure.
    pub fn coupling_derivative_apply(&self, which: Coupling, mu: &SignedField) -> Result<Field> {
        if !mu.is_centered() {
            return Err(Error::NotCentered { mass: mu.mass() });
        }
        self.convolve(which, mu)
    }

    /// `h sum (F(m1) - F(m2)) (m1 - m2)`.
    pub fn monotonicity_gap(&self, which: Coupling, m1: &Density, m2: &Density) -> Result<f64> {
        let f1 = self.coupling_field(which, m1)?;
        let f2 = self.coupling_field(which, m2)?;
        let df: Vec<f64> = f1.iter().zip(f2.iter()).map(|(a, b)| a - b).collect();
        let dm: Vec<f64> = m1.iter().zip(m2.iter()).map(|(a, b)| a - b).collect();
        Ok(pairing(&df, &dm))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Trivial,
    Decoupled,
    Standard,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trivial" => Ok(Preset::Trivial),
            "decoupled" => Ok(Preset::Decoupled),
            "standard" => Ok(Preset::Standard),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Fourier coefficients of the standard kernel `1 + cos(2 pi x)/2 + cos(4 pi x)/4`.
pub const STANDARD_KERNEL_COEFFS: [f64; 3] = [1.0, 0.25, 0.125];

pub fn preset_model(preset: Preset, grid: TorusGrid) -> Result<ModelSpec> {
    let zero = Field::zeros(&grid);
    let cos_v = grid.sample(|x| 0.5 * (2.0 * PI * x).cos());
    match preset {
        Preset::Trivial => {
            ModelSpec::from_modes(grid, zero.clone(), &[], zero.clone(), &[], zero)
        }
        Preset::Decoupled => ModelSpec::from_modes(grid, cos_v, &[], zero.clone(), &[], zero),
        Preset::Standard => ModelSpec::from_modes(
            grid,
            cos_v,
            &STANDARD_KERNEL_COEFFS,
            grid.sample(|x| 0.3 * (2.0 * PI * x).sin()),
            &STANDARD_KERNEL_COEFFS,
            zero,
        ),
    }
}

/// Name-based lookup, for configs and the CLI.
pub fn preset_by_name(name: &str, grid: TorusGrid) -> Result<ModelSpec> {
    preset_model(name.parse()?, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::linf_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    fn random_density(grid: &TorusGrid, rng: &mut ChaCha8Rng) -> Density {
        let v: Vec<f64> = (0..grid.n()).map(|_| rng.random_range(0.05..2.0)).collect();
        Density::from_unnormalized(grid, v).unwrap()
    }

    #[test]
    fn hamiltonian_values() {
        let spec = preset_model(Preset::Trivial, g(16)).unwrap();
        let e = spec.hamiltonian_eval(3, 2.0).unwrap();
        assert_eq!((e.h, e.hp, e.hpp, e.hx), (2.0, 2.0, 1.0, 0.0));
        assert!(spec.hamiltonian_eval(16, 0.0).is_err());

        let spec = preset_model(Preset::Decoupled, g(128)).unwrap();
        let e = spec.hamiltonian_eval(7, 0.0).unwrap();
        assert_eq!(e.h, -spec.potential()[7]);
        assert_eq!(e.hp, 0.0);
    }

    #[test]
    fn hamiltonian_x_derivative_matches_closed_form() {
        // V = cos(2 pi x): -V'(1/4) = 2 pi.
        let grid = g(128);
        let zero = Field::zeros(&grid);
        let v = grid.sample(|x| (2.0 * PI * x).cos());
        let spec = ModelSpec::from_modes(grid, v, &[], zero.clone(), &[], zero).unwrap();
        let e = spec.hamiltonian_eval(32, 1.0).unwrap();
        assert!((e.hx - 2.0 * PI).abs() < 2.0 * PI.powi(3) / 3.0 * grid.h().powi(2) * 2.0);
    }

    #[test]
    fn decoupled_coupling_returns_offset() {
        let grid = g(32);
        let zero = Field::zeros(&grid);
        let f0 = grid.sample(|x| (2.0 * PI * x).cos());
        let spec = ModelSpec::from_modes(grid, zero.clone(), &[], f0.clone(), &[], zero).unwrap();
        let m = Density::from_modes(&grid, &[0.4], &[0.1]).unwrap();
        assert!(linf_distance(&spec.coupling_field(Coupling::F, &m).unwrap(), &f0) < 1e-15);
    }

    #[test]
    fn coupling_on_uniform_is_kernel_mass_plus_offset() {
        let grid = g(64);
        let spec = preset_model(Preset::Standard, grid).unwrap();
        let f = spec.coupling_field(Coupling::F, &Density::uniform(&grid)).unwrap();
        for (i, v) in f.iter().enumerate() {
            assert!((v - 1.0 - spec.offset(Coupling::F)[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn coupling_perturbation_matches_direct_sum() {
        // Oracle: brute-force double loop on the continuous kernel formula.
        let grid = g(64);
        let spec = preset_model(Preset::Standard, grid).unwrap();
        let eps = 0.1;
        for k in 1..=3usize {
            let m = Density::from_modes(&grid, &vec![0.0; k - 1].into_iter().chain([eps]).collect::<Vec<_>>(), &[])
                .unwrap();
            let f = spec.coupling_field(Coupling::F, &m).unwrap();
            let rho = |x: f64| 1.0 + 0.5 * (2.0 * PI * x).cos() + 0.25 * (4.0 * PI * x).cos();
            for i in 0..grid.n() {
                let xi = grid.node(i);
                let direct: f64 = (0..grid.n())
                    .map(|j| {
                        let xj = grid.node(j);
                        rho(xi - xj) * (1.0 + eps * (2.0 * PI * k as f64 * xj).cos())
                    })
                    .sum::<f64>()
                    * grid.h();
                assert!((f[i] - spec.offset(Coupling::F)[i] - direct).abs() < 1e-12);
                let a = [0.0, 0.25, 0.125, 0.0][k];
                let expected = 1.0 + a * eps * (2.0 * PI * k as f64 * xi).cos();
                assert!((direct - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_apply_cases() {
        let grid = g(64);
        let zero = Field::zeros(&grid);
        let spec = ModelSpec::from_modes(grid, zero.clone(), &[1.0, 0.5], zero.clone(), &[], zero).unwrap();
        let mu0 = SignedField::zeros(&grid);
        assert!(spec.coupling_derivative_apply(Coupling::F, &mu0).unwrap().iter().all(|v| *v == 0.0));

        let c = 0.7;
        let mu = SignedField::centered(&grid, grid.sample(|x| c * (2.0 * PI * x).cos()).into_vec()).unwrap();
        let out = spec.coupling_derivative_apply(Coupling::F, &mu).unwrap();
        for i in 0..grid.n() {
            let direct: f64 = (0..grid.n())
                .map(|j| (1.0 + (2.0 * PI * (grid.node(i) - grid.node(j))).cos()) * mu[j])
                .sum::<f64>()
                * grid.h();
            assert!((out[i] - direct).abs() < 1e-13);
            assert!((out[i] - 0.5 * c * (2.0 * PI * grid.node(i)).cos()).abs() < 1e-13);
        }

        let bad = SignedField::new(&grid, vec![1.0; 64]).unwrap();
        let err = spec.coupling_derivative_apply(Coupling::F, &bad).unwrap_err();
        assert!(err.to_string().contains("derivative requires centered perturbation"));
    }

    #[test]
    fn coupling_is_affine_in_m() {
        let grid = g(32);
        let spec = preset_model(Preset::Standard, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_density(&grid, &mut rng);
        let mu = SignedField::difference(&random_density(&grid, &mut rng), &m);
        let eps = 0.25;
        let mp = m.perturbed(&grid, &mu, eps).unwrap();
        let lhs: Vec<f64> = spec
            .coupling_field(Coupling::F, &mp)
            .unwrap()
            .iter()
            .zip(spec.coupling_field(Coupling::F, &m).unwrap().iter())
            .map(|(a, b)| a - b)
            .collect();
        let rhs = spec.coupling_derivative_apply(Coupling::F, &mu).unwrap();
        assert!(lhs.iter().zip(rhs.iter()).all(|(a, b)| (a - eps * b).abs() < 1e-14));
    }

    #[test]
    fn monotonicity_gap_nonnegative_for_presets() {
        let grid = g(32);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for preset in [Preset::Trivial, Preset::Decoupled, Preset::Standard] {
            let spec = preset_model(preset, grid).unwrap();
            let m = random_density(&grid, &mut rng);
            assert_eq!(spec.monotonicity_gap(Coupling::F, &m, &m).unwrap(), 0.0);
            for _ in 0..100 {
                let a = random_density(&grid, &mut rng);
                let b = random_density(&grid, &mut rng);
                assert!(spec.monotonicity_gap(Coupling::F, &a, &b).unwrap() >= -1e-10);
                assert!(spec.monotonicity_gap(Coupling::G, &a, &b).unwrap() >= -1e-10);
            }
        }
    }

    #[test]
    fn monotonicity_gap_matches_circulant_eigen_decomposition() {
        // Oracle: the quadratic form of the dense circulant matrix via its
        // symmetric eigen-decomposition.
        let grid = g(16);
        let spec = preset_model(Preset::Standard, grid).unwrap();
        let n = grid.n();
        let h = grid.h();
        let k = spec.kernel(Coupling::F);
        let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| h * h * k[(i + n - j) % n]);
        let eig = nalgebra::SymmetricEigen::new(mat.clone());
        assert!(eig.eigenvalues.iter().all(|l| *l >= -1e-14));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_density(&grid, &mut rng);
            let b = random_density(&grid, &mut rng);
            let d = nalgebra::DVector::from_iterator(n, a.iter().zip(b.iter()).map(|(x, y)| x - y));
            let coords = eig.eigenvectors.transpose() * &d;
            let quad: f64 = coords.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| l * c * c).sum();
            let gap = spec.monotonicity_gap(Coupling::F, &a, &b).unwrap();
            assert!((gap - quad).abs() < 1e-12 * (1.0 + quad.abs()));
        }
    }

    #[test]
    fn non_monotone_kernel_rejected() {
        let grid = g(32);
        let zero = Field::zeros(&grid);
        let err = ModelSpec::from_modes(grid, zero.clone(), &[1.0, -0.2], zero.clone(), &[], zero.clone())
            .unwrap_err();
        assert!(matches!(err, Error::KernelNotMonotone { mode: 1, .. }));

        let odd = grid.sample(|x| (2.0 * PI * x).sin());
        assert!(ModelSpec::new(grid, zero.clone(), odd, zero.clone(), zero.clone(), zero).is_err());
    }

    #[test]
    fn presets() {
        let grid = g(32);
        let t = preset_model(Preset::Trivial, grid).unwrap();
        assert!(t.potential().iter().all(|v| *v == 0.0));
        assert!(t.is_decoupled());

        let s = preset_model(Preset::Standard, grid).unwrap();
        let c = s.kernel_coefficients(Coupling::F);
        for (k, a) in STANDARD_KERNEL_COEFFS.iter().enumerate() {
            assert!((c[k] - a).abs() < 1e-14);
        }
        assert!(c[3..].iter().all(|v| v.abs() < 1e-14));

        let d = preset_model(Preset::Decoupled, grid).unwrap();
        let f1 = d.coupling_field(Coupling::F, &Density::uniform(&grid)).unwrap();
        let f2 = d.coupling_field(Coupling::F, &Density::from_modes(&grid, &[0.5], &[]).unwrap()).unwrap();
        assert_eq!(f1, f2);

        assert!(matches!(preset_by_name("weird", grid), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn modal_convolution_agrees_with_direct_sum() {
        let grid = g(64);
        let spec = preset_model(Preset::Standard, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_density(&grid, &mut rng);
        for which in [Coupling::F, Coupling::G] {
            let direct = grid.circular_convolve(spec.kernel(which), &m).unwrap();
            let modal = spec.convolve(which, &m).unwrap();
            assert!(linf_distance(&direct, &modal) < 1e-13);
        }
        // a kernel carrying the Nyquist mode
        let zero = Field::zeros(&grid);
        let mut coeffs = vec![0.0; 33];
        coeffs[0] = 1.0;
        coeffs[32] = 0.5;
        coeffs[5] = 0.1;
        let nyq = ModelSpec::from_modes(grid, zero.clone(), &coeffs, zero.clone(), &[], zero).unwrap();
        let direct = grid.circular_convolve(nyq.kernel(Coupling::F), &m).unwrap();
        let modal = nyq.convolve(Coupling::F, &m).unwrap();
        assert!(linf_distance(&direct, &modal) < 1e-13);
    }

    #[test]
    fn json_round_trip() {
        let spec = preset_model(Preset::Standard, g(16)).unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
