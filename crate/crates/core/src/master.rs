//! Master equation through its characteristics.
//!
//! `U(-T, x, m0)` is `u(0, x)` of the finite-horizon system started at `m0`,
//! `U^delta(x, m0)` the same for the discounted system, and the corrector
//! `chi(x, m0)` is the limit of `U(-T) - lambda T` as `T -> inf` (up to a
//! constant) or of `U^delta - lambda/delta` as `delta -> 0`. Everything is
//! evaluated on demand at the queried densities.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{l1_distance, linf_distance, Density, Field, SignedField};
use crate::linearized::{solve_linearized_discounted, solve_linearized_ergodic, solve_linearized_finite, LinearizedErgodic, TerminalMode};
use crate::mfg_discounted::{check_delta, solve_discounted_mfg_with, solve_discounted_stationary, DiscountedOptions, DiscountedStationary};
use crate::mfg_ergodic::{solve_ergodic, ErgodicOptions, ErgodicSolution};
use crate::mfg_finite::{conservative_fp_step, solve_mfg_finite, Diagnostics, PicardOptions, TerminalCondition, TimeGrid};
use crate::model::ModelSpec;
use crate::scheme::neg_laplacian;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MasterOptions {
    pub picard: PicardOptions,
    pub ergodic: ErgodicOptions,
    pub dt_factor: f64,
    /// Cauchy tolerance of the corrector limits.
    pub tol_chi: f64,
    pub t_start: f64,
    pub t_growth: f64,
    pub t_cap: f64,
    pub delta_start: f64,
    pub delta_floor: f64,
    /// Truncated horizon of discounted solves; `None` uses the default
    /// `max(20, 5/delta)` rule.
    pub discount_horizon: Option<f64>,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            picard: PicardOptions::default(),
            ergodic: ErgodicOptions::default(),
            dt_factor: 0.25,
            tol_chi: 1e-4,
            t_start: 1.0,
            t_growth: 1.5,
            t_cap: 80.0,
            delta_start: 0.2,
            delta_floor: 0.0125,
            discount_horizon: None,
        }
    }
}

impl MasterOptions {
    fn discounted(&self) -> DiscountedOptions {
        DiscountedOptions {
            picard: self.picard,
            dt_factor: self.dt_factor,
            check_tail: false,
        }
    }
}

/// `U(-T, ., m0) = u(0, .)` for the finite-horizon system on `[0, T]`.
pub fn eval_u_finite(spec: &ModelSpec, t: f64, m0: &Density, opts: &MasterOptions) -> Result<Field> {
    let tg = TimeGrid::with_factor(t, spec.grid(), opts.dt_factor)?;
    let sol = solve_mfg_finite(spec, &tg, m0, &TerminalCondition::CouplingG, 0.0, &opts.picard)?;
    Ok(sol.u_path.into_iter().next().expect("paths are never empty"))
}

/// `U(-T, ., m0) - lambda T`, computed with the shift inside the HJB
/// equation so that the iterate stays of order one and round-off does not
/// grow with `T`.
pub fn longtime_iterate(spec: &ModelSpec, lambda: f64, t: f64, m0: &Density, opts: &MasterOptions) -> Result<Field> {
    let tg = TimeGrid::with_factor(t, spec.grid(), opts.dt_factor)?;
    let sol = solve_mfg_finite(spec, &tg, m0, &TerminalCondition::CouplingG, lambda, &opts.picard)?;
    Ok(sol.u_path.into_iter().next().expect("paths are never empty"))
}

/// `U^delta(., m0) = u^delta(0, .)`.
pub fn eval_u_discounted(spec: &ModelSpec, delta: f64, m0: &Density, opts: &MasterOptions) -> Result<Field> {
    check_delta(delta)?;
    let stat = solve_discounted_stationary(spec, delta, &opts.picard)?;
    eval_u_discounted_with(spec, &stat, m0, opts)
}

fn eval_u_discounted_with(spec: &ModelSpec, stat: &DiscountedStationary, m0: &Density, opts: &MasterOptions) -> Result<Field> {
    let sol = solve_discounted_mfg_with(spec, stat, m0, opts.discount_horizon, &opts.discounted())?;
    Ok(sol.solution.u_path.into_iter().next().expect("paths are never empty"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorMethod {
    Longtime,
    Discount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Raw limit; `shift_constant` reports `c = <chi(., m_bar) - u_bar>`.
    LongtimeC,
    /// Shifted so that `chi(., m_bar) = u_bar + theta_bar`.
    ThetaSelected,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectorField {
    pub chi: Field,
    pub shift_constant: f64,
    pub method: CorrectorMethod,
    pub normalization: Normalization,
    /// `T*` or `delta*` at which the Cauchy criterion was met.
    #[serde(rename = "T_or_delta_used")]
    pub t_or_delta_used: f64,
    pub cauchy_gap: f64,
}

/// Corrector evaluation with the ergodic data, the shift constant and the
/// discounted stationary pairs cached. Safe to share between threads.
pub struct CorrectorPipeline {
    spec: ModelSpec,
    method: CorrectorMethod,
    normalization: Normalization,
    opts: MasterOptions,
    ergodic: ErgodicSolution,
    linearized: LinearizedErgodic,
    anchor: OnceLock<Field>,
    stationary: Mutex<BTreeMap<u64, DiscountedStationary>>,
}

impl CorrectorPipeline {
    pub fn new(spec: &ModelSpec, method: CorrectorMethod, normalization: Normalization, opts: MasterOptions) -> Result<Self> {
        let ergodic = solve_ergodic(spec, &opts.ergodic)?;
        Self::with_ergodic(spec, method, normalization, opts, ergodic)
    }

    pub fn with_ergodic(
        spec: &ModelSpec,
        method: CorrectorMethod,
        normalization: Normalization,
        opts: MasterOptions,
        ergodic: ErgodicSolution,
    ) -> Result<Self> {
        if !(opts.tol_chi > 0.0 && opts.t_start > 0.0 && opts.t_growth > 1.0) {
            return Err(Error::InvalidArgument("need tol_chi > 0, t_start > 0 and t_growth > 1".into()));
        }
        if !(opts.delta_floor > 0.0 && opts.delta_floor <= opts.delta_start) {
            return Err(Error::InvalidArgument("need 0 < delta_floor <= delta_start".into()));
        }
        check_delta(opts.delta_start)?;
        let linearized = solve_linearized_ergodic(spec, &ergodic)?;
        Ok(Self {
            spec: spec.clone(),
            method,
            normalization,
            opts,
            ergodic,
            linearized,
            anchor: OnceLock::new(),
            stationary: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn ergodic(&self) -> &ErgodicSolution {
        &self.ergodic
    }

    pub fn linearized(&self) -> &LinearizedErgodic {
        &self.linearized
    }

    pub fn options(&self) -> &MasterOptions {
        &self.opts
    }

    pub fn method(&self) -> CorrectorMethod {
        self.method
    }

    fn stationary(&self, delta: f64) -> Result<DiscountedStationary> {
        let key = delta.to_bits();
        if let Some(s) = self.stationary.lock().expect("cache lock").get(&key) {
            return Ok(s.clone());
        }
        let s = solve_discounted_stationary(&self.spec, delta, &self.opts.picard)?;
        self.stationary.lock().expect("cache lock").insert(key, s.clone());
        Ok(s)
    }

    /// `U(-T) - lambda T` at `T`.
    pub fn longtime_iterate(&self, m0: &Density, t: f64) -> Result<Field> {
        longtime_iterate(&self.spec, self.ergodic.lambda_bar, t, m0, &self.opts)
    }

    /// `U^delta - lambda/delta` at `delta`.
    pub fn discount_iterate(&self, m0: &Density, delta: f64) -> Result<Field> {
        let stat = self.stationary(delta)?;
        let u = eval_u_discounted_with(&self.spec, &stat, m0, &self.opts)?;
        let ld = self.ergodic.lambda_bar / delta;
        Ok(u.map(|v| v - ld))
    }

    /// Unshifted limit with the parameter and the last Cauchy gap.
    pub fn raw(&self, m0: &Density) -> Result<(Field, f64, f64)> {
        self.spec.grid().check_len(m0)?;
        let o = &self.opts;
        let mut prev: Option<Field> = None;
        let mut gap = f64::INFINITY;
        match self.method {
            CorrectorMethod::Longtime => {
                let mut t = o.t_start;
                while t <= o.t_cap * (1.0 + 1e-12) {
                    let w = self.longtime_iterate(m0, t)?;
                    if let Some(p) = &prev {
                        gap = linf_distance(&w, p);
                        if gap <= o.tol_chi {
                            return Ok((w, t, gap));
                        }
                    }
                    prev = Some(w);
                    t *= o.t_growth;
                }
            }
            CorrectorMethod::Discount => {
                let mut d = o.delta_start;
                while d >= o.delta_floor * (1.0 - 1e-12) {
                    let w = self.discount_iterate(m0, d)?;
                    if let Some(p) = &prev {
                        gap = linf_distance(&w, p);
                        if gap <= o.tol_chi {
                            return Ok((w, d, gap));
                        }
                    }
                    prev = Some(w);
                    d *= 0.5;
                }
            }
        }
        Err(Error::CauchyFailure { gap })
    }

    /// The raw limit at `m_bar`, computed once.
    fn anchor(&self) -> Result<&Field> {
        if let Some(a) = self.anchor.get() {
            return Ok(a);
        }
        let (a, _, _) = self.raw(&self.ergodic.m_bar)?;
        // a concurrent writer computed the same deterministic value
        let _ = self.anchor.set(a);
        Ok(self.anchor.get().expect("just set"))
    }

    /// `<u_bar + theta_bar - chi_raw(., m_bar)>`.
    pub fn theta_shift(&self) -> Result<f64> {
        let a = self.anchor()?;
        let target = self.linearized.theta_bar;
        Ok(self.ergodic.u_bar.iter().zip(a.iter()).map(|(u, c)| u + target - c).sum::<f64>() / a.len() as f64)
    }

    /// `c = <chi_raw(., m_bar) - u_bar>`.
    pub fn longtime_constant(&self) -> Result<f64> {
        let a = self.anchor()?;
        Ok(a.iter().zip(self.ergodic.u_bar.iter()).map(|(c, u)| c - u).sum::<f64>() / a.len() as f64)
    }

    pub fn evaluate(&self, m0: &Density) -> Result<CorrectorField> {
        let (raw, used, gap) = self.raw(m0)?;
        let (chi, shift) = match self.normalization {
            Normalization::ThetaSelected => {
                let s = self.theta_shift()?;
                (raw.map(|v| v + s), s)
            }
            Normalization::LongtimeC => (raw, self.longtime_constant()?),
        };
        Ok(CorrectorField {
            chi,
            shift_constant: shift,
            method: self.method,
            normalization: self.normalization,
            t_or_delta_used: used,
            cauchy_gap: gap,
        })
    }
}

/// One-shot corrector evaluation; builds a fresh pipeline.
pub fn eval_corrector_chi(
    spec: &ModelSpec,
    m0: &Density,
    method: CorrectorMethod,
    normalization: Normalization,
    opts: &MasterOptions,
) -> Result<CorrectorField> {
    CorrectorPipeline::new(spec, method, normalization, *opts)?.evaluate(m0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeRoute {
    Finite,
    Discounted(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureDerivativeSlice {
    /// `x -> int dU/dm(x, m0, y) mu0(y) dy`
    pub response: Field,
}

/// Directional derivative of `U` at `m0` along `mu0`, from the linearized
/// system on `[0, T]` (`T` is the truncated horizon for the discounted
/// route).
pub fn eval_measure_derivative(
    spec: &ModelSpec,
    t: f64,
    m0: &Density,
    mu0: &SignedField,
    route: DerivativeRoute,
    opts: &MasterOptions,
) -> Result<MeasureDerivativeSlice> {
    if !mu0.is_centered() {
        return Err(Error::NotCentered { mass: mu0.mass() });
    }
    let lin = match route {
        DerivativeRoute::Finite => {
            let tg = TimeGrid::with_factor(t, spec.grid(), opts.dt_factor)?;
            let base = solve_mfg_finite(spec, &tg, m0, &TerminalCondition::CouplingG, 0.0, &opts.picard)?;
            solve_linearized_finite(spec, &base, mu0, TerminalMode::DgDm, &opts.picard)?
        }
        DerivativeRoute::Discounted(delta) => {
            let stat = solve_discounted_stationary(spec, delta, &opts.picard)?;
            let base = solve_discounted_mfg_with(spec, &stat, m0, Some(t), &opts.discounted())?;
            solve_linearized_discounted(spec, &base, mu0, delta, &opts.picard)?
        }
    };
    Ok(MeasureDerivativeSlice {
        response: lin.v_path.into_iter().next().expect("paths are never empty"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub dt: f64,
    /// Corrector re-evaluation stride in steps.
    pub stride: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { dt: 0.01, stride: 5 }
    }
}

/// `d_t m - Delta m - div(m H_p(x, D chi(x, m(t)))) = 0` on `[0, T]`, with
/// the corrector re-evaluated every `stride` steps and frozen in between.
pub fn mckean_vlasov_flow(
    pipeline: &CorrectorPipeline,
    m0: &Density,
    t: f64,
    flow: &FlowOptions,
) -> Result<Vec<Density>> {
    let spec = pipeline.spec();
    spec.grid().check_len(m0)?;
    if !(flow.dt > 0.0) || flow.stride == 0 {
        return Err(Error::InvalidArgument("flow needs dt > 0 and stride >= 1".into()));
    }
    let nt = (t / flow.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = t / nt as f64;
    let lap = neg_laplacian(spec.grid());
    let mut path = Vec::with_capacity(nt + 1);
    path.push(m0.clone());
    let mut chi = Field::zeros(spec.grid());
    for k in 0..nt {
        if k % flow.stride == 0 {
            chi = pipeline.evaluate(&path[k])?.chi;
        }
        let next = conservative_fp_step(spec, &lap, &chi, &path[k], dt, m0.mass(), k)?;
        path.push(Density::from_vec_unchecked(next));
    }
    Ok(path)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakSolutionReport {
    pub discrepancy: f64,
    pub u0: Field,
    pub chi_m0: Field,
    pub diagnostics: Diagnostics,
}

/// Solves `-d_t u + lambda - Delta u + H = F(m)` on `[0, T]` with
/// `u(T) = chi(., m(T))` and compares `u(0)` with `chi(., m0)`.
pub fn weak_solution_selfcheck(pipeline: &CorrectorPipeline, m0: &Density, t: f64) -> Result<WeakSolutionReport> {
    let spec = pipeline.spec();
    let opts = pipeline.options();
    let tg = TimeGrid::with_factor(t, spec.grid(), opts.dt_factor)?;
    let chi_of = |m: &Density| -> Result<Field> { Ok(pipeline.evaluate(m)?.chi) };
    let terminal = TerminalCondition::FieldOfMeasure(&chi_of);
    let sol = solve_mfg_finite(spec, &tg, m0, &terminal, pipeline.ergodic().lambda_bar, &opts.picard)?;
    let chi_m0 = pipeline.evaluate(m0)?.chi;
    Ok(WeakSolutionReport {
        discrepancy: linf_distance(sol.u0(), &chi_m0),
        u0: sol.u0().clone(),
        chi_m0,
        diagnostics: sol.diagnostics(),
    })
}

/// Largest ratio `||chi(m) - chi(m')||_inf / d(m, m')` over the given pairs,
/// with the L1 grid distance standing in for `d_1`.
pub fn lipschitz_estimate(pipeline: &CorrectorPipeline, pairs: &[(Density, Density)]) -> Result<f64> {
    let mut l = 0.0_f64;
    for (a, b) in pairs {
        let d = l1_distance(a, b);
        if d == 0.0 {
            continue;
        }
        let ca = pipeline.evaluate(a)?.chi;
        let cb = pipeline.evaluate(b)?.chi;
        l = l.max(linf_distance(&ca, &cb) / d);
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{spread_of_difference, TorusGrid};
    use crate::model::{preset_model, Preset};

    fn spec(p: Preset, n: usize) -> ModelSpec {
        preset_model(p, TorusGrid::new(n).unwrap()).unwrap()
    }

    fn fast() -> MasterOptions {
        MasterOptions {
            discount_horizon: Some(4.0),
            ..MasterOptions::default()
        }
    }

    #[test]
    fn trivial_model_gives_zero_everywhere() {
        let s = spec(Preset::Trivial, 16);
        let m0 = Density::from_modes(s.grid(), &[0.4], &[]).unwrap();
        assert!(eval_u_finite(&s, 2.0, &m0, &fast()).unwrap().iter().all(|v| *v == 0.0));
        assert!(eval_u_discounted(&s, 0.2, &m0, &fast()).unwrap().iter().all(|v| v.abs() < 1e-14));
        for method in [CorrectorMethod::Longtime, CorrectorMethod::Discount] {
            for norm in [Normalization::LongtimeC, Normalization::ThetaSelected] {
                let c = eval_corrector_chi(&s, &m0, method, norm, &fast()).unwrap();
                assert!(c.chi.iter().all(|v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn finite_value_drifts_by_lambda() {
        let s = spec(Preset::Standard, 32);
        let p = CorrectorPipeline::new(&s, CorrectorMethod::Longtime, Normalization::LongtimeC, fast()).unwrap();
        let m0 = Density::from_modes(s.grid(), &[0.3], &[]).unwrap();
        let a = eval_u_finite(&s, 3.0, &m0, &fast()).unwrap();
        let b = eval_u_finite(&s, 4.0, &m0, &fast()).unwrap();
        let drift = b.average() - a.average();
        assert!((drift - p.ergodic().lambda_bar).abs() < 1e-6, "{drift}");
    }

    #[test]
    fn representation_at_the_discounted_stationary_density() {
        let s = spec(Preset::Standard, 32);
        let o = fast();
        let stat = solve_discounted_stationary(&s, 0.1, &o.picard).unwrap();
        let u = eval_u_discounted(&s, 0.1, &stat.m_bar_delta, &o).unwrap();
        assert!(linf_distance(&u, &stat.u_bar_delta) <= 10.0 * o.picard.tol);
    }

    #[test]
    fn theta_selected_corrector_at_m_bar() {
        let s = spec(Preset::Standard, 32);
        let p = CorrectorPipeline::new(&s, CorrectorMethod::Longtime, Normalization::ThetaSelected, fast()).unwrap();
        let c = p.evaluate(&p.ergodic().m_bar.clone()).unwrap();
        let target = p.ergodic().u_bar.map(|u| u + p.linearized().theta_bar);
        assert!(linf_distance(&c.chi, &target) <= p.options().tol_chi);
    }

    #[test]
    fn routes_agree_up_to_a_constant() {
        let s = spec(Preset::Standard, 32);
        let m0 = Density::from_modes(s.grid(), &[0.4], &[0.2]).unwrap();
        let a = eval_corrector_chi(&s, &m0, CorrectorMethod::Longtime, Normalization::LongtimeC, &fast()).unwrap();
        let b = eval_corrector_chi(&s, &m0, CorrectorMethod::Discount, Normalization::LongtimeC, &fast()).unwrap();
        assert!(spread_of_difference(&a.chi, &b.chi) <= 5.0 * fast().tol_chi);
    }

    #[test]
    fn cauchy_failure_is_reported() {
        let s = spec(Preset::Standard, 16);
        let o = MasterOptions {
            tol_chi: 1e-30,
            t_cap: 2.0,
            ..fast()
        };
        let r = eval_corrector_chi(&s, &Density::uniform(s.grid()), CorrectorMethod::Longtime, Normalization::LongtimeC, &o);
        assert!(matches!(r, Err(Error::CauchyFailure { .. })));
    }

    #[test]
    fn measure_derivative_linearity_and_zero() {
        let s = spec(Preset::Standard, 32);
        let g = *s.grid();
        let m0 = Density::uniform(&g);
        let z = eval_measure_derivative(&s, 1.0, &m0, &SignedField::zeros(&g), DerivativeRoute::Finite, &fast()).unwrap();
        assert!(z.response.iter().all(|v| *v == 0.0));
        let mu = SignedField::centered(&g, g.sample(|x| (2.0 * std::f64::consts::PI * x).sin()).into_vec()).unwrap();
        for route in [DerivativeRoute::Finite, DerivativeRoute::Discounted(0.2)] {
            let a = eval_measure_derivative(&s, 1.0, &m0, &mu, route, &fast()).unwrap();
            let b = eval_measure_derivative(&s, 1.0, &m0, &mu.scaled(2.0), route, &fast()).unwrap();
            assert!(a.response.iter().zip(b.response.iter()).all(|(x, y)| 2.0 * x == *y));
        }
        let bad = SignedField::new(&g, vec![1.0; 32]).unwrap();
        assert!(eval_measure_derivative(&s, 1.0, &m0, &bad, DerivativeRoute::Finite, &fast()).is_err());
    }

    #[test]
    fn trivial_flow_is_heat_flow() {
        let s = spec(Preset::Trivial, 32);
        let p = CorrectorPipeline::new(&s, CorrectorMethod::Longtime, Normalization::ThetaSelected, fast()).unwrap();
        let m0 = Density::from_modes(s.grid(), &[0.5], &[]).unwrap();
        let flow = mckean_vlasov_flow(&p, &m0, 0.2, &FlowOptions { dt: 0.01, stride: 5 }).unwrap();
        let h = s.grid().h();
        let factor = 1.0 / (1.0 + 0.01 * 4.0 * (std::f64::consts::PI * h).sin().powi(2) / (h * h));
        let c = 2.0 * s.grid().cosine_coefficient(flow.last().unwrap(), 1).unwrap();
        assert!((c - 0.5 * factor.powi(20)).abs() < 1e-12);
    }

    #[test]
    fn weak_solution_trivial() {
        let s = spec(Preset::Trivial, 16);
        let p = CorrectorPipeline::new(&s, CorrectorMethod::Longtime, Normalization::ThetaSelected, fast()).unwrap();
        let r = weak_solution_selfcheck(&p, &Density::from_modes(s.grid(), &[0.3], &[]).unwrap(), 1.0).unwrap();
        assert_eq!(r.discrepancy, 0.0);
    }

    #[test]
    fn lipschitz_constant_is_finite() {
        let s = spec(Preset::Standard, 16);
        let p = CorrectorPipeline::new(&s, CorrectorMethod::Longtime, Normalization::ThetaSelected, fast()).unwrap();
        let g = s.grid();
        let pairs = vec![
            (Density::uniform(g), Density::from_modes(g, &[0.2], &[]).unwrap()),
            (Density::from_modes(g, &[0.1], &[0.1]).unwrap(), Density::from_modes(g, &[0.3], &[-0.2]).unwrap()),
        ];
        let l = lipschitz_estimate(&p, &pairs).unwrap();
        assert!(l.is_finite() && l > 0.0 && l < 10.0, "{l}");
    }
}
