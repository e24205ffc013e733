//! Exponential rate and power-law order fits.

use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub gamma: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r^2)`.
/// A constant `y` gives slope 0 and `r^2 = 0`.
pub fn linear_regression(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    // relative guard: a numerically constant series has no explained variance
    let r2 = if syy <= 1e-28 * my.abs().max(1.0).powi(2) * n {
        0.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    let slope = if r2 == 0.0 { 0.0 } else { slope };
    (slope, my - slope * mx, r2)
}

/// Fits `value ~ exp(intercept - gamma t)` on the points with `t` in `window`.
pub fn rate_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    let mut pts = Vec::new();
    for &(t, v) in series.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        if !(v > 0.0) {
            return Err(Error::Fit(format!("nonpositive value {v} at t = {t}")));
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!("{} points in window, need {MIN_FIT_POINTS}", pts.len())));
    }
    let (slope, intercept, r_squared) = linear_regression(&pts);
    Ok(RateFit {
        gamma: -slope,
        intercept,
        r_squared,
        window,
    })
}

/// Window `[lo T, hi T]`.
pub fn fixed_window(horizon: f64, lo: f64, hi: f64) -> (f64, f64) {
    (lo * horizon, hi * horizon)
}

/// Median of the values on the middle fifth of the horizon, where a
/// converged curve sits on its round-off plateau.
pub fn plateau_level(series: &[(f64, f64)], horizon: f64) -> Option<f64> {
    let mut mid: Vec<f64> = series
        .iter()
        .filter(|(t, _)| *t >= 0.4 * horizon && *t <= 0.6 * horizon)
        .map(|p| p.1)
        .collect();
    if mid.is_empty() {
        return None;
    }
    mid.sort_by(f64::total_cmp);
    Some(mid[mid.len() / 2])
}

/// A plateau this far below the peak of a curve is taken to be round-off.
pub const FLOOR_RELATIVE: f64 = 1e-6;

/// The fixed rule restricted to the part of the curve that is resolved
/// above round-off: `t_hi` is the first time the value drops below
/// `floor_factor` times the plateau (capped at `hi T`), and `t_lo = lo/hi * t_hi`.
/// Curves without a round-off plateau get the fixed window.
pub fn floor_aware_window(series: &[(f64, f64)], horizon: f64, lo: f64, hi: f64, floor_factor: f64) -> (f64, f64) {
    let (f_lo, f_hi) = fixed_window(horizon, lo, hi);
    let peak = series.iter().map(|p| p.1).fold(0.0, f64::max);
    let Some(plateau) = plateau_level(series, horizon).filter(|p| *p <= FLOOR_RELATIVE * peak) else {
        return (f_lo, f_hi);
    };
    let threshold = floor_factor * plateau;
    let t_hi = series
        .iter()
        .filter(|(t, _)| *t <= f_hi)
        .find(|(_, v)| *v <= threshold)
        .map_or(f_hi, |p| p.0);
    if t_hi <= 0.0 {
        return (f_lo, f_hi);
    }
    (lo / hi * t_hi, t_hi)
}

/// Empirical order `p` in `e ~ C delta^p` (slope of `log e` against `log delta`).
pub fn order_fit(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 2 {
        return Err(Error::Fit("order fit needs two points".into()));
    }
    let mut logs = Vec::with_capacity(pts.len());
    for &(d, e) in pts {
        if !(d > 0.0 && e > 0.0) {
            return Err(Error::Fit(format!("nonpositive entry ({d}, {e})")));
        }
        logs.push((d.ln(), e.ln()));
    }
    Ok(linear_regression(&logs).0)
}
