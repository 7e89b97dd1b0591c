//! Norms, level-set volumes and far-field decay of computed potentials.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::measure::Measure;
use crate::params::Parameters;
use crate::riesz::riesz_constant;

/// Number of λ levels in the sampled weak-type profile.
pub const LAMBDA_LEVELS: usize = 64;

fn weights(v: &GridField, s: f64) -> Vec<f64> {
    let g = v.grid;
    let e = g.n as f64 + 2.0 * s;
    let vol = g.cell_volume();
    (0..g.len()).map(|i| vol / (1.0 + g.radius(i).powf(e))).collect()
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 1.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::KappaOutOfRange(kappa))
    }
}

/// `sup_λ λ μ({|v| > λ})^{1/κ}` with `dμ = dx / (1 + |x|^{n+2s})`, over every `λ > 0`.
///
/// Between data values the distribution function is constant, so the supremum is a maximum
/// over left limits at the attained values of `|v|`. This weak-type quasinorm and the
/// infimum form `inf { C : ∫_E |v| dμ <= C μ(E)^{1-1/κ} }` are equivalent within a factor
/// `κ' = κ/(κ-1)`.
pub fn marcinkiewicz_quasinorm(v: &GridField, kappa: f64, weight_s: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let w = weights(v, weight_s);
    let mut pairs: Vec<(f64, f64)> = v
        .values
        .iter()
        .zip(&w)
        .filter(|(x, _)| **x != 0.0)
        .map(|(x, &m)| (x.abs(), m))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = 0.0_f64;
    let mut mass = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let level = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == level {
            mass += pairs[i].1;
            i += 1;
        }
        best = best.max(level * mass.powf(1.0 / kappa));
    }
    Ok(best)
}

/// The same quasinorm sampled on `levels` logarithmically spaced `λ` spanning
/// `[1e-6, 1e6] · median|v|`. The ratio to [`marcinkiewicz_quasinorm`] quantifies the
/// resolution of the sampled profile.
pub fn marcinkiewicz_sampled(v: &GridField, kappa: f64, weight_s: f64, levels: usize) -> Result<f64> {
    check_kappa(kappa)?;
    let w = weights(v, weight_s);
    let mut mags: Vec<f64> = v.values.iter().map(|x| x.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    if median == 0.0 || levels < 2 {
        return Ok(0.0);
    }
    let (lo, hi) = ((1e-6 * median).ln(), (1e6 * median).ln());
    let mut best = 0.0_f64;
    for k in 0..levels {
        let lam = (lo + (hi - lo) * k as f64 / (levels - 1) as f64).exp();
        let mass: f64 = v
            .values
            .iter()
            .zip(&w)
            .filter(|(x, _)| x.abs() > lam)
            .map(|(_, m)| m)
            .sum();
        best = best.max(lam * mass.powf(1.0 / kappa));
    }
    Ok(best)
}

/// `|{u > λ}|` as `h^n` times the number of grid points above `λ`.
pub fn distribution_function(u: &GridField, lambda: f64) -> f64 {
    u.grid.cell_volume() * u.values.iter().filter(|&&v| v > lambda).count() as f64
}

/// `(h^n Σ |v|^r)^{1/r}`.
pub fn lebesgue_norm(v: &GridField, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::Invalid(format!("Lebesgue exponent {r} must be at least 1")));
    }
    // factor out the peak so large r stays finite
    let peak = v.sup_norm();
    if peak == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = v.values.iter().map(|x| (x.abs() / peak).powf(r)).sum();
    Ok(peak * (v.grid.cell_volume() * sum).powf(1.0 / r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub ring_inner: f64,
    pub ring_outer: f64,
    pub slope: f64,
    pub amplitude: f64,
    pub rmse: f64,
    pub samples: usize,
}

/// Fraction of `L` bounding the default fitting annulus.
pub const DECAY_RING: (f64, f64) = (0.6, 0.8);

/// Least-squares fit of `log u = log A + slope · log|x|` on the annulus `[0.6L, 0.8L]`.
pub fn decay_fit(u: &GridField, omega: &Measure, params: &Parameters) -> Result<DecayFit> {
    if params.n != u.grid.n {
        return Err(Error::GridMismatch("parameters and field disagree on n".into()));
    }
    let l = u.grid.half_width;
    let (inner, outer) = (DECAY_RING.0 * l, DECAY_RING.1 * l);
    if inner <= omega.support_radius() {
        return Err(Error::AnnulusEmpty);
    }
    decay_fit_on(u, inner, outer)
}

pub fn decay_fit_on(u: &GridField, inner: f64, outer: f64) -> Result<DecayFit> {
    let g = u.grid;
    let pts: Vec<(f64, f64)> = (0..g.len())
        .filter_map(|i| {
            let r = g.radius(i);
            let v = u.values[i];
            (r >= inner && r <= outer && v > 0.0).then(|| (r.ln(), v.ln()))
        })
        .collect();
    let (slope, icpt, rmse) = fit_line(&pts).ok_or(Error::AnnulusEmpty)?;
    Ok(DecayFit {
        ring_inner: inner,
        ring_outer: outer,
        slope,
        amplitude: icpt.exp(),
        rmse,
        samples: pts.len(),
    })
}

// Least squares `y = icpt + slope x`; returns (slope, icpt, rmse).
fn fit_line(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / m, my / m);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rmse = (pts.iter().map(|(x, y)| (y - icpt - slope * x).powi(2)).sum::<f64>() / m).sqrt();
    Some((slope, icpt, rmse))
}

/// Levels used by [`distribution_fit`].
pub const DISTRIBUTION_LEVELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionFit {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub levels: usize,
    /// Fitted slope of `log |{u > λ}|` against `log λ`.
    pub slope: f64,
    pub rmse: f64,
    /// `-n/(n-2s)`, the exponent of the atom potential's level sets.
    pub predicted_slope: f64,
    /// The exponent `1 - 2s/n` as it is sometimes displayed for `I_{2s}ω ∈ M^κ`; it is the
    /// reciprocal of `n/(n-2s)` and is not the level-set slope.
    pub displayed_exponent: f64,
    pub relative_error: f64,
}

/// Power-law fit of the distribution function over level sets whose volume runs from a
/// ball of radius `10h` up to the ball of radius `L/2`.
pub fn distribution_fit(u: &GridField, params: &Parameters) -> Result<DistributionFit> {
    let g = u.grid;
    if params.n != g.n {
        return Err(Error::GridMismatch("parameters and field disagree on n".into()));
    }
    let vball = crate::riesz::unit_ball_volume(g.n);
    let h = g.spacing();
    let cells = |r: f64| (vball * (r / h).powi(g.n as i32)).round() as usize;
    let (k_lo, k_hi) = (cells(10.0 * h), cells(0.5 * g.half_width));
    let mut sorted: Vec<f64> = u.values.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if k_lo < 1 || k_hi <= k_lo || k_hi > sorted.len() {
        return Err(Error::Invalid("too few positive grid values for a level-set fit".into()));
    }
    let (hi, lo) = (sorted[k_lo - 1], sorted[k_hi - 1]);
    if !(hi > lo) {
        return Err(Error::Invalid("field is flat over the fitting range".into()));
    }
    let pts: Vec<(f64, f64)> = (0..DISTRIBUTION_LEVELS)
        .map(|k| {
            let t = k as f64 / (DISTRIBUTION_LEVELS - 1) as f64;
            let lam = (lo.ln() + (hi.ln() - lo.ln()) * t).exp();
            (lam.ln(), distribution_function(u, lam).ln())
        })
        .collect();
    let (slope, _, rmse) =
        fit_line(&pts).ok_or_else(|| Error::Invalid("degenerate level-set fit".into()))?;
    let n = g.n as f64;
    let predicted = -n / (n - params.two_s());
    Ok(DistributionFit {
        lambda_lo: lo,
        lambda_hi: hi,
        levels: DISTRIBUTION_LEVELS,
        slope,
        rmse,
        predicted_slope: predicted,
        displayed_exponent: 1.0 - params.two_s() / n,
        relative_error: ((slope - predicted) / predicted).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub min_value: f64,
    pub lower_bound_ok: bool,
    pub violations: usize,
}

/// Checks `u(x) >= c(n,2s) (R + |x|)^{2s-n} ω(R^n)` at every grid point, with a relative
/// slack of `1e-6`.
pub fn positivity_check(u: &GridField, omega: &Measure, params: &Parameters) -> Result<PositivityReport> {
    let g = u.grid;
    let c = riesz_constant(params.n, params.two_s())?;
    let mass = omega.total_mass();
    let big_r = omega.support_radius();
    let e = params.two_s() - params.n as f64;
    let violations = (0..g.len())
        .filter(|&i| {
            let bound = c * (big_r + g.radius(i)).powf(e) * mass * (1.0 - 1e-6);
            u.values[i] < bound
        })
        .count();
    Ok(PositivityReport { min_value: u.min(), lower_bound_ok: violations == 0, violations })
}
