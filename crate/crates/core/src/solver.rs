//! Constants from the existence proof and the Picard iteration
//! `u_{k+1} = I_{2s}(|∇u_k|^q) + I_{2s}(ω)`.
//!
//! Gradients are never differenced from `u`. They come from the vector kernel of
//! `∇I_{2s}` applied to the datum, so `∇u_{k+1} = ∇I_{2s}(|∇u_k|^q) + ∇I_{2s}(ω)`.

use serde::Serialize;

use crate::capacity::{wolff_ratio, AdmissibilityReport};
use crate::error::{Error, Result};
use crate::fraclap::{default_test_family, weak_residuals, WeakResidual};
use crate::grid::{Grid, GridField, VectorGridField};
use crate::measure::Measure;
use crate::params::Parameters;
use crate::riesz::{
    gradient_constant, riesz_gradient_measure, riesz_potential_measure, GradientOperator, RieszOperator,
};

/// Converged runs must reproduce `u = I_{2s}(|∇u|^q + ω)` to this relative sup-norm.
pub const REPRESENTATION_TOL: f64 = 1e-6;

/// Values of `I_{2s}(ω)` or `I_{2s-1}(ω)` below this are left out of pointwise ratios.
pub const RATIO_FLOOR: f64 = 1e-14;

/// Consecutive increment growths tolerated before the iteration is declared divergent.
pub const DIVERGENCE_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsLedger {
    pub theta: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1star")]
    pub c1star: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "C4")]
    pub c4: f64,
    pub delta: f64,
    #[serde(rename = "aLimit")]
    pub a_limit: f64,
    /// `C1star - C1`, slack in the smallness condition for the gradient bound.
    pub c1_margin: f64,
    /// `1 - delta`, slack in the contraction.
    pub delta_margin: f64,
}

/// All constants with `C_1 = θ C_1^*`, which makes `δ = θ` and keeps `C_1 <= C_1^*`.
pub fn constants_ledger(params: &Parameters, theta: f64) -> Result<ConstantsLedger> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    let q = params.q;
    let qp = params.p;
    let c0 = gradient_constant(params.n, params.s)?;
    let c1star = qp.powf(1.0 - q) / q * c0.powf(-q);
    let c1 = theta * c1star;
    let c2 = c0 * qp;
    let c3 = c0 * c2.powf(q) * c1;
    let c4 = c2.powf(q - 1.0) * q * c3;
    let delta = c0 * c2.powf(q - 1.0) * q * c1;

    let mut a = c0;
    let mut steps = 0usize;
    loop {
        let next = c0 * (a.powf(q) * c1 + 1.0);
        let done = (next - a).abs() < 1e-12;
        a = next;
        steps += 1;
        if done {
            break;
        }
        if steps > 50_000_000 || !a.is_finite() {
            return Err(Error::NotConverged(format!("a_k recursion did not settle for theta = {theta}")));
        }
    }
    Ok(ConstantsLedger {
        theta,
        c0,
        c1star,
        c1,
        c2,
        c3,
        c4,
        delta,
        a_limit: a,
        c1_margin: c1star - c1,
        delta_margin: 1.0 - delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { theta: 0.5, tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `sup |u_{k+1}|`
    pub u_sup: f64,
    /// `sup |u_{k+1} - u_k|`
    pub increment_sup: f64,
    /// `sup |∇u_{k+1} - ∇u_k|`
    pub grad_increment_sup: f64,
    /// Ratio of this increment to the previous one.
    pub ratio: Option<f64>,
    pub grad_ratio: Option<f64>,
    /// `max |∇u_k| / I_{2s-1}(ω)` for the iterate entering this step.
    pub grad_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    /// `u >= I_{2s}(ω) - 1e-10` everywhere.
    pub lower_ok: bool,
    pub lower_violations: usize,
    /// `max u / I_{2s}(ω)`.
    pub upper_c: f64,
    /// `1 + aLimit^q C1`, from `|∇u| <= aLimit I_{2s-1}ω` and the Riesz semigroup applied to
    /// the Wolff inequality.
    pub upper_bound: f64,
    pub upper_ok: bool,
    /// `max |∇u| / I_{2s-1}(ω)`.
    pub gradient_c: Option<f64>,
    /// `C2 (1 + 5e-2)`.
    pub gradient_bound: f64,
    pub gradient_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub params: Parameters,
    pub grid: Grid,
    pub tol: f64,
    pub max_iter: usize,
    pub ledger: ConstantsLedger,
    pub admissibility: Option<AdmissibilityReport>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    /// Largest increment ratio from `k = 3` on.
    pub asymptotic_ratio: Option<f64>,
    pub representation_residual: f64,
    pub sandwich: SandwichReport,
    pub weak_residuals: Vec<WeakResidual>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridField,
    pub grad: VectorGridField,
    pub report: SolveReport,
}

fn max_ratio(num: &GridField, den: &GridField) -> f64 {
    num.values
        .iter()
        .zip(&den.values)
        .filter(|(_, &d)| d >= RATIO_FLOOR)
        .map(|(&a, &d)| a / d)
        .fold(0.0, f64::max)
}

fn sup_diff(a: &GridField, b: &GridField) -> f64 {
    a.values.iter().zip(&b.values).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn gradient_power(grad: &VectorGridField, q: f64) -> GridField {
    grad.magnitude().map(|m| m.powf(q))
}

/// Picard iteration for `u = I_{2s}(|∇u|^q) + I_{2s}(ω)`.
///
/// The measure must satisfy the measured Wolff inequality with `C_1 = θ C_1^*` and the box
/// must have `L >= 4R`. Stops when `sup|u_{k+1} - u_k| <= tol · sup|u_1 - u_0|`.
pub fn picard_solve(omega: &Measure, params: &Parameters, grid: Grid, opts: SolveOptions) -> Result<Solution> {
    let ledger = constants_ledger(params, opts.theta)?;
    if omega.dim() != params.n || grid.n != params.n {
        return Err(Error::GridMismatch("measure, grid and parameters disagree on n".into()));
    }
    let two_s = params.two_s();
    let admissibility = if omega.is_zero() {
        None
    } else {
        let rep = wolff_ratio(omega, params, grid)?;
        if rep.c1hat > ledger.c1 * (1.0 + 1e-9) {
            return Err(Error::NotAdmissible { c1hat: rep.c1hat, limit: ledger.c1 });
        }
        Some(rep)
    };

    let u0 = riesz_potential_measure(omega, two_s, grid)?;
    let g0 = riesz_gradient_measure(omega, params.s, grid)?;
    let v = riesz_potential_measure(omega, params.grad_order(), grid)?;
    let pot = RieszOperator::new(grid, two_s)?;
    let gradop = GradientOperator::new(grid, params.s)?;

    let mut u = u0.clone();
    let mut g = g0.clone();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut first: Option<f64> = None;
    let mut growth_run = 0usize;
    let mut stopped = false;

    for k in 0..opts.max_iter.max(1) {
        let grad_bound = max_ratio(&g.magnitude(), &v);
        let datum = gradient_power(&g, params.q);
        let u_next = pot.apply(&datum)?.zip_map(&u0, |a, b| a + b);
        let g_next = gradop.apply(&datum)?.add(&g0);
        let inc = sup_diff(&u_next, &u);
        let ginc = g_next.sup_distance(&g);
        let (ratio, grad_ratio) = match history.last() {
            Some(prev) => (
                (prev.increment_sup > 0.0).then(|| inc / prev.increment_sup),
                (prev.grad_increment_sup > 0.0).then(|| ginc / prev.grad_increment_sup),
            ),
            None => (None, None),
        };
        history.push(IterationRecord {
            k,
            u_sup: u_next.sup_norm(),
            increment_sup: inc,
            grad_increment_sup: ginc,
            ratio,
            grad_ratio,
            grad_bound,
        });
        u = u_next;
        g = g_next;

        if ratio.is_some_and(|r| r > 1.0) {
            growth_run += 1;
            if growth_run >= DIVERGENCE_RUN {
                return Err(Error::Diverged(k + 1));
            }
        } else {
            growth_run = 0;
        }
        let base = *first.get_or_insert(inc);
        if inc <= opts.tol * base {
            stopped = true;
            break;
        }
    }

    let representation = representation_residual(&u, &g, omega, params)?;
    let sandwich = sandwich_check(&u, Some(&g), omega, params, &ledger)?;
    let weak = weak_residuals(&u, Some(&g), omega, params, &default_test_family(params.n))?;
    let asymptotic_ratio = history
        .iter()
        .filter(|r| r.k >= 3)
        .filter_map(|r| r.ratio)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));

    let report = SolveReport {
        params: *params,
        grid,
        tol: opts.tol,
        max_iter: opts.max_iter,
        ledger,
        admissibility,
        iterations: history.len(),
        converged: stopped && representation <= REPRESENTATION_TOL,
        history,
        asymptotic_ratio,
        representation_residual: representation,
        sandwich,
        weak_residuals: weak,
    };
    Ok(Solution { u, grad: g, report })
}

/// `sup|u - I_{2s}(|∇u|^q) - I_{2s}(ω)| / sup|u|` (plain sup of the defect when `u = 0`).
pub fn representation_residual(
    u: &GridField,
    grad: &VectorGridField,
    omega: &Measure,
    params: &Parameters,
) -> Result<f64> {
    let grid = u.grid;
    let nonlinear = RieszOperator::new(grid, params.two_s())?.apply(&gradient_power(grad, params.q))?;
    let linear = riesz_potential_measure(omega, params.two_s(), grid)?;
    let defect = u
        .values
        .iter()
        .zip(&nonlinear.values)
        .zip(&linear.values)
        .fold(0.0_f64, |m, ((a, b), c)| m.max((a - b - c).abs()));
    let scale = u.sup_norm();
    Ok(if scale > 0.0 { defect / scale } else { defect })
}

/// Two-sided bound `I_{2s}ω <= u <= C I_{2s}ω`, and `|∇u| <= C I_{2s-1}ω` when the gradient
/// is given.
pub fn sandwich_check(
    u: &GridField,
    grad: Option<&VectorGridField>,
    omega: &Measure,
    params: &Parameters,
    ledger: &ConstantsLedger,
) -> Result<SandwichReport> {
    let grid = u.grid;
    let u0 = riesz_potential_measure(omega, params.two_s(), grid)?;
    let lower_violations = u
        .values
        .iter()
        .zip(&u0.values)
        .filter(|(&a, &b)| a < b - 1e-10)
        .count();
    let upper_c = max_ratio(u, &u0);
    let upper_bound = 1.0 + ledger.a_limit.powf(params.q) * ledger.c1;
    let gradient_bound = ledger.c2 * (1.0 + 5e-2);
    let gradient_c = match grad {
        Some(g) => {
            let v = riesz_potential_measure(omega, params.grad_order(), grid)?;
            Some(max_ratio(&g.magnitude(), &v))
        }
        None => None,
    };
    Ok(SandwichReport {
        lower_ok: lower_violations == 0,
        lower_violations,
        upper_c,
        upper_bound,
        upper_ok: upper_c <= upper_bound,
        gradient_c,
        gradient_bound,
        gradient_ok: gradient_c.map(|c| c <= gradient_bound),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::scale_measure_admissible;
    use proptest::prelude::*;

    fn reference() -> Parameters {
        Parameters::new(2, 0.75, 2.0).unwrap()
    }

    #[test]
    fn delta_equals_theta() {
        for &q in &[1.5, 2.0, 3.0] {
            let p = Parameters::new(2, 0.75, q).unwrap();
            for &t in &[0.25, 0.5, 0.75] {
                let l = constants_ledger(&p, t).unwrap();
                assert!((l.delta - t).abs() < 1e-12);
                assert!(l.a_limit <= l.c2);
                assert!(l.c1 <= l.c1star);
            }
        }
    }

    #[test]
    fn a_limit_closed_form_q2() {
        let l = constants_ledger(&reference(), 0.75).unwrap();
        // smaller root of θx²/(4C0) - x + C0 = 0: x = (2C0/θ)(1 - sqrt(1-θ))
        let root = 2.0 * l.c0 / 0.75 * (1.0 - (0.25f64).sqrt());
        assert!((root - 4.0 / 3.0 * l.c0).abs() < 1e-14);
        assert!((l.a_limit - 4.0 / 3.0 * l.c0).abs() < 1e-10);
    }

    #[test]
    fn a_limit_approaches_c0_qprime() {
        let l = constants_ledger(&reference(), 0.9999).unwrap();
        assert!((l.a_limit - 2.0 * l.c0).abs() < 0.03 * l.c0);
        assert!(l.a_limit <= 2.0 * l.c0);
    }

    #[test]
    fn theta_range() {
        assert!(matches!(constants_ledger(&reference(), 1.5), Err(Error::ThetaOutOfRange(_))));
        assert!(matches!(constants_ledger(&reference(), 0.0), Err(Error::ThetaOutOfRange(_))));
    }

    #[test]
    fn zero_measure_converges_at_once() {
        let g = Grid::new(2, 8.0, 32).unwrap();
        let sol = picard_solve(&Measure::zero(2), &reference(), g, SolveOptions::default()).unwrap();
        assert_eq!(sol.u.sup_norm(), 0.0);
        assert_eq!(sol.report.iterations, 1);
        assert!(sol.report.converged);
    }

    #[test]
    fn inadmissible_measure_rejected() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let w = Measure::uniform_ball(g, &[0.0, 0.0], 1.0, 1.0).unwrap();
        let err = picard_solve(&w, &reference(), g, SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotAdmissible { .. }));
    }

    fn small_run() -> (Measure, Solution) {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let p = reference();
        let w = Measure::uniform_ball(g, &[0.0, 0.0], 1.0, 1.0).unwrap();
        let (t, _) = scale_measure_admissible(&w, 0.5, &p, g).unwrap();
        let w = w.scaled(t);
        let sol = picard_solve(&w, &p, g, SolveOptions::default()).unwrap();
        (w, sol)
    }

    #[test]
    fn small_scaled_disk_converges_with_bounds() {
        let (w, sol) = small_run();
        let r = &sol.report;
        assert!(r.converged, "{r:?}");
        assert!(r.representation_residual <= 1e-6);
        assert!(r.asymptotic_ratio.unwrap_or(0.0) <= r.ledger.delta + 0.05);
        for rec in r.history.iter().filter(|x| x.k >= 3) {
            if let Some(gr) = rec.grad_ratio {
                assert!(gr <= r.ledger.delta + 0.05);
            }
        }
        for rec in &r.history {
            assert!(rec.grad_bound <= r.ledger.a_limit + 5e-2 * r.ledger.c0);
        }
        assert!(r.sandwich.lower_ok && r.sandwich.upper_c >= 1.0);
        assert!(r.sandwich.gradient_ok.unwrap());
        let u0 = riesz_potential_measure(&w, 1.5, sol.u.grid).unwrap();
        assert!(sol.u.values.iter().zip(&u0.values).all(|(a, b)| a >= b));
    }

    #[test]
    fn u0_is_not_a_fixed_point() {
        let (w, _) = small_run();
        let p = reference();
        let g = Grid::new(2, 8.0, 64).unwrap();
        let u0 = riesz_potential_measure(&w, 1.5, g).unwrap();
        let g0 = riesz_gradient_measure(&w, 0.75, g).unwrap();
        let res = representation_residual(&u0, &g0, &w, &p).unwrap();
        let corr = RieszOperator::new(g, 1.5).unwrap().apply(&gradient_power(&g0, 2.0)).unwrap();
        let expect = corr.sup_norm() / u0.sup_norm();
        assert!(res > 0.0 && (res - expect).abs() <= 1e-12 * expect);
        let s = sandwich_check(&u0, None, &w, &p, &constants_ledger(&p, 0.5).unwrap()).unwrap();
        assert!(s.lower_ok);
        assert!((s.upper_c - 1.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn ledger_identities(q in 1.4f64..4.0, theta in 0.05f64..0.95) {
            let p = Parameters::new(2, 0.75, q).unwrap();
            let l = constants_ledger(&p, theta).unwrap();
            prop_assert!((l.delta - theta).abs() < 1e-12);
            prop_assert!(l.a_limit >= l.c0 && l.a_limit <= l.c0 * p.p);
            prop_assert!((l.c4 - l.c2.powf(q - 1.0) * q * l.c3).abs() <= 1e-12 * l.c4);
        }
    }
}
