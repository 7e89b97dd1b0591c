//! Riesz capacities `cap_{α,p}(E) = inf { ‖u‖_p^p : u >= 0, I_α u >= 1 on E }`, the
//! explicit ball bound, and the Wolff-type admissibility ratio of a measure.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::ConvolutionMethod;
use crate::grid::{Grid, GridField};
use crate::measure::Measure;
use crate::params::Parameters;
use crate::riesz::{gradient_constant, riesz_constant, riesz_potential_measure, unit_ball_volume, RieszOperator};

/// Potential values below this are treated as outside the influence of `ω`.
pub const WOLFF_FLOOR: f64 = 1e-14;

/// `C r^{n-αp}` with `C = (2^{n-α}/c(n,α))^p v_n^{1-p}`, the norm of the explicit ball
/// candidate (`v_n` is the unit ball volume).
pub fn ball_capacity_upper(n: usize, alpha: f64, p: f64, r: f64) -> Result<f64> {
    let c = riesz_constant(n, alpha)?;
    if !(p > 1.0) {
        return Err(Error::Invalid(format!("exponent p = {p} must exceed 1")));
    }
    if !(r >= 0.0) {
        return Err(Error::Invalid(format!("radius {r} must be nonnegative")));
    }
    let nf = n as f64;
    let k = (2f64.powf(nf - alpha) / c).powf(p) * unit_ball_volume(n).powf(1.0 - p);
    Ok(k * r.powf(nf - alpha * p))
}

/// Height of the explicit candidate `2^{n-α} / (c(n,α) v_n r^α)` on `B_r`.
pub fn paper_candidate_height(n: usize, alpha: f64, r: f64) -> Result<f64> {
    let c = riesz_constant(n, alpha)?;
    Ok(2f64.powf(n as f64 - alpha) / (c * unit_ball_volume(n) * r.powf(alpha)))
}

/// The candidate as a grid field: the height above on cells with centres in `B_r(x0)`.
///
/// Every `x ∈ B_r(x0)` has `B_r(x0) ⊂ B_{2r}(x)`, so the kernel is at least
/// `c (2r)^{α-n}` on the support and `I_α g >= 1` on the ball.
pub fn paper_ball_candidate(x0: &[f64], r: f64, alpha: f64, grid: Grid) -> Result<GridField> {
    let height = paper_candidate_height(grid.n, alpha, r)?;
    let mask = CellMask::ball(grid, x0, r);
    Ok(GridField {
        grid,
        values: mask.cells.iter().map(|&b| if b { height } else { 0.0 }).collect(),
    })
}

/// A set of grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    pub grid: Grid,
    pub cells: Vec<bool>,
    /// The ball this mask was rasterised from, if any.
    pub ball: Option<(Vec<f64>, f64)>,
}

impl CellMask {
    /// Cells whose centres satisfy `|x - x0| < r`.
    pub fn ball(grid: Grid, x0: &[f64], r: f64) -> Self {
        let f = GridField::from_fn(grid, |x| {
            let d2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() < r {
                1.0
            } else {
                0.0
            }
        });
        Self {
            grid,
            cells: f.values.iter().map(|&v| v > 0.0).collect(),
            ball: Some((x0.to_vec(), r)),
        }
    }

    pub fn from_indices(grid: Grid, indices: &[Vec<usize>]) -> Result<Self> {
        let mut cells = vec![false; grid.len()];
        for idx in indices {
            if idx.len() != grid.n || idx.iter().any(|&k| k >= grid.points) {
                return Err(Error::Invalid(format!("cell index {idx:?} is outside the grid")));
            }
            cells[grid.flat_index(idx)] = true;
        }
        Ok(Self { grid, cells, ball: None })
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    fn indices(&self) -> Vec<usize> {
        self.cells.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    fn touches_boundary(&self) -> bool {
        let g = self.grid;
        let mut idx = vec![0usize; g.n];
        self.indices().into_iter().any(|i| {
            g.multi_index(i, &mut idx);
            idx.iter().any(|&k| k == 0 || k == g.points - 1)
        })
    }

    // Ball centred on the mask centroid containing every cell.
    fn enclosing_ball(&self) -> (Vec<f64>, f64) {
        if let Some(b) = &self.ball {
            return b.clone();
        }
        let g = self.grid;
        let idx = self.indices();
        let mut c = vec![0.0; g.n];
        for &i in &idx {
            c.iter_mut().zip(g.point(i)).for_each(|(a, b)| *a += b);
        }
        c.iter_mut().for_each(|a| *a /= idx.len() as f64);
        let reach = idx
            .iter()
            .map(|&i| g.point(i).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        (c, reach + 0.5 * g.spacing() * (g.n as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityOptions {
    pub max_iter: usize,
    /// Allowed violation of `I_α u >= 1` on `E` for the raw iterate.
    pub feasibility_tol: f64,
    /// Relative change of the certified value over one multiplier window.
    pub rel_change: f64,
    /// Iterations between multiplier updates.
    pub window: usize,
    /// Penalty weight in units of `p / ‖P_E K‖²`.
    pub penalty_factor: f64,
    /// Stop once the certified value and the dual bound agree to this relative gap.
    pub gap_tol: f64,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            feasibility_tol: 1e-6,
            rel_change: 1e-8,
            window: 50,
            penalty_factor: 10.0,
            gap_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityEstimate {
    /// Best certified value: `‖u‖_p^p` of a candidate rescaled to satisfy `I_α u >= 1` on `E`.
    pub value: f64,
    /// The same certificate for the explicit starting candidate.
    pub upper_bound: f64,
    /// Weak-duality lower bound for the discrete problem.
    pub lower_bound: f64,
    pub analytic_ball_bound: Option<f64>,
    pub iterations: usize,
    /// `max(0, 1 - min_E I_α u)` of the final raw iterate.
    pub raw_violation: f64,
    #[serde(skip)]
    pub candidate: GridField,
}

struct Problem<'a> {
    op: &'a RieszOperator,
    set: &'a [usize],
    p: f64,
    vol: f64,
    mu: f64,
}

impl Problem<'_> {
    fn norm(&self, u: &[f64]) -> f64 {
        self.vol * u.iter().map(|v| v.powf(self.p)).sum::<f64>()
    }

    fn potential_on_set(&self, u: &GridField) -> Result<Vec<f64>> {
        let v = self.op.apply(u)?;
        Ok(self.set.iter().map(|&i| v.values[i]).collect())
    }

    // Augmented Lagrangian value and gradient.
    fn eval(&self, u: &GridField, lam: &[f64]) -> Result<(f64, Vec<f64>)> {
        let v = self.potential_on_set(u)?;
        let mut push = GridField::zeros(u.grid);
        let mut pen = 0.0;
        for (k, &i) in self.set.iter().enumerate() {
            let gap = (1.0 - v[k] + lam[k] / self.mu).max(0.0);
            pen += gap * gap;
            push.values[i] = -self.vol * self.mu * gap;
        }
        let f = self.norm(&u.values) + 0.5 * self.vol * self.mu * pen;
        let back = self.op.apply(&push)?;
        let grad = u
            .values
            .iter()
            .zip(&back.values)
            .map(|(&x, &b)| self.vol * self.p * x.powf(self.p - 1.0) + b)
            .collect();
        Ok((f, grad))
    }

    // sup_t [t Σν - h^n (p-1) Σ (t Kν / (h^n p))^{p'}] for multipliers ν = h^n λ.
    fn dual_bound(&self, lam: &[f64]) -> Result<f64> {
        let grid = *self.op.grid();
        let mut nu = GridField::zeros(grid);
        for (k, &i) in self.set.iter().enumerate() {
            nu.values[i] = self.vol * lam[k];
        }
        let a: f64 = nu.values.iter().sum();
        if a <= 0.0 {
            return Ok(0.0);
        }
        let knu = self.op.apply(&nu)?;
        let pc = self.p / (self.p - 1.0);
        let b = self.vol
            * (self.p - 1.0)
            * knu
                .values
                .iter()
                .map(|&v| (v.max(0.0) / (self.vol * self.p)).powf(pc))
                .sum::<f64>();
        if b <= 0.0 {
            return Ok(0.0);
        }
        let t = (a / (pc * b)).powf(1.0 / (pc - 1.0));
        Ok((t * a - t.powf(pc) * b).max(0.0))
    }
}

// ‖P_E K‖ by power iteration on K P_E K from the (positive) indicator of E.
fn restricted_operator_norm(op: &RieszOperator, set: &[usize]) -> Result<f64> {
    let grid = *op.grid();
    let mut v = GridField::zeros(grid);
    for &i in set {
        v.values[i] = 1.0;
    }
    let normalise = |f: &mut GridField| {
        let n = f.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        f.values.iter_mut().for_each(|x| *x /= n);
        n
    };
    normalise(&mut v);
    let mut est = 0.0;
    for _ in 0..30 {
        let kv = op.apply(&v)?;
        let mut w = GridField::zeros(grid);
        for &i in set {
            w.values[i] = kv.values[i];
        }
        v = op.apply(&w)?;
        est = normalise(&mut v).sqrt();
    }
    Ok(est)
}

/// Projected-gradient estimate of the discrete capacity of `E`, started from the explicit
/// ball candidate for the smallest enclosing ball about the centroid of `E`.
///
/// The constraint is handled by an augmented Lagrangian with quadratic penalty on
/// `max(0, 1 - I_α u)`; Barzilai-Borwein steps with a nonmonotone backtracking safeguard
/// solve each subproblem. Every iterate is turned into a feasible certificate by dividing by
/// `min_E I_α u`.
pub fn estimate_capacity(mask: &CellMask, alpha: f64, p: f64, grid: Grid) -> Result<CapacityEstimate> {
    estimate_capacity_with(mask, alpha, p, grid, CapacityOptions::default())
}

pub fn estimate_capacity_with(
    mask: &CellMask,
    alpha: f64,
    p: f64,
    grid: Grid,
    opts: CapacityOptions,
) -> Result<CapacityEstimate> {
    if !mask.grid.matches(&grid) {
        return Err(Error::GridMismatch("mask and grid differ".into()));
    }
    if mask.is_empty() {
        return Err(Error::EmptySet);
    }
    if mask.touches_boundary() {
        return Err(Error::Invalid("target set must lie in the grid interior".into()));
    }
    if !(p > 1.0) {
        return Err(Error::Invalid(format!("exponent p = {p} must exceed 1")));
    }
    let set = mask.indices();
    // thousands of applications: the transform path is cheaper even on small grids
    let op = RieszOperator::with_method(grid, alpha, ConvolutionMethod::Fft)?;
    let vol = grid.cell_volume();

    let (c0, r0) = mask.enclosing_ball();
    let mut u = paper_ball_candidate(&c0, r0, alpha, grid)?;
    if u.values.iter().all(|&v| v == 0.0) {
        // enclosing ball smaller than a cell: start from the mask itself
        let h = paper_candidate_height(grid.n, alpha, r0)?;
        for &i in &set {
            u.values[i] = h;
        }
    }

    let lmax = restricted_operator_norm(&op, &set)?;
    let mu = opts.penalty_factor * p / (lmax * lmax);
    let prob = Problem { op: &op, set: &set, p, vol, mu };

    let certify = |u: &GridField| -> Result<(f64, f64)> {
        let v = prob.potential_on_set(u)?;
        let m = v.iter().copied().fold(f64::INFINITY, f64::min);
        let value = if m > 0.0 { prob.norm(&u.values) / m.powf(p) } else { f64::INFINITY };
        Ok((value, m))
    };

    let (upper_bound, m0) = certify(&u)?;
    let mut best = upper_bound;
    let mut best_u = u.scaled(1.0 / m0);
    let mut lower = 0.0_f64;
    let mut raw_violation = (1.0 - m0).max(0.0);

    let mut lam = vec![0.0; set.len()];
    let (mut f, mut g) = prob.eval(&u, &lam)?;
    let mut step = 1.0 / (vol * (p + mu * lmax * lmax));
    let mut recent: Vec<f64> = vec![f];
    let mut prev_best = f64::INFINITY;
    let mut it = 0;
    let mut converged = false;

    const MEMORY: usize = 10;
    const SUFFICIENT: f64 = 1e-4;

    while it < opts.max_iter {
        for _ in 0..opts.window {
            if it >= opts.max_iter {
                break;
            }
            it += 1;
            let d: Vec<f64> = u
                .values
                .iter()
                .zip(&g)
                .map(|(&x, &gx)| (x - step * gx).max(0.0) - x)
                .collect();
            let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if slope >= 0.0 {
                break;
            }
            let fmax = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut t = 1.0;
            let (un, fnew, gnew) = loop {
                let cand = GridField {
                    grid,
                    values: u.values.iter().zip(&d).map(|(x, dx)| (x + t * dx).max(0.0)).collect(),
                };
                let (fc, gc) = prob.eval(&cand, &lam)?;
                if fc <= fmax + SUFFICIENT * t * slope || t < 1e-10 {
                    break (cand, fc, gc);
                }
                t *= 0.5;
            };
            let mut sy = 0.0;
            let mut ss = 0.0;
            for i in 0..g.len() {
                let s = un.values[i] - u.values[i];
                sy += s * (gnew[i] - g[i]);
                ss += s * s;
            }
            u = un;
            f = fnew;
            g = gnew;
            recent.push(f);
            if recent.len() > MEMORY {
                recent.remove(0);
            }
            if sy > 0.0 {
                step = (ss / sy).clamp(1e-30, 1e30);
            }
        }

        let v = prob.potential_on_set(&u)?;
        for (l, &vi) in lam.iter_mut().zip(&v) {
            *l = (*l + mu * (1.0 - vi)).max(0.0);
        }
        lower = lower.max(prob.dual_bound(&lam)?);
        let (value, m) = certify(&u)?;
        raw_violation = (1.0 - m).max(0.0);
        if value < best {
            best = value;
            best_u = u.scaled(1.0 / m);
        }
        (f, g) = prob.eval(&u, &lam)?;
        recent.clear();
        recent.push(f);
        let stalled = (prev_best - best).abs() <= opts.rel_change * best;
        let tight = best - lower <= opts.gap_tol * best;
        if raw_violation <= opts.feasibility_tol && (stalled || tight) {
            converged = true;
            break;
        }
        prev_best = best;
    }
    if !converged && raw_violation > opts.feasibility_tol {
        return Err(Error::NotConverged(format!(
            "capacity iterate still violates the constraint by {raw_violation:e} after {it} iterations"
        )));
    }

    let analytic = match &mask.ball {
        Some((_, r)) => Some(ball_capacity_upper(grid.n, alpha, p, *r)?),
        None => None,
    };
    Ok(CapacityEstimate {
        value: best,
        upper_bound,
        lower_bound: lower.min(best),
        analytic_ball_bound: analytic,
        iterations: it,
        raw_violation,
        candidate: best_u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// Grid maximum of `I_{2s-1}([I_{2s-1} ω]^q) / I_{2s-1} ω`.
    pub c1hat: f64,
    /// `(q')^{1-q} q^{-1} C_0^{-q}`.
    pub c1star: f64,
    /// `c1hat / c1star`.
    pub theta: f64,
    pub scale_factor: f64,
}

/// `(q')^{1-q} q^{-1} C_0^{-q}`.
pub fn wolff_threshold(params: &Parameters) -> Result<f64> {
    let c0 = gradient_constant(params.n, params.s)?;
    let q = params.q;
    Ok(params.p.powf(1.0 - q) / q * c0.powf(-q))
}

fn check_box(omega: &Measure, grid: Grid) -> Result<()> {
    if grid.half_width < 4.0 * omega.support_radius() {
        return Err(Error::Invalid(format!(
            "box half-width {} is below 4 times the support radius {}",
            grid.half_width,
            omega.support_radius()
        )));
    }
    Ok(())
}

/// The Wolff-type ratio measured on the grid. Requires `L >= 4R`.
pub fn wolff_ratio(omega: &Measure, params: &Parameters, grid: Grid) -> Result<AdmissibilityReport> {
    if omega.is_zero() {
        return Err(Error::ZeroMeasure);
    }
    check_box(omega, grid)?;
    let alpha = params.grad_order();
    let v = riesz_potential_measure(omega, alpha, grid)?;
    let vq = v.map(|x| x.powf(params.q));
    let w = RieszOperator::new(grid, alpha)?.apply(&vq)?;
    let c1hat = v
        .values
        .iter()
        .zip(&w.values)
        .filter(|(&vi, _)| vi >= WOLFF_FLOOR)
        .map(|(&vi, &wi)| wi / vi)
        .fold(0.0, f64::max);
    let c1star = wolff_threshold(params)?;
    Ok(AdmissibilityReport { c1hat, c1star, theta: c1hat / c1star, scale_factor: 1.0 })
}

/// Multiplier `t = (θ* C_1^* / Ĉ_1)^{1/(q-1)}` and the report recomputed for `t ω`.
pub fn scale_measure_admissible(
    omega: &Measure,
    target: f64,
    params: &Parameters,
    grid: Grid,
) -> Result<(f64, AdmissibilityReport)> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::ThetaOutOfRange(target));
    }
    let base = wolff_ratio(omega, params, grid)?;
    let t = (target * base.c1star / base.c1hat).powf(1.0 / (params.q - 1.0));
    let mut rep = wolff_ratio(&omega.scaled(t), params, grid)?;
    rep.scale_factor = t;
    Ok((t, rep))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    /// `ω(B) / ball_capacity_upper(n, 2s-1, q', r)` per ball.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// Ball-restricted empirical constant for `ω(E) <= C cap_{2s-1,q'}(E)`.
pub fn check_capacity_domination(
    omega: &Measure,
    params: &Parameters,
    balls: &[(Vec<f64>, f64)],
) -> Result<DominationReport> {
    let alpha = params.grad_order();
    let ratios = balls
        .iter()
        .map(|(c, r)| {
            if !(*r > 0.0) {
                return Err(Error::Invalid(format!("ball radius {r} must be positive")));
            }
            Ok(omega.ball_mass(c, *r) / ball_capacity_upper(params.n, alpha, params.p, *r)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(DominationReport { ratios, max_ratio })
}
