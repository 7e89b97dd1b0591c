//! Riesz kernels `c(n,α)|x|^{α-n}`, their normalisation constants, and potentials of
//! measures and grid densities.
//!
//! Kernel quadrature on a grid uses point values of the kernel at cell-centre offsets. The
//! one cell that contains the singularity gets the exact integral of the kernel over the
//! ball of equal volume, `c ω_n ρ^α / α` with `ρ = h v_n^{-1/n}` (`ω_n` the unit sphere area,
//! `v_n` the unit ball volume). Atomic and gridded data share this rule, so a single cell of
//! height `h^{-n}` and a unit atom at its centre produce the same potential.
//!
//! The gradient of `I_{2s}(ω)` carries the factor `-(n-2s)` from differentiating
//! `|x-y|^{2s-n}`:
//!
//! `∂_i I_{2s}(ω)(x) = -(n-2s) c(n,2s) ∫ (x_i - y_i) |x-y|^{2s-n-2} dω(y)`,
//!
//! so `|∇ I_{2s}(ω)| <= C_0 I_{2s-1}(ω)` with `C_0 = (n-2s) c(n,2s) / c(n,2s-1)`. The singular
//! cell of this odd kernel averages to zero.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{ConvolutionMethod, Convolver};
use crate::gamma::gamma;
use crate::grid::{Grid, GridField, VectorGridField};
use crate::measure::Measure;

pub fn unit_ball_volume(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    PI.powf(half) / gamma(half + 1.0)
}

/// Surface measure of the unit sphere in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

fn check_alpha(n: usize, alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < n as f64 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange { alpha, n })
    }
}

/// `c(n,α) = π^{-n/2} 2^{-α} Γ((n-α)/2) / Γ(α/2)`.
pub fn riesz_constant(n: usize, alpha: f64) -> Result<f64> {
    check_alpha(n, alpha)?;
    let nf = n as f64;
    Ok(PI.powf(-nf / 2.0) * 2f64.powf(-alpha) * gamma((nf - alpha) / 2.0) / gamma(alpha / 2.0))
}

/// `a(n,s) = 2^{2s} s Γ(n/2 + s) / (π^{n/2} Γ(1-s))`.
pub fn fraclap_constant(n: usize, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::OrderOutOfRange(s));
    }
    let nf = n as f64;
    Ok(2f64.powf(2.0 * s) * s * gamma(nf / 2.0 + s) / (PI.powf(nf / 2.0) * gamma(1.0 - s)))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KernelConstants {
    pub c_riesz: f64,
    pub a_frac_lap: f64,
    pub omega_surf: f64,
    pub v_ball: f64,
}

impl KernelConstants {
    pub fn new(n: usize, alpha: f64, s: f64) -> Result<Self> {
        Ok(Self {
            c_riesz: riesz_constant(n, alpha)?,
            a_frac_lap: fraclap_constant(n, s)?,
            omega_surf: unit_sphere_area(n),
            v_ball: unit_ball_volume(n),
        })
    }
}

/// `C_0 = (n-2s) c(n,2s) / c(n,2s-1)`, the pointwise constant in `|∇I_{2s}ω| <= C_0 I_{2s-1}ω`.
pub fn gradient_constant(n: usize, s: f64) -> Result<f64> {
    let two_s = 2.0 * s;
    Ok((n as f64 - two_s) * riesz_constant(n, two_s)? / riesz_constant(n, two_s - 1.0)?)
}

pub fn riesz_kernel(x: &[f64], n: usize, alpha: f64) -> Result<f64> {
    let c = riesz_constant(n, alpha)?;
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(c * r.powf(alpha - n as f64))
}

/// Average of `c(n,α)|z|^{α-n}` over the singular cell, via the equal-volume ball.
pub fn singular_cell_average(n: usize, alpha: f64, h: f64) -> Result<f64> {
    let c = riesz_constant(n, alpha)?;
    let rho = h * unit_ball_volume(n).powf(-1.0 / n as f64);
    Ok(c * unit_sphere_area(n) * rho.powf(alpha) / alpha / h.powi(n as i32))
}

// Whether `y` lies strictly inside the cell centred at `x`.
#[inline]
fn in_cell(x: &[f64], y: &[f64], half_h: f64) -> bool {
    x.iter().zip(y).all(|(a, b)| (a - b).abs() < half_h)
}

/// `I_α` as a reusable convolution on one grid.
#[derive(Debug, Clone)]
pub struct RieszOperator {
    alpha: f64,
    conv: Convolver,
}

impl RieszOperator {
    pub fn new(grid: Grid, alpha: f64) -> Result<Self> {
        Self::with_method(grid, alpha, ConvolutionMethod::Auto)
    }

    pub fn with_method(grid: Grid, alpha: f64, method: ConvolutionMethod) -> Result<Self> {
        let n = grid.n;
        let c = riesz_constant(n, alpha)?;
        let h = grid.spacing();
        let vol = grid.cell_volume();
        let self_weight = singular_cell_average(n, alpha, h)? * vol;
        let expo = (alpha - n as f64) / 2.0;
        let conv = Convolver::new(grid, method, move |off| {
            let r2: i64 = off.iter().map(|o| o * o).sum();
            if r2 == 0 {
                self_weight
            } else {
                vol * c * ((r2 as f64) * h * h).powf(expo)
            }
        });
        Ok(Self { alpha, conv })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &Grid {
        self.conv.grid()
    }

    /// Apply to an arbitrary-sign field (linear map; used for increments).
    pub fn apply(&self, f: &GridField) -> Result<GridField> {
        self.conv.apply(f)
    }
}

/// `∇I_{2s}` as one convolution per component.
#[derive(Debug, Clone)]
pub struct GradientOperator {
    convs: Vec<Convolver>,
}

impl GradientOperator {
    pub fn new(grid: Grid, s: f64) -> Result<Self> {
        Self::with_method(grid, s, ConvolutionMethod::Auto)
    }

    pub fn with_method(grid: Grid, s: f64, method: ConvolutionMethod) -> Result<Self> {
        let n = grid.n;
        let two_s = 2.0 * s;
        let pref = -(n as f64 - two_s) * riesz_constant(n, two_s)?;
        let h = grid.spacing();
        let vol = grid.cell_volume();
        let expo = (two_s - n as f64 - 2.0) / 2.0;
        let convs = (0..n)
            .map(|comp| {
                Convolver::new(grid, method, move |off| {
                    let r2: i64 = off.iter().map(|o| o * o).sum();
                    if r2 == 0 {
                        0.0
                    } else {
                        vol * pref * (off[comp] as f64 * h) * ((r2 as f64) * h * h).powf(expo)
                    }
                })
            })
            .collect();
        Ok(Self { convs })
    }

    pub fn apply(&self, f: &GridField) -> Result<VectorGridField> {
        let components = self
            .convs
            .iter()
            .map(|c| c.apply(f))
            .collect::<Result<Vec<_>>>()?;
        VectorGridField::from_components(components)
    }
}

fn check_nonnegative(f: &GridField) -> Result<()> {
    match f.values.iter().find(|&&v| v < 0.0) {
        Some(&v) => Err(Error::NegativeDensity(v)),
        None => Ok(()),
    }
}

/// `I_α f` on the grid of `f`.
pub fn riesz_potential_field(f: &GridField, alpha: f64) -> Result<GridField> {
    check_nonnegative(f)?;
    RieszOperator::new(f.grid, alpha)?.apply(f)
}

/// `I_α f` evaluated on a concentric grid `target` with the same spacing.
pub fn riesz_potential_field_on(f: &GridField, alpha: f64, target: Grid) -> Result<GridField> {
    check_nonnegative(f)?;
    let embedded = f.embed_in(target)?;
    RieszOperator::new(target, alpha)?.apply(&embedded)
}

fn density_on(omega: &Measure, grid: Grid) -> Result<GridField> {
    let f = omega.density_field().expect("density measure");
    if f.grid.matches(&grid) {
        Ok(f.clone())
    } else {
        f.embed_in(grid)
    }
}

/// `I_α(ω)` at every point of `grid`: exact summation for atoms (singular cells get the
/// cell average), kernel convolution for densities.
pub fn riesz_potential_measure(omega: &Measure, alpha: f64, grid: Grid) -> Result<GridField> {
    if omega.dim() != grid.n {
        return Err(Error::GridMismatch("measure and grid dimensions differ".into()));
    }
    let n = grid.n;
    let c = riesz_constant(n, alpha)?;
    match omega.atoms() {
        Some(atoms) => {
            let cell_avg = singular_cell_average(n, alpha, grid.spacing())?;
            let half_h = 0.5 * grid.spacing();
            let expo = (alpha - n as f64) / 2.0;
            let values = (0..grid.len())
                .into_par_iter()
                .map_init(
                    || vec![0.0; n],
                    |x, i| {
                        grid.point_into(i, x);
                        let mut acc = 0.0;
                        for a in atoms {
                            if in_cell(x, &a.x, half_h) {
                                acc += a.w * cell_avg;
                            } else {
                                let r2: f64 =
                                    x.iter().zip(&a.x).map(|(p, q)| (p - q) * (p - q)).sum();
                                acc += a.w * c * r2.powf(expo);
                            }
                        }
                        acc
                    },
                )
                .collect();
            Ok(GridField { grid, values })
        }
        None => RieszOperator::new(grid, alpha)?.apply(&density_on(omega, grid)?),
    }
}

/// `∇I_{2s}(ω)` on `grid`.
pub fn riesz_gradient_measure(omega: &Measure, s: f64, grid: Grid) -> Result<VectorGridField> {
    let n = grid.n;
    if omega.dim() != n {
        return Err(Error::GridMismatch("measure and grid dimensions differ".into()));
    }
    let two_s = 2.0 * s;
    check_alpha(n, two_s)?;
    check_alpha(n, two_s - 1.0)?;
    match omega.atoms() {
        Some(atoms) => {
            let pref = -(n as f64 - two_s) * riesz_constant(n, two_s)?;
            let half_h = 0.5 * grid.spacing();
            let expo = (two_s - n as f64 - 2.0) / 2.0;
            let per_point: Vec<Vec<f64>> = (0..grid.len())
                .into_par_iter()
                .map_init(
                    || vec![0.0; n],
                    |x, i| {
                        grid.point_into(i, x);
                        let mut g = vec![0.0; n];
                        for a in atoms {
                            if in_cell(x, &a.x, half_h) {
                                continue;
                            }
                            let r2: f64 = x.iter().zip(&a.x).map(|(p, q)| (p - q) * (p - q)).sum();
                            let k = a.w * pref * r2.powf(expo);
                            for d in 0..n {
                                g[d] += k * (x[d] - a.x[d]);
                            }
                        }
                        g
                    },
                )
                .collect();
            let components = (0..n)
                .map(|d| GridField {
                    grid,
                    values: per_point.iter().map(|g| g[d]).collect(),
                })
                .collect();
            VectorGridField::from_components(components)
        }
        None => GradientOperator::new(grid, s)?.apply(&density_on(omega, grid)?),
    }
}

/// `h^n Σ |u(x)| / (1 + |x|^{n+2s})`.
pub fn weighted_ls_norm(u: &GridField, s: f64) -> f64 {
    let g = u.grid;
    let e = g.n as f64 + 2.0 * s;
    let sum: f64 = u
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() / (1.0 + g.radius(i).powf(e)))
        .sum();
    sum * g.cell_volume()
}

/// `∫_{R^n \ [-R,R]^n} |y|^{-γ} dy` for `γ > n`.
///
/// Radially, the complement of the cube is `|y| > R/‖θ‖_∞`; mapping the unit sphere onto
/// the cube surface turns the angular integral into `2n ∫_{[-1,1]^{n-1}} (1+|z|²)^{-γ/2} dz`.
pub fn cube_complement_integral(n: usize, half_width: f64, gamma_exp: f64) -> f64 {
    assert!(gamma_exp > n as f64);
    let m = n - 1;
    let face = if m == 0 {
        1.0
    } else {
        let pts: usize = match m {
            1 => 4000,
            2 => 400,
            _ => 40,
        };
        let dz = 2.0 / pts as f64;
        let total = pts.pow(m as u32);
        let mut acc = 0.0;
        let mut idx = vec![0usize; m];
        for flat in 0..total {
            let mut f = flat;
            for d in idx.iter_mut() {
                *d = f % pts;
                f /= pts;
            }
            let z2: f64 = idx
                .iter()
                .map(|&i| {
                    let z = -1.0 + (i as f64 + 0.5) * dz;
                    z * z
                })
                .sum();
            acc += (1.0 + z2).powf(-gamma_exp / 2.0);
        }
        acc * dz.powi(m as i32)
    };
    2.0 * n as f64 * face * half_width.powf(n as f64 - gamma_exp) / (gamma_exp - n as f64)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SemigroupReport {
    pub alpha: f64,
    pub beta: f64,
    /// `‖I_α(I_β f) - I_{α+β} f‖₂ / ‖I_{α+β} f‖₂` on the grid of `f`.
    pub relative_l2: f64,
    /// Constant far-field term added for the part of `I_β f` beyond the enlarged box.
    pub far_field_closure: f64,
    pub extent_factor: usize,
}

/// Compare `I_α(I_β f)` with `I_{α+β} f`.
///
/// `I_β f` decays like `|x|^{β-n}` and is only known on a finite box, so it is evaluated on
/// a concentric grid `extent_factor` times larger. The mass beyond that box is replaced by
/// the monopole `c(n,β) M |y|^{β-n}`; its `I_α` is nearly constant on the original box and
/// equals `c(n,α) c(n,β) M ∫_{outside} |y|^{α+β-2n} dy` to leading order. `f` should be
/// centred at the origin.
pub fn semigroup_discrepancy(
    f: &GridField,
    alpha: f64,
    beta: f64,
    extent_factor: usize,
) -> Result<SemigroupReport> {
    let grid = f.grid;
    let n = grid.n;
    check_alpha(n, alpha + beta)?;
    let big = grid.enlarged(extent_factor.max(1));
    let inner = riesz_potential_field_on(f, beta, big)?;
    let outer = RieszOperator::new(big, alpha)?.apply(&inner)?.restrict_to(grid)?;
    let direct = riesz_potential_field(f, alpha + beta)?;

    let mass = f.integral();
    let gamma_exp = 2.0 * n as f64 - alpha - beta;
    let closure = riesz_constant(n, alpha)?
        * riesz_constant(n, beta)?
        * mass
        * cube_complement_integral(n, big.half_width, gamma_exp);

    let (num, den) = outer
        .values
        .iter()
        .zip(&direct.values)
        .fold((0.0, 0.0), |(a, b), (&o, &d)| {
            let e = o + closure - d;
            (a + e * e, b + d * d)
        });
    Ok(SemigroupReport {
        alpha,
        beta,
        relative_l2: (num / den).sqrt(),
        far_field_closure: closure,
        extent_factor,
    })
}
