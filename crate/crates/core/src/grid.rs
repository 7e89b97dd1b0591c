//! Uniform cell-centred box grids on `[-L, L]^n` and the fields sampled on them.
//!
//! Storage is row-major with the last axis varying fastest. Grid point `i` along an
//! axis sits at the cell centre `-L + (i + 1/2) h` with `h = 2L/N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub points: usize,
}

impl Grid {
    pub fn new(n: usize, half_width: f64, points: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("grid dimension must be positive".into()));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Invalid(format!("half-width {half_width} must be positive")));
        }
        if points == 0 {
            return Err(Error::Invalid("grid needs at least one point per axis".into()));
        }
        points
            .checked_pow(n as u32)
            .ok_or_else(|| Error::Invalid("grid is too large".into()))?;
        Ok(Self { n, half_width, points })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Centre coordinate of index `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// Per-axis indices of flat index `flat`.
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.n);
        for d in (0..self.n).rev() {
            out[d] = flat % self.points;
            flat /= self.points;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points + i)
    }

    /// Coordinates of grid point `flat`, written into `out`.
    pub fn point_into(&self, mut flat: usize, out: &mut [f64]) {
        let h = self.spacing();
        for d in (0..self.n).rev() {
            let i = flat % self.points;
            flat /= self.points;
            out[d] = -self.half_width + (i as f64 + 0.5) * h;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.n];
        self.point_into(flat, &mut p);
        p
    }

    /// Euclidean norm of grid point `flat`.
    pub fn radius(&self, flat: usize) -> f64 {
        let h = self.spacing();
        let mut f = flat;
        let mut r2 = 0.0;
        for _ in 0..self.n {
            let i = f % self.points;
            f /= self.points;
            let x = -self.half_width + (i as f64 + 0.5) * h;
            r2 += x * x;
        }
        r2.sqrt()
    }

    /// Whether two grids carry the same metadata to rounding.
    pub fn matches(&self, other: &Grid) -> bool {
        self.n == other.n
            && self.points == other.points
            && (self.half_width - other.half_width).abs() <= 1e-12 * self.half_width.abs()
    }

    /// Per-axis index offset of `self` inside a concentric grid `outer` with the same spacing.
    pub fn offset_in(&self, outer: &Grid) -> Result<usize> {
        if self.n != outer.n {
            return Err(Error::GridMismatch(format!(
                "dimension {} vs {}",
                self.n, outer.n
            )));
        }
        let (h, ho) = (self.spacing(), outer.spacing());
        if (h - ho).abs() > 1e-12 * h {
            return Err(Error::GridMismatch(format!("spacing {h} vs {ho}")));
        }
        if outer.points < self.points || (outer.points - self.points) % 2 != 0 {
            return Err(Error::GridMismatch(format!(
                "{} points cannot be centred inside {}",
                self.points, outer.points
            )));
        }
        Ok((outer.points - self.points) / 2)
    }

    /// Concentric grid with the same spacing and `factor` times the extent.
    pub fn enlarged(&self, factor: usize) -> Grid {
        Grid {
            n: self.n,
            half_width: self.half_width * factor as f64,
            points: self.points * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Grid) -> Self {
        Self { values: vec![0.0; grid.len()], grid }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite field value {v}")));
        }
        Ok(Self { grid, values })
    }

    /// Sample `f` at every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        use rayon::prelude::*;
        let values = (0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; grid.n],
                |x, i| {
                    grid.point_into(i, x);
                    f(x)
                },
            )
            .collect();
        Self { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `h^n Σ v`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * t).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.grid.matches(&other.grid));
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Copy into the centre of the concentric grid `outer`, zero elsewhere.
    pub fn embed_in(&self, outer: Grid) -> Result<GridField> {
        let off = self.grid.offset_in(&outer)?;
        if off == 0 {
            return Ok(GridField { grid: outer, values: self.values.clone() });
        }
        let mut out = GridField::zeros(outer);
        let mut idx = vec![0usize; self.grid.n];
        for (i, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            self.grid.multi_index(i, &mut idx);
            idx.iter_mut().for_each(|k| *k += off);
            out.values[outer.flat_index(&idx)] = v;
        }
        Ok(out)
    }

    /// Restrict a field on a concentric enlarged grid back onto `inner`.
    pub fn restrict_to(&self, inner: Grid) -> Result<GridField> {
        let off = inner.offset_in(&self.grid)?;
        let mut idx = vec![0usize; inner.n];
        let values = (0..inner.len())
            .map(|i| {
                inner.multi_index(i, &mut idx);
                idx.iter_mut().for_each(|k| *k += off);
                self.values[self.grid.flat_index(&idx)]
            })
            .collect();
        Ok(GridField { grid: inner, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorGridField {
    pub grid: Grid,
    pub components: Vec<GridField>,
}

impl VectorGridField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            components: (0..grid.n).map(|_| GridField::zeros(grid)).collect(),
        }
    }

    pub fn from_components(components: Vec<GridField>) -> Result<Self> {
        let grid = components
            .first()
            .map(|c| c.grid)
            .ok_or_else(|| Error::Invalid("vector field needs components".into()))?;
        if components.len() != grid.n || components.iter().any(|c| !c.grid.matches(&grid)) {
            return Err(Error::GridMismatch(
                "vector components must share one grid and match its dimension".into(),
            ));
        }
        Ok(Self { grid, components })
    }

    /// Pointwise Euclidean norm.
    pub fn magnitude(&self) -> GridField {
        let values = (0..self.grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .map(|c| c.values[i] * c.values[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        GridField { grid: self.grid, values }
    }

    /// Pointwise Euclidean norm of `self - other`, reduced by max.
    pub fn sup_distance(&self, other: &VectorGridField) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .zip(&other.components)
                    .map(|(a, b)| {
                        let d = a.values[i] - b.values[i];
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &VectorGridField) -> VectorGridField {
        VectorGridField {
            grid: self.grid,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.zip_map(b, |x, y| x + y))
                .collect(),
        }
    }
}
