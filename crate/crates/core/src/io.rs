//! Field files, measure descriptions and cell masks.
//!
//! A field is stored as raw little-endian `f64` values in row-major order, next to a JSON
//! sidecar `<path>.json` holding `{"n", "N", "L"}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capacity::CellMask;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::measure::{Atom, Measure, MeasureKind};

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_field(path: &Path, field: &GridField) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * field.values.len());
    for v in &field.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(sidecar_path(path), serde_json::to_vec(&field.grid)?)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let g: Grid = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    Grid::new(g.n, g.half_width, g.points)
}

pub fn read_field(path: &Path) -> Result<GridField> {
    let grid = read_grid(path)?;
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} holds {} bytes, expected {} for {:?}",
            path.display(),
            bytes.len(),
            8 * grid.len(),
            grid
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    GridField::from_values(grid, values)
}

/// One row per point: indices, centre coordinates, value.
pub fn write_csv(path: &Path, field: &GridField) -> Result<()> {
    let g = field.grid;
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let idx_cols: Vec<String> = (0..g.n).map(|d| format!("i{d}")).collect();
    let x_cols: Vec<String> = (0..g.n).map(|d| format!("x{d}")).collect();
    writeln!(out, "{},{},value", idx_cols.join(","), x_cols.join(","))?;
    let mut idx = vec![0usize; g.n];
    let mut x = vec![0.0; g.n];
    for (i, v) in field.values.iter().enumerate() {
        g.multi_index(i, &mut idx);
        g.point_into(i, &mut x);
        let is: Vec<String> = idx.iter().map(|k| k.to_string()).collect();
        let xs: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        writeln!(out, "{},{},{}", is.join(","), xs.join(","), v)?;
    }
    out.flush()?;
    Ok(())
}

/// `(|x|, value)` rows for grid points with `inner <= |x| <= outer`.
pub fn write_radial_csv(path: &Path, field: &GridField, inner: f64, outer: f64) -> Result<()> {
    let g = field.grid;
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "r,value")?;
    for (i, v) in field.values.iter().enumerate() {
        let r = g.radius(i);
        if r >= inner && r <= outer {
            writeln!(out, "{r},{v}")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub x: Vec<f64>,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<BallSpec>,
    /// Height of a uniform ball (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl MeasureSpec {
    /// Build the measure; gridded kinds are rasterised on `grid`. Relative density paths
    /// resolve against `base`.
    pub fn build(&self, grid: Grid, base: &Path) -> Result<Measure> {
        let m = match self.kind {
            MeasureKind::Atomic => {
                let atoms = self
                    .atoms
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("atomic measure needs \"atoms\"".into()))?;
                Measure::atomic(
                    grid.n,
                    atoms.iter().map(|a| Atom { x: a.x.clone(), w: a.w }).collect(),
                )?
            }
            MeasureKind::Density => {
                let file = self
                    .density_file
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("density measure needs \"density_file\"".into()))?;
                let field = read_field(&base.join(file))?;
                let field = if field.grid.matches(&grid) { field } else { field.embed_in(grid)? };
                Measure::density(field)?
            }
            MeasureKind::UniformBall => {
                let b = self
                    .ball
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("uniform_ball measure needs \"ball\"".into()))?;
                Measure::uniform_ball(grid, &b.center, b.radius, self.value.unwrap_or(1.0))?
            }
        };
        match self.support_radius {
            Some(r) => m.with_support_radius(r),
            None => Ok(m),
        }
    }
}

pub fn read_measure_spec(path: &Path) -> Result<MeasureSpec> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    Cells(Vec<Vec<usize>>),
    Ball { ball: BallSpec },
}

impl MaskSpec {
    pub fn build(&self, grid: Grid) -> Result<CellMask> {
        match self {
            MaskSpec::Cells(idx) => CellMask::from_indices(grid, idx),
            MaskSpec::Ball { ball } => {
                if ball.center.len() != grid.n {
                    return Err(Error::Invalid("ball centre has the wrong dimension".into()));
                }
                Ok(CellMask::ball(grid, &ball.center, ball.radius))
            }
        }
    }
}

pub fn read_mask_spec(path: &Path) -> Result<MaskSpec> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
