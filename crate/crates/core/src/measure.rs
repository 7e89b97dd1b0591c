//! Compactly supported nonnegative measures: finite atom lists or piecewise-constant
//! densities on a grid.

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub x: Vec<f64>,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Atomic,
    Density,
    UniformBall,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Atoms(Vec<Atom>),
    Density(GridField),
}

/// A nonnegative Radon measure with `supp ω ⊂ B_R` (open ball about the origin).
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    kind: MeasureKind,
    dim: usize,
    repr: Repr,
    support_radius: f64,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// Smallest representable radius whose open ball strictly contains radius `r`.
fn strict_radius(r: f64) -> f64 {
    r + r * 1e-12 + 1e-300
}

impl Measure {
    pub fn atomic(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let mut extent = 0.0_f64;
        for a in &atoms {
            if a.x.len() != dim {
                return Err(Error::Invalid(format!(
                    "atom at {:?} does not have dimension {dim}",
                    a.x
                )));
            }
            if !(a.w >= 0.0) || !a.w.is_finite() {
                return Err(Error::Invalid(format!("atom weight {} must be nonnegative", a.w)));
            }
            if a.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("atom coordinates must be finite".into()));
            }
            extent = extent.max(norm(&a.x));
        }
        Ok(Self {
            kind: MeasureKind::Atomic,
            dim,
            repr: Repr::Atoms(atoms),
            support_radius: strict_radius(extent),
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            kind: MeasureKind::Atomic,
            dim,
            repr: Repr::Atoms(Vec::new()),
            support_radius: 0.0,
        }
    }

    pub fn unit_atom(x: Vec<f64>) -> Self {
        let dim = x.len();
        Self::atomic(dim, vec![Atom { x, w: 1.0 }]).expect("finite unit atom")
    }

    /// Piecewise-constant density; negative cells are rejected.
    pub fn density(field: GridField) -> Result<Self> {
        let mut extent = 0.0_f64;
        for (i, &v) in field.values.iter().enumerate() {
            if v < 0.0 {
                return Err(Error::NegativeDensity(v));
            }
            if v > 0.0 {
                extent = extent.max(field.grid.radius(i));
            }
        }
        Ok(Self {
            kind: MeasureKind::Density,
            dim: field.grid.n,
            support_radius: strict_radius(extent),
            repr: Repr::Density(field),
        })
    }

    /// Constant `value` on the cells whose centres lie in `B_radius(center)`.
    pub fn uniform_ball(grid: Grid, center: &[f64], radius: f64, value: f64) -> Result<Self> {
        if center.len() != grid.n {
            return Err(Error::Invalid("ball centre has the wrong dimension".into()));
        }
        if !(radius > 0.0) || !(value >= 0.0) {
            return Err(Error::Invalid("ball radius must be positive and value nonnegative".into()));
        }
        let field = GridField::from_fn(grid, |x| {
            let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() < radius {
                value
            } else {
                0.0
            }
        });
        // the ball itself, not just the centres it caught
        let mut m = Self::density(field)?.with_support_radius(norm(center) + radius)?;
        m.kind = MeasureKind::UniformBall;
        Ok(m)
    }

    /// Override the support radius; it must contain the data.
    pub fn with_support_radius(mut self, r: f64) -> Result<Self> {
        if r + 1e-12 * r < self.support_radius {
            return Err(Error::Invalid(format!(
                "support radius {r} does not contain the measure (needs {})",
                self.support_radius
            )));
        }
        self.support_radius = r.max(self.support_radius);
        Ok(self)
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.repr {
            Repr::Atoms(a) => Some(a),
            Repr::Density(_) => None,
        }
    }

    pub fn density_field(&self) -> Option<&GridField> {
        match &self.repr {
            Repr::Density(f) => Some(f),
            Repr::Atoms(_) => None,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.repr {
            Repr::Atoms(a) => a.iter().map(|a| a.w).sum(),
            Repr::Density(f) => f.integral(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.total_mass() == 0.0
    }

    /// `ω(B_r(x0))` with the open ball `|x - x0| < r`.
    pub fn ball_mass(&self, x0: &[f64], r: f64) -> f64 {
        let inside = |x: &[f64]| {
            let d2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() < r
        };
        match &self.repr {
            Repr::Atoms(a) => a.iter().filter(|a| inside(&a.x)).map(|a| a.w).sum(),
            Repr::Density(f) => {
                let mut x = vec![0.0; f.grid.n];
                let mut s = 0.0;
                for (i, &v) in f.values.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    f.grid.point_into(i, &mut x);
                    if inside(&x) {
                        s += v;
                    }
                }
                s * f.grid.cell_volume()
            }
        }
    }

    /// Mass-weighted centre, or the origin for the zero measure.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        let m = self.total_mass();
        if m == 0.0 {
            return c;
        }
        match &self.repr {
            Repr::Atoms(a) => {
                for atom in a {
                    c.iter_mut().zip(&atom.x).for_each(|(ci, xi)| *ci += atom.w * xi);
                }
                c.iter_mut().for_each(|ci| *ci /= m);
            }
            Repr::Density(f) => {
                let mut x = vec![0.0; f.grid.n];
                for (i, &v) in f.values.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    f.grid.point_into(i, &mut x);
                    c.iter_mut().zip(&x).for_each(|(ci, xi)| *ci += v * xi);
                }
                let h = f.grid.cell_volume();
                c.iter_mut().for_each(|ci| *ci *= h / m);
            }
        }
        c
    }

    pub fn scaled(&self, t: f64) -> Self {
        assert!(t >= 0.0, "measures may only be scaled by t >= 0");
        let repr = match &self.repr {
            Repr::Atoms(a) => Repr::Atoms(
                a.iter()
                    .map(|a| Atom { x: a.x.clone(), w: a.w * t })
                    .collect(),
            ),
            Repr::Density(f) => Repr::Density(f.scaled(t)),
        };
        Self { repr, ..self.clone() }
    }

    /// Sum with another atomic measure (atom lists are concatenated).
    pub fn plus(&self, other: &Measure) -> Result<Measure> {
        match (&self.repr, &other.repr) {
            (Repr::Atoms(a), Repr::Atoms(b)) => {
                Measure::atomic(self.dim, a.iter().chain(b).cloned().collect())
            }
            (Repr::Density(a), Repr::Density(b)) if a.grid.matches(&b.grid) => {
                Measure::density(a.zip_map(b, |x, y| x + y))
            }
            _ => Err(Error::Invalid("can only add measures of the same representation".into())),
        }
    }

    /// `∫ φ dω`.
    pub fn integrate(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        match &self.repr {
            Repr::Atoms(a) => a.iter().map(|a| a.w * phi(&a.x)).sum(),
            Repr::Density(f) => {
                let mut x = vec![0.0; f.grid.n];
                let mut s = 0.0;
                for (i, &v) in f.values.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    f.grid.point_into(i, &mut x);
                    s += v * phi(&x);
                }
                s * f.grid.cell_volume()
            }
        }
    }
}

pub fn measure_ball_mass(omega: &Measure, x0: &[f64], r: f64) -> f64 {
    omega.ball_mass(x0, r)
}

pub fn total_mass(omega: &Measure) -> f64 {
    omega.total_mass()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn atom_ball_mass() {
        let w = Measure::unit_atom(vec![0.0, 0.0]);
        assert_eq!(w.ball_mass(&[0.0, 0.0], 0.1), 1.0);
        assert_eq!(w.ball_mass(&[5.0, 0.0], 1.0), 0.0);
    }

    #[test]
    fn atomic_total_mass() {
        let w = Measure::atomic(
            2,
            vec![
                Atom { x: vec![0.0, 0.0], w: 2.0 },
                Atom { x: vec![1.0, 0.0], w: 3.0 },
            ],
        )
        .unwrap();
        assert_eq!(w.total_mass(), 5.0);
        assert_eq!(Measure::zero(2).total_mass(), 0.0);
    }

    #[test]
    fn uniform_disk_masses_converge_at_first_order() {
        for &pts in &[128usize, 256] {
            let g = Grid::new(2, 2.0, pts).unwrap();
            let h = g.spacing();
            let w = Measure::uniform_ball(g, &[0.0, 0.0], 1.0, 1.0).unwrap();
            // boundary cells contribute O(h) relative error
            assert!((w.total_mass() - PI).abs() < 4.0 * h * PI);
            let half = w.ball_mass(&[0.0, 0.0], 0.5);
            assert!((half - 0.25 * PI).abs() < 4.0 * h * PI * 0.5);
        }
    }

    #[test]
    fn negative_density_rejected() {
        let g = Grid::new(2, 1.0, 4).unwrap();
        let mut f = GridField::zeros(g);
        f.values[3] = -1.0;
        assert!(matches!(Measure::density(f), Err(Error::NegativeDensity(_))));
    }

    #[test]
    fn support_radius_override_must_contain() {
        let w = Measure::unit_atom(vec![3.0, 4.0]);
        assert!(w.clone().with_support_radius(4.0).is_err());
        assert_eq!(w.with_support_radius(6.0).unwrap().support_radius(), 6.0);
    }

    fn atoms_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 0.0..5.0f64), 0..8)
    }

    proptest! {
        #[test]
        fn ball_mass_monotone_and_exhausting(atoms in atoms_strategy(),
                                             cx in -2.0..2.0f64, cy in -2.0..2.0f64,
                                             r1 in 0.0..6.0f64, dr in 0.0..3.0f64) {
            let w = Measure::atomic(2, atoms.iter().map(|&(x, y, w)| Atom { x: vec![x, y], w }).collect()).unwrap();
            let x0 = [cx, cy];
            prop_assert!(w.ball_mass(&x0, r1) <= w.ball_mass(&x0, r1 + dr));
            let exhaust = w.support_radius() + (cx * cx + cy * cy).sqrt();
            prop_assert_eq!(w.ball_mass(&x0, exhaust), w.total_mass());
        }
    }
}
