//! Potential-theoretic toolkit for `(-Δ)^s u = |∇u|^q + ω` on `R^n` with a nonnegative,
//! compactly supported measure `ω`, in the regime `1/2 < s < 1`, `n > 2s`, `q > n/(n-2s+1)`.
//!
//! Solutions are built as fixed points of `u = I_{2s}(|∇u|^q) + I_{2s}(ω)` by Picard
//! iteration, with the admissibility of `ω` measured through the pointwise inequality
//! `I_{2s-1}([I_{2s-1} ω]^q) <= C_1 I_{2s-1} ω`.

pub mod capacity;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod fraclap;
pub mod gamma;
pub mod grid;
pub mod io;
pub mod measure;
pub mod params;
pub mod riesz;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Grid, GridField, VectorGridField};
pub use measure::{Atom, Measure, MeasureKind};
pub use params::{validate_parameters, Parameters};
