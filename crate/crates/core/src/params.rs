//! Problem parameters `(n, s, q)` for `(-Δ)^s u = |∇u|^q + ω` in the super-critical regime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub n: usize,
    pub s: f64,
    pub q: f64,
    /// Conjugate exponent `q/(q-1)`.
    pub p: f64,
    /// Critical exponent `n/(n-2s+1)`.
    pub p_star: f64,
}

impl Parameters {
    pub fn new(n: usize, s: f64, q: f64) -> Result<Self> {
        if !(s > 0.5 && s < 1.0) {
            return Err(Error::OrderOutOfRange(s));
        }
        if (n as f64) <= 2.0 * s {
            return Err(Error::DimensionTooLow { n, two_s: 2.0 * s });
        }
        let nf = n as f64;
        let p_star = nf / (nf - 2.0 * s + 1.0);
        if !(q > p_star) || !q.is_finite() {
            return Err(Error::SubcriticalExponent { q, p_star });
        }
        let p = q / (q - 1.0);
        Ok(Self { n, s, q, p, p_star })
    }

    /// `2s`, the order of the potential that inverts the operator.
    pub fn two_s(&self) -> f64 {
        2.0 * self.s
    }

    /// `2s - 1`, the order of the potential that controls the gradient.
    pub fn grad_order(&self) -> f64 {
        2.0 * self.s - 1.0
    }
}

pub fn validate_parameters(n: usize, s: f64, q: f64) -> Result<Parameters> {
    Parameters::new(n, s, q)
}
