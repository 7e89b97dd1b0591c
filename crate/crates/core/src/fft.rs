//! Zero-padded real transforms on row-major cubes and free-space convolution of grid
//! fields with sampled kernels.
//!
//! A field on `N^n` points is embedded in an `(2N)^n` box. The last axis uses a real
//! transform, so the spectrum has shape `(2N)^{n-1} × (N+1)`. Lines that are known to be
//! zero on the way in, or not needed on the way out, are skipped.

use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Plans for the padded `(2N)^n` transform of `N^n` data.
#[derive(Clone)]
pub struct PaddedFft {
    n: usize,
    points: usize,
    m: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PaddedFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PaddedFft").field("n", &self.n).field("points", &self.points).finish()
    }
}

impl PaddedFft {
    pub fn new(n: usize, points: usize) -> Self {
        let m = 2 * points;
        let mut real = RealFftPlanner::<f64>::new();
        let mut cplx = FftPlanner::new();
        Self {
            n,
            points,
            m,
            half: points + 1,
            r2c: real.plan_fft_forward(m),
            c2r: real.plan_fft_inverse(m),
            forward: cplx.plan_fft_forward(m),
            inverse: cplx.plan_fft_inverse(m),
        }
    }

    /// Side of the padded box.
    pub fn side(&self) -> usize {
        self.m
    }

    /// Number of stored spectral coefficients.
    pub fn spectrum_len(&self) -> usize {
        self.m.pow(self.n as u32 - 1) * self.half
    }

    /// Signed frequency index per axis of spectral position `flat`.
    pub fn frequency(&self, mut flat: usize, out: &mut [i64]) {
        out[self.n - 1] = (flat % self.half) as i64;
        flat /= self.half;
        for d in (0..self.n - 1).rev() {
            out[d] = signed_frequency(flat % self.m, self.m);
            flat /= self.m;
        }
    }

    // Whether all of the first `upto` leading indices of line `line` (over the first n-1
    // axes, each of extent m) are below N.
    fn leading_in_range(&self, mut line: usize, axes: usize, upto: usize) -> bool {
        let mut ok = true;
        for d in (0..axes).rev() {
            if d < upto && line % self.m >= self.points {
                ok = false;
            }
            line /= self.m;
        }
        ok
    }

    /// Spectrum of `N^n` data zero-padded to `(2N)^n`.
    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let (n, big_n, m, half) = (self.n, self.points, self.m, self.half);
        assert_eq!(data.len(), big_n.pow(n as u32));
        let mut spec = vec![ZERO; self.spectrum_len()];
        spec.par_chunks_mut(half).enumerate().for_each_init(
            || (vec![0.0; m], self.r2c.make_scratch_vec()),
            |(line, scratch), (li, out)| {
                if !self.leading_in_range(li, n - 1, n - 1) {
                    return;
                }
                // source row: same leading indices in the N^n array
                let mut src = 0;
                let mut rest = li;
                let mut mul = 1;
                for _ in 0..n - 1 {
                    src += (rest % m) * mul;
                    rest /= m;
                    mul *= big_n;
                }
                let start = src * big_n;
                line[..big_n].copy_from_slice(&data[start..start + big_n]);
                line[big_n..].iter_mut().for_each(|v| *v = 0.0);
                self.r2c.process_with_scratch(line, out, scratch).expect("r2c lengths");
            },
        );
        for axis in (0..n - 1).rev() {
            self.complex_axis(&mut spec, axis, &self.forward, axis);
        }
        spec
    }

    /// Full transform of `(2N)^n` real data, no pruning.
    pub fn forward_full(&self, data: &[f64]) -> Vec<Complex64> {
        let (n, m, half) = (self.n, self.m, self.half);
        assert_eq!(data.len(), m.pow(n as u32));
        let mut spec = vec![ZERO; self.spectrum_len()];
        spec.par_chunks_mut(half).zip(data.par_chunks(m)).for_each_init(
            || (vec![0.0; m], self.r2c.make_scratch_vec()),
            |(line, scratch), (out, src)| {
                line.copy_from_slice(src);
                self.r2c.process_with_scratch(line, out, scratch).expect("r2c lengths");
            },
        );
        for axis in (0..n - 1).rev() {
            self.complex_axis(&mut spec, axis, &self.forward, 0);
        }
        spec
    }

    /// Inverse transform restricted to the original `N^n` corner, normalised.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let (n, big_n, m, half) = (self.n, self.points, self.m, self.half);
        for axis in 0..n - 1 {
            self.complex_axis(&mut spec, axis, &self.inverse, axis);
        }
        let scale = 1.0 / (m as f64).powi(n as i32);
        let mut out = vec![0.0; big_n.pow(n as u32)];
        let rows: Vec<(usize, Vec<f64>)> = spec
            .par_chunks_mut(half)
            .enumerate()
            .filter(|(li, _)| self.leading_in_range(*li, n - 1, n - 1))
            .map_init(
                || (vec![0.0; m], self.c2r.make_scratch_vec()),
                |(line, scratch), (li, row)| {
                    // the DC and Nyquist imaginary parts are roundoff here; the transform
                    // treats them as zero and reports it, which is not an error for us
                    let _ = self.c2r.process_with_scratch(row, line, scratch);
                    (li, line[..big_n].iter().map(|v| v * scale).collect())
                },
            )
            .collect();
        for (li, row) in rows {
            let mut dst = 0;
            let mut rest = li;
            let mut mul = 1;
            for _ in 0..n - 1 {
                dst += (rest % m) * mul;
                rest /= m;
                mul *= big_n;
            }
            out[dst * big_n..(dst + 1) * big_n].copy_from_slice(&row);
        }
        out
    }

    // Transform every line along `axis` whose indices on axes before `axis` lie below N
    // when `prune_upto > 0`; lines elsewhere are zero (forward) or unused (inverse).
    fn complex_axis(&self, spec: &mut [Complex64], axis: usize, plan: &Arc<dyn Fft<f64>>, prune_upto: usize) {
        let (n, m, half) = (self.n, self.m, self.half);
        let stride = m.pow((n - 2 - axis) as u32) * half;
        let block = stride * m;
        spec.par_chunks_mut(block).enumerate().for_each_init(
            || (vec![ZERO; m * 8], vec![ZERO; plan.get_inplace_scratch_len()]),
            |(lines, scratch), (outer, blk)| {
                if !self.leading_in_range(outer, axis, prune_upto) {
                    return;
                }
                // eight lines at a time keeps the strided gathers cache friendly
                let mut off = 0;
                while off < stride {
                    let w = (stride - off).min(8);
                    for k in 0..m {
                        let row = &blk[off + k * stride..off + k * stride + w];
                        for (j, v) in row.iter().enumerate() {
                            lines[j * m + k] = *v;
                        }
                    }
                    plan.process_with_scratch(&mut lines[..w * m], scratch);
                    for k in 0..m {
                        let row = &mut blk[off + k * stride..off + k * stride + w];
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = lines[j * m + k];
                        }
                    }
                    off += w;
                }
            },
        );
    }
}

/// Signed wavenumber index for position `k` of an `m`-point transform.
#[inline]
pub fn signed_frequency(k: usize, m: usize) -> i64 {
    if k < m.div_ceil(2) {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionMethod {
    /// Direct summation for small grids, FFT otherwise.
    Auto,
    Direct,
    Fft,
}

/// Grids at or below this many points use direct summation under `Auto`.
pub const DIRECT_MAX_POINTS: usize = 64 * 64;

/// A translation-invariant kernel sampled at integer offsets `-(N-1)..=(N-1)` per axis,
/// ready to convolve fields on one grid.
#[derive(Debug, Clone)]
pub struct Convolver {
    grid: Grid,
    method: ConvolutionMethod,
    // dense table over (2N-1)^n offsets, used by the direct path
    table: Vec<f64>,
    fft: Option<(PaddedFft, Vec<Complex64>)>,
}

impl Convolver {
    /// `weight(offset)` gives the full quadrature weight for `f[j]` contributing to
    /// target `j + offset`.
    pub fn new(grid: Grid, method: ConvolutionMethod, weight: impl Fn(&[i64]) -> f64 + Sync) -> Self {
        let n = grid.n;
        let big_n = grid.points;
        let use_fft = match method {
            ConvolutionMethod::Direct => false,
            ConvolutionMethod::Fft => true,
            ConvolutionMethod::Auto => grid.len() > DIRECT_MAX_POINTS,
        };
        if use_fft {
            let plan = PaddedFft::new(n, big_n);
            let m = plan.side();
            let wrapped: Vec<f64> = (0..m.pow(n as u32))
                .into_par_iter()
                .map_init(
                    || vec![0i64; n],
                    |off, mut flat| {
                        let mut edge = false;
                        for d in (0..n).rev() {
                            let k = flat % m;
                            flat /= m;
                            // offset N is never realised between two points of the grid
                            edge |= k == big_n;
                            off[d] = signed_frequency(k, m);
                        }
                        if edge {
                            0.0
                        } else {
                            weight(off)
                        }
                    },
                )
                .collect();
            let hat = plan.forward_full(&wrapped);
            return Self { grid, method, table: Vec::new(), fft: Some((plan, hat)) };
        }
        let side = 2 * big_n - 1;
        let table = (0..side.pow(n as u32))
            .into_par_iter()
            .map_init(
                || vec![0i64; n],
                |off, mut flat| {
                    for d in (0..n).rev() {
                        off[d] = (flat % side) as i64 - (big_n as i64 - 1);
                        flat /= side;
                    }
                    weight(off)
                },
            )
            .collect();
        Self { grid, method, table, fft: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn method(&self) -> ConvolutionMethod {
        self.method
    }

    pub fn uses_fft(&self) -> bool {
        self.fft.is_some()
    }

    pub fn apply(&self, f: &GridField) -> Result<GridField> {
        if !f.grid.matches(&self.grid) {
            return Err(Error::GridMismatch(format!(
                "field grid {:?} does not match kernel grid {:?}",
                f.grid, self.grid
            )));
        }
        let values = match &self.fft {
            Some((plan, hat)) => {
                let mut spec = plan.forward(&f.values);
                spec.par_iter_mut().zip(hat.par_iter()).for_each(|(s, k)| *s *= k);
                plan.inverse(spec)
            }
            None => self.apply_direct(&f.values),
        };
        Ok(GridField { grid: self.grid, values })
    }

    fn apply_direct(&self, f: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let n = g.n;
        let big_n = g.points;
        let side = 2 * big_n - 1;
        let linear = |idx: &[usize]| idx.iter().fold(0, |acc, &k| acc * side + k);
        // table index of (target - source) is linear(target) + centre - linear(source)
        let centre = linear(&vec![big_n - 1; n]);
        let mut idx = vec![0usize; n];
        let sources: Vec<(usize, f64)> = f
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| {
                g.multi_index(j, &mut idx);
                (linear(&idx), v)
            })
            .collect();
        (0..g.len())
            .into_par_iter()
            .map_init(
                || vec![0usize; n],
                |ti, i| {
                    g.multi_index(i, ti);
                    let base = linear(ti) + centre;
                    sources.iter().map(|&(s, v)| self.table[base - s] * v).sum()
                },
            )
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_padded_dft(data: &[f64], n: usize, big_n: usize) -> Vec<Complex64> {
        // full complex DFT of the zero-padded cube, for n = 2
        assert_eq!(n, 2);
        let m = 2 * big_n;
        let mut out = vec![ZERO; m * m];
        for k1 in 0..m {
            for k2 in 0..m {
                let mut acc = ZERO;
                for j1 in 0..big_n {
                    for j2 in 0..big_n {
                        let ph = -2.0 * std::f64::consts::PI * ((k1 * j1 + k2 * j2) as f64) / m as f64;
                        acc += data[j1 * big_n + j2] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[k1 * m + k2] = acc;
            }
        }
        out
    }

    #[test]
    fn padded_forward_matches_naive_dft() {
        let big_n = 5;
        let plan = PaddedFft::new(2, big_n);
        let data: Vec<f64> = (0..big_n * big_n).map(|i| (i as f64 * 0.37).sin() + 0.2).collect();
        let spec = plan.forward(&data);
        let naive = naive_padded_dft(&data, 2, big_n);
        let m = plan.side();
        for k1 in 0..m {
            for k2 in 0..=big_n {
                let a = spec[k1 * (big_n + 1) + k2];
                assert!((a - naive[k1 * m + k2]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn round_trip_1d_2d_3d() {
        for &(n, big_n) in &[(1usize, 7usize), (2, 6), (3, 4)] {
            let plan = PaddedFft::new(n, big_n);
            let data: Vec<f64> = (0..big_n.pow(n as u32)).map(|i| ((i * i) as f64 * 0.13).cos()).collect();
            let back = plan.inverse(plan.forward(&data));
            for (a, b) in back.iter().zip(&data) {
                assert!((a - b).abs() < 1e-13, "n = {n}");
            }
        }
    }

    #[test]
    fn frequencies_cover_half_spectrum() {
        let plan = PaddedFft::new(2, 4);
        let mut f = [0i64; 2];
        plan.frequency(0, &mut f);
        assert_eq!(f, [0, 0]);
        plan.frequency(plan.spectrum_len() - 1, &mut f);
        assert_eq!(f, [-1, 4]);
    }

    #[test]
    fn direct_and_fft_agree() {
        for &(n, pts) in &[(2usize, 12usize), (3, 6), (1, 9)] {
            let g = Grid::new(n, 1.0, pts).unwrap();
            let w = |o: &[i64]| {
                let r2: i64 = o.iter().enumerate().map(|(d, x)| (d as i64 + 1) * x * x).sum();
                1.0 / (1.0 + r2 as f64) + 0.1 * o[0] as f64
            };
            let f = GridField::from_fn(g, |x| (x[0] * 3.0).cos() + x[n - 1]);
            let a = Convolver::new(g, ConvolutionMethod::Direct, w).apply(&f).unwrap();
            let b = Convolver::new(g, ConvolutionMethod::Fft, w).apply(&f).unwrap();
            let scale = a.sup_norm();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn shifted_delta_moves_kernel() {
        let g = Grid::new(1, 1.0, 8).unwrap();
        let conv = Convolver::new(g, ConvolutionMethod::Fft, |o| (o[0] as f64).powi(2));
        let mut f = GridField::zeros(g);
        f.values[2] = 1.0;
        let out = conv.apply(&f).unwrap();
        for i in 0..8 {
            assert!((out.values[i] - ((i as f64) - 2.0).powi(2)).abs() < 1e-12);
        }
    }
}
