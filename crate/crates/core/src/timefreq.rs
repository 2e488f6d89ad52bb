//! Time series samples, the Fourier frequency grid, unitary DFTs and the
//! periodogram matrix.
//!
//! Coefficients follow `Z~_j = n^{-1/2} sum_{t=1}^n Z_t exp(-i t w_j)` with
//! `w_j = 2 pi j / n` (time index starting at one).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, HpdMatrix};

/// `n` observations of a `d`-variate series, stored row-major (row `t` is
/// the observation at time `t + 1`).
#[derive(Clone, PartialEq)]
pub struct TimeSeries {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InsufficientData("empty time series".into()));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse(format!(
                "non-finite value at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Parse("ragged rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            values: vec![0.0; n * d],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Observation at zero-based row `t`.
    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.d..(t + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(c).step_by(self.d).copied()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            d: self.d,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &TimeSeries, b: f64) -> Self {
        assert_eq!((self.n, self.d), (other.n, other.d));
        Self {
            n: self.n,
            d: self.d,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.d) {
            return Err(Error::InvalidConfig(format!(
                "column {} out of range (series has {} columns)",
                bad + 1,
                self.d
            )));
        }
        let mut values = Vec::with_capacity(self.n * cols.len());
        for t in 0..self.n {
            let row = self.row(t);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Self::new(self.n, cols.len(), values)
    }

    /// First differences `Z_{t+1} - Z_t`.
    pub fn difference(&self) -> Result<Self> {
        if self.n < 2 {
            return Err(Error::InsufficientData(
                "cannot difference fewer than two rows".into(),
            ));
        }
        let mut values = Vec::with_capacity((self.n - 1) * self.d);
        for t in 1..self.n {
            values.extend(self.row(t).iter().zip(self.row(t - 1)).map(|(a, b)| a - b));
        }
        Self::new(self.n - 1, self.d, values)
    }

    /// Per-column mean removal and scaling to unit (n - 1) standard deviation.
    pub fn standardize(&self) -> Result<Self> {
        let mut out = self.values.clone();
        for c in 0..self.d {
            let n = self.n as f64;
            let mean = self.column(c).sum::<f64>() / n;
            let var = self.column(c).map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "column {} is constant and cannot be standardized",
                    c + 1
                )));
            }
            for t in 0..self.n {
                out[t * self.d + c] = (out[t * self.d + c] - mean) / sd;
            }
        }
        Self::new(self.n, self.d, out)
    }

    /// `(1/n) sum_t Z_t Z_t^T` (no centering).
    pub fn second_moment(&self) -> Vec<f64> {
        let d = self.d;
        let mut s = vec![0.0; d * d];
        for t in 0..self.n {
            let r = self.row(t);
            for i in 0..d {
                for j in 0..d {
                    s[i * d + j] += r[i] * r[j];
                }
            }
        }
        s.iter_mut().for_each(|v| *v /= self.n as f64);
        s
    }
}

impl fmt::Debug for TimeSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeSeries")
            .field("n", &self.n)
            .field("d", &self.d)
            .finish_non_exhaustive()
    }
}

/// Fourier frequencies `w_j = 2 pi j / n` for `j = 0..=floor(n/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrequencyGrid {
    n: usize,
}

impl FrequencyGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientData(format!("n = {n} < 2")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of half-grid frequencies, `floor(n/2) + 1`.
    pub fn half_len(&self) -> usize {
        self.n / 2 + 1
    }

    /// Number of interior frequencies entering the Whittle likelihood,
    /// `ceil(n/2) - 1`.
    pub fn interior_count(&self) -> usize {
        self.n.div_ceil(2) - 1
    }

    pub fn omega(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n as f64
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.half_len()).map(|j| self.omega(j)).collect()
    }

    /// `0` always, and `n/2` when `n` is even.
    pub fn is_boundary(&self, j: usize) -> bool {
        j == 0 || (self.n.is_multiple_of(2) && j == self.n / 2)
    }

    /// How many of the `n` full-grid frequencies the half-grid index stands
    /// for under conjugate symmetry.
    pub fn multiplicity(&self, j: usize) -> usize {
        if self.is_boundary(j) {
            1
        } else {
            2
        }
    }
}

/// Fourier coefficients `Z~_j` for `j = 0..n`, each a complex `d`-vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoefficients {
    n: usize,
    d: usize,
    coeffs: Vec<Complex64>,
}

impl FourierCoefficients {
    pub fn new(n: usize, d: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: coeffs.len(),
            });
        }
        Ok(Self { n, d, coeffs })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn coeff(&self, j: usize) -> &[Complex64] {
        &self.coeffs[j * self.d..(j + 1) * self.d]
    }

    /// All coefficients, frequency-major (`coeff(j)[c]` at `j * d + c`).
    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid { n: self.n }
    }

    /// `I(w_j) = (2 pi)^{-1} Z~_j Z~_j^*`.
    pub fn periodogram(&self, j: usize) -> Result<HpdMatrix> {
        let max = self.n / 2;
        if j > max {
            return Err(Error::FrequencyOutOfRange { index: j, max });
        }
        let z = self.coeff(j);
        let m = CMatrix::from_fn(self.d, |a, b| {
            if a == b {
                Complex64::new(z[a].norm_sqr() / (2.0 * PI), 0.0)
            } else {
                z[a] * z[b].conj() / (2.0 * PI)
            }
        });
        Ok(HpdMatrix::from_hermitian(m))
    }
}

/// Cached FFT plans and buffers for one series length.
#[derive(Clone)]
pub struct FourierTransformer {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `exp(-i w_j)` for `j = 0..n`.
    phase: Vec<Complex64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FourierTransformer {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let phase = (0..n)
            .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64))
            .collect();
        Self {
            n,
            forward,
            inverse,
            phase,
            buf: vec![Complex64::default(); n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&mut self, z: &TimeSeries) -> FourierCoefficients {
        assert_eq!(z.len(), self.n);
        let (n, d) = (self.n, z.dim());
        let scale = 1.0 / (n as f64).sqrt();
        let mut coeffs = vec![Complex64::default(); n * d];
        for c in 0..d {
            for (b, v) in self.buf.iter_mut().zip(z.column(c)) {
                *b = Complex64::new(v, 0.0);
            }
            self.forward
                .process_with_scratch(&mut self.buf, &mut self.scratch);
            for j in 0..n {
                coeffs[j * d + c] = self.buf[j] * self.phase[j] * scale;
            }
        }
        FourierCoefficients { n, d, coeffs }
    }

    /// Inverse transform. Returns the real part and the largest discarded
    /// imaginary magnitude.
    pub fn inverse(&mut self, coeffs: &FourierCoefficients) -> (TimeSeries, f64) {
        assert_eq!(coeffs.len(), self.n);
        let d = coeffs.dim();
        let mut out = vec![0.0; self.n * d];
        let max_imag = self.inverse_with(d, |j| coeffs.coeff(j), &mut out);
        (
            TimeSeries {
                n: self.n,
                d,
                values: out,
            },
            max_imag,
        )
    }

    /// Inverse transform of a conjugate-symmetric spectrum given on the half
    /// grid (`floor(n/2) + 1` vectors of length `d`, row-major in `half`).
    /// Writes the real series into `out` and returns the largest discarded
    /// imaginary magnitude.
    pub fn inverse_half_into(&mut self, d: usize, half: &[Complex64], out: &mut [f64]) -> f64 {
        let n = self.n;
        let h = n / 2;
        assert_eq!(half.len(), (h + 1) * d);
        assert_eq!(out.len(), n * d);
        let scale = 1.0 / (n as f64).sqrt();
        let mut max_imag: f64 = 0.0;
        for c in 0..d {
            for j in 0..=h {
                self.buf[j] = half[j * d + c] * self.phase[j].conj();
            }
            for j in (h + 1)..n {
                self.buf[j] = half[(n - j) * d + c].conj() * self.phase[j].conj();
            }
            self.inverse
                .process_with_scratch(&mut self.buf, &mut self.scratch);
            for t in 0..n {
                let v = self.buf[t] * scale;
                out[t * d + c] = v.re;
                max_imag = max_imag.max(v.im.abs());
            }
        }
        max_imag
    }

    fn inverse_with<'a>(
        &mut self,
        d: usize,
        coeff: impl Fn(usize) -> &'a [Complex64],
        out: &mut [f64],
    ) -> f64 {
        let n = self.n;
        let scale = 1.0 / (n as f64).sqrt();
        let mut max_imag: f64 = 0.0;
        for c in 0..d {
            for j in 0..n {
                self.buf[j] = coeff(j)[c] * self.phase[j].conj();
            }
            self.inverse
                .process_with_scratch(&mut self.buf, &mut self.scratch);
            for t in 0..n {
                let v = self.buf[t] * scale;
                out[t * d + c] = v.re;
                max_imag = max_imag.max(v.im.abs());
            }
        }
        max_imag
    }
}

pub fn dft(z: &TimeSeries) -> FourierCoefficients {
    FourierTransformer::new(z.len()).forward(z)
}

/// Inverse DFT, keeping the real part.
pub fn inverse_dft(coeffs: &FourierCoefficients) -> TimeSeries {
    FourierTransformer::new(coeffs.len()).inverse(coeffs).0
}

pub fn periodogram(z: &TimeSeries, j: usize) -> Result<HpdMatrix> {
    let max = z.len() / 2;
    if j > max {
        return Err(Error::FrequencyOutOfRange { index: j, max });
    }
    dft(z).periodogram(j)
}

/// Multiplies the Fourier coefficients by per-frequency blocks `M_j`
/// (given for `j = 0..=floor(n/2)`, extended by `M_{n-j} = conj(M_j)`) and
/// transforms back to the time domain.
pub fn blocked_transform(z: &TimeSeries, blocks: &[CMatrix]) -> Result<TimeSeries> {
    let n = z.len();
    let d = z.dim();
    let grid = FrequencyGrid::new(n)?;
    if blocks.len() != grid.half_len() {
        return Err(Error::DimensionMismatch {
            expected: grid.half_len(),
            got: blocks.len(),
        });
    }
    if let Some(b) = blocks.iter().find(|b| b.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.dim(),
        });
    }
    for (j, b) in blocks.iter().enumerate() {
        if grid.is_boundary(j) {
            let imag = b.max_abs_imag();
            if imag > 1e-12 * b.frobenius_norm().max(1.0) {
                return Err(Error::BoundaryBlockNotReal { index: j, imag });
            }
        }
    }

    let mut tr = FourierTransformer::new(n);
    let coeffs = tr.forward(z);
    let mut half = Vec::with_capacity(grid.half_len() * d);
    for (j, b) in blocks.iter().enumerate() {
        let y = if grid.is_boundary(j) {
            b.real_part().mul_vec(coeffs.coeff(j))
        } else {
            b.mul_vec(coeffs.coeff(j))
        };
        half.extend_from_slice(&y);
    }
    let mut out = vec![0.0; n * d];
    tr.inverse_half_into(d, &half, &mut out);
    TimeSeries::new(n, d, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_series(n: usize, d: usize, rng: &mut impl Rng) -> TimeSeries {
        TimeSeries::new(
            n,
            d,
            (0..n * d).map(|_| rng.sample(StandardNormal)).collect(),
        )
        .unwrap()
    }

    /// O(n^2) direct summation with t = 1..n.
    fn naive_dft(z: &TimeSeries) -> Vec<Complex64> {
        let (n, d) = (z.len(), z.dim());
        let mut out = vec![Complex64::default(); n * d];
        for j in 0..n {
            let w = 2.0 * PI * j as f64 / n as f64;
            for t in 1..=n {
                let e = Complex64::from_polar(1.0, -(t as f64) * w);
                for c in 0..d {
                    out[j * d + c] += e * z.row(t - 1)[c];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= (n as f64).sqrt());
        out
    }

    #[test]
    fn grid_counts() {
        let g = FrequencyGrid::new(8).unwrap();
        assert_eq!(g.half_len(), 5);
        assert_eq!(g.interior_count(), 3);
        assert!(g.is_boundary(0) && g.is_boundary(4) && !g.is_boundary(3));
        let g = FrequencyGrid::new(7).unwrap();
        assert_eq!(g.half_len(), 4);
        assert_eq!(g.interior_count(), 3);
        assert!(!g.is_boundary(3));
        assert!(FrequencyGrid::new(1).is_err());
    }

    #[test]
    fn constant_series_concentrates_at_zero() {
        let z = TimeSeries::new(4, 1, vec![3.0; 4]).unwrap();
        let c = dft(&z);
        assert!((c.coeff(0)[0].norm() - 2.0 * 3.0).abs() < 1e-12);
        for j in 1..4 {
            assert!(c.coeff(j)[0].norm() < 1e-12);
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let z = TimeSeries::new(4, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let c = dft(&z);
        for j in 0..4 {
            assert!((c.coeff(j)[0].norm() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn fft_matches_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &n in &[16, 15, 7, 64] {
            let z = random_series(n, 2, &mut rng);
            let fast = dft(&z);
            let slow = naive_dft(&z);
            let diff = fast
                .coeffs
                .iter()
                .zip(&slow)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
            assert!(diff < 1e-12, "n={n} diff={diff}");
        }
    }

    #[test]
    fn inverse_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_series(33, 3, &mut rng);
        let c = dft(&z);
        let back = inverse_dft(&c);
        let err = z
            .values()
            .iter()
            .zip(back.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10);
        let energy_t: f64 = z.values().iter().map(|v| v * v).sum();
        let energy_f: f64 = c.coeffs.iter().map(|v| v.norm_sqr()).sum();
        assert!((energy_t - energy_f).abs() < 1e-9 * energy_t);
    }

    #[test]
    fn conjugate_symmetry_for_real_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[10, 11] {
            let z = random_series(n, 2, &mut rng);
            let c = dft(&z);
            for j in 1..n {
                for k in 0..2 {
                    let a = c.coeff(n - j)[k];
                    let b = c.coeff(j)[k].conj();
                    assert!((a - b).norm() < 1e-10 * (1.0 + b.norm()));
                }
            }
        }
    }

    #[test]
    fn periodogram_examples() {
        let z = TimeSeries::zeros(8, 2);
        let p = periodogram(&z, 2).unwrap();
        assert_eq!(p.matrix().frobenius_norm(), 0.0);
        assert!(matches!(
            periodogram(&z, 5),
            Err(Error::FrequencyOutOfRange { index: 5, max: 4 })
        ));

        let c = FourierCoefficients::new(2, 1, vec![Complex64::new(1.0, 0.0); 2]).unwrap();
        assert!((c.periodogram(0).unwrap()[(0, 0)].re - 0.159_154_943_091_895_3).abs() < 1e-15);
    }

    #[test]
    fn periodogram_is_rank_one_with_expected_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_series(32, 3, &mut rng);
        let c = dft(&z);
        for j in 0..=16 {
            let p = c.periodogram(j).unwrap();
            let e = crate::linalg::hermitian_eigen(p.matrix()).unwrap();
            let tr = c.coeff(j).iter().map(|v| v.norm_sqr()).sum::<f64>() / (2.0 * PI);
            assert!((p.matrix().trace().re - tr).abs() < 1e-12);
            assert!(e.values[0] > -1e-12 && e.values[1].abs() < 1e-12 * (1.0 + tr));
        }
    }

    #[test]
    fn identity_and_scalar_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &n in &[16, 17] {
            let z = random_series(n, 2, &mut rng);
            let half = n / 2 + 1;
            let same = blocked_transform(&z, &vec![CMatrix::identity(2); half]).unwrap();
            let err = z
                .values()
                .iter()
                .zip(same.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-12);
            let scaled =
                blocked_transform(&z, &vec![CMatrix::identity(2).scale(-2.5); half]).unwrap();
            for (a, b) in z.values().iter().zip(scaled.values()) {
                assert!((-2.5 * a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_boundary_block_is_rejected() {
        let z = TimeSeries::zeros(8, 1);
        let mut blocks = vec![CMatrix::identity(1); 5];
        blocks[4][(0, 0)] = Complex64::new(1.0, 0.5);
        assert!(matches!(
            blocked_transform(&z, &blocks),
            Err(Error::BoundaryBlockNotReal { index: 4, .. })
        ));
        // interior blocks may be complex
        blocks[4] = CMatrix::identity(1);
        blocks[2][(0, 0)] = Complex64::new(1.0, 0.5);
        assert!(blocked_transform(&z, &blocks).is_ok());
    }

    #[test]
    fn preprocessing_helpers() {
        let z =
            TimeSeries::from_rows(&[vec![1.0, 10.0], vec![2.0, 30.0], vec![4.0, 20.0]]).unwrap();
        let dz = z.difference().unwrap();
        assert_eq!(dz.values(), &[1.0, 20.0, 2.0, -10.0]);
        let s = z.standardize().unwrap();
        let mean: f64 = s.column(1).sum::<f64>() / 3.0;
        let var: f64 = s.column(1).map(|v| v * v).sum::<f64>() / 2.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
        assert_eq!(
            z.select_columns(&[1]).unwrap().values(),
            &[10.0, 30.0, 20.0]
        );
        assert!(z.select_columns(&[2]).is_err());
        assert!(TimeSeries::new(1, 1, vec![f64::NAN]).is_err());
    }
}
