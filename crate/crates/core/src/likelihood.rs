//! Whittle and nonparametrically corrected log-likelihoods.
//!
//! The model spectral density is `f = f_pa^{1/2} Q f_pa^{1/2}`. The corrected
//! likelihood whitens the data's Fourier coefficients with the blocks
//! `C_j^{-1} = f_pa^{1/2}(w_j) f^{-1/2}(w_j)`, transforms back, evaluates the
//! parametric (VAR) conditional likelihood, and adds the Jacobian term
//! `-1/2 sum_j [log det f(w_j) - log det f_pa(w_j)]` over all `n` Fourier
//! frequencies. All constants are dropped so that `Q = I` reproduces the
//! parametric log-likelihood exactly.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hpd_sqrt, jacobi_eigen, roots_2x2, CMatrix, HpdMatrix};
use crate::prior::{
    beta_density, bin_of, ln_beta_norm, spherical_unchecked, AtomSet, BernsteinConfig,
};
use crate::timefreq::{FourierCoefficients, FourierTransformer, FrequencyGrid, TimeSeries};
use crate::var::{
    conditional_loglik_raw, var_spectral_density_on_grid, InnovationFactor, VarParams,
};

/// Relative eigenvalue floor below which a model spectral density counts as
/// degenerate.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// A series together with its cached Fourier coefficients.
#[derive(Clone, Debug)]
pub struct SpectralData {
    z: TimeSeries,
    grid: FrequencyGrid,
    coeffs: FourierCoefficients,
}

impl SpectralData {
    pub fn new(z: TimeSeries) -> Result<Self> {
        let grid = FrequencyGrid::new(z.len())?;
        let coeffs = FourierTransformer::new(z.len()).forward(&z);
        Ok(Self { z, grid, coeffs })
    }

    pub fn series(&self) -> &TimeSeries {
        &self.z
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &FourierCoefficients {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }
}

/// Working-model spectral density on the half grid with its principal square
/// roots and log-determinants.
#[derive(Clone, Debug)]
pub struct WorkingSpectrum {
    params: VarParams,
    factor: InnovationFactor,
    sqrt: Vec<CMatrix>,
    log_det: Vec<f64>,
}

impl WorkingSpectrum {
    pub fn new(params: VarParams, grid: &FrequencyGrid) -> Result<Self> {
        let factor = InnovationFactor::new(params.dim(), params.sigma())?;
        let f = var_spectral_density_on_grid(&params, grid)?;
        let mut sqrt = Vec::with_capacity(f.len());
        let mut log_det = Vec::with_capacity(f.len());
        for (j, fj) in f.iter().enumerate() {
            let m = fj.matrix();
            if m.dim() == 2 {
                let r = roots_2x2(m[(0, 0)].re, m[(0, 1)], m[(1, 1)].re);
                match r {
                    Some(r) if r.min_eigenvalue > DEGENERACY_FLOOR * r.trace => {
                        let mut s = CMatrix::from_row_major(2, &r.sqrt)?;
                        if grid.is_boundary(j) {
                            s = s.real_part();
                        }
                        sqrt.push(s);
                        log_det.push(r.log_det);
                        continue;
                    }
                    _ => {
                        return Err(Error::DegenerateSpectrum {
                            index: j,
                            min_eigenvalue: r.map_or(f64::NAN, |r| r.min_eigenvalue),
                        })
                    }
                }
            }
            let e = jacobi_eigen(m.clone());
            if !(e.min() > DEGENERACY_FLOOR * e.values.iter().sum::<f64>()) {
                return Err(Error::DegenerateSpectrum {
                    index: j,
                    min_eigenvalue: e.min(),
                });
            }
            let mut s = hpd_sqrt(fj)?.into_matrix();
            if grid.is_boundary(j) {
                s = s.real_part();
            }
            sqrt.push(s);
            log_det.push(e.log_det());
        }
        Ok(Self {
            params,
            factor,
            sqrt,
            log_det,
        })
    }

    pub fn params(&self) -> &VarParams {
        &self.params
    }

    /// `f_pa^{1/2}(w_j)`.
    pub fn sqrt(&self, j: usize) -> &CMatrix {
        &self.sqrt[j]
    }

    pub fn log_det(&self, j: usize) -> f64 {
        self.log_det[j]
    }

    pub fn density(&self, j: usize) -> CMatrix {
        &self.sqrt[j] * &self.sqrt[j]
    }
}

/// Beta densities at the (possibly compressed) half-grid arguments, in log
/// form for fast row evaluation.
#[derive(Clone, Debug)]
pub struct BasisTable {
    y: Vec<f64>,
    ln_y: Vec<f64>,
    ln_1my: Vec<f64>,
}

impl BasisTable {
    pub fn new(grid: &FrequencyGrid, cfg: &BernsteinConfig) -> Self {
        let y: Vec<f64> = grid
            .omegas()
            .into_iter()
            .map(|w| cfg.map_argument((w / PI).min(1.0)))
            .collect();
        let ln_y = y.iter().map(|v| v.ln()).collect();
        let ln_1my = y.iter().map(|v| (1.0 - v).ln()).collect();
        Self { y, ln_y, ln_1my }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Values of basis function `bin` of degree `k` at every half-grid
    /// frequency.
    pub fn fill_row(&self, bin: usize, k: usize, out: &mut [f64]) {
        let norm = ln_beta_norm(bin, k);
        let (a, b) = ((bin - 1) as f64, (k - bin) as f64);
        for (j, o) in out.iter_mut().enumerate() {
            let y = self.y[j];
            *o = if y <= 0.0 || y >= 1.0 {
                beta_density(y, bin, k)
            } else {
                (norm + a * self.ln_y[j] + b * self.ln_1my[j]).exp()
            };
        }
    }

    pub fn row(&self, bin: usize, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.fill_row(bin, k, &mut out);
        out
    }
}

/// `Q(w_j)` on the half grid, accumulated atom by atom.
pub fn correction_field(atoms: &AtomSet, k: usize, table: &BasisTable) -> Vec<CMatrix> {
    let d = atoms.dim();
    let mut q = vec![CMatrix::zeros(d); table.len()];
    let mut row = vec![0.0; table.len()];
    for atom in atoms.atoms() {
        table.fill_row(bin_of(atom.x, k), k, &mut row);
        let u = spherical_unchecked(&atom.phi, d);
        for (qj, &b) in q.iter_mut().zip(&row) {
            qj.add_scaled(atom.r * b, &u);
        }
    }
    q
}

/// Working model, atoms and Bernstein degree on a frequency grid.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    pub working: VarParams,
    pub atoms: AtomSet,
    pub k: usize,
    pub grid: FrequencyGrid,
    pub cfg: BernsteinConfig,
}

impl SpectralModel {
    pub fn correction(&self) -> Vec<CMatrix> {
        correction_field(&self.atoms, self.k, &BasisTable::new(&self.grid, &self.cfg))
    }
}

/// `f_pa^{1/2} Q f_pa^{1/2}` (real part at boundary indices) and its
/// eigendecomposition; `None` when degenerate or non-finite.
#[inline]
fn compose(
    s: &CMatrix,
    q: &CMatrix,
    boundary: bool,
) -> Option<(CMatrix, crate::linalg::HermitianEigen)> {
    let f = &(s * q) * s;
    let f = if boundary {
        f.real_part()
    } else {
        f.hermitian_part()
    };
    if !f.is_finite() {
        return None;
    }
    let e = jacobi_eigen(f.clone());
    let trace: f64 = e.values.iter().sum();
    if !(e.min() >= DEGENERACY_FLOOR * trace) || !(trace > 0.0) {
        return None;
    }
    Some((f, e))
}

fn whiten_1(s: &CMatrix, q: &CMatrix, z: &[Complex64], out: &mut [Complex64]) -> Option<f64> {
    let sv = s[(0, 0)].re;
    let f = sv * q[(0, 0)].re * sv;
    if !(f > 0.0 && f.is_finite()) {
        return None;
    }
    out[0] = z[0] * (sv / f.sqrt());
    Some(f.ln())
}

#[inline]
fn mul2(x: &[Complex64], y: &[Complex64]) -> [Complex64; 4] {
    [
        x[0] * y[0] + x[1] * y[2],
        x[0] * y[1] + x[1] * y[3],
        x[2] * y[0] + x[3] * y[2],
        x[2] * y[1] + x[3] * y[3],
    ]
}

fn whiten_2(
    s: &CMatrix,
    q: &CMatrix,
    boundary: bool,
    z: &[Complex64],
    out: &mut [Complex64],
) -> Option<f64> {
    let sv = s.as_slice();
    let f = mul2(&mul2(sv, q.as_slice()), sv);
    let mut b = 0.5 * (f[1] + f[2].conj());
    if boundary {
        b.im = 0.0;
    }
    let r = roots_2x2(f[0].re, b, f[3].re)?;
    if !(r.min_eigenvalue >= DEGENERACY_FLOOR * r.trace) {
        return None;
    }
    let w0 = r.inv_sqrt[0] * z[0] + r.inv_sqrt[1] * z[1];
    let w1 = r.inv_sqrt[2] * z[0] + r.inv_sqrt[3] * z[1];
    out[0] = sv[0] * w0 + sv[1] * w1;
    out[1] = sv[2] * w0 + sv[3] * w1;
    Some(r.log_det)
}

fn whiten_general(
    s: &CMatrix,
    q: &CMatrix,
    boundary: bool,
    z: &[Complex64],
    out: &mut [Complex64],
) -> Option<f64> {
    let (_, e) = compose(s, q, boundary)?;
    let c_inv = s * &e.map(|l| 1.0 / l.sqrt());
    out.copy_from_slice(&c_inv.mul_vec(z));
    Some(e.log_det())
}

/// Model spectral density at half-grid index `j`.
pub fn model_spectral_density(m: &SpectralModel, j: usize) -> Result<HpdMatrix> {
    if j >= m.grid.half_len() {
        return Err(Error::FrequencyOutOfRange {
            index: j,
            max: m.grid.half_len() - 1,
        });
    }
    let ws = WorkingSpectrum::new(m.working.clone(), &m.grid)?;
    let q = m.correction();
    match compose(ws.sqrt(j), &q[j], m.grid.is_boundary(j)) {
        Some((f, _)) => Ok(HpdMatrix::from_hermitian(f)),
        None => Err(Error::DegenerateSpectrum {
            index: j,
            min_eigenvalue: jacobi_eigen((&(ws.sqrt(j) * &q[j]) * ws.sqrt(j)).hermitian_part())
                .min(),
        }),
    }
}

/// Whittle log-likelihood over the interior frequencies `1..=N`, `N =
/// ceil(n/2) - 1`; `f` is indexed by half-grid frequency. `-inf` if any
/// `f(w_j)` is singular.
pub fn whittle_loglik(coeffs: &FourierCoefficients, f: &[HpdMatrix]) -> Result<f64> {
    let grid = coeffs.grid();
    let d = coeffs.dim();
    let n_int = grid.interior_count();
    if f.len() <= n_int {
        return Err(Error::DimensionMismatch {
            expected: n_int + 1,
            got: f.len(),
        });
    }
    let mut ll = 0.0;
    for j in 1..=n_int {
        if f[j].dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f[j].dim(),
            });
        }
        let e = jacobi_eigen(f[j].matrix().clone());
        if !(e.min() > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let z = coeffs.coeff(j);
        let mut quad = 0.0;
        for (k, &lambda) in e.values.iter().enumerate() {
            let mut proj = Complex64::default();
            for (i, zi) in z.iter().enumerate() {
                proj += e.vectors[(i, k)].conj() * zi;
            }
            quad += proj.norm_sqr() / lambda;
        }
        ll +=
            -(d as f64) * PI.ln() - (d as f64 * (2.0 * PI).ln() + e.log_det()) - quad / (2.0 * PI);
    }
    Ok(ll)
}

/// Reusable buffers for repeated corrected-likelihood evaluations on one
/// dataset.
#[derive(Clone)]
pub struct CorrectedEvaluator {
    transformer: FourierTransformer,
    half: Vec<Complex64>,
    series: Vec<f64>,
}

impl CorrectedEvaluator {
    pub fn new(data: &SpectralData) -> Self {
        let n = data.z.len();
        let d = data.dim();
        Self {
            transformer: FourierTransformer::new(n),
            half: vec![Complex64::default(); data.grid.half_len() * d],
            series: vec![0.0; n * d],
        }
    }

    /// Writes `C_j^{-1} Z~_j` into the half-spectrum buffer and returns the
    /// Jacobian term, or `None` if some `f(w_j)` is degenerate.
    fn whiten(&mut self, data: &SpectralData, ws: &WorkingSpectrum, q: &[CMatrix]) -> Option<f64> {
        let d = data.dim();
        let grid = data.grid;
        let mut det = 0.0;
        for j in 0..grid.half_len() {
            let boundary = grid.is_boundary(j);
            let s = ws.sqrt(j);
            let z = data.coeffs.coeff(j);
            let out = &mut self.half[j * d..(j + 1) * d];
            let log_det = match d {
                1 => whiten_1(s, &q[j], z, out)?,
                2 => whiten_2(s, &q[j], boundary, z, out)?,
                _ => whiten_general(s, &q[j], boundary, z, out)?,
            };
            if boundary {
                out.iter_mut().for_each(|v| v.im = 0.0);
            }
            det += grid.multiplicity(j) as f64 * (log_det - ws.log_det(j));
        }
        Some(-0.5 * det)
    }

    /// Corrected log-likelihood for correction matrices `q` (half grid).
    /// Degenerate or non-finite evaluations give `-inf`.
    pub fn loglik(&mut self, data: &SpectralData, ws: &WorkingSpectrum, q: &[CMatrix]) -> f64 {
        let Some(det) = self.whiten(data, ws, q) else {
            return f64::NEG_INFINITY;
        };
        let d = data.dim();
        self.transformer
            .inverse_half_into(d, &self.half, &mut self.series);
        let p = ws.params.order();
        let ll = conditional_loglik_raw(&self.series, d, p, ws.params.coeffs_flat(), &ws.factor, p);
        let total = det + ll;
        if total.is_finite() {
            total
        } else {
            f64::NEG_INFINITY
        }
    }

    /// The whitened series `F* C^{-1} F Z` and the largest discarded imaginary
    /// magnitude of the back transform.
    pub fn whitened_series(
        &mut self,
        data: &SpectralData,
        ws: &WorkingSpectrum,
        q: &[CMatrix],
    ) -> Result<(TimeSeries, f64)> {
        if self.whiten(data, ws, q).is_none() {
            return Err(Error::DegenerateSpectrum {
                index: 0,
                min_eigenvalue: 0.0,
            });
        }
        let d = data.dim();
        let imag = self
            .transformer
            .inverse_half_into(d, &self.half, &mut self.series);
        Ok((TimeSeries::new(data.z.len(), d, self.series.clone())?, imag))
    }
}

fn check_model(data: &SpectralData, m: &SpectralModel) -> Result<()> {
    if m.grid != data.grid {
        return Err(Error::GridMismatch);
    }
    if m.working.dim() != data.dim() || m.atoms.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: m.working.dim(),
        });
    }
    if m.k == 0 || m.k > m.cfg.k_max() {
        return Err(Error::InvalidConfig(format!(
            "Bernstein degree {} outside 1..={}",
            m.k,
            m.cfg.k_max()
        )));
    }
    Ok(())
}

/// Corrected log-likelihood of the model; `-inf` for degenerate spectra or a
/// working model without a valid spectral density.
pub fn corrected_loglik(data: &SpectralData, m: &SpectralModel) -> Result<f64> {
    check_model(data, m)?;
    let ws = match WorkingSpectrum::new(m.working.clone(), &m.grid) {
        Ok(ws) => ws,
        Err(e) if matches!(e.kind(), crate::ErrorKind::Numerical) => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    Ok(CorrectedEvaluator::new(data).loglik(data, &ws, &m.correction()))
}

/// Corrected log-likelihood with an explicit correction field `q` (half grid).
pub fn corrected_loglik_with_q(
    data: &SpectralData,
    working: &VarParams,
    q: &[CMatrix],
) -> Result<f64> {
    if q.len() != data.grid.half_len() {
        return Err(Error::DimensionMismatch {
            expected: data.grid.half_len(),
            got: q.len(),
        });
    }
    let ws = WorkingSpectrum::new(working.clone(), &data.grid)?;
    Ok(CorrectedEvaluator::new(data).loglik(data, &ws, q))
}
