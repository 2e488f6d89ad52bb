//! Vector autoregressive working model: least squares, conditional Gaussian
//! likelihood, transfer-function spectral density, simulation and the
//! order-selection table.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{general_inverse, CMatrix, HpdMatrix};
use crate::timefreq::{FrequencyGrid, TimeSeries};

const BURN_IN: usize = 1000;

/// `Z_t = sum_j B_j Z_{t-j} + e_t`, `e_t ~ N(0, Sigma)`.
///
/// Coefficients are stored lag-major (`B_1`, then `B_2`, ...), each matrix
/// row-major. [`VarParams::to_beta`] gives the stacked vector layout used by
/// the coefficient prior and the sampler.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarParams {
    order: usize,
    dim: usize,
    coeffs: Vec<f64>,
    sigma: Vec<f64>,
}

impl VarParams {
    pub fn new(dim: usize, coeffs: Vec<Vec<f64>>, sigma: Vec<f64>) -> Result<Self> {
        let order = coeffs.len();
        if let Some(b) = coeffs.iter().find(|b| b.len() != dim * dim) {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: b.len(),
            });
        }
        Self::from_flat(dim, order, coeffs.concat(), sigma)
    }

    pub fn from_flat(dim: usize, order: usize, coeffs: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if coeffs.len() != order * dim * dim {
            return Err(Error::DimensionMismatch {
                expected: order * dim * dim,
                got: coeffs.len(),
            });
        }
        if sigma.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: sigma.len(),
            });
        }
        Ok(Self {
            order,
            dim,
            coeffs,
            sigma: symmetrize(dim, sigma),
        })
    }

    pub fn white_noise(sigma: Vec<f64>) -> Result<Self> {
        let dim = (sigma.len() as f64).sqrt().round() as usize;
        Self::from_flat(dim, 0, Vec::new(), sigma)
    }

    /// Rebuilds coefficients from the stacked vector
    /// `(B_{1,1,.}, B_{2,1,.}, ..., B_{p,1,.}, B_{1,2,.}, ..., B_{p,d,.})`.
    pub fn from_beta(dim: usize, order: usize, beta: &[f64], sigma: Vec<f64>) -> Result<Self> {
        if beta.len() != order * dim * dim {
            return Err(Error::DimensionMismatch {
                expected: order * dim * dim,
                got: beta.len(),
            });
        }
        let mut coeffs = vec![0.0; beta.len()];
        for i in 0..dim {
            for j in 0..order {
                for c in 0..dim {
                    coeffs[j * dim * dim + i * dim + c] = beta[beta_index(dim, order, j, i, c)];
                }
            }
        }
        Self::from_flat(dim, order, coeffs, sigma)
    }

    pub fn to_beta(&self) -> Vec<f64> {
        let (d, p) = (self.dim, self.order);
        let mut beta = vec![0.0; p * d * d];
        for j in 0..p {
            for i in 0..d {
                for c in 0..d {
                    beta[beta_index(d, p, j, i, c)] = self.coeffs[j * d * d + i * d + c];
                }
            }
        }
        beta
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `B_{lag}` (lag counted from one), row-major.
    pub fn coefficient(&self, lag: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.coeffs[(lag - 1) * dd..lag * dd]
    }

    pub fn coeffs_flat(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Spectral radius of the companion matrix (0 for white noise).
    pub fn companion_spectral_radius(&self) -> f64 {
        self.companion_eigen_moduli()
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn companion_eigen_moduli(&self) -> Vec<f64> {
        let (d, p) = (self.dim, self.order);
        if p == 0 {
            return Vec::new();
        }
        let m = d * p;
        let mut comp = DMatrix::<f64>::zeros(m, m);
        for j in 0..p {
            let b = self.coefficient(j + 1);
            for r in 0..d {
                for c in 0..d {
                    comp[(r, j * d + c)] = b[r * d + c];
                }
            }
        }
        for r in d..m {
            comp[(r, r - d)] = 1.0;
        }
        comp.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect()
    }
}

/// Position of `B_{lag+1}[row][col]` in the stacked coefficient vector.
#[inline]
pub fn beta_index(dim: usize, order: usize, lag: usize, row: usize, col: usize) -> usize {
    (row * order + lag) * dim + col
}

/// Indices of the stacked vector belonging to `B_{lag+1}`.
pub fn beta_block(dim: usize, order: usize, lag: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(dim * dim);
    for r in 0..dim {
        for c in 0..dim {
            idx.push(beta_index(dim, order, lag, r, c));
        }
    }
    idx
}

fn symmetrize(dim: usize, mut s: Vec<f64>) -> Vec<f64> {
    for i in 0..dim {
        for j in (i + 1)..dim {
            let m = 0.5 * (s[i * dim + j] + s[j * dim + i]);
            s[i * dim + j] = m;
            s[j * dim + i] = m;
        }
    }
    s
}

/// Cholesky-based precision and log-determinant of an innovation covariance.
#[derive(Clone, Debug)]
pub struct InnovationFactor {
    dim: usize,
    precision: Vec<f64>,
    log_det: f64,
}

impl InnovationFactor {
    pub fn new(dim: usize, sigma: &[f64]) -> Result<Self> {
        let m = DMatrix::from_row_slice(dim, dim, sigma);
        let chol = m.clone().cholesky().ok_or_else(|| Error::Singular {
            min_eigenvalue: m.symmetric_eigenvalues().min(),
        })?;
        let l = chol.l();
        let log_det = 2.0 * (0..dim).map(|i| l[(i, i)].ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::Singular {
                min_eigenvalue: 0.0,
            });
        }
        let inv = chol.inverse();
        let precision = (0..dim * dim).map(|k| inv[(k / dim, k % dim)]).collect();
        Ok(Self {
            dim,
            precision,
            log_det,
        })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    #[inline]
    fn quad(&self, e: &[f64]) -> f64 {
        let d = self.dim;
        let mut q = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.precision[i * d + j] * e[j];
            }
            q += e[i] * row;
        }
        q
    }
}

/// Conditional Gaussian log-likelihood of `z_{w+1..n}` given the first `w`
/// observations.
pub fn conditional_gaussian_loglik(
    z: &TimeSeries,
    params: &VarParams,
    window: usize,
) -> Result<f64> {
    if z.dim() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            got: z.dim(),
        });
    }
    if window < params.order {
        return Err(Error::InvalidConfig(format!(
            "conditioning window {window} is shorter than the VAR order {}",
            params.order
        )));
    }
    if window > z.len() {
        return Err(Error::InsufficientData(format!(
            "conditioning window {window} exceeds series length {}",
            z.len()
        )));
    }
    let factor = InnovationFactor::new(params.dim, &params.sigma)?;
    Ok(conditional_loglik_raw(
        z.values(),
        params.dim,
        params.order,
        &params.coeffs,
        &factor,
        window,
    ))
}

/// Hot-path form of [`conditional_gaussian_loglik`] over a raw row-major
/// buffer; performs no validation.
pub(crate) fn conditional_loglik_raw(
    values: &[f64],
    d: usize,
    p: usize,
    coeffs: &[f64],
    factor: &InnovationFactor,
    window: usize,
) -> f64 {
    let n = values.len() / d;
    let quad = match d {
        1 => residual_quad::<1>(values, p, coeffs, factor, window),
        2 => residual_quad::<2>(values, p, coeffs, factor, window),
        3 => residual_quad::<3>(values, p, coeffs, factor, window),
        _ => residual_quad_dyn(values, d, p, coeffs, factor, window),
    };
    let m = (n - window) as f64;
    -0.5 * (m * (d as f64 * (2.0 * PI).ln() + factor.log_det) + quad)
}

fn residual_quad<const D: usize>(
    values: &[f64],
    p: usize,
    coeffs: &[f64],
    factor: &InnovationFactor,
    window: usize,
) -> f64 {
    let rows: &[[f64; D]] = as_rows(values);
    let prec: [[f64; D]; D] =
        std::array::from_fn(|i| std::array::from_fn(|j| factor.precision[i * D + j]));
    let mut quad = 0.0;
    for t in window..rows.len() {
        let mut e = rows[t];
        for j in 0..p {
            let b = &coeffs[j * D * D..(j + 1) * D * D];
            let lagged = &rows[t - j - 1];
            for r in 0..D {
                let mut acc = 0.0;
                for c in 0..D {
                    acc += b[r * D + c] * lagged[c];
                }
                e[r] -= acc;
            }
        }
        for i in 0..D {
            let mut row = 0.0;
            for j in 0..D {
                row += prec[i][j] * e[j];
            }
            quad += e[i] * row;
        }
    }
    quad
}

fn as_rows<const D: usize>(values: &[f64]) -> &[[f64; D]] {
    let (rows, rest) = values.as_chunks::<D>();
    debug_assert!(rest.is_empty());
    rows
}

fn residual_quad_dyn(
    values: &[f64],
    d: usize,
    p: usize,
    coeffs: &[f64],
    factor: &InnovationFactor,
    window: usize,
) -> f64 {
    let n = values.len() / d;
    let mut e = vec![0.0; d];
    let mut quad = 0.0;
    for t in window..n {
        e.copy_from_slice(&values[t * d..(t + 1) * d]);
        for j in 0..p {
            let b = &coeffs[j * d * d..(j + 1) * d * d];
            let lagged = &values[(t - j - 1) * d..(t - j) * d];
            for r in 0..d {
                let acc: f64 = b[r * d..(r + 1) * d]
                    .iter()
                    .zip(lagged)
                    .map(|(x, y)| x * y)
                    .sum();
                e[r] -= acc;
            }
        }
        quad += factor.quad(&e);
    }
    quad
}

/// Least squares VAR(`order`) fit on the full sample (conditioning window
/// equal to the order).
pub fn fit_ols(z: &TimeSeries, order: usize) -> Result<VarParams> {
    fit_ols_window(z, order, order)
}

/// Least squares fit using only equations `t = window+1..n`. The innovation
/// covariance is the residual second moment divided by `n - window`.
pub fn fit_ols_window(z: &TimeSeries, order: usize, window: usize) -> Result<VarParams> {
    let (n, d) = (z.len(), z.dim());
    let k = d * order;
    if window < order {
        return Err(Error::InvalidConfig(format!(
            "window {window} shorter than order {order}"
        )));
    }
    if n <= window || n - window <= k + d {
        return Err(Error::InsufficientData(format!(
            "VAR({order}) needs more than {} usable rows, have {}",
            k + d,
            n.saturating_sub(window)
        )));
    }
    let rows = n - window;

    let mut coeffs = vec![0.0; order * d * d];
    if order > 0 {
        let mut x = DMatrix::<f64>::zeros(rows, k);
        let mut y = DMatrix::<f64>::zeros(rows, d);
        for (r, t) in (window..n).enumerate() {
            for j in 0..order {
                let lagged = z.row(t - j - 1);
                for c in 0..d {
                    x[(r, j * d + c)] = lagged[c];
                }
            }
            for c in 0..d {
                y[(r, c)] = z.row(t)[c];
            }
        }
        let gram = x.transpose() * &x;
        let cross = x.transpose() * &y;
        let max_diag = (0..k).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        let chol = gram
            .clone()
            .cholesky()
            .ok_or(Error::RankDeficient { order })?;
        let min_pivot = (0..k)
            .map(|i| chol.l()[(i, i)].powi(2))
            .fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-13 * max_diag) {
            return Err(Error::RankDeficient { order });
        }
        // solution is (B_1 ... B_p)^T stacked as k x d
        let sol = chol.solve(&cross);
        for j in 0..order {
            for r in 0..d {
                for c in 0..d {
                    coeffs[j * d * d + r * d + c] = sol[(j * d + c, r)];
                }
            }
        }
    }

    let mut sigma = vec![0.0; d * d];
    let mut e = vec![0.0; d];
    for t in window..n {
        e.copy_from_slice(z.row(t));
        for j in 0..order {
            let b = &coeffs[j * d * d..(j + 1) * d * d];
            let lagged = z.row(t - j - 1);
            for r in 0..d {
                e[r] -= (0..d).map(|c| b[r * d + c] * lagged[c]).sum::<f64>();
            }
        }
        for a in 0..d {
            for b in 0..d {
                sigma[a * d + b] += e[a] * e[b];
            }
        }
    }
    sigma.iter_mut().for_each(|s| *s /= rows as f64);
    VarParams::from_flat(d, order, coeffs, sigma)
}

/// Transfer matrix `A(e^{-iw}) = I - sum_j B_j e^{-ijw}`.
fn transfer(params: &VarParams, omega: f64) -> CMatrix {
    let d = params.dim;
    let mut a = CMatrix::identity(d);
    for j in 1..=params.order {
        let z = Complex64::from_polar(1.0, -(j as f64) * omega);
        let b = params.coefficient(j);
        for r in 0..d {
            for c in 0..d {
                a[(r, c)] -= z * b[r * d + c];
            }
        }
    }
    a
}

/// `f(w) = (2 pi)^{-1} A(e^{-iw})^{-1} Sigma A(e^{-iw})^{-*}`. Real at
/// `w = 0` and `w = pi`.
pub fn var_spectral_density(params: &VarParams, omega: f64) -> Result<HpdMatrix> {
    let boundary = omega == 0.0 || (omega - PI).abs() < 1e-12;
    var_spectral_density_impl(params, omega, boundary)
}

fn var_spectral_density_impl(params: &VarParams, omega: f64, real: bool) -> Result<HpdMatrix> {
    let d = params.dim;
    let a = transfer(params, omega);
    let inv = general_inverse(&a).ok_or(Error::TransferSingular { omega })?;
    let cond = a.frobenius_norm() * inv.frobenius_norm();
    if !(cond < 1e12) {
        return Err(Error::TransferSingular { omega });
    }
    let sigma = CMatrix::from_real(d, &params.sigma)?;
    let mut f = (&(&inv * &sigma) * &inv.adjoint()).scale(1.0 / (2.0 * PI));
    f = if real {
        f.real_part()
    } else {
        f.hermitian_part()
    };
    Ok(HpdMatrix::from_hermitian(f))
}

/// Spectral density on the half grid, forced real at boundary indices.
pub fn var_spectral_density_on_grid(
    params: &VarParams,
    grid: &FrequencyGrid,
) -> Result<Vec<HpdMatrix>> {
    (0..grid.half_len())
        .map(|j| var_spectral_density_impl(params, grid.omega(j), grid.is_boundary(j)))
        .collect()
}

fn lower_cholesky(dim: usize, sigma: &[f64]) -> Result<DMatrix<f64>> {
    let m = DMatrix::from_row_slice(dim, dim, sigma);
    // a zero covariance is a legitimate (degenerate) innovation law
    if m.iter().all(|&v| v == 0.0) {
        return Ok(m);
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositive {
            min_eigenvalue: m.symmetric_eigenvalues().min(),
        })
}

fn gaussian_vector(l: &DMatrix<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let xi = DVector::from_fn(l.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    l * xi
}

pub fn simulate_var(params: &VarParams, n: usize, seed: u64) -> Result<TimeSeries> {
    simulate_var_with(params, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Simulates from zero initial values, discarding 1000 burn-in steps.
pub fn simulate_var_with(params: &VarParams, n: usize, rng: &mut impl Rng) -> Result<TimeSeries> {
    let radius = params.companion_spectral_radius();
    if radius >= 1.0 {
        return Err(Error::NonStationary {
            order: params.order,
            radius,
        });
    }
    let (d, p) = (params.dim, params.order);
    let l = lower_cholesky(d, &params.sigma)?;
    let total = n + BURN_IN;
    let mut values = vec![0.0; total * d];
    for t in 0..total {
        let eps = gaussian_vector(&l, rng);
        for r in 0..d {
            let mut v = eps[r];
            for j in 1..=p.min(t) {
                let b = params.coefficient(j);
                let lagged = &values[(t - j) * d..(t - j + 1) * d];
                v += (0..d).map(|c| b[r * d + c] * lagged[c]).sum::<f64>();
            }
            values[t * d + r] = v;
        }
    }
    TimeSeries::new(n, d, values.split_off(BURN_IN * d))
}

pub fn simulate_vma(theta: &[f64], sigma: &[f64], n: usize, seed: u64) -> Result<TimeSeries> {
    simulate_vma_with(theta, sigma, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `Z_t = e_t + Theta e_{t-1}`.
pub fn simulate_vma_with(
    theta: &[f64],
    sigma: &[f64],
    n: usize,
    rng: &mut impl Rng,
) -> Result<TimeSeries> {
    let d = (sigma.len() as f64).sqrt().round() as usize;
    if theta.len() != d * d || sigma.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: theta.len(),
        });
    }
    let l = lower_cholesky(d, sigma)?;
    let mut prev = gaussian_vector(&l, rng);
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        let e = gaussian_vector(&l, rng);
        for r in 0..d {
            values.push(e[r] + (0..d).map(|c| theta[r * d + c] * prev[c]).sum::<f64>());
        }
        prev = e;
    }
    TimeSeries::new(n, d, values)
}

/// Spectral density of `Z_t = e_t + Theta e_{t-1}`:
/// `(2 pi)^{-1} (I + Theta e^{-iw}) Sigma (I + Theta e^{-iw})^*`.
pub fn vma_spectral_density(theta: &[f64], sigma: &[f64], omega: f64) -> Result<HpdMatrix> {
    let d = (sigma.len() as f64).sqrt().round() as usize;
    let z = Complex64::from_polar(1.0, -omega);
    let mut a = CMatrix::identity(d);
    for r in 0..d {
        for c in 0..d {
            a[(r, c)] += z * theta[r * d + c];
        }
    }
    let s = CMatrix::from_real(d, sigma)?;
    let mut f = (&(&a * &s) * &a.adjoint()).scale(1.0 / (2.0 * PI));
    let boundary = omega == 0.0 || (omega - PI).abs() < 1e-12;
    f = if boundary {
        f.real_part()
    } else {
        f.hermitian_part()
    };
    Ok(HpdMatrix::from_hermitian(f))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ElbowRow {
    pub order: usize,
    pub neg_max_loglik: f64,
    pub aic: f64,
}

/// Negative maximum log-likelihood and AIC per order, all evaluated on the
/// common conditioning window `w = p_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElbowTable {
    pub rows: Vec<ElbowRow>,
}

impl ElbowTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("order,neg_max_loglik,aic\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.16e},{:.16e}", r.order, r.neg_max_loglik, r.aic);
        }
        s
    }

    /// Order in `1..=p_max` minimizing AIC.
    pub fn aic_order(&self) -> Option<usize> {
        self.rows
            .iter()
            .filter(|r| r.order >= 1)
            .min_by(|a, b| a.aic.total_cmp(&b.aic))
            .map(|r| r.order)
    }
}

/// Largest order whose least squares fit on the common window is
/// identifiable: `n - p > d p + d`.
pub fn max_identifiable_order(n: usize, d: usize) -> usize {
    // n - p > d (p + 1)  <=>  p < (n - d) / (d + 1)
    if n <= d {
        return 0;
    }
    let bound = (n - d) / (d + 1);
    if (n - d).is_multiple_of(d + 1) {
        bound.saturating_sub(1)
    } else {
        bound
    }
}

pub fn elbow_table(z: &TimeSeries, p_max: usize) -> Result<ElbowTable> {
    let limit = max_identifiable_order(z.len(), z.dim());
    if p_max > limit {
        return Err(Error::InsufficientData(format!(
            "maximum order {p_max} exceeds the identifiability bound {limit} for n = {}, d = {}",
            z.len(),
            z.dim()
        )));
    }
    let d = z.dim();
    let rows = (0..=p_max)
        .map(|p| {
            let fit = fit_ols_window(z, p, p_max)?;
            let ll = conditional_gaussian_loglik(z, &fit, p_max)?;
            Ok(ElbowRow {
                order: p,
                neg_max_loglik: -ll,
                aic: -2.0 * ll + 2.0 * (p * d * d) as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ElbowTable { rows })
}

/// AIC of the least squares VAR(`order`) on its own window.
pub fn aic(z: &TimeSeries, order: usize) -> Result<f64> {
    let fit = fit_ols(z, order)?;
    let ll = conditional_gaussian_loglik(z, &fit, order)?;
    Ok(-2.0 * ll + 2.0 * (order * z.dim() * z.dim()) as f64)
}

/// The two bivariate simulation models of the replication study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinModel {
    Var2,
    Vma1,
}

impl BuiltinModel {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "var2" => Ok(Self::Var2),
            "vma1" => Ok(Self::Vma1),
            other => Err(Error::InvalidConfig(format!(
                "unknown builtin model '{other}' (expected var2 or vma1)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Var2 => "var2",
            Self::Vma1 => "vma1",
        }
    }

    pub fn var2_params() -> VarParams {
        VarParams::new(
            2,
            vec![vec![0.5, 0.0, 0.0, -0.3], vec![0.0, 0.0, 0.0, -0.5]],
            vec![1.0, 0.9, 0.9, 1.0],
        )
        .expect("valid constants")
    }

    pub const VMA1_THETA: [f64; 4] = [-0.75, 0.5, 0.5, 0.75];
    pub const VMA1_SIGMA: [f64; 4] = [1.0, 0.5, 0.5, 1.0];

    pub fn simulate_with(&self, n: usize, rng: &mut impl Rng) -> Result<TimeSeries> {
        match self {
            Self::Var2 => simulate_var_with(&Self::var2_params(), n, rng),
            Self::Vma1 => simulate_vma_with(&Self::VMA1_THETA, &Self::VMA1_SIGMA, n, rng),
        }
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<TimeSeries> {
        self.simulate_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// True spectral density on the half grid.
    pub fn spectral_density_on_grid(&self, grid: &FrequencyGrid) -> Result<Vec<HpdMatrix>> {
        match self {
            Self::Var2 => var_spectral_density_on_grid(&Self::var2_params(), grid),
            Self::Vma1 => (0..grid.half_len())
                .map(|j| {
                    let f =
                        vma_spectral_density(&Self::VMA1_THETA, &Self::VMA1_SIGMA, grid.omega(j))?;
                    Ok(if grid.is_boundary(j) {
                        HpdMatrix::from_hermitian(f.matrix().real_part())
                    } else {
                        f
                    })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white(n: usize, seed: u64) -> TimeSeries {
        simulate_var(
            &VarParams::white_noise(vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            n,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn beta_stacking_follows_row_then_lag() {
        // d = 2, p = 2: (B1[0,0], B1[0,1], B2[0,0], B2[0,1], B1[1,0], ...)
        let p = VarParams::new(
            2,
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(p.to_beta(), vec![1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
        let back = VarParams::from_beta(2, 2, &p.to_beta(), p.sigma().to_vec()).unwrap();
        assert_eq!(back, p);
        assert_eq!(beta_block(2, 2, 1), vec![2, 3, 6, 7]);
    }

    #[test]
    fn noiseless_recursion_is_recovered_exactly() {
        let mut v = vec![1.0];
        for _ in 1..50 {
            v.push(0.5 * v.last().unwrap());
        }
        let z = TimeSeries::new(50, 1, v).unwrap();
        let fit = fit_ols(&z, 1).unwrap();
        assert!((fit.coefficient(1)[0] - 0.5).abs() < 1e-14);
        assert!(fit.sigma()[0].abs() < 1e-25);
    }

    #[test]
    fn ols_is_consistent_for_the_var2_model() {
        let z = BuiltinModel::Var2.simulate(100_000, 17).unwrap();
        let fit = fit_ols(&z, 2).unwrap();
        let truth = BuiltinModel::var2_params();
        for (a, b) in fit.coeffs_flat().iter().zip(truth.coeffs_flat()) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
        let z = white(100_000, 4);
        let b1 = fit_ols(&z, 1).unwrap();
        let frob = b1.coefficient(1).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(frob < 0.02);
    }

    #[test]
    fn rank_deficient_regressors_are_reported() {
        let z = TimeSeries::new(30, 2, (0..60).map(|i| (i / 2) as f64).collect()).unwrap();
        assert!(matches!(
            fit_ols(&z, 1),
            Err(Error::RankDeficient { order: 1 })
        ));
    }

    #[test]
    fn loglik_examples() {
        let n = 10;
        let z = TimeSeries::zeros(n, 1);
        let wn = VarParams::white_noise(vec![1.0]).unwrap();
        let ll = conditional_gaussian_loglik(&z, &wn, 0).unwrap();
        assert!((ll + 0.5 * n as f64 * (2.0 * PI).ln()).abs() < 1e-12);

        let z = white(40, 2);
        let zero_b = VarParams::new(2, vec![vec![0.0; 4]], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let wn = VarParams::white_noise(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = conditional_gaussian_loglik(&z, &zero_b, 3).unwrap();
        let b = conditional_gaussian_loglik(&z, &wn, 3).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(conditional_gaussian_loglik(&z, &zero_b, 0).is_err());
    }

    #[test]
    fn loglik_matches_direct_density() {
        let params =
            VarParams::new(2, vec![vec![0.4, 0.1, -0.2, 0.3]], vec![2.0, 0.3, 0.3, 0.5]).unwrap();
        let z = simulate_var(&params, 60, 9).unwrap();
        let s = DMatrix::from_row_slice(2, 2, params.sigma());
        let det = s.determinant();
        let inv = s.clone().try_inverse().unwrap();
        let mut oracle = 0.0;
        for t in 1..60 {
            let mean = DMatrix::from_row_slice(2, 2, params.coefficient(1))
                * DVector::from_column_slice(z.row(t - 1));
            let e = DVector::from_column_slice(z.row(t)) - mean;
            oracle += -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * (e.transpose() * &inv * &e)[(0, 0)];
        }
        let ll = conditional_gaussian_loglik(&z, &params, 1).unwrap();
        assert!((ll - oracle).abs() < 1e-8);
    }

    #[test]
    fn spectral_density_examples() {
        let wn = VarParams::white_noise(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        for &w in &[0.0, 1.0, PI] {
            let f = var_spectral_density(&wn, w).unwrap();
            assert!((f[(0, 0)].re - 1.0 / (2.0 * PI)).abs() < 1e-15);
            assert!(f[(0, 1)].norm() < 1e-15);
        }
        let ar = VarParams::new(1, vec![vec![0.5]], vec![1.0]).unwrap();
        assert!((var_spectral_density(&ar, 0.0).unwrap()[(0, 0)].re - 0.636_619_772).abs() < 1e-8);
        assert!((var_spectral_density(&ar, PI).unwrap()[(0, 0)].re - 0.070_735_530).abs() < 1e-8);
        let unit = VarParams::new(1, vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(matches!(
            var_spectral_density(&unit, 0.0),
            Err(Error::TransferSingular { .. })
        ));
    }

    #[test]
    fn spectral_density_is_hermitian_and_real_at_boundaries() {
        let p = BuiltinModel::var2_params();
        let grid = FrequencyGrid::new(64).unwrap();
        let f = var_spectral_density_on_grid(&p, &grid).unwrap();
        assert_eq!(f[0].matrix().max_abs_imag(), 0.0);
        assert_eq!(f[32].matrix().max_abs_imag(), 0.0);
        for fj in &f {
            assert!(fj.matrix().hermitian_asymmetry() < 1e-14);
            assert!(fj.min_eigenvalue() > 0.0);
        }
    }

    /// Gamma(0) = int_{-pi}^{pi} f(w) dw by the midpoint rule, against the
    /// sample covariance of a long simulation.
    #[test]
    fn spectral_density_integrates_to_lag_zero_covariance() {
        let p = BuiltinModel::var2_params();
        let m = 4000;
        let h = PI / m as f64;
        let mut gamma0 = [0.0; 4];
        for i in 0..m {
            let f = var_spectral_density(&p, (i as f64 + 0.5) * h).unwrap();
            for k in 0..4 {
                // f(-w) = conj(f(w)): the real parts double, the imaginary parts cancel
                gamma0[k] += 2.0 * h * f.matrix().as_slice()[k].re;
            }
        }
        let z = simulate_var(&p, 1_000_000, 21).unwrap();
        let s = z.second_moment();
        for k in 0..4 {
            assert!(
                (gamma0[k] - s[k]).abs() < 0.02,
                "{k}: {} vs {}",
                gamma0[k],
                s[k]
            );
        }
    }

    #[test]
    fn vma_lag_zero_covariance() {
        // Gamma(0) = Sigma + Theta Sigma Theta^T
        let th = DMatrix::from_row_slice(2, 2, &BuiltinModel::VMA1_THETA);
        let sg = DMatrix::from_row_slice(2, 2, &BuiltinModel::VMA1_SIGMA);
        let g0 = &sg + &th * &sg * th.transpose();
        let expected = [1.4375, 0.34375, 0.34375, 2.1875];
        for k in 0..4 {
            assert!((g0[(k / 2, k % 2)] - expected[k]).abs() < 1e-15);
        }
        let z = BuiltinModel::Vma1.simulate(1_000_000, 5).unwrap();
        let s = z.second_moment();
        for k in 0..4 {
            assert!((s[k] - expected[k]).abs() < 0.015, "{k}: {}", s[k]);
        }
    }

    #[test]
    fn degenerate_vma_is_white_noise() {
        let z = simulate_vma(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0], 200_000, 8).unwrap();
        let mut lag1 = [0.0; 4];
        for t in 1..z.len() {
            for a in 0..2 {
                for b in 0..2 {
                    lag1[a * 2 + b] += z.row(t)[a] * z.row(t - 1)[b];
                }
            }
        }
        for v in lag1 {
            assert!((v / z.len() as f64).abs() < 0.015);
        }
    }

    #[test]
    fn companion_moduli_of_var2_model() {
        let mut moduli = BuiltinModel::var2_params().companion_eigen_moduli();
        moduli.sort_by(f64::total_cmp);
        let expected = [0.5f64.sqrt(), 0.5f64.sqrt(), 0.5, 0.0];
        let mut expected_sorted = expected.to_vec();
        expected_sorted.sort_by(f64::total_cmp);
        // the 4x4 companion has a zero eigenvalue from the empty first block of B_2
        for (a, b) in moduli.iter().zip(&expected_sorted) {
            assert!((a - b).abs() < 1e-6, "{moduli:?}");
        }
    }

    #[test]
    fn explosive_var_is_rejected() {
        let p = VarParams::new(1, vec![vec![1.1]], vec![1.0]).unwrap();
        assert!(matches!(
            simulate_var(&p, 10, 0),
            Err(Error::NonStationary { .. })
        ));
    }

    #[test]
    fn simulation_is_reproducible() {
        let a = BuiltinModel::Var2.simulate(50, 3).unwrap();
        let b = BuiltinModel::Var2.simulate(50, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn elbow_tables() {
        let z = white(2000, 10);
        let t = elbow_table(&z, 5).unwrap();
        assert_eq!(t.rows.len(), 6);
        for w in t.rows.windows(2) {
            assert!(w[1].neg_max_loglik <= w[0].neg_max_loglik + 1e-8);
            if w[0].order >= 1 {
                let drop = w[0].neg_max_loglik - w[1].neg_max_loglik;
                assert!(drop < 0.005 * w[0].neg_max_loglik.abs());
            }
        }

        let z = BuiltinModel::Var2.simulate(2000, 11).unwrap();
        let t = elbow_table(&z, 6).unwrap();
        let v: Vec<f64> = t.rows.iter().map(|r| r.neg_max_loglik).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-8));
        let drop12 = v[1] - v[2];
        let drop23 = v[2] - v[3];
        assert!(drop12 > 0.0 && drop23 < 0.1 * drop12);
        assert_eq!(t.aic_order(), Some(2));
        assert!(t.to_csv().starts_with("order,neg_max_loglik,aic\n0,"));
    }

    #[test]
    fn elbow_rejects_unidentifiable_order() {
        let z = white(20, 1);
        let limit = max_identifiable_order(20, 2);
        assert_eq!(limit, 5);
        assert!(elbow_table(&z, limit).is_ok());
        assert!(matches!(
            elbow_table(&z, limit + 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn standalone_aic_penalizes_parameters() {
        let z = white(500, 12);
        let a1 = aic(&z, 1).unwrap();
        let fit = fit_ols(&z, 1).unwrap();
        let ll = conditional_gaussian_loglik(&z, &fit, 1).unwrap();
        assert!((a1 - (-2.0 * ll + 8.0)).abs() < 1e-9);
    }
}
