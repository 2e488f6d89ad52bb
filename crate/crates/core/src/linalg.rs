//! Small dense complex matrices and Hermitian positive definite algebra.
//!
//! Spectral density matrices are `d x d` with `d` rarely above six, so
//! everything here is plain row-major storage with inline capacity for
//! `d <= 4` and a cyclic Jacobi eigensolver. Square roots, inverse square
//! roots and log-determinants all come from the same eigendecomposition.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{Error, Result};

type Storage = SmallVec<[Complex64; 16]>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerances shared by every routine in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    /// Relative Frobenius asymmetry below which inputs are symmetrized.
    pub hermitian_tol: f64,
    /// Relative eigenvalue floor (scaled by dimension) for strict positivity.
    pub singular_rel: f64,
}

impl NumericPolicy {
    pub const DEFAULT: NumericPolicy = NumericPolicy {
        hermitian_tol: 1e-10,
        singular_rel: 1e-14,
    };
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self::DEFAULT
    }
}

static POLICY: OnceLock<NumericPolicy> = OnceLock::new();

/// The process-wide numeric policy. Defaults to [`NumericPolicy::DEFAULT`].
pub fn numeric_policy() -> &'static NumericPolicy {
    POLICY.get_or_init(NumericPolicy::default)
}

/// Installs a custom policy. Fails (returning the rejected value) once the
/// policy has been read or set.
pub fn set_numeric_policy(policy: NumericPolicy) -> std::result::Result<(), NumericPolicy> {
    POLICY.set(policy)
}

/// Dense square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Storage,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: SmallVec::from_elem(ZERO, dim * dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Storage::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds from a row-major slice of length `dim * dim`.
    pub fn from_row_major(dim: usize, values: &[Complex64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: values.len(),
            });
        }
        Ok(Self {
            dim,
            data: SmallVec::from_slice(values),
        })
    }

    /// Real matrix from a row-major slice.
    pub fn from_real(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: values.len(),
            });
        }
        Ok(Self {
            dim,
            data: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * dim + i] = Complex64::new(v, 0.0);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| self.data[j * d + i].conj())
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Entrywise real part, as a complex matrix with zero imaginary parts.
    pub fn real_part(&self) -> Self {
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|z| Complex64::new(z.re, 0.0))
                .collect(),
        }
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &CMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b * c;
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> SmallVec<[Complex64; 8]> {
        let d = self.dim;
        debug_assert_eq!(v.len(), d);
        (0..d)
            .map(|i| {
                let row = &self.data[i * d..(i + 1) * d];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Relative Frobenius distance between `self` and its adjoint.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut diff = 0.0;
        for i in 0..d {
            for j in 0..d {
                diff += (self.data[i * d + j] - self.data[j * d + i].conj()).norm_sqr();
            }
        }
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            0.0
        } else {
            diff.sqrt() / norm
        }
    }

    /// `(A + A*) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| {
            if i == j {
                Complex64::new(self.data[i * d + i].re, 0.0)
            } else {
                (self.data[i * d + j] + self.data[j * d + i].conj()) * 0.5
            }
        })
    }

    /// Applies the symmetrization guard: returns the Hermitian part when the
    /// input is within tolerance of Hermitian, an error otherwise.
    pub fn symmetrized(&self) -> Result<Self> {
        let asymmetry = self.hermitian_asymmetry();
        if asymmetry > numeric_policy().hermitian_tol {
            return Err(Error::NotHermitian { asymmetry });
        }
        Ok(self.hermitian_part())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        let d = self.dim;
        debug_assert_eq!(d, rhs.dim);
        let mut out = CMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.dim;
        let rows: Vec<Vec<String>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let z = self.data[i * d + j];
                        format!("{:.6}{:+.6}i", z.re, z.im)
                    })
                    .collect()
            })
            .collect();
        f.debug_struct("CMatrix")
            .field("dim", &d)
            .field("rows", &rows)
            .finish()
    }
}

/// A Hermitian matrix that is positive definite or (when used as a
/// periodogram or correction matrix) positive semidefinite.
///
/// Construction only checks Hermitian symmetry; positivity is checked by the
/// routines that need it.
#[derive(Clone, PartialEq, Debug)]
pub struct HpdMatrix(CMatrix);

impl HpdMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Ok(Self(m.symmetrized()?))
    }

    /// Wraps a matrix that is Hermitian by construction.
    pub(crate) fn from_hermitian(m: CMatrix) -> Self {
        debug_assert!(m.hermitian_asymmetry() < 1e-8, "{m:?}");
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        jacobi_eigen(self.0.clone()).values[0]
    }
}

impl Index<(usize, usize)> for HpdMatrix {
    type Output = Complex64;

    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.0[idx]
    }
}

/// Eigendecomposition `A = V diag(values) V*` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: SmallVec<[f64; 8]>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// `V diag(g(lambda)) V*`.
    pub fn map(&self, mut g: impl FnMut(f64) -> f64) -> CMatrix {
        let d = self.vectors.dim;
        let weights: SmallVec<[f64; 8]> = self.values.iter().map(|&l| g(l)).collect();
        let v = &self.vectors;
        CMatrix::from_fn(d, |i, j| {
            let mut acc = ZERO;
            for (k, &w) in weights.iter().enumerate() {
                acc += v[(i, k)] * v[(j, k)].conj() * w;
            }
            if i == j {
                Complex64::new(acc.re, 0.0)
            } else {
                acc
            }
        })
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn log_det(&self) -> f64 {
        self.values.iter().map(|l| l.ln()).sum()
    }
}

/// Eigendecomposition of a Hermitian matrix (symmetrization guard applied).
pub fn hermitian_eigen(a: &CMatrix) -> Result<HermitianEigen> {
    Ok(jacobi_eigen(a.symmetrized()?))
}

/// Cyclic complex Jacobi. The input must already be Hermitian.
pub(crate) fn jacobi_eigen(mut a: CMatrix) -> HermitianEigen {
    let d = a.dim;
    let mut v = CMatrix::identity(d);
    let norm = a.frobenius_norm();
    if d > 1 && norm > 0.0 {
        let target = (f64::EPSILON * 0.25 * norm).powi(2);
        for _sweep in 0..64 {
            let mut off = 0.0;
            for p in 0..d {
                for q in (p + 1)..d {
                    off += a.data[p * d + q].norm_sqr();
                }
            }
            if off <= target {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let mut order: SmallVec<[usize; 8]> = (0..d).collect();
    let diag: SmallVec<[f64; 8]> = (0..d).map(|i| a.data[i * d + i].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMatrix::from_fn(d, |r, c| v.data[r * d + order[c]]);
    HermitianEigen { values, vectors }
}

fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let d = a.dim;
    let apq = a.data[p * d + q];
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let app = a.data[p * d + p].re;
    let aqq = a.data[q * d + q].re;
    let tau = (aqq - app) / (2.0 * g);
    let t = if tau.abs() > 1e150 {
        0.5 / tau
    } else {
        let t = 1.0 / (tau.abs() + (1.0 + tau * tau).sqrt());
        if tau < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // phase that makes the (p, q) entry real and positive
    let w = apq.conj() / g;
    let wc = w.conj();

    for r in 0..d {
        let arp = a.data[r * d + p];
        let arq = a.data[r * d + q];
        a.data[r * d + p] = arp * c - w * arq * s;
        a.data[r * d + q] = arp * s + w * arq * c;
    }
    for r in 0..d {
        let apr = a.data[p * d + r];
        let aqr = a.data[q * d + r];
        a.data[p * d + r] = apr * c - wc * aqr * s;
        a.data[q * d + r] = apr * s + wc * aqr * c;
    }
    a.data[p * d + q] = ZERO;
    a.data[q * d + p] = ZERO;
    a.data[p * d + p] = Complex64::new(a.data[p * d + p].re, 0.0);
    a.data[q * d + q] = Complex64::new(a.data[q * d + q].re, 0.0);

    for r in 0..d {
        let vrp = v.data[r * d + p];
        let vrq = v.data[r * d + q];
        v.data[r * d + p] = vrp * c - w * vrq * s;
        v.data[r * d + q] = vrp * s + w * vrq * c;
    }
}

fn singular_floor(e: &HermitianEigen) -> f64 {
    e.values.len() as f64 * numeric_policy().singular_rel * e.max().abs()
}

/// Principal square root. Eigenvalues that are negative only at rounding
/// level are clamped to zero.
pub fn hpd_sqrt(a: &HpdMatrix) -> Result<HpdMatrix> {
    let e = jacobi_eigen(a.0.clone());
    if e.min() < -singular_floor(&e) {
        return Err(Error::NotPositive {
            min_eigenvalue: e.min(),
        });
    }
    Ok(HpdMatrix(e.map(|l| l.max(0.0).sqrt())))
}

/// Inverse of the principal square root.
pub fn hpd_inv_sqrt(a: &HpdMatrix) -> Result<HpdMatrix> {
    let e = jacobi_eigen(a.0.clone());
    if e.min() <= singular_floor(&e) {
        return Err(Error::Singular {
            min_eigenvalue: e.min(),
        });
    }
    Ok(HpdMatrix(e.map(|l| 1.0 / l.sqrt())))
}

pub fn hpd_inverse(a: &HpdMatrix) -> Result<HpdMatrix> {
    let e = jacobi_eigen(a.0.clone());
    if e.min() <= singular_floor(&e) {
        return Err(Error::Singular {
            min_eigenvalue: e.min(),
        });
    }
    Ok(HpdMatrix(e.map(|l| 1.0 / l)))
}

/// Closed-form roots of the 2x2 Hermitian matrix `[[a, b], [conj(b), c]]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Roots2 {
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub log_det: f64,
    /// Principal square root, row-major.
    pub sqrt: [Complex64; 4],
    /// Inverse of the principal square root, row-major.
    pub inv_sqrt: [Complex64; 4],
}

/// Uses `sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A))`, valid
/// for positive definite `A`. `None` unless both eigenvalues are positive and
/// finite.
#[inline]
pub(crate) fn roots_2x2(a: f64, b: Complex64, c: f64) -> Option<Roots2> {
    let trace = a + c;
    let half_gap = (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt();
    let lmax = 0.5 * trace + half_gap;
    let det = a * c - b.norm_sqr();
    if !(det > 0.0 && lmax > 0.0 && det.is_finite() && lmax.is_finite()) {
        return None;
    }
    let lmin = det / lmax;
    let sd = det.sqrt();
    let t = (trace + 2.0 * sd).sqrt();
    let inv_t = 1.0 / t;
    let sqrt = [
        Complex64::new((a + sd) * inv_t, 0.0),
        b * inv_t,
        b.conj() * inv_t,
        Complex64::new((c + sd) * inv_t, 0.0),
    ];
    let g = 1.0 / (t * sd);
    let inv_sqrt = [
        Complex64::new((c + sd) * g, 0.0),
        -b * g,
        -b.conj() * g,
        Complex64::new((a + sd) * g, 0.0),
    ];
    Some(Roots2 {
        min_eigenvalue: lmin,
        trace,
        log_det: det.ln(),
        sqrt,
        inv_sqrt,
    })
}

pub fn hpd_logdet(a: &HpdMatrix) -> Result<f64> {
    let e = jacobi_eigen(a.0.clone());
    if e.min() <= 0.0 {
        return Err(Error::Singular {
            min_eigenvalue: e.min(),
        });
    }
    Ok(e.log_det())
}

/// Inverse of a general complex square matrix by Gauss-Jordan elimination
/// with partial pivoting; `None` when a pivot vanishes.
pub fn general_inverse(a: &CMatrix) -> Option<CMatrix> {
    let d = a.dim();
    let mut m = a.clone();
    let mut inv = CMatrix::identity(d);
    for col in 0..d {
        let piv = (col..d).max_by(|&x, &y| m[(x, col)].norm().total_cmp(&m[(y, col)].norm()))?;
        if m[(piv, col)].norm() == 0.0 || !m[(piv, col)].is_finite() {
            return None;
        }
        if piv != col {
            for c in 0..d {
                let (a1, b1) = (m[(col, c)], m[(piv, c)]);
                m[(col, c)] = b1;
                m[(piv, c)] = a1;
                let (a2, b2) = (inv[(col, c)], inv[(piv, c)]);
                inv[(col, c)] = b2;
                inv[(piv, c)] = a2;
            }
        }
        let s = m[(col, col)].inv();
        for c in 0..d {
            m[(col, c)] *= s;
            inv[(col, c)] *= s;
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..d {
                let (mc, ic) = (m[(col, c)], inv[(col, c)]);
                m[(r, c)] -= f * mc;
                inv[(r, c)] -= f * ic;
            }
        }
    }
    Some(inv)
}

/// Real `d x d` image of a Hermitian matrix: diagonal kept, real parts of the
/// upper triangle kept in place, imaginary parts of the upper triangle moved
/// to the mirrored lower position.
#[derive(Clone, Debug, PartialEq)]
pub struct RealifiedMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl RealifiedMatrix {
    pub fn from_components(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Components in row-major order (`d^2` of them).
    pub fn components(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }
}

pub fn realify(a: &HpdMatrix) -> RealifiedMatrix {
    realify_matrix(&a.0)
}

/// Realification of an arbitrary matrix, reading only its upper triangle.
pub fn realify_matrix(a: &CMatrix) -> RealifiedMatrix {
    let d = a.dim;
    let mut data = vec![0.0; d * d];
    realify_into(a, &mut data);
    RealifiedMatrix { dim: d, data }
}

pub(crate) fn realify_into(a: &CMatrix, out: &mut [f64]) {
    let d = a.dim;
    for i in 0..d {
        out[i * d + i] = a.data[i * d + i].re;
        for j in (i + 1)..d {
            let z = a.data[i * d + j];
            out[i * d + j] = z.re;
            out[j * d + i] = z.im;
        }
    }
}

pub fn derealify(r: &RealifiedMatrix) -> HpdMatrix {
    HpdMatrix(derealify_components(r.dim, &r.data))
}

pub(crate) fn derealify_components(d: usize, h: &[f64]) -> CMatrix {
    CMatrix::from_fn(d, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => Complex64::new(h[i * d + i], 0.0),
        std::cmp::Ordering::Less => Complex64::new(h[i * d + j], h[j * d + i]),
        std::cmp::Ordering::Greater => Complex64::new(h[j * d + i], -h[i * d + j]),
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn random_complex(dim: usize, rng: &mut impl Rng) -> CMatrix {
        CMatrix::from_fn(dim, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    pub fn random_hermitian(dim: usize, rng: &mut impl Rng) -> CMatrix {
        random_complex(dim, rng).hermitian_part()
    }

    /// `G G* + eps I`, comfortably positive definite.
    pub fn random_hpd(dim: usize, rng: &mut impl Rng) -> HpdMatrix {
        let g = random_complex(dim, rng);
        let mut m = &g * &g.adjoint();
        for i in 0..dim {
            m[(i, i)] += Complex64::new(0.1, 0.0);
        }
        HpdMatrix::new(m).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    /// Determinant by cofactor expansion along the first row.
    fn cofactor_det(m: &CMatrix) -> Complex64 {
        let d = m.dim();
        if d == 1 {
            return m[(0, 0)];
        }
        let mut det = ZERO;
        for col in 0..d {
            let minor = CMatrix::from_fn(d - 1, |i, j| {
                let jj = if j < col { j } else { j + 1 };
                m[(i + 1, jj)]
            });
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            det += m[(0, col)] * cofactor_det(&minor) * sign;
        }
        det
    }

    #[test]
    fn eigen_of_identity_and_diagonal() {
        let e = hermitian_eigen(&CMatrix::identity(2)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0]);

        let e = hermitian_eigen(&CMatrix::diagonal(&[9.0, 4.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 9.0]);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 1..=6 {
            for _ in 0..20 {
                let a = random_hermitian(d, &mut rng);
                let e = hermitian_eigen(&a).unwrap();
                assert!(rel_err(&e.reconstruct(), &a) < 1e-10);
                let vhv = &e.vectors.adjoint() * &e.vectors;
                assert!(rel_err(&vhv, &CMatrix::identity(d)) < 1e-10);
                assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let a = CMatrix::from_row_major(2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
            .unwrap();
        assert!(matches!(
            hermitian_eigen(&a),
            Err(Error::NotHermitian { .. })
        ));
        // drift below the guard is symmetrized silently
        let mut b = CMatrix::identity(2);
        b[(0, 1)] = c(0.5, 1e-13);
        b[(1, 0)] = c(0.5, 0.0);
        assert!(HpdMatrix::new(b).is_ok());
    }

    #[test]
    fn sqrt_examples() {
        let i3 = HpdMatrix::identity(3);
        assert_eq!(hpd_sqrt(&i3).unwrap(), i3);
        let a = HpdMatrix::new(CMatrix::diagonal(&[4.0, 9.0])).unwrap();
        let s = hpd_sqrt(&a).unwrap();
        assert!(rel_err(s.matrix(), &CMatrix::diagonal(&[2.0, 3.0])) < 1e-15);
    }

    #[test]
    fn closed_form_2x2_roots_match_eigen_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let a = random_hpd(2, &mut rng);
            let m = a.matrix();
            let r = roots_2x2(m[(0, 0)].re, m[(0, 1)], m[(1, 1)].re).unwrap();
            let s = hpd_sqrt(&a).unwrap();
            let is = hpd_inv_sqrt(&a).unwrap();
            let rs = CMatrix::from_row_major(2, &r.sqrt).unwrap();
            let ris = CMatrix::from_row_major(2, &r.inv_sqrt).unwrap();
            assert!((&rs - s.matrix()).frobenius_norm() < 1e-12 * s.matrix().frobenius_norm());
            assert!((&ris - is.matrix()).frobenius_norm() < 1e-12 * is.matrix().frobenius_norm());
            assert!((r.log_det - hpd_logdet(&a).unwrap()).abs() < 1e-12);
            assert!((r.min_eigenvalue - a.min_eigenvalue()).abs() < 1e-12);
        }
        assert!(roots_2x2(1.0, Complex64::new(1.0, 0.0), 1.0).is_none());
    }

    #[test]
    fn general_inverse_multiplies_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=5 {
            let a = random_complex(d, &mut rng);
            let inv = general_inverse(&a).unwrap();
            let err = (&(&a * &inv) - &CMatrix::identity(d)).frobenius_norm();
            assert!(err < 1e-10, "d={d} err={err}");
        }
        assert!(general_inverse(&CMatrix::zeros(2)).is_none());
    }

    #[test]
    fn sqrt_multiplies_back_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=5 {
            for _ in 0..20 {
                let a = random_hpd(d, &mut rng);
                let s = hpd_sqrt(&a).unwrap();
                let si = hpd_inv_sqrt(&a).unwrap();
                assert!(rel_err(&(s.matrix() * s.matrix()), a.matrix()) < 1e-9);
                assert!(rel_err(&(si.matrix() * s.matrix()), &CMatrix::identity(d)) < 1e-9);
                let comm = &(s.matrix() * a.matrix()) - &(a.matrix() * s.matrix());
                assert!(comm.frobenius_norm() < 1e-9 * a.matrix().frobenius_norm());
            }
        }
    }

    #[test]
    fn inv_sqrt_of_singular_reports_min_eigenvalue() {
        let a = HpdMatrix::new(CMatrix::diagonal(&[1.0, 0.0])).unwrap();
        match hpd_inv_sqrt(&a) {
            Err(Error::Singular { min_eigenvalue }) => assert_eq!(min_eigenvalue, 0.0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(hpd_logdet(&a).is_err());
    }

    #[test]
    fn logdet_examples_and_cofactor_oracle() {
        assert_eq!(hpd_logdet(&HpdMatrix::identity(4)).unwrap(), 0.0);
        let a = HpdMatrix::new(CMatrix::diagonal(&[2.0, 3.0])).unwrap();
        assert!((hpd_logdet(&a).unwrap() - 6.0f64.ln()).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            for _ in 0..30 {
                let a = random_hpd(d, &mut rng);
                let det = cofactor_det(a.matrix());
                assert!(det.im.abs() < 1e-9 * det.re.abs());
                let ld = hpd_logdet(&a).unwrap();
                assert!((ld.exp() - det.re).abs() < 1e-9 * det.re.abs());
            }
        }
    }

    #[test]
    fn logdet_of_inverse_negates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 1..=6 {
            let a = random_hpd(d, &mut rng);
            let inv = hpd_inverse(&a).unwrap();
            let sum = hpd_logdet(&a).unwrap() + hpd_logdet(&inv).unwrap();
            assert!(sum.abs() < 1e-9, "d={d} sum={sum}");
        }
    }

    #[test]
    fn realify_example() {
        let a = HpdMatrix::new(
            CMatrix::from_row_major(2, &[c(1.0, 0.0), c(2.0, 3.0), c(2.0, -3.0), c(4.0, 0.0)])
                .unwrap(),
        )
        .unwrap();
        let r = realify(&a);
        assert_eq!(r.components(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(derealify(&r), a);

        let sym = HpdMatrix::new(CMatrix::from_real(2, &[1.0, 0.5, 0.5, 2.0]).unwrap()).unwrap();
        assert_eq!(realify(&sym).components(), &[1.0, 0.5, 0.0, 2.0]);
    }

    #[test]
    fn realify_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in 1..=4 {
            let a = HpdMatrix::new(random_hermitian(d, &mut rng)).unwrap();
            assert_eq!(derealify(&realify(&a)), a);
        }
    }
}
