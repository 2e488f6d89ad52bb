//! Bernstein-Hpd-Gamma prior on the correction matrix.
//!
//! The Hpd-Gamma measure is represented by its `L` largest atoms
//! `(x_l, r_l, U_l)`: locations on `[0, pi]`, radial parts from the inverse
//! Levy intensity of `C e^{-b r} / r`, and unit-trace Hermitian marks given in
//! hyperspherical angle coordinates. The correction matrix is the Bernstein
//! mixture `Q(w) = sum_j Phi(I_{j,k}) b(w/pi | j, k-j+1)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, HpdMatrix};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Parameters `(C_alpha, beta_0)` of the radial Levy intensity
/// `C_alpha e^{-beta_0 r} / r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevyConfig {
    pub alpha_mass: f64,
    pub beta0: f64,
}

impl LevyConfig {
    pub fn new(alpha_mass: f64, beta0: f64) -> Result<Self> {
        if !(alpha_mass > 0.0 && alpha_mass.is_finite() && beta0 > 0.0 && beta0.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Levy parameters must be positive (alpha_mass = {alpha_mass}, beta0 = {beta0})"
            )));
        }
        Ok(Self { alpha_mass, beta0 })
    }

    /// `C_alpha = 1`, `beta_0 = d * 1e-4`.
    pub fn default_for_dim(d: usize) -> Self {
        Self {
            alpha_mass: 1.0,
            beta0: d as f64 * 1e-4,
        }
    }
}

/// Bernstein degree prior and basis truncation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BernsteinConfig {
    k_max: usize,
    tau_l: f64,
    tau_r: f64,
    #[serde(skip)]
    log_weights: Vec<f64>,
}

impl BernsteinConfig {
    /// Truncated basis on `[tau_l, tau_r]` with `p(k) ~ exp(-0.01 k log k)`.
    pub fn new(k_max: usize, tau_l: f64, tau_r: f64) -> Result<Self> {
        let raw: Vec<f64> = (1..=k_max.max(1))
            .map(|k| -0.01 * k as f64 * (k as f64).ln())
            .collect();
        Self::with_log_weights(k_max, tau_l, tau_r, raw)
    }

    /// The plain Beta-density basis on `[0, 1]`.
    pub fn untruncated(k_max: usize) -> Result<Self> {
        Self::new(k_max, 0.0, 1.0)
    }

    /// Arbitrary unnormalized log-weights over `k = 1..=k_max`.
    pub fn with_log_weights(k_max: usize, tau_l: f64, tau_r: f64, raw: Vec<f64>) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if !(0.0 <= tau_l && tau_l < tau_r && tau_r <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "basis truncation needs 0 <= tau_l < tau_r <= 1 (got {tau_l}, {tau_r})"
            )));
        }
        if raw.len() != k_max || raw.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "expected {k_max} finite k-prior log-weights"
            )));
        }
        let m = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = m + raw.iter().map(|w| (w - m).exp()).sum::<f64>().ln();
        Ok(Self {
            k_max,
            tau_l,
            tau_r,
            log_weights: raw.into_iter().map(|w| w - log_norm).collect(),
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn tau(&self) -> (f64, f64) {
        (self.tau_l, self.tau_r)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Argument at which the Beta density is evaluated for `x in [0, 1]`.
    #[inline]
    pub fn map_argument(&self, x: f64) -> f64 {
        self.tau_l + (self.tau_r - self.tau_l) * x
    }
}

impl Default for BernsteinConfig {
    fn default() -> Self {
        Self::new(300, 0.1, 0.9).expect("valid defaults")
    }
}

/// One atom: location `x` in `[0, pi]`, radial part `r > 0` and `d^2 - 1`
/// hyperspherical angles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub x: f64,
    pub r: f64,
    pub phi: Vec<f64>,
}

/// Truncated atom series with strictly decreasing radial parts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomSet {
    dim: usize,
    atoms: Vec<Atom>,
}

impl AtomSet {
    /// Angle counts are checked; ordering is not (a violated ordering is
    /// reported by [`log_prior_atoms`] as `-inf`).
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let m = angle_count(dim);
        if let Some(a) = atoms.iter().find(|a| a.phi.len() != m) {
            return Err(Error::WrongAngleCount {
                expected: m,
                got: a.phi.len(),
            });
        }
        Ok(Self { dim, atoms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, l: usize) -> &Atom {
        &self.atoms[l]
    }

    pub fn atom_mut(&mut self, l: usize) -> &mut Atom {
        &mut self.atoms[l]
    }

    pub fn is_ordered(&self) -> bool {
        self.atoms.windows(2).all(|w| w[0].r > w[1].r)
    }

    /// Scales every radial part by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.atoms.iter_mut().for_each(|a| a.r *= c);
        out
    }
}

pub fn angle_count(d: usize) -> usize {
    d * d - 1
}

/// Upper end of the range of angle `i` out of `m`: `pi` except for the last,
/// which lives on `[0, 2 pi)`.
#[inline]
pub fn angle_upper(i: usize, m: usize) -> f64 {
    if i + 1 == m {
        2.0 * PI
    } else {
        PI
    }
}

/// Unit vector of `R^{m+1}` from `m` hyperspherical angles.
fn unit_vector(phi: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(phi.len() + 1);
    let mut s = 1.0;
    for &a in phi {
        e.push(s * a.cos());
        s *= a.sin();
    }
    e.push(s);
    e
}

/// Unit-trace Hermitian positive semidefinite matrix `T T*`, where the lower
/// triangular `T` takes its real diagonal from the first `d` coordinates of
/// the hyperspherical unit vector and its complex sub-diagonal entries (row
/// by row) from consecutive pairs of the remaining ones.
pub fn spherical_from_angles(phi: &[f64], d: usize) -> Result<HpdMatrix> {
    if phi.len() != angle_count(d) {
        return Err(Error::WrongAngleCount {
            expected: angle_count(d),
            got: phi.len(),
        });
    }
    Ok(HpdMatrix::from_hermitian(spherical_unchecked(phi, d)))
}

pub(crate) fn spherical_unchecked(phi: &[f64], d: usize) -> CMatrix {
    let e = unit_vector(phi);
    let mut t = CMatrix::zeros(d);
    for i in 0..d {
        t[(i, i)] = Complex64::new(e[i], 0.0);
    }
    let mut pos = d;
    for i in 1..d {
        for j in 0..i {
            t[(i, j)] = Complex64::new(e[pos], e[pos + 1]);
            pos += 2;
        }
    }
    let mut u = CMatrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            let mut acc = Complex64::default();
            for c in 0..=j {
                acc += t[(i, c)] * t[(j, c)].conj();
            }
            u[(i, j)] = acc;
            u[(j, i)] = acc.conj();
        }
        u[(i, i)].im = 0.0;
    }
    u
}

/// Exponential integral `E_1(x) = int_x^inf e^{-t}/t dt`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidConfig(format!("E1 needs x > 0, got {x}")));
    }
    Ok(e1_from_ln(x.ln(), x))
}

/// `E_1(x)` given both `ln x` and `x`; the series branch uses `ln x` directly
/// so arguments below the smallest positive double remain meaningful.
fn e1_from_ln(ln_x: f64, x: f64) -> f64 {
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - ln_x - sum
    } else {
        // modified Lentz evaluation of the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut dd = 1.0 / b;
        let mut h = dd;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            dd = 1.0 / (an * dd + b);
            c = b + an / c;
            let del = c * dd;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Levy tail mass `C_alpha E_1(beta_0 r)` as a function of `ln r`.
pub fn levy_tail_ln(ln_r: f64, cfg: &LevyConfig) -> f64 {
    let ln_y = ln_r + cfg.beta0.ln();
    cfg.alpha_mass * e1_from_ln(ln_y, ln_y.exp())
}

/// `ln r` solving `C_alpha E_1(beta_0 r) = w`.
pub fn inverse_levy_ln(w: f64, cfg: &LevyConfig) -> f64 {
    assert!(w > 0.0, "inverse Levy intensity needs w > 0");
    let target = w / cfg.alpha_mass;
    // g(u) = E_1(e^u) - target, decreasing in u = ln(beta_0 r)
    let g = |u: f64| e1_from_ln(u, u.exp()) - target;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo = 2.0 * lo - 1.0;
    }
    while g(hi) > 0.0 {
        hi = 2.0 * hi + 1.0;
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gu = g(u);
        if gu.abs() <= 1e-15 * target.max(1.0) {
            break;
        }
        if gu > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if hi - lo <= 1e-15 * u.abs().max(1.0) {
            break;
        }
        // d/du E_1(e^u) = -exp(-e^u)
        let newton = u + gu / (-u.exp()).exp();
        u = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    u - cfg.beta0.ln()
}

/// Radial part `r` with `C_alpha E_1(beta_0 r) = w`. Results below the
/// smallest positive double are clamped to it; use [`inverse_levy_ln`] in that
/// regime.
pub fn inverse_levy(w: f64, cfg: &LevyConfig) -> f64 {
    inverse_levy_ln(w, cfg).exp().max(f64::MIN_POSITIVE)
}

/// Draws `L` atoms: locations and angles uniform, radial parts from the
/// cumulative unit-exponential arrivals through the inverse Levy intensity.
pub fn sample_atoms_series(cfg: &LevyConfig, l: usize, d: usize, seed: u64) -> AtomSet {
    sample_atoms_series_with(cfg, l, d, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_atoms_series_with(
    cfg: &LevyConfig,
    l: usize,
    d: usize,
    rng: &mut impl Rng,
) -> AtomSet {
    let m = angle_count(d);
    let mut atoms = Vec::with_capacity(l);
    let mut w = 0.0;
    for _ in 0..l {
        // a vanishing arrival gap would tie two radial parts at double precision
        let r = loop {
            let gap: f64 = rng.sample(Exp1);
            let r = inverse_levy(w + gap, cfg);
            if atoms.last().is_none_or(|a: &Atom| a.r > r) {
                w += gap;
                break r;
            }
        };
        let x = rng.random::<f64>() * PI;
        let phi = (0..m)
            .map(|i| rng.random::<f64>() * angle_upper(i, m))
            .collect();
        atoms.push(Atom { x, r, phi });
    }
    AtomSet { dim: d, atoms }
}

/// Log-density of one atom's angles (uniform over their ranges).
pub fn log_angle_density(d: usize) -> f64 {
    let m = angle_count(d);
    if m == 0 {
        0.0
    } else {
        -((m - 1) as f64) * PI.ln() - (2.0 * PI).ln()
    }
}

/// Joint log-density of the `L` largest points of the Poisson process with
/// intensity `C e^{-b r}/r` on the ordered cone, times uniform locations and
/// angles. `-inf` outside the support.
pub fn log_prior_atoms(a: &AtomSet, cfg: &LevyConfig) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let m = angle_count(a.dim);
    let mut lp = 0.0;
    for (idx, atom) in a.atoms.iter().enumerate() {
        if !(atom.r > 0.0 && atom.r.is_finite()) || !(0.0..=PI).contains(&atom.x) {
            return f64::NEG_INFINITY;
        }
        if idx > 0 && !(a.atoms[idx - 1].r > atom.r) {
            return f64::NEG_INFINITY;
        }
        for (i, &p) in atom.phi.iter().enumerate() {
            let upper = angle_upper(i, m);
            let inside = if i + 1 == m {
                (0.0..upper).contains(&p)
            } else {
                (0.0..=upper).contains(&p)
            };
            if !inside {
                return f64::NEG_INFINITY;
            }
        }
        lp += cfg.alpha_mass.ln() - cfg.beta0 * atom.r - atom.r.ln();
    }
    let r_last = a.atoms.last().expect("non-empty").r;
    lp -= levy_tail_ln(r_last.ln(), cfg);
    lp += a.len() as f64 * (-(PI.ln()) + log_angle_density(a.dim));
    lp
}

pub fn log_prior_k(k: usize, cfg: &BernsteinConfig) -> f64 {
    if k == 0 || k > cfg.k_max {
        f64::NEG_INFINITY
    } else {
        cfg.log_weights[k - 1]
    }
}

fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(2049);
        t.push(0.0);
        for i in 1..=2048 {
            t.push(t[i - 1] + (i as f64).ln());
        }
        t
    });
    if n < table.len() {
        table[n]
    } else {
        table[table.len() - 1] + ((table.len())..=n).map(|i| (i as f64).ln()).sum::<f64>()
    }
}

/// `ln` of the normalizing constant of the Beta(j, k-j+1) density,
/// `ln(k C(k-1, j-1))`.
#[inline]
pub(crate) fn ln_beta_norm(j: usize, k: usize) -> f64 {
    (k as f64).ln() + ln_factorial(k - 1) - ln_factorial(j - 1) - ln_factorial(k - j)
}

/// Beta(j, k-j+1) density at `y in [0, 1]`.
pub fn beta_density(y: f64, j: usize, k: usize) -> f64 {
    debug_assert!(1 <= j && j <= k);
    if y <= 0.0 {
        return if j == 1 { k as f64 } else { 0.0 };
    }
    if y >= 1.0 {
        return if j == k { k as f64 } else { 0.0 };
    }
    beta_density_ln_args(y.ln(), (1.0 - y).ln(), j, k)
}

#[inline]
pub(crate) fn beta_density_ln_args(ln_y: f64, ln_1my: f64, j: usize, k: usize) -> f64 {
    (ln_beta_norm(j, k) + (j - 1) as f64 * ln_y + (k - j) as f64 * ln_1my).exp()
}

/// Basis function `j` of degree `k` at `x in [0, 1]`; in truncated mode the
/// Beta density is evaluated at `tau_l + (tau_r - tau_l) x`.
pub fn bernstein_basis(x: f64, j: usize, k: usize, cfg: &BernsteinConfig) -> f64 {
    beta_density(cfg.map_argument(x), j, k)
}

/// Bin `j in 1..=k` of location `x`: `((j-1) pi/k, j pi/k]`, with `x = 0` in
/// bin 1.
#[inline]
pub fn bin_of(x: f64, k: usize) -> usize {
    ((x * k as f64 / PI).ceil() as usize).clamp(1, k)
}

/// `Q(w) = sum_l r_l U_l b(w/pi | bin(x_l), k)`, which equals the Bernstein
/// mixture over bins because bins without atoms carry zero mass.
pub fn eval_q(a: &AtomSet, k: usize, omega: f64, cfg: &BernsteinConfig) -> HpdMatrix {
    let d = a.dim;
    let mut q = CMatrix::zeros(d);
    for atom in &a.atoms {
        let b = bernstein_basis(omega / PI, bin_of(atom.x, k), k, cfg);
        if b != 0.0 {
            q.add_scaled(atom.r * b, &spherical_unchecked(&atom.phi, d));
        }
    }
    HpdMatrix::from_hermitian(q)
}

/// Bin masses `Phi(I_{j,k})` for `j = 1..=k`.
pub fn bin_masses(a: &AtomSet, k: usize) -> Vec<CMatrix> {
    let mut phi = vec![CMatrix::zeros(a.dim); k];
    for atom in &a.atoms {
        phi[bin_of(atom.x, k) - 1].add_scaled(atom.r, &spherical_unchecked(&atom.phi, a.dim));
    }
    phi
}

/// Default truncation level `max(20, ceil(n^{1/3}))`.
pub fn default_truncation(n: usize) -> usize {
    20.max((n as f64).cbrt().ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigen;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// Composite Simpson on a log-spaced grid for `int_x^inf e^{-t}/t dt`.
    fn e1_quadrature(x: f64) -> f64 {
        // substitute t = e^s: int_{ln x}^{inf} exp(-e^s) ds
        let (a, b) = (x.ln(), 4.0f64);
        let m = 200_000;
        let h = (b - a) / m as f64;
        let f = |s: f64| (-(s.exp())).exp();
        let mut acc = f(a) + f(b);
        for i in 1..m {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn e1_against_quadrature() {
        for &x in &[1e-3, 0.1, 0.5, 1.0, 1.5, 3.0] {
            let e = exp_integral_e1(x).unwrap();
            let q = e1_quadrature(x);
            assert!((e - q).abs() < 1e-10 * q, "x={x}: {e} vs {q}");
        }
        approx(exp_integral_e1(1.0).unwrap(), 0.219_383_9, 1e-7);
        approx(exp_integral_e1(0.001).unwrap(), 6.331_539_4, 1e-7);
        assert!(exp_integral_e1(2.0).unwrap() < exp_integral_e1(1.0).unwrap());
        assert!(exp_integral_e1(0.0).is_err());
        // both branches agree at the switch point
        let below = e1_from_ln((1.0f64 - 1e-12).ln(), 1.0 - 1e-12);
        let above = e1_from_ln((1.0f64 + 1e-12).ln(), 1.0 + 1e-12);
        assert!((below - above).abs() < 1e-11);
    }

    #[test]
    fn inverse_levy_examples() {
        let cfg = LevyConfig::new(1.0, 1.0).unwrap();
        approx(inverse_levy(0.219_383_934_395_520_3, &cfg), 1.0, 1e-9);
        for &w in &[1e-3, 1.0] {
            let r = inverse_levy(w, &cfg);
            let back = exp_integral_e1(r).unwrap();
            assert!((back - w).abs() < 1e-9 * w.max(1.0), "w={w}");
            assert!(inverse_levy(2.0 * w, &cfg) < r);
        }
        // w = 1e3 puts r near e^{-1000}; the defining equation holds in log form
        let ln_r = inverse_levy_ln(1e3, &cfg);
        assert!((levy_tail_ln(ln_r, &cfg) - 1e3).abs() < 1e-9 * 1e3);
        let big = LevyConfig::new(10.0, 1.0).unwrap();
        let r = inverse_levy(1e3, &big);
        assert!((10.0 * exp_integral_e1(r).unwrap() - 1e3).abs() < 1e-9 * 1e3);
    }

    #[test]
    fn spherical_examples() {
        let u = spherical_from_angles(&[], 1).unwrap();
        assert_eq!(u[(0, 0)], Complex64::new(1.0, 0.0));
        let u = spherical_from_angles(&[0.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(u[(0, 0)].re, 1.0);
        assert!(u[(1, 1)].norm() < 1e-30 && u[(0, 1)].norm() < 1e-30);
        assert!(matches!(
            spherical_from_angles(&[0.0; 2], 2),
            Err(Error::WrongAngleCount {
                expected: 3,
                got: 2
            })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let phi: Vec<f64> = (0..8)
                .map(|i| rng.random::<f64>() * angle_upper(i, 8))
                .collect();
            let u = spherical_from_angles(&phi, 3).unwrap();
            approx(u.matrix().trace().re, 1.0, 1e-12);
            assert!(hermitian_eigen(u.matrix()).unwrap().min() >= -1e-12);
        }
    }

    #[test]
    fn log_prior_worked_value() {
        let cfg = LevyConfig::new(1.0, 1.0).unwrap();
        let a = AtomSet::new(
            1,
            vec![Atom {
                x: 1.0,
                r: 1.0,
                phi: vec![],
            }],
        )
        .unwrap();
        approx(log_prior_atoms(&a, &cfg), -2.364_114, 1e-6);
    }

    #[test]
    fn log_prior_support() {
        let cfg = LevyConfig::new(1.0, 1.0).unwrap();
        let atom = |x: f64, r: f64| Atom {
            x,
            r,
            phi: vec![0.5, 0.5, 1.0],
        };
        let good = AtomSet::new(2, vec![atom(0.1, 2.0), atom(0.2, 1.0)]).unwrap();
        assert!(log_prior_atoms(&good, &cfg).is_finite());
        let swapped = AtomSet::new(2, vec![atom(0.1, 1.0), atom(0.2, 2.0)]).unwrap();
        assert_eq!(log_prior_atoms(&swapped, &cfg), f64::NEG_INFINITY);
        let tied = AtomSet::new(2, vec![atom(0.1, 1.0), atom(0.2, 1.0)]).unwrap();
        assert_eq!(log_prior_atoms(&tied, &cfg), f64::NEG_INFINITY);
        let outside = AtomSet::new(2, vec![atom(3.5, 2.0)]).unwrap();
        assert_eq!(log_prior_atoms(&outside, &cfg), f64::NEG_INFINITY);
        let bad_angle = AtomSet::new(
            2,
            vec![Atom {
                x: 0.1,
                r: 1.0,
                phi: vec![0.5, 4.0, 1.0],
            }],
        )
        .unwrap();
        assert_eq!(log_prior_atoms(&bad_angle, &cfg), f64::NEG_INFINITY);
        let wrapped = AtomSet::new(
            2,
            vec![Atom {
                x: 0.1,
                r: 1.0,
                phi: vec![0.5, 0.5, 2.0 * PI],
            }],
        )
        .unwrap();
        assert_eq!(log_prior_atoms(&wrapped, &cfg), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_ignores_locations_and_angles_beyond_support() {
        let cfg = LevyConfig::default_for_dim(2);
        let a = sample_atoms_series(&cfg, 5, 2, 1);
        let mut b = a.clone();
        b.atom_mut(2).x = 0.3;
        b.atom_mut(3).phi[0] = 0.1;
        assert_eq!(log_prior_atoms(&a, &cfg), log_prior_atoms(&b, &cfg));
    }

    #[test]
    fn sampled_series_is_ordered_and_supported() {
        let cfg = LevyConfig::default_for_dim(2);
        for seed in 0..200 {
            let a = sample_atoms_series(&cfg, 20, 2, seed);
            assert!(a.is_ordered());
            assert!(log_prior_atoms(&a, &cfg).is_finite());
        }
    }

    #[test]
    fn k_prior_examples() {
        let cfg = BernsteinConfig::default();
        let ratio = (log_prior_k(1, &cfg) - log_prior_k(2, &cfg)).exp();
        approx(ratio, (0.02 * 2.0f64.ln()).exp(), 1e-12);
        approx(ratio, 1.013_963, 5e-6);
        approx(cfg.weights().iter().sum::<f64>(), 1.0, 1e-12);
        let span = log_prior_k(300, &cfg) - log_prior_k(1, &cfg);
        approx(span, -3.0 * 300f64.ln(), 1e-12);
        approx(span, -17.1117, 5e-4);
        assert_eq!(log_prior_k(0, &cfg), f64::NEG_INFINITY);
        assert_eq!(log_prior_k(301, &cfg), f64::NEG_INFINITY);
    }

    #[test]
    fn basis_examples() {
        let cfg = BernsteinConfig::untruncated(300).unwrap();
        approx(bernstein_basis(0.5, 1, 1, &cfg), 1.0, 1e-14);
        approx(bernstein_basis(0.25, 2, 2, &cfg), 0.5, 1e-14);
        approx(bernstein_basis(0.3, 1, 2, &cfg), 1.4, 1e-14);
        approx(bernstein_basis(0.0, 1, 5, &cfg), 5.0, 0.0);
        approx(bernstein_basis(1.0, 1, 2, &cfg), 0.0, 0.0);
        for k in [1usize, 2, 7, 50, 300] {
            for &x in &[0.0, 0.13, 0.5, 0.99, 1.0] {
                let s: f64 =
                    (1..=k).map(|j| bernstein_basis(x, j, k, &cfg)).sum::<f64>() / k as f64;
                approx(s, 1.0, 1e-11);
            }
        }
    }

    #[test]
    fn truncated_basis_is_positive_at_endpoints() {
        let cfg = BernsteinConfig::default();
        for k in [1usize, 2, 10, 40] {
            for j in 1..=k {
                assert!(bernstein_basis(0.0, j, k, &cfg) > 0.0);
                assert!(bernstein_basis(1.0, j, k, &cfg) > 0.0);
            }
        }
    }

    #[test]
    fn bins_follow_left_open_partition() {
        assert_eq!(bin_of(0.0, 4), 1);
        assert_eq!(bin_of(PI / 4.0, 4), 1);
        assert_eq!(bin_of(PI / 4.0 + 1e-12, 4), 2);
        assert_eq!(bin_of(PI, 4), 4);
        assert_eq!(bin_of(1.0, 1), 1);
    }

    #[test]
    fn q_examples() {
        let cfg = BernsteinConfig::untruncated(300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = sample_atoms_series_with(&LevyConfig::new(1.0, 1.0).unwrap(), 1, 2, &mut rng);
        let u = spherical_from_angles(&a.atom(0).phi, 2).unwrap();
        for &w in &[0.0, 1.0, PI] {
            let q = eval_q(&a, 1, w, &cfg);
            let diff = (q.matrix() - &u.matrix().scale(a.atom(0).r)).frobenius_norm();
            assert!(diff < 1e-12);
        }

        let mut two = sample_atoms_series(&LevyConfig::default_for_dim(2), 4, 2, 2);
        for l in 0..4 {
            two.atom_mut(l).x = 0.1 * (l + 1) as f64;
        }
        let q0 = eval_q(&two, 2, 1e-9, &cfg);
        let phi = bin_masses(&two, 2);
        assert!(
            (q0.matrix() - &phi[0].scale(2.0)).frobenius_norm() < 1e-6 * phi[0].frobenius_norm()
        );
        assert!(eval_q(&two, 2, PI, &cfg).matrix().frobenius_norm() == 0.0);
    }

    #[test]
    fn q_is_psd_homogeneous_and_bin_determined() {
        let cfg = BernsteinConfig::default();
        let a = sample_atoms_series(&LevyConfig::default_for_dim(2), 20, 2, 3);
        let k = 7;
        let mut moved = a.clone();
        for l in 0..a.len() {
            let b = bin_of(a.atom(l).x, k);
            // somewhere else inside the same bin
            moved.atom_mut(l).x = (b as f64 - 0.5) * PI / k as f64;
        }
        let scaled = a.scaled(2.5);
        for i in 0..100 {
            let w = PI * i as f64 / 99.0;
            let q = eval_q(&a, k, w, &cfg);
            assert!(
                hermitian_eigen(q.matrix()).unwrap().min() >= -1e-12 * q.matrix().frobenius_norm()
            );
            let qs = eval_q(&scaled, k, w, &cfg);
            assert!(
                (qs.matrix() - &q.matrix().scale(2.5)).frobenius_norm()
                    <= 1e-12 * qs.matrix().frobenius_norm()
            );
            assert_eq!(eval_q(&moved, k, w, &cfg).matrix(), q.matrix());
        }
    }
}
