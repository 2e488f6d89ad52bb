//! Posterior summaries on the realified scale: pointwise medians, pointwise
//! and uniform credible bands, squared coherency and error norms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{derealify_components, realify_into, CMatrix, HpdMatrix};
use crate::sampler::PosteriorDraws;
use crate::timefreq::FrequencyGrid;

/// Floor applied to the median absolute deviation before normalizing.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Minimum number of draws for a uniform region.
pub const MIN_UNIFORM_DRAWS: usize = 10;

/// Type-7 sample quantile (linear interpolation between order statistics)
/// of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    assert!(m > 0, "quantile of an empty sample");
    let h = (m - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median; mean of the two central order statistics for even length.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    assert!(m > 0, "median of an empty sample");
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Label of realified component `idx` of a `d x d` matrix: `f11`, `re_f12`,
/// `im_f12`, `f22`, ...
pub fn component_label(d: usize, idx: usize) -> String {
    let (i, j) = (idx / d, idx % d);
    match i.cmp(&j) {
        std::cmp::Ordering::Equal => format!("f{}{}", i + 1, i + 1),
        std::cmp::Ordering::Less => format!("re_f{}{}", i + 1, j + 1),
        std::cmp::Ordering::Greater => format!("im_f{}{}", j + 1, i + 1),
    }
}

/// Realified values of a draw set, indexed `[m][j][c]` flattened.
#[derive(Clone, Copy, Debug)]
pub struct DrawView<'a> {
    pub values: &'a [f64],
    pub draws: usize,
    pub freqs: usize,
    pub comps: usize,
}

impl<'a> DrawView<'a> {
    pub fn new(values: &'a [f64], freqs: usize, comps: usize) -> Self {
        let block = freqs * comps;
        let draws = values.len().checked_div(block).unwrap_or(0);
        Self {
            values,
            draws,
            freqs,
            comps,
        }
    }

    pub fn from_draws(d: &'a PosteriorDraws) -> Self {
        Self::new(&d.spectra, d.half_len(), d.d * d.d)
    }

    #[inline]
    fn at(&self, m: usize, j: usize, c: usize) -> f64 {
        self.values[(m * self.freqs + j) * self.comps + c]
    }

    fn column(&self, j: usize, c: usize) -> Vec<f64> {
        (0..self.draws).map(|m| self.at(m, j, c)).collect()
    }
}

/// Componentwise median of realified draws, layout `[j][c]`.
pub fn realified_median(view: DrawView<'_>) -> Result<Vec<f64>> {
    if view.draws == 0 {
        return Err(Error::InsufficientData(
            "no posterior draws to summarize".into(),
        ));
    }
    let mut out = Vec::with_capacity(view.freqs * view.comps);
    for j in 0..view.freqs {
        for c in 0..view.comps {
            out.push(median_sorted(&sorted(view.column(j, c))));
        }
    }
    Ok(out)
}

/// Pointwise median spectral matrices, one per half-grid frequency.
pub fn pointwise_median(draws: &PosteriorDraws) -> Result<Vec<HpdMatrix>> {
    let d = draws.d;
    let med = realified_median(DrawView::from_draws(draws))?;
    Ok(med
        .chunks(d * d)
        .map(|h| HpdMatrix::from_hermitian(derealify_components(d, h)))
        .collect())
}

/// Simultaneous band `center +- xi * sigma` around the pointwise median.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformRegion {
    pub level: f64,
    pub xi: f64,
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl UniformRegion {
    /// Whether realified values (layout `[j][c]`) lie inside the band.
    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.center.len()
            && values
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Uniform credible region at `level`: `xi` is the `ceil(level M)`-th order
/// statistic of the per-draw maximal normalized deviations
/// `max_{j,c} |h_c^{(m)}(w_j) - median_c(w_j)| / mad_c(w_j)`.
pub fn uniform_region(view: DrawView<'_>, level: f64) -> Result<UniformRegion> {
    if view.draws < MIN_UNIFORM_DRAWS {
        return Err(Error::InsufficientData(format!(
            "a uniform region needs at least {MIN_UNIFORM_DRAWS} draws, got {}",
            view.draws
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "credible level {level} outside (0, 1)"
        )));
    }
    let center = realified_median(view)?;
    let mut sigma = Vec::with_capacity(center.len());
    for j in 0..view.freqs {
        for c in 0..view.comps {
            let h = center[j * view.comps + c];
            let dev: Vec<f64> = view
                .column(j, c)
                .into_iter()
                .map(|v| (v - h).abs())
                .collect();
            sigma.push(median_sorted(&sorted(dev)).max(SIGMA_FLOOR));
        }
    }
    let block = view.freqs * view.comps;
    let sup: Vec<f64> = (0..view.draws)
        .map(|m| {
            let draw = &view.values[m * block..(m + 1) * block];
            draw.iter()
                .zip(center.iter().zip(&sigma))
                .map(|(v, (h, s))| (v - h).abs() / s)
                .fold(0.0, f64::max)
        })
        .collect();
    let sup = sorted(sup);
    let rank = ((level * view.draws as f64).ceil() as usize).clamp(1, view.draws);
    let xi = sup[rank - 1];
    let lower = center.iter().zip(&sigma).map(|(h, s)| h - xi * s).collect();
    let upper = center.iter().zip(&sigma).map(|(h, s)| h + xi * s).collect();
    Ok(UniformRegion {
        level,
        xi,
        center,
        sigma,
        lower,
        upper,
    })
}

/// Pointwise type-7 quantile bands `(lower, upper)` at `(1 -+ level) / 2`.
pub fn pointwise_bands(view: DrawView<'_>, level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if view.draws == 0 {
        return Err(Error::InsufficientData(
            "no posterior draws to summarize".into(),
        ));
    }
    let a = 0.5 * (1.0 - level);
    let mut lo = Vec::with_capacity(view.freqs * view.comps);
    let mut hi = Vec::with_capacity(view.freqs * view.comps);
    for j in 0..view.freqs {
        for c in 0..view.comps {
            let col = sorted(view.column(j, c));
            lo.push(quantile_sorted(&col, a));
            hi.push(quantile_sorted(&col, 1.0 - a));
        }
    }
    Ok((lo, hi))
}

/// `|f_ij|^2 / (f_ii f_jj)`.
pub fn squared_coherency(f: &CMatrix, i: usize, j: usize) -> Result<f64> {
    let (a, b) = (f[(i, i)].re, f[(j, j)].re);
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::NonPositiveDiagonal { value: a.min(b) });
    }
    let k = f[(i, j)].norm_sqr() / (a * b);
    if k > 1.0 && k <= 1.0 + 1e-12 {
        return Ok(1.0);
    }
    Ok(k)
}

/// Posterior median and pointwise band of the squared coherency of one pair,
/// computed draw by draw.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoherencySummary {
    pub pair: (usize, usize),
    pub omegas: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn coherency_summary(
    draws: &PosteriorDraws,
    i: usize,
    j: usize,
    level: f64,
) -> Result<CoherencySummary> {
    let d = draws.d;
    if i >= d || j >= d || i == j {
        return Err(Error::InvalidConfig(format!(
            "coherency pair ({}, {}) invalid for d = {d}",
            i + 1,
            j + 1
        )));
    }
    let h = draws.half_len();
    let m = draws.len();
    let mut values = Vec::with_capacity(m * h);
    for draw in 0..m {
        for jj in 0..h {
            let f = derealify_components(d, draws.realified(draw, jj));
            values.push(squared_coherency(&f, i, j)?);
        }
    }
    let view = DrawView::new(&values, h, 1);
    let median = realified_median(view)?;
    let (lower, upper) = pointwise_bands(view, level)?;
    Ok(CoherencySummary {
        pair: (i, j),
        omegas: draws.grid.omegas(),
        median,
        lower,
        upper,
    })
}

/// Trapezoid weights on the half grid.
pub fn trapezoid_weights(omegas: &[f64]) -> Vec<f64> {
    let h = omegas.len();
    (0..h)
        .map(|j| {
            let left = if j > 0 {
                omegas[j] - omegas[j - 1]
            } else {
                0.0
            };
            let right = if j + 1 < h {
                omegas[j + 1] - omegas[j]
            } else {
                0.0
            };
            0.5 * (left + right)
        })
        .collect()
}

/// Integrated Frobenius errors `(L1, L2)` over the half grid, trapezoid rule,
/// normalized by the integration range.
pub fn l1_l2_error(
    grid: &FrequencyGrid,
    estimate: &[CMatrix],
    truth: &[CMatrix],
) -> Result<(f64, f64)> {
    let h = grid.half_len();
    if estimate.len() != h || truth.len() != h {
        return Err(Error::GridMismatch);
    }
    let omegas = grid.omegas();
    let w = trapezoid_weights(&omegas);
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::InsufficientData(
            "error norms need at least two frequencies".into(),
        ));
    }
    let (mut l1, mut l2) = (0.0, 0.0);
    for j in 0..h {
        if estimate[j].dim() != truth[j].dim() {
            return Err(Error::DimensionMismatch {
                expected: truth[j].dim(),
                got: estimate[j].dim(),
            });
        }
        let e = (&estimate[j] - &truth[j]).frobenius_norm();
        l1 += w[j] * e;
        l2 += w[j] * e * e;
    }
    Ok((l1 / total, (l2 / total).sqrt()))
}

/// Whether `truth` lies inside the uniform region, and the per-component
/// widths `2 xi median_j sigma_c(w_j)`.
pub fn coverage_and_width(region: &UniformRegion, truth: &[CMatrix]) -> Result<(bool, Vec<f64>)> {
    let d = truth.first().map_or(0, |t| t.dim());
    let comps = d * d;
    if truth.len() * comps != region.center.len() || comps == 0 {
        return Err(Error::GridMismatch);
    }
    let mut flat = vec![0.0; truth.len() * comps];
    for (t, chunk) in truth.iter().zip(flat.chunks_mut(comps)) {
        realify_into(t, chunk);
    }
    Ok((region.contains(&flat), widths(region, comps)))
}

fn widths(region: &UniformRegion, comps: usize) -> Vec<f64> {
    (0..comps)
        .map(|c| {
            let col: Vec<f64> = region
                .sigma
                .iter()
                .skip(c)
                .step_by(comps)
                .copied()
                .collect();
            2.0 * region.xi * median_sorted(&sorted(col))
        })
        .collect()
}

/// Scalar accuracy figures against a known truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthComparison {
    pub l1: f64,
    pub l2: f64,
    pub covered: bool,
}

/// Everything reported for one fitted chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryBundle {
    pub d: usize,
    pub level: f64,
    pub omegas: Vec<f64>,
    pub median: Vec<f64>,
    pub lo_pointwise: Vec<f64>,
    pub hi_pointwise: Vec<f64>,
    pub region: UniformRegion,
    pub widths: Vec<f64>,
    pub coherency: Vec<CoherencySummary>,
    pub truth: Option<TruthComparison>,
}

impl SummaryBundle {
    pub fn new(draws: &PosteriorDraws, level: f64) -> Result<Self> {
        let view = DrawView::from_draws(draws);
        let region = uniform_region(view, level)?;
        let (lo, hi) = pointwise_bands(view, level)?;
        let d = draws.d;
        let mut coherency = Vec::new();
        for i in 0..d {
            for j in (i + 1)..d {
                coherency.push(coherency_summary(draws, i, j, level)?);
            }
        }
        Ok(Self {
            d,
            level,
            omegas: draws.grid.omegas(),
            median: region.center.clone(),
            lo_pointwise: lo,
            hi_pointwise: hi,
            widths: widths(&region, d * d),
            region,
            coherency,
            truth: None,
        })
    }

    /// Attaches L1/L2 errors of the pointwise median and uniform-region
    /// coverage against `truth`.
    pub fn compare_truth(
        &mut self,
        grid: &FrequencyGrid,
        truth: &[CMatrix],
    ) -> Result<&TruthComparison> {
        let est = self.median_matrices();
        let (l1, l2) = l1_l2_error(grid, &est, truth)?;
        let (covered, _) = coverage_and_width(&self.region, truth)?;
        Ok(self.truth.insert(TruthComparison { l1, l2, covered }))
    }

    pub fn median_matrices(&self) -> Vec<CMatrix> {
        self.median
            .chunks(self.d * self.d)
            .map(|h| derealify_components(self.d, h))
            .collect()
    }

    pub fn component_labels(&self) -> Vec<String> {
        (0..self.d * self.d)
            .map(|c| component_label(self.d, c))
            .collect()
    }

    /// Column `c` of a `[j][c]` array.
    pub fn component<'a>(&self, values: &'a [f64], c: usize) -> impl Iterator<Item = f64> + 'a {
        values.iter().skip(c).step_by(self.d * self.d).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Procedure;

    fn draws_from(values: &[Vec<f64>], d: usize, n: usize) -> PosteriorDraws {
        let grid = FrequencyGrid::new(n).unwrap();
        let mats: Vec<Vec<HpdMatrix>> = values
            .iter()
            .map(|per| {
                per.chunks(d * d)
                    .map(|h| HpdMatrix::from_hermitian(derealify_components(d, h)))
                    .collect()
            })
            .collect();
        PosteriorDraws::from_matrices(grid, Procedure::Vnp, &mats).unwrap()
    }

    #[test]
    fn quantiles_and_medians() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median_sorted(&s), 2.5);
        assert_eq!(median_sorted(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.05) - 1.15).abs() < 1e-15);
    }

    #[test]
    fn diagonal_medians() {
        // n = 2 gives the two boundary frequencies only
        let diag = |v: f64| vec![v, 0.0, 0.0, v, v, 0.0, 0.0, v];
        let draws = draws_from(&[diag(1.0), diag(3.0), diag(2.0)], 2, 2);
        let med = pointwise_median(&draws).unwrap();
        assert_eq!(med.len(), 2);
        assert_eq!(med[0].matrix(), &CMatrix::identity(2).scale(2.0));
        let single = draws_from(&[vec![1.5, 0.2, 0.0, 2.0, 1.0, 0.0, 0.0, 1.0]], 2, 2);
        assert_eq!(
            pointwise_median(&single).unwrap()[0].matrix(),
            single.spectral_matrix(0, 0).matrix()
        );
    }

    #[test]
    fn uniform_region_identical_draws_is_degenerate() {
        let vals = vec![1.0, 2.0, 3.0, 4.0];
        let view_vals: Vec<f64> = (0..20).flat_map(|_| vals.clone()).collect();
        let r = uniform_region(DrawView::new(&view_vals, 2, 2), 0.9).unwrap();
        assert_eq!(r.xi, 0.0);
        assert_eq!(r.lower, r.upper);
    }

    #[test]
    fn uniform_region_alternating_oracle() {
        // one component, ten draws at 0 +- c (five each): median 0, MAD c
        let c = 0.7;
        let vals: Vec<f64> = (0..10).map(|m| if m % 2 == 0 { c } else { -c }).collect();
        let r = uniform_region(DrawView::new(&vals, 1, 1), 0.9).unwrap();
        assert!((r.sigma[0] - c).abs() < 1e-15);
        assert!((r.xi - 1.0).abs() < 1e-15);
        assert!((r.upper[0] - c).abs() < 1e-15);
    }

    #[test]
    fn uniform_region_needs_ten_draws() {
        let vals = vec![0.0; 9];
        assert!(uniform_region(DrawView::new(&vals, 1, 1), 0.9).is_err());
    }

    #[test]
    fn coherency_examples() {
        let diag = CMatrix::from_real(2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(squared_coherency(&diag, 0, 1).unwrap(), 0.0);
        let f = CMatrix::from_real(2, &[1.0, 0.6, 0.6, 1.0]).unwrap();
        assert!((squared_coherency(&f, 0, 1).unwrap() - 0.36).abs() < 1e-15);
        let zero = CMatrix::from_real(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(squared_coherency(&zero, 0, 1).is_err());
    }

    #[test]
    fn error_norms_of_constant_offset() {
        let grid = FrequencyGrid::new(64).unwrap();
        let truth: Vec<CMatrix> = (0..grid.half_len()).map(|_| CMatrix::identity(3)).collect();
        assert_eq!(l1_l2_error(&grid, &truth, &truth).unwrap(), (0.0, 0.0));
        let est: Vec<CMatrix> = truth.iter().map(|t| t.scale(1.25)).collect();
        let (l1, l2) = l1_l2_error(&grid, &est, &truth).unwrap();
        let want = 3f64.sqrt() * 0.25;
        assert!((l1 - want).abs() < 1e-14 && (l2 - want).abs() < 1e-14);
        assert!(matches!(
            l1_l2_error(&grid, &est[1..], &truth),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn coverage_of_median_and_shifted_truth() {
        let n = 16;
        let h = FrequencyGrid::new(n).unwrap().half_len();
        let vals: Vec<Vec<f64>> = (0..25)
            .map(|m| {
                (0..h)
                    .flat_map(|j| [1.0 + 0.01 * ((m * 7 + j) % 11) as f64])
                    .collect()
            })
            .collect();
        let draws = draws_from(&vals, 1, n);
        let region = uniform_region(DrawView::from_draws(&draws), 0.9).unwrap();
        let med = pointwise_median(&draws).unwrap();
        let med: Vec<CMatrix> = med.into_iter().map(|m| m.into_matrix()).collect();
        assert!(coverage_and_width(&region, &med).unwrap().0);
        let mut shifted = med.clone();
        shifted[3] = shifted[3].scale(10.0);
        assert!(!coverage_and_width(&region, &shifted).unwrap().0);
    }

    #[test]
    fn labels() {
        let l: Vec<String> = (0..4).map(|c| component_label(2, c)).collect();
        assert_eq!(l, ["f11", "re_f12", "im_f12", "f22"]);
    }
}
