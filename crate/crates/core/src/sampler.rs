//! Metropolis-within-Gibbs sampler over `(k, radial parts, locations, angles,
//! VAR coefficients)` and the conjugate parametric VAR baseline.
//!
//! One sweep updates, in order: the Bernstein degree `k`, every radial part,
//! every location, every angle vector, and each lag block of the stacked VAR
//! coefficients. Proposal scales adapt on the log scale every 50 iterations
//! during burn-in and are frozen afterwards.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{BasisTable, CorrectedEvaluator, SpectralData, WorkingSpectrum};
use crate::linalg::{derealify_components, realify_into, CMatrix, HpdMatrix};
use crate::prior::{
    angle_count, angle_upper, bin_of, default_truncation, log_prior_atoms, log_prior_k,
    sample_atoms_series_with, spherical_unchecked, AtomSet, BernsteinConfig, LevyConfig,
};
use crate::timefreq::{FrequencyGrid, TimeSeries};
use crate::var::{beta_block, fit_ols, fit_ols_window, var_spectral_density_on_grid, VarParams};

const INIT_ATTEMPTS: usize = 100;

/// Which posterior to sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Procedure {
    /// Corrected likelihood with a VAR(`order`) working model.
    Vnpc { order: usize },
    /// Whittle-type nonparametric procedure (white-noise working model).
    Vnp,
    /// Conjugate parametric VAR(`order`).
    Var { order: usize },
}

impl Procedure {
    pub fn label(&self) -> String {
        match self {
            Procedure::Vnpc { order } => format!("VNPC({order})"),
            Procedure::Vnp => "VNP".into(),
            Procedure::Var { order } => format!("VAR({order})"),
        }
    }

    /// Working-model order (0 for VNP).
    pub fn order(&self) -> usize {
        match *self {
            Procedure::Vnpc { order } | Procedure::Var { order } => order,
            Procedure::Vnp => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Truncation level `L`; `None` means `max(20, ceil(n^{1/3}))`.
    pub truncation: Option<usize>,
    pub seed: u64,
    /// Stream of the ChaCha generator, for independent replications under one
    /// seed.
    pub stream: u64,
    pub procedure: Procedure,
    /// `None` means `C_alpha = 1`, `beta_0 = d * 1e-4`.
    pub levy: Option<LevyConfig>,
    pub bernstein: BernsteinConfig,
    pub adapt_batch: usize,
    pub target_acceptance: f64,
    pub k_jump: usize,
    pub initial_k: usize,
    /// Sweeps between cache-coherence checks (0 disables them).
    pub coherence_every: usize,
    /// Drop the likelihood and sample the prior.
    pub prior_only: bool,
    /// Store spectral density draws (disable for prior-only diagnostics).
    pub record_spectra: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 80_000,
            burn_in: 30_000,
            thin: 5,
            truncation: None,
            seed: 0,
            stream: 0,
            procedure: Procedure::Vnp,
            levy: None,
            bernstein: BernsteinConfig::default(),
            adapt_batch: 50,
            target_acceptance: 0.44,
            k_jump: 3,
            initial_k: 10,
            coherence_every: 1000,
            prior_only: false,
            record_spectra: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thinning must be at least 1".into()));
        }
        if self.truncation == Some(0) {
            return Err(Error::InvalidConfig(
                "truncation level L must be at least 1".into(),
            ));
        }
        if self.k_jump == 0 || self.adapt_batch == 0 {
            return Err(Error::InvalidConfig(
                "k jump width and adaptation batch must be positive".into(),
            ));
        }
        if let Procedure::Var { order: 0 } = self.procedure {
            return Err(Error::InvalidConfig(
                "the VAR baseline needs order >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of retained draws, `(N - burn_in) / thin`.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Metropolis acceptance bookkeeping per update block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BlockCounts {
    pub proposed: u64,
    pub accepted: u64,
}

impl BlockCounts {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    /// `None` when the block never proposed.
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AcceptanceStats {
    pub k: BlockCounts,
    pub radial: BlockCounts,
    pub location: BlockCounts,
    pub angle: BlockCounts,
    pub beta: BlockCounts,
}

/// Acceptance rates per block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AcceptanceRates {
    pub k: Option<f64>,
    pub radial: Option<f64>,
    pub location: Option<f64>,
    pub angle: Option<f64>,
    pub beta: Option<f64>,
}

impl AcceptanceStats {
    /// Adds the counts accumulated between `before` and `now`.
    fn absorb(&mut self, now: &Self, before: &Self) {
        let pairs = [
            (&mut self.k, now.k, before.k),
            (&mut self.radial, now.radial, before.radial),
            (&mut self.location, now.location, before.location),
            (&mut self.angle, now.angle, before.angle),
            (&mut self.beta, now.beta, before.beta),
        ];
        for (acc, a, b) in pairs {
            acc.proposed += a.proposed - b.proposed;
            acc.accepted += a.accepted - b.accepted;
        }
    }

    pub fn rates(&self) -> AcceptanceRates {
        AcceptanceRates {
            k: self.k.rate(),
            radial: self.radial.rate(),
            location: self.location.rate(),
            angle: self.angle.rate(),
            beta: self.beta.rate(),
        }
    }
}

/// Log proposal scales: one per radial part, one per angle vector, one per
/// coefficient block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scales {
    pub radial: Vec<f64>,
    pub angle: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub k: usize,
    pub log_posterior: f64,
    pub rates: AcceptanceRates,
}

/// Retained posterior draws. Spectral draws are stored realified: for draw
/// `m`, half-grid index `j`, the `d x d` real components at offset
/// `((m * H) + j) * d * d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub d: usize,
    pub grid: FrequencyGrid,
    pub procedure: Procedure,
    pub spectra: Vec<f64>,
    pub k: Vec<usize>,
    pub beta: Vec<Vec<f64>>,
    pub radial: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub trace: Vec<TraceRow>,
    /// Rates over the post-burn-in phase.
    pub acceptance: AcceptanceRates,
    pub scales_after_burn_in: Option<Scales>,
    pub scales_final: Option<Scales>,
    /// Innovation covariance held fixed during sampling.
    pub sigma: Vec<f64>,
}

impl PosteriorDraws {
    /// Number of draws carrying spectra.
    pub fn len(&self) -> usize {
        let block = self.grid.half_len() * self.d * self.d;
        self.spectra.len().checked_div(block).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn half_len(&self) -> usize {
        self.grid.half_len()
    }

    /// Realified components of draw `m` at half-grid index `j`.
    pub fn realified(&self, m: usize, j: usize) -> &[f64] {
        let dd = self.d * self.d;
        let off = (m * self.grid.half_len() + j) * dd;
        &self.spectra[off..off + dd]
    }

    pub fn spectral_matrix(&self, m: usize, j: usize) -> HpdMatrix {
        HpdMatrix::new(derealify_components(self.d, self.realified(m, j)))
            .expect("Hermitian by construction")
    }

    /// Builds draws from explicit spectral matrices (draw-major, each a
    /// half-grid list).
    pub fn from_matrices(
        grid: FrequencyGrid,
        procedure: Procedure,
        matrices: &[Vec<HpdMatrix>],
    ) -> Result<Self> {
        let d = matrices
            .first()
            .and_then(|m| m.first())
            .map_or(1, |m| m.dim());
        let mut spectra = Vec::with_capacity(matrices.len() * grid.half_len() * d * d);
        let mut buf = vec![0.0; d * d];
        for draw in matrices {
            if draw.len() != grid.half_len() {
                return Err(Error::GridMismatch);
            }
            for f in draw {
                if f.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: f.dim(),
                    });
                }
                realify_into(f.matrix(), &mut buf);
                spectra.extend_from_slice(&buf);
            }
        }
        Ok(Self {
            d,
            grid,
            procedure,
            spectra,
            k: Vec::new(),
            beta: Vec::new(),
            radial: Vec::new(),
            log_posterior: Vec::new(),
            trace: Vec::new(),
            acceptance: AcceptanceStats::default().rates(),
            scales_after_burn_in: None,
            scales_final: None,
            sigma: Vec::new(),
        })
    }
}

/// Symmetric random walk on `1..=k_max` with steps uniform on
/// `{-J..-1, 1..J}`, reflected about `1/2` and `k_max + 1/2`.
pub fn propose_k(k: usize, k_max: usize, jump: usize, rng: &mut impl Rng) -> usize {
    let j = jump as i64;
    let mut s = rng.random_range(1..=j);
    if rng.random::<bool>() {
        s = -s;
    }
    let (lo, hi) = (1i64, k_max as i64);
    let mut x = k as i64 + s;
    loop {
        if x < lo {
            x = 2 * lo - 1 - x;
        } else if x > hi {
            x = 2 * hi + 1 - x;
        } else {
            return x as usize;
        }
    }
}

/// Log-normal random walk `r exp(scale xi)`.
pub fn propose_radial(r: f64, scale: f64, rng: &mut impl Rng) -> f64 {
    let xi: f64 = rng.sample(StandardNormal);
    r * (scale * xi).exp()
}

/// Half-width `pi l / (l + 2 sqrt(n))` of the location random walk for the
/// `l`-th atom (counted from one).
pub fn location_halfwidth(l: usize, n: usize) -> f64 {
    PI * l as f64 / (l as f64 + 2.0 * (n as f64).sqrt())
}

fn reflect(mut x: f64, upper: f64) -> f64 {
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > upper {
            x = 2.0 * upper - x;
        } else {
            return x;
        }
    }
}

/// Uniform random walk on `[x - delta, x + delta]` reflected into `[0, pi]`.
pub fn propose_location(x: f64, l: usize, n: usize, rng: &mut impl Rng) -> f64 {
    let delta = location_halfwidth(l, n);
    reflect(x + delta * (2.0 * rng.random::<f64>() - 1.0), PI)
}

/// Componentwise uniform random walk with half-width `scale`; bounded angles
/// are reflected in `[0, pi]`, the last is wrapped onto `[0, 2 pi)`.
pub fn propose_angles(phi: &[f64], scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let m = phi.len();
    phi.iter()
        .enumerate()
        .map(|(i, &p)| {
            let step = scale * (2.0 * rng.random::<f64>() - 1.0);
            if i + 1 == m {
                let w = (p + step).rem_euclid(2.0 * PI);
                // rem_euclid can round up to exactly 2 pi
                if w >= 2.0 * PI {
                    0.0
                } else {
                    w
                }
            } else {
                reflect(p + step, angle_upper(i, m))
            }
        })
        .collect()
}

/// Isotropic Gaussian step of one coefficient block.
pub fn propose_beta_block(block: &[f64], scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    block
        .iter()
        .map(|&b| b + scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[inline]
fn accept(log_alpha: f64, rng: &mut impl Rng) -> bool {
    if log_alpha.is_nan() {
        return false;
    }
    log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha
}

/// Innovation covariance and initial coefficients for a procedure.
fn working_start(z: &TimeSeries, procedure: Procedure) -> Result<VarParams> {
    match procedure {
        Procedure::Vnpc { order } if order > 0 => fit_ols(z, order),
        Procedure::Vnpc { .. } | Procedure::Vnp => fit_ols_window(z, 0, 0),
        Procedure::Var { order } => fit_ols(z, order),
    }
}

struct Chain<'a> {
    data: &'a SpectralData,
    cfg: &'a McmcConfig,
    levy: LevyConfig,
    table: BasisTable,
    evaluator: CorrectedEvaluator,
    rng: ChaCha8Rng,
    d: usize,
    p: usize,
    sigma: Vec<f64>,
    // state
    k: usize,
    atoms: AtomSet,
    beta: Vec<f64>,
    ws: WorkingSpectrum,
    u: Vec<CMatrix>,
    rows: Vec<Vec<f64>>,
    q: Vec<CMatrix>,
    loglik: f64,
    logprior: f64,
    // proposal buffers
    q_prop: Vec<CMatrix>,
    row_prop: Vec<f64>,
    scales: Scales,
    batch: AcceptanceStats,
    total: AcceptanceStats,
    post: AcceptanceStats,
    per_radial: Vec<BlockCounts>,
    per_angle: Vec<BlockCounts>,
    per_beta: Vec<BlockCounts>,
}

impl<'a> Chain<'a> {
    fn new(data: &'a SpectralData, cfg: &'a McmcConfig) -> Result<Self> {
        let z = data.series();
        let d = data.dim();
        let n = z.len();
        let start = working_start(z, cfg.procedure)?;
        let p = start.order();
        let sigma = start.sigma().to_vec();
        let beta = start.to_beta();
        let ws = WorkingSpectrum::new(start, &data.grid())?;
        let levy = cfg.levy.unwrap_or_else(|| LevyConfig::default_for_dim(d));
        let l = cfg.truncation.unwrap_or_else(|| default_truncation(n));
        let table = BasisTable::new(&data.grid(), &cfg.bernstein);
        let h = data.grid().half_len();
        let mut rng = cfg.rng();
        let k = cfg.initial_k.clamp(1, cfg.bernstein.k_max());

        let mut attempt = 0;
        let atoms = loop {
            if attempt == INIT_ATTEMPTS {
                return Err(Error::ChainInit {
                    attempts: INIT_ATTEMPTS,
                });
            }
            attempt += 1;
            let atoms = sample_atoms_series_with(&levy, l, d, &mut rng);
            if log_prior_atoms(&atoms, &levy).is_finite() {
                break atoms;
            }
        };
        let mut chain = Self {
            data,
            cfg,
            levy,
            evaluator: CorrectedEvaluator::new(data),
            rng,
            d,
            p,
            sigma,
            k,
            u: Vec::new(),
            rows: Vec::new(),
            q: Vec::new(),
            loglik: 0.0,
            logprior: 0.0,
            q_prop: vec![CMatrix::zeros(d); h],
            row_prop: vec![0.0; h],
            scales: Scales {
                radial: vec![0.5f64.ln(); l],
                angle: vec![0.3f64.ln(); l],
                beta: vec![(0.5 / (n as f64).sqrt()).ln(); p],
            },
            batch: AcceptanceStats::default(),
            total: AcceptanceStats::default(),
            post: AcceptanceStats::default(),
            per_radial: vec![BlockCounts::default(); l],
            per_angle: vec![BlockCounts::default(); l],
            per_beta: vec![BlockCounts::default(); p],
            table,
            atoms,
            beta,
            ws,
        };
        chain.rebuild();
        chain.loglik = chain.fresh_loglik();
        chain.logprior = chain.fresh_logprior();
        while !(chain.loglik + chain.logprior).is_finite() {
            if attempt == INIT_ATTEMPTS {
                return Err(Error::ChainInit {
                    attempts: INIT_ATTEMPTS,
                });
            }
            attempt += 1;
            chain.atoms = sample_atoms_series_with(&chain.levy, l, d, &mut chain.rng);
            chain.rebuild();
            chain.loglik = chain.fresh_loglik();
            chain.logprior = chain.fresh_logprior();
        }
        Ok(chain)
    }

    /// Recomputes marks, basis rows and the correction field from scratch.
    fn rebuild(&mut self) {
        let d = self.d;
        self.u = self
            .atoms
            .atoms()
            .iter()
            .map(|a| spherical_unchecked(&a.phi, d))
            .collect();
        self.rows = self
            .atoms
            .atoms()
            .iter()
            .map(|a| self.table.row(bin_of(a.x, self.k), self.k))
            .collect();
        self.q = Self::field(&self.atoms, &self.u, &self.rows, d);
    }

    fn field(atoms: &AtomSet, u: &[CMatrix], rows: &[Vec<f64>], d: usize) -> Vec<CMatrix> {
        let h = rows.first().map_or(0, |r| r.len());
        let mut q = vec![CMatrix::zeros(d); h];
        for (l, atom) in atoms.atoms().iter().enumerate() {
            for (qj, &b) in q.iter_mut().zip(&rows[l]) {
                qj.add_scaled(atom.r * b, &u[l]);
            }
        }
        q
    }

    fn loglik_of(&mut self, ws_is_prop: Option<&WorkingSpectrum>, q_is_prop: bool) -> f64 {
        if self.cfg.prior_only {
            return 0.0;
        }
        let ws = ws_is_prop.unwrap_or(&self.ws);
        let q = if q_is_prop { &self.q_prop } else { &self.q };
        self.evaluator.loglik(self.data, ws, q)
    }

    fn fresh_loglik(&mut self) -> f64 {
        self.loglik_of(None, false)
    }

    fn fresh_logprior(&self) -> f64 {
        log_prior_atoms(&self.atoms, &self.levy) + log_prior_k(self.k, &self.cfg.bernstein)
    }

    /// `q_prop = q + a * row_new * u_new - b * row_old * u_old` for atom `l`.
    fn stage_atom_change(&mut self, l: usize, new_r: f64, new_u: &CMatrix, new_row_is_prop: bool) {
        let old_r = self.atoms.atom(l).r;
        let new_row = if new_row_is_prop {
            &self.row_prop
        } else {
            &self.rows[l]
        };
        let (un, uo) = (new_u.as_slice(), self.u[l].as_slice());
        for (j, qp) in self.q_prop.iter_mut().enumerate() {
            let (a, b) = (new_r * new_row[j], old_r * self.rows[l][j]);
            let q = self.q[j].as_slice();
            for (((t, &q), &x), &y) in qp.as_mut_slice().iter_mut().zip(q).zip(un).zip(uo) {
                *t = q + x * a - y * b;
            }
        }
    }

    fn update_k(&mut self) {
        let k_new = propose_k(
            self.k,
            self.cfg.bernstein.k_max(),
            self.cfg.k_jump,
            &mut self.rng,
        );
        let dlp =
            log_prior_k(k_new, &self.cfg.bernstein) - log_prior_k(self.k, &self.cfg.bernstein);
        if k_new == self.k {
            self.batch.k.record(true);
            self.total.k.record(true);
            return;
        }
        if self.cfg.prior_only {
            // basis rows are only needed by the likelihood
            let ok = accept(dlp, &mut self.rng);
            if ok {
                self.k = k_new;
                self.logprior += dlp;
            }
            self.batch.k.record(ok);
            self.total.k.record(ok);
            return;
        }
        let rows: Vec<Vec<f64>> = self
            .atoms
            .atoms()
            .iter()
            .map(|a| self.table.row(bin_of(a.x, k_new), k_new))
            .collect();
        self.q_prop = Self::field(&self.atoms, &self.u, &rows, self.d);
        let ll_new = self.loglik_of(None, true);
        let ok = accept(ll_new - self.loglik + dlp, &mut self.rng);
        if ok {
            self.k = k_new;
            self.rows = rows;
            std::mem::swap(&mut self.q, &mut self.q_prop);
            self.loglik = ll_new;
            self.logprior += dlp;
        }
        self.batch.k.record(ok);
        self.total.k.record(ok);
    }

    fn update_radial(&mut self, l: usize) {
        let old = self.atoms.atom(l).r;
        let new = propose_radial(old, self.scales.radial[l].exp(), &mut self.rng);
        self.atoms.atom_mut(l).r = new;
        let lp_atoms = log_prior_atoms(&self.atoms, &self.levy);
        self.atoms.atom_mut(l).r = old;
        let lp_new = lp_atoms + log_prior_k(self.k, &self.cfg.bernstein);
        let mut ok = false;
        if lp_new.is_finite() {
            let u = self.u[l].clone();
            let ll_new = if self.cfg.prior_only {
                0.0
            } else {
                self.stage_atom_change(l, new, &u, false);
                self.loglik_of(None, true)
            };
            // log-normal proposal: q(r | r*) / q(r* | r) = r* / r
            let log_alpha = ll_new - self.loglik + lp_new - self.logprior + (new / old).ln();
            ok = accept(log_alpha, &mut self.rng);
            if ok {
                self.atoms.atom_mut(l).r = new;
                if !self.cfg.prior_only {
                    std::mem::swap(&mut self.q, &mut self.q_prop);
                }
                self.loglik = ll_new;
                self.logprior = lp_new;
            }
        }
        self.batch.radial.record(ok);
        self.total.radial.record(ok);
        self.per_radial[l].record(ok);
    }

    fn update_location(&mut self, l: usize) {
        let n = self.data.grid().n();
        let old = self.atoms.atom(l).x;
        let new = propose_location(old, l + 1, n, &mut self.rng);
        let old_bin = bin_of(old, self.k);
        let new_bin = bin_of(new, self.k);
        let ok = if old_bin == new_bin || self.cfg.prior_only {
            // Q and the likelihood are unchanged (or unused); the uniform
            // prior and symmetric proposal leave a unit ratio
            self.atoms.atom_mut(l).x = new;
            true
        } else {
            self.table.fill_row(new_bin, self.k, &mut self.row_prop);
            let r = self.atoms.atom(l).r;
            let u = self.u[l].clone();
            self.stage_atom_change(l, r, &u, true);
            let ll_new = self.loglik_of(None, true);
            let ok = accept(ll_new - self.loglik, &mut self.rng);
            if ok {
                self.atoms.atom_mut(l).x = new;
                std::mem::swap(&mut self.rows[l], &mut self.row_prop);
                std::mem::swap(&mut self.q, &mut self.q_prop);
                self.loglik = ll_new;
            }
            ok
        };
        self.batch.location.record(ok);
        self.total.location.record(ok);
    }

    fn update_angles(&mut self, l: usize) {
        if angle_count(self.d) == 0 {
            return;
        }
        let new_phi = propose_angles(
            &self.atoms.atom(l).phi,
            self.scales.angle[l].exp(),
            &mut self.rng,
        );
        let new_u = spherical_unchecked(&new_phi, self.d);
        let r = self.atoms.atom(l).r;
        let ll_new = if self.cfg.prior_only {
            0.0
        } else {
            self.stage_atom_change(l, r, &new_u, false);
            self.loglik_of(None, true)
        };
        // uniform angle prior and symmetric proposal
        let ok = accept(ll_new - self.loglik, &mut self.rng);
        if ok {
            self.atoms.atom_mut(l).phi = new_phi;
            self.u[l] = new_u;
            if !self.cfg.prior_only {
                std::mem::swap(&mut self.q, &mut self.q_prop);
            }
            self.loglik = ll_new;
        }
        self.batch.angle.record(ok);
        self.total.angle.record(ok);
        self.per_angle[l].record(ok);
    }

    fn update_beta(&mut self, lag: usize) {
        let idx = beta_block(self.d, self.p, lag);
        let block: Vec<f64> = idx.iter().map(|&i| self.beta[i]).collect();
        let proposal = propose_beta_block(&block, self.scales.beta[lag].exp(), &mut self.rng);
        let mut beta_new = self.beta.clone();
        for (&i, &v) in idx.iter().zip(&proposal) {
            beta_new[i] = v;
        }
        let mut ok = false;
        let ws_new = VarParams::from_beta(self.d, self.p, &beta_new, self.sigma.clone())
            .and_then(|params| WorkingSpectrum::new(params, &self.data.grid()));
        if let Ok(ws_new) = ws_new {
            let ll_new = self.loglik_of(Some(&ws_new), false);
            // flat coefficient prior
            ok = accept(ll_new - self.loglik, &mut self.rng);
            if ok {
                self.beta = beta_new;
                self.ws = ws_new;
                self.loglik = ll_new;
            }
        }
        self.batch.beta.record(ok);
        self.total.beta.record(ok);
        self.per_beta[lag].record(ok);
    }

    fn sweep(&mut self) {
        self.update_k();
        let l = self.atoms.len();
        for i in 0..l {
            self.update_radial(i);
        }
        for i in 0..l {
            self.update_location(i);
        }
        for i in 0..l {
            self.update_angles(i);
        }
        for j in 0..self.p {
            self.update_beta(j);
        }
    }

    fn adapt(&mut self, batch_index: usize) {
        let step = 1.0 / (batch_index as f64).sqrt();
        let target = self.cfg.target_acceptance;
        let nudge = |s: &mut f64, c: &mut BlockCounts, max: f64| {
            if let Some(rate) = c.rate() {
                *s = (*s + step * (rate - target)).clamp(-12.0, max);
            }
            *c = BlockCounts::default();
        };
        for (s, c) in self
            .scales
            .radial
            .iter_mut()
            .zip(self.per_radial.iter_mut())
        {
            nudge(s, c, 3.0);
        }
        for (s, c) in self.scales.angle.iter_mut().zip(self.per_angle.iter_mut()) {
            nudge(s, c, PI.ln());
        }
        for (s, c) in self.scales.beta.iter_mut().zip(self.per_beta.iter_mut()) {
            nudge(s, c, 3.0);
        }
    }

    fn reset_block_counts(&mut self) {
        self.per_radial
            .iter_mut()
            .for_each(|c| *c = BlockCounts::default());
        self.per_angle
            .iter_mut()
            .for_each(|c| *c = BlockCounts::default());
        self.per_beta
            .iter_mut()
            .for_each(|c| *c = BlockCounts::default());
    }

    fn check_coherence(&mut self) -> Result<()> {
        let cached = self.loglik + self.logprior;
        self.rebuild();
        let ll = self.fresh_loglik();
        let lp = self.fresh_logprior();
        let fresh = ll + lp;
        if !((cached - fresh).abs() <= 1e-8 * fresh.abs().max(1.0)) {
            return Err(Error::CacheIncoherent { cached, fresh });
        }
        self.loglik = ll;
        self.logprior = lp;
        Ok(())
    }

    fn record_spectra(&self, out: &mut Vec<f64>) {
        let grid = self.data.grid();
        let dd = self.d * self.d;
        let mut buf = vec![0.0; dd];
        for j in 0..grid.half_len() {
            let s = self.ws.sqrt(j);
            let f = &(s * &self.q[j]) * s;
            let f = if grid.is_boundary(j) {
                f.real_part()
            } else {
                f.hermitian_part()
            };
            realify_into(&f, &mut buf);
            out.extend_from_slice(&buf);
        }
    }

    fn run(mut self) -> Result<PosteriorDraws> {
        let cfg = self.cfg;
        let retained = cfg.retained();
        let record = cfg.record_spectra && !cfg.prior_only;
        let h = self.data.grid().half_len();
        let mut spectra = Vec::with_capacity(if record {
            retained * h * self.d * self.d
        } else {
            0
        });
        let mut ks = Vec::with_capacity(retained);
        let mut betas = Vec::with_capacity(retained);
        let mut radial = Vec::with_capacity(retained);
        let mut lps = Vec::with_capacity(retained);
        let mut trace = Vec::with_capacity(retained);
        let mut scales_after = None;

        for it in 1..=cfg.iterations {
            let before = self.total;
            self.sweep();
            if it > cfg.burn_in {
                self.post.absorb(&self.total, &before);
            }
            if it <= cfg.burn_in && it % cfg.adapt_batch == 0 {
                self.adapt(it / cfg.adapt_batch);
            }
            if it == cfg.burn_in {
                self.reset_block_counts();
                scales_after = Some(self.scales.clone());
            }
            if cfg.coherence_every > 0 && it % cfg.coherence_every == 0 {
                self.check_coherence()?;
            }
            if it > cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thin) {
                if record {
                    self.record_spectra(&mut spectra);
                }
                ks.push(self.k);
                betas.push(self.beta.clone());
                radial.push(self.atoms.atoms().iter().map(|a| a.r).collect());
                lps.push(self.loglik + self.logprior);
                trace.push(TraceRow {
                    iter: it,
                    k: self.k,
                    log_posterior: self.loglik + self.logprior,
                    rates: self.total.rates(),
                });
            }
        }
        if scales_after.is_none() {
            scales_after = Some(self.scales.clone());
        }
        Ok(PosteriorDraws {
            d: self.d,
            grid: self.data.grid(),
            procedure: cfg.procedure,
            spectra,
            k: ks,
            beta: betas,
            radial,
            log_posterior: lps,
            trace,
            acceptance: self.post.rates(),
            scales_after_burn_in: scales_after,
            scales_final: Some(self.scales.clone()),
            sigma: self.sigma.clone(),
        })
    }
}

/// Runs the configured procedure on `z`. The VAR procedure dispatches to
/// [`run_var_baseline`] with `M = (N - burn_in) / thin` exact draws.
pub fn run_chain(z: &TimeSeries, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    if let Procedure::Var { order } = cfg.procedure {
        return run_var_baseline(z, order, cfg);
    }
    let data = SpectralData::new(z.clone())?;
    run_chain_on(&data, cfg)
}

/// As [`run_chain`] for data whose transform is already cached.
pub fn run_chain_on(data: &SpectralData, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    if let Procedure::Var { order } = cfg.procedure {
        return run_var_baseline(data.series(), order, cfg);
    }
    Chain::new(data, cfg)?.run()
}

/// Gaussian conditional posterior of the stacked coefficients under a flat
/// prior regularized by a ridge: precision `Sigma^{-1} (x) X'X + ridge I` and
/// mean `P^{-1} vec(Sigma^{-1} Y' X)`.
#[derive(Clone, Debug)]
pub struct ConjugatePosterior {
    pub mean: Vec<f64>,
    pub precision: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    pub params: VarParams,
}

pub const BETA_RIDGE: f64 = 1e-8;

pub fn conjugate_posterior(z: &TimeSeries, order: usize, ridge: f64) -> Result<ConjugatePosterior> {
    let ols = fit_ols(z, order)?;
    let (n, d) = (z.len(), z.dim());
    let k = d * order;
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut ytx = DMatrix::<f64>::zeros(d, k);
    let mut x = vec![0.0; k];
    for t in order..n {
        for j in 0..order {
            x[j * d..(j + 1) * d].copy_from_slice(z.row(t - j - 1));
        }
        let y = z.row(t);
        for a in 0..k {
            for b in 0..k {
                xtx[(a, b)] += x[a] * x[b];
            }
            for i in 0..d {
                ytx[(i, a)] += y[i] * x[a];
            }
        }
    }
    let sigma = DMatrix::from_row_slice(d, d, ols.sigma());
    let sigma_inv = sigma
        .clone()
        .cholesky()
        .ok_or(Error::Singular {
            min_eigenvalue: sigma.symmetric_eigenvalues().min(),
        })?
        .inverse();
    let dim = d * k;
    let mut precision = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..d {
        for ip in 0..d {
            for a in 0..k {
                for b in 0..k {
                    precision[(i * k + a, ip * k + b)] = sigma_inv[(i, ip)] * xtx[(a, b)];
                }
            }
        }
    }
    for i in 0..dim {
        precision[(i, i)] += ridge;
    }
    let lin_m = &sigma_inv * &ytx;
    let lin = DVector::from_iterator(
        dim,
        (0..d)
            .flat_map(|i| (0..k).map(move |a| (i, a)))
            .map(|(i, a)| lin_m[(i, a)]),
    );
    let chol = precision
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficient { order })?;
    let mean = chol.solve(&lin);
    Ok(ConjugatePosterior {
        mean: mean.iter().copied().collect(),
        chol_l: chol.l(),
        precision,
        params: ols,
    })
}

impl ConjugatePosterior {
    /// One exact draw `mean + L^{-T} xi` where `P = L L'`.
    pub fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let dim = self.mean.len();
        let xi = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = self
            .chol_l
            .transpose()
            .solve_upper_triangular(&xi)
            .expect("Cholesky factor has a positive diagonal");
        self.mean
            .iter()
            .zip(step.iter())
            .map(|(m, s)| m + s)
            .collect()
    }
}

/// Parametric VAR(`order`) posterior: exact conjugate draws of the stacked
/// coefficients with the innovation covariance fixed at the least squares
/// estimate, each mapped to its spectral density.
pub fn run_var_baseline(z: &TimeSeries, order: usize, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    if order == 0 {
        return Err(Error::InvalidConfig(
            "the VAR baseline needs order >= 1".into(),
        ));
    }
    let post = conjugate_posterior(z, order, BETA_RIDGE)?;
    let grid = FrequencyGrid::new(z.len())?;
    let d = z.dim();
    let m = cfg.retained().max(1);
    let mut rng = cfg.rng();
    let mut spectra = Vec::with_capacity(if cfg.record_spectra {
        m * grid.half_len() * d * d
    } else {
        0
    });
    let mut betas = Vec::with_capacity(m);
    let mut buf = vec![0.0; d * d];
    for _ in 0..m {
        let beta = post.draw(&mut rng);
        if cfg.record_spectra {
            let params = VarParams::from_beta(d, order, &beta, post.params.sigma().to_vec())?;
            for f in var_spectral_density_on_grid(&params, &grid)? {
                realify_into(f.matrix(), &mut buf);
                spectra.extend_from_slice(&buf);
            }
        }
        betas.push(beta);
    }
    Ok(PosteriorDraws {
        d,
        grid,
        procedure: Procedure::Var { order },
        spectra,
        k: Vec::new(),
        beta: betas,
        radial: Vec::new(),
        log_posterior: Vec::new(),
        trace: Vec::new(),
        acceptance: AcceptanceRates {
            k: None,
            radial: None,
            location: None,
            angle: None,
            beta: Some(1.0),
        },
        scales_after_burn_in: None,
        scales_final: None,
        sigma: post.params.sigma().to_vec(),
    })
}

/// Convenience for inspecting one draw as complex matrices.
pub fn draw_matrices(draws: &PosteriorDraws, m: usize) -> Vec<CMatrix> {
    (0..draws.half_len())
        .map(|j| derealify_components(draws.d, draws.realified(m, j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var::BuiltinModel;

    #[test]
    fn k_proposals_stay_in_range_and_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let k = propose_k(1, 300, 3, &mut rng);
            assert!((1..=4).contains(&k));
            let k = propose_k(300, 300, 3, &mut rng);
            assert!((297..=300).contains(&k));
        }
        // exact transition probabilities near the lower reflection
        let probs = |from: usize, k_max: usize| {
            let mut counts = vec![0usize; k_max + 1];
            let mut rng = ChaCha8Rng::seed_from_u64(from as u64);
            for _ in 0..60_000 {
                counts[propose_k(from, k_max, 3, &mut rng)] += 1;
            }
            counts
                .iter()
                .map(|&c| c as f64 / 60_000.0)
                .collect::<Vec<_>>()
        };
        let p1 = probs(1, 5);
        let p2 = probs(2, 5);
        assert!((p1[2] - p2[1]).abs() < 0.01);
        assert!((p1[3] - probs(3, 5)[1]).abs() < 0.01);
        let p5 = probs(5, 5);
        let p4 = probs(4, 5);
        assert!((p5[4] - p4[5]).abs() < 0.01);
        assert_eq!(propose_k(1, 1, 3, &mut rng), 1);
    }

    #[test]
    fn location_halfwidth_example() {
        assert!((location_halfwidth(1, 256) - PI / 33.0).abs() < 1e-15);
        assert!((location_halfwidth(1, 256) - 0.095_200).abs() < 1e-6);
    }

    #[test]
    fn proposals_respect_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for l in 1..=20 {
            let mut x = 0.01;
            for _ in 0..10_000 {
                x = propose_location(x, l, 16, &mut rng);
                assert!((0.0..=PI).contains(&x));
            }
        }
        let mut r = 1.0;
        for _ in 0..10_000 {
            r = propose_radial(r, 5.0, &mut rng);
            assert!(r > 0.0);
        }
        let mut phi = vec![0.1, 3.0, 6.2];
        for _ in 0..10_000 {
            phi = propose_angles(&phi, 2.5, &mut rng);
            assert!((0.0..=PI).contains(&phi[0]) && (0.0..=PI).contains(&phi[1]));
            assert!((0.0..2.0 * PI).contains(&phi[2]));
        }
    }

    fn short_cfg(procedure: Procedure, seed: u64) -> McmcConfig {
        McmcConfig {
            iterations: 300,
            burn_in: 100,
            thin: 2,
            truncation: Some(10),
            seed,
            procedure,
            coherence_every: 50,
            ..McmcConfig::default()
        }
    }

    #[test]
    fn chain_is_deterministic_and_well_shaped() {
        let z = BuiltinModel::Var2.simulate(64, 3).unwrap();
        let cfg = short_cfg(Procedure::Vnpc { order: 1 }, 7);
        let a = run_chain(&z, &cfg).unwrap();
        let b = run_chain(&z, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert_eq!(a.k.len(), 100);
        assert_eq!(a.spectra.len(), 100 * 33 * 4);
        assert_eq!(a.scales_after_burn_in, a.scales_final);
        assert!(a.log_posterior.iter().all(|v| v.is_finite()));
        let other = run_chain(&z, &McmcConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.spectra, other.spectra);
    }

    #[test]
    fn vnp_and_vnpc0_coincide() {
        let z = BuiltinModel::Vma1.simulate(64, 4).unwrap();
        let a = run_chain(&z, &short_cfg(Procedure::Vnp, 1)).unwrap();
        let b = run_chain(&z, &short_cfg(Procedure::Vnpc { order: 0 }, 1)).unwrap();
        assert_eq!(a.spectra, b.spectra);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let z = BuiltinModel::Vma1.simulate(64, 4).unwrap();
        let bad = McmcConfig {
            burn_in: 300,
            ..short_cfg(Procedure::Vnp, 1)
        };
        assert!(matches!(run_chain(&z, &bad), Err(Error::InvalidConfig(_))));
        let bad = McmcConfig {
            thin: 0,
            ..short_cfg(Procedure::Vnp, 1)
        };
        assert!(matches!(run_chain(&z, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn var_baseline_shapes() {
        let z = BuiltinModel::Var2.simulate(200, 5).unwrap();
        let draws = run_chain(&z, &short_cfg(Procedure::Var { order: 2 }, 3)).unwrap();
        assert_eq!(draws.len(), 100);
        assert_eq!(draws.beta[0].len(), 8);
        let f = draws.spectral_matrix(0, 0);
        assert!(f.min_eigenvalue() > 0.0);
    }

    #[test]
    fn conjugate_mean_is_ols() {
        let z = BuiltinModel::Var2.simulate(1000, 6).unwrap();
        let post = conjugate_posterior(&z, 2, BETA_RIDGE).unwrap();
        let ols = post.params.to_beta();
        for (a, b) in post.mean.iter().zip(&ols) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
