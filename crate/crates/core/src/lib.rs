//! Bayesian nonparametric estimation of spectral density matrices of
//! stationary multivariate time series.
//!
//! A parametric VAR working likelihood is corrected in the frequency domain
//! by a Hermitian positive definite correction matrix `Q(w)` carrying a
//! Bernstein-Hpd-Gamma prior; posterior draws come from a
//! Metropolis-within-Gibbs sampler. The pure Whittle-nonparametric procedure
//! and a conjugate Bayesian VAR are provided as comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod prior;
pub mod sampler;
pub mod study;
pub mod summary;
pub mod timefreq;
pub mod var;

pub use error::{Error, ErrorKind, Result};
