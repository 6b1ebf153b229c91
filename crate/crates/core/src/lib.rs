//! Numerical toolkit for the deterministic-random tradeoff (DRT) between
//! sensing and communication in vector Gaussian ISAC channels.
//!
//! The sensing scenario is target-response-matrix estimation: the unknown
//! is `h_s = vec(H_s) ~ CN(0, R_h)`, observed through `Y_s = H_s X + Z_s`
//! with the probing signal `X` known at the sensing receiver. The crate
//! evaluates the conditional sensing mutual information, its optimal signal
//! covariance, Gaussian rate-distortion bounds, MMSE performance under
//! different signaling distributions, and the sensing-limited high-SNR
//! communication rate, and packages cross-checks of all of these into
//! reproducible experiment reports.
//!
//! All mutual information values are in bits.

pub mod capacity;
pub mod cli;
pub mod config;
pub mod covopt;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod infomeasures;
pub mod model;
pub mod numkit;
pub mod ratedistortion;

#[cfg(test)]
mod test_oracles;

pub use error::{DrtError, Result};
pub use numkit::{CMat, CVec, Hermitian, C64};
