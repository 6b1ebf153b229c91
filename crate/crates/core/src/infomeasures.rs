//! Sensing mutual information `I(Y_s; H_s | X)` for the target response
//! matrix model.
//!
//! With `R_h = U diag(lambda) U^H` and the block set `F_1..F_{N_s}` built by
//! [`build_fblocks`], the conditional MI given a sample covariance `R` is
//!
//! ```text
//! I(R) = log2 | I + (T / sigma_s^2) Lambda_h^{1/2} S Lambda_h^{1/2} |,   S = sum_i F_i R F_i^H
//! ```
//!
//! which equals the direct form `log2 | I + X~ R_h X~^H / sigma_s^2 |` for
//! any `X` with `X X^H / T = R` (see [`mi_direct`]). Because the sensing
//! parameter is `vec(H_s)` itself, `I(Y_s; eta | X) = I(Y_s; H_s | X)` holds
//! trivially and is not checked at runtime.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DrtError, Result};
use crate::model::{self, RngStream, Scenario, SignalSampler, SignalScheme};
use crate::numkit::{self, cr, CMat, Hermitian};

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl MCEstimate {
    /// A quantity computed exactly from a single evaluation.
    pub fn exact(value: f64) -> Self {
        MCEstimate { mean: value, stderr: 0.0, trials: 1 }
    }

    /// Sample mean and `std / sqrt(n)` (unbiased sample variance). The sum
    /// runs sequentially in index order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return MCEstimate { mean: f64::NAN, stderr: f64::NAN, trials: 0 };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        MCEstimate { mean, stderr, trials: n }
    }

    /// True when `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Evaluates `f` on every trial index in parallel and returns the results
/// in trial order, so reductions do not depend on the worker count.
pub(crate) fn map_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..trials as u64).into_par_iter().map(f).collect()
}

/// `log2(1 + |x|^2 sigma_h^2 / sigma_s^2)`.
pub fn scalar_mi(x_abs2: f64, sigma_h2: f64, sigma_s2: f64) -> f64 {
    (x_abs2 * sigma_h2 / sigma_s2).ln_1p() / LN_2
}

/// Maximum scalar sensing MI, attained by constant-modulus signaling.
pub fn scalar_mi_max(p_t: f64, sigma_h2: f64, sigma_s2: f64) -> f64 {
    scalar_mi(p_t, sigma_h2, sigma_s2)
}

/// Eigen-structure of `R_h` and the blocks `F_i` (`N_s M x M`).
#[derive(Debug, Clone)]
pub struct FBlockSet {
    pub u: CMat,
    /// Eigenvalues of `R_h`, descending.
    pub lambdas: Vec<f64>,
    pub blocks: Vec<CMat>,
    pub n_s: usize,
    pub m: usize,
}

impl FBlockSet {
    /// `S = sum_i F_i R F_i^H`.
    pub fn s_matrix(&self, r: &CMat) -> CMat {
        let k = self.n_s * self.m;
        let mut s = CMat::zeros(k, k);
        for f in &self.blocks {
            s += f * r * f.adjoint();
        }
        s
    }

    fn sqrt_lambdas(&self) -> Vec<f64> {
        self.lambdas.iter().map(|l| l.sqrt()).collect()
    }

    /// `Lambda^{1/2} A Lambda^{1/2}` for a `K x K` matrix.
    fn sandwich(&self, a: &CMat) -> CMat {
        let sq = self.sqrt_lambdas();
        CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (sq[i] * sq[j]))
    }

    /// Max over `i` of `||F_i^H F_i - I||_max`.
    pub fn orthonormality_residual(&self) -> f64 {
        let eye = CMat::identity(self.m, self.m);
        self.blocks
            .iter()
            .map(|f| numkit::max_abs(&(f.adjoint() * f - &eye)))
            .fold(0.0, f64::max)
    }

    /// `||sum_i F_i F_i^H - I||_max`.
    pub fn completeness_residual(&self) -> f64 {
        let k = self.n_s * self.m;
        let mut acc = CMat::zeros(k, k);
        for f in &self.blocks {
            acc += f * f.adjoint();
        }
        numkit::max_abs(&(acc - CMat::identity(k, k)))
    }

    /// `|tr(S) - N_s tr(R)|` for the given `R`.
    pub fn trace_residual(&self, r: &Hermitian) -> f64 {
        let s = self.s_matrix(r.matrix());
        let tr_s: f64 = s.diagonal().iter().map(|z| z.re).sum();
        (tr_s - self.n_s as f64 * r.trace_re()).abs()
    }
}

/// Eigendecomposes `R_h` and forms `F_i = conj(F~_i)` from the column blocks
/// of `F~ = U^H K`, `K` being the permutation with
/// `K (I_{N_s} kron Q) K^T = Q kron I_{N_s}` for `M x M` matrices `Q`.
pub fn build_fblocks(r_h: &Hermitian, n_s: usize, m: usize) -> Result<FBlockSet> {
    let k = n_s * m;
    if r_h.dim() != k {
        return Err(DrtError::config(format!("R_h must be {k}x{k}, got {0}x{0}", r_h.dim())));
    }
    numkit::ensure_pd(r_h, "R_h")?;
    let eig = numkit::hermitian_eig(r_h)?;
    // K maps vec of an M x N_s matrix to vec of its transpose.
    let perm = numkit::commutation_matrix(m, n_s);
    let f_tilde = eig.vectors.adjoint() * perm;
    let blocks = (0..n_s)
        .map(|i| f_tilde.columns(i * m, m).map(|z| z.conj()))
        .collect();
    Ok(FBlockSet {
        u: eig.vectors,
        lambdas: eig.values,
        blocks,
        n_s,
        m,
    })
}

/// Natural-log MI for an `R` already known to be PSD.
pub(crate) fn mi_nats_unchecked(r: &CMat, fb: &FBlockSet, t: usize, sigma_s2: f64) -> Result<f64> {
    let k = fb.n_s * fb.m;
    let s = fb.s_matrix(r);
    let a = CMat::identity(k, k) + fb.sandwich(&s) * cr(t as f64 / sigma_s2);
    numkit::ln_det_spd(&Hermitian::symmetrized(a).into_matrix())
}

/// Sensing MI in bits as a function of the sample covariance.
pub fn mi_given_cov(r: &Hermitian, fb: &FBlockSet, t: usize, sigma_s2: f64) -> Result<f64> {
    if r.dim() != fb.m {
        return Err(DrtError::config(format!("covariance must be {0}x{0}", fb.m)));
    }
    numkit::ensure_psd(r, "signal covariance")?;
    Ok(mi_nats_unchecked(r.matrix(), fb, t, sigma_s2)? / LN_2)
}

/// Sensing MI in bits evaluated directly from a signal block `X`.
pub fn mi_direct(x: &CMat, r_h: &Hermitian, sigma_s2: f64) -> Result<f64> {
    let m = x.nrows();
    if m == 0 || !r_h.dim().is_multiple_of(m) {
        return Err(DrtError::config("R_h dimension is not a multiple of M"));
    }
    let n_s = r_h.dim() / m;
    let xt = model::lift(x, n_s);
    let k = xt.nrows();
    let a = CMat::identity(k, k) + &xt * r_h.matrix() * xt.adjoint() * cr(1.0 / sigma_s2);
    Ok(numkit::ln_det_spd(&Hermitian::symmetrized(a).into_matrix())? / LN_2)
}

/// Ergodic sensing MI `E{I(R_X)}` in bits. Schemes with a fixed sample
/// covariance are evaluated exactly.
pub fn ergodic_sensing_mi(scheme: &SignalScheme, scn: &Scenario, trials: usize, rng: &RngStream) -> Result<MCEstimate> {
    let fb = build_fblocks(&scn.r_h, scn.n_s, scn.m)?;
    ergodic_sensing_mi_with(scheme, scn, &fb, trials, rng)
}

pub fn ergodic_sensing_mi_with(
    scheme: &SignalScheme,
    scn: &Scenario,
    fb: &FBlockSet,
    trials: usize,
    rng: &RngStream,
) -> Result<MCEstimate> {
    let sampler = SignalSampler::new(scheme, scn)?;
    if scheme.has_fixed_sample_cov() {
        let r = scheme.statistical_cov(scn);
        return Ok(MCEstimate::exact(mi_given_cov(&r, fb, scn.t, scn.sigma_s2)?));
    }
    if trials < 2 {
        return Err(DrtError::config("Monte Carlo needs at least 2 trials"));
    }
    let samples = map_trials(trials, |i| {
        let x = sampler.sample(&mut rng.trial(i).rng());
        let r = model::sample_cov(&x);
        Ok(mi_nats_unchecked(r.matrix(), fb, scn.t, scn.sigma_s2)? / LN_2)
    })?;
    Ok(MCEstimate::from_samples(&samples))
}

/// Gradient of the MI (in nats) with respect to `R`:
///
/// ```text
/// G = c sum_i F_i^H Lambda^{1/2} (I + c Lambda^{1/2} S Lambda^{1/2})^{-1} Lambda^{1/2} F_i,   c = T / sigma_s^2
/// ```
///
/// The directional derivative along a Hermitian `D` is `Re tr(G D)` nats;
/// multiply by `log2(e)` for bits.
pub fn mi_gradient(r: &Hermitian, fb: &FBlockSet, t: usize, sigma_s2: f64) -> Result<Hermitian> {
    let k = fb.n_s * fb.m;
    let cst = t as f64 / sigma_s2;
    let s = fb.s_matrix(r.matrix());
    let a = CMat::identity(k, k) + fb.sandwich(&s) * cr(cst);
    let inv = numkit::spd_inverse(&Hermitian::symmetrized(a).into_matrix())?;
    let core = fb.sandwich(&inv);
    let mut g = CMat::zeros(fb.m, fb.m);
    for f in &fb.blocks {
        g += f.adjoint() * &core * f;
    }
    Ok(Hermitian::symmetrized(g * cr(cst)))
}
