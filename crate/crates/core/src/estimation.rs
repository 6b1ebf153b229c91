//! Posterior-mean (MMSE) estimation of the target response matrix and the
//! corresponding closed-form MMSE values.

use nalgebra::Cholesky;
use serde::Serialize;

use crate::error::{DrtError, Result};
use crate::infomeasures::{build_fblocks, map_trials, FBlockSet, MCEstimate};
use crate::model::{self, RngStream, Scenario, SignalSampler, SignalScheme, TargetPrior};
use crate::numkit::{self, cr, CMat, Hermitian, C64};

/// `sigma_h^2 conj(x) y / (sigma_h^2 |x|^2 + sigma_s^2)`.
pub fn scalar_posterior_mean(y: C64, x: C64, sigma_h2: f64, sigma_s2: f64) -> C64 {
    x.conj() * y * (sigma_h2 / (sigma_h2 * x.norm_sqr() + sigma_s2))
}

/// `1 / (1/sigma_h^2 + |x|^2 / sigma_s^2)`.
pub fn scalar_mmse_given_x(x_abs2: f64, sigma_h2: f64, sigma_s2: f64) -> f64 {
    1.0 / (1.0 / sigma_h2 + x_abs2 / sigma_s2)
}

/// How to take the expectation over `X` in [`scalar_avg_mmse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Averaging {
    MonteCarlo { trials: usize },
    /// Gauss-Laguerre quadrature over `|X|^2 ~ Exp` (Gaussian schemes only).
    Quadrature { nodes: usize },
}

/// Nodes and weights of the `n`-point Gauss-Laguerre rule for
/// `int_0^inf e^{-u} f(u) du` (Golub-Welsch).
pub fn gauss_laguerre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(DrtError::config("quadrature needs at least one node"));
    }
    let mut jac = CMat::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = cr((2 * i + 1) as f64);
        if i + 1 < n {
            jac[(i, i + 1)] = cr((i + 1) as f64);
            jac[(i + 1, i)] = cr((i + 1) as f64);
        }
    }
    let e = numkit::hermitian_eig(&Hermitian::symmetrized(jac))?;
    let mut pairs: Vec<(f64, f64)> = e
        .values
        .iter()
        .enumerate()
        .map(|(j, &x)| (x, e.vectors[(0, j)].norm_sqr()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

fn scalar_params(scn: &Scenario) -> Result<(f64, f64)> {
    if !scn.is_scalar() {
        return Err(DrtError::config("scalar averaging requires M = T = N_s = 1"));
    }
    Ok((scn.r_h[(0, 0)].re, scn.sigma_s2))
}

/// Average scalar MMSE `E{1 / (1/sigma_h^2 + |X|^2 / sigma_s^2)}`.
pub fn scalar_avg_mmse(scheme: &SignalScheme, scn: &Scenario, averaging: Averaging, rng: &RngStream) -> Result<MCEstimate> {
    let (sigma_h2, sigma_s2) = scalar_params(scn)?;
    let sampler = SignalSampler::new(scheme, scn)?;
    if scheme.has_fixed_sample_cov() {
        let p = scheme.statistical_cov(scn)[(0, 0)].re;
        return Ok(MCEstimate::exact(scalar_mmse_given_x(p, sigma_h2, sigma_s2)));
    }
    match averaging {
        Averaging::MonteCarlo { trials } => {
            if trials < 2 {
                return Err(DrtError::config("Monte Carlo needs at least 2 trials"));
            }
            let samples = map_trials(trials, |i| {
                let x = sampler.sample(&mut rng.trial(i).rng());
                Ok(scalar_mmse_given_x(x[(0, 0)].norm_sqr(), sigma_h2, sigma_s2))
            })?;
            Ok(MCEstimate::from_samples(&samples))
        }
        Averaging::Quadrature { nodes } => {
            // |X|^2 is exponential with mean equal to the statistical power.
            let p = scheme.statistical_cov(scn)[(0, 0)].re;
            let (u, w) = gauss_laguerre(nodes)?;
            let v = u
                .iter()
                .zip(&w)
                .map(|(&ui, &wi)| wi * scalar_mmse_given_x(p * ui, sigma_h2, sigma_s2))
                .sum();
            Ok(MCEstimate::exact(v))
        }
    }
}

/// Posterior mean of `H_s` given `Y_s` and `X`, reshaped to `N_s x M`.
pub fn vector_posterior_mean(y_s: &CMat, x: &CMat, r_h: &Hermitian, sigma_s2: f64) -> Result<CMat> {
    let m = x.nrows();
    let n_s = y_s.nrows();
    if y_s.ncols() != x.ncols() || r_h.dim() != n_s * m {
        return Err(DrtError::config("observation, signal and prior dimensions do not conform"));
    }
    let xt = model::lift(x, n_s);
    let rx = r_h.matrix() * xt.adjoint();
    let n = xt.nrows();
    let gram = &xt * &rx + CMat::identity(n, n) * cr(sigma_s2);
    let y = numkit::vec_of(y_s);
    let solved = match Cholesky::new(gram.clone()) {
        Some(chol) => chol.solve(&y),
        None => pinv_solve(gram, &y)?,
    };
    let h = rx * solved;
    numkit::unvec(&h, n_s, m)
}

fn pinv_solve(gram: CMat, y: &numkit::CVec) -> Result<numkit::CVec> {
    let e = numkit::hermitian_eig(&Hermitian::symmetrized(gram))?;
    let hi = e.values.first().copied().unwrap_or(0.0);
    if e.values.last().is_some_and(|&lo| lo < -1e-9 * hi.abs().max(1.0)) {
        return Err(DrtError::numeric("observation covariance is indefinite"));
    }
    let coeffs = e.vectors.adjoint() * y;
    let scaled = numkit::CVec::from_iterator(
        coeffs.len(),
        coeffs
            .iter()
            .zip(&e.values)
            .map(|(&cf, &l)| if l > numkit::PD_RTOL * hi && hi > 0.0 { cf / l } else { cr(0.0) }),
    );
    Ok(&e.vectors * scaled)
}

fn check_cov(r_x: &Hermitian, m: usize) -> Result<()> {
    if r_x.dim() != m {
        return Err(DrtError::config(format!("sample covariance must be {m}x{m}")));
    }
    numkit::ensure_psd(r_x, "sample covariance")
}

fn mmse_given_cov_unchecked(r_x: &CMat, fb: &FBlockSet, t: usize, sigma_s2: f64) -> Result<f64> {
    let k = fb.n_s * fb.m;
    let s = fb.s_matrix(r_x) * cr(t as f64 / sigma_s2);
    let mut a = s;
    for i in 0..k {
        a[(i, i)] += cr(1.0 / fb.lambdas[i]);
    }
    let inv = numkit::spd_inverse(&Hermitian::symmetrized(a).into_matrix())?;
    Ok(inv.trace().re)
}

/// Conditional MMSE `tr[(Lambda_h^{-1} + (T/sigma_s^2) sum_i F_i R_X F_i^H)^{-1}]`.
pub fn vector_mmse_given_x(r_x: &Hermitian, fb: &FBlockSet, t: usize, sigma_s2: f64) -> Result<f64> {
    check_cov(r_x, fb.m)?;
    if fb.lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(DrtError::domain("prior eigenvalues must be positive"));
    }
    mmse_given_cov_unchecked(r_x.matrix(), fb, t, sigma_s2)
}

/// Same quantity in the unrotated form
/// `tr[(R_h^{-1} + (T/sigma_s^2) conj(R_X) kron I_{N_s})^{-1}]`.
pub fn vector_mmse_unrotated(r_x: &Hermitian, r_h: &Hermitian, t: usize, sigma_s2: f64) -> Result<f64> {
    let m = r_x.dim();
    if m == 0 || !r_h.dim().is_multiple_of(m) {
        return Err(DrtError::config("R_h dimension is not a multiple of M"));
    }
    check_cov(r_x, m)?;
    let n_s = r_h.dim() / m;
    let r_h_inv = numkit::spd_inverse(r_h.matrix())?;
    let lifted = numkit::kron(&r_x.conj().into_matrix(), &CMat::identity(n_s, n_s));
    let a = r_h_inv + lifted * cr(t as f64 / sigma_s2);
    Ok(numkit::spd_inverse(&Hermitian::symmetrized(a).into_matrix())?.trace().re)
}

/// Posterior-mean estimate together with the MMSE of the draw's `X`.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub estimate: CMat,
    pub closed_form_mmse: f64,
    /// Set when the true `H_s` was available and a squared error recorded.
    pub squared_error: Option<f64>,
}

pub fn estimate_target(y_s: &CMat, x: &CMat, scn: &Scenario, fb: &FBlockSet, truth: Option<&CMat>) -> Result<EstimationResult> {
    let estimate = vector_posterior_mean(y_s, x, &scn.r_h, scn.sigma_s2)?;
    let closed_form_mmse = mmse_given_cov_unchecked(model::sample_cov(x).matrix(), fb, x.ncols(), scn.sigma_s2)?;
    let squared_error = truth.map(|h| (h - &estimate).iter().map(|z| z.norm_sqr()).sum());
    Ok(EstimationResult { estimate, closed_form_mmse, squared_error })
}

/// Empirical MSE alongside the Monte Carlo average of the conditional MMSE
/// over the same `X` draws.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairedMse {
    pub empirical: MCEstimate,
    pub closed_form: MCEstimate,
    /// `squared error - conditional MMSE`, per trial.
    pub difference: MCEstimate,
}

fn run_trials(scheme: &SignalScheme, scn: &Scenario, trials: usize, rng: &RngStream) -> Result<Vec<(f64, f64)>> {
    if trials < 2 {
        return Err(DrtError::config("Monte Carlo needs at least 2 trials"));
    }
    let sampler = SignalSampler::new(scheme, scn)?;
    let prior = TargetPrior::new(scn)?;
    let fb = build_fblocks(&scn.r_h, scn.n_s, scn.m)?;
    map_trials(trials, |i| {
        let mut g = rng.trial(i).rng();
        let x = sampler.sample(&mut g);
        let (_, h) = prior.sample(&mut g);
        let y = model::forward_sense_with(&x, &h, scn.sigma_s2, &mut g)?;
        let res = estimate_target(&y, &x, scn, &fb, Some(&h))?;
        Ok((res.squared_error.unwrap_or(f64::NAN), res.closed_form_mmse))
    })
}

/// Mean of `||H_s - H_s_hat||_F^2` over independent `(X, H_s, Z_s)` draws.
pub fn empirical_mse(scheme: &SignalScheme, scn: &Scenario, trials: usize, rng: &RngStream) -> Result<MCEstimate> {
    let pairs = run_trials(scheme, scn, trials, rng)?;
    let errs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    Ok(MCEstimate::from_samples(&errs))
}

pub fn empirical_mse_paired(scheme: &SignalScheme, scn: &Scenario, trials: usize, rng: &RngStream) -> Result<PairedMse> {
    let pairs = run_trials(scheme, scn, trials, rng)?;
    let errs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cf: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    Ok(PairedMse {
        empirical: MCEstimate::from_samples(&errs),
        closed_form: MCEstimate::from_samples(&cf),
        difference: MCEstimate::from_samples(&diff),
    })
}
