//! Gaussian rate-distortion functions and the Hamming detection distortion.
//!
//! The vector source is `CN(0, diag(lambda))`. Reverse water-filling assigns
//! component `i` the distortion `D_i = min(lambda_i, mu)` at rate
//! `(log2(lambda_i / mu))^+`.

use serde::Serialize;

use crate::error::{DrtError, Result};

const BISECT_RTOL: f64 = 1e-12;
const BISECT_MAX_ITER: usize = 200;

/// Reverse water-filling allocation at water level `mu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReverseWaterfill {
    pub mu: f64,
    pub per_component_distortion: Vec<f64>,
    pub rate_bits: f64,
    pub distortion: f64,
}

impl ReverseWaterfill {
    fn at_level(lambdas: &[f64], mu: f64) -> Self {
        let per: Vec<f64> = lambdas.iter().map(|&l| l.min(mu)).collect();
        ReverseWaterfill {
            mu,
            distortion: per.iter().sum(),
            rate_bits: rate_at_level(lambdas, mu),
            per_component_distortion: per,
        }
    }
}

fn rate_at_level(lambdas: &[f64], mu: f64) -> f64 {
    lambdas.iter().map(|&l| (l / mu).log2().max(0.0)).sum()
}

fn check_spectrum(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(DrtError::domain("source variances must be positive and finite"));
    }
    Ok(())
}

/// `R_G(D) = max(0, log2(sigma_h^2 / D))`.
pub fn scalar_rd(d: f64, sigma_h2: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(DrtError::domain(format!("distortion must be positive, got {d}")));
    }
    Ok((sigma_h2 / d).log2().max(0.0))
}

/// `D_G(R) = sigma_h^2 2^{-R}`.
pub fn scalar_dr(r: f64, sigma_h2: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(DrtError::domain(format!("rate must be nonnegative, got {r}")));
    }
    Ok(sigma_h2 * (-r).exp2())
}

/// Distortion-rate function of the independent vector Gaussian source.
pub fn vector_dr(r: f64, lambdas: &[f64]) -> Result<ReverseWaterfill> {
    check_spectrum(lambdas)?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(DrtError::domain(format!("rate must be finite and nonnegative, got {r}")));
    }
    let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
    if r == 0.0 {
        return Ok(ReverseWaterfill::at_level(lambdas, lmax));
    }
    // The rate at level mu lies between log2(lmax/mu) and n log2(lmax/mu).
    let n = lambdas.len() as f64;
    let mut lo = lmax.log2() - r;
    let mut hi = lmax.log2() - r / n;
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if rate_at_level(lambdas, mid.exp2()) > r {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) * std::f64::consts::LN_2 < BISECT_RTOL {
            break;
        }
    }
    Ok(ReverseWaterfill::at_level(lambdas, (0.5 * (lo + hi)).exp2()))
}

/// Allocation achieving total distortion `d`, `0 < d <= sum lambda`.
pub fn reverse_waterfill_at(d: f64, lambdas: &[f64]) -> Result<ReverseWaterfill> {
    check_spectrum(lambdas)?;
    let total: f64 = lambdas.iter().sum();
    let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
    if !(d > 0.0) || d > total * (1.0 + 1e-12) {
        return Err(DrtError::domain(format!("distortion {d} outside (0, {total}]")));
    }
    if d >= total {
        return Ok(ReverseWaterfill::at_level(lambdas, lmax));
    }
    let dist = |mu: f64| lambdas.iter().map(|&l| l.min(mu)).sum::<f64>();
    let n = lambdas.len() as f64;
    let (mut lo, mut hi) = (d / n, d.min(lmax));
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if dist(mid) < d {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECT_RTOL * hi {
            break;
        }
    }
    Ok(ReverseWaterfill::at_level(lambdas, 0.5 * (lo + hi)))
}

/// Rate-distortion function of the independent vector Gaussian source.
pub fn vector_rd(d: f64, lambdas: &[f64]) -> Result<f64> {
    Ok(reverse_waterfill_at(d, lambdas)?.rate_bits)
}

fn check_prob(p: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(DrtError::domain(format!("{name} must lie in [0, 1], got {p}")))
    }
}

/// Expected Hamming distortion of a binary detector with target prior
/// `prior1 = Pr(target present)`: `prior1 (1 - P_D) + (1 - prior1) P_FA`.
pub fn hamming_expected(p_d: f64, p_fa: f64, prior1: f64) -> Result<f64> {
    check_prob(p_d, "P_D")?;
    check_prob(p_fa, "P_FA")?;
    check_prob(prior1, "prior")?;
    Ok(prior1 * (1.0 - p_d) + (1.0 - prior1) * p_fa)
}

/// Prior-free sum of miss and false-alarm probabilities, `1 - P_D + P_FA`.
pub fn hamming_prior_free(p_d: f64, p_fa: f64) -> Result<f64> {
    check_prob(p_d, "P_D")?;
    check_prob(p_fa, "P_FA")?;
    Ok(1.0 - p_d + p_fa)
}
