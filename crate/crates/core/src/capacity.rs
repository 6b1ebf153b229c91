//! Communication rates: Gaussian signaling and the high-SNR rate of
//! signaling with a fixed sample covariance.

use std::f64::consts::{E, LN_2, PI};

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{DrtError, Result};
use crate::infomeasures::{map_trials, MCEstimate};
use crate::numkit::{self, cr, CMat, Hermitian};

fn check_dims(h_c: &CMat, r: &Hermitian) -> Result<()> {
    if h_c.ncols() != r.dim() {
        return Err(DrtError::config(format!(
            "channel has {} columns but covariance is {1}x{1}",
            h_c.ncols(),
            r.dim()
        )));
    }
    Ok(())
}

fn gram(h_c: &CMat, r: &Hermitian) -> Hermitian {
    Hermitian::symmetrized(h_c * r.matrix() * h_c.adjoint())
}

/// `log2 |I + H_c R H_c^H / sigma_c^2|`.
pub fn gaussian_rate(h_c: &CMat, r: &Hermitian, sigma_c2: f64) -> Result<f64> {
    check_dims(h_c, r)?;
    numkit::ensure_psd(r, "signal covariance")?;
    let n = h_c.nrows();
    let a = CMat::identity(n, n) + gram(h_c, r).into_matrix() * cr(1.0 / sigma_c2);
    Ok(numkit::ln_det_spd(&a)? / LN_2)
}

/// Sample mean of [`gaussian_rate`] over channel draws.
pub fn ergodic_gaussian_rate(samples: &[CMat], r: &Hermitian, sigma_c2: f64) -> Result<MCEstimate> {
    if samples.is_empty() {
        return Err(DrtError::config("at least one channel sample is required"));
    }
    let rates = map_trials(samples.len(), |i| gaussian_rate(&samples[i as usize], r, sigma_c2))?;
    Ok(MCEstimate::from_samples(&rates))
}

/// `c0(L, T) = (L/T) [(T - L/2) log2(T/e) - log2 Gamma(T) + log2(2 sqrt(pi))]`.
pub fn c0(l: usize, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(DrtError::domain("T must be at least 1"));
    }
    if l == 0 {
        return Ok(0.0);
    }
    let (l, t) = (l as f64, t as f64);
    let bracket = (t - 0.5 * l) * (t / E).log2() - ln_gamma(t) / LN_2 + (2.0 * PI.sqrt()).log2();
    Ok(l / t * bracket)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    pub rate_bits_per_symbol: f64,
    pub stderr: f64,
    /// Numerical rank of `H_c R H_c^H` (of the first sample when it varies).
    #[serde(rename = "L")]
    pub l_rank: usize,
    pub c0_bits: f64,
    pub pre_log: f64,
    /// Set when `H_c R H_c^H` was singular and the pseudo-determinant used.
    pub pseudo_determinant: bool,
    pub rank_varies: bool,
}

/// Per-sample high-SNR rate and the rank it used.
fn high_snr_term(h_c: &CMat, r: &Hermitian, sigma_c2: f64, t: usize) -> Result<(f64, usize)> {
    check_dims(h_c, r)?;
    let w = gram(h_c, r);
    let eig = numkit::hermitian_eig(&w)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(DrtError::domain("H_c R H_c^H vanishes; the high-SNR rate is undefined"));
    }
    let kept: Vec<f64> = eig
        .values
        .iter()
        .copied()
        .filter(|&v| v > numkit::DEFAULT_RANK_RTOL * top)
        .collect();
    let l = kept.len();
    if l >= 2 * t {
        return Err(DrtError::domain(format!("rank {l} leaves no degrees of freedom for T = {t}")));
    }
    let pdet: f64 = kept.iter().map(|v| (v / sigma_c2).log2()).sum();
    let pre_log = 1.0 - l as f64 / (2.0 * t as f64);
    Ok((pre_log * pdet + c0(l, t)?, l))
}

/// `E{(1 - L/2T) log2 pdet(H_c R H_c^H / sigma_c^2) + c0(L, T)}`.
pub fn high_snr_rate(samples: &[CMat], r: &Hermitian, sigma_c2: f64, t: usize) -> Result<CapacityResult> {
    if samples.is_empty() {
        return Err(DrtError::config("at least one channel sample is required"));
    }
    if !(sigma_c2 > 0.0) || t == 0 {
        return Err(DrtError::domain("high-SNR rate needs sigma_c2 > 0 and T >= 1"));
    }
    numkit::ensure_psd(r, "signal covariance")?;
    let terms = map_trials(samples.len(), |i| high_snr_term(&samples[i as usize], r, sigma_c2, t))?;
    let l = terms[0].1;
    let rank_varies = terms.iter().any(|x| x.1 != l);
    let rates: Vec<f64> = terms.iter().map(|x| x.0).collect();
    let est = MCEstimate::from_samples(&rates);
    Ok(CapacityResult {
        rate_bits_per_symbol: est.mean,
        stderr: est.stderr,
        l_rank: l,
        c0_bits: c0(l, t)?,
        pre_log: 1.0 - l as f64 / (2.0 * t as f64),
        pseudo_determinant: terms.iter().any(|x| x.1 < samples[0].nrows()),
        rank_varies,
    })
}
