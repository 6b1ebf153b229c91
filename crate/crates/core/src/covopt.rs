//! Sample-covariance optimization for the sensing MI.
//!
//! The problem is `max I(R)` over `{R >= 0, tr R = P_T}`, which is concave.
//! Two structures admit a water-filling closed form; everything else goes
//! through [`optimize_cov_pg`].

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{DrtError, Result};
use crate::infomeasures::{self, build_fblocks, mi_given_cov, mi_gradient, FBlockSet};
use crate::model::Scenario;
use crate::numkit::{self, CMat, Hermitian};

/// Relative tolerance for recognising `R_h = A kron I_{N_s}`.
pub const KRON_STRUCTURE_TOL: f64 = 1e-10;

/// Transmit water-filling `beta_i = (gamma - sigma^2 / (T lambda_i))^+`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillSolution {
    pub gamma: f64,
    pub betas: Vec<f64>,
    pub budget: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerResult {
    #[serde(skip)]
    pub r_star: Hermitian,
    pub mi_bits: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Settings for [`optimize_cov_pg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgOptions {
    pub initial_step: f64,
    pub max_halvings: usize,
    pub armijo: f64,
    pub rel_gain_tol: f64,
    pub max_iter: usize,
}

impl Default for PgOptions {
    fn default() -> Self {
        PgOptions {
            initial_step: 1.0,
            max_halvings: 60,
            armijo: 1e-4,
            rel_gain_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Water-filling of `budget` over the channel gains `T lambda_i / sigma^2`.
///
/// The active set is found by scanning noise levels in ascending order; the
/// level is then exact for that set, so `sum beta_i = budget` up to
/// round-off.
pub fn waterfill(lambdas: &[f64], t: usize, sigma2: f64, budget: f64) -> Result<WaterfillSolution> {
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(DrtError::domain("water-filling gains must be positive and finite"));
    }
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(DrtError::domain(format!("power budget must be nonnegative, got {budget}")));
    }
    let levels: Vec<f64> = lambdas.iter().map(|&l| sigma2 / (t as f64 * l)).collect();
    let mut sorted = levels.clone();
    sorted.sort_by(f64::total_cmp);
    let gamma = if budget == 0.0 {
        sorted[0]
    } else {
        let mut acc = 0.0;
        let mut gamma = sorted[0] + budget;
        for (k, &lvl) in sorted.iter().enumerate() {
            let candidate = (budget + acc + lvl) / (k + 1) as f64;
            if candidate <= lvl {
                break;
            }
            acc += lvl;
            gamma = candidate;
        }
        gamma
    };
    let betas = levels.iter().map(|&lvl| (gamma - lvl).max(0.0)).collect();
    Ok(WaterfillSolution { gamma, betas, budget })
}

/// `sum_i log2(1 + T lambda_i beta_i / sigma^2)`.
pub fn waterfill_objective(lambdas: &[f64], betas: &[f64], t: usize, sigma2: f64) -> f64 {
    lambdas
        .iter()
        .zip(betas)
        .map(|(&l, &b)| (t as f64 * l * b / sigma2).ln_1p() / LN_2)
        .sum()
}

/// Returns `A` when `R_h = A kron I_{N_s}` within [`KRON_STRUCTURE_TOL`].
pub fn kron_identity_factor(r_h: &Hermitian, m: usize, n_s: usize) -> Option<CMat> {
    if r_h.dim() != m * n_s {
        return None;
    }
    let a = CMat::from_fn(m, m, |i, j| r_h[(i * n_s, j * n_s)]);
    let rebuilt = numkit::kron(&a, &CMat::identity(n_s, n_s));
    let scale = numkit::max_abs(r_h.matrix()).max(1.0);
    (numkit::max_abs(&(rebuilt - r_h.matrix())) <= KRON_STRUCTURE_TOL * scale).then_some(a)
}

/// `||R - Proj(R + G)||_F` with `G` the MI gradient in nats.
pub fn kkt_residual(r: &Hermitian, fb: &FBlockSet, t: usize, sigma_s2: f64, p_t: f64) -> Result<f64> {
    let g = mi_gradient(r, fb, t, sigma_s2)?;
    let moved = numkit::project_psd_trace(&Hermitian::symmetrized(r.matrix() + g.matrix()), p_t)?;
    Ok(numkit::frobenius(&(r.matrix() - moved.matrix())))
}

/// Closed-form optimum for `N_s = 1` or `R_h = A kron I_{N_s}`.
pub fn sensing_optimal_cov_closed(scn: &Scenario) -> Result<OptimizerResult> {
    let a = if scn.n_s == 1 {
        scn.r_h.matrix().clone()
    } else {
        kron_identity_factor(&scn.r_h, scn.m, scn.n_s).ok_or_else(|| {
            DrtError::config("no closed form for this R_h structure; use projected gradient")
        })?
    };
    let eig = numkit::hermitian_eig(&Hermitian::symmetrized(a))?;
    let wf = waterfill(&eig.values, scn.t, scn.sigma_s2, scn.p_t)?;
    let r_star = Hermitian::from_eig(&eig.vectors, &wf.betas).conj();
    let fb = build_fblocks(&scn.r_h, scn.n_s, scn.m)?;
    let mi_bits = mi_given_cov(&r_star, &fb, scn.t, scn.sigma_s2)?;
    let kkt = kkt_residual(&r_star, &fb, scn.t, scn.sigma_s2, scn.p_t)?;
    Ok(OptimizerResult {
        r_star,
        mi_bits,
        iterations: 0,
        kkt_residual: kkt,
        converged: true,
    })
}

/// Projected gradient ascent with Armijo backtracking.
pub fn optimize_cov_pg(fb: &FBlockSet, t: usize, sigma_s2: f64, p_t: f64, opts: PgOptions) -> Result<OptimizerResult> {
    if !(p_t >= 0.0 && p_t.is_finite()) {
        return Err(DrtError::domain(format!("P_T must be nonnegative, got {p_t}")));
    }
    let m = fb.m;
    let mut r = Hermitian::identity(m).scale(p_t / m as f64);
    if p_t == 0.0 {
        return Ok(OptimizerResult { r_star: r, mi_bits: 0.0, iterations: 0, kkt_residual: 0.0, converged: true });
    }
    let f = |r: &Hermitian| infomeasures::mi_nats_unchecked(r.matrix(), fb, t, sigma_s2);
    let mut val = f(&r)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let g = mi_gradient(&r, fb, t, sigma_s2)?;
        let mut step = opts.initial_step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = Hermitian::symmetrized(r.matrix() + g.matrix() * numkit::cr(step));
            let cand = numkit::project_psd_trace(&trial, p_t)?;
            let dir = cand.matrix() - r.matrix();
            let slope = (g.matrix() * &dir).trace().re;
            let cand_val = f(&cand)?;
            if cand_val >= val + opts.armijo * slope {
                accepted = Some((cand, cand_val));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_val)) = accepted else {
            converged = true;
            break;
        };
        let gain = cand_val - val;
        r = cand;
        val = cand_val;
        if gain <= opts.rel_gain_tol * val.abs() {
            converged = true;
            break;
        }
    }
    let kkt = kkt_residual(&r, fb, t, sigma_s2, p_t)?;
    Ok(OptimizerResult {
        mi_bits: val / LN_2,
        r_star: r,
        iterations,
        kkt_residual: kkt,
        converged,
    })
}

/// Closed form when available, projected gradient otherwise.
pub fn sensing_optimal_cov(scn: &Scenario, fb: &FBlockSet) -> Result<OptimizerResult> {
    if scn.n_s == 1 || kron_identity_factor(&scn.r_h, scn.m, scn.n_s).is_some() {
        sensing_optimal_cov_closed(scn)
    } else {
        optimize_cov_pg(fb, scn.t, scn.sigma_s2, scn.p_t, PgOptions::default())
    }
}

/// Residuals describing how far `R` is from the water-filling optimum.
#[derive(Debug, Clone, Serialize)]
pub struct AchievabilityReport {
    /// `||S Lambda_h - Lambda_h S||_max`: zero iff `S` and `Lambda_h` share
    /// an eigenbasis.
    pub commutator_residual: f64,
    /// Max deviation of `eig(S)` from the water-filled spectrum, both sorted
    /// descending.
    pub waterfill_deviation: f64,
    /// `|sum eig(S) - N_s P_T|`.
    pub trace_residual: f64,
    pub s_spectrum: Vec<f64>,
    pub waterfill_spectrum: Vec<f64>,
}

pub fn check_achievability(r: &Hermitian, fb: &FBlockSet, t: usize, sigma_s2: f64, p_t: f64) -> Result<AchievabilityReport> {
    numkit::ensure_psd(r, "signal covariance")?;
    let s = Hermitian::symmetrized(fb.s_matrix(r.matrix()));
    let k = s.dim();
    let commutator = CMat::from_fn(k, k, |i, j| s[(i, j)] * (fb.lambdas[j] - fb.lambdas[i]));
    let s_spectrum = numkit::hermitian_eig(&s)?.values;
    let wf = waterfill(&fb.lambdas, t, sigma_s2, fb.n_s as f64 * p_t)?;
    let mut waterfill_spectrum = wf.betas;
    waterfill_spectrum.sort_by(|a, b| b.total_cmp(a));
    let waterfill_deviation = s_spectrum
        .iter()
        .zip(&waterfill_spectrum)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let trace_residual = (s_spectrum.iter().sum::<f64>() - fb.n_s as f64 * p_t).abs();
    Ok(AchievabilityReport {
        commutator_residual: numkit::max_abs(&commutator),
        waterfill_deviation,
        trace_residual,
        s_spectrum,
        waterfill_spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::vector_mmse_given_x;
    use crate::model::complex_gaussian_matrix;
    use crate::numkit::cr;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_pd(rng: &mut impl Rng, n: usize) -> Hermitian {
        let a = complex_gaussian_matrix(rng, n, n, 1.0);
        Hermitian::symmetrized(&a * a.adjoint() + CMat::identity(n, n) * cr(0.1))
    }

    fn scenario(m: usize, n_s: usize, t: usize, p_t: f64, sigma_s2: f64, r_h: Hermitian) -> Scenario {
        Scenario { m, n_s, n_c: 1, t, p_t, sigma_s2, sigma_c2: 1.0, r_h, k_coherence: 1 }
    }

    /// Grid search over the water level.
    fn grid_gamma(lambdas: &[f64], t: usize, sigma2: f64, budget: f64) -> f64 {
        let levels: Vec<f64> = lambdas.iter().map(|&l| sigma2 / (t as f64 * l)).collect();
        let hi = levels.iter().cloned().fold(0.0, f64::max) + budget;
        (0..=2_000_000)
            .map(|i| hi * i as f64 / 2e6)
            .min_by(|a, b| {
                let fa = levels.iter().map(|l| (a - l).max(0.0)).sum::<f64>() - budget;
                let fb = levels.iter().map(|l| (b - l).max(0.0)).sum::<f64>() - budget;
                fa.abs().total_cmp(&fb.abs())
            })
            .unwrap()
    }

    #[test]
    fn worked_waterfill() {
        let wf = waterfill(&[1.0, 0.25], 1, 1.0, 1.0).unwrap();
        assert!((wf.gamma - 2.0).abs() < 1e-12);
        assert_eq!(wf.betas, vec![1.0, 0.0]);
        assert!((grid_gamma(&[1.0, 0.25], 1, 1.0, 1.0) - 2.0).abs() < 1e-5);
        assert!((waterfill_objective(&[1.0, 0.25], &wf.betas, 1, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn waterfill_edge_cases() {
        let wf = waterfill(&[0.5; 4], 2, 1.0, 3.0).unwrap();
        assert!(wf.betas.iter().all(|&b| (b - 0.75).abs() < 1e-12));
        let zero = waterfill(&[2.0, 0.5], 1, 1.0, 0.0).unwrap();
        assert_eq!(zero.betas, vec![0.0, 0.0]);
        assert_eq!(zero.gamma, 0.5);
        assert!(waterfill(&[1.0, 0.0], 1, 1.0, 1.0).is_err());
        assert!(waterfill(&[1.0], 1, 1.0, -1.0).is_err());
    }

    #[test]
    fn waterfill_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let lambdas: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..3.0)).collect();
            let budget = rng.random_range(0.1..4.0);
            let wf = waterfill(&lambdas, 2, 0.7, budget).unwrap();
            assert!((wf.gamma - grid_gamma(&lambdas, 2, 0.7, budget)).abs() < 1e-5 * wf.gamma.max(1.0));
        }
    }

    #[test]
    fn dual_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.random_range(1..6);
            let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
            let (t, s2, budget) = (rng.random_range(1..5), rng.random_range(0.2..2.0), rng.random_range(0.1..5.0));
            let wf = waterfill(&lambdas, t, s2, budget).unwrap();
            let c = t as f64 / s2;
            let mmse: f64 = lambdas.iter().zip(&wf.betas).map(|(&l, &b)| l / (1.0 + c * l * b)).sum();
            let mu = s2 / (t as f64 * wf.gamma);
            let rev: f64 = lambdas.iter().map(|&l| l.min(mu)).sum();
            assert!((mmse - rev).abs() < 1e-10, "{mmse} vs {rev}");
        }
    }

    #[test]
    fn closed_form_worked_instance() {
        let scn = scenario(2, 1, 1, 1.0, 1.0, Hermitian::from_diagonal(&[1.0, 0.25]));
        let res = sensing_optimal_cov_closed(&scn).unwrap();
        let expect = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![cr(1.0), cr(0.0)]));
        assert!(numkit::max_abs(&(res.r_star.matrix() - expect)) < 1e-12);
        assert!((res.mi_bits - 1.0).abs() < 1e-12);
        let fb = build_fblocks(&scn.r_h, 1, 2).unwrap();
        let mmse = vector_mmse_given_x(&res.r_star, &fb, 1, 1.0).unwrap();
        assert!((mmse - 0.75).abs() < 1e-12);
        let ach = check_achievability(&res.r_star, &fb, 1, 1.0, 1.0).unwrap();
        assert!(ach.commutator_residual < 1e-8 && ach.waterfill_deviation < 1e-8 && ach.trace_residual < 1e-8);
    }

    #[test]
    fn identity_prior_gives_uniform() {
        let scn = scenario(3, 2, 4, 2.0, 1.0, Hermitian::identity(6));
        let res = sensing_optimal_cov_closed(&scn).unwrap();
        let uniform = Hermitian::identity(3).scale(2.0 / 3.0);
        assert!(numkit::max_abs(&(res.r_star.matrix() - uniform.matrix())) < 1e-12);
        let fb = build_fblocks(&scn.r_h, 2, 3).unwrap();
        let pg = optimize_cov_pg(&fb, 4, 1.0, 2.0, PgOptions::default()).unwrap();
        assert!(numkit::max_abs(&(pg.r_star.matrix() - uniform.matrix())) < 1e-8);
        assert!(pg.converged);
    }

    #[test]
    fn unsupported_structure_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scn = scenario(2, 2, 2, 1.0, 1.0, rand_pd(&mut rng, 4));
        let err = sensing_optimal_cov_closed(&scn).unwrap_err();
        assert!(matches!(err, DrtError::Config(ref s) if s.contains("projected gradient")));
    }

    #[test]
    fn kron_factor_detection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = rand_pd(&mut rng, 3);
        let r_h = Hermitian::symmetrized(numkit::kron(a.matrix(), &CMat::identity(2, 2)));
        let got = kron_identity_factor(&r_h, 3, 2).unwrap();
        assert!(numkit::max_abs(&(got - a.matrix())) < 1e-15);
        assert!(kron_identity_factor(&rand_pd(&mut rng, 6), 3, 2).is_none());
    }

    #[test]
    fn closed_form_matches_pg() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..20 {
            let m = rng.random_range(1..4);
            let n_s = if case % 2 == 0 { 1 } else { rng.random_range(2..4) };
            let a = rand_pd(&mut rng, m);
            let r_h = Hermitian::symmetrized(numkit::kron(a.matrix(), &CMat::identity(n_s, n_s)));
            let scn = scenario(m, n_s, rng.random_range(1..6), rng.random_range(0.2..4.0), rng.random_range(0.3..2.0), r_h);
            let closed = sensing_optimal_cov_closed(&scn).unwrap();
            assert!((closed.r_star.trace_re() - scn.p_t).abs() < 1e-9);
            let fb = build_fblocks(&scn.r_h, n_s, m).unwrap();
            let pg = optimize_cov_pg(&fb, scn.t, scn.sigma_s2, scn.p_t, PgOptions::default()).unwrap();
            assert!((closed.mi_bits - pg.mi_bits).abs() < 1e-6, "case {case}: {} vs {}", closed.mi_bits, pg.mi_bits);
            assert!(closed.mi_bits >= pg.mi_bits - 1e-9);
            let ach = check_achievability(&closed.r_star, &fb, scn.t, scn.sigma_s2, scn.p_t).unwrap();
            assert!(ach.commutator_residual < 1e-8, "{ach:?}");
            assert!(ach.waterfill_deviation < 1e-8, "{ach:?}");
        }
    }

    #[test]
    fn pg_small_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r_h = rand_pd(&mut rng, 4);
        let fb = build_fblocks(&r_h, 2, 2).unwrap();
        let res = optimize_cov_pg(&fb, 2, 1.0, 1e-9, PgOptions::default()).unwrap();
        assert!(res.r_star.trace_re() < 1e-8);
        assert!(res.mi_bits < 1e-7);
        let zero = optimize_cov_pg(&fb, 2, 1.0, 0.0, PgOptions::default()).unwrap();
        assert_eq!(zero.mi_bits, 0.0);
    }

    #[test]
    fn pg_is_monotone_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r_h = rand_pd(&mut rng, 6);
        let fb = build_fblocks(&r_h, 2, 3).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for iters in [1, 2, 5, 10, 40] {
            let opts = PgOptions { max_iter: iters, ..PgOptions::default() };
            let res = optimize_cov_pg(&fb, 3, 0.5, 2.0, opts).unwrap();
            assert!(res.mi_bits >= prev - 1e-12);
            assert!(res.r_star.is_psd());
            assert!((res.r_star.trace_re() - 2.0).abs() < 1e-9);
            prev = res.mi_bits;
        }
    }

    #[test]
    fn random_covariance_misses_waterfill() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r_h = Hermitian::from_diagonal(&[2.0, 1.0, 0.3]);
        let fb = build_fblocks(&r_h, 1, 3).unwrap();
        let r = rand_pd(&mut rng, 3);
        let r = r.scale(1.5 / r.trace_re());
        let ach = check_achievability(&r, &fb, 2, 1.0, 1.5).unwrap();
        assert!(ach.waterfill_deviation > 1e-3);
        assert!(ach.trace_residual < 1e-10);
    }

    proptest! {
        #[test]
        fn waterfill_beats_random_allocations(
            lambdas in proptest::collection::vec(0.05f64..4.0, 1..6),
            budget in 0.01f64..5.0,
            seed in any::<u64>(),
        ) {
            let wf = waterfill(&lambdas, 2, 1.0, budget).unwrap();
            prop_assert!((wf.betas.iter().sum::<f64>() - budget).abs() <= 1e-10 * budget.max(1.0));
            let best = waterfill_objective(&lambdas, &wf.betas, 2, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                let w: Vec<f64> = (0..lambdas.len()).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                let s: f64 = w.iter().sum();
                let beta: Vec<f64> = w.iter().map(|x| budget * x / s).collect();
                prop_assert!(waterfill_objective(&lambdas, &beta, 2, 1.0) <= best + 1e-12);
            }
        }

        #[test]
        fn trace_identity(seed in any::<u64>(), m in 1usize..4, n_s in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fb = build_fblocks(&rand_pd(&mut rng, m * n_s), n_s, m).unwrap();
            let a = complex_gaussian_matrix(&mut rng, m, m, 1.0);
            let r = Hermitian::symmetrized(&a * a.adjoint());
            prop_assert!(fb.trace_residual(&r) <= 1e-10 * r.trace_re().max(1.0));
        }
    }
}
