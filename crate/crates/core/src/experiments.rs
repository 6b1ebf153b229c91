//! Verification suites and tradeoff-curve generation.
//!
//! Every suite returns a [`VerificationReport`]; stochastic checks use a
//! margin of three standard errors.

use std::io::{self, Write};

use serde::Serialize;

use crate::capacity::{ergodic_gaussian_rate, high_snr_rate};
use crate::covopt::{self, optimize_cov_pg, sensing_optimal_cov_closed, PgOptions};
use crate::error::{DrtError, Result};
use crate::estimation::{
    empirical_mse, empirical_mse_paired, scalar_avg_mmse, vector_mmse_given_x, vector_mmse_unrotated, Averaging,
};
use crate::infomeasures::{
    build_fblocks, ergodic_sensing_mi, ergodic_sensing_mi_with, mi_direct, mi_given_cov, scalar_mi_max, FBlockSet,
    MCEstimate,
};
use crate::model::{self, RngStream, Scenario, ScenarioSummary, SignalSampler, SignalScheme};
use crate::numkit::{self, cr, CMat, Hermitian};
use crate::ratedistortion::{scalar_dr, scalar_rd, vector_dr, vector_rd};

const MC_SIGMAS: f64 = 3.0;
const QUADRATURE_NODES: usize = 120;
const IDENTITY_SAMPLES: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "~=")]
    Approx,
    /// Not applicable to this scenario; always passes.
    #[serde(rename = "skipped")]
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

impl Check {
    fn new(name: &str, lhs: f64, rhs: f64, relation: Relation, tolerance: f64) -> Self {
        let pass = match relation {
            Relation::Le => lhs <= rhs + tolerance,
            Relation::Ge => lhs >= rhs - tolerance,
            Relation::Approx => (lhs - rhs).abs() <= tolerance,
            Relation::Skipped => true,
        };
        Check {
            name: name.to_string(),
            lhs,
            rhs,
            relation,
            tolerance,
            pass,
            note: String::new(),
        }
    }

    pub fn le(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Check::new(name, lhs, rhs, Relation::Le, tolerance)
    }

    pub fn ge(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Check::new(name, lhs, rhs, Relation::Ge, tolerance)
    }

    pub fn approx(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Check::new(name, lhs, rhs, Relation::Approx, tolerance)
    }

    pub fn skipped(name: &str, note: &str) -> Self {
        Check::new(name, 0.0, 0.0, Relation::Skipped, 0.0).with_note(note)
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = note.to_string();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub scenario: ScenarioSummary,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(scn: &Scenario, seed: u64, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        VerificationReport { scenario: scn.summary(), seed, checks, pass }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn margin(est: &MCEstimate) -> f64 {
    MC_SIGMAS * est.stderr
}

/// Scalar suite: constant-modulus MSE against its closed form, the Jensen
/// gap of Gaussian signaling, and the scalar rate-distortion chain.
pub fn verify_scalar(scn: &Scenario, trials: usize, rng: &RngStream) -> Result<VerificationReport> {
    if !scn.is_scalar() || scn.n_c != 1 {
        return Err(DrtError::config("scalar verification requires M = T = N_s = N_c = 1"));
    }
    let sigma_h2 = scn.r_h[(0, 0)].re;
    let i_max = scalar_mi_max(scn.p_t, sigma_h2, scn.sigma_s2);
    let bound = scalar_dr(i_max, sigma_h2)?;
    let psk = SignalScheme::ConstantModulusPsk { order: model::DEFAULT_PSK_ORDER };
    let gauss = SignalScheme::GaussianIid;

    let psk_mse = empirical_mse(&psk, scn, trials, &rng.fork("psk_mse"))?;
    let gauss_mse = empirical_mse(&gauss, scn, trials, &rng.fork("gaussian_mse"))?;
    let avg_mmse = scalar_avg_mmse(&gauss, scn, Averaging::Quadrature { nodes: QUADRATURE_NODES }, rng)?;
    let mi = ergodic_sensing_mi(&gauss, scn, trials, &rng.fork("gaussian_mi"))?;

    let checks = vec![
        Check::approx("prop2_psk_mse", psk_mse.mean, bound, margin(&psk_mse))
            .with_note("constant-modulus MSE vs sigma_h^2 2^-I_max"),
        Check::ge("jensen_gap", gauss_mse.mean, bound, margin(&gauss_mse))
            .with_note("Gaussian MSE is at least the constant-modulus bound"),
        Check::approx("gaussian_mse_quadrature", gauss_mse.mean, avg_mmse.mean, margin(&gauss_mse))
            .with_note("Gaussian MSE vs quadrature of the average MMSE"),
        Check::le("gaussian_mi_below_max", mi.mean, i_max, margin(&mi)),
        Check::le("rd_of_avg_mmse_below_mi", scalar_rd(avg_mmse.mean, sigma_h2)?, mi.mean, margin(&mi) + 1e-9),
    ];
    Ok(VerificationReport::new(scn, rng.seed, checks))
}

/// `x0` with `tr(x0 x0^H) / T = P_T`, drawn once.
fn deterministic_block(scn: &Scenario, rng: &RngStream) -> CMat {
    let g = model::complex_gaussian_matrix(&mut rng.rng(), scn.m, scn.t, 1.0);
    let power = g.iter().map(|z| z.norm_sqr()).sum::<f64>() / scn.t as f64;
    if power > 0.0 {
        g * cr((scn.p_t / power).sqrt())
    } else {
        g
    }
}

/// `R_h = A kron I_{N_s}` or `N_s = 1`.
pub fn has_closed_form(scn: &Scenario) -> bool {
    scn.n_s == 1 || covopt::kron_identity_factor(&scn.r_h, scn.m, scn.n_s).is_some()
}

fn dvg(mi_bits: f64, fb: &FBlockSet) -> Result<f64> {
    Ok(vector_dr(mi_bits.max(0.0), &fb.lambdas)?.distortion)
}

/// Vector suite: the two MI and MMSE forms, block-set identities, the
/// optimizer cross-check, the rate-distortion fixed point and the MSE
/// bound for several schemes.
pub fn verify_vector(scn: &Scenario, trials: usize, rng: &RngStream) -> Result<VerificationReport> {
    scn.validate()?;
    let fb = build_fblocks(&scn.r_h, scn.n_s, scn.m)?;
    let mut checks = Vec::new();

    let sampler = SignalSampler::new(&SignalScheme::GaussianIid, scn)?;
    let forms = rng.fork("forms");
    let (mut mi_gap, mut mmse_gap, mut trace_gap) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..IDENTITY_SAMPLES {
        let x = sampler.sample(&mut forms.trial(i).rng());
        let r = model::sample_cov(&x);
        let direct = mi_direct(&x, &scn.r_h, scn.sigma_s2)?;
        mi_gap = mi_gap.max((direct - mi_given_cov(&r, &fb, scn.t, scn.sigma_s2)?).abs());
        let rotated = vector_mmse_given_x(&r, &fb, scn.t, scn.sigma_s2)?;
        let plain = vector_mmse_unrotated(&r, &scn.r_h, scn.t, scn.sigma_s2)?;
        mmse_gap = mmse_gap.max((rotated - plain).abs() / plain.max(1.0));
        trace_gap = trace_gap.max(fb.trace_residual(&r) / (scn.n_s as f64 * r.trace_re()).max(1.0));
    }
    checks.push(Check::le("mi_forms_agree", mi_gap, 0.0, 1e-9));
    checks.push(Check::le("mmse_forms_agree", mmse_gap, 0.0, 1e-9));
    checks.push(Check::le("fblock_orthonormality", fb.orthonormality_residual(), 0.0, 1e-10));
    checks.push(Check::le("fblock_trace_identity", trace_gap, 0.0, 1e-10));

    let pg = optimize_cov_pg(&fb, scn.t, scn.sigma_s2, scn.p_t, PgOptions::default())?;
    let closed = if has_closed_form(scn) { Some(sensing_optimal_cov_closed(scn)?) } else { None };
    match &closed {
        Some(cf) => checks.push(Check::approx("closed_form_matches_pg", cf.mi_bits, pg.mi_bits, 1e-6)),
        None => checks.push(Check::skipped("closed_form_matches_pg", "no closed form for this R_h structure")),
    }
    let opt = closed.as_ref().unwrap_or(&pg);
    let r_star = &opt.r_star;

    let mmse_star = vector_mmse_given_x(r_star, &fb, scn.t, scn.sigma_s2)?;
    let rd = vector_rd(mmse_star, &fb.lambdas)?;
    checks.push(if closed.is_some() {
        Check::approx("rd_fixed_point", rd, opt.mi_bits, 1e-9).with_note("water-filled optimum")
    } else {
        Check::le("rd_fixed_point", rd, opt.mi_bits, 1e-9).with_note("projected-gradient optimum; equality not implied")
    });

    let haar_ok = scn.t >= scn.m;
    if haar_ok {
        let paired = empirical_mse_paired(&SignalScheme::HaarFixedCovariance { r: r_star.clone() }, scn, trials, &rng.fork("haar_mse"))?;
        checks.push(Check::approx("haar_mse_matches_mmse", paired.empirical.mean, mmse_star, margin(&paired.empirical)));
    } else {
        checks.push(Check::skipped("haar_mse_matches_mmse", "fixed-covariance Haar signaling needs T >= M"));
    }

    let mut schemes = vec![SignalScheme::GaussianIid, SignalScheme::GaussianColored { r: r_star.clone() }];
    if haar_ok {
        schemes.push(SignalScheme::HaarFixedCovariance { r: r_star.clone() });
    }
    schemes.push(SignalScheme::Deterministic { x0: deterministic_block(scn, &rng.fork("deterministic")) });
    for scheme in &schemes {
        let sub = rng.fork(scheme.label());
        let mse = empirical_mse(scheme, scn, trials, &sub.fork("mse"))?;
        let mi = ergodic_sensing_mi_with(scheme, scn, &fb, trials, &sub.fork("mi"))?;
        let name = format!("dvg_below_mse_{}", scheme.label());
        checks.push(Check::le(&name, dvg(mi.mean, &fb)?, mse.mean, margin(&mse)));
    }
    Ok(VerificationReport::new(scn, rng.seed, checks))
}

/// The three terms of the MSE lower-bound chain for one scheme.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundChain {
    pub empirical_mse: MCEstimate,
    pub ergodic_mi: MCEstimate,
    pub mi_at_statistical_cov: f64,
    /// `D_VG` of the ergodic MI.
    pub middle: f64,
    /// `D_VG` of the MI at the statistical covariance.
    pub right: f64,
}

pub fn bound_chain(scheme: &SignalScheme, scn: &Scenario, fb: &FBlockSet, trials: usize, rng: &RngStream) -> Result<BoundChain> {
    scheme.validate(scn)?;
    let empirical = empirical_mse(scheme, scn, trials, &rng.fork("mse"))?;
    let ergodic = ergodic_sensing_mi_with(scheme, scn, fb, trials, &rng.fork("mi"))?;
    let at_mean = mi_given_cov(&scheme.statistical_cov(scn), fb, scn.t, scn.sigma_s2)?;
    Ok(BoundChain {
        empirical_mse: empirical,
        ergodic_mi: ergodic,
        mi_at_statistical_cov: at_mean,
        middle: dvg(ergodic.mean, fb)?,
        right: dvg(at_mean, fb)?,
    })
}

/// Checks `MSE + 3 sigma >= D_VG(E I) >= D_VG(I(E R_X))` per scheme, with
/// equality on the right for fixed-covariance schemes.
pub fn verify_bounds(scn: &Scenario, schemes: &[SignalScheme], trials: usize, rng: &RngStream) -> Result<VerificationReport> {
    scn.validate()?;
    let fb = build_fblocks(&scn.r_h, scn.n_s, scn.m)?;
    let mut checks = Vec::new();
    for (idx, scheme) in schemes.iter().enumerate() {
        let chain = bound_chain(scheme, scn, &fb, trials, &rng.fork(scheme.label()).trial(idx as u64))?;
        let label = scheme.label();
        checks.push(Check::ge(&format!("{label}_mse_above_dvg"), chain.empirical_mse.mean, chain.middle, margin(&chain.empirical_mse)));
        checks.push(Check::ge(&format!("{label}_jensen"), chain.middle, chain.right, 1e-9));
        if scheme.has_fixed_sample_cov() {
            checks.push(Check::approx(&format!("{label}_fixed_cov_equality"), chain.middle, chain.right, 1e-9));
        }
    }
    Ok(VerificationReport::new(scn, rng.seed, checks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub alpha: f64,
    pub scheme: String,
    pub comm_rate_bits: f64,
    pub comm_rate_stderr: f64,
    pub sensing_mi_bits: f64,
    pub sensing_mi_stderr: f64,
    pub distortion_bound: f64,
    pub empirical_mse: f64,
    pub empirical_mse_stderr: f64,
}

pub const CSV_HEADER: &str = "alpha,scheme,comm_rate_bits,comm_rate_stderr,sensing_mi_bits,sensing_mi_stderr,distortion_bound,empirical_mse,empirical_mse_stderr";

pub fn write_curve_csv<W: Write>(points: &[TradeoffPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.alpha,
            p.scheme,
            p.comm_rate_bits,
            p.comm_rate_stderr,
            p.sensing_mi_bits,
            p.sensing_mi_stderr,
            p.distortion_bound,
            p.empirical_mse,
            p.empirical_mse_stderr
        )?;
    }
    Ok(())
}

pub fn curve_csv(points: &[TradeoffPoint]) -> String {
    let mut buf = Vec::new();
    write_curve_csv(points, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Water-filling on the average Gram matrix `E{H_c^H H_c}`.
pub fn comm_optimal_cov(channels: &[CMat], p_t: f64, sigma_c2: f64) -> Result<Hermitian> {
    let first = channels.first().ok_or_else(|| DrtError::config("no channel samples"))?;
    let m = first.ncols();
    let mut gram = CMat::zeros(m, m);
    for h in channels {
        gram += h.adjoint() * h;
    }
    let gram = Hermitian::symmetrized(gram * cr(1.0 / channels.len() as f64));
    let eig = numkit::hermitian_eig(&gram)?;
    let top = eig.values[0];
    if !(top > 0.0) {
        return Err(DrtError::config("communication channel is identically zero"));
    }
    let active: Vec<f64> = eig.values.iter().copied().filter(|&g| g > numkit::DEFAULT_RANK_RTOL * top).collect();
    let mut betas = covopt::waterfill(&active, 1, sigma_c2, p_t)?.betas;
    betas.resize(m, 0.0);
    Ok(Hermitian::from_eig(&eig.vectors, &betas))
}

fn interpolate(r_comm: &Hermitian, r_sens: &Hermitian, alpha: f64, p_t: f64) -> Hermitian {
    let r = r_comm.combine(1.0 - alpha, r_sens, alpha);
    let tr = r.trace_re();
    if tr > 0.0 {
        r.scale(p_t / tr)
    } else {
        r
    }
}

/// Tradeoff sweep over Rayleigh channel draws, one per trial.
pub fn drt_curve(scn: &Scenario, n_points: usize, trials: usize, rng: &RngStream) -> Result<Vec<TradeoffPoint>> {
    let mut g = rng.fork("channel").rng();
    let channels: Vec<CMat> = (0..trials).map(|_| model::sample_rayleigh(&mut g, scn.n_c, scn.m)).collect();
    drt_curve_with_channels(scn, &channels, n_points, trials, rng)
}

/// Sweeps `R(alpha) = (1 - alpha) R_comm + alpha R_sens` and emits a
/// Gaussian and a fixed-covariance Haar row per grid point.
pub fn drt_curve_with_channels(
    scn: &Scenario,
    channels: &[CMat],
    n_points: usize,
    trials: usize,
    rng: &RngStream,
) -> Result<Vec<TradeoffPoint>> {
    scn.validate()?;
    if n_points < 2 {
        return Err(DrtError::config("the sweep needs at least 2 points"));
    }
    if scn.t < scn.m {
        return Err(DrtError::config("fixed-covariance Haar rows need T >= M"));
    }
    if channels.iter().any(|h| h.shape() != (scn.n_c, scn.m)) {
        return Err(DrtError::config(format!("channel samples must be {}x{}", scn.n_c, scn.m)));
    }
    let fb = build_fblocks(&scn.r_h, scn.n_s, scn.m)?;
    let r_comm = comm_optimal_cov(channels, scn.p_t, scn.sigma_c2)?;
    let r_sens = covopt::sensing_optimal_cov(scn, &fb)?.r_star;

    let sweep = rng.fork("sweep");
    let mut rows = Vec::with_capacity(2 * n_points);
    for i in 0..n_points {
        let alpha = i as f64 / (n_points - 1) as f64;
        let r = interpolate(&r_comm, &r_sens, alpha, scn.p_t);
        let point = sweep.trial(i as u64);

        let gaussian = SignalScheme::GaussianColored { r: r.clone() };
        let rate = ergodic_gaussian_rate(channels, &r, scn.sigma_c2)?;
        let mi = ergodic_sensing_mi_with(&gaussian, scn, &fb, trials, &point.fork("gaussian_mi"))?;
        let mse = empirical_mse(&gaussian, scn, trials, &point.fork("gaussian_mse"))?;
        rows.push(TradeoffPoint {
            alpha,
            scheme: "gaussian".into(),
            comm_rate_bits: rate.mean,
            comm_rate_stderr: rate.stderr,
            sensing_mi_bits: mi.mean,
            sensing_mi_stderr: mi.stderr,
            distortion_bound: dvg(mi.mean, &fb)?,
            empirical_mse: mse.mean,
            empirical_mse_stderr: mse.stderr,
        });

        let haar = SignalScheme::HaarFixedCovariance { r: r.clone() };
        let cap = high_snr_rate(channels, &r, scn.sigma_c2, scn.t)?;
        let mi = mi_given_cov(&r, &fb, scn.t, scn.sigma_s2)?;
        let mse = empirical_mse(&haar, scn, trials, &point.fork("haar_mse"))?;
        rows.push(TradeoffPoint {
            alpha,
            scheme: "haar".into(),
            comm_rate_bits: cap.rate_bits_per_symbol,
            comm_rate_stderr: cap.stderr,
            sensing_mi_bits: mi,
            sensing_mi_stderr: 0.0,
            distortion_bound: dvg(mi, &fb)?,
            empirical_mse: mse.mean,
            empirical_mse_stderr: mse.stderr,
        });
    }
    Ok(rows)
}

/// Rows violating `distortion_bound <= empirical_mse + 3 stderr`.
pub fn ordering_violations(points: &[TradeoffPoint]) -> Vec<&TradeoffPoint> {
    points
        .iter()
        .filter(|p| p.distortion_bound > p.empirical_mse + MC_SIGMAS * p.empirical_mse_stderr)
        .collect()
}
