//! Scenario description, signaling distributions and the sensing /
//! communication forward channels `Y = H X + Z`.
//!
//! Complex Gaussian draws follow the circularly-symmetric convention: a
//! `CN(0, s)` scalar has independent real and imaginary parts, each
//! `N(0, s/2)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{DrtError, Result};
use crate::numkit::{self, c, cr, CMat, CVec, Hermitian, C64};

/// Absolute tolerance (scaled by `max(1, P_T)`) on covariance traces.
pub const TRACE_TOL: f64 = 1e-9;

/// Problem dimensions, powers, noise levels and the target prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Transmit antennas.
    pub m: usize,
    /// Sensing receive antennas.
    pub n_s: usize,
    /// Communication receive antennas.
    pub n_c: usize,
    /// Samples per block.
    pub t: usize,
    /// Average transmit power (linear).
    pub p_t: f64,
    pub sigma_s2: f64,
    pub sigma_c2: f64,
    /// Prior covariance of `vec(H_s)`, dimension `n_s * m`.
    pub r_h: Hermitian,
    /// Communication channel coherence multiple. Metadata only.
    pub k_coherence: usize,
}

impl Scenario {
    /// Scalar scenario `M = T = N_s = N_c = 1` with `H_s ~ CN(0, sigma_h2)`.
    pub fn scalar(p_t: f64, sigma_h2: f64, sigma_s2: f64) -> Result<Self> {
        Scenario {
            m: 1,
            n_s: 1,
            n_c: 1,
            t: 1,
            p_t,
            sigma_s2,
            sigma_c2: 1.0,
            r_h: Hermitian::from_diagonal(&[sigma_h2]),
            k_coherence: 1,
        }
        .validated()
    }

    /// Dimension of the sensing parameter `eta = vec(H_s)`.
    pub fn k_dim(&self) -> usize {
        self.n_s * self.m
    }

    pub fn is_scalar(&self) -> bool {
        self.m == 1 && self.t == 1 && self.n_s == 1
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("M", self.m), ("N_s", self.n_s), ("N_c", self.n_c), ("T", self.t), ("k", self.k_coherence)] {
            if v == 0 {
                return Err(DrtError::config(format!("{name} must be at least 1")));
            }
        }
        // P_T = 0 is admitted as the degenerate no-illumination limit.
        if !(self.p_t >= 0.0 && self.p_t.is_finite()) {
            return Err(DrtError::config(format!("P_T must be finite and nonnegative, got {}", self.p_t)));
        }
        for (name, v) in [("sigma_s2", self.sigma_s2), ("sigma_c2", self.sigma_c2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DrtError::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.r_h.dim() != self.k_dim() {
            return Err(DrtError::config(format!(
                "R_h must be {k}x{k} (N_s*M), got {d}x{d}",
                k = self.k_dim(),
                d = self.r_h.dim()
            )));
        }
        numkit::ensure_pd(&self.r_h, "R_h").map_err(|e| DrtError::config(e.to_string()))
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            m: self.m,
            n_s: self.n_s,
            n_c: self.n_c,
            t: self.t,
            p_t: self.p_t,
            sigma_s2: self.sigma_s2,
            sigma_c2: self.sigma_c2,
            k_coherence: self.k_coherence,
            r_h_trace: self.r_h.trace_re(),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ScenarioSummary {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N_s")]
    pub n_s: usize,
    #[serde(rename = "N_c")]
    pub n_c: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "P_T")]
    pub p_t: f64,
    pub sigma_s2: f64,
    pub sigma_c2: f64,
    pub k_coherence: usize,
    pub r_h_trace: f64,
}

/// Distribution of the transmitted block `X` (`M x T`).
#[derive(Debug, Clone, PartialEq)]
pub enum SignalScheme {
    /// i.i.d. `CN(0, P_T / M)` entries.
    GaussianIid,
    /// Columns i.i.d. `CN(0, R)`, `tr R = P_T`.
    GaussianColored { r: Hermitian },
    /// Single constant-modulus symbol `sqrt(P_T) e^{j 2 pi u / order}`;
    /// requires `M = T = 1`.
    ConstantModulusPsk { order: u32 },
    /// `X = sqrt(T) R^{1/2} Q^H` with `Q` Haar distributed on the `T x M`
    /// semi-unitary matrices, so that `X X^H / T = R` on every draw.
    HaarFixedCovariance { r: Hermitian },
    Deterministic { x0: CMat },
}

pub const DEFAULT_PSK_ORDER: u32 = 4;

impl SignalScheme {
    pub fn label(&self) -> &'static str {
        match self {
            SignalScheme::GaussianIid => "gaussian_iid",
            SignalScheme::GaussianColored { .. } => "gaussian_colored",
            SignalScheme::ConstantModulusPsk { .. } => "psk",
            SignalScheme::HaarFixedCovariance { .. } => "haar",
            SignalScheme::Deterministic { .. } => "deterministic",
        }
    }

    /// True when `R_X` is the same on every draw.
    pub fn has_fixed_sample_cov(&self) -> bool {
        matches!(
            self,
            SignalScheme::ConstantModulusPsk { .. }
                | SignalScheme::HaarFixedCovariance { .. }
                | SignalScheme::Deterministic { .. }
        )
    }

    pub fn validate(&self, scn: &Scenario) -> Result<()> {
        let check_cov = |r: &Hermitian, what: &str| -> Result<()> {
            if r.dim() != scn.m {
                return Err(DrtError::config(format!("{what} covariance must be {0}x{0}", scn.m)));
            }
            if !r.is_psd() {
                return Err(DrtError::config(format!("{what} covariance is not PSD")));
            }
            let tr = r.trace_re();
            if (tr - scn.p_t).abs() > TRACE_TOL * scn.p_t.max(1.0) {
                return Err(DrtError::config(format!("{what} covariance has trace {tr}, expected P_T = {}", scn.p_t)));
            }
            Ok(())
        };
        match self {
            SignalScheme::GaussianIid => Ok(()),
            SignalScheme::GaussianColored { r } => check_cov(r, "Gaussian"),
            SignalScheme::ConstantModulusPsk { order } => {
                if *order < 2 {
                    return Err(DrtError::config("PSK order must be at least 2"));
                }
                if scn.m != 1 || scn.t != 1 {
                    return Err(DrtError::config("PSK signaling requires M = T = 1"));
                }
                Ok(())
            }
            SignalScheme::HaarFixedCovariance { r } => {
                if scn.t < scn.m {
                    return Err(DrtError::config("fixed-covariance Haar signaling requires T >= M"));
                }
                check_cov(r, "Haar")
            }
            SignalScheme::Deterministic { x0 } => {
                if x0.shape() != (scn.m, scn.t) {
                    return Err(DrtError::config(format!(
                        "deterministic X0 must be {}x{}, got {}x{}",
                        scn.m,
                        scn.t,
                        x0.nrows(),
                        x0.ncols()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Statistical covariance `E{R_X}`.
    pub fn statistical_cov(&self, scn: &Scenario) -> Hermitian {
        match self {
            SignalScheme::GaussianIid => Hermitian::identity(scn.m).scale(scn.p_t / scn.m as f64),
            SignalScheme::GaussianColored { r } | SignalScheme::HaarFixedCovariance { r } => r.clone(),
            SignalScheme::ConstantModulusPsk { .. } => Hermitian::from_diagonal(&[scn.p_t]),
            SignalScheme::Deterministic { x0 } => sample_cov(x0),
        }
    }
}

/// Seeded random stream. Identical `(seed, stream_id)` pairs reproduce the
/// same draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut g = ChaCha20Rng::seed_from_u64(self.seed);
        g.set_stream(self.stream_id);
        g
    }

    /// Stream for Monte Carlo trial `index`.
    pub fn trial(&self, index: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))),
        }
    }

    /// Independent named sub-stream.
    pub fn fork(&self, label: &str) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id.rotate_left(17) ^ fnv1a(label)),
        }
    }
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re * s, im * s)
}

/// `rows x cols` matrix of i.i.d. `CN(0, variance)` entries.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat {
    // Column-major fill so the draw order is fixed by the storage layout.
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_normal(rng, variance)).collect();
    CMat::from_column_slice(rows, cols, &data)
}

/// i.i.d. Rayleigh-fading channel with unit-variance entries.
pub fn sample_rayleigh<R: Rng + ?Sized>(rng: &mut R, n_c: usize, m: usize) -> CMat {
    complex_gaussian_matrix(rng, n_c, m, 1.0)
}

/// Haar-distributed `t x m` matrix with orthonormal columns (`t >= m`).
pub fn haar_semi_unitary<R: Rng + ?Sized>(rng: &mut R, t: usize, m: usize) -> CMat {
    let g = complex_gaussian_matrix(rng, t, m, 1.0);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        let d = r[(j, j)];
        let n = d.norm();
        let phase = if n > 0.0 { d / n } else { cr(1.0) };
        for i in 0..t {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Signal sampler with the scheme's square-root factors precomputed.
#[derive(Debug, Clone)]
pub struct SignalSampler {
    scheme: SignalScheme,
    m: usize,
    t: usize,
    p_t: f64,
    sqrt_r: Option<CMat>,
}

impl SignalSampler {
    pub fn new(scheme: &SignalScheme, scn: &Scenario) -> Result<Self> {
        scheme.validate(scn)?;
        let sqrt_r = match scheme {
            SignalScheme::GaussianColored { r } | SignalScheme::HaarFixedCovariance { r } => {
                Some(numkit::psd_sqrt(r).map_err(|e| DrtError::config(e.to_string()))?)
            }
            _ => None,
        };
        Ok(SignalSampler {
            scheme: scheme.clone(),
            m: scn.m,
            t: scn.t,
            p_t: scn.p_t,
            sqrt_r,
        })
    }

    pub fn scheme(&self) -> &SignalScheme {
        &self.scheme
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMat {
        let (m, t) = (self.m, self.t);
        match &self.scheme {
            SignalScheme::GaussianIid => complex_gaussian_matrix(rng, m, t, self.p_t / m as f64),
            SignalScheme::GaussianColored { .. } => {
                let w = complex_gaussian_matrix(rng, m, t, 1.0);
                self.sqrt_r.as_ref().expect("sqrt factor") * w
            }
            SignalScheme::ConstantModulusPsk { order } => {
                let u = rng.random_range(0..*order) as f64;
                let theta = 2.0 * std::f64::consts::PI * u / *order as f64;
                CMat::from_element(1, 1, C64::from_polar(self.p_t.sqrt(), theta))
            }
            SignalScheme::HaarFixedCovariance { .. } => {
                let q = haar_semi_unitary(rng, t, m);
                self.sqrt_r.as_ref().expect("sqrt factor") * q.adjoint() * cr((t as f64).sqrt())
            }
            SignalScheme::Deterministic { x0 } => x0.clone(),
        }
    }
}

/// Draws one `M x T` signal block from `scheme`.
pub fn sample_signal(scheme: &SignalScheme, scn: &Scenario, rng: &RngStream) -> Result<CMat> {
    Ok(SignalSampler::new(scheme, scn)?.sample(&mut rng.rng()))
}

/// Sample covariance `R_X = X X^H / T`.
pub fn sample_cov(x: &CMat) -> Hermitian {
    let t = x.ncols().max(1) as f64;
    Hermitian::symmetrized(x * x.adjoint() * cr(1.0 / t))
}

/// `X^T kron I_{N_s}`, so that `vec(H_s X) = lift(X) vec(H_s)`.
pub fn lift(x: &CMat, n_s: usize) -> CMat {
    numkit::kron(&x.transpose(), &CMat::identity(n_s, n_s))
}

/// Sampler for `h_s ~ CN(0, R_h)`.
#[derive(Debug, Clone)]
pub struct TargetPrior {
    sqrt_r_h: CMat,
    n_s: usize,
    m: usize,
}

impl TargetPrior {
    pub fn new(scn: &Scenario) -> Result<Self> {
        numkit::ensure_pd(&scn.r_h, "R_h").map_err(|e| DrtError::config(e.to_string()))?;
        Ok(TargetPrior {
            sqrt_r_h: numkit::psd_sqrt(&scn.r_h)?,
            n_s: scn.n_s,
            m: scn.m,
        })
    }

    /// Returns `(h_s, H_s)` with `H_s = unvec(h_s)` of shape `N_s x M`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (CVec, CMat) {
        let k = self.n_s * self.m;
        let w = complex_gaussian_matrix(rng, k, 1, 1.0);
        let h = (&self.sqrt_r_h * w).column(0).into_owned();
        let hm = CMat::from_column_slice(self.n_s, self.m, h.as_slice());
        (h, hm)
    }
}

pub fn sample_target(scn: &Scenario, rng: &RngStream) -> Result<(CVec, CMat)> {
    Ok(TargetPrior::new(scn)?.sample(&mut rng.rng()))
}

fn forward<R: Rng + ?Sized>(x: &CMat, h: &CMat, sigma2: f64, rng: &mut R) -> Result<CMat> {
    if h.ncols() != x.nrows() {
        return Err(DrtError::config(format!(
            "channel is {}x{} but signal has {} rows",
            h.nrows(),
            h.ncols(),
            x.nrows()
        )));
    }
    if !(sigma2 >= 0.0) {
        return Err(DrtError::config("noise variance must be nonnegative"));
    }
    let mut y = h * x;
    if sigma2 > 0.0 {
        y += complex_gaussian_matrix(rng, h.nrows(), x.ncols(), sigma2);
    }
    Ok(y)
}

/// `Y_s = H_s X + Z_s`.
pub fn forward_sense_with<R: Rng + ?Sized>(x: &CMat, h_s: &CMat, sigma_s2: f64, rng: &mut R) -> Result<CMat> {
    forward(x, h_s, sigma_s2, rng)
}

/// `Y_c = H_c X + Z_c`.
pub fn forward_comm_with<R: Rng + ?Sized>(x: &CMat, h_c: &CMat, sigma_c2: f64, rng: &mut R) -> Result<CMat> {
    forward(x, h_c, sigma_c2, rng)
}

pub fn forward_sense(x: &CMat, h_s: &CMat, sigma_s2: f64, rng: &RngStream) -> Result<CMat> {
    forward(x, h_s, sigma_s2, &mut rng.rng())
}

pub fn forward_comm(x: &CMat, h_c: &CMat, sigma_c2: f64, rng: &RngStream) -> Result<CMat> {
    forward(x, h_c, sigma_c2, &mut rng.rng())
}

/// Complex matrix from a row-major list of real entries.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMat {
    DMatrix::from_row_slice(rows, cols, data).map(cr)
}
