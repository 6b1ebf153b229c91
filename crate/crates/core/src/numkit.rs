//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex<f64>>`, which is column-major, so
//! [`vec_of`] is a plain copy of the storage. Eigenvalues are always sorted
//! in descending order.

use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{DrtError, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative tolerance on `||H - H^H||_max` accepted by [`Hermitian::new`].
pub const HERMITIAN_RTOL: f64 = 1e-12;
/// A matrix is positive definite when `lambda_min > PD_RTOL * lambda_max`.
pub const PD_RTOL: f64 = 1e-12;
/// Negative eigenvalues down to `-PSD_CLIP_RTOL * lambda_max` are treated as
/// round-off and clipped to zero.
pub const PSD_CLIP_RTOL: f64 = 1e-12;
pub const DEFAULT_RANK_RTOL: f64 = 1e-10;

const EIG_MAX_ITER: usize = 10_000;

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Hermitian matrix. The stored matrix is exactly Hermitian (it is
/// symmetrized on construction) and has a real diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermitian(CMat);

impl Hermitian {
    /// Validates `m` against the Hermitian tolerance and symmetrizes it.
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(DrtError::config(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DrtError::domain("matrix has non-finite entries"));
        }
        let scale = max_abs(&m);
        let skew = max_abs(&(&m - m.adjoint()));
        if skew > HERMITIAN_RTOL * scale {
            return Err(DrtError::domain(format!(
                "matrix is not Hermitian (skew {skew:.3e}, scale {scale:.3e})"
            )));
        }
        Ok(Self::symmetrized(m))
    }

    /// Projects onto the Hermitian matrices, `(m + m^H) / 2`, without checks.
    pub fn symmetrized(m: CMat) -> Self {
        let adj = m.adjoint();
        Hermitian((m + adj) * cr(0.5))
    }

    pub fn identity(n: usize) -> Self {
        Hermitian(CMat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Hermitian(CMat::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let v = CVec::from_iterator(d.len(), d.iter().map(|&x| cr(x)));
        Hermitian(CMat::from_diagonal(&v))
    }

    /// `U diag(d) U^H`.
    pub fn from_eig(u: &CMat, d: &[f64]) -> Self {
        let mut scaled = u.clone();
        for (j, &dj) in d.iter().enumerate() {
            scaled.column_mut(j).scale_mut(dj);
        }
        Self::symmetrized(scaled * u.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn trace_re(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn conj(&self) -> Self {
        Hermitian(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Hermitian(&self.0 * cr(s))
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Hermitian, b: f64) -> Self {
        Hermitian(&self.0 * cr(a) + &other.0 * cr(b))
    }

    /// Checks positive semidefiniteness up to the clipping tolerance.
    pub fn is_psd(&self) -> bool {
        match hermitian_eig(self) {
            Ok(e) => e.values.last().is_none_or(|&lo| lo >= -psd_floor(e.values[0])),
            Err(_) => false,
        }
    }
}

impl Deref for Hermitian {
    type Target = CMat;

    fn deref(&self) -> &CMat {
        &self.0
    }
}

fn psd_floor(lambda_max: f64) -> f64 {
    PSD_CLIP_RTOL * lambda_max.abs().max(f64::MIN_POSITIVE)
}

/// Eigendecomposition `H = U diag(values) U^H` with descending values.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub vectors: CMat,
    pub values: Vec<f64>,
}

impl EigDecomposition {
    pub fn reconstruct(&self) -> Hermitian {
        Hermitian::from_eig(&self.vectors, &self.values)
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Column-stacking vectorization.
pub fn vec_of(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(DrtError::config(format!(
            "cannot reshape vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMat::from_column_slice(rows, cols, v.as_slice()))
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// The `mn x mn` permutation `K` with `K vec(A) = vec(A^T)` for every
/// `m x n` matrix `A`.
pub fn commutation_matrix(m: usize, n: usize) -> CMat {
    let mut k = CMat::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            // A[i, j] sits at i + j*m in vec(A) and at j + i*n in vec(A^T).
            k[(j + i * n, i + j * m)] = cr(1.0);
        }
    }
    k
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eig(h: &Hermitian) -> Result<EigDecomposition> {
    let n = h.dim();
    if n == 0 {
        return Ok(EigDecomposition {
            vectors: CMat::zeros(0, 0),
            values: Vec::new(),
        });
    }
    let eig = SymmetricEigen::try_new(h.matrix().clone(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| DrtError::numeric("Hermitian eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigDecomposition { vectors, values })
}

/// Natural log-determinant of a positive definite Hermitian matrix.
pub fn ln_det_pd(h: &Hermitian) -> Result<f64> {
    let e = hermitian_eig(h)?;
    let (Some(&hi), Some(&lo)) = (e.values.first(), e.values.last()) else {
        return Ok(0.0);
    };
    if !(hi > 0.0 && lo > PD_RTOL * hi) {
        return Err(DrtError::domain(format!(
            "matrix is not positive definite (eigenvalues in [{lo:.3e}, {hi:.3e}])"
        )));
    }
    Ok(e.values.iter().map(|l| l.ln()).sum())
}

/// Base-2 log-determinant of a positive definite Hermitian matrix.
pub fn logdet_pd(h: &Hermitian) -> Result<f64> {
    Ok(ln_det_pd(h)? / std::f64::consts::LN_2)
}

/// `ln det(A)` for a matrix known to be Hermitian positive definite with
/// eigenvalues bounded away from zero (e.g. `I + PSD`). Cholesky based, no
/// eigendecomposition.
pub(crate) fn ln_det_spd(a: &CMat) -> Result<f64> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| DrtError::numeric("Cholesky factorization failed"))?;
    Ok(chol.l_dirty().diagonal().iter().map(|z| 2.0 * z.re.ln()).sum())
}

/// Inverse of a Hermitian positive definite matrix, Cholesky first and an
/// eigendecomposition fallback.
pub(crate) fn spd_inverse(a: &CMat) -> Result<CMat> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(chol.inverse());
    }
    let e = hermitian_eig(&Hermitian::symmetrized(a.clone()))?;
    let hi = e.values.first().copied().unwrap_or(0.0);
    if !(hi > 0.0) || e.values.iter().any(|&l| l <= PD_RTOL * hi) {
        return Err(DrtError::numeric("matrix is singular to working precision"));
    }
    let inv: Vec<f64> = e.values.iter().map(|l| 1.0 / l).collect();
    Ok(Hermitian::from_eig(&e.vectors, &inv).into_matrix())
}

/// Number of singular values above `rtol * sigma_max`.
pub fn numerical_rank(a: &CMat, rtol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * smax).count()
}

/// Euclidean projection of `lambdas` onto `{x >= 0, sum x = total}`.
pub fn project_trace_simplex(lambdas: &[f64], total: f64) -> Vec<f64> {
    if lambdas.is_empty() {
        return Vec::new();
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - total) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = lambdas.iter().map(|&v| (v - theta).max(0.0)).collect();
    // Spread the residual of the floating-point sum over the support.
    let support = out.iter().filter(|&&v| v > 0.0).count();
    if support > 0 {
        let fix = (total - out.iter().sum::<f64>()) / support as f64;
        for v in out.iter_mut().filter(|v| **v > 0.0) {
            *v = (*v + fix).max(0.0);
        }
    }
    out
}

/// Projection of a Hermitian matrix onto `{R >= 0, tr R = total}` in the
/// Frobenius norm.
pub fn project_psd_trace(h: &Hermitian, total: f64) -> Result<Hermitian> {
    let e = hermitian_eig(h)?;
    let p = project_trace_simplex(&e.values, total);
    Ok(Hermitian::from_eig(&e.vectors, &p))
}

/// Hermitian square root of a PSD matrix. Slightly negative eigenvalues
/// (round-off) are clipped; genuinely indefinite input is rejected.
pub fn psd_sqrt(h: &Hermitian) -> Result<CMat> {
    let e = hermitian_eig(h)?;
    let hi = e.values.first().copied().unwrap_or(0.0);
    let floor = psd_floor(hi);
    if let Some(&lo) = e.values.last() {
        if lo < -floor {
            return Err(DrtError::domain(format!(
                "matrix is not positive semidefinite (min eigenvalue {lo:.3e})"
            )));
        }
    }
    let roots: Vec<f64> = e.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    Ok(Hermitian::from_eig(&e.vectors, &roots).into_matrix())
}

/// Errors unless `h` is PSD up to the clipping tolerance.
pub fn ensure_psd(h: &Hermitian, what: &str) -> Result<()> {
    if h.is_psd() {
        Ok(())
    } else {
        Err(DrtError::domain(format!("{what} is not positive semidefinite")))
    }
}

/// Errors unless `h` is positive definite (`lambda_min > PD_RTOL lambda_max`).
pub fn ensure_pd(h: &Hermitian, what: &str) -> Result<()> {
    let e = hermitian_eig(h)?;
    match (e.values.first(), e.values.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 && lo > PD_RTOL * hi => Ok(()),
        _ => Err(DrtError::domain(format!("{what} is not positive definite"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_cmat(rng: &mut impl Rng, r: usize, cl: usize) -> CMat {
        CMat::from_fn(r, cl, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn rand_herm(rng: &mut impl Rng, n: usize) -> Hermitian {
        Hermitian::symmetrized(rand_cmat(rng, n, n))
    }

    fn rand_pd(rng: &mut impl Rng, n: usize) -> Hermitian {
        let a = rand_cmat(rng, n, n);
        Hermitian::symmetrized(&a * a.adjoint() + CMat::identity(n, n) * cr(0.1))
    }

    #[test]
    fn vec_is_column_major() {
        let (a, b, cc, d) = (cr(1.0), cr(2.0), cr(3.0), cr(4.0));
        let m = CMat::from_row_slice(2, 2, &[a, b, cc, d]);
        assert_eq!(vec_of(&m).as_slice(), &[a, cc, b, d]);
        let v = CMat::from_column_slice(3, 1, &[a, b, cc]);
        assert_eq!(vec_of(&v).as_slice(), v.as_slice());
        let i2 = CMat::identity(2, 2);
        assert_eq!(vec_of(&i2).as_slice(), &[cr(1.0), cr(0.0), cr(0.0), cr(1.0)]);
        assert_eq!(unvec(&vec_of(&m), 2, 2).unwrap(), m);
        assert!(unvec(&vec_of(&m), 3, 2).is_err());
    }

    #[test]
    fn kron_basic_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = rand_cmat(&mut rng, 2, 3);
        let k = kron(&CMat::identity(2, 2), &b);
        assert_eq!(k.shape(), (4, 6));
        assert_eq!(k.view((0, 0), (2, 3)), b);
        assert_eq!(k.view((2, 3), (2, 3)), b);
        assert!(max_abs(&k.view((0, 3), (2, 3)).into_owned()) == 0.0);

        let s = CMat::from_element(1, 1, c(2.0, -1.0));
        assert!(max_abs(&(kron(&s, &b) - &b * c(2.0, -1.0))) < 1e-15);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(B X A^T) = (A kron B) vec(X)
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_cmat(&mut rng, 2, 2);
        let b = rand_cmat(&mut rng, 2, 2);
        let x = rand_cmat(&mut rng, 2, 2);
        let lhs = vec_of(&(&b * &x * a.transpose()));
        let rhs = kron(&a, &b) * vec_of(&x);
        assert!((lhs - rhs).camax() < 1e-12);
    }

    #[test]
    fn commutation_small_cases() {
        assert_eq!(commutation_matrix(1, 4), CMat::identity(4, 4));
        let k = commutation_matrix(2, 2);
        let rows = [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(k[(i, j)], cr(v as f64));
            }
        }
        let k = commutation_matrix(3, 2);
        assert_eq!(&k * k.transpose(), CMat::identity(6, 6));
    }

    #[test]
    fn commutation_transposes_vec() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..=4 {
            for n in 1..=4 {
                let k = commutation_matrix(m, n);
                for _ in 0..50 {
                    let a = rand_cmat(&mut rng, m, n);
                    let lhs = &k * vec_of(&a);
                    assert_eq!(lhs, vec_of(&a.transpose()));
                }
            }
        }
    }

    #[test]
    fn commutation_swaps_kron_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (m, n) in [(2, 3), (3, 2), (1, 3), (4, 2)] {
            let k = commutation_matrix(m, n);
            let b = rand_cmat(&mut rng, n, n);
            let cc = rand_cmat(&mut rng, m, m);
            let lhs = &k * kron(&b, &cc) * k.transpose();
            assert!(max_abs(&(lhs - kron(&cc, &b))) < 1e-12);
        }
    }

    #[test]
    fn eig_trivial_cases() {
        let e = hermitian_eig(&Hermitian::from_diagonal(&[0.25, 1.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 0.25]);
        assert!(max_abs(&(e.vectors.map(|z| cr(z.norm())) - CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]))) < 1e-15);
        let e = hermitian_eig(&Hermitian::from_diagonal(&[1.0, 0.25])).unwrap();
        assert!(max_abs(&(e.vectors.map(|z| cr(z.norm())) - CMat::identity(2, 2))) < 1e-15);
        let e = hermitian_eig(&Hermitian::identity(5)).unwrap();
        assert!(e.values.iter().all(|&l| (l - 1.0).abs() < 1e-15));
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let h = rand_herm(&mut rng, 4);
            let e = hermitian_eig(&h).unwrap();
            let u = &e.vectors;
            assert!(max_abs(&(u.adjoint() * u - CMat::identity(4, 4))) <= 1e-10);
            let resid = frobenius(&(e.reconstruct().into_matrix() - h.matrix()));
            assert!(resid <= 1e-9 * frobenius(&h));
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn logdet_cases() {
        assert_eq!(logdet_pd(&Hermitian::identity(3)).unwrap(), 0.0);
        assert!((logdet_pd(&Hermitian::from_diagonal(&[2.0, 2.0])).unwrap() - 2.0).abs() < 1e-15);
        assert!(logdet_pd(&Hermitian::from_diagonal(&[1.0, 0.0])).is_err());
        assert!(logdet_pd(&Hermitian::from_diagonal(&[1.0, -1.0])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = rand_pd(&mut rng, 3);
        // Oracle: determinant via LU, independent of the eigensolver.
        let det = h.matrix().determinant();
        assert!(det.im.abs() < 1e-10 * det.re.abs());
        let oracle = det.re.log2();
        assert!((logdet_pd(&h).unwrap() - oracle).abs() < 1e-10);
        assert!((ln_det_spd(h.matrix()).unwrap() - det.re.ln()).abs() < 1e-10);
    }

    #[test]
    fn rank_cases() {
        assert_eq!(numerical_rank(&CMat::identity(3, 3), DEFAULT_RANK_RTOL), 3);
        assert_eq!(numerical_rank(&CMat::zeros(3, 2), DEFAULT_RANK_RTOL), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = rand_cmat(&mut rng, 4, 1);
        let v = rand_cmat(&mut rng, 3, 1);
        assert_eq!(numerical_rank(&(u * v.adjoint()), DEFAULT_RANK_RTOL), 1);
    }

    #[test]
    fn simplex_cases() {
        assert_eq!(project_trace_simplex(&[0.5, 0.5], 1.0), vec![0.5, 0.5]);
        assert_eq!(project_trace_simplex(&[2.0, 0.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(project_trace_simplex(&[1.0, 1.0], 1.0), vec![0.5, 0.5]);
        assert_eq!(project_trace_simplex(&[-1.0, -2.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn hermitian_validation() {
        let mut m = CMat::identity(2, 2);
        m[(0, 1)] = c(0.0, 1.0);
        assert!(Hermitian::new(m.clone()).is_err());
        m[(1, 0)] = c(0.0, -1.0);
        assert!(Hermitian::new(m).is_ok());
        assert!(Hermitian::new(CMat::zeros(2, 3)).is_err());
        assert!(!Hermitian::from_diagonal(&[1.0, -0.1]).is_psd());
        assert!(Hermitian::from_diagonal(&[1.0, -1e-14]).is_psd());
        assert!(psd_sqrt(&Hermitian::from_diagonal(&[1.0, -0.1])).is_err());
        let s = psd_sqrt(&Hermitian::from_diagonal(&[4.0, 0.0])).unwrap();
        assert!(max_abs(&(s - CMat::from_diagonal(&CVec::from_vec(vec![cr(2.0), cr(0.0)])))) < 1e-15);
    }

    proptest! {
        #[test]
        fn simplex_projection_is_feasible_and_idempotent(
            v in proptest::collection::vec(-5.0f64..5.0, 1..8),
            total in 0.0f64..10.0,
        ) {
            let p = project_trace_simplex(&v, total);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - total).abs() <= 1e-12 * total.max(1.0));
            let q = project_trace_simplex(&p, total);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12 * total.max(1.0));
            }
        }

        #[test]
        fn simplex_projection_is_nearest(
            v in proptest::collection::vec(-3.0f64..3.0, 2..6),
            w in proptest::collection::vec(0.0f64..1.0, 6),
            total in 0.1f64..5.0,
        ) {
            // Any other feasible point is at least as far from v.
            let p = project_trace_simplex(&v, total);
            let n = v.len();
            let s: f64 = w[..n].iter().sum::<f64>().max(1e-9);
            let other: Vec<f64> = w[..n].iter().map(|x| x / s * total).collect();
            let d = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            prop_assert!(d(&p) <= d(&other) + 1e-12);
        }

        #[test]
        fn eig_shift_moves_spectrum(seed in 0u64..1000, shift in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = rand_herm(&mut rng, 4);
            let shifted = Hermitian::symmetrized(h.matrix() + CMat::identity(4, 4) * cr(shift));
            let a = hermitian_eig(&h).unwrap();
            let b = hermitian_eig(&shifted).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x + shift - y).abs() < 1e-10);
            }
        }
    }
}
