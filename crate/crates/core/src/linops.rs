//! Small dense complex linear algebra kernel.
//!
//! Everything the fractional-programming updates need: Hermitian
//! eigendecomposition, principal square roots, regularized positive
//! definite solves, log-determinants, and a scalar bisection for the
//! power-constraint multiplier.
//!
//! Matrices are `nalgebra` dense complex matrices. Dimensions in this crate
//! stay small (antenna counts up to 8), so nothing here tries to be clever
//! about blocking or sparsity.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex64>;

/// Relative tolerance for Hermitian symmetry checks.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Smallest eigenvalue may dip to `-PSD_TOL * largest_eigenvalue`.
pub const PSD_TOL: f64 = 1e-8;
/// Maximum number of doublings when bracketing a multiplier.
pub const MAX_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eig:.3e}, tolerance {tol:.3e})")]
    NotPsd { min_eig: f64, tol: f64 },
    #[error("matrix is numerically singular")]
    Singular,
    #[error("no upper bracket found for the multiplier after {doublings} doublings")]
    NoBracket { doublings: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |r, c| if r == c { c64(values[r], 0.0) } else { c64(0.0, 0.0) })
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `(M + M†)/2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

/// Real part of the trace.
pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// `tr(A†B)` real part, i.e. the real Frobenius inner product.
pub fn inner_re(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Relative asymmetry `‖M − M†‖_F / ‖M‖_F` (0 for the zero matrix).
pub fn asymmetry(m: &CMatrix) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are orthonormal eigenvectors, ordered like `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(m: &CMatrix) -> Self {
        let n = m.nrows();
        let eig = SymmetricEigen::new(hermitian_part(m));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `U f(D) U†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for c in 0..n {
            let s = c64(f(self.values[c]), 0.0);
            for r in 0..n {
                scaled[(r, c)] *= s;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

pub fn psd_tolerance(max_eig: f64) -> f64 {
    PSD_TOL * max_eig.max(0.0)
}

/// Hermitian positive semidefinite matrix.
///
/// The stored matrix is exactly Hermitian: constructors symmetrize.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPsd(CMatrix);

impl HermitianPsd {
    /// Validates symmetry and the PSD property, then symmetrizes.
    pub fn try_new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        if !is_finite(&m) {
            return Err(LinalgError::NonFinite);
        }
        let asym = asymmetry(&m);
        if asym > HERMITIAN_TOL {
            return Err(LinalgError::NotHermitian { asymmetry: asym });
        }
        let h = hermitian_part(&m);
        let eig = HermitianEigen::new(&h);
        let tol = psd_tolerance(eig.max());
        if eig.min() < -tol {
            return Err(LinalgError::NotPsd { min_eig: eig.min(), tol });
        }
        Ok(Self(h))
    }

    /// Symmetrizes without checking definiteness. For matrices that are PSD
    /// by construction (Gram matrices, closed-form optima).
    pub fn from_gram(m: CMatrix) -> Self {
        Self(hermitian_part(&m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        HermitianEigen::new(&self.0).min()
    }
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    Ok(())
}

/// Principal (Hermitian PSD) square root.
///
/// Negative eigenvalues within the PSD tolerance are clamped to zero.
pub fn hermitian_sqrt(m: &HermitianPsd) -> Result<CMatrix> {
    let eig = HermitianEigen::new(m.as_matrix());
    let tol = psd_tolerance(eig.max());
    if eig.min() < -tol {
        return Err(LinalgError::NotPsd { min_eig: eig.min(), tol });
    }
    Ok(hermitian_part(&eig.map(|v| v.max(0.0).sqrt())))
}

fn cholesky(b: &CMatrix, ridge: f64) -> Result<Cholesky<Complex64, Dyn>> {
    check_square(b)?;
    let mut shifted = hermitian_part(b);
    if ridge != 0.0 {
        for k in 0..shifted.nrows() {
            shifted[(k, k)] += c64(ridge, 0.0);
        }
    }
    let chol = Cholesky::new(shifted).ok_or(LinalgError::Singular)?;
    // Cholesky succeeds on barely-positive pivots; reject hopeless conditioning.
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), z| (lo.min(z.re), hi.max(z.re)));
    if !(lo > 0.0) || lo < hi * 1e-13 {
        return Err(LinalgError::Singular);
    }
    Ok(chol)
}

/// `(B + ridge·I)⁻¹ X` for Hermitian positive (semi)definite `B`.
pub fn psd_solve(b: &CMatrix, x: &CMatrix, ridge: f64) -> Result<CMatrix> {
    if b.nrows() != x.nrows() {
        return Err(LinalgError::DimensionMismatch { expected: b.nrows(), found: x.nrows() });
    }
    let chol = cholesky(b, ridge)?;
    Ok(chol.solve(x))
}

/// `log|B|` (natural log) for Hermitian positive definite `B`.
pub fn log_det_hpd(b: &CMatrix) -> Result<f64> {
    let chol = cholesky(b, 0.0)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>())
}

/// `log|I + M|` for Hermitian PSD `M`.
pub fn log_det_identity_plus(m: &CMatrix) -> Result<f64> {
    let n = m.nrows();
    log_det_hpd(&(m + identity(n)))
}

/// Smallest `μ ≥ 0` with `power_of_mu(μ) ≤ p_max`.
///
/// `power_of_mu` must be nonincreasing and vanish as `μ → ∞`. The returned
/// multiplier is on the feasible side, and when the constraint binds it
/// satisfies `|power(μ) − p_max| ≤ tol·p_max` unless the interval has
/// collapsed to machine precision first.
pub fn bisect_multiplier(power_of_mu: impl Fn(f64) -> f64, p_max: f64, tol: f64) -> Result<f64> {
    if power_of_mu(0.0) <= p_max {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while power_of_mu(hi) > p_max {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(LinalgError::NoBracket { doublings: MAX_DOUBLINGS });
        }
    }
    for _ in 0..400 {
        let p_hi = power_of_mu(hi);
        if p_max - p_hi <= tol * p_max {
            return Ok(hi);
        }
        // The bracket can span many orders of magnitude; shrink it
        // geometrically until the endpoints are comparable.
        let mid = if lo > 0.0 && hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            return Ok(hi);
        }
        if power_of_mu(mid) > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> CMatrix {
        let g = random_matrix(rng, n, rank);
        &g * g.adjoint()
    }

    #[test]
    fn sqrt_identity_and_diagonal() {
        let s = hermitian_sqrt(&HermitianPsd::identity(2)).unwrap();
        assert!((s - identity(2)).norm() < 1e-14);
        let d = HermitianPsd::try_new(diag(&[4.0, 9.0])).unwrap();
        let s = hermitian_sqrt(&d).unwrap();
        assert!((s - diag(&[2.0, 3.0])).norm() < 1e-12);
    }

    #[test]
    fn sqrt_random_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_psd(&mut rng, 3, 3);
        let s = hermitian_sqrt(&HermitianPsd::try_new(m.clone()).unwrap()).unwrap();
        let rec = &s * s.adjoint();
        assert!((rec - &m).norm() / m.norm() < 1e-10);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = diag(&[1.0, -0.5]);
        assert!(matches!(HermitianPsd::try_new(m.clone()), Err(LinalgError::NotPsd { .. })));
        // bypassing the constructor still hits the check inside hermitian_sqrt
        let bad = HermitianPsd::from_gram(m);
        assert!(matches!(hermitian_sqrt(&bad), Err(LinalgError::NotPsd { .. })));
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)]);
        assert!(matches!(HermitianPsd::try_new(m), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn psd_solve_basic_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 3, 2);
        let out = psd_solve(&identity(3), &x, 0.0).unwrap();
        assert!((out - &x).norm() < 1e-14);
        let out = psd_solve(&(identity(2) * c64(2.0, 0.0)), &identity(2), 0.0).unwrap();
        assert!((out - identity(2) * c64(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn psd_solve_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_psd(&mut rng, 4, 4) + identity(4) * c64(0.1, 0.0);
        let x = random_matrix(&mut rng, 4, 3);
        let out = psd_solve(&b, &x, 0.0).unwrap();
        assert!((&b * out - &x).norm() < 1e-9 * x.norm());
    }

    #[test]
    fn psd_solve_ridge_and_singular() {
        let b = diag(&[1.0, 0.0]);
        assert_eq!(psd_solve(&b, &identity(2), 0.0), Err(LinalgError::Singular));
        let out = psd_solve(&b, &identity(2), 1.0).unwrap();
        assert!((out - diag(&[0.5, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_psd(&mut rng, 4, 4) + identity(4);
        let eig = HermitianEigen::new(&m);
        let expected: f64 = eig.values.iter().map(|v| v.ln()).sum();
        assert!((log_det_hpd(&m).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn bisection_inactive_constraint() {
        assert_eq!(bisect_multiplier(|_| 0.5, 1.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn bisection_closed_form() {
        let mu = bisect_multiplier(|mu| 4.0 / (1.0 + mu).powi(2), 1.0, 1e-12).unwrap();
        assert!((mu - 1.0).abs() < 1e-9, "mu = {mu}");
    }

    #[test]
    fn bisection_tiny_and_huge_scales() {
        // root near 1e-6
        let f = |mu: f64| 4e-12 / (1e-6 + mu).powi(2);
        let mu = bisect_multiplier(f, 1.0, 1e-10).unwrap();
        assert!(f(mu) <= 1.0 && f(mu) >= 1.0 - 1e-10, "{}", f(mu));
        // root near 1e6
        let g = |mu: f64| 1e12 / (1.0 + mu).powi(2);
        let mu = bisect_multiplier(g, 1.0, 1e-10).unwrap();
        assert!(g(mu) <= 1.0 && g(mu) >= 1.0 - 1e-10);
    }

    #[test]
    fn bisection_reports_missing_bracket() {
        assert_eq!(bisect_multiplier(|_| 2.0, 1.0, 1e-9), Err(LinalgError::NoBracket { doublings: MAX_DOUBLINGS }));
    }
}
