//! Scalar and matrix fractional-programming transforms.
//!
//! Each transform rewrites a ratio objective with an auxiliary variable so
//! that, for fixed auxiliaries, numerator and denominator decouple. The
//! closed-form auxiliary optimizers recover the original objective exactly,
//! and anchoring the auxiliaries at a point turns the transformed objective
//! into a minorizing surrogate; [`certify_surrogate`] checks the latter
//! numerically.

use num_complex::Complex64;
use thiserror::Error;

use crate::linops::{
    self, c64, hermitian_part, identity, log_det_hpd, log_det_identity_plus, psd_solve, trace_re, CMatrix,
    HermitianPsd, LinalgError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FpError {
    #[error("invalid fraction: {0}")]
    InvalidFraction(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, FpError>;

/// `w · A/B` with `A ≥ 0`, `B > 0`, `w ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarFraction {
    pub numerator: f64,
    pub denominator: f64,
    pub weight: f64,
}

impl ScalarFraction {
    pub fn new(numerator: f64, denominator: f64, weight: f64) -> Result<Self> {
        if !(numerator >= 0.0) || !numerator.is_finite() {
            return Err(FpError::InvalidFraction("numerator must be finite and nonnegative"));
        }
        if !(denominator > 0.0) || !denominator.is_finite() {
            return Err(FpError::InvalidFraction("denominator must be finite and positive"));
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(FpError::InvalidFraction("weight must be finite and nonnegative"));
        }
        Ok(Self { numerator, denominator, weight })
    }

    pub fn ratio(&self) -> f64 {
        self.numerator / self.denominator
    }
}

/// Auxiliary variables of the scalar transforms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarAux {
    /// Quadratic-transform variable.
    pub y: f64,
    /// Lagrangian dual variable.
    pub gamma: f64,
    /// Benson pair, `v ≥ u²`.
    pub u: f64,
    pub v: f64,
}

impl ScalarAux {
    pub fn optimal(f: &ScalarFraction) -> Self {
        let (u, v) = benson_opt(f);
        Self { y: scalar_quadratic_opt_y(f), gamma: scalar_lagrangian_opt_gamma(f), u, v }
    }
}

/// `2y√A − y²B`.
pub fn scalar_quadratic_value(f: &ScalarFraction, y: f64) -> f64 {
    2.0 * y * f.numerator.sqrt() - y * y * f.denominator
}

pub fn scalar_quadratic_opt_y(f: &ScalarFraction) -> f64 {
    f.numerator.sqrt() / f.denominator
}

/// Benson's form `2u√A − vB` under `u² ≤ v`.
pub fn benson_value(f: &ScalarFraction, u: f64, v: f64) -> f64 {
    2.0 * u * f.numerator.sqrt() - v * f.denominator
}

/// Maximizer of [`benson_value`] over `u² ≤ v`. The constraint is tight.
pub fn benson_opt(f: &ScalarFraction) -> (f64, f64) {
    let u = scalar_quadratic_opt_y(f);
    (u, u * u)
}

/// `w log(1+γ) − wγ + (1+γ) w A/(A+B)`.
pub fn scalar_lagrangian_value(f: &ScalarFraction, gamma: f64) -> f64 {
    let w = f.weight;
    if w == 0.0 {
        return 0.0;
    }
    let a = f.numerator;
    w * (1.0 + gamma).ln() - gamma * w + (1.0 + gamma) * w * a / (a + f.denominator)
}

pub fn scalar_lagrangian_opt_gamma(f: &ScalarFraction) -> f64 {
    f.ratio()
}

/// Matrix ratio `√A† B⁻¹ √A` with weight `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFraction {
    pub sqrt_numerator: CMatrix,
    pub denominator: HermitianPsd,
    pub weight: f64,
}

impl MatrixFraction {
    /// `B` must be positive definite and `√A` square of the same size.
    pub fn new(sqrt_numerator: CMatrix, denominator: HermitianPsd, weight: f64) -> Result<Self> {
        let n = denominator.dim();
        if sqrt_numerator.nrows() != n || sqrt_numerator.ncols() != n {
            return Err(FpError::InvalidFraction("numerator and denominator dimensions differ"));
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(FpError::InvalidFraction("weight must be finite and nonnegative"));
        }
        if !linops::is_finite(&sqrt_numerator) {
            return Err(FpError::Linalg(LinalgError::NonFinite));
        }
        if !(denominator.min_eigenvalue() > 0.0) {
            return Err(FpError::InvalidFraction("denominator must be positive definite"));
        }
        Ok(Self { sqrt_numerator, denominator, weight })
    }

    pub fn dim(&self) -> usize {
        self.denominator.dim()
    }

    /// `A = √A √A†`.
    pub fn numerator(&self) -> CMatrix {
        &self.sqrt_numerator * self.sqrt_numerator.adjoint()
    }

    /// `√A† B⁻¹ √A`.
    pub fn ratio(&self) -> Result<HermitianPsd> {
        let x = psd_solve(self.denominator.as_matrix(), &self.sqrt_numerator, 0.0)?;
        Ok(HermitianPsd::from_gram(self.sqrt_numerator.adjoint() * x))
    }

    /// `w log|I + √A† B⁻¹ √A|`, the objective the Lagrangian transforms recover.
    pub fn log_det_objective(&self) -> Result<f64> {
        if self.weight == 0.0 {
            return Ok(0.0);
        }
        Ok(self.weight * log_det_identity_plus(self.ratio()?.as_matrix())?)
    }
}

/// Auxiliary variables of the matrix transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixAux {
    pub y: CMatrix,
    pub gamma: HermitianPsd,
}

/// Nondecreasing matrix functions the transforms are applied to.
#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneMatrixFn {
    /// `Z ↦ tr(W Z)` for a PSD weight `W`.
    TraceWeighted(HermitianPsd),
    /// `Z ↦ log|I + Z|`; `−∞` off the PSD cone.
    LogDetIdentityPlus,
}

impl MonotoneMatrixFn {
    pub fn eval(&self, z: &CMatrix) -> f64 {
        match self {
            Self::TraceWeighted(w) => trace_re(&(w.as_matrix() * z)),
            Self::LogDetIdentityPlus => log_det_identity_plus(&hermitian_part(z)).unwrap_or(f64::NEG_INFINITY),
        }
    }
}

/// `2Re{√A† Y} − Y† B Y`, returned exactly Hermitian. It need not be PSD
/// away from the optimum.
pub fn matrix_quadratic_value(f: &MatrixFraction, y: &CMatrix) -> CMatrix {
    let cross = f.sqrt_numerator.adjoint() * y;
    let quad = y.adjoint() * f.denominator.as_matrix() * y;
    hermitian_part(&(&cross + cross.adjoint() - quad))
}

/// `Y* = B⁻¹ √A`.
pub fn matrix_quadratic_opt_y(f: &MatrixFraction) -> Result<CMatrix> {
    Ok(psd_solve(f.denominator.as_matrix(), &f.sqrt_numerator, 0.0)?)
}

/// `w (log|I+Γ| − tr Γ + tr((I+Γ) √A† (A+B)⁻¹ √A))`.
pub fn matrix_lagrangian_value(f: &MatrixFraction, gamma: &HermitianPsd) -> Result<f64> {
    check_dim(f, gamma.dim())?;
    if f.weight == 0.0 {
        return Ok(0.0);
    }
    let n = f.dim();
    let g = gamma.as_matrix();
    let a_plus_b = f.numerator() + f.denominator.as_matrix();
    let x = psd_solve(&a_plus_b, &f.sqrt_numerator, 0.0)?;
    let inner = f.sqrt_numerator.adjoint() * x;
    let i_plus_g = g + identity(n);
    let value = log_det_hpd(&i_plus_g)? - trace_re(g) + trace_re(&(i_plus_g * inner));
    Ok(f.weight * value)
}

/// `Γ* = √A† B⁻¹ √A`, symmetrized.
pub fn matrix_lagrangian_opt_gamma(f: &MatrixFraction) -> Result<HermitianPsd> {
    f.ratio()
}

/// Joint transform: `w log|I+Γ| − w tr Γ + tr((I+Γ)(2√w √A† Y − Y†(A+B)Y))`.
pub fn joint_fq_value(f: &MatrixFraction, gamma: &HermitianPsd, y: &CMatrix) -> Result<f64> {
    check_dim(f, gamma.dim())?;
    let n = f.dim();
    let w = f.weight;
    let g = gamma.as_matrix();
    let i_plus_g = g + identity(n);
    let a_plus_b = f.numerator() + f.denominator.as_matrix();
    let cross = (f.sqrt_numerator.adjoint() * y) * c64(2.0 * w.sqrt(), 0.0);
    let quad = y.adjoint() * a_plus_b * y;
    let log_term = if w == 0.0 { 0.0 } else { w * (log_det_hpd(&i_plus_g)? - trace_re(g)) };
    Ok(log_term + trace_re(&(&i_plus_g * (cross - quad))))
}

/// `Y* = (A+B)⁻¹ √w √A`, the quadratic-transform optimum inside the joint transform.
pub fn joint_opt_y(f: &MatrixFraction) -> Result<CMatrix> {
    let a_plus_b = f.numerator() + f.denominator.as_matrix();
    let scaled = &f.sqrt_numerator * Complex64::new(f.weight.sqrt(), 0.0);
    Ok(psd_solve(&a_plus_b, &scaled, 0.0)?)
}

fn check_dim(f: &MatrixFraction, n: usize) -> Result<()> {
    if f.dim() != n {
        return Err(FpError::Linalg(LinalgError::DimensionMismatch { expected: f.dim(), found: n }));
    }
    Ok(())
}

/// Outcome of checking the minorization (C1) and tightness (C2) conditions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurrogateReport {
    /// Largest `g(x|x̂) − f(x)` over all anchor/probe pairs (anchors included as probes).
    pub max_minorization_gap: f64,
    /// Largest `|g(x̂|x̂) − f(x̂)|` over anchors.
    pub max_tightness_gap: f64,
    pub minorization_violations: usize,
    pub tightness_violations: usize,
    pub pairs_checked: usize,
}

impl SurrogateReport {
    pub fn is_clean(&self) -> bool {
        self.minorization_violations == 0 && self.tightness_violations == 0
    }
}

/// Checks `g(x|x̂) ≤ f(x) + tol` for every anchor/probe pair and
/// `|g(x̂|x̂) − f(x̂)| ≤ tol` for every anchor.
///
/// Non-finite surrogate values of `−∞` count as satisfying C1; NaN counts as
/// a violation of whichever condition produced it.
pub fn certify_surrogate<X>(
    f: impl Fn(&X) -> f64,
    g: impl Fn(&X, &X) -> f64,
    anchors: &[X],
    probes: &[X],
    tol: f64,
) -> SurrogateReport {
    let mut report = SurrogateReport::default();
    for anchor in anchors {
        let f_anchor = f(anchor);
        let tight = (g(anchor, anchor) - f_anchor).abs();
        if !(tight <= tol) {
            report.tightness_violations += 1;
        }
        if tight.is_finite() {
            report.max_tightness_gap = report.max_tightness_gap.max(tight);
        } else {
            report.max_tightness_gap = f64::INFINITY;
        }
        for probe in probes {
            let gap = g(probe, anchor) - f(probe);
            report.pairs_checked += 1;
            if gap.is_nan() || gap > tol {
                report.minorization_violations += 1;
            }
            if gap.is_nan() {
                report.max_minorization_gap = f64::INFINITY;
            } else {
                report.max_minorization_gap = report.max_minorization_gap.max(gap);
            }
        }
    }
    report
}
