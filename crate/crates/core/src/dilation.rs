//! Pointwise distortion calculus of a Jacobian: trace dilation, distortion
//! tensor, the Ahlfors operator and the equivalent conformality criteria.

use serde::Serialize;

use crate::error::{QcError, Result};
use crate::linalg::SquareMatrix;

/// Default conformality tolerance on `|S(g)|`.
pub const DEFAULT_CONFORMAL_TOL: f64 = 1e-8;

/// Hilbert–Schmidt norm `sqrt(Σ m_ij²)`.
pub fn hs_norm(m: &SquareMatrix) -> f64 {
    m.norm_sq().sqrt()
}

pub fn cofactor(m: &SquareMatrix) -> SquareMatrix {
    m.cofactor()
}

/// Returns `det J`, or `NonPositiveDeterminant` for orientation-reversing or
/// singular Jacobians.
pub fn positive_det(j: &SquareMatrix) -> Result<f64> {
    let d = j.det();
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(QcError::NonPositiveDeterminant(d))
    }
}

/// `K = |J| / det(J)^{1/n}`.
pub fn trace_dilation(j: &SquareMatrix) -> Result<f64> {
    let d = positive_det(j)?;
    Ok(hs_norm(j) / d.powf(1.0 / j.dim() as f64))
}

/// `g = J Jᵀ / det(J)^{2/n}`, symmetric positive definite with unit determinant.
pub fn distortion_tensor(j: &SquareMatrix) -> Result<SquareMatrix> {
    let d = positive_det(j)?;
    let n = j.dim() as f64;
    Ok((*j * j.transpose()).scale(d.powf(-2.0 / n)))
}

/// Trace-free symmetric part `S(M) = (M + Mᵀ)/2 − tr(M) I / n`.
pub fn ahlfors(m: &SquareMatrix) -> SquareMatrix {
    let n = m.dim();
    let t = m.trace() / n as f64;
    SquareMatrix::from_fn(n, |i, j| {
        let s = 0.5 * (m[(i, j)] + m[(j, i)]);
        if i == j {
            s - t
        } else {
            s
        }
    })
}

/// Residuals of the four equivalent conformality criteria, each expressed on
/// the scale of `|S(g)|` so a single tolerance applies to all of them.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConformalityCriteria {
    /// `|Jᵀ J / det^{2/n} − (K²/n) I|`: `Jᵀ J` is a multiple of the identity.
    pub metric: f64,
    /// `K − √n`: the dilation sits at its floor. Quadratic in `|S(g)|` near
    /// conformal data, so it only separates from the other three once
    /// `|S(g)| ≳ sqrt(4√n · tol)`.
    pub dilation_gap: f64,
    /// `(K²/n) |(J^{-T} − n J/|J|²) Jᵀ|`: the Cauchy–Riemann type residual.
    pub cauchy_riemann: f64,
    /// `|S(g)|`.
    pub ahlfors: f64,
}

impl ConformalityCriteria {
    pub fn verdicts(&self, tol: f64) -> [bool; 4] {
        [self.metric <= tol, self.dilation_gap <= tol, self.cauchy_riemann <= tol, self.ahlfors <= tol]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DilationReport {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: f64,
    pub g: SquareMatrix,
    #[serde(rename = "Sg")]
    pub sg: SquareMatrix,
    #[serde(rename = "SgNormSq")]
    pub sg_norm_sq: f64,
    pub conformal: bool,
    pub criteria: ConformalityCriteria,
    /// Whether `|S(g)|² ≤ K⁴ (1 − 1/n)` held.
    pub upper_bound_ok: bool,
}

/// Full pointwise analysis of a Jacobian at conformality tolerance `tol`
/// (applied to `|S(g)|`).
pub fn analyze(j: &SquareMatrix, tol: f64) -> Result<DilationReport> {
    let n = j.dim();
    let nf = n as f64;
    let d = positive_det(j)?;
    let k = hs_norm(j) / d.powf(1.0 / nf);
    let g = distortion_tensor(j)?;
    let sg = ahlfors(&g);
    let sg_norm_sq = sg.norm_sq();
    let k2 = k * k;

    let gt = (j.transpose() * *j).scale(d.powf(-2.0 / nf));
    let metric = hs_norm(&(gt - SquareMatrix::identity(n).scale(k2 / nf)));
    let jit = j.inverse()?.transpose();
    let cr = (jit - j.scale(nf / j.norm_sq())) * j.transpose();
    let criteria = ConformalityCriteria {
        metric,
        dilation_gap: (k - nf.sqrt()).max(0.0),
        cauchy_riemann: hs_norm(&cr) * k2 / nf,
        ahlfors: sg_norm_sq.sqrt(),
    };
    let upper = k2 * k2 * (1.0 - 1.0 / nf);
    let upper_bound_ok = sg_norm_sq <= upper * (1.0 + 1e-12);
    debug_assert!(upper_bound_ok, "|S(g)|^2 = {sg_norm_sq} exceeds K^4(1-1/n) = {upper}");
    Ok(DilationReport { n, k, g, sg, sg_norm_sq, conformal: criteria.ahlfors <= tol, criteria, upper_bound_ok })
}

/// HS norm of `J^{-T} − n J/|J|² + n K^{-2} S(g) J^{-T}`, which vanishes
/// identically.
pub fn factoring_residual(j: &SquareMatrix) -> Result<f64> {
    let n = j.dim() as f64;
    let k = trace_dilation(j)?;
    let jit = j.inverse()?.transpose();
    let sg = ahlfors(&distortion_tensor(j)?);
    let r = jit - j.scale(n / j.norm_sq()) + (sg * jit).scale(n / (k * k));
    Ok(hs_norm(&r))
}

/// `S(g) J^{-T}`: row `i` is the `i`-th flow direction, and `K^{-1}` times
/// this matrix is the derivative of `K` with respect to the Jacobian entries.
pub fn ahlfors_flow_matrix(j: &SquareMatrix) -> Result<SquareMatrix> {
    let sg = ahlfors(&distortion_tensor(j)?);
    Ok(sg * j.inverse()?.transpose())
}
