//! The p-distortion flux, its linearization, the non-divergence and divergence
//! forms of `L_p`, the two forms of `L_∞`, Legendre–Hadamard bounds, and the
//! `B` tensor of the inverse-determinant equation.
//!
//! Index conventions: a Jacobian `q` has `q[(i, j)] = ∂_j u^i`; the flux
//! linearization is stored as `A^{ik}_{jl}` at `(i, j, k, l)`; Hessians as
//! `∂_j∂_l u^k` at `(k, j, l)`.

use serde::Serialize;

use crate::dilation::{ahlfors_flow_matrix, positive_det, trace_dilation};
use crate::error::{QcError, Result};
use crate::linalg::{Hessian, SquareMatrix, Vector, MAX_DIM};
use crate::maps::SmoothMap;

/// Second-order jet of a map at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2Sample {
    pub x: Vector,
    pub u: Vector,
    pub jac: SquareMatrix,
    pub hess: Hessian,
}

impl Jet2Sample {
    pub fn new(x: Vector, u: Vector, jac: SquareMatrix, hess: Hessian) -> Self {
        Jet2Sample { x, u, jac, hess }
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}

/// Sign relating the large-p limit of [`lp_asymptotic_ratio`] to
/// [`linfty_factored`]: `ratio → LINFTY_LIMIT_SIGN · L_∞u` as `p → ∞`.
/// Pinned by the calibration test `asymptotic_sign_calibration`.
pub const LINFTY_LIMIT_SIGN: f64 = 1.0;

/// `ln(|q|^{np} / det(q)^p)`.
fn log_weight(norm_sq: f64, det: f64, n: f64, p: f64) -> f64 {
    p * (0.5 * n * norm_sq.ln() - det.ln())
}

fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(QcError::InvalidParameter(format!("exponent p = {p} must be finite and >= 1")))
    }
}

/// Flux `A^i_j(q) = −p [q^{ji} − n q_ij/|q|²] |q|^{np}/det(q)^p`, with
/// `L_p u = ∂_j A^i_j(du)`. Entry `(i, j)` of the result.
pub fn flux(q: &SquareMatrix, p: f64) -> Result<SquareMatrix> {
    check_exponent(p)?;
    let det = positive_det(q)?;
    let n = q.dim();
    let nf = n as f64;
    let qn = q.norm_sq();
    let w = log_weight(qn, det, nf, p).exp();
    let qi = q.inverse()?;
    Ok(SquareMatrix::from_fn(n, |i, j| -p * (qi[(j, i)] - nf * q[(i, j)] / qn) * w))
}

/// Four-index array `A^{ik}_{jl}(q) = ∂A^i_j / ∂q_{kl}`.
#[derive(Clone, Copy, PartialEq)]
pub struct FluxTangent {
    n: usize,
    a: [f64; MAX_DIM * MAX_DIM * MAX_DIM * MAX_DIM],
}

impl FluxTangent {
    #[inline]
    fn idx(i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * MAX_DIM + j) * MAX_DIM + k) * MAX_DIM + l
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `A^{ik}_{jl}`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.a[Self::idx(i, j, k, l)]
    }

    /// `(A·H)^i = A^{ik}_{jl} ∂_j∂_l u^k`.
    pub fn contract_hessian(&self, h: &Hessian) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |i| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += self.a[Self::idx(i, j, k, l)] * h.get(k, j, l);
                    }
                }
            }
            s
        })
    }

    /// `A^{ik}_{jl} η_i ξ_j η_k ξ_l`.
    pub fn rank_one_form(&self, eta: &Vector, xi: &Vector) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += self.a[Self::idx(i, j, k, l)] * eta[i] * xi[j] * eta[k] * xi[l];
                    }
                }
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl std::fmt::Debug for FluxTangent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FluxTangent(n = {}, max |A| = {:e})", self.n, self.max_abs())
    }
}

/// The bracket of the closed-form linearization, i.e. `A^{ik}_{jl}` without its
/// prefactor `−p |q|^{np−2}/det(q)^p`:
///
/// `np(q_kl q^{ji} + q_ij q^{lk}) − n(np−2) q_ij q_kl/|q|² − |q|²(q^{li}q^{jk} + p q^{lk}q^{ji}) − n δ_ki δ_jl`.
fn linearization_bracket(q: &SquareMatrix, qi: &SquareMatrix, qn: f64, p: f64) -> FluxTangent {
    let n = q.dim();
    let nf = n as f64;
    let mut t = FluxTangent { n, a: [0.0; MAX_DIM * MAX_DIM * MAX_DIM * MAX_DIM] };
    for i in 0..n {
        for j in 0..n {
            let qij = q[(i, j)];
            let qi_ji = qi[(j, i)];
            for k in 0..n {
                for l in 0..n {
                    let qkl = q[(k, l)];
                    let mut v = nf * p * (qkl * qi_ji + qij * qi[(l, k)])
                        - nf * (nf * p - 2.0) * qij * qkl / qn
                        - qn * (qi[(l, i)] * qi[(j, k)] + p * qi[(l, k)] * qi_ji);
                    if k == i && j == l {
                        v -= nf;
                    }
                    t.a[FluxTangent::idx(i, j, k, l)] = v;
                }
            }
        }
    }
    t
}

/// Closed-form `A^{ik}_{jl}(q)`. The prefactor is evaluated in log space and
/// overflows to infinity only when the true value does.
pub fn flux_linearization(q: &SquareMatrix, p: f64) -> Result<FluxTangent> {
    check_exponent(p)?;
    let det = positive_det(q)?;
    let qn = q.norm_sq();
    let qi = q.inverse()?;
    let mut t = linearization_bracket(q, &qi, qn, p);
    let pre = -p * (log_weight(qn, det, q.dim() as f64, p) - qn.ln()).exp();
    for v in t.a.iter_mut() {
        *v *= pre;
    }
    Ok(t)
}

/// Upper Legendre–Hadamard constant `C₂(n) = 100 n³`.
pub fn lh_upper_constant(n: usize) -> f64 {
    100.0 * (n as f64).powi(3)
}

/// Legendre–Hadamard constants `(C₁(n, p), C₂(n))`.
///
/// For `n = 3` two admissible lower constants are available (`n` for `p > 1`
/// and `(6p − 3)/(p + 1)` for `p ≥ 1`); the smaller is returned, which is
/// valid in both branches.
pub fn lh_constants(n: usize, p: f64) -> Result<(f64, f64)> {
    let nf = n as f64;
    let c1 = match n {
        2 if p > 1.0 => 2.0 * (p - 1.0) / (p + 1.0),
        2 => {
            return Err(QcError::UnsupportedRegime(format!(
                "Legendre-Hadamard bound needs p > 1 when n = 2 (got p = {p})"
            )))
        }
        3 if p >= 1.0 => nf.min((6.0 * p - 3.0) / (p + 1.0)),
        _ if p >= 1.0 => nf,
        _ => return Err(QcError::UnsupportedRegime(format!("p = {p} < 1"))),
    };
    Ok((c1, lh_upper_constant(n)))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EllipticityWitness {
    pub q: SquareMatrix,
    pub xi: Vector,
    pub eta: Vector,
    pub p: f64,
    #[serde(rename = "quadForm")]
    pub quad_form: f64,
    pub lower: f64,
    pub upper: f64,
    pub c1: f64,
    pub c2: f64,
}

impl EllipticityWitness {
    pub fn holds(&self) -> bool {
        self.lower <= self.quad_form && self.quad_form <= self.upper
    }
}

/// Evaluates the rank-one form of the linearization against the
/// Legendre–Hadamard sandwich. `xi` and `eta` are normalized here.
pub fn lh_witness(q: &SquareMatrix, xi: &Vector, eta: &Vector, p: f64) -> Result<EllipticityWitness> {
    let n = q.dim();
    let (c1, c2) = lh_constants(n, p)?;
    let det = positive_det(q)?;
    let (xi, eta) = (xi.normalized(), eta.normalized());
    let a = flux_linearization(q, p)?;
    let nf = n as f64;
    let qn = q.norm_sq();
    let w1 = (log_weight(qn, det, nf, p) - qn.ln()).exp();
    let w2 = (log_weight(qn, det, nf, p + 2.0) - qn.ln()).exp();
    Ok(EllipticityWitness {
        q: *q,
        xi,
        eta,
        p,
        quad_form: a.rank_one_form(&eta, &xi),
        lower: c1 * p * w1,
        upper: c2 * p * p * (w1 + w2),
        c1,
        c2,
    })
}

/// Non-divergence form `(L_p u)^i = A^{ik}_{jl}(du) ∂_j∂_l u^k`.
pub fn lp_nondiv(sample: &Jet2Sample, p: f64) -> Result<Vector> {
    Ok(flux_linearization(&sample.jac, p)?.contract_hessian(&sample.hess))
}

/// Divergence form `∂_j A^i_j(du)` by central differences of the flux of
/// `map`'s Jacobian at `x ± h e_j`.
pub fn lp_divergence(map: &dyn SmoothMap, x: &Vector, p: f64, h: f64) -> Result<Vector> {
    let n = x.dim();
    let mut out = Vector::zeros(n);
    for j in 0..n {
        let e = Vector::basis(n, j).scale(h);
        let fp = flux(&map.jet(&(*x + e))?.jac, p)?;
        let fm = flux(&map.jet(&(*x - e))?.jac, p)?;
        for i in 0..n {
            out[i] += (fp[(i, j)] - fm[(i, j)]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// `(L_∞u)^i = (n q_ij − |q|² q^{ji})(n q_kl − |q|² q^{lk}) ∂_j q_kl`.
pub fn linfty_factored(sample: &Jet2Sample) -> Result<Vector> {
    let q = &sample.jac;
    positive_det(q)?;
    let n = q.dim();
    let nf = n as f64;
    let qn = q.norm_sq();
    let qit = q.inverse()?.transpose();
    let m = q.scale(nf) - qit.scale(qn);
    // Σ_kl m_kl ∂_j q_kl, one entry per derivative direction j.
    let dm = Vector::from_fn(n, |j| {
        let mut s = 0.0;
        for k in 0..n {
            for l in 0..n {
                s += m[(k, l)] * sample.hess.get(k, l, j);
            }
        }
        s
    });
    Ok(m.mul_vec(&dm))
}

/// `∂_j K = K^{-1} (S(g) du^{-T})_{kl} ∂_j∂_l u^k`.
pub fn dilation_gradient(sample: &Jet2Sample) -> Result<Vector> {
    let k = trace_dilation(&sample.jac)?;
    let f = ahlfors_flow_matrix(&sample.jac)?;
    let n = sample.dim();
    Ok(Vector::from_fn(n, |j| {
        let mut s = 0.0;
        for a in 0..n {
            for l in 0..n {
                s += f[(a, l)] * sample.hess.get(a, l, j);
            }
        }
        s / k
    }))
}

/// `(L_∞u)^i = n²|du|⁴/K³ (S(g) du^{-T})_{ij} ∂_j K`.
pub fn linfty_flowform(sample: &Jet2Sample) -> Result<Vector> {
    let q = &sample.jac;
    let k = trace_dilation(q)?;
    let f = ahlfors_flow_matrix(q)?;
    let grad = dilation_gradient(sample)?;
    let nf = q.dim() as f64;
    let qn = q.norm_sq();
    Ok(f.mul_vec(&grad).scale(nf * nf * qn * qn / (k * k * k)))
}

/// `L_p u` divided by `p² |du|^{np−4} / det(du)^p`, computed without forming
/// either factor so it stays finite for large `p`. Converges to
/// `LINFTY_LIMIT_SIGN · L_∞u` with an `O(1/p)` remainder.
pub fn lp_asymptotic_ratio(sample: &Jet2Sample, p: f64) -> Result<Vector> {
    check_exponent(p)?;
    let q = &sample.jac;
    positive_det(q)?;
    let qn = q.norm_sq();
    let qi = q.inverse()?;
    let bracket = linearization_bracket(q, &qi, qn, p);
    Ok(bracket.contract_hessian(&sample.hess).scale(-qn / p))
}

/// `B_ih(q) = p (δ_hi − n q_hj q_ij/|q|²) |q|^{np}/det(q)^p`.
pub fn b_tensor(q: &SquareMatrix, p: f64) -> Result<SquareMatrix> {
    check_exponent(p)?;
    let det = positive_det(q)?;
    let n = q.dim();
    let nf = n as f64;
    let qn = q.norm_sq();
    let w = log_weight(qn, det, nf, p).exp();
    let qqt = *q * q.transpose();
    Ok(SquareMatrix::from_fn(n, |i, h| {
        let d = if i == h { 1.0 } else { 0.0 };
        p * (d - nf * qqt[(h, i)] / qn) * w
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    /// Independent oracle: central differences of `flux` in each entry of `q`.
    fn fd_linearization(q: &SquareMatrix, p: f64, h: f64) -> Vec<f64> {
        let n = q.dim();
        let mut out = vec![0.0; n * n * n * n];
        for k in 0..n {
            for l in 0..n {
                let mut qp = *q;
                let mut qm = *q;
                qp[(k, l)] += h;
                qm[(k, l)] -= h;
                let (fp, fm) = (flux(&qp, p).unwrap(), flux(&qm, p).unwrap());
                for i in 0..n {
                    for j in 0..n {
                        out[((i * n + j) * n + k) * n + l] = (fp[(i, j)] - fm[(i, j)]) / (2.0 * h);
                    }
                }
            }
        }
        out
    }

    fn max_fd_error(q: &SquareMatrix, p: f64, h: f64) -> f64 {
        let n = q.dim();
        let a = flux_linearization(q, p).unwrap();
        let fd = fd_linearization(q, p, h);
        let mut err = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        err = err.max((a.get(i, j, k, l) - fd[((i * n + j) * n + k) * n + l]).abs());
                    }
                }
            }
        }
        err
    }

    #[test]
    fn flux_vanishes_on_conformal_jacobians() {
        assert!(flux(&SquareMatrix::identity(3), 2.0).unwrap().max_abs() < 1e-14);
        let t: f64 = 0.4;
        let c = SquareMatrix::from_rows(&[&[t.cos(), -t.sin()], &[t.sin(), t.cos()]]).unwrap().scale(2.5);
        let f = flux(&c, 3.0).unwrap();
        assert!(f.max_abs() < 1e-12 * flux(&SquareMatrix::diag(&[2.5, 1.0]), 3.0).unwrap().max_abs());
    }

    #[test]
    fn flux_is_orthogonal_to_its_argument() {
        let mut r = rng::seeded(5);
        for _ in 0..200 {
            let q = rng::positive_jacobian(&mut r, 3, 1e-2);
            let a = flux(&q, 2.0).unwrap();
            assert!(a.frobenius(&q).abs() <= 1e-9 * a.max_abs() * q.max_abs() * 9.0);
        }
    }

    #[test]
    fn linearization_matches_finite_differences() {
        for (q, p) in [
            (SquareMatrix::identity(2), 2.0),
            (SquareMatrix::diag(&[2.0, 1.0]), 2.0),
            (SquareMatrix::from_rows(&[&[1.2, 0.3, -0.1], &[0.2, 0.9, 0.4], &[-0.3, 0.1, 1.1]]).unwrap(), 1.5),
        ] {
            let h = 1e-5 * (1.0 + q.norm_sq().sqrt());
            let scale = 1.0 + flux_linearization(&q, p).unwrap().max_abs();
            assert!(max_fd_error(&q, p, h) <= 1e-6 * scale, "q = {q:?}");
        }
    }

    #[test]
    fn linearization_fd_error_is_second_order() {
        let q = SquareMatrix::from_rows(&[&[1.3, 0.4], &[-0.2, 0.8]]).unwrap();
        let (e1, e2) = (max_fd_error(&q, 2.0, 2e-2), max_fd_error(&q, 2.0, 1e-2));
        let ratio = e1 / e2;
        assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lh_constants_by_regime() {
        assert_relative_eq!(lh_constants(2, 2.0).unwrap().0, 2.0 / 3.0);
        assert_relative_eq!(lh_constants(3, 1.0).unwrap().0, 1.5);
        assert_relative_eq!(lh_constants(3, 5.0).unwrap().0, 3.0);
        assert_relative_eq!(lh_constants(4, 1.0).unwrap().0, 4.0);
        assert_eq!(lh_constants(3, 2.0).unwrap().1, 2700.0);
        assert!(matches!(lh_constants(2, 1.0), Err(QcError::UnsupportedRegime(_))));
    }

    #[test]
    fn lh_sandwich_examples() {
        let e1 = Vector::basis(2, 0);
        let w = lh_witness(&SquareMatrix::identity(2), &e1, &e1, 2.0).unwrap();
        assert_relative_eq!(w.c1, 2.0 / 3.0);
        assert!(w.holds(), "{w:?}");
        let mut r = rng::seeded(9);
        for p in [1.0, 2.0, 5.0] {
            for _ in 0..1000 {
                let q = rng::positive_jacobian(&mut r, 3, 1e-3);
                let xi = rng::unit_vector(&mut r, 3);
                let eta = rng::unit_vector(&mut r, 3);
                let w = lh_witness(&q, &xi, &eta, p).unwrap();
                assert!(w.holds(), "{w:?}");
            }
        }
    }

    #[test]
    fn linfty_forms_agree_on_random_jets() {
        let mut r = rng::seeded(21);
        for n in [2, 3] {
            for _ in 0..300 {
                let jet = Jet2Sample::new(
                    Vector::zeros(n),
                    Vector::zeros(n),
                    rng::positive_jacobian(&mut r, n, 1e-2),
                    rng::symmetric_hessian(&mut r, n),
                );
                let a = linfty_factored(&jet).unwrap();
                let b = linfty_flowform(&jet).unwrap();
                assert!((a - b).max_abs() <= 1e-8 * (1e-300 + a.max_abs()), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn asymptotic_sign_calibration() {
        let mut r = rng::seeded(33);
        let jet = Jet2Sample::new(
            Vector::zeros(3),
            Vector::zeros(3),
            rng::positive_jacobian(&mut r, 3, 1e-1),
            rng::symmetric_hessian(&mut r, 3),
        );
        let lim = linfty_factored(&jet).unwrap();
        let ratio = lp_asymptotic_ratio(&jet, 1000.0).unwrap();
        let plus = (ratio - lim).max_abs();
        let minus = (ratio + lim).max_abs();
        assert!(plus < minus);
        assert_eq!(LINFTY_LIMIT_SIGN, 1.0);
        // The remainder is c/p exactly, so successive decades shrink by 10.
        let d: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&p| (lp_asymptotic_ratio(&jet, p).unwrap() - lim.scale(LINFTY_LIMIT_SIGN)).norm())
            .collect();
        assert_relative_eq!(d[0] / d[1], 10.0, max_relative = 1e-6);
        assert_relative_eq!(d[1] / d[2], 10.0, max_relative = 1e-4);
    }

    #[test]
    fn ratio_is_consistent_with_nondiv_form_at_moderate_p() {
        let mut r = rng::seeded(8);
        let q = rng::positive_jacobian(&mut r, 2, 1e-1);
        let jet = Jet2Sample::new(Vector::zeros(2), Vector::zeros(2), q, rng::symmetric_hessian(&mut r, 2));
        let p = 3.0;
        let lp = lp_nondiv(&jet, p).unwrap();
        let norm = p * p * q.norm_sq().powf((2.0 * p - 4.0) / 2.0) / q.det().powf(p);
        let ratio = lp_asymptotic_ratio(&jet, p).unwrap();
        assert!((lp.scale(1.0 / norm) - ratio).max_abs() <= 1e-12 * (1.0 + ratio.max_abs()));
    }

    #[test]
    fn affine_jets_have_zero_operators() {
        let jet = Jet2Sample::new(
            Vector::zeros(3),
            Vector::zeros(3),
            SquareMatrix::diag(&[2.0, 1.0, 0.5]),
            Hessian::zeros(3),
        );
        assert_eq!(lp_nondiv(&jet, 2.0).unwrap().max_abs(), 0.0);
        assert_eq!(linfty_factored(&jet).unwrap().max_abs(), 0.0);
        assert_eq!(lp_asymptotic_ratio(&jet, 50.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn b_tensor_model_case() {
        let model = |l1: f64, l2: f64, eta: [f64; 2], p: f64| {
            let s = (l1 * l1 + l2 * l2) / 2.0;
            p * (1.0 - (eta[0] * eta[0] * l1 * l1 + eta[1] * eta[1] * l2 * l2) / s)
                * ((l1 * l1 + l2 * l2) / (l1 * l2)).powf(p)
        };
        for (l1, l2, p) in [(2.0, 0.5, 1.0), (1.0, 3.0, 2.0), (0.7, 0.9, 4.0)] {
            let b = b_tensor(&SquareMatrix::diag(&[l1, l2]), p).unwrap();
            assert!(b.is_symmetric(1e-15));
            for eta in [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]] {
                let v = Vector::from_slice(&eta);
                let qf = v.dot(&b.mul_vec(&v));
                assert_relative_eq!(qf, model(l1, l2, eta, p), max_relative = 1e-12);
            }
        }
        // diag(2, 1/2), p = 1: the two axes give −15/4 and +15/4.
        let b = b_tensor(&SquareMatrix::diag(&[2.0, 0.5]), 1.0).unwrap();
        assert_relative_eq!(b[(0, 0)], -15.0 / 4.0, max_relative = 1e-14);
        assert_relative_eq!(b[(1, 1)], 15.0 / 4.0, max_relative = 1e-14);
        // Conformal: the form vanishes in every direction.
        let b = b_tensor(&SquareMatrix::identity(3).scale(1.7), 2.0).unwrap();
        assert!(b.max_abs() < 1e-13);
    }

    #[test]
    fn invalid_inputs() {
        let flip = SquareMatrix::diag(&[-1.0, 1.0, 1.0]);
        assert!(matches!(flux(&flip, 2.0), Err(QcError::NonPositiveDeterminant(_))));
        assert!(flux_linearization(&SquareMatrix::identity(2), 0.5).is_err());
        let e = Vector::basis(2, 0);
        assert!(matches!(lh_witness(&SquareMatrix::identity(2), &e, &e, 1.0), Err(QcError::UnsupportedRegime(_))));
    }
}
