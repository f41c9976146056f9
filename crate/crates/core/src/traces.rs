//! Tangential dilation of the restriction of a map to a hypersurface, and the
//! two relations between it and the full trace dilation.

use serde::Serialize;

use crate::dilation::{positive_det, trace_dilation};
use crate::error::{QcError, Result};
use crate::linalg::{complete_basis, gram_schmidt, SquareMatrix, Vector};
use crate::maps::SmoothMap;

const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hypersurface {
    Sphere { center: Vector, radius: f64 },
    Plane { point: Vector, normal: Vector },
}

impl Hypersurface {
    pub fn unit_sphere(n: usize) -> Self {
        Hypersurface::Sphere { center: Vector::zeros(n), radius: 1.0 }
    }

    /// Outward unit normal at `x`.
    pub fn normal_at(&self, x: &Vector) -> Vector {
        match self {
            Hypersurface::Sphere { center, .. } => (*x - *center).normalized(),
            Hypersurface::Plane { normal, .. } => normal.normalized(),
        }
    }

    pub fn distance(&self, x: &Vector) -> f64 {
        match self {
            Hypersurface::Sphere { center, radius } => ((*x - *center).norm() - radius).abs(),
            Hypersurface::Plane { point, normal } => (*x - *point).dot(&normal.normalized()).abs(),
        }
    }
}

/// Orthonormal frames `{n, e_i}` at `x` and `{w₀, w_i}` at `u(x)`, with the
/// tangential block `d^MU_ij = ⟨du e_i, w_j⟩` (lower triangular).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptedFrame {
    pub normal: Vector,
    pub tangents: Vec<Vector>,
    pub w0: Vector,
    pub w: Vec<Vector>,
    pub du_n: Vector,
    pub tangential: Vec<Vec<f64>>,
}

impl AdaptedFrame {
    pub fn from_jacobian(jac: &SquareMatrix, normal: &Vector) -> Result<Self> {
        positive_det(jac)?;
        let basis = complete_basis(normal);
        let normal = basis[0];
        let tangents = basis[1..].to_vec();
        let images: Vec<Vector> = tangents.iter().map(|e| jac.mul_vec(e)).collect();
        let w = gram_schmidt(&images, DEPENDENCE_TOL).ok_or(QcError::DegenerateTangentImage)?;
        let du_n = jac.mul_vec(&normal);
        let mut perp = du_n;
        for _ in 0..2 {
            for wi in &w {
                perp = perp - wi.scale(perp.dot(wi));
            }
        }
        if perp.norm() <= DEPENDENCE_TOL * du_n.norm() {
            return Err(QcError::DegenerateTangentImage);
        }
        let w0 = perp.normalized();
        let tangential = images.iter().map(|img| w.iter().map(|wj| img.dot(wj)).collect()).collect();
        Ok(AdaptedFrame { normal, tangents, w0, w, du_n, tangential })
    }

    /// `|d^MU|²`.
    pub fn tangential_norm_sq(&self) -> f64 {
        self.tangential.iter().flatten().map(|v| v * v).sum()
    }

    /// `det d^MU`, the product of the diagonal of the triangular block.
    pub fn tangential_det(&self) -> f64 {
        (0..self.tangential.len()).map(|i| self.tangential[i][i]).product()
    }

    /// `⟨du n, w₀⟩ > 0`.
    pub fn normal_stretch(&self) -> f64 {
        self.du_n.dot(&self.w0)
    }

    /// `K_{u,M} = |d^MU| / (det d^MU)^{1/(n−1)}`.
    pub fn tangential_dilation(&self) -> f64 {
        let m = self.tangential.len() as f64;
        self.tangential_norm_sq().sqrt() / self.tangential_det().powf(1.0 / m)
    }
}

fn frame_at(map: &dyn SmoothMap, m: &Hypersurface, x: &Vector) -> Result<(SquareMatrix, AdaptedFrame)> {
    let scale = 1.0 + x.norm();
    if m.distance(x) > 1e-9 * scale {
        return Err(QcError::GuardViolation(x.as_slice().to_vec(), "point is not on the hypersurface".into()));
    }
    let jac = map.jet(x)?.jac;
    let frame = AdaptedFrame::from_jacobian(&jac, &m.normal_at(x))?;
    Ok((jac, frame))
}

pub fn adapted_frame(map: &dyn SmoothMap, m: &Hypersurface, x: &Vector) -> Result<AdaptedFrame> {
    Ok(frame_at(map, m, x)?.1)
}

pub fn tangential_dilation(map: &dyn SmoothMap, m: &Hypersurface, x: &Vector) -> Result<f64> {
    Ok(adapted_frame(map, m, x)?.tangential_dilation())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceInequality {
    /// `K²_{u,M}`.
    pub lhs: f64,
    /// `n^{1/(n−1)} K^{2n/(n−1)} − |du n|² ⟨du n, w₀⟩^{2/(n−1)} / det(du)^{2/(n−1)}`.
    pub rhs: f64,
    pub slack: f64,
    /// Relative residual of `|du|² = |d^MU|² + |du n|²`.
    pub norm_identity: f64,
    /// Relative residual of `det du = ⟨du n, w₀⟩ det d^MU`.
    pub det_identity: f64,
}

pub fn trace_inequality_from(jac: &SquareMatrix, normal: &Vector) -> Result<TraceInequality> {
    let frame = AdaptedFrame::from_jacobian(jac, normal)?;
    let n = jac.dim() as f64;
    let e = 1.0 / (n - 1.0);
    let det = positive_det(jac)?;
    let k = trace_dilation(jac)?;
    let q2 = jac.norm_sq();
    let lhs = frame.tangential_dilation().powi(2);
    let rhs = n.powf(e) * k.powf(2.0 * n * e)
        - frame.du_n.norm_sq() * frame.normal_stretch().powf(2.0 * e) / det.powf(2.0 * e);
    Ok(TraceInequality {
        lhs,
        rhs,
        slack: rhs - lhs,
        norm_identity: (q2 - frame.tangential_norm_sq() - frame.du_n.norm_sq()).abs() / q2,
        det_identity: (det - frame.normal_stretch() * frame.tangential_det()).abs() / det,
    })
}

pub fn trace_inequality_check(map: &dyn SmoothMap, m: &Hypersurface, x: &Vector) -> Result<TraceInequality> {
    let (jac, frame) = frame_at(map, m, x)?;
    trace_inequality_from(&jac, &frame.normal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalEquality {
    /// `(n−1) n^{−n/(n−1)} K^{2n/(n−1)}`.
    pub lhs: f64,
    /// `K²_{u,M}`.
    pub rhs: f64,
}

impl CriticalEquality {
    pub fn relative_gap(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// Requires `normal` to be an eigenvector of `JᵀJ` with eigenvalue `|J|²/n`
/// (relative tolerance `1e-8`), and evaluates both sides of the equality that
/// then holds between the tangential and full dilations.
pub fn critical_equality_check(jac: &SquareMatrix, normal: &Vector) -> Result<CriticalEquality> {
    let n = jac.dim() as f64;
    let nu = normal.normalized();
    let q2 = jac.norm_sq();
    let defect = ((jac.transpose() * *jac).mul_vec(&nu) - nu.scale(q2 / n)).norm();
    if defect > 1e-8 * q2 {
        return Err(QcError::HypothesisViolated(format!(
            "normal is not an eigenvector of JᵀJ with eigenvalue |J|²/n (defect {defect:e})"
        )));
    }
    let frame = AdaptedFrame::from_jacobian(jac, &nu)?;
    let k = trace_dilation(jac)?;
    let e = 1.0 / (n - 1.0);
    Ok(CriticalEquality {
        lhs: (n - 1.0) * n.powf(-n * e) * k.powf(2.0 * n * e),
        rhs: frame.tangential_dilation().powi(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{Affine, ConformalMap, Moebius, RadialStretch};
    use crate::rng;
    use approx::assert_relative_eq;

    fn diag_case() -> SquareMatrix {
        SquareMatrix::diag(&[2f64.sqrt(), 1.0, 3f64.sqrt()])
    }

    #[test]
    fn identity_frames_coincide() {
        let id = Affine::identity(3);
        let s = Hypersurface::unit_sphere(3);
        let e1 = Vector::basis(3, 0);
        let f = adapted_frame(&id, &s, &e1).unwrap();
        assert_eq!(f.normal, e1);
        assert!((f.w0 - e1).max_abs() < 1e-15);
        for (e, w) in f.tangents.iter().zip(&f.w) {
            assert!((*e - *w).max_abs() < 1e-15);
        }
        assert_relative_eq!(tangential_dilation(&id, &s, &e1).unwrap(), 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn diagonal_map_on_plane() {
        let a = Affine::new(diag_case(), Vector::zeros(3)).unwrap();
        let plane = Hypersurface::Plane { point: Vector::zeros(3), normal: Vector::basis(3, 0) };
        let x = Vector::from_slice(&[0.0, 0.3, -0.2]);
        let f = adapted_frame(&a, &plane, &x).unwrap();
        assert!((f.w0 - Vector::basis(3, 0)).max_abs() < 1e-15);
        for w in &f.w {
            assert!(w[0].abs() < 1e-15);
        }
        let k2 = tangential_dilation(&a, &plane, &x).unwrap().powi(2);
        assert_relative_eq!(k2, 4.0 / 3f64.sqrt(), max_relative = 1e-14);
        let c = critical_equality_check(&diag_case(), &Vector::basis(3, 0)).unwrap();
        assert_relative_eq!(c.lhs, 4.0 / 3f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.rhs, 4.0 / 3f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn radial_stretch_on_unit_sphere() {
        let m = RadialStretch::new(2.0, 3).unwrap();
        let s = Hypersurface::unit_sphere(3);
        let x = Vector::from_slice(&[0.48, 0.6, 0.64]);
        assert_relative_eq!(tangential_dilation(&m, &s, &x).unwrap().powi(2), 2.0, max_relative = 1e-13);
        let t = trace_inequality_check(&m, &s, &x).unwrap();
        assert!(t.slack > 0.0);
    }

    #[test]
    fn block_identities_and_slack_on_random_maps() {
        let mut r = rng::seeded(23);
        for _ in 0..500 {
            let j = rng::positive_jacobian(&mut r, 3, 1e-3);
            let nu = rng::unit_vector(&mut r, 3);
            let t = trace_inequality_from(&j, &nu).unwrap();
            assert!(t.norm_identity < 1e-12 && t.det_identity < 1e-10, "{t:?}");
            assert!(t.slack >= -1e-10 * t.rhs.abs().max(1.0), "{t:?}");
            let f = AdaptedFrame::from_jacobian(&j, &nu).unwrap();
            assert!(f.normal_stretch() > 0.0);
            assert!(f.tangential[0][1].abs() < 1e-12 * j.max_abs());
        }
    }

    #[test]
    fn eigen_constructed_equality() {
        let mut r = rng::seeded(31);
        for _ in 0..100 {
            let l1 = rng::uniform(&mut r, 0.3, 2.0);
            let l2 = rng::uniform(&mut r, 0.3, 2.0);
            let l0 = ((l1 * l1 + l2 * l2) / 2.0).sqrt();
            let q = rng::rotation(&mut r, 3);
            let rot = rng::rotation(&mut r, 3);
            let j = rot * SquareMatrix::diag(&[l0, l1, l2]) * q.transpose();
            let c = critical_equality_check(&j, &q.col(0)).unwrap();
            assert!(c.relative_gap() < 1e-9, "{c:?}");
        }
        assert!(matches!(
            critical_equality_check(&diag_case(), &Vector::basis(3, 1)),
            Err(QcError::HypothesisViolated(_))
        ));
    }

    #[test]
    fn tangential_dilation_is_invariant_under_similarities() {
        let mut r = rng::seeded(41);
        let a = rng::positive_jacobian(&mut r, 3, 1e-2);
        let s = Hypersurface::unit_sphere(3);
        let x = rng::unit_vector(&mut r, 3);
        let base = tangential_dilation(&Affine::new(a, Vector::zeros(3)).unwrap(), &s, &x).unwrap();
        let sim =
            ConformalMap::new(3, vec![Moebius::Rotation(rng::rotation(&mut r, 3)), Moebius::Dilation(3.0)]).unwrap();
        let post = sim.jet(&Vector::zeros(3)).unwrap().jac * a;
        let moved = tangential_dilation(&Affine::new(post, Vector::zeros(3)).unwrap(), &s, &x).unwrap();
        assert_relative_eq!(base, moved, max_relative = 1e-12);
    }

    #[test]
    fn off_surface_point_is_rejected() {
        let id = Affine::identity(3);
        let s = Hypersurface::unit_sphere(3);
        assert!(matches!(adapted_frame(&id, &s, &Vector::basis(3, 0).scale(2.0)), Err(QcError::GuardViolation(..))));
    }
}
