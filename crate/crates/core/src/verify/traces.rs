use super::{case, max_over, min_over, CaseDef, CaseKind::*, Ctx, Outcome};
use crate::error::Result;
use crate::linalg::{SquareMatrix, Vector};
use crate::maps::{Affine, RadialStretch};
use crate::rng;
use crate::traces::*;

fn diag_case() -> SquareMatrix {
    SquareMatrix::diag(&[2f64.sqrt(), 1.0, 3f64.sqrt()])
}

/// `R diag(λ₀, λ₁, λ₂) Qᵀ` with `λ₀² = (λ₁² + λ₂²)/2`, so `Q e₁` is an
/// eigenvector of `JᵀJ` with eigenvalue `|J|²/3`.
pub(crate) fn eigen_constructed(ctx: &mut Ctx) -> (SquareMatrix, Vector) {
    let l1 = rng::uniform(&mut ctx.rng, 0.3, 2.0);
    let l2 = rng::uniform(&mut ctx.rng, 0.3, 2.0);
    let l0 = ((l1 * l1 + l2 * l2) / 2.0).sqrt();
    let q = rng::rotation(&mut ctx.rng, 3);
    let r = rng::rotation(&mut ctx.rng, 3);
    (r * SquareMatrix::diag(&[l0, l1, l2]) * q.transpose(), q.col(0))
}

/// Worst block-identity residual and smallest slack over random linear maps
/// and unit-sphere points.
pub(crate) fn random_trace_records(ctx: &mut Ctx, count: usize) -> Result<(f64, f64)> {
    let mut identity = 0.0_f64;
    let mut slack = f64::INFINITY;
    for _ in 0..count {
        let j = rng::positive_jacobian(&mut ctx.rng, 3, 1e-2);
        let x = rng::unit_vector(&mut ctx.rng, 3);
        let t = trace_inequality_from(&j, &x)?;
        identity = identity.max(t.norm_identity).max(t.det_identity);
        slack = slack.min(t.slack);
    }
    Ok((identity, slack))
}

pub(super) fn cases() -> Vec<CaseDef> {
    vec![
        case("frame.identity_on_sphere", Identity, |_| {
            let f = adapted_frame(&Affine::identity(3), &Hypersurface::unit_sphere(3), &Vector::basis(3, 0))?;
            let e1 = Vector::basis(3, 0);
            let mut gap = (f.normal - e1).max_abs() + (f.w0 - e1).max_abs();
            for (e, w) in f.tangents.iter().zip(&f.w) {
                gap += (*e - *w).max_abs();
            }
            Ok(Outcome::abs(gap, 0.0, 1e-15))
        }),
        case("frame.diagonal_on_plane", Identity, |_| {
            let a = Affine::new(diag_case(), Vector::zeros(3))?;
            let plane = Hypersurface::Plane { point: Vector::zeros(3), normal: Vector::basis(3, 0) };
            let f = adapted_frame(&a, &plane, &Vector::from_slice(&[0.0, 0.3, -0.2]))?;
            let mut gap = (f.w0 - Vector::basis(3, 0)).max_abs();
            for w in &f.w {
                gap += w[0].abs();
            }
            Ok(Outcome::abs(gap, 0.0, 1e-15))
        }),
        case("frame.normal_stretch_cross_check", Oracle, |ctx| {
            let worst = max_over(200, || {
                let j = rng::positive_jacobian(&mut ctx.rng, 3, 1e-2);
                let f = AdaptedFrame::from_jacobian(&j, &rng::unit_vector(&mut ctx.rng, 3))?;
                let want = j.det() / f.tangential_det();
                Ok(if f.normal_stretch() > 0.0 { (f.normal_stretch() - want).abs() / want } else { f64::INFINITY })
            })?;
            Ok(Outcome::at_most(worst, 1e-10))
        }),
        case("tangential.identity", Identity, |ctx| {
            let k = tangential_dilation(
                &Affine::identity(3),
                &Hypersurface::unit_sphere(3),
                &rng::unit_vector(&mut ctx.rng, 3),
            )?;
            Ok(Outcome::abs(k, 2f64.sqrt(), 1e-14))
        }),
        case("tangential.radial_on_unit_sphere", ClosedForm, |ctx| {
            let m = RadialStretch::new(2.0, 3)?;
            let k = tangential_dilation(&m, &Hypersurface::unit_sphere(3), &rng::unit_vector(&mut ctx.rng, 3))?;
            Ok(Outcome::abs(k * k, 2.0, 1e-12))
        }),
        case("tangential.diag_plane", Oracle, |_| {
            let f = AdaptedFrame::from_jacobian(&diag_case(), &Vector::basis(3, 0))?;
            Ok(Outcome::rel(f.tangential_dilation().powi(2), 4.0 / 3f64.sqrt(), 1e-14))
        }),
        case("tangential.similarity_invariance", Oracle, |ctx| {
            let worst = max_over(100, || {
                let j = rng::positive_jacobian(&mut ctx.rng, 3, 1e-2);
                let nu = rng::unit_vector(&mut ctx.rng, 3);
                let s = rng::rotation(&mut ctx.rng, 3).scale(rng::uniform(&mut ctx.rng, 0.2, 5.0));
                let a = AdaptedFrame::from_jacobian(&j, &nu)?.tangential_dilation();
                let b = AdaptedFrame::from_jacobian(&(s * j), &nu)?.tangential_dilation();
                Ok((a - b).abs() / a)
            })?;
            Ok(Outcome::at_most(worst, 1e-12))
        }),
        case("inequality.identity", Identity, |_| {
            let t = trace_inequality_from(&SquareMatrix::identity(3), &Vector::basis(3, 2))?;
            Ok(Outcome::at_least(t.slack, 0.0)
                .with_detail(format!("identities {:e} {:e}", t.norm_identity, t.det_identity)))
        }),
        case("inequality.block_identities_random", Oracle, |ctx| {
            Ok(Outcome::at_most(random_trace_records(ctx, 500)?.0, 1e-10))
        }),
        case("inequality.slack_random", Oracle, |ctx| Ok(Outcome::at_least(random_trace_records(ctx, 500)?.1, -1e-10))),
        case("inequality.radial_strict", Oracle, |ctx| {
            let m = RadialStretch::new(2.0, 3)?;
            let s = Hypersurface::unit_sphere(3);
            let slack = min_over(50, || Ok(trace_inequality_check(&m, &s, &rng::unit_vector(&mut ctx.rng, 3))?.slack))?;
            Ok(Outcome::at_least(slack, 1e-6))
        }),
        case("critical.diag_case", Oracle, |_| {
            let c = critical_equality_check(&diag_case(), &Vector::basis(3, 0))?;
            let want = 4.0 / 3f64.sqrt();
            Ok(Outcome::at_most((c.lhs - want).abs().max((c.rhs - want).abs()) / want, 1e-12))
        }),
        case("critical.conformal", Identity, |ctx| {
            let j = rng::rotation(&mut ctx.rng, 3).scale(1.9);
            let c = critical_equality_check(&j, &rng::unit_vector(&mut ctx.rng, 3))?;
            Ok(Outcome::at_most((c.lhs - 2.0).abs().max((c.rhs - 2.0).abs()) / 2.0, 1e-12))
        }),
        case("critical.eigen_constructed", Oracle, |ctx| {
            let worst = max_over(100, || {
                let (j, nu) = eigen_constructed(ctx);
                Ok(critical_equality_check(&j, &nu)?.relative_gap())
            })?;
            Ok(Outcome::at_most(worst, 1e-9))
        }),
        case("critical.hypothesis_enforced", Identity, |_| {
            let r = critical_equality_check(&diag_case(), &Vector::basis(3, 1));
            Ok(Outcome::holds(matches!(r, Err(crate::error::QcError::HypothesisViolated(_)))))
        }),
    ]
}
