use super::{case, max_over, CaseDef, CaseKind::*, Outcome};
use crate::dilation::{
    ahlfors, analyze, cofactor, distortion_tensor, factoring_residual, hs_norm, trace_dilation, DEFAULT_CONFORMAL_TOL,
};
use crate::linalg::{SquareMatrix, Vector};
use crate::maps::ConformalMap;
use crate::maps::{Moebius, RadialStretch, SmoothMap};
use crate::rng;

pub(super) fn cases() -> Vec<CaseDef> {
    vec![
        case("hs_norm.identity_2", Identity, |_| {
            Ok(Outcome::abs(hs_norm(&SquareMatrix::identity(2)), 2f64.sqrt(), 1e-15))
        }),
        case("hs_norm.diag_3_4", Identity, |_| Ok(Outcome::abs(hs_norm(&SquareMatrix::diag(&[3.0, 4.0])), 5.0, 1e-15))),
        case("hs_norm.zero", Identity, |_| Ok(Outcome::abs(hs_norm(&SquareMatrix::zeros(3)), 0.0, 0.0))),
        case("cofactor.identity", Identity, |_| {
            Ok(Outcome::abs((cofactor(&SquareMatrix::identity(3)) - SquareMatrix::identity(3)).max_abs(), 0.0, 1e-15))
        }),
        case("cofactor.diag_2x2", Identity, |_| {
            let c = cofactor(&SquareMatrix::diag(&[2.5, -0.75]));
            Ok(Outcome::abs((c - SquareMatrix::diag(&[-0.75, 2.5])).max_abs(), 0.0, 1e-15))
        }),
        case("cofactor.random_adjugate_identity", Oracle, |ctx| {
            let worst = max_over(500, || {
                let n = 2 + (rng::uniform(&mut ctx.rng, 0.0, 3.0) as usize);
                let m = rng::gaussian_matrix(&mut ctx.rng, n);
                let d = m.det();
                let res = cofactor(&m).transpose() * m - SquareMatrix::identity(n).scale(d);
                Ok(res.max_abs() / (m.max_abs().powi(n as i32)))
            })?;
            Ok(Outcome::at_most(worst, 1e-12))
        }),
        case("trace_dilation.identity_2", Identity, |_| {
            Ok(Outcome::abs(trace_dilation(&SquareMatrix::identity(2))?, 2f64.sqrt(), 1e-15))
        }),
        case("trace_dilation.diag_2_half", Identity, |_| {
            Ok(Outcome::rel(trace_dilation(&SquareMatrix::diag(&[2.0, 0.5]))?, 17f64.sqrt() / 2.0, 1e-15))
        }),
        case("trace_dilation.radial_n3_alpha2", ClosedForm, |ctx| {
            let m = RadialStretch::new(2.0, 3)?;
            let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
            let k = trace_dilation(&m.jet(&x)?.jac)?;
            Ok(Outcome::rel(k * k, 6.0 / 2f64.powf(2.0 / 3.0), 1e-12))
        }),
        case("trace_dilation.lower_bound", Oracle, |ctx| {
            let worst = max_over(500, || {
                let n = 2 + (rng::uniform(&mut ctx.rng, 0.0, 3.0) as usize);
                let j = rng::positive_jacobian(&mut ctx.rng, n, 1e-3);
                Ok((n as f64).sqrt() - trace_dilation(&j)?)
            })?;
            Ok(Outcome::at_most(worst, 1e-12))
        }),
        case("distortion_tensor.rotation", Identity, |ctx| {
            let r = rng::rotation(&mut ctx.rng, 3);
            Ok(Outcome::abs((distortion_tensor(&r)? - SquareMatrix::identity(3)).max_abs(), 0.0, 1e-13))
        }),
        case("distortion_tensor.identity", Identity, |_| {
            Ok(Outcome::abs(
                (distortion_tensor(&SquareMatrix::identity(4))? - SquareMatrix::identity(4)).max_abs(),
                0.0,
                0.0,
            ))
        }),
        case("distortion_tensor.radial_at_e1", Oracle, |_| {
            let m = RadialStretch::new(2.0, 3)?;
            let fd = crate::maps::FdMap::new(|y: &Vector| m.value(y), 3, Some(1e-5)).jet(&Vector::basis(3, 0))?;
            let want = SquareMatrix::diag(&[4.0, 1.0, 1.0]).scale(2f64.powf(-2.0 / 3.0));
            Ok(Outcome::abs((distortion_tensor(&fd.jac)? - want).max_abs(), 0.0, 1e-8))
        }),
        case("distortion_tensor.unit_determinant", Oracle, |ctx| {
            let worst = max_over(500, || {
                let j = rng::positive_jacobian(&mut ctx.rng, 3, 1e-2);
                Ok((distortion_tensor(&j)?.det() - 1.0).abs())
            })?;
            Ok(Outcome::at_most(worst, 1e-10))
        }),
        case("ahlfors.identity", Identity, |_| {
            Ok(Outcome::abs(ahlfors(&SquareMatrix::identity(3)).max_abs(), 0.0, 0.0))
        }),
        case("ahlfors.antisymmetric", Identity, |ctx| {
            let a = rng::gaussian_matrix(&mut ctx.rng, 3);
            Ok(Outcome::abs(ahlfors(&(a - a.transpose())).max_abs(), 0.0, 0.0))
        }),
        case("ahlfors.diag_2_0", Identity, |_| {
            let s = ahlfors(&SquareMatrix::diag(&[2.0, 0.0]));
            Ok(Outcome::abs((s - SquareMatrix::diag(&[1.0, -1.0])).max_abs(), 0.0, 1e-15))
        }),
        case("analyze.inversion_at_e1", Identity, |_| {
            let f = ConformalMap::new(3, vec![Moebius::Inversion])?;
            let r = analyze(&f.jet(&Vector::basis(3, 0))?.jac, DEFAULT_CONFORMAL_TOL)?;
            let ok = (r.k - 3f64.sqrt()).abs() < 1e-14 && r.sg_norm_sq < 1e-28 && r.conformal;
            Ok(Outcome::holds(ok).with_detail(format!("K = {}, |S(g)|^2 = {:e}", r.k, r.sg_norm_sq)))
        }),
        case("analyze.planar_lower_bound_identity", ClosedForm, |ctx| {
            let worst = max_over(500, || {
                let j = rng::positive_jacobian(&mut ctx.rng, 2, 1e-2);
                let r = analyze(&j, DEFAULT_CONFORMAL_TOL)?;
                let want = (r.k.powi(4) - 4.0) / 2.0;
                Ok((r.sg_norm_sq - want).abs() / want.max(1e-300))
            })?;
            Ok(Outcome::at_most(worst, 1e-10))
        }),
        case("analyze.radial_ahlfors_closed_form", ClosedForm, |ctx| {
            let m = RadialStretch::new(2.0, 3)?;
            let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
            let r = analyze(&m.jet(&x)?.jac, DEFAULT_CONFORMAL_TOL)?;
            Ok(Outcome::abs((r.sg - m.ahlfors_closed_form(&x)?).max_abs(), 0.0, 1e-13))
        }),
        case("analyze.report_invariants", Oracle, |ctx| {
            let worst = max_over(500, || {
                let n = 2 + (rng::uniform(&mut ctx.rng, 0.0, 3.0) as usize);
                let j = rng::positive_jacobian(&mut ctx.rng, n, 1e-2);
                let r = analyze(&j, DEFAULT_CONFORMAL_TOL)?;
                let g2 = r.g * r.g;
                let alt = g2.trace() - r.g.trace().powi(2) / n as f64;
                let upper = r.k.powi(4) * (1.0 - 1.0 / n as f64);
                let bound_gap = (r.sg_norm_sq - upper).max(0.0) / upper;
                Ok(r.sg.trace().abs().max((r.sg_norm_sq - alt).abs() / r.sg_norm_sq.max(1e-300)).max(bound_gap))
            })?;
            Ok(Outcome::at_most(worst, 1e-10))
        }),
        case("analyze.conformality_criteria_agree", Oracle, |ctx| {
            // Conformal data meets every criterion; strongly distorted data
            // meets none.
            let mut ok = true;
            for _ in 0..200 {
                let r = rng::rotation(&mut ctx.rng, 3);
                let c = r.scale(rng::uniform(&mut ctx.rng, 0.2, 5.0));
                ok &= analyze(&c, DEFAULT_CONFORMAL_TOL)?.criteria.verdicts(DEFAULT_CONFORMAL_TOL) == [true; 4];
                let j = r * SquareMatrix::diag(&[2.0, 1.0, rng::uniform(&mut ctx.rng, 0.2, 0.8)]);
                ok &= analyze(&j, DEFAULT_CONFORMAL_TOL)?.criteria.verdicts(DEFAULT_CONFORMAL_TOL) == [false; 4];
            }
            Ok(Outcome::holds(ok))
        }),
        case("factoring_residual.identity", Identity, |_| {
            Ok(Outcome::at_most(factoring_residual(&SquareMatrix::identity(3))?, 1e-15))
        }),
        case("factoring_residual.conformal", Identity, |ctx| {
            let c = rng::rotation(&mut ctx.rng, 3).scale(1.7);
            Ok(Outcome::at_most(factoring_residual(&c)?, 1e-12))
        }),
        case("factoring_residual.random", Oracle, |ctx| {
            let worst = max_over(500, || {
                let n = 2 + (rng::uniform(&mut ctx.rng, 0.0, 3.0) as usize);
                let j = rng::positive_jacobian(&mut ctx.rng, n, 1e-2);
                Ok(factoring_residual(&j)? / (1.0 + hs_norm(&j.inverse()?)))
            })?;
            Ok(Outcome::at_most(worst, 1e-10))
        }),
    ]
}
