use super::{case, max_over, CaseDef, CaseKind::*, Ctx, Outcome};
use crate::error::{QcError, Result};
use crate::linalg::{Hessian, SquareMatrix, Vector};
use crate::maps::{build_map, Affine, CubicMap, RadialStretch, SmoothMap};
use crate::operators::*;
use crate::rng;

fn random_jet(ctx: &mut Ctx, n: usize) -> Jet2Sample {
    Jet2Sample::new(
        Vector::zeros(n),
        Vector::zeros(n),
        rng::positive_jacobian(&mut ctx.rng, n, 1e-2),
        rng::symmetric_hessian(&mut ctx.rng, n),
    )
}

/// Largest entry gap between the linearization and central differences of
/// the flux with step `h`.
fn central(q: &SquareMatrix, p: f64, k: usize, l: usize, h: f64) -> Result<SquareMatrix> {
    let (mut qp, mut qm) = (*q, *q);
    qp[(k, l)] += h;
    qm[(k, l)] -= h;
    Ok((flux(&qp, p)? - flux(&qm, p)?).scale(0.5 / h))
}

/// Largest entry gap between the linearization and a central difference of
/// the flux, optionally Richardson-extrapolated to fourth order.
fn fd_gap_with(q: &SquareMatrix, p: f64, h: f64, richardson: bool) -> Result<f64> {
    let n = q.dim();
    let a = flux_linearization(q, p)?;
    let mut err = 0.0_f64;
    for k in 0..n {
        for l in 0..n {
            let mut d = central(q, p, k, l, h)?;
            if richardson {
                d = (central(q, p, k, l, h / 2.0)?.scale(4.0) - d).scale(1.0 / 3.0);
            }
            for i in 0..n {
                for j in 0..n {
                    err = err.max((a.get(i, j, k, l) - d[(i, j)]).abs());
                }
            }
        }
    }
    Ok(err)
}

fn fd_gap(q: &SquareMatrix, p: f64, h: f64) -> Result<f64> {
    fd_gap_with(q, p, h, false)
}

fn lh_regime(ctx: &mut Ctx, n: usize, p: f64) -> Result<Outcome> {
    let mut violations = 0;
    for _ in 0..1000 {
        let q = rng::positive_jacobian(&mut ctx.rng, n, 1e-3);
        let xi = rng::unit_vector(&mut ctx.rng, n);
        let eta = rng::unit_vector(&mut ctx.rng, n);
        if !lh_witness(&q, &xi, &eta, p)?.holds() {
            violations += 1;
        }
    }
    Ok(Outcome::abs(violations as f64, 0.0, 0.0))
}

fn divergence_gap(map: &dyn SmoothMap, x: &Vector, p: f64, h: f64) -> Result<f64> {
    Ok((lp_divergence(map, x, p, h)? - lp_nondiv(&map.jet(x)?, p)?).max_abs())
}

pub(super) fn cases() -> Vec<CaseDef> {
    vec![
        case("flux.identity", Identity, |_| {
            Ok(Outcome::abs(flux(&SquareMatrix::identity(3), 2.0)?.max_abs(), 0.0, 1e-14))
        }),
        case("flux.conformal", ClosedForm, |ctx| {
            let c = rng::rotation(&mut ctx.rng, 3).scale(rng::uniform(&mut ctx.rng, 0.5, 2.0));
            let scale = flux(&SquareMatrix::diag(&[2.0, 1.0, 1.0]), 2.0)?.max_abs();
            Ok(Outcome::at_most(flux(&c, 2.0)?.max_abs() / scale, 1e-12))
        }),
        case("flux.orthogonal_to_argument", ClosedForm, |ctx| {
            let worst = max_over(200, || {
                let q = rng::positive_jacobian(&mut ctx.rng, 3, 1e-2);
                let a = flux(&q, 2.0)?;
                Ok(a.frobenius(&q).abs() / (a.norm_sq() * q.norm_sq()).sqrt())
            })?;
            Ok(Outcome::at_most(worst, 1e-9))
        }),
        case("flux_linearization.fd_identity_2", Oracle, |_| {
            Ok(Outcome::at_most(fd_gap(&SquareMatrix::identity(2), 2.0, 1e-5)?, 1e-6))
        }),
        case("flux_linearization.fd_diag_2_1", Oracle, |_| {
            let q = SquareMatrix::diag(&[2.0, 1.0]);
            let scale = 1.0 + flux_linearization(&q, 2.0)?.max_abs();
            Ok(Outcome::at_most(fd_gap(&q, 2.0, 1e-5 * (1.0 + q.norm_sq().sqrt()))? / scale, 1e-6))
        }),
        case("flux_linearization.fd_random", Oracle, |ctx| {
            let worst = max_over(50, || {
                let q = rng::positive_jacobian(&mut ctx.rng, 3, 1e-1);
                let scale = 1.0 + flux_linearization(&q, 2.0)?.max_abs();
                // det/|q|^{n−1} bounds the smallest singular value from below.
                let sigma = q.det() / q.norm_sq().powf(1.0);
                Ok(fd_gap_with(&q, 2.0, 1e-3 * sigma, true)? / scale)
            })?;
            Ok(Outcome::at_most(worst, 1e-6))
        }),
        case("flux_linearization.fd_second_order", Oracle, |_| {
            let q = SquareMatrix::from_rows(&[&[1.3, 0.4], &[-0.2, 0.8]])?;
            Ok(Outcome::rel(fd_gap(&q, 2.0, 2e-2)? / fd_gap(&q, 2.0, 1e-2)?, 4.0, 0.2))
        }),
        case("lh.identity_2_p2_e1", ClosedForm, |_| {
            let e = Vector::basis(2, 0);
            let w = lh_witness(&SquareMatrix::identity(2), &e, &e, 2.0)?;
            Ok(Outcome::holds(w.holds() && (w.c1 - 2.0 / 3.0).abs() < 1e-15))
        }),
        case("lh.identity_3_p1_random", ClosedForm, |ctx| {
            let mut ok = true;
            for _ in 0..100 {
                let (xi, eta) = (rng::unit_vector(&mut ctx.rng, 3), rng::unit_vector(&mut ctx.rng, 3));
                ok &= lh_witness(&SquareMatrix::identity(3), &xi, &eta, 1.0)?.holds();
            }
            Ok(Outcome::holds(ok))
        }),
        case("lh.n2_p2", Oracle, |ctx| lh_regime(ctx, 2, 2.0)),
        case("lh.n2_p5", Oracle, |ctx| lh_regime(ctx, 2, 5.0)),
        case("lh.n3_p1", Oracle, |ctx| lh_regime(ctx, 3, 1.0)),
        case("lh.n3_p2", Oracle, |ctx| lh_regime(ctx, 3, 2.0)),
        case("lh.n3_p5", Oracle, |ctx| lh_regime(ctx, 3, 5.0)),
        case("lh.n2_p1_rejected", Identity, |_| {
            let e = Vector::basis(2, 0);
            let r = lh_witness(&SquareMatrix::identity(2), &e, &e, 1.0);
            Ok(Outcome::holds(matches!(r, Err(QcError::UnsupportedRegime(_)))))
        }),
        case("lp_nondiv.affine", Identity, |ctx| {
            let a = Affine::new(rng::positive_jacobian(&mut ctx.rng, 3, 1e-1), rng::gaussian_vector(&mut ctx.rng, 3))?;
            Ok(Outcome::abs(lp_nondiv(&a.jet(&rng::gaussian_vector(&mut ctx.rng, 3))?, 2.0)?.max_abs(), 0.0, 0.0))
        }),
        case("lp_nondiv.radial_closed_form", ClosedForm, |ctx| {
            let m = RadialStretch::new(2.0, 3)?;
            let worst = max_over(100, || {
                let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
                let want = m.lp_closed_form(&x, 2.0)?;
                Ok((lp_nondiv(&m.jet(&x)?, 2.0)? - want).max_abs() / want.max_abs())
            })?;
            Ok(Outcome::at_most(worst, 1e-8))
        }),
        case("lp_nondiv.radial_alpha_one", Identity, |ctx| {
            let m = RadialStretch::new(1.0, 3)?;
            let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
            Ok(Outcome::abs(lp_nondiv(&m.jet(&x)?, 2.0)?.max_abs(), 0.0, 1e-12))
        }),
        case("lp_divergence.affine", Identity, |ctx| {
            let a = Affine::new(rng::positive_jacobian(&mut ctx.rng, 3, 1e-1), Vector::zeros(3))?;
            Ok(Outcome::at_most(lp_divergence(&a, &rng::gaussian_vector(&mut ctx.rng, 3), 2.0, 1e-3)?.max_abs(), 1e-10))
        }),
        case("lp_divergence.radial_closed_form", ClosedForm, |ctx| {
            let m = RadialStretch::new(2.0, 3)?;
            let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
            let want = m.lp_closed_form(&x, 2.0)?;
            Ok(Outcome::at_most((lp_divergence(&m, &x, 2.0, 1e-3)? - want).max_abs() / want.max_abs(), 1e-4))
        }),
        case("lp_divergence.second_order", Oracle, |ctx| {
            let m = CubicMap::random(&mut ctx.rng, 3, 0.3, 0.3);
            let x = rng::gaussian_vector(&mut ctx.rng, 3).scale(0.1);
            Ok(Outcome::rel(divergence_gap(&m, &x, 2.0, 2e-2)? / divergence_gap(&m, &x, 2.0, 1e-2)?, 4.0, 0.2))
        }),
        case("linfty.radial", ClosedForm, |ctx| {
            let worst = max_over(100, || {
                let m = RadialStretch::new(rng::uniform(&mut ctx.rng, 0.3, 4.0), 3)?;
                let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
                Ok(linfty_factored(&m.jet(&x)?)?.max_abs())
            })?;
            Ok(Outcome::at_most(worst, 1e-8))
        }),
        case("linfty.wedge", ClosedForm, |ctx| {
            let m = build_map("wedge", 3, &[std::f64::consts::FRAC_PI_2])?;
            let worst = max_over(100, || {
                let x = super::examples::wedge_point(ctx, std::f64::consts::FRAC_PI_2);
                Ok(linfty_factored(&m.jet(&x)?)?.max_abs())
            })?;
            Ok(Outcome::at_most(worst, 1e-8))
        }),
        case("linfty.affine", Identity, |ctx| {
            let j = Jet2Sample::new(
                Vector::zeros(3),
                Vector::zeros(3),
                rng::positive_jacobian(&mut ctx.rng, 3, 1e-2),
                Hessian::zeros(3),
            );
            Ok(Outcome::abs(linfty_factored(&j)?.max_abs(), 0.0, 0.0))
        }),
        case("linfty.forms_agree", Oracle, |ctx| {
            let worst = max_over(500, || {
                let n = if rng::uniform(&mut ctx.rng, 0.0, 1.0) < 0.5 { 2 } else { 3 };
                let jet = random_jet(ctx, n);
                let a = linfty_factored(&jet)?;
                Ok((a - linfty_flowform(&jet)?).max_abs() / a.max_abs().max(1e-300))
            })?;
            Ok(Outcome::at_most(worst, 1e-8))
        }),
        case("linfty.flowform_conformal", Identity, |ctx| {
            let f = crate::maps::ConformalMap::random(&mut ctx.rng, 3, 3);
            let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
            let jet = f.jet(&x)?;
            let scale = jet.jac.norm_sq().powi(2) * (jet.hess.max_abs() + 1e-6 * jet.jac.max_abs());
            Ok(Outcome::at_most(linfty_flowform(&jet)?.max_abs() / scale, 1e-12))
        }),
        case("lp_asymptotic.decade_ratio", Oracle, |ctx| {
            let jet = random_jet(ctx, 3);
            let lim = linfty_factored(&jet)?.scale(LINFTY_LIMIT_SIGN);
            let d = |p: f64| -> Result<f64> { Ok((lp_asymptotic_ratio(&jet, p)? - lim).norm()) };
            let (r1, r2) = (d(10.0)? / d(100.0)?, d(100.0)? / d(1000.0)?);
            Ok(Outcome::rel(r1.min(r2), 10.0, 0.3).with_detail(format!("ratios {r1:.6}, {r2:.6}")))
        }),
        case("lp_asymptotic.sign_calibration", Oracle, |ctx| {
            let worst = max_over(50, || {
                let jet = random_jet(ctx, 3);
                let lim = linfty_factored(&jet)?;
                let r = lp_asymptotic_ratio(&jet, 1000.0)?;
                let (same, flipped) =
                    ((r - lim.scale(LINFTY_LIMIT_SIGN)).norm(), (r + lim.scale(LINFTY_LIMIT_SIGN)).norm());
                Ok(same / flipped)
            })?;
            Ok(Outcome::at_most(worst, 0.5))
        }),
        case("lp_asymptotic.affine", Identity, |ctx| {
            let j = Jet2Sample::new(
                Vector::zeros(3),
                Vector::zeros(3),
                rng::positive_jacobian(&mut ctx.rng, 3, 1e-2),
                Hessian::zeros(3),
            );
            Ok(Outcome::abs(lp_asymptotic_ratio(&j, 100.0)?.max_abs(), 0.0, 0.0))
        }),
        case("lp_asymptotic.conformal", Identity, |ctx| {
            let f = crate::maps::ConformalMap::random(&mut ctx.rng, 3, 3);
            let jet = f.jet(&rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0))?;
            // Words such as two inversions are affine with a round-off Hessian.
            let scale = jet.jac.norm_sq().powi(2) * (jet.hess.max_abs() + 1e-6 * jet.jac.max_abs());
            Ok(Outcome::at_most(lp_asymptotic_ratio(&jet, 100.0)?.max_abs() / scale, 1e-9))
        }),
        case("b_tensor.conformal", ClosedForm, |ctx| {
            let c = rng::rotation(&mut ctx.rng, 2).scale(1.3);
            Ok(Outcome::at_most(b_tensor(&c, 2.0)?.max_abs(), 1e-12))
        }),
        case("b_tensor.model_case", ClosedForm, |ctx| {
            let worst = max_over(50, || {
                let (l1, l2) = (rng::uniform(&mut ctx.rng, 0.3, 3.0), rng::uniform(&mut ctx.rng, 0.3, 3.0));
                let p = rng::uniform(&mut ctx.rng, 1.0, 4.0);
                let s = l1 * l1 + l2 * l2;
                let want = p * (1.0 - 2.0 * l1 * l1 / s) * (s / (l1 * l2)).powf(p);
                let got = b_tensor(&SquareMatrix::diag(&[l1, l2]), p)?[(0, 0)];
                Ok((got - want).abs() / want.abs().max(1e-12))
            })?;
            Ok(Outcome::at_most(worst, 1e-12))
        }),
        case("b_tensor.diag_2_half_p1", Oracle, |_| {
            // p (1 − 4/(17/8)) (17/4) = −15/4.
            Ok(Outcome::rel(b_tensor(&SquareMatrix::diag(&[2.0, 0.5]), 1.0)?[(0, 0)], -15.0 / 4.0, 1e-14))
        }),
        case("b_tensor.indefinite", Oracle, |_| {
            let b = b_tensor(&SquareMatrix::diag(&[2.0, 0.5]), 1.0)?;
            Ok(Outcome::holds(b[(0, 0)] < 0.0 && b[(1, 1)] > 0.0))
        }),
    ]
}
