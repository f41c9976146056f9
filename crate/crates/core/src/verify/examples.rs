use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use super::{case, max_over, CaseDef, CaseKind::*, Ctx, Outcome};
use crate::dilation::{ahlfors, distortion_tensor, trace_dilation};
use crate::error::{QcError, Result};
use crate::linalg::{SquareMatrix, Vector};
use crate::maps::{compose, teichmuller, ConformalMap, CubicMap, MapRef, RadialStretch, SmoothMap, WedgeMap};
use crate::operators::{b_tensor, linfty_factored};
use crate::rng;
use crate::traces::{tangential_dilation, Hypersurface};

/// Random point with planar radius in `[0.3, 2]`, at least `1e-3` radians
/// away from both seams of a wedge with angle `alpha`.
pub(super) fn wedge_point(ctx: &mut Ctx, alpha: f64) -> Vector {
    let t = loop {
        let t = rng::uniform(&mut ctx.rng, 0.0, 2.0 * PI);
        if t > 1e-3 && t < 2.0 * PI - 1e-3 && (t - alpha).abs() > 1e-3 {
            break t;
        }
    };
    let r = rng::uniform(&mut ctx.rng, 0.3, 2.0);
    Vector::from_slice(&[r * t.cos(), r * t.sin(), rng::normal(&mut ctx.rng)])
}

fn wedge_sector_gap(ctx: &mut Ctx, first: bool) -> Result<f64> {
    let m = WedgeMap::new(FRAC_PI_2, 3)?;
    max_over(100, || {
        let x = loop {
            let x = wedge_point(ctx, FRAC_PI_2);
            if (WedgeMap::angle(&x) <= FRAC_PI_2) == first {
                break x;
            }
        };
        let rate = if first { PI / FRAC_PI_2 } else { PI / (2.0 * PI - FRAC_PI_2) };
        let jac = m.jet(&x)?.jac;
        Ok((jac.det() - rate).abs().max((jac.norm_sq() - (2.0 + rate * rate)).abs()))
    })
}

fn radial_k_gap(ctx: &mut Ctx, alpha: f64) -> Result<Outcome> {
    let m = RadialStretch::new(alpha, 3)?;
    let want = (3.0 + alpha * alpha - 1.0) / alpha.powf(2.0 / 3.0);
    let worst = max_over(100, || {
        let k = trace_dilation(&m.jet(&rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0))?.jac)?;
        Ok((k * k - want).abs() / want)
    })?;
    Ok(Outcome::at_most(worst, 1e-12))
}

/// Draws `u = affine + cubic` with `det du > 0` at the returned point.
fn perturbed_affine(ctx: &mut Ctx) -> CubicMap {
    let a = rng::positive_jacobian(&mut ctx.rng, 3, 0.3);
    let b = rng::gaussian_vector(&mut ctx.rng, 3);
    CubicMap::random(&mut ctx.rng, 3, 0.1, 0.1).with_linear(a, b)
}

/// Tries to sample `map` at a random point of the ball of radius 1, redrawing
/// on domain errors or orientation reversal.
fn sample_valid(ctx: &mut Ctx, map: &dyn SmoothMap) -> Result<(Vector, crate::Jet2Sample)> {
    for _ in 0..1000 {
        let x = rng::point_in_shell(&mut ctx.rng, 3, 0.0, 1.0);
        match map.jet(&x) {
            Ok(j) if j.jac.det() > 1e-3 * j.jac.norm_sq().powf(1.5) => return Ok((x, j)),
            Ok(_) | Err(_) => continue,
        }
    }
    Err(QcError::InvalidParameter("no admissible sample point found".into()))
}

/// Worst relative gaps of `(K_{F∘u} vs K_u, S(g̃) vs λ⁻¹ dF S(g) dFᵀ,
/// K_{u∘F} vs K_u∘F, S(g̃) vs S(g)∘F)` over `count` random `(u, F)` pairs.
pub(crate) fn conformal_invariance(ctx: &mut Ctx, count: usize) -> Result<[f64; 4]> {
    let mut worst = [0.0_f64; 4];
    for _ in 0..count {
        let u: MapRef = Arc::new(perturbed_affine(ctx));
        let f = ConformalMap::random(&mut ctx.rng, 3, 3);
        let fr: MapRef = Arc::new(f.clone());

        let post = compose(fr.clone(), u.clone());
        let (x, jet) = sample_valid(ctx, post.as_ref())?;
        let du = u.jet(&x)?.jac;
        let (k, k0) = (trace_dilation(&jet.jac)?, trace_dilation(&du)?);
        worst[0] = worst[0].max((k - k0).abs() / k0);
        let df = f.jet(&u.value(&x)?)?.jac;
        let lambda = df.norm_sq() / 3.0;
        let s0 = ahlfors(&distortion_tensor(&du)?);
        let want = (df * s0 * df.transpose()).scale(1.0 / lambda);
        let got = ahlfors(&distortion_tensor(&jet.jac)?);
        worst[1] = worst[1].max((got - want).max_abs() / (1.0 + s0.max_abs()));

        let pre = compose(u.clone(), fr);
        let (x, jet) = sample_valid(ctx, pre.as_ref())?;
        let du_f = u.jet(&f.value(&x)?)?.jac;
        let (k, k0) = (trace_dilation(&jet.jac)?, trace_dilation(&du_f)?);
        worst[2] = worst[2].max((k - k0).abs() / k0);
        let s0 = ahlfors(&distortion_tensor(&du_f)?);
        let got = ahlfors(&distortion_tensor(&jet.jac)?);
        worst[3] = worst[3].max((got - s0).max_abs() / (1.0 + s0.max_abs()));
    }
    Ok(worst)
}

pub(super) fn cases() -> Vec<CaseDef> {
    vec![
        case("radial.k_squared_alpha_0.5", ClosedForm, |ctx| radial_k_gap(ctx, 0.5)),
        case("radial.k_squared_alpha_2", ClosedForm, |ctx| radial_k_gap(ctx, 2.0)),
        case("radial.k_squared_alpha_3", ClosedForm, |ctx| radial_k_gap(ctx, 3.0)),
        case("radial.k_squared_value_alpha_2", ClosedForm, |_| {
            Ok(Outcome::rel(RadialStretch::new(2.0, 3)?.k_squared(), 6.0 / 2f64.powf(2.0 / 3.0), 1e-15))
        }),
        case("radial.alpha_one_is_identity", Identity, |ctx| {
            let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
            let jet = RadialStretch::new(1.0, 3)?.jet(&x)?;
            Ok(Outcome::abs((jet.jac - SquareMatrix::identity(3)).max_abs() + (jet.u - x).max_abs(), 0.0, 1e-15))
        }),
        case("radial.linfty_vanishes", ClosedForm, |ctx| {
            let worst = max_over(300, || {
                let alpha = [0.5, 2.0, 3.0][(rng::uniform(&mut ctx.rng, 0.0, 3.0) as usize).min(2)];
                let m = RadialStretch::new(alpha, 3)?;
                Ok(linfty_factored(&m.jet(&rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0))?)?.max_abs())
            })?;
            Ok(Outcome::at_most(worst, 1e-8))
        }),
        case("radial.lp_closed_form_p2", ClosedForm, |ctx| {
            let worst = max_over(300, || {
                let alpha = [0.5, 2.0, 3.0][(rng::uniform(&mut ctx.rng, 0.0, 3.0) as usize).min(2)];
                let m = RadialStretch::new(alpha, 3)?;
                let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
                let want = m.lp_closed_form(&x, 2.0)?;
                Ok((crate::operators::lp_nondiv(&m.jet(&x)?, 2.0)? - want).max_abs() / want.max_abs())
            })?;
            Ok(Outcome::at_most(worst, 1e-8))
        }),
        case("radial.ahlfors_closed_form", ClosedForm, |ctx| {
            let m = RadialStretch::new(2.0, 3)?;
            let worst = max_over(100, || {
                let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
                Ok((ahlfors(&distortion_tensor(&m.jet(&x)?.jac)?) - m.ahlfors_closed_form(&x)?).max_abs())
            })?;
            Ok(Outcome::at_most(worst, 1e-13))
        }),
        case("radial.tangential_dilation_on_unit_sphere", ClosedForm, |ctx| {
            let m = RadialStretch::new(2.0, 3)?;
            let s = Hypersurface::unit_sphere(3);
            let worst = max_over(100, || {
                let k = tangential_dilation(&m, &s, &rng::unit_vector(&mut ctx.rng, 3))?;
                Ok((k * k - 2.0).abs())
            })?;
            Ok(Outcome::at_most(worst, 1e-12))
        }),
        case("wedge.first_sector_det_and_norm", ClosedForm, |ctx| {
            Ok(Outcome::at_most(wedge_sector_gap(ctx, true)?, 1e-12))
        }),
        case("wedge.second_sector_det_and_norm", ClosedForm, |ctx| {
            Ok(Outcome::at_most(wedge_sector_gap(ctx, false)?, 1e-12))
        }),
        case("wedge.linfty_vanishes", ClosedForm, |ctx| {
            let m = WedgeMap::new(FRAC_PI_2, 3)?;
            let worst = max_over(200, || Ok(linfty_factored(&m.jet(&wedge_point(ctx, FRAC_PI_2))?)?.max_abs()))?;
            Ok(Outcome::at_most(worst, 1e-8))
        }),
        case("wedge.straight_angle_is_identity", Identity, |ctx| {
            let m = WedgeMap::new(PI, 3)?;
            let x = wedge_point(ctx, PI);
            Ok(Outcome::abs(trace_dilation(&m.jet(&x)?.jac)?, 3f64.sqrt(), 1e-14))
        }),
        case("wedge.seam_and_axis_excluded", Identity, |_| {
            let m = WedgeMap::new(FRAC_PI_2, 3)?;
            let seam = m.jet(&Vector::from_slice(&[0.0, 1.0, 0.0]));
            let axis = m.jet(&Vector::from_slice(&[0.0, 0.0, 1.0]));
            Ok(Outcome::holds(matches!(seam, Err(QcError::SeamExcluded)) && matches!(axis, Err(QcError::AxisExcluded))))
        }),
        case("teichmuller.linfty_vanishes_n2", ClosedForm, |ctx| teichmuller_gap(ctx, 2)),
        case("teichmuller.linfty_vanishes_n3", ClosedForm, |ctx| teichmuller_gap(ctx, 3)),
        case("conformal_invariance.post_composition_dilation", ClosedForm, |ctx| {
            Ok(Outcome::at_most(conformal_invariance(ctx, 200)?[0], 1e-9))
        }),
        case("conformal_invariance.post_composition_ahlfors", ClosedForm, |ctx| {
            Ok(Outcome::at_most(conformal_invariance(ctx, 200)?[1], 1e-8))
        }),
        case("conformal_invariance.pre_composition_dilation", ClosedForm, |ctx| {
            Ok(Outcome::at_most(conformal_invariance(ctx, 200)?[2], 1e-9))
        }),
        case("conformal_invariance.pre_composition_ahlfors", ClosedForm, |ctx| {
            Ok(Outcome::at_most(conformal_invariance(ctx, 200)?[3], 1e-8))
        }),
        case("b_tensor.model_case_vanishes_when_conformal", ClosedForm, |_| {
            let b = b_tensor(&SquareMatrix::diag(&[1.4, 1.4]), 3.0)?;
            Ok(Outcome::at_most(b.max_abs(), 1e-12))
        }),
    ]
}

fn teichmuller_gap(ctx: &mut Ctx, n: usize) -> Result<Outcome> {
    let m = teichmuller(n, 2.0)?;
    let worst = max_over(100, || {
        let jet = m.jet(&rng::point_in_shell(&mut ctx.rng, n, 0.0, 0.9))?;
        let scale = jet.jac.norm_sq().powi(2) * jet.hess.max_abs();
        Ok(linfty_factored(&jet)?.max_abs() / scale)
    })?;
    Ok(Outcome::at_most(worst, 1e-7))
}
