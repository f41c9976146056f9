use super::{case, CaseDef, CaseKind::*, Ctx, Outcome};
use crate::error::{QcError, Result};
use crate::flowlines::*;
use crate::linalg::{SquareMatrix, Vector};
use crate::maps::{build_map, teichmuller, Affine, ConformalMap, CubicMap, RadialStretch, SmoothMap};
use crate::rng;

/// Largest `|K(γ(s)) − K(γ(0))|` over 20 unit-length paths of the
/// Teichmüller composition started at random points of the ball of radius 0.8.
pub(crate) fn teichmuller_drift(ctx: &mut Ctx, starts: usize) -> Result<f64> {
    let m = teichmuller(3, 2.0)?;
    let opts = FlowlineOptions::new(1.0, Domain::unit_ball(3));
    let mut worst = 0.0_f64;
    for _ in 0..starts {
        let x0 = rng::point_in_shell(&mut ctx.rng, 3, 0.0, 0.8);
        worst = worst.max(trace_flowline(m.as_ref(), &x0, &opts)?.k_drift());
    }
    Ok(worst)
}

/// Worst relative gap between the centred difference of `K` along a path of
/// `map` and the predicted rate `K³/(n²|du|⁴) (L_∞u)^row`, over samples whose
/// neighbours share the active row.
pub(crate) fn pathwise_rate_gap(map: &dyn SmoothMap, x0: &Vector, len: f64) -> Result<(f64, usize)> {
    let opts = FlowlineOptions {
        ds: 1e-3,
        max_len: len,
        hysteresis: DEFAULT_HYSTERESIS,
        domain: Domain::unit_ball(map.dim()),
    };
    let t = trace_flowline(map, x0, &opts)?;
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for w in t.samples.windows(3) {
        if w[0].row != w[1].row || w[1].row != w[2].row {
            continue;
        }
        let fd = (w[2].k - w[0].k) / (w[2].s - w[0].s);
        let row = w[1].row - 1;
        let orient = (w[2].x - w[0].x).dot(&flow_field(map, &w[1].x)?.row(row)).signum();
        let pred = orient * predicted_dilation_rate(&map.jet(&w[1].x)?, row)?;
        worst = worst.max((fd - pred).abs() / pred.abs().max(1e-300));
        checked += 1;
    }
    Ok((worst, checked))
}

pub(super) fn cases() -> Vec<CaseDef> {
    vec![
        case("flow_field.conformal", Identity, |ctx| {
            let f = ConformalMap::random(&mut ctx.rng, 3, 3);
            let x = rng::point_in_shell(&mut ctx.rng, 3, 0.5, 2.0);
            Ok(Outcome::at_most(flow_field(&f, &x)?.max_abs(), 1e-12))
        }),
        case("flow_field.identity", Identity, |_| {
            Ok(Outcome::abs(flow_field(&Affine::identity(3), &Vector::basis(3, 1))?.max_abs(), 0.0, 0.0))
        }),
        case("flow_field.radial_at_e1", Oracle, |_| {
            let m = RadialStretch::new(2.0, 3)?;
            let e1 = Vector::basis(3, 0);
            let c = 3.0 * 2f64.powf(-2.0 / 3.0);
            let want = (e1.outer(&e1) - SquareMatrix::identity(3).scale(1.0 / 3.0)).scale(c)
                * SquareMatrix::diag(&[0.5, 1.0, 1.0]);
            Ok(Outcome::abs((flow_field(&m, &e1)? - want).max_abs(), 0.0, 1e-14))
        }),
        case("select_row.single_nonzero_row", Identity, |_| {
            let mut f = SquareMatrix::zeros(3);
            f[(1, 0)] = 0.3;
            f[(1, 2)] = -1.0;
            // Rows are reported 1-based.
            Ok(Outcome::abs((select_row(&f, None, DEFAULT_HYSTERESIS)? + 1) as f64, 2.0, 0.0))
        }),
        case("select_row.hysteresis_keeps_row", Identity, |_| {
            let f = SquareMatrix::diag(&[1.0, 0.8, 0.1]);
            Ok(Outcome::abs(select_row(&f, Some(1), DEFAULT_HYSTERESIS)? as f64, 1.0, 0.0))
        }),
        case("select_row.norm_bound", Oracle, |ctx| {
            let mut worst = f64::INFINITY;
            for _ in 0..500 {
                let n = 2 + (rng::uniform(&mut ctx.rng, 0.0, 2.0) as usize);
                let f = rng::gaussian_matrix(&mut ctx.rng, n);
                let cur = Some(rng::uniform(&mut ctx.rng, 0.0, n as f64) as usize);
                let sel = select_row(&f, cur, DEFAULT_HYSTERESIS)?;
                worst = worst.min(f.row(sel).norm() / (f.norm_sq().sqrt() / (n * n) as f64));
            }
            Ok(Outcome::at_least(worst, 1.0))
        }),
        case("select_row.degenerate", Identity, |_| {
            Ok(Outcome::holds(matches!(
                select_row(&SquareMatrix::zeros(3), None, 0.5),
                Err(QcError::AllRowsDegenerate(_))
            )))
        }),
        case("trace.conformal_is_degenerate", Identity, |ctx| {
            let f = ConformalMap::random(&mut ctx.rng, 3, 2);
            let x0 = loop {
                let x = rng::point_in_shell(&mut ctx.rng, 3, 0.1, 0.9);
                if f.jet(&x).is_ok() {
                    break x;
                }
            };
            let t = trace_flowline(&f, &x0, &FlowlineOptions::new(1.0, Domain::unit_ball(3)))?;
            Ok(Outcome::holds(t.terminated == Termination::Degenerate && t.samples.len() == 1))
        }),
        case("trace.teichmuller_dilation_constant", Oracle, |ctx| {
            Ok(Outcome::at_most(teichmuller_drift(ctx, 20)?, 1e-6))
        }),
        case("trace.teichmuller_never_degenerate", Oracle, |ctx| {
            let m = teichmuller(3, 2.0)?;
            let mut ok = true;
            for _ in 0..5 {
                let x0 = rng::point_in_shell(&mut ctx.rng, 3, 0.0, 0.8);
                let t = trace_flowline(m.as_ref(), &x0, &FlowlineOptions::new(5.0, Domain::unit_ball(3)))?;
                ok &= t.terminated != Termination::Degenerate;
            }
            Ok(Outcome::holds(ok))
        }),
        case("trace.boundary_exit_located", Oracle, |_| {
            let m = build_map("affine", 2, &[2.0, 0.5, 0.0, 1.0])?;
            let dom = Domain::unit_ball(2);
            let t = trace_flowline(m.as_ref(), &Vector::from_slice(&[0.5, 0.1]), &FlowlineOptions::new(10.0, dom))?;
            let end = t.samples.last().expect("non-empty").x;
            Ok(Outcome::at_most(dom.signed(&end).abs(), 1e-8).with_detail(format!("{:?}", t.terminated)))
        }),
        case("trace.pathwise_dilation_rate", Oracle, |ctx| {
            let m = CubicMap::random(&mut ctx.rng, 3, 0.3, 0.3);
            let (gap, checked) = pathwise_rate_gap(&m, &Vector::from_slice(&[0.1, 0.1, 0.0]), 0.2)?;
            Ok(Outcome::at_most(gap, 1e-5).with_detail(format!("{checked} samples")))
        }),
        case("du_recovery.affine", Identity, |_| {
            let m = build_map("affine", 2, &[2.0, 0.3, 0.0, 0.7])?;
            let t = trace_flowline(
                m.as_ref(),
                &Vector::from_slice(&[0.1, 0.1]),
                &FlowlineOptions::new(0.5, Domain::unit_ball(2)),
            )?;
            Ok(Outcome::abs(du_recovery_check(m.as_ref(), &t, t.samples[0].row)?.residual, 0.0, 0.0))
        }),
        case("du_recovery.teichmuller", Oracle, |_| {
            let m = teichmuller(3, 2.0)?;
            let opts = FlowlineOptions { ds: 1e-3, max_len: 0.3, hysteresis: 0.0, domain: Domain::unit_ball(3) };
            let t = trace_flowline(m.as_ref(), &Vector::from_slice(&[0.1, -0.2, 0.3]), &opts)?;
            Ok(Outcome::at_most(du_recovery_check(m.as_ref(), &t, t.samples[0].row)?.residual, 1e-6))
        }),
        case("du_recovery.second_order", Oracle, |ctx| {
            let m = CubicMap::random(&mut ctx.rng, 3, 0.3, 0.3);
            let run = |ds: f64| -> Result<f64> {
                let opts = FlowlineOptions { ds, max_len: 0.1, hysteresis: 0.0, domain: Domain::unit_ball(3) };
                let t = trace_flowline(&m, &Vector::from_slice(&[0.2, 0.0, -0.1]), &opts)?;
                Ok(du_recovery_check(&m, &t, t.samples[0].row)?.residual)
            };
            Ok(Outcome::rel(run(1e-2)? / run(5e-3)?, 4.0, 0.2))
        }),
        case("du_recovery.summed_identity", Oracle, |ctx| {
            let m = CubicMap::random(&mut ctx.rng, 3, 0.3, 0.3);
            let opts = FlowlineOptions { ds: 1e-2, max_len: 0.1, hysteresis: 0.0, domain: Domain::unit_ball(3) };
            let t = trace_flowline(&m, &Vector::from_slice(&[0.2, 0.0, -0.1]), &opts)?;
            Ok(Outcome::at_most(du_recovery_check(&m, &t, t.samples[0].row)?.summed_identity, 1e-12))
        }),
    ]
}
