use super::{case, CaseDef, CaseKind::*, Ctx, Outcome};
use crate::error::{QcError, Result};
use crate::gradflow::*;
use crate::linalg::Vector;
use crate::maps::{build_map, CubicMap, RadialStretch, SmoothMap};
use crate::operators::lp_nondiv;
use crate::rng;

/// Safety factor of the desk run; the default bound `C₂ = 100n³` is far
/// from the observed stability limit (about `c = 1000` on this problem).
pub const DESK_SAFETY: f64 = 400.0;
pub const DESK_HORIZON: f64 = 5e-3;

fn unit_grid(map: &dyn SmoothMap, k: usize) -> Result<GridField> {
    let n = map.dim();
    GridField::sample(map, &vec![k + 1; n], 1.0 / k as f64, Vector::zeros(n))
}

fn named_grid(id: &str, n: usize, params: &[f64], k: usize) -> Result<GridField> {
    unit_grid(build_map(id, n, params)?.as_ref(), k)
}

fn random_affine(ctx: &mut Ctx) -> Result<GridField> {
    let a = rng::positive_jacobian(&mut ctx.rng, 2, 0.3);
    let b = rng::gaussian_vector(&mut ctx.rng, 2);
    let mut params = a.to_rows().concat();
    params.extend_from_slice(b.as_slice());
    named_grid("affine", 2, &params, 16)
}

/// The 33² bump run on the unit square at `p = 2`.
pub fn desk_run(exec: crate::par::Execution) -> Result<(FlowRun, f64)> {
    let g = named_grid("bump", 2, &[], 32)?;
    let affine = energy(&named_grid("identity", 2, &[], 32)?, 2.0)?;
    let mut opts = RunOptions::new(2.0, DESK_HORIZON);
    opts.safety = DESK_SAFETY;
    opts.exec = exec;
    Ok((run_flow(&g, &opts)?, affine))
}

pub(super) fn cases() -> Vec<CaseDef> {
    vec![
        case("energy.identity_n2_p2", Identity, |_| {
            Ok(Outcome::rel(energy(&named_grid("identity", 2, &[], 16)?, 2.0)?, 4.0, 1e-14))
        }),
        case("energy.identity_n3_p1", Identity, |_| {
            Ok(Outcome::rel(energy(&named_grid("identity", 3, &[], 6)?, 1.0)?, 3f64.powf(1.5), 1e-14))
        }),
        case("energy.affine_diag_2_half", Identity, |_| {
            Ok(Outcome::rel(energy(&named_grid("affine", 2, &[2.0, 0.0, 0.0, 0.5], 16)?, 1.0)?, 17.0 / 4.0, 1e-14))
        }),
        case("energy.quadrature_second_order", Oracle, |ctx| {
            let m = CubicMap::random(&mut ctx.rng, 2, 0.2, 0.2);
            let e = [8, 16, 32, 64].iter().map(|&k| energy(&unit_grid(&m, k)?, 2.0)).collect::<Result<Vec<_>>>()?;
            Ok(Outcome::rel((e[1] - e[2]) / (e[2] - e[3]), 4.0, 0.2))
        }),
        case("energy.rejects_folded_data", Identity, |_| {
            let g = named_grid("affine", 2, &[1.0, 0.0, 0.0, 1.0], 8)?;
            let flipped = GridField::from_values(
                g.shape(),
                g.spacing(),
                *g.origin(),
                g.values().iter().map(|v| Vector::from_slice(&[-v[0], v[1]])).collect(),
            );
            Ok(Outcome::holds(matches!(flipped.and_then(|f| energy(&f, 2.0)), Err(QcError::NonPositiveDeterminant(_)))))
        }),
        case("compatibility.affine", Identity, |ctx| {
            Ok(Outcome::at_most(compatibility_check(&random_affine(ctx)?, 2.0)?, 1e-9))
        }),
        case("compatibility.bump", Oracle, |_| {
            Ok(Outcome::at_most(compatibility_check(&named_grid("bump", 2, &[], 32)?, 2.0)?, 1e-10))
        }),
        case("compatibility.radial_matches_pointwise", Oracle, |_| {
            let m = RadialStretch::new(2.0, 2)?;
            let g = GridField::sample(&m, &[33, 33], 1.0 / 64.0, Vector::from_slice(&[1.0, 0.5]))?;
            let exact = (0..g.len())
                .filter(|&i| g.is_boundary(i))
                .map(|i| Ok(lp_nondiv(&m.jet(&g.position(i))?, 2.0)?.max_abs()))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(Outcome::rel(compatibility_check(&g, 2.0)?, exact, 1e-2))
        }),
        case("step.affine_stationary", Identity, |ctx| {
            let g = random_affine(ctx)?;
            let next = explicit_step_with(&g, 2.0, dtmax(&g, 2.0, 1.0)?, ctx.exec)?;
            Ok(Outcome::at_most(next.max_diff(&g), 1e-12))
        }),
        case("step.bump_reduces_energy", Oracle, |ctx| {
            let g = named_grid("bump", 2, &[], 32)?;
            let next = explicit_step_with(&g, 2.0, dtmax(&g, 2.0, DESK_SAFETY)?, ctx.exec)?;
            Ok(Outcome::at_least(energy(&g, 2.0)? - energy(&next, 2.0)?, 0.0))
        }),
        case("step.oversized_dt_is_caught", Oracle, |ctx| {
            let g = named_grid("bump", 2, &[], 16)?;
            let mut opts = RunOptions::new(2.0, 1.0);
            opts.dt = Some(5e-3);
            opts.max_steps = 20;
            opts.exec = ctx.exec;
            let s = run_flow(&g, &opts)?.stats;
            let halved = s.dt_history.iter().any(|&d| d < 5e-3);
            let halted = !matches!(s.halt_reason, HaltReason::Completed | HaltReason::MaxSteps);
            Ok(Outcome::holds((halved || halted) && s.monotone_within(s.energy_tolerance())))
        }),
        case("dtmax.identity_stable_for_200_steps", Oracle, |ctx| {
            let g = named_grid("identity", 2, &[], 32)?;
            let dt = dtmax(&g, 2.0, DEFAULT_SAFETY)?;
            let mut opts = RunOptions::new(2.0, 1.0);
            opts.dt = Some(dt);
            opts.max_steps = 200;
            opts.exec = ctx.exec;
            let run = run_flow(&g, &opts)?;
            let ok = dt.is_finite() && dt > 0.0 && run.stats.steps() == 200 && run.stats.monitor_violations == 0;
            Ok(Outcome::holds(ok).with_detail(format!("dt = {dt:e}")))
        }),
        case("dtmax.doubling_h_quadruples", Identity, |_| {
            let id = build_map("identity", 2, &[])?;
            let a = GridField::sample(id.as_ref(), &[17, 17], 1.0 / 32.0, Vector::zeros(2))?;
            let b = GridField::sample(id.as_ref(), &[17, 17], 1.0 / 16.0, Vector::zeros(2))?;
            Ok(Outcome::rel(dtmax(&b, 2.0, DEFAULT_SAFETY)? / dtmax(&a, 2.0, DEFAULT_SAFETY)?, 4.0, 1e-12))
        }),
        case("dtmax.decreases_with_p", Oracle, |_| {
            let g = named_grid("bump", 2, &[], 32)?;
            let d = [1.0, 2.0, 5.0].iter().map(|&p| dtmax(&g, p, DEFAULT_SAFETY)).collect::<Result<Vec<_>>>()?;
            Ok(Outcome::holds(d[0] > d[1] && d[1] > d[2]))
        }),
        case("run.affine_energy_constant", Identity, |ctx| {
            let g = random_affine(ctx)?;
            let mut opts = RunOptions::new(2.0, 1.0);
            opts.safety = 1.0;
            opts.max_steps = 100;
            opts.exec = ctx.exec;
            let run = run_flow(&g, &opts)?;
            let e0 = run.stats.energy[0];
            let drift = run.stats.energy.iter().fold(0.0_f64, |m, e| m.max((e - e0).abs())) / e0;
            Ok(Outcome::at_most(drift.max(run.grid.max_diff(&g)), 1e-12))
        }),
        case("run.bump_energy_monotone", Oracle, |ctx| {
            let (run, _) = desk_run(ctx.exec)?;
            let s = &run.stats;
            Ok(Outcome::at_most(s.max_energy_increase(), s.energy_tolerance()).with_detail(format!(
                "{} steps, halt {:?}",
                s.steps(),
                s.halt_reason
            )))
        }),
        case("run.bump_approaches_affine_energy", Oracle, |ctx| {
            let (run, affine) = desk_run(ctx.exec)?;
            let e = run.stats.final_energy();
            let ok = e >= affine && run.stats.steps() >= 200 && run.stats.halt_reason.is_clean();
            Ok(if ok { Outcome::at_most(e / affine - 1.0, 0.01) } else { Outcome::holds(false) }
                .with_detail(format!("final {e}, affine {affine}, {} steps", run.stats.steps())))
        }),
        case("run.bump_min_det_above_floor", Oracle, |ctx| {
            let (run, _) = desk_run(ctx.exec)?;
            let s = &run.stats;
            let min = s.min_det.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(Outcome::at_least(min, s.det_floor))
        }),
        case("run.picard_converges_to_explicit", Oracle, |ctx| {
            let g = named_grid("bump", 2, &[], 16)?;
            let mut opts = RunOptions::new(2.0, 1e-4);
            opts.dt = Some(1e-5);
            opts.exec = ctx.exec;
            let ex = run_flow(&g, &opts)?;
            opts.mode = FlowMode::Picard { outer: 10, window: 10 };
            let pc = run_flow(&g, &opts)?;
            Ok(Outcome::at_most(pc.grid.max_diff(&ex.grid), 1e-13))
        }),
        case("run.scaling_equivariance", ClosedForm, |ctx| {
            // v₀(x) = δ u₀(λx) on the grid scaled by 1/λ, stepped with δ² dt.
            let (delta, lambda) = (2.0, 2.0);
            let g = named_grid("bump", 2, &[], 16)?;
            let v0 = GridField::from_values(
                g.shape(),
                g.spacing() / lambda,
                *g.origin(),
                g.values().iter().map(|v| v.scale(delta)).collect(),
            )?;
            let mut opts = RunOptions::new(2.0, 2e-4);
            opts.dt = Some(2e-5);
            opts.exec = ctx.exec;
            let u = run_flow(&g, &opts)?;
            opts.horizon *= delta * delta;
            opts.dt = Some(2e-5 * delta * delta);
            let v = run_flow(&v0, &opts)?;
            let gap = v
                .grid
                .values()
                .iter()
                .zip(u.grid.values())
                .fold(0.0_f64, |m, (a, b)| m.max((*a - b.scale(delta)).max_abs()));
            Ok(Outcome::at_most(gap, 1e-12).with_detail(format!("{} and {} steps", u.stats.steps(), v.stats.steps())))
        }),
        case("snapshot.roundtrip", Identity, |_| {
            let g = named_grid("bump", 2, &[], 8)?;
            let mut buf = Vec::new();
            write_snapshot(&g, &mut buf)?;
            let (shape, h, values) = read_snapshot(buf.as_slice())?;
            Ok(Outcome::holds(shape == g.shape() && h == g.spacing() && values == g.values()))
        }),
    ]
}
