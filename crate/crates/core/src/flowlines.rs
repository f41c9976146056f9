//! Integral curves of the rows of `S(g) du^{-T}`. Along such a curve the
//! trace dilation changes at the rate `K³/(n²|du|⁴) (L_∞u)^i`, so for
//! solutions of `L_∞u = 0` it is constant.

use std::io::Write;

use serde::Serialize;

use crate::dilation::{ahlfors_flow_matrix, trace_dilation};
use crate::error::{QcError, Result};
use crate::linalg::{SquareMatrix, Vector};
use crate::maps::SmoothMap;
use crate::operators::{linfty_factored, Jet2Sample};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HYSTERESIS: f64 = 0.5;
const BOUNDARY_TOL: f64 = 1e-10;

/// Flow field at `x`: row `i` is the `i`-th direction field.
pub fn flow_field(map: &dyn SmoothMap, x: &Vector) -> Result<SquareMatrix> {
    ahlfors_flow_matrix(&map.jet(x)?.jac)
}

fn row_norms(field: &SquareMatrix) -> Vec<f64> {
    (0..field.dim()).map(|i| field.row(i).norm()).collect()
}

/// Picks the row to follow. The current row (0-based) is kept while its norm
/// is at least `threshold` times the largest row norm; otherwise the largest
/// row is returned (lowest index on ties).
pub fn select_row(field: &SquareMatrix, current: Option<usize>, threshold: f64) -> Result<usize> {
    let total = field.norm_sq().sqrt();
    if !(total > 1e-12) {
        return Err(QcError::AllRowsDegenerate(total));
    }
    let norms = row_norms(field);
    let (best, max) = norms
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, &v)| if v > bm { (i, v) } else { (bi, bm) });
    match current {
        Some(c) if c < norms.len() && norms[c] >= threshold * max => Ok(c),
        _ => Ok(best),
    }
}

/// `dK/ds` predicted along row `row` (0-based, positive orientation):
/// `K³/(n²|du|⁴) (L_∞u)^row`.
pub fn predicted_dilation_rate(sample: &Jet2Sample, row: usize) -> Result<f64> {
    let k = trace_dilation(&sample.jac)?;
    let n = sample.dim() as f64;
    let q2 = sample.jac.norm_sq();
    Ok(k.powi(3) / (n * n * q2 * q2) * linfty_factored(sample)?[row])
}

/// Integration region, described by a signed function that is negative inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    Ball { center: Vector, radius: f64 },
    Box { lo: Vector, hi: Vector },
    Unbounded,
}

impl Domain {
    pub fn unit_ball(n: usize) -> Self {
        Domain::Ball { center: Vector::zeros(n), radius: 1.0 }
    }

    pub fn signed(&self, x: &Vector) -> f64 {
        match self {
            Domain::Ball { center, radius } => (*x - *center).norm() - radius,
            Domain::Box { lo, hi } => (0..x.dim()).map(|i| (lo[i] - x[i]).max(x[i] - hi[i])).fold(f64::MIN, f64::max),
            Domain::Unbounded => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Termination {
    Boundary,
    MaxLength,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowSample {
    pub s: f64,
    pub x: Vector,
    #[serde(rename = "K")]
    pub k: f64,
    /// Active row, 1-based.
    pub row: usize,
    /// Norm of the active row at `x`.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    pub terminated: Termination,
    pub switches: usize,
}

impl FlowTrajectory {
    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.s)
    }

    /// `max_s |K(γ(s)) − K(γ(0))|`.
    pub fn k_drift(&self) -> f64 {
        let k0 = self.samples.first().map_or(0.0, |s| s.k);
        self.samples.iter().fold(0.0, |m, s| m.max((s.k - k0).abs()))
    }

    /// CSV with columns `s, x1..xn, K, row, speed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.samples.first().map_or(0, |s| s.x.dim());
        let mut header = vec!["s".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend(["K".to_string(), "row".to_string(), "speed".to_string()]);
        w.write_record(&header)?;
        for smp in &self.samples {
            let mut rec = vec![smp.s.to_string()];
            rec.extend(smp.x.as_slice().iter().map(|v| v.to_string()));
            rec.extend([smp.k.to_string(), smp.row.to_string(), smp.speed.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowlineOptions {
    pub ds: f64,
    pub max_len: f64,
    pub hysteresis: f64,
    pub domain: Domain,
}

impl FlowlineOptions {
    pub fn new(max_len: f64, domain: Domain) -> Self {
        FlowlineOptions { ds: DEFAULT_STEP, max_len, hysteresis: DEFAULT_HYSTERESIS, domain }
    }
}

/// Everything sampled at one point of the path.
struct Probe {
    k: f64,
    field: SquareMatrix,
}

fn probe(map: &dyn SmoothMap, x: &Vector) -> Result<Probe> {
    let jac = map.jet(x)?.jac;
    Ok(Probe { k: trace_dilation(&jac)?, field: ahlfors_flow_matrix(&jac)? })
}

fn velocity(map: &dyn SmoothMap, x: &Vector, row: usize, sign: f64) -> Result<Vector> {
    match flow_field(map, x) {
        Ok(f) => Ok(f.row(row).scale(sign)),
        Err(e) => Err(QcError::StepFailure(e.to_string())),
    }
}

fn rk4(map: &dyn SmoothMap, x: &Vector, row: usize, sign: f64, h: f64) -> Result<Vector> {
    let k1 = velocity(map, x, row, sign)?;
    let k2 = velocity(map, &(*x + k1.scale(0.5 * h)), row, sign)?;
    let k3 = velocity(map, &(*x + k2.scale(0.5 * h)), row, sign)?;
    let k4 = velocity(map, &(*x + k3.scale(h)), row, sign)?;
    Ok(*x + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0))
}

fn is_degenerate(p: &Probe) -> bool {
    p.field.norm_sq().sqrt() <= 1e-12 * (1.0 + p.k * p.k)
}

/// Follows the flow field from `x0` with classical RK4 at fixed step.
///
/// The active row is re-selected after every step with hysteresis. When the
/// row changes, its sign is chosen so the new velocity makes an angle of at
/// most 90° with the previous one. A step that leaves the domain is shortened
/// by bisection until the exit point is located to `1e-10`.
pub fn trace_flowline(map: &dyn SmoothMap, x0: &Vector, opts: &FlowlineOptions) -> Result<FlowTrajectory> {
    if !(opts.ds > 0.0 && opts.max_len >= 0.0) {
        return Err(QcError::InvalidParameter("step and length must be positive".into()));
    }
    if opts.domain.signed(x0) > 0.0 {
        return Err(QcError::GuardViolation(x0.as_slice().to_vec(), "start point outside domain".into()));
    }
    let mut p = probe(map, x0)?;
    let mut x = *x0;
    let mut s = 0.0;
    let mut samples = Vec::new();
    if is_degenerate(&p) {
        samples.push(FlowSample { s, x, k: p.k, row: 1, speed: 0.0 });
        return Ok(FlowTrajectory { samples, terminated: Termination::Degenerate, switches: 0 });
    }
    let mut row = select_row(&p.field, None, opts.hysteresis)?;
    let mut sign = 1.0;
    let mut switches = 0;
    samples.push(FlowSample { s, x, k: p.k, row: row + 1, speed: p.field.row(row).norm() });

    let terminated = loop {
        if s >= opts.max_len {
            break Termination::MaxLength;
        }
        let h = opts.ds.min(opts.max_len - s);
        let mut next = rk4(map, &x, row, sign, h)?;
        let mut taken = h;
        let mut exited = false;
        if opts.domain.signed(&next) > 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > BOUNDARY_TOL {
                let mid = 0.5 * (lo + hi);
                if opts.domain.signed(&rk4(map, &x, row, sign, mid)?) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            next = rk4(map, &x, row, sign, lo)?;
            taken = lo;
            exited = true;
        }
        let prev_velocity = p.field.row(row).scale(sign);
        x = next;
        s += taken;
        p = probe(map, &x).map_err(|e| QcError::StepFailure(e.to_string()))?;
        if is_degenerate(&p) {
            samples.push(FlowSample { s, x, k: p.k, row: row + 1, speed: p.field.row(row).norm() });
            break Termination::Degenerate;
        }
        let new_row = select_row(&p.field, Some(row), opts.hysteresis)?;
        if new_row != row {
            switches += 1;
            row = new_row;
            sign = if p.field.row(row).dot(&prev_velocity) >= 0.0 { 1.0 } else { -1.0 };
        }
        samples.push(FlowSample { s, x, k: p.k, row: row + 1, speed: p.field.row(row).norm() });
        if exited {
            break Termination::Boundary;
        }
    };
    Ok(FlowTrajectory { samples, terminated, switches })
}

/// Result of [`du_recovery_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuRecovery {
    /// `max_j |du_ij(γ(t)) − du_ij(γ(0)) − ∫ Σ_k F_ik ∂_k du_ij ds|` with
    /// `F = S(g) du^{-T}` and trapezoidal quadrature over the samples.
    pub residual: f64,
    /// `max_j |du_ij(γ(t)) − du_ij(γ(0)) − ∫ K ∂_j K ds|`; the integrand only
    /// matches after summing over rows, so this is generally not small.
    pub row_dilation_gap: f64,
    /// `max_j |Σ_i Σ_k F_ik ∂_k du_ij − K ∂_j K|` over the samples.
    pub summed_identity: f64,
}

/// Recovers the change of row `row` (1-based) of `du` along a trajectory that
/// followed that row throughout.
pub fn du_recovery_check(map: &dyn SmoothMap, traj: &FlowTrajectory, row: usize) -> Result<DuRecovery> {
    if traj.samples.iter().any(|s| s.row != row) {
        return Err(QcError::RowSwitched);
    }
    let first = traj.samples.first().ok_or_else(|| QcError::InvalidParameter("empty trajectory".into()))?;
    let i = row - 1;
    let n = first.x.dim();
    let mut chain = vec![Vector::zeros(n); traj.samples.len()];
    let mut kdk = vec![Vector::zeros(n); traj.samples.len()];
    let mut summed_identity = 0.0_f64;
    let mut jacs = Vec::with_capacity(traj.samples.len());
    for (m, smp) in traj.samples.iter().enumerate() {
        let jet = map.jet(&smp.x)?;
        let f = ahlfors_flow_matrix(&jet.jac)?;
        let k = trace_dilation(&jet.jac)?;
        let dk = crate::operators::dilation_gradient(&jet)?;
        chain[m] = Vector::from_fn(n, |j| (0..n).map(|c| f[(i, c)] * jet.hess.get(i, j, c)).sum());
        kdk[m] = dk.scale(k);
        let summed = Vector::from_fn(n, |j| {
            (0..n).map(|a| (0..n).map(|c| f[(a, c)] * jet.hess.get(a, j, c)).sum::<f64>()).sum()
        });
        summed_identity = summed_identity.max((summed - kdk[m]).max_abs());
        jacs.push(jet.jac);
    }
    let trapezoid = |vals: &[Vector]| {
        let mut acc = Vector::zeros(n);
        for m in 1..vals.len() {
            let ds = traj.samples[m].s - traj.samples[m - 1].s;
            acc += (vals[m] + vals[m - 1]).scale(0.5 * ds);
        }
        acc
    };
    let last = jacs.len() - 1;
    let drift = jacs[last].row(i) - jacs[0].row(i);
    Ok(DuRecovery {
        residual: (drift - trapezoid(&chain)).max_abs(),
        row_dilation_gap: (drift - trapezoid(&kdk)).max_abs(),
        summed_identity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{build_map, teichmuller, Affine, ConformalMap, CubicMap, Moebius, RadialStretch};
    use crate::rng;
    use approx::assert_relative_eq;

    #[test]
    fn radial_field_at_e1() {
        let m = RadialStretch::new(2.0, 3).unwrap();
        let f = flow_field(&m, &Vector::basis(3, 0)).unwrap();
        let c = 3.0 * 2f64.powf(-2.0 / 3.0);
        let e1 = Vector::basis(3, 0);
        let sg = (e1.outer(&e1) - SquareMatrix::identity(3).scale(1.0 / 3.0)).scale(c);
        let want = sg * SquareMatrix::diag(&[0.5, 1.0, 1.0]);
        assert!((f - want).max_abs() < 1e-14);
        assert!(flow_field(&Affine::identity(3), &e1).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn select_row_contract() {
        let mut f = SquareMatrix::zeros(3);
        f[(1, 2)] = 1.0;
        assert_eq!(select_row(&f, None, 0.5).unwrap(), 1);
        let g = SquareMatrix::diag(&[1.0, 0.8, 0.1]);
        assert_eq!(select_row(&g, Some(1), 0.5).unwrap(), 1);
        assert_eq!(select_row(&g, Some(2), 0.5).unwrap(), 0);
        assert!(matches!(select_row(&SquareMatrix::zeros(2), None, 0.5), Err(QcError::AllRowsDegenerate(_))));
        let mut r = rng::seeded(14);
        for _ in 0..500 {
            let n = 2 + (rng::uniform(&mut r, 0.0, 2.0) as usize);
            let f = rng::gaussian_matrix(&mut r, n);
            let cur = Some(rng::uniform(&mut r, 0.0, n as f64) as usize);
            let sel = select_row(&f, cur, 0.5).unwrap();
            let bound = f.norm_sq().sqrt() / (n * n) as f64;
            assert!(f.row(sel).norm() >= bound);
        }
    }

    #[test]
    fn conformal_start_is_degenerate() {
        let f = ConformalMap::new(3, vec![Moebius::Dilation(2.0)]).unwrap();
        let t =
            trace_flowline(&f, &Vector::from_slice(&[0.1, 0.2, 0.3]), &FlowlineOptions::new(1.0, Domain::unit_ball(3)))
                .unwrap();
        assert_eq!(t.terminated, Termination::Degenerate);
        assert_eq!(t.samples.len(), 1);
    }

    #[test]
    fn teichmuller_dilation_is_constant_along_paths() {
        let m = teichmuller(3, 2.0).unwrap();
        let t = trace_flowline(
            m.as_ref(),
            &Vector::from_slice(&[0.1, -0.2, 0.3]),
            &FlowlineOptions::new(1.0, Domain::unit_ball(3)),
        )
        .unwrap();
        assert!(t.k_drift() < 1e-10, "drift {}", t.k_drift());
        assert!(t.terminated != Termination::Degenerate);
        for w in t.samples.windows(2) {
            let max_speed = w[0].speed.max(w[1].speed) * 1.5;
            assert!((w[1].x - w[0].x).norm() <= max_speed * (w[1].s - w[0].s) * (1.0 + 1e-9) + 1e-15);
        }
    }

    #[test]
    fn boundary_exit_is_located() {
        let m = build_map("affine", 2, &[2.0, 0.5, 0.0, 1.0]).unwrap();
        let m = m.as_ref();
        let dom = Domain::Ball { center: Vector::zeros(2), radius: 1.0 };
        let t = trace_flowline(m, &Vector::from_slice(&[0.5, 0.1]), &FlowlineOptions::new(10.0, dom)).unwrap();
        assert_eq!(t.terminated, Termination::Boundary);
        let end = t.samples.last().unwrap().x;
        assert!(dom.signed(&end).abs() < 1e-8, "{}", dom.signed(&end));
    }

    #[test]
    fn pathwise_dilation_rate_on_non_solution() {
        let mut r = rng::seeded(5);
        let m = CubicMap::random(&mut r, 3, 0.3, 0.3);
        let opts = FlowlineOptions { ds: 1e-3, max_len: 0.2, hysteresis: 0.5, domain: Domain::unit_ball(3) };
        let t = trace_flowline(&m, &Vector::from_slice(&[0.1, 0.1, 0.0]), &opts).unwrap();
        let mut checked = 0;
        for w in t.samples.windows(3) {
            if w[0].row != w[2].row || w[1].row != w[0].row {
                continue;
            }
            let ds = w[2].s - w[0].s;
            let fd = (w[2].k - w[0].k) / ds;
            let jet = m.jet(&w[1].x).unwrap();
            let pred = predicted_dilation_rate(&jet, w[1].row - 1).unwrap();
            // Orientation of the path relative to the row.
            let v = w[2].x - w[0].x;
            let sign = v.dot(&flow_field(&m, &w[1].x).unwrap().row(w[1].row - 1)).signum();
            assert_relative_eq!(fd, sign * pred, max_relative = 1e-5);
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn du_recovery() {
        let aff = build_map("affine", 2, &[2.0, 0.3, 0.0, 0.7]).unwrap();
        let t = trace_flowline(
            aff.as_ref(),
            &Vector::from_slice(&[0.1, 0.1]),
            &FlowlineOptions::new(0.5, Domain::unit_ball(2)),
        )
        .unwrap();
        let row = t.samples[0].row;
        let rec = du_recovery_check(aff.as_ref(), &t, row).unwrap();
        assert_eq!(rec.residual, 0.0);

        let mut r = rng::seeded(8);
        let m = CubicMap::random(&mut r, 3, 0.3, 0.3);
        let run = |ds: f64| {
            let opts = FlowlineOptions { ds, max_len: 0.1, hysteresis: 0.0, domain: Domain::unit_ball(3) };
            let t = trace_flowline(&m, &Vector::from_slice(&[0.2, 0.0, -0.1]), &opts).unwrap();
            du_recovery_check(&m, &t, t.samples[0].row).unwrap()
        };
        let (a, b) = (run(1e-2), run(5e-3));
        assert!(a.summed_identity < 1e-12 && b.summed_identity < 1e-12);
        let ratio = a.residual / b.residual;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        assert!(a.row_dilation_gap > 1e3 * a.residual);
    }

    #[test]
    fn csv_layout() {
        let m = RadialStretch::new(2.0, 2).unwrap();
        let t = trace_flowline(&m, &Vector::from_slice(&[0.5, 0.1]), &FlowlineOptions::new(0.01, Domain::Unbounded))
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,x1,x2,K,row,speed\n"));
        assert_eq!(text.lines().count(), t.samples.len() + 1);
    }
}
