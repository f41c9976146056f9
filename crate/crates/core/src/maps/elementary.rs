use std::f64::consts::PI;

use rand::Rng;

use super::{check_point, SmoothMap};
use crate::error::{QcError, Result};
use crate::linalg::{check_dim, Hessian, SquareMatrix, Vector};
use crate::operators::Jet2Sample;
use crate::rng;

/// `u(x) = A x + b`.
#[derive(Debug, Clone)]
pub struct Affine {
    a: SquareMatrix,
    b: Vector,
}

impl Affine {
    pub fn new(a: SquareMatrix, b: Vector) -> Result<Self> {
        check_dim(a.dim())?;
        if b.dim() != a.dim() {
            return Err(QcError::Shape("affine offset dimension".into()));
        }
        Ok(Affine { a, b })
    }

    pub fn identity(n: usize) -> Self {
        Affine { a: SquareMatrix::identity(n), b: Vector::zeros(n) }
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.a
    }
}

impl SmoothMap for Affine {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn name(&self) -> String {
        if self.a == SquareMatrix::identity(self.a.dim()) && self.b.max_abs() == 0.0 {
            "identity".into()
        } else {
            "affine".into()
        }
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.a.to_rows().concat();
        p.extend_from_slice(self.b.as_slice());
        p
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        check_point(self.dim(), x)?;
        Ok(Jet2Sample::new(*x, self.a.mul_vec(x) + self.b, self.a, Hessian::zeros(self.dim())))
    }
}

/// `u(x) = |x|^{α−1} x`, smooth away from the origin.
#[derive(Debug, Clone, Copy)]
pub struct RadialStretch {
    alpha: f64,
    n: usize,
}

impl RadialStretch {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        check_dim(n)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(QcError::InvalidParameter(format!("alpha = {alpha} must be positive")));
        }
        Ok(RadialStretch { alpha, n })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `K² = (n + α² − 1) / α^{2/n}`, independent of the point.
    pub fn k_squared(&self) -> f64 {
        let (a, n) = (self.alpha, self.n as f64);
        (n + a * a - 1.0) / a.powf(2.0 / n)
    }

    /// `S(g)_ij = (α² − 1)/α^{2/n} (x̂_i x̂_j − δ_ij/n)`.
    pub fn ahlfors_closed_form(&self, x: &Vector) -> Result<SquareMatrix> {
        let r = x.norm();
        if r == 0.0 {
            return Err(QcError::OriginExcluded);
        }
        let (a, n) = (self.alpha, self.n as f64);
        let c = (a * a - 1.0) / a.powf(2.0 / n);
        let xh = x.scale(1.0 / r);
        Ok((xh.outer(&xh) - SquareMatrix::identity(self.n).scale(1.0 / n)).scale(c))
    }

    /// `L_p u(x) = p D^{np/2} α^{−p} · n(α²−1)(n−1)/(D α) · x/|x|^{α+1}` with
    /// `D = n + α² − 1`.
    pub fn lp_closed_form(&self, x: &Vector, p: f64) -> Result<Vector> {
        let r = x.norm();
        if r == 0.0 {
            return Err(QcError::OriginExcluded);
        }
        let (a, n) = (self.alpha, self.n as f64);
        let d = n + a * a - 1.0;
        let w = (0.5 * n * p * d.ln() - p * a.ln()).exp();
        let c = p * w * n * (a * a - 1.0) * (n - 1.0) / (d * a);
        Ok(x.scale(c / r.powf(a + 1.0)))
    }
}

impl SmoothMap for RadialStretch {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        "radial".into()
    }

    fn params(&self) -> Vec<f64> {
        vec![self.alpha]
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        check_point(self.n, x)?;
        let r2 = x.norm_sq();
        if r2 == 0.0 {
            return Err(QcError::OriginExcluded);
        }
        let r = r2.sqrt();
        let a = self.alpha;
        let f = r.powf(a - 1.0);
        let g = (a - 1.0) * f / r2;
        let g2 = (a - 1.0) * (a - 3.0) * f / (r2 * r2);
        let n = self.n;
        let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        let jac = SquareMatrix::from_fn(n, |i, j| f * d(i, j) + g * x[i] * x[j]);
        let hess = Hessian::from_fn(n, |i, j, l| {
            g * (x[l] * d(i, j) + x[j] * d(i, l) + x[i] * d(j, l)) + g2 * x[i] * x[j] * x[l]
        });
        Ok(Jet2Sample::new(*x, x.scale(f), jac, hess))
    }
}

/// Half-width (radians) of the excluded band around the wedge seams.
pub const WEDGE_SEAM_BAND: f64 = 1e-6;

/// In cylindrical coordinates `(r, θ, z)`, maps the sector `0 ≤ θ ≤ α` onto
/// the upper half plane by `θ ↦ πθ/α` and the complementary sector onto the
/// lower half plane. Smooth away from the axis and the two seams.
#[derive(Debug, Clone, Copy)]
pub struct WedgeMap {
    alpha: f64,
    n: usize,
}

impl WedgeMap {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        check_dim(n)?;
        if !(alpha > 0.0 && alpha < 2.0 * PI) {
            return Err(QcError::InvalidParameter(format!("wedge angle {alpha} must lie in (0, 2π)")));
        }
        Ok(WedgeMap { alpha, n })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Angle in `[0, 2π)`.
    pub fn angle(x: &Vector) -> f64 {
        let t = x[1].atan2(x[0]);
        if t < 0.0 {
            t + 2.0 * PI
        } else {
            t
        }
    }

    /// Angular rate `dφ/dθ` of the sector containing `θ`; this equals
    /// `det du` there, and `|du|² = (n − 1) + rate²`.
    pub fn angular_rate(&self, theta: f64) -> f64 {
        if theta <= self.alpha {
            PI / self.alpha
        } else {
            PI / (2.0 * PI - self.alpha)
        }
    }

    fn angle_map(&self, theta: f64) -> (f64, f64) {
        if theta <= self.alpha {
            (PI / self.alpha, 0.0)
        } else {
            let k = PI / (2.0 * PI - self.alpha);
            (k, PI - k * self.alpha)
        }
    }
}

impl SmoothMap for WedgeMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        "wedge".into()
    }

    fn params(&self) -> Vec<f64> {
        vec![self.alpha]
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        check_point(self.n, x)?;
        let (px, py) = (x[0], x[1]);
        let r2 = px * px + py * py;
        if r2 == 0.0 {
            return Err(QcError::AxisExcluded);
        }
        let theta = Self::angle(x);
        let seam_dist = theta.min(2.0 * PI - theta).min((theta - self.alpha).abs());
        if seam_dist < WEDGE_SEAM_BAND {
            return Err(QcError::SeamExcluded);
        }
        let r = r2.sqrt();
        let (kappa, c) = self.angle_map(theta);
        let phi = kappa * theta + c;
        let (s, co) = phi.sin_cos();

        let n = self.n;
        // Derivatives of r and θ in the (x₁, x₂) plane.
        let rj = [px / r, py / r];
        let rjl = [[py * py / (r2 * r), -px * py / (r2 * r)], [-px * py / (r2 * r), px * px / (r2 * r)]];
        let tj = [-py / r2, px / r2];
        let r4 = r2 * r2;
        let tjl = [[2.0 * px * py / r4, (py * py - px * px) / r4], [(py * py - px * px) / r4, -2.0 * px * py / r4]];

        let mut u = *x;
        u[0] = r * co;
        u[1] = r * s;
        let mut jac = SquareMatrix::identity(n);
        let mut hess = Hessian::zeros(n);
        for j in 0..2 {
            jac[(0, j)] = co * rj[j] - r * s * kappa * tj[j];
            jac[(1, j)] = s * rj[j] + r * co * kappa * tj[j];
            for l in 0..2 {
                let cross = kappa * (tj[l] * rj[j] + tj[j] * rj[l]);
                let tt = r * kappa * kappa * tj[j] * tj[l];
                let h0 = co * rjl[j][l] - s * cross - co * tt - r * s * kappa * tjl[j][l];
                let h1 = s * rjl[j][l] + co * cross - s * tt + r * co * kappa * tjl[j][l];
                hess.set(0, j, l, h0);
                hess.set(1, j, l, h1);
            }
        }
        Ok(Jet2Sample::new(*x, u, jac, hess))
    }
}

/// Polynomial map `u^i = b_i + A_ij x_j + ½ Q_ijk x_j x_k + ⅙ C_ijkl x_j x_k x_l`
/// with `Q` and `C` symmetric in their lower indices.
#[derive(Debug, Clone)]
pub struct CubicMap {
    n: usize,
    b: Vector,
    a: SquareMatrix,
    q: Vec<f64>,
    c: Vec<f64>,
}

impl CubicMap {
    /// Identity plus Gaussian quadratic and cubic terms of sizes `eps_q`,
    /// `eps_c`, symmetrized.
    pub fn random(r: &mut impl Rng, n: usize, eps_q: f64, eps_c: f64) -> Self {
        let mut q = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let v = eps_q * rng::normal(r);
                    q[(i * n + j) * n + k] = v;
                    q[(i * n + k) * n + j] = v;
                }
            }
        }
        let mut c = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    for l in k..n {
                        let v = eps_c * rng::normal(r);
                        for (a, b, d) in [(j, k, l), (j, l, k), (k, j, l), (k, l, j), (l, j, k), (l, k, j)] {
                            c[((i * n + a) * n + b) * n + d] = v;
                        }
                    }
                }
            }
        }
        CubicMap { n, b: Vector::zeros(n), a: SquareMatrix::identity(n), q, c }
    }

    /// Replaces the linear part `x ↦ A x + b`.
    pub fn with_linear(mut self, a: SquareMatrix, b: Vector) -> Self {
        self.a = a;
        self.b = b;
        self
    }
}

impl SmoothMap for CubicMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        "cubic".into()
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        let n = self.n;
        check_point(n, x)?;
        let qi = |i: usize, j: usize, k: usize| self.q[(i * n + j) * n + k];
        let ci = |i: usize, j: usize, k: usize, l: usize| self.c[((i * n + j) * n + k) * n + l];
        let mut u = self.a.mul_vec(x) + self.b;
        let mut jac = self.a;
        let mut hess = Hessian::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut cx = 0.0;
                    for l in 0..n {
                        cx += ci(i, j, k, l) * x[l];
                    }
                    u[i] += x[j] * x[k] * (0.5 * qi(i, j, k) + cx / 6.0);
                    jac[(i, j)] += x[k] * (qi(i, j, k) + 0.5 * cx);
                    hess.set(i, j, k, qi(i, j, k) + cx);
                }
            }
        }
        Ok(Jet2Sample::new(*x, u, jac, hess))
    }
}

/// `u(x) = base(x) + amp · (1 − |x − c|²/R²)⁴₊ · d`: a compactly supported
/// perturbation that vanishes to third order at `|x − c| = R`.
#[derive(Debug, Clone)]
pub struct CompactBump {
    base: Affine,
    center: Vector,
    radius: f64,
    amp: f64,
    dir: Vector,
}

impl CompactBump {
    pub fn new(base: Affine, center: Vector, radius: f64, amp: f64, dir: Vector) -> Result<Self> {
        let n = base.dim();
        if center.dim() != n || dir.dim() != n {
            return Err(QcError::Shape("bump center/direction dimension".into()));
        }
        if !(radius > 0.0) {
            return Err(QcError::InvalidParameter(format!("bump radius {radius} must be positive")));
        }
        Ok(CompactBump { base, center, radius, amp, dir })
    }

    /// Scalar profile `b(x)` with gradient and Hessian.
    fn profile(&self, x: &Vector) -> (f64, Vector, SquareMatrix) {
        let n = x.dim();
        let y = *x - self.center;
        let r2 = self.radius * self.radius;
        let rho = y.norm_sq() / r2;
        if rho >= 1.0 {
            return (0.0, Vector::zeros(n), SquareMatrix::zeros(n));
        }
        let s = 1.0 - rho;
        let drho = y.scale(2.0 / r2);
        let grad = drho.scale(-4.0 * s.powi(3));
        let hess = SquareMatrix::from_fn(n, |j, l| {
            let d = if j == l { 2.0 / r2 } else { 0.0 };
            12.0 * s * s * drho[j] * drho[l] - 4.0 * s.powi(3) * d
        });
        (s.powi(4), grad, hess)
    }
}

impl SmoothMap for CompactBump {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn name(&self) -> String {
        "bump".into()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = vec![self.amp, self.radius];
        p.extend_from_slice(self.center.as_slice());
        p
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        let base = self.base.jet(x)?;
        let (b, grad, hb) = self.profile(x);
        let n = self.dim();
        let jac = base.jac + self.dir.outer(&grad).scale(self.amp);
        let hess = Hessian::from_fn(n, |k, j, l| self.amp * self.dir[k] * hb[(j, l)]);
        Ok(Jet2Sample::new(*x, base.u + self.dir.scale(self.amp * b), jac, hess))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::{ahlfors, distortion_tensor, trace_dilation};
    use crate::maps::FdMap;
    use crate::operators::{linfty_factored, lp_nondiv};
    use approx::assert_relative_eq;

    /// Max jet discrepancy between an analytic map and its FD sampler.
    fn fd_gap(m: &dyn SmoothMap, x: &Vector, h: f64) -> (f64, f64) {
        let jet = m.jet(x).unwrap();
        let fd = FdMap::new(|y: &Vector| m.value(y), m.dim(), Some(h)).jet(x).unwrap();
        ((fd.jac - jet.jac).max_abs(), (fd.hess + jet.hess.scale(-1.0)).max_abs())
    }

    #[test]
    fn radial_closed_forms() {
        let m = RadialStretch::new(2.0, 3).unwrap();
        assert_relative_eq!(m.k_squared(), 6.0 / 2f64.powf(2.0 / 3.0), max_relative = 1e-15);
        assert_relative_eq!(m.k_squared(), 3.779_763_149_684_619, max_relative = 1e-14);
        let x = Vector::from_slice(&[0.6, -1.0 / 3.0, 0.7]);
        let jet = m.jet(&x).unwrap();
        assert_relative_eq!(trace_dilation(&jet.jac).unwrap().powi(2), m.k_squared(), max_relative = 1e-13);
        let s = ahlfors(&distortion_tensor(&jet.jac).unwrap());
        assert!((s - m.ahlfors_closed_form(&x).unwrap()).max_abs() < 1e-13);
        // Reference values from an independent symbolic computation.
        let want = [103.158_701_743_891_3, -57.310_389_857_717_4, 120.351_818_701_206_5];
        let lp = lp_nondiv(&jet, 2.0).unwrap();
        let cf = m.lp_closed_form(&x, 2.0).unwrap();
        for i in 0..3 {
            assert_relative_eq!(lp[i], want[i], max_relative = 1e-12);
            assert_relative_eq!(cf[i], want[i], max_relative = 1e-12);
        }
        assert!(linfty_factored(&jet).unwrap().max_abs() < 1e-12);
        assert_eq!(m.jet(&Vector::zeros(3)).unwrap_err(), QcError::OriginExcluded);
    }

    #[test]
    fn radial_alpha_one_is_identity() {
        let m = RadialStretch::new(1.0, 3).unwrap();
        let jet = m.jet(&Vector::from_slice(&[0.3, 0.4, -1.2])).unwrap();
        assert!((jet.jac - SquareMatrix::identity(3)).max_abs() < 1e-15);
        assert_eq!(jet.hess.max_abs(), 0.0);
        assert_relative_eq!(trace_dilation(&jet.jac).unwrap(), 3f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn wedge_sector_invariants() {
        let m = WedgeMap::new(PI / 2.0, 3).unwrap();
        let x = Vector::from_slice(&[(PI / 4.0).cos(), (PI / 4.0).sin(), 0.3]);
        let jet = m.jet(&x).unwrap();
        assert_relative_eq!(jet.jac.det(), 2.0, max_relative = 1e-13);
        assert_relative_eq!(jet.jac.norm_sq(), 6.0, max_relative = 1e-13);
        let y = Vector::from_slice(&[-0.5, -0.7, 1.0]);
        let jet = m.jet(&y).unwrap();
        let k = 2.0 / 3.0;
        assert_relative_eq!(jet.jac.det(), k, max_relative = 1e-13);
        assert_relative_eq!(jet.jac.norm_sq(), 2.0 + k * k, max_relative = 1e-13);
        assert_eq!(m.jet(&Vector::from_slice(&[0.0, 0.0, 1.0])).unwrap_err(), QcError::AxisExcluded);
        assert_eq!(m.jet(&Vector::from_slice(&[1.0, 0.0, 0.0])).unwrap_err(), QcError::SeamExcluded);
        assert_eq!(m.jet(&Vector::from_slice(&[1e-9, 1.0, 0.0])).unwrap_err(), QcError::SeamExcluded);
    }

    #[test]
    fn wedge_with_straight_angle_is_identity() {
        let m = WedgeMap::new(PI, 2).unwrap();
        let x = Vector::from_slice(&[0.4, 0.9]);
        let jet = m.jet(&x).unwrap();
        assert!((jet.u - x).max_abs() < 1e-15);
        assert!((jet.jac - SquareMatrix::identity(2)).max_abs() < 1e-14);
        assert!(jet.hess.max_abs() < 1e-13);
    }

    #[test]
    fn analytic_jets_match_finite_differences() {
        let mut r = rng::seeded(17);
        let maps: Vec<Box<dyn SmoothMap>> = vec![
            Box::new(RadialStretch::new(2.0, 3).unwrap()),
            Box::new(RadialStretch::new(0.5, 2).unwrap()),
            Box::new(WedgeMap::new(PI / 2.0, 3).unwrap()),
            Box::new(WedgeMap::new(1.0, 2).unwrap()),
            Box::new(CubicMap::random(&mut r, 3, 0.2, 0.2)),
            Box::new(
                CompactBump::new(
                    Affine::identity(2),
                    Vector::from_slice(&[0.5, 0.5]),
                    0.35,
                    0.05,
                    Vector::from_slice(&[1.0, 1.0]),
                )
                .unwrap(),
            ),
        ];
        for m in &maps {
            for _ in 0..20 {
                let x = loop {
                    let x = rng::point_in_shell(&mut r, m.dim(), 0.5, 1.0) + Vector::from_fn(m.dim(), |_| 0.1);
                    let t = WedgeMap::angle(&x);
                    let planar = x[0].hypot(x[1]) > 0.3;
                    let clear = planar && [0.0, 1.0, PI / 2.0, 2.0 * PI].iter().all(|s| (t - s).abs() > 0.01);
                    if clear && m.jet(&x).is_ok() {
                        break x;
                    }
                };
                let (gj, gh) = fd_gap(m.as_ref(), &x, 1e-3);
                assert!(gj < 1e-5 && gh < 1e-4, "{} at {x:?}: {gj:e} {gh:e}", m.name());
                let (gj2, _) = fd_gap(m.as_ref(), &x, 5e-4);
                if gj > 1e-9 {
                    let ratio = gj / gj2;
                    assert!((3.0..5.0).contains(&ratio), "{} ratio {ratio}", m.name());
                }
            }
        }
    }

    #[test]
    fn bump_is_flat_outside_support() {
        let m = CompactBump::new(
            Affine::identity(2),
            Vector::from_slice(&[0.5, 0.5]),
            0.35,
            0.05,
            Vector::from_slice(&[1.0, 1.0]),
        )
        .unwrap();
        let x = Vector::from_slice(&[0.05, 0.1]);
        let jet = m.jet(&x).unwrap();
        assert_eq!(jet.u, x);
        assert_eq!(jet.hess.max_abs(), 0.0);
    }
}
