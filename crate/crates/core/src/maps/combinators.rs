use std::sync::Arc;

use super::{check_point, MapRef, SmoothMap};
use crate::error::{QcError, Result};
use crate::linalg::{Hessian, SquareMatrix, Vector};
use crate::operators::Jet2Sample;

/// Jets of `f ∘ g` from the jets of `f` (at `g(x)`) and of `g` (at `x`).
pub(super) fn chain_rule(fj: &SquareMatrix, fh: &Hessian, gj: &SquareMatrix, gh: &Hessian) -> (SquareMatrix, Hessian) {
    let n = fj.dim();
    let jac = *fj * *gj;
    let hess = Hessian::from_fn(n, |k, j, l| {
        let mut s = 0.0;
        for a in 0..n {
            s += fj[(k, a)] * gh.get(a, j, l);
            for b in 0..n {
                s += fh.get(k, a, b) * gj[(a, j)] * gj[(b, l)];
            }
        }
        s
    });
    (jac, hess)
}

/// `outer ∘ inner`.
pub struct Composed {
    outer: MapRef,
    inner: MapRef,
}

pub fn compose(outer: MapRef, inner: MapRef) -> MapRef {
    Arc::new(Composed { outer, inner })
}

impl SmoothMap for Composed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn name(&self) -> String {
        format!("{}∘{}", self.outer.name(), self.inner.name())
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        if self.outer.dim() != self.inner.dim() {
            return Err(QcError::Shape("composition of maps with different dimensions".into()));
        }
        let gi = self.inner.jet(x)?;
        let fo = self.outer.jet(&gi.u)?;
        let (jac, hess) = chain_rule(&fo.jac, &fo.hess, &gi.jac, &gi.hess);
        Ok(Jet2Sample::new(*x, fo.u, jac, hess))
    }
}

/// Angular bump `ψ(ω) = ((⟨ω, c⟩ − t₀)/(1 − t₀))⁴₊` on the unit sphere, paired
/// with the displacement direction `v`. Positive on the open cap
/// `⟨ω, c⟩ > t₀` and zero elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct SphereBump {
    pub center: Vector,
    pub t0: f64,
    pub v: Vector,
}

impl SphereBump {
    /// Cap of angular radius `width` around `center` (normalized here).
    pub fn new(center: Vector, width: f64, v: Vector) -> Self {
        SphereBump { center: center.normalized(), t0: width.cos(), v }
    }

    pub fn value_on_sphere(&self, omega: &Vector) -> f64 {
        let t = omega.dot(&self.center);
        if t > self.t0 {
            ((t - self.t0) / (1.0 - self.t0)).powi(4)
        } else {
            0.0
        }
    }

    /// `ψ(x/|x|)` with its Cartesian gradient and Hessian.
    fn extended(&self, x: &Vector, r: f64) -> (f64, Vector, SquareMatrix) {
        let n = x.dim();
        let w = x.scale(1.0 / r);
        let c = &self.center;
        let t = w.dot(c);
        if t <= self.t0 {
            return (0.0, Vector::zeros(n), SquareMatrix::zeros(n));
        }
        let span = 1.0 - self.t0;
        let s = (t - self.t0) / span;
        let (b, b1, b2) = (s.powi(4), 4.0 * s.powi(3) / span, 12.0 * s * s / (span * span));
        let tj = Vector::from_fn(n, |j| (c[j] - t * w[j]) / r);
        let tjl = SquareMatrix::from_fn(n, |j, l| {
            let d = if j == l { 1.0 } else { 0.0 };
            (-c[l] * w[j] - c[j] * w[l] + 3.0 * t * w[j] * w[l] - t * d) / (r * r)
        });
        (b, tj.scale(b1), tj.outer(&tj).scale(b2) + tjl.scale(b1))
    }
}

/// `u + λχ` with `χ(x) = (1 − |x|²) Σ_l ψ_l(x/|x|) v_l`; `χ` vanishes on the
/// unit sphere, where `dχ = −2 (Σ_l ψ_l v_l) ⊗ x`.
pub struct CompetitorPerturbation {
    base: MapRef,
    bumps: Vec<SphereBump>,
    lambda: f64,
}

impl CompetitorPerturbation {
    pub fn new(base: MapRef, bumps: Vec<SphereBump>, lambda: f64) -> Result<Self> {
        if bumps.iter().any(|b| b.center.dim() != base.dim() || b.v.dim() != base.dim()) {
            return Err(QcError::Shape("bump dimension".into()));
        }
        Ok(CompetitorPerturbation { base, bumps, lambda })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        CompetitorPerturbation { base: self.base.clone(), bumps: self.bumps.clone(), lambda }
    }

    /// Value, Jacobian and Hessian of `χ`.
    pub fn chi(&self, x: &Vector) -> Result<(Vector, SquareMatrix, Hessian)> {
        let n = x.dim();
        let r = x.norm();
        if r == 0.0 {
            return Err(QcError::OriginExcluded);
        }
        let s = 1.0 - r * r;
        let sj = x.scale(-2.0);
        let mut val = Vector::zeros(n);
        let mut jac = SquareMatrix::zeros(n);
        let mut hess = Hessian::zeros(n);
        for bump in &self.bumps {
            let (p, pj, pjl) = bump.extended(x, r);
            let phi_j = sj.scale(p) + pj.scale(s);
            let phi_jl = SquareMatrix::from_fn(n, |j, l| {
                let sjl = if j == l { -2.0 } else { 0.0 };
                sjl * p + sj[j] * pj[l] + sj[l] * pj[j] + s * pjl[(j, l)]
            });
            val += bump.v.scale(s * p);
            jac = jac + bump.v.outer(&phi_j);
            for k in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        hess.set(k, j, l, hess.get(k, j, l) + bump.v[k] * phi_jl[(j, l)]);
                    }
                }
            }
        }
        Ok((val, jac, hess))
    }
}

impl SmoothMap for CompetitorPerturbation {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn name(&self) -> String {
        format!("competitor({})", self.base.name())
    }

    fn params(&self) -> Vec<f64> {
        vec![self.lambda]
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        let b = self.base.jet(x)?;
        if self.lambda == 0.0 || self.bumps.is_empty() {
            return Ok(b);
        }
        let (v, j, h) = self.chi(x)?;
        let l = self.lambda;
        Ok(Jet2Sample::new(*x, b.u + v.scale(l), b.jac + j.scale(l), b.hess + h.scale(l)))
    }
}

/// Jets of a value function by central differences with step `h`
/// (default `1e-4·(1 + |x|)`); the Hessian is symmetrized.
pub struct FdMap<F> {
    f: F,
    n: usize,
    h: Option<f64>,
}

impl<F> FdMap<F>
where
    F: Fn(&Vector) -> Result<Vector> + Send + Sync,
{
    pub fn new(f: F, n: usize, h: Option<f64>) -> Self {
        FdMap { f, n, h }
    }
}

impl<F> SmoothMap for FdMap<F>
where
    F: Fn(&Vector) -> Result<Vector> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        "finite-difference".into()
    }

    fn value(&self, x: &Vector) -> Result<Vector> {
        (self.f)(x)
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        let n = self.n;
        check_point(n, x)?;
        let h = self.h.unwrap_or(1e-4 * (1.0 + x.norm()));
        let f = &self.f;
        let u0 = f(x)?;
        let e = |j: usize| Vector::basis(n, j).scale(h);
        let mut plus = Vec::with_capacity(n);
        let mut minus = Vec::with_capacity(n);
        for j in 0..n {
            plus.push(f(&(*x + e(j)))?);
            minus.push(f(&(*x - e(j)))?);
        }
        let jac = SquareMatrix::from_fn(n, |i, j| (plus[j][i] - minus[j][i]) / (2.0 * h));
        let mut hess = Hessian::zeros(n);
        for j in 0..n {
            for i in 0..n {
                hess.set(i, j, j, (plus[j][i] - 2.0 * u0[i] + minus[j][i]) / (h * h));
            }
            for l in 0..j {
                let pp = f(&(*x + e(j) + e(l)))?;
                let pm = f(&(*x + e(j) - e(l)))?;
                let mp = f(&(*x - e(j) + e(l)))?;
                let mm = f(&(*x - e(j) - e(l)))?;
                for i in 0..n {
                    let v = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h);
                    hess.set(i, j, l, v);
                    hess.set(i, l, j, v);
                }
            }
        }
        Ok(Jet2Sample::new(*x, u0, jac, hess))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::{ahlfors_flow_matrix, trace_dilation};
    use crate::maps::{Affine, ConformalMap, CubicMap, RadialStretch};
    use crate::operators::linfty_factored;
    use crate::rng;

    #[test]
    fn composing_with_identity_is_exact() {
        let u: MapRef = Arc::new(RadialStretch::new(2.0, 3).unwrap());
        let c = compose(Arc::new(Affine::identity(3)), u.clone());
        let x = Vector::from_slice(&[0.2, 0.5, -0.4]);
        assert_eq!(c.jet(&x).unwrap(), u.jet(&x).unwrap());
    }

    #[test]
    fn composition_matches_finite_differences() {
        let mut r = rng::seeded(6);
        let u: MapRef = Arc::new(CubicMap::random(&mut r, 3, 0.2, 0.2));
        let f: MapRef = Arc::new(
            ConformalMap::new(
                3,
                vec![
                    crate::maps::Moebius::Translation(Vector::from_slice(&[3.0, 0.0, 0.0])),
                    crate::maps::Moebius::Inversion,
                ],
            )
            .unwrap(),
        );
        let c = compose(f, u);
        for _ in 0..20 {
            let x = rng::point_in_shell(&mut r, 3, 0.0, 0.8);
            let jet = c.jet(&x).unwrap();
            let fd = FdMap::new(|y: &Vector| c.value(y), 3, Some(1e-4)).jet(&x).unwrap();
            assert!((fd.jac - jet.jac).max_abs() < 1e-7);
            assert!((fd.hess + jet.hess.scale(-1.0)).max_abs() < 1e-5);
        }
    }

    #[test]
    fn post_composition_with_conformal_preserves_solutions() {
        let u: MapRef = Arc::new(RadialStretch::new(3.0, 3).unwrap());
        let f: MapRef = Arc::new(
            ConformalMap::new(
                3,
                vec![
                    crate::maps::Moebius::Dilation(1.5),
                    crate::maps::Moebius::Translation(Vector::from_slice(&[0.0, 4.0, 0.0])),
                    crate::maps::Moebius::Inversion,
                ],
            )
            .unwrap(),
        );
        let c = compose(f, u.clone());
        let mut r = rng::seeded(1);
        for _ in 0..50 {
            let x = rng::point_in_shell(&mut r, 3, 0.5, 1.0);
            let jet = c.jet(&x).unwrap();
            let k = trace_dilation(&jet.jac).unwrap();
            let k0 = trace_dilation(&u.jet(&x).unwrap().jac).unwrap();
            assert!((k - k0).abs() <= 1e-12 * k0);
            let l = linfty_factored(&jet).unwrap();
            let scale = jet.jac.norm_sq().powi(2) * jet.hess.max_abs();
            assert!(l.max_abs() <= 1e-7 * scale);
        }
    }

    #[test]
    fn competitor_boundary_behaviour() {
        let base: MapRef = Arc::new(Affine::new(SquareMatrix::diag(&[2.0, 1.0, 1.0]), Vector::zeros(3)).unwrap());
        let bumps = vec![
            SphereBump::new(Vector::from_slice(&[1.0, 0.2, 0.0]), 0.8, Vector::from_slice(&[0.0, 1.0, 0.0])),
            SphereBump::new(Vector::from_slice(&[0.0, 0.0, 1.0]), 0.5, Vector::from_slice(&[1.0, 0.0, 1.0])),
        ];
        let comp = CompetitorPerturbation::new(base.clone(), bumps.clone(), 0.1).unwrap();
        let mut r = rng::seeded(3);
        for _ in 0..100 {
            let w = rng::unit_vector(&mut r, 3);
            assert!((comp.value(&w).unwrap() - base.value(&w).unwrap()).max_abs() <= 1e-12);
            let (_, dchi, _) = comp.chi(&w).unwrap();
            let mut sum = Vector::zeros(3);
            for b in &bumps {
                sum += b.v.scale(b.value_on_sphere(&w));
            }
            assert!((dchi - sum.outer(&w).scale(-2.0)).max_abs() <= 1e-12);
        }
        let x = Vector::from_slice(&[0.3, 0.1, 0.2]);
        assert_eq!(comp.with_lambda(0.0).jet(&x).unwrap(), base.jet(&x).unwrap());
        let fd = FdMap::new(|y: &Vector| comp.value(y), 3, Some(1e-4)).jet(&x).unwrap();
        let jet = comp.jet(&x).unwrap();
        assert!((fd.jac - jet.jac).max_abs() < 1e-7);
        assert!((fd.hess + jet.hess.scale(-1.0)).max_abs() < 1e-5);
    }

    #[test]
    fn competitor_first_order_dilation_change() {
        let mut r = rng::seeded(10);
        let base: MapRef = Arc::new(CubicMap::random(&mut r, 3, 0.1, 0.1));
        let bumps =
            vec![SphereBump::new(Vector::from_slice(&[1.0, 1.0, 0.0]), 0.7, Vector::from_slice(&[0.3, -1.0, 0.5]))];
        let comp = CompetitorPerturbation::new(base.clone(), bumps, 0.0).unwrap();
        let w = Vector::from_slice(&[1.0, 0.8, 0.1]).normalized();
        let b = base.jet(&w).unwrap();
        let k = trace_dilation(&b.jac).unwrap();
        let (_, dchi, _) = comp.chi(&w).unwrap();
        let predicted = ahlfors_flow_matrix(&b.jac).unwrap().frobenius(&dchi) / k;
        let err = |lam: f64| {
            let kl = trace_dilation(&comp.with_lambda(lam).jet(&w).unwrap().jac).unwrap();
            (kl - k - lam * predicted).abs()
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn fd_map_on_affine_is_exact() {
        let a = SquareMatrix::from_rows(&[&[1.0, 2.0], &[-0.5, 3.0]]).unwrap();
        let fd = FdMap::new(move |x: &Vector| Ok(a.mul_vec(x)), 2, None);
        let jet = fd.jet(&Vector::from_slice(&[0.4, -2.0])).unwrap();
        assert!((jet.jac - a).max_abs() < 1e-10);
        assert!(jet.hess.max_abs() < 1e-6);
    }
}
