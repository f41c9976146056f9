//! Smooth maps with exact second-order jets, plus a finite-difference sampler
//! for arbitrary value functions and a string-keyed registry.

mod combinators;
mod elementary;
mod moebius;

use std::sync::Arc;

pub use combinators::{compose, CompetitorPerturbation, Composed, FdMap, SphereBump};
pub use elementary::{Affine, CompactBump, CubicMap, RadialStretch, WedgeMap, WEDGE_SEAM_BAND};
pub use moebius::{ConformalMap, Moebius};

use crate::error::{QcError, Result};
use crate::linalg::{check_dim, SquareMatrix, Vector};
use crate::operators::Jet2Sample;

/// A map `u: Ω ⊂ Rⁿ → Rⁿ` that can be sampled to second order.
///
/// `jet` fails with a domain error (`OriginExcluded`, `AxisExcluded`,
/// `SeamExcluded`, `GuardViolation`) outside the region where the map is
/// smooth.
pub trait SmoothMap: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    fn params(&self) -> Vec<f64> {
        Vec::new()
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample>;

    fn value(&self, x: &Vector) -> Result<Vector> {
        Ok(self.jet(x)?.u)
    }
}

pub type MapRef = Arc<dyn SmoothMap>;

pub(crate) fn check_point(n: usize, x: &Vector) -> Result<()> {
    if x.dim() != n {
        return Err(QcError::Shape(format!("point has dimension {}, map expects {n}", x.dim())));
    }
    if !x.is_finite() {
        return Err(QcError::NonFinite("sample point"));
    }
    Ok(())
}

/// Ids accepted by [`build_map`].
pub const REGISTRY_IDS: [&str; 8] =
    ["identity", "affine", "radial", "wedge", "inversion", "teichmuller", "cubic", "bump"];

/// Builds a map from a registry id and a flat parameter list.
///
/// | id | params |
/// |----|--------|
/// | `identity` | none |
/// | `affine` | `n²` matrix entries (row major), optionally followed by `n` offsets |
/// | `radial` | `[alpha]` |
/// | `wedge` | `[alpha]` |
/// | `inversion` | none (reflected inversion, orientation preserving) |
/// | `teichmuller` | `[stretch]`, default 2 |
/// | `cubic` | `[eps, seed]`, defaults `0.1, 0` |
/// | `bump` | `[amp, radius, c_1..c_n]`, defaults `0.05, 0.35, (0.5, ..)` |
pub fn build_map(id: &str, n: usize, params: &[f64]) -> Result<MapRef> {
    check_dim(n)?;
    let want = |k: usize| -> Result<()> {
        if params.len() == k {
            Ok(())
        } else {
            Err(QcError::InvalidParameter(format!("map `{id}` takes {k} parameters, got {}", params.len())))
        }
    };
    let m: MapRef = match id {
        "identity" => {
            want(0)?;
            Arc::new(Affine::identity(n))
        }
        "affine" => {
            let a = SquareMatrix::from_row_major(params.get(..n * n).unwrap_or(params))?;
            if a.dim() != n {
                return Err(QcError::InvalidParameter(format!("affine needs {} matrix entries", n * n)));
            }
            let b = match params.len() - n * n {
                0 => Vector::zeros(n),
                k if k == n => Vector::from_slice(&params[n * n..]),
                _ => return Err(QcError::InvalidParameter("affine offset must have n entries".into())),
            };
            Arc::new(Affine::new(a, b)?)
        }
        "radial" => {
            want(1)?;
            Arc::new(RadialStretch::new(params[0], n)?)
        }
        "wedge" => {
            want(1)?;
            Arc::new(WedgeMap::new(params[0], n)?)
        }
        "inversion" => {
            want(0)?;
            Arc::new(ConformalMap::new(n, vec![Moebius::Inversion])?)
        }
        "teichmuller" => {
            let a = match params {
                [] => 2.0,
                [a] => *a,
                _ => return Err(QcError::InvalidParameter("teichmuller takes [stretch]".into())),
            };
            teichmuller(n, a)?
        }
        "cubic" => {
            let (eps, seed) = match params {
                [] => (0.1, 0),
                [e] => (*e, 0),
                [e, s] if *s >= 0.0 && s.fract() == 0.0 => (*e, *s as u64),
                _ => return Err(QcError::InvalidParameter("cubic takes [eps, seed]".into())),
            };
            let mut r = crate::rng::seeded(seed);
            Arc::new(CubicMap::random(&mut r, n, eps, eps))
        }
        "bump" => {
            let (amp, radius, center) = match params.len() {
                0 => (0.05, 0.35, Vector::from_fn(n, |_| 0.5)),
                2 => (params[0], params[1], Vector::from_fn(n, |_| 0.5)),
                k if k == n + 2 => (params[0], params[1], Vector::from_slice(&params[2..])),
                _ => return Err(QcError::InvalidParameter("bump takes [amp, radius, c_1..c_n]".into())),
            };
            let dir = Vector::from_fn(n, |_| 1.0);
            Arc::new(CompactBump::new(Affine::identity(n), center, radius, amp, dir)?)
        }
        _ => return Err(QcError::UnknownMap(id.to_string())),
    };
    Ok(m)
}

/// `ψ ∘ A ∘ φ⁻¹` with `ψ = φ = ι ∘ τ`, where `ι` is the reflected inversion,
/// `τ` the translation by `2e₁`, and `A = diag(stretch, 1, ..)`. Well defined
/// on the ball `|x| < 1`; the trace dilation is the constant `K_A`.
pub fn teichmuller(n: usize, stretch: f64) -> Result<MapRef> {
    if !(stretch > 0.0 && stretch.is_finite()) {
        return Err(QcError::InvalidParameter(format!("stretch {stretch} must be positive")));
    }
    let shift = Vector::basis(n, 0).scale(2.0);
    let phi_inv = ConformalMap::new(n, vec![Moebius::Translation(shift), Moebius::Inversion])?;
    let mut d = vec![1.0; n];
    d[0] = stretch;
    let a = Affine::new(SquareMatrix::diag(&d), Vector::zeros(n))?;
    let psi = ConformalMap::new(n, vec![Moebius::Translation(shift), Moebius::Inversion])?;
    Ok(compose(Arc::new(psi), compose(Arc::new(a), Arc::new(phi_inv))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::trace_dilation;
    use crate::operators::linfty_factored;
    use crate::rng;

    #[test]
    fn registry_builds_every_id() {
        for id in REGISTRY_IDS {
            for n in [2, 3] {
                let params: Vec<f64> = match id {
                    "affine" => SquareMatrix::identity(n).to_rows().concat(),
                    "radial" => vec![2.0],
                    "wedge" => vec![std::f64::consts::FRAC_PI_2],
                    _ => vec![],
                };
                let m = build_map(id, n, &params).unwrap();
                assert_eq!(m.dim(), n);
                let x = Vector::from_fn(n, |i| 0.3 + 0.1 * i as f64);
                m.jet(&x).unwrap();
            }
        }
        assert!(matches!(build_map("nope", 2, &[]), Err(QcError::UnknownMap(_))));
        assert!(matches!(build_map("radial", 3, &[]), Err(QcError::InvalidParameter(_))));
        assert!(matches!(build_map("radial", 7, &[1.0]), Err(QcError::UnsupportedDimension(7))));
    }

    #[test]
    fn teichmuller_has_constant_dilation_and_solves_linfty() {
        for n in [2, 3] {
            let m = teichmuller(n, 2.0).unwrap();
            let mut d = vec![1.0; n];
            d[0] = 2.0;
            let k0 = trace_dilation(&SquareMatrix::diag(&d)).unwrap();
            let mut r = rng::seeded(4);
            for _ in 0..50 {
                let x = rng::point_in_shell(&mut r, n, 0.0, 0.95);
                let jet = m.jet(&x).unwrap();
                assert!((trace_dilation(&jet.jac).unwrap() - k0).abs() < 1e-12);
                let l = linfty_factored(&jet).unwrap();
                let scale = jet.jac.norm_sq().powi(2) * jet.hess.max_abs();
                assert!(l.max_abs() <= 1e-7 * scale.max(1.0), "{l:?}");
            }
        }
    }
}
