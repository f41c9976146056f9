use rand::Rng;

use super::combinators::chain_rule;
use super::{check_point, SmoothMap};
use crate::error::{QcError, Result};
use crate::linalg::{check_dim, Hessian, SquareMatrix, Vector};
use crate::operators::Jet2Sample;
use crate::rng;

/// Generators of the orientation preserving Möbius group.
#[derive(Debug, Clone, PartialEq)]
pub enum Moebius {
    /// `x ↦ R x` with `R` orthogonal, `det R = 1`.
    Rotation(SquareMatrix),
    /// `x ↦ s x`, `s > 0`.
    Dilation(f64),
    Translation(Vector),
    /// `x ↦ P x/|x|²` with `P = diag(−1, 1, …, 1)`. The reflection keeps the
    /// map orientation preserving.
    Inversion,
}

impl Moebius {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Moebius::Rotation(r) => {
                if r.dim() != n {
                    return Err(QcError::Shape("rotation dimension".into()));
                }
                let defect = (r.transpose() * *r - SquareMatrix::identity(n)).max_abs();
                if defect > 1e-10 || r.det() <= 0.0 {
                    return Err(QcError::InvalidParameter("rotation must be orthogonal with det 1".into()));
                }
            }
            Moebius::Dilation(s) if !(*s > 0.0 && s.is_finite()) => {
                return Err(QcError::InvalidParameter(format!("dilation factor {s} must be positive")));
            }
            Moebius::Translation(b) if b.dim() != n => {
                return Err(QcError::Shape("translation dimension".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Value, Jacobian and Hessian at `y`.
    fn jet(&self, y: &Vector) -> Result<(Vector, SquareMatrix, Hessian)> {
        let n = y.dim();
        Ok(match self {
            Moebius::Rotation(r) => (r.mul_vec(y), *r, Hessian::zeros(n)),
            Moebius::Dilation(s) => (y.scale(*s), SquareMatrix::identity(n).scale(*s), Hessian::zeros(n)),
            Moebius::Translation(b) => (*y + *b, SquareMatrix::identity(n), Hessian::zeros(n)),
            Moebius::Inversion => {
                let r2 = y.norm_sq();
                if r2 == 0.0 {
                    return Err(QcError::OriginExcluded);
                }
                let r4 = r2 * r2;
                let sign = |i: usize| if i == 0 { -1.0 } else { 1.0 };
                let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                let v = Vector::from_fn(n, |i| sign(i) * y[i] / r2);
                let jac = SquareMatrix::from_fn(n, |i, j| sign(i) * (d(i, j) / r2 - 2.0 * y[i] * y[j] / r4));
                let hess = Hessian::from_fn(n, |i, j, l| {
                    sign(i)
                        * (-2.0 * (d(i, j) * y[l] + d(i, l) * y[j] + d(j, l) * y[i]) / r4
                            + 8.0 * y[i] * y[j] * y[l] / (r4 * r2))
                });
                (v, jac, hess)
            }
        })
    }

    pub fn random(r: &mut impl Rng, n: usize) -> Moebius {
        match r.random_range(0..4) {
            0 => Moebius::Rotation(rng::rotation(r, n)),
            1 => Moebius::Dilation(rng::uniform(r, 0.5, 2.0)),
            2 => Moebius::Translation(rng::gaussian_vector(r, n).scale(0.5)),
            _ => Moebius::Inversion,
        }
    }
}

/// Composition of Möbius generators, applied in order: `word[0]` acts first.
#[derive(Debug, Clone)]
pub struct ConformalMap {
    n: usize,
    word: Vec<Moebius>,
}

impl ConformalMap {
    pub fn new(n: usize, word: Vec<Moebius>) -> Result<Self> {
        check_dim(n)?;
        for g in &word {
            g.validate(n)?;
        }
        Ok(ConformalMap { n, word })
    }

    /// Random word with between one and `max_len` generators.
    pub fn random(r: &mut impl Rng, n: usize, max_len: usize) -> Self {
        let len = r.random_range(1..=max_len.max(1));
        let word = (0..len).map(|_| Moebius::random(r, n)).collect();
        ConformalMap { n, word }
    }

    pub fn word(&self) -> &[Moebius] {
        &self.word
    }

    /// `λ(x)` with `dFᵀ dF = λ I`, i.e. `|dF|²/n`.
    pub fn conformal_factor(&self, x: &Vector) -> Result<f64> {
        Ok(self.jet(x)?.jac.norm_sq() / self.n as f64)
    }
}

impl SmoothMap for ConformalMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        match self.word.as_slice() {
            [Moebius::Inversion] => "inversion".into(),
            _ => "moebius".into(),
        }
    }

    fn jet(&self, x: &Vector) -> Result<Jet2Sample> {
        check_point(self.n, x)?;
        let mut u = *x;
        let mut jac = SquareMatrix::identity(self.n);
        let mut hess = Hessian::zeros(self.n);
        for g in &self.word {
            let (v, gj, gh) = g.jet(&u)?;
            (jac, hess) = chain_rule(&gj, &gh, &jac, &hess);
            u = v;
        }
        Ok(Jet2Sample::new(*x, u, jac, hess))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::{analyze, trace_dilation};
    use crate::maps::FdMap;
    use approx::assert_relative_eq;

    #[test]
    fn inversion_at_e1() {
        let f = ConformalMap::new(3, vec![Moebius::Inversion]).unwrap();
        let jet = f.jet(&Vector::basis(3, 0)).unwrap();
        let rep = analyze(&jet.jac, 1e-12).unwrap();
        assert_relative_eq!(rep.k, 3f64.sqrt(), max_relative = 1e-15);
        assert!(rep.sg_norm_sq < 1e-28);
        assert!(jet.jac.det() > 0.0);
        assert_eq!(f.jet(&Vector::zeros(3)).unwrap_err(), QcError::OriginExcluded);
    }

    #[test]
    fn conformal_factors_of_generators() {
        let x = Vector::from_slice(&[0.3, -0.2, 0.9]);
        let d = ConformalMap::new(3, vec![Moebius::Dilation(2.5)]).unwrap();
        assert_relative_eq!(d.conformal_factor(&x).unwrap(), 6.25, max_relative = 1e-15);
        let mut r = rng::seeded(2);
        let rot = ConformalMap::new(3, vec![Moebius::Rotation(rng::rotation(&mut r, 3))]).unwrap();
        assert_relative_eq!(rot.conformal_factor(&x).unwrap(), 1.0, max_relative = 1e-14);
        assert!(ConformalMap::new(3, vec![Moebius::Dilation(-1.0)]).is_err());
        assert!(ConformalMap::new(3, vec![Moebius::Rotation(SquareMatrix::diag(&[-1.0, 1.0, 1.0]))]).is_err());
    }

    #[test]
    fn random_words_are_conformal_with_correct_jets() {
        let mut r = rng::seeded(12);
        for n in [2, 3] {
            for _ in 0..100 {
                let f = ConformalMap::random(&mut r, n, 3);
                let x = rng::point_in_shell(&mut r, n, 0.5, 1.5);
                let Ok(jet) = f.jet(&x) else { continue };
                let lam = f.conformal_factor(&x).unwrap();
                let gram = jet.jac.transpose() * jet.jac;
                assert!((gram - SquareMatrix::identity(n).scale(lam)).max_abs() <= 1e-12 * lam);
                assert_relative_eq!(trace_dilation(&jet.jac).unwrap(), (n as f64).sqrt(), max_relative = 1e-12);
                let h = 1e-4 * (1.0 + x.norm());
                let fd = FdMap::new(|y: &Vector| f.value(y), n, Some(h));
                let Ok(fj) = fd.jet(&x) else { continue };
                let scale = 1.0 + jet.jac.max_abs() + jet.hess.max_abs();
                assert!((fj.jac - jet.jac).max_abs() <= 1e-5 * scale);
                assert!((fj.hess + jet.hess.scale(-1.0)).max_abs() <= 1e-3 * scale);
            }
        }
    }
}
