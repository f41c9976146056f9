//! Small dense linear algebra for dimensions 2 through 4.
//!
//! Everything here is stack allocated and `Copy`. Storage is a fixed
//! `MAX_DIM`-sized array; only the leading `n` entries are meaningful.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Serialize, Serializer};

use crate::error::{QcError, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 4;

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(QcError::UnsupportedDimension(n))
    }
}

/// A point or vector in R^n.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    n: usize,
    c: [f64; MAX_DIM],
}

impl Vector {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_DIM, "dimension {n} exceeds {MAX_DIM}");
        Vector { n, c: [0.0; MAX_DIM] }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut v = Vector::zeros(s.len());
        v.c[..s.len()].copy_from_slice(s);
        v
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        let mut v = Vector::zeros(n);
        for i in 0..n {
            v.c[i] = f(i);
        }
        v
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Vector::zeros(n);
        v.c[i] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.n]
    }

    pub fn dot(&self, o: &Vector) -> f64 {
        debug_assert_eq!(self.n, o.n);
        (0..self.n).map(|i| self.c[i] * o.c[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector::from_fn(self.n, |i| self.c[i] * s)
    }

    pub fn normalized(&self) -> Vector {
        self.scale(1.0 / self.norm())
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// Outer product `self ⊗ o`, entries `self_i o_j`.
    pub fn outer(&self, o: &Vector) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.c[i] * o.c[j])
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.n);
        &self.c[i]
    }
}

impl IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.n);
        &mut self.c[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(self, o: Vector) -> Vector {
        Vector::from_fn(self.n, |i| self.c[i] + o.c[i])
    }
}

impl AddAssign for Vector {
    fn add_assign(&mut self, o: Vector) {
        for i in 0..self.n {
            self.c[i] += o.c[i];
        }
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(self, o: Vector) -> Vector {
        Vector::from_fn(self.n, |i| self.c[i] - o.c[i])
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    fn mul(self, v: Vector) -> Vector {
        v.scale(self)
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Serialize for Vector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

/// Dense n×n real matrix. Entry `(i, j)` is row `i`, column `j`; as a Jacobian
/// that is `∂_j u^i`.
#[derive(Clone, Copy, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_DIM, "dimension {n} exceeds {MAX_DIM}");
        SquareMatrix { n, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(d: &[f64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut a = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                a.m[i][j] = f(i, j);
            }
        }
        a
    }

    /// Checked constructor from row slices. Rejects ragged input, dimensions
    /// outside 2..=4 and non-finite entries.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        check_dim(n)?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(QcError::Shape(format!("expected {n} columns in every row")));
        }
        let a = Self::from_fn(n, |i, j| rows[i][j]);
        if !a.is_finite() {
            return Err(QcError::NonFinite("matrix entry"));
        }
        Ok(a)
    }

    /// Row-major flat constructor; `data.len()` must be a perfect square.
    pub fn from_row_major(data: &[f64]) -> Result<Self> {
        let n = (data.len() as f64).sqrt().round() as usize;
        if n * n != data.len() {
            return Err(QcError::Shape(format!("{} entries is not a square matrix", data.len())));
        }
        check_dim(n)?;
        let a = Self::from_fn(n, |i, j| data[i * n + j]);
        if !a.is_finite() {
            return Err(QcError::NonFinite("matrix entry"));
        }
        Ok(a)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> Vector {
        Vector::from_fn(self.n, |j| self.m[i][j])
    }

    pub fn col(&self, j: usize) -> Vector {
        Vector::from_fn(self.n, |i| self.m[i][j])
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.m[i][..self.n].to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.m[j][i])
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.m[i][i]).sum()
    }

    /// Sum of squared entries.
    pub fn norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.m[i][j] * self.m[i][j];
            }
        }
        s
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(self.n, |i, j| self.m[i][j] * s)
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        Vector::from_fn(self.n, |i| (0..self.n).map(|j| self.m[i][j] * v[j]).sum())
    }

    /// Frobenius inner product `Σ a_ij b_ij`.
    pub fn frobenius(&self, o: &SquareMatrix) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.m[i][j] * o.m[i][j];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        let mut s = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                s = s.max(self.m[i][j].abs());
            }
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        (0..self.n).all(|i| self.m[i][..self.n].iter().all(|v| v.is_finite()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = 1.0 + self.max_abs();
        (0..self.n).all(|i| (0..i).all(|j| (self.m[i][j] - self.m[j][i]).abs() <= tol * scale))
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        match n {
            2 => self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0],
            3 => {
                let a = &self.m;
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
            _ => {
                let mut a = self.m;
                let mut det = 1.0;
                for k in 0..n {
                    let p = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap_or(k);
                    if a[p][k] == 0.0 {
                        return 0.0;
                    }
                    if p != k {
                        a.swap(p, k);
                        det = -det;
                    }
                    det *= a[k][k];
                    for r in k + 1..n {
                        let f = a[r][k] / a[k][k];
                        for c in k..n {
                            a[r][c] -= f * a[k][c];
                        }
                    }
                }
                det
            }
        }
    }

    /// Determinant of the submatrix with row `r` and column `c` removed.
    fn minor_det(&self, r: usize, c: usize) -> f64 {
        let n = self.n;
        let mut sub = SquareMatrix::zeros(n - 1);
        for (ii, i) in (0..n).filter(|&i| i != r).enumerate() {
            for (jj, j) in (0..n).filter(|&j| j != c).enumerate() {
                sub.m[ii][jj] = self.m[i][j];
            }
        }
        match n - 1 {
            1 => sub.m[0][0],
            _ => sub.det(),
        }
    }

    /// Cofactor matrix, `cof(M)^T M = det(M) I`. Defined for singular input.
    pub fn cofactor(&self) -> Self {
        let n = self.n;
        let a = &self.m;
        match n {
            2 => Self::from_fn(2, |i, j| {
                let v = a[1 - i][1 - j];
                if (i + j) % 2 == 0 {
                    v
                } else {
                    -v
                }
            }),
            3 => Self::from_fn(3, |i, j| {
                let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]
            }),
            _ => Self::from_fn(n, |i, j| {
                let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                s * self.minor_det(i, j)
            }),
        }
    }

    /// Inverse via the adjugate; errors on a (numerically) zero determinant.
    pub fn inverse(&self) -> Result<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(QcError::Singular);
        }
        Ok(self.cofactor().transpose().scale(1.0 / d))
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n && j < self.n);
        &self.m[i][j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.m[i][j]
    }
}

impl Mul for SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, o: SquareMatrix) -> SquareMatrix {
        debug_assert_eq!(self.n, o.n);
        SquareMatrix::from_fn(self.n, |i, j| (0..self.n).map(|k| self.m[i][k] * o.m[k][j]).sum())
    }
}

impl Add for SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, o: SquareMatrix) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.m[i][j] + o.m[i][j])
    }
}

impl Sub for SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, o: SquareMatrix) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.m[i][j] - o.m[i][j])
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl Serialize for SquareMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

/// Second derivatives of a vector valued map: `get(k, j, l) = ∂_j ∂_l u^k`.
#[derive(Clone, Copy, PartialEq)]
pub struct Hessian {
    n: usize,
    h: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
}

impl Hessian {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_DIM);
        Hessian { n, h: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut h = Hessian::zeros(n);
        for k in 0..n {
            for j in 0..n {
                for l in 0..n {
                    h.h[k][j][l] = f(k, j, l);
                }
            }
        }
        h
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize, l: usize) -> f64 {
        self.h[k][j][l]
    }

    #[inline]
    pub fn set(&mut self, k: usize, j: usize, l: usize, v: f64) {
        self.h[k][j][l] = v;
    }

    /// Hessian matrix of component `k`.
    pub fn component(&self, k: usize) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |j, l| self.h[k][j][l])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(self.n, |k, j, l| self.h[k][j][l] * s)
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for k in 0..self.n {
            for j in 0..self.n {
                for l in 0..self.n {
                    m = m.max(self.h[k][j][l].abs());
                }
            }
        }
        m
    }

    /// Largest asymmetry `|h_kjl - h_klj|`.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0_f64;
        for k in 0..self.n {
            for j in 0..self.n {
                for l in 0..j {
                    m = m.max((self.h[k][j][l] - self.h[k][l][j]).abs());
                }
            }
        }
        m
    }

    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.n, |k, j, l| 0.5 * (self.h[k][j][l] + self.h[k][l][j]))
    }

    /// Derivative of the Jacobian along `v`: `(Σ_l ∂_j∂_l u^k v_l)_{kj}`.
    pub fn along(&self, v: &Vector) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |k, j| (0..self.n).map(|l| self.h[k][j][l] * v[l]).sum())
    }
}

impl Add for Hessian {
    type Output = Hessian;
    fn add(self, o: Hessian) -> Hessian {
        Hessian::from_fn(self.n, |k, j, l| self.h[k][j][l] + o.h[k][j][l])
    }
}

impl fmt::Debug for Hessian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let comps: Vec<_> = (0..self.n).map(|k| self.component(k)).collect();
        f.debug_list().entries(comps).finish()
    }
}

/// Orthonormalize `vs` with modified Gram–Schmidt followed by one
/// re-orthogonalization pass. Returns `None` if a vector is dependent on its
/// predecessors to within `tol` (relative to its own length).
pub fn gram_schmidt(vs: &[Vector], tol: f64) -> Option<Vec<Vector>> {
    let mut out: Vec<Vector> = Vec::with_capacity(vs.len());
    for v in vs {
        let len0 = v.norm();
        if len0 == 0.0 {
            return None;
        }
        let mut w = *v;
        for _pass in 0..2 {
            for q in &out {
                let c = w.dot(q);
                w = w - q.scale(c);
            }
        }
        let len = w.norm();
        if len <= tol * len0 {
            return None;
        }
        out.push(w.scale(1.0 / len));
    }
    Some(out)
}

/// Completes a unit vector to a positively oriented orthonormal basis
/// `[v, e_1, .., e_{n-1}]`.
pub fn complete_basis(v: &Vector) -> Vec<Vector> {
    let n = v.dim();
    let v = v.normalized();
    // Seed with the standard basis vectors least aligned with v.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()));
    let mut seeds = vec![v];
    seeds.extend(idx.into_iter().take(n - 1).map(|i| Vector::basis(n, i)));
    let mut basis = gram_schmidt(&seeds, 1e-10).expect("standard basis completes any unit vector");
    let frame = SquareMatrix::from_fn(n, |i, j| basis[j][i]);
    if frame.det() < 0.0 {
        let last = basis.len() - 1;
        basis[last] = -basis[last];
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Leibniz permutation-sum determinant; independent of the elimination path.
    fn leibniz(a: &SquareMatrix) -> f64 {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for pos in 0..n {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        let n = a.dim();
        perms(n)
            .into_iter()
            .map(|p| {
                let mut inv = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if p[i] > p[j] {
                            inv += 1;
                        }
                    }
                }
                let sign = if inv % 2 == 0 { 1.0 } else { -1.0 };
                sign * (0..n).map(|i| a[(i, p[i])]).product::<f64>()
            })
            .sum()
    }

    fn oracle_cofactor(a: &SquareMatrix) -> SquareMatrix {
        let n = a.dim();
        SquareMatrix::from_fn(n, |i, j| {
            if n == 2 {
                let v = a[(1 - i, 1 - j)];
                return if (i + j) % 2 == 0 { v } else { -v };
            }
            let rows: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
            let sub = SquareMatrix::from_fn(n - 1, |r, c| a[(rows[r], cols[c])]);
            let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            s * leibniz(&sub)
        })
    }

    fn sample(n: usize, seed: u64) -> SquareMatrix {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        SquareMatrix::from_fn(n, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 2001) as f64 / 1000.0 - 1.0
        })
    }

    #[test]
    fn det_and_cofactor_match_permutation_oracle() {
        for n in 2..=4 {
            for seed in 0..50 {
                let a = sample(n, seed + 17 * n as u64);
                assert_relative_eq!(a.det(), leibniz(&a), epsilon = 1e-12, max_relative = 1e-12);
                let c = a.cofactor();
                let o = oracle_cofactor(&a);
                assert!((c - o).max_abs() <= 1e-12 * (1.0 + o.max_abs()));
                let lhs = c.transpose() * a;
                let rhs = SquareMatrix::identity(n).scale(a.det());
                assert!((lhs - rhs).max_abs() <= 1e-12 * (1.0 + a.norm_sq()));
            }
        }
    }

    #[test]
    fn cofactor_trivial_cases() {
        for n in 2..=4 {
            assert_eq!(SquareMatrix::identity(n).cofactor(), SquareMatrix::identity(n));
        }
        let c = SquareMatrix::diag(&[3.0, 5.0]).cofactor();
        assert_eq!(c, SquareMatrix::diag(&[5.0, 3.0]));
        // Singular input is fine.
        let s = SquareMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[0.0, 1.0, 1.0]]).unwrap();
        let lhs = s.cofactor().transpose() * s;
        assert!(lhs.max_abs() < 1e-12);
    }

    #[test]
    fn inverse_roundtrip_and_singular() {
        let a = sample(3, 4);
        let inv = a.inverse().unwrap();
        assert!((inv * a - SquareMatrix::identity(3)).max_abs() < 1e-10);
        assert!(matches!(SquareMatrix::zeros(2).inverse(), Err(QcError::Singular)));
    }

    #[test]
    fn checked_constructors() {
        assert!(matches!(SquareMatrix::from_rows(&[&[1.0]]), Err(QcError::UnsupportedDimension(1))));
        assert!(SquareMatrix::from_rows(&[&[1.0, 2.0], &[1.0]]).is_err());
        assert!(SquareMatrix::from_rows(&[&[f64::NAN, 0.0], &[0.0, 1.0]]).is_err());
        assert!(SquareMatrix::from_row_major(&[1.0, 0.0, 0.0]).is_err());
        let a = SquareMatrix::from_row_major(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a[(1, 0)], 3.0);
    }

    #[test]
    fn gram_schmidt_detects_dependence() {
        let a = Vector::from_slice(&[1.0, 0.0, 0.0]);
        let b = Vector::from_slice(&[2.0, 1e-14, 0.0]);
        assert!(gram_schmidt(&[a, b], 1e-10).is_none());
        let q = gram_schmidt(&[a, Vector::from_slice(&[1.0, 1.0, 0.0])], 1e-10).unwrap();
        assert!(q[0].dot(&q[1]).abs() < 1e-15);
    }

    #[test]
    fn completed_basis_is_oriented() {
        for v in [[0.0, 0.0, 1.0], [0.3, -0.4, 0.5], [-1.0, 0.0, 0.0]] {
            let b = complete_basis(&Vector::from_slice(&v));
            let f = SquareMatrix::from_fn(3, |i, j| b[j][i]);
            assert_relative_eq!(f.det(), 1.0, epsilon = 1e-12);
            assert!((f.transpose() * f - SquareMatrix::identity(3)).max_abs() < 1e-12);
        }
    }
}
