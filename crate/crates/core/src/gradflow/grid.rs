use crate::error::{QcError, Result};
use crate::linalg::{Hessian, SquareMatrix, Vector};
use crate::maps::SmoothMap;
use crate::par::{self, Execution};

/// One-dimensional difference stencil: offsets and weights (unscaled by `h`).
#[derive(Clone, Copy)]
struct Stencil {
    off: [isize; 4],
    w: [f64; 4],
    len: usize,
}

/// First derivative: central in the interior, one-sided second order at the
/// ends, `(−3f₀ + 4f₁ − f₂)/(2h)`.
fn first(i: usize, len: usize) -> Stencil {
    if i == 0 {
        Stencil { off: [0, 1, 2, 0], w: [-1.5, 2.0, -0.5, 0.0], len: 3 }
    } else if i + 1 == len {
        Stencil { off: [0, -1, -2, 0], w: [1.5, -2.0, 0.5, 0.0], len: 3 }
    } else {
        Stencil { off: [-1, 1, 0, 0], w: [-0.5, 0.5, 0.0, 0.0], len: 2 }
    }
}

/// Second derivative: central in the interior, `(2f₀ − 5f₁ + 4f₂ − f₃)/h²`
/// at the ends.
fn second(i: usize, len: usize) -> Stencil {
    if i == 0 {
        Stencil { off: [0, 1, 2, 3], w: [2.0, -5.0, 4.0, -1.0], len: 4 }
    } else if i + 1 == len {
        Stencil { off: [0, -1, -2, -3], w: [2.0, -5.0, 4.0, -1.0], len: 4 }
    } else {
        Stencil { off: [-1, 0, 1, 0], w: [1.0, -2.0, 1.0, 0.0], len: 3 }
    }
}

/// Map values on a uniform rectangular lattice. Nodes are stored row major
/// (last axis fastest); boundary nodes are held fixed by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    shape: Vec<usize>,
    strides: Vec<usize>,
    h: f64,
    origin: Vector,
    values: Vec<Vector>,
    boundary: Vec<bool>,
    det_cache: Vec<f64>,
    det_floor: f64,
}

impl GridField {
    /// Grid with the given node values. The determinant floor is set to half
    /// the smallest initial determinant.
    pub fn from_values(shape: &[usize], h: f64, origin: Vector, values: Vec<Vector>) -> Result<Self> {
        let n = shape.len();
        if !(n == 2 || n == 3) {
            return Err(QcError::UnsupportedDimension(n));
        }
        if shape.iter().any(|&s| s < 4) {
            return Err(QcError::Shape(format!("every axis needs at least 4 nodes, got {shape:?}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(QcError::InvalidParameter(format!("spacing h = {h} must be positive")));
        }
        if origin.dim() != n {
            return Err(QcError::Shape("origin dimension".into()));
        }
        let total: usize = shape.iter().product();
        if values.len() != total || values.iter().any(|v| v.dim() != n) {
            return Err(QcError::Shape(format!("expected {total} node values of dimension {n}")));
        }
        let mut strides = vec![1; n];
        for a in (0..n - 1).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let mut g = GridField {
            n,
            shape: shape.to_vec(),
            strides,
            h,
            origin,
            values,
            boundary: Vec::new(),
            det_cache: Vec::new(),
            det_floor: 0.0,
        };
        g.boundary = (0..total).map(|i| g.multi(i).iter().zip(shape).any(|(&k, &s)| k == 0 || k + 1 == s)).collect();
        g.refresh_dets(Execution::Sequential);
        g.det_floor = 0.5 * g.min_det();
        Ok(g)
    }

    /// Samples `map` at the nodes `origin + h·index`.
    pub fn sample(map: &dyn SmoothMap, shape: &[usize], h: f64, origin: Vector) -> Result<Self> {
        let total: usize = shape.iter().product();
        let n = shape.len();
        let mut strides = vec![1; n];
        for a in (0..n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let values = (0..total)
            .map(|i| {
                let x = Vector::from_fn(n, |a| origin[a] + h * ((i / strides[a]) % shape[a]) as f64);
                map.value(&x)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(shape, h, origin, values)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &Vector {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn det_cache(&self) -> &[f64] {
        &self.det_cache
    }

    pub fn det_floor(&self) -> f64 {
        self.det_floor
    }

    pub fn min_det(&self) -> f64 {
        self.det_cache.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Lattice index of `node`.
    pub fn multi(&self, node: usize) -> Vec<usize> {
        (0..self.n).map(|a| (node / self.strides[a]) % self.shape[a]).collect()
    }

    pub fn position(&self, node: usize) -> Vector {
        let m = self.multi(node);
        Vector::from_fn(self.n, |a| self.origin[a] + self.h * m[a] as f64)
    }

    /// Domain measure `Π (s_a − 1) h`.
    pub fn volume(&self) -> f64 {
        self.shape.iter().map(|&s| (s - 1) as f64 * self.h).product()
    }

    /// Trapezoidal quadrature weight of `node`.
    pub fn weight(&self, node: usize) -> f64 {
        self.multi(node)
            .iter()
            .zip(&self.shape)
            .map(|(&k, &s)| if k == 0 || k + 1 == s { 0.5 * self.h } else { self.h })
            .product()
    }

    fn offset(&self, node: usize, axis: usize, by: isize) -> usize {
        (node as isize + by * self.strides[axis] as isize) as usize
    }

    /// Difference Jacobian at `node`.
    pub fn jacobian(&self, node: usize) -> SquareMatrix {
        let m = self.multi(node);
        let mut jac = SquareMatrix::zeros(self.n);
        for j in 0..self.n {
            let st = first(m[j], self.shape[j]);
            for s in 0..st.len {
                let v = &self.values[self.offset(node, j, st.off[s])];
                for k in 0..self.n {
                    jac[(k, j)] += st.w[s] * v[k];
                }
            }
        }
        jac.scale(1.0 / self.h)
    }

    /// Difference Jacobian and Hessian at `node`. Mixed derivatives compose
    /// the first-derivative stencils of both axes.
    pub fn jet(&self, node: usize) -> (SquareMatrix, Hessian) {
        let n = self.n;
        let m = self.multi(node);
        let h2 = self.h * self.h;
        let mut hess = Hessian::zeros(n);
        for j in 0..n {
            let st = second(m[j], self.shape[j]);
            for s in 0..st.len {
                let v = &self.values[self.offset(node, j, st.off[s])];
                for k in 0..n {
                    hess.set(k, j, j, hess.get(k, j, j) + st.w[s] * v[k] / h2);
                }
            }
            for l in 0..j {
                let (sj, sl) = (first(m[j], self.shape[j]), first(m[l], self.shape[l]));
                let mut acc = [0.0; 4];
                for a in 0..sj.len {
                    let row = self.offset(node, j, sj.off[a]);
                    for b in 0..sl.len {
                        let v = &self.values[self.offset(row, l, sl.off[b])];
                        for k in 0..n {
                            acc[k] += sj.w[a] * sl.w[b] * v[k];
                        }
                    }
                }
                for k in 0..n {
                    hess.set(k, j, l, acc[k] / h2);
                    hess.set(k, l, j, acc[k] / h2);
                }
            }
        }
        (self.jacobian(node), hess)
    }

    pub(crate) fn refresh_dets(&mut self, exec: Execution) {
        let dets = par::map_indexed(exec, self.values.len(), |i| self.jacobian(i).det());
        self.det_cache = dets;
    }

    /// Copy of `self` with new node values; the floor is inherited.
    pub(crate) fn with_values(&self, values: Vec<Vector>, exec: Execution) -> GridField {
        let mut g = GridField {
            n: self.n,
            shape: self.shape.clone(),
            strides: self.strides.clone(),
            h: self.h,
            origin: self.origin,
            values,
            boundary: self.boundary.clone(),
            det_cache: Vec::new(),
            det_floor: self.det_floor,
        };
        g.refresh_dets(exec);
        g
    }

    /// Largest node-wise difference to `other`, which must share the layout.
    pub fn max_diff(&self, other: &GridField) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((*a - *b).max_abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{build_map, CubicMap};
    use crate::rng;

    #[test]
    fn quadratic_data_is_differentiated_exactly() {
        // Stencils are exact on quadratics, including the one-sided ones.
        let f = |x: &Vector| Vector::from_slice(&[x[0] * x[0] + 3.0 * x[0] * x[1], 2.0 * x[1] * x[1] - x[0]]);
        let shape = [5, 6];
        let h = 0.25;
        let vals = (0..30).map(|i| f(&Vector::from_slice(&[h * (i / 6) as f64, h * (i % 6) as f64]))).collect();
        let g = GridField::from_values(&shape, h, Vector::zeros(2), vals).unwrap();
        for node in 0..g.len() {
            let x = g.position(node);
            let (j, hs) = g.jet(node);
            let want = SquareMatrix::from_rows(&[&[2.0 * x[0] + 3.0 * x[1], 3.0 * x[0]], &[-1.0, 4.0 * x[1]]]).unwrap();
            assert!((j - want).max_abs() < 1e-12, "node {node}");
            assert!((hs.get(0, 0, 0) - 2.0).abs() < 1e-10);
            assert!((hs.get(0, 0, 1) - 3.0).abs() < 1e-10);
            assert!((hs.get(1, 1, 1) - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn layout_and_weights() {
        let id = build_map("identity", 3, &[]).unwrap();
        let g = GridField::sample(id.as_ref(), &[4, 5, 6], 0.5, Vector::zeros(3)).unwrap();
        assert_eq!(g.len(), 120);
        assert_eq!(g.multi(1), vec![0, 0, 1]);
        assert_eq!(g.position(6), Vector::from_slice(&[0.0, 0.5, 0.0]));
        let total: f64 = (0..g.len()).map(|i| g.weight(i)).sum();
        assert!((total - g.volume()).abs() < 1e-12);
        assert_eq!((0..g.len()).filter(|&i| !g.is_boundary(i)).count(), 2 * 3 * 4);
        assert_eq!(g.det_floor(), 0.5);
    }

    #[test]
    fn cubic_jets_converge_at_second_order() {
        let mut r = rng::seeded(2);
        let m = CubicMap::random(&mut r, 2, 0.3, 0.3);
        let err = |k: usize| {
            let h = 1.0 / k as f64;
            let g = GridField::sample(&m, &[k + 1, k + 1], h, Vector::zeros(2)).unwrap();
            (0..g.len())
                .map(|i| {
                    let (j, _) = g.jet(i);
                    (j - m.jet(&g.position(i)).unwrap().jac).max_abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(16) / err(32);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(GridField::from_values(&[3, 5], 0.1, Vector::zeros(2), vec![Vector::zeros(2); 15]).is_err());
        assert!(GridField::from_values(&[4, 4], 0.1, Vector::zeros(2), vec![Vector::zeros(2); 15]).is_err());
        assert!(matches!(
            GridField::from_values(&[4, 4, 4, 4], 0.1, Vector::zeros(4), vec![]),
            Err(QcError::UnsupportedDimension(4))
        ));
    }
}
