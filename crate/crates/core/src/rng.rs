//! Seeded random generation of test data. All generators draw from
//! [`SplitMix64`] (64-bit state) so every randomized case is reproducible from
//! its seed, independent of platform and thread count.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
pub use rand_xoshiro::SplitMix64;

use crate::linalg::{gram_schmidt, Hessian, SquareMatrix, Vector};

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Seed for case `index` of a batch, decorrelated from neighbouring indices.
pub fn case_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_| normal(rng))
}

pub fn unit_vector(rng: &mut impl Rng, n: usize) -> Vector {
    loop {
        let v = gaussian_vector(rng, n);
        let len = v.norm();
        if len > 1e-6 {
            return v.scale(1.0 / len);
        }
    }
}

/// Point with `|x|` uniform in `[r_min, r_max]` and uniformly random direction.
pub fn point_in_shell(rng: &mut impl Rng, n: usize, r_min: f64, r_max: f64) -> Vector {
    unit_vector(rng, n).scale(uniform(rng, r_min, r_max))
}

pub fn gaussian_matrix(rng: &mut impl Rng, n: usize) -> SquareMatrix {
    SquareMatrix::from_fn(n, |_, _| normal(rng))
}

/// Gaussian matrix with its first row negated if needed so that `det > 0`;
/// nearly singular draws (`|det| < min_det`) are rejected.
pub fn positive_jacobian(rng: &mut impl Rng, n: usize, min_det: f64) -> SquareMatrix {
    loop {
        let mut q = gaussian_matrix(rng, n);
        let d = q.det();
        if d.abs() < min_det {
            continue;
        }
        if d < 0.0 {
            for c in 0..n {
                q[(0, c)] = -q[(0, c)];
            }
        }
        return q;
    }
}

/// Haar-like rotation (`det = +1`) from Gram–Schmidt of a Gaussian matrix.
pub fn rotation(rng: &mut impl Rng, n: usize) -> SquareMatrix {
    loop {
        let cols: Vec<Vector> = (0..n).map(|_| gaussian_vector(rng, n)).collect();
        if let Some(q) = gram_schmidt(&cols, 1e-6) {
            let mut m = SquareMatrix::from_fn(n, |i, j| q[j][i]);
            if m.det() < 0.0 {
                for i in 0..n {
                    m[(i, 0)] = -m[(i, 0)];
                }
            }
            return m;
        }
    }
}

/// Hessian with Gaussian entries, symmetric in its derivative indices.
pub fn symmetric_hessian(rng: &mut impl Rng, n: usize) -> Hessian {
    let mut h = Hessian::zeros(n);
    for k in 0..n {
        for j in 0..n {
            for l in j..n {
                let v = normal(rng);
                h.set(k, j, l, v);
                h.set(k, l, j, v);
            }
        }
    }
    h
}
