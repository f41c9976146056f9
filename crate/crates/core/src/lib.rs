//! Numerical calculus of quasiconformal distortion: trace dilation and the
//! distortion tensor, the `L_p` and `L_∞` operators, flow lines of the
//! Ahlfors field, tangential dilation on hypersurfaces, and an explicit
//! finite-difference solver for the gradient flow `∂_t u = L_p u`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dilation;
pub mod error;
pub mod flowlines;
pub mod gradflow;
pub mod linalg;
pub mod maps;
pub mod operators;
pub mod par;
pub mod rng;
pub mod traces;
pub mod verify;

pub use error::{QcError, Result};
pub use linalg::{Hessian, SquareMatrix, Vector};
pub use operators::Jet2Sample;
