//! Self-contained numerical kernels.

pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod summation;

pub use linalg::{dot, eig_sym, norm2_sq, pinv_from_eig, EigenDecomp, SymMatrix, DEFAULT_RANK_TOL};
pub use quadrature::{integrate_1d, integrate_vec, Domain, QuadOptions, QuadResult, QuadResultN};
pub use rng::RngStream;
