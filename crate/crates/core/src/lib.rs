//! Numerical laboratory for localization of random Jacobi operators.

pub mod experiment;
pub mod jacobian;
pub mod kernels;
pub mod localization;
pub mod model;
pub mod parallel;
pub mod quad;
pub mod tridiag;
