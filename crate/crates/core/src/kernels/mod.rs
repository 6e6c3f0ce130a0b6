//! Discretized kernel operators `U`, `S`, `T`, their norms, and the
//! Fourier-side contraction constants.

pub mod chain;
pub mod cutoff;
pub mod fourier;
pub mod grid;
pub mod norms;
pub mod operators;

use thiserror::Error;

pub use cutoff::{find_c0, C0Result, Cutoff};
pub use fourier::{a_table, compute_a, fourier_profile, ATable, FourierProfile};
pub use grid::{Grid, GridFunction};
pub use operators::{
    apply_s, apply_t, apply_t_factored, apply_u, BandMatrix, KernelParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{escaped:.3e} of the mass leaves the grid [-{x}, {x}]; enlarge X")]
    Truncation { escaped: f64, x: f64 },
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
