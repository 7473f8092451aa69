//! Low-rank plus sparse matrix decomposition.
//!
//! Solvers for principal component pursuit (PCP) and its compressive,
//! partially observed variant (CPCP), together with multilevel versions that
//! run their singular value computations on column-restricted coarse models.
//!
//! * [`matrix`], [`svd`], [`prox`]: dense matrices, SVD and proximal operators.
//! * [`multilevel`]: interpolation restriction operators and their chains.
//! * [`pcp`]: inexact ALM (IALM) and multilevel IALM.
//! * [`cpcp`]: Frank-Wolfe thresholding (FW-T) and multilevel FW-T.
//! * [`io`]: `.lrml` matrices, PGM frame stacks, CSV export, synthetic problems.

pub mod cpcp;
pub mod error;
pub mod io;
pub mod matrix;
pub mod multilevel;
pub mod pcp;
pub mod prox;
pub mod svd;
pub mod telemetry;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use telemetry::{IterationRecord, SolveStatus};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
