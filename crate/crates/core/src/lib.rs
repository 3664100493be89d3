//! Constrained ground states, split-step dynamics and orbital-stability
//! diagnostics for m-coupled nonlinear Schrodinger systems
//!
//! ```text
//! i d_t Phi_j + Laplace Phi_j + h_j(x, |Phi_1|^2, .., |Phi_l|^2) Phi_j = 0
//! ```
//!
//! on a periodic box in `R^N`, `N <= 3`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dump;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod groundstate;
pub mod hypotheses;
pub mod nonlinearity;
pub mod random;
pub mod stability;

pub use error::{NlsError, Result};
pub use grid::{ComplexField, FieldVector, Grid, RealField};
pub use nonlinearity::{Family, NonlinearitySpec, Sampler};
