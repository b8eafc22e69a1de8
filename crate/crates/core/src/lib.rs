//! Monte Carlo solver for multi-dimensional BSDEs whose generators are
//! quadratic in the diagonal `z^i` component and sub-quadratic in the rest.
//!
//! The pieces, bottom-up: Brownian ensembles ([`paths`]), least-squares
//! conditional expectations ([`condexp`]), the closed-form constants ledger
//! ([`constants`]), a scalar quadratic BSDE solver ([`scalarq`]), BMO
//! diagnostics ([`bmo`]), the Picard fixed-point solver on a short interval
//! ([`picard`]) and backward stitching over a long horizon ([`globalsolve`]).

pub mod bmo;
pub mod condexp;
pub mod constants;
pub mod error;
pub mod field;
pub mod globalsolve;
pub mod instances;
pub mod paths;
pub mod picard;
pub mod scalarq;

pub use error::{Error, Result};
pub use field::AdaptedField;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
