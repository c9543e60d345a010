//! Bounds on the rate-distortion function of the ε-insensitive distortion
//! `d(x, y) = max(|x - y| - ε, 0)` for scalar sources.
//!
//! * [`kernel`]: the loss and the tilted density `g_s ∝ exp(s·ρ_ε)`.
//! * [`sources`]: Laplacian, Gaussian and tabulated sources.
//! * [`bounds`]: Shannon lower bound and the upper bounds `R_U`, `R_GE`, `R_AU`.
//! * [`spectral`]: characteristic functions and strictness certificates.
//! * [`ba`]: a discretized Blahut–Arimoto solver used as an independent check.
//! * [`sweep`] and [`verify`]: curve tables and cross-checks used by the CLI.
//!
//! Rates are in nats throughout.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ba;
pub mod bounds;
pub mod error;
pub mod kernel;
pub mod parallel;
pub mod quad;
pub mod sources;
pub mod spectral;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use kernel::{EpsilonLoss, SlopeState};
pub use sources::{Source, SourceSummary};
