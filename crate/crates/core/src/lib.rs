//! Solver toolkit for Markov-modulated reflected autoregressive recursions.
//!
//! The stationary and transient workload transforms of these recursions satisfy
//! vector-valued functional equations of the form
//!
//! ```text
//! Z(s) = Σₘ Hₘ(s) · Z(αₘ(s)) + V(s; u)
//! ```
//!
//! with commuting affine maps `αₘ` and an inhomogeneous term that is affine in a
//! finite vector `u` of boundary unknowns. The crate is organised bottom-up:
//!
//! - [`numlin`]: small dense complex linear algebra and the spectral location checks.
//! - [`stochcore`]: background chains, per-state laws, transforms and samplers.
//! - [`engine`]: the truncated multi-index series solver and unknown resolution.
//! - [`models`]: builders turning each model family into an engine system.
//! - [`mcsim`]: the Monte Carlo oracle used to validate every model.

pub mod engine;
pub mod error;
pub mod mcsim;
pub mod models;
pub mod numlin;
pub mod stochcore;

pub use error::{Error, Result, Warning};
pub use num_complex::Complex64 as C64;
