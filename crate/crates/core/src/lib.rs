//! Linear stochastic flows `dX = AX dt + Σ_k B_k X dW_k` on finite truncations
//! of a Hilbert space.
//!
//! The crate builds the flow in several independent ways (exponential Euler,
//! Wiener chaos series, closed-form commutative exponentials, Doss–Sussmann
//! splitting, Picard iteration of the mild equation in Schatten classes),
//! constructs the inverse flow, and evaluates the closed-form diagnostics of
//! the diagonal case. [`harness`] ties everything to runnable experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// reference constants are quoted to the digits of their source
#![allow(clippy::excessive_precision)]

pub mod error;
pub mod rng;
pub mod operators;
pub mod noise;
pub mod flow;
pub mod special;
pub mod diagonal;
pub mod schatten;
pub mod harness;

pub use error::{FlowError, Result};
