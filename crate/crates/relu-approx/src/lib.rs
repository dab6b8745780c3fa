//! Explicit construction of deep ReLU networks approximating Hölder-regular
//! functions to a target accuracy in L^p(mu) for arbitrary finite measures mu
//! on the cube Q = [-1/2, 1/2]^d, together with tooling to measure the size,
//! depth, and weight-quantization behavior of the constructed networks.

// Negated comparisons like `!(eps > 0.0)` are deliberate: unlike
// `eps <= 0.0`, they also reject NaN arguments.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembler;
pub mod error;
pub mod exec;
pub mod localization;
pub mod measures;
pub mod metrics;
pub mod network;
pub mod partition;
pub mod primitives;
pub mod taylor;

pub use error::{ApproxError, Result};
pub use network::{Layer, Network, Triplet};
