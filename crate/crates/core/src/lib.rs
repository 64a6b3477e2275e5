//! A discrete-state laboratory for context/content uncertainty dynamics.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`prob`] | alphabets, distributions, kernels, exact entropy / MI / KL |
//! | [`transport`] | log-domain Sinkhorn and an exact min-cost-flow solver |
//! | [`ib`] | information-bottleneck fixed point, beta sweeps, free energy |
//! | [`dynamics`] | fixed-point engines and delta-convergence diagnostics |
//! | [`hierarchy`] | layered composition and the spatiotemporal loss |
//! | [`agents`] | the symbol-emergence signaling game |
//! | [`scenario`] | JSON scenario configs, runners and trace writers |
//!
//! All quantities are in nats.

pub mod agents;
pub mod dynamics;
pub mod error;
pub mod hierarchy;
pub mod ib;
pub mod prob;
pub mod scenario;
pub mod transport;

pub use error::{Error, Result};
pub use prob::{Alphabet, Direction, Dist, Embedding, Joint, Kernel};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
