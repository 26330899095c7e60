//! Steady state, probe response, stability and transient cross-checks for a
//! cavity coupled to a gain/loss pair of mechanical resonators that are also
//! coupled directly to each other, closing an interaction loop.

pub mod error;
pub mod params;
pub mod steady_state;
pub mod linear_response;
pub mod minimize;
pub mod stability;
pub mod analysis;
pub mod oracle;

pub use error::{Error, Result};
pub use params::{default_params, SystemParams};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
