//! Passive beamforming and resource allocation for IRS-assisted multiuser
//! wireless energy transfer under a sigmoidal energy-harvesting model.
//!
//! Four schemes are provided on top of a shared channel model:
//!
//! * [`static_sdr`]: semidefinite-relaxation upper bound for a single
//!   reflection pattern, eigen-rank profiling and Gaussian randomization.
//! * [`dynamic_sca`]: `J` time-shared reflection patterns optimized jointly
//!   with slot durations and transmit powers by successive convex
//!   approximation.
//! * [`tdma`]: one matched reflection pattern per receiver, with only the
//!   time/power allocation optimized.
//! * the no-IRS baseline in [`experiments`].
//!
//! Convex subproblems go through [`conic`].

pub mod channel;
pub mod conic;
pub mod dynamic_sca;
pub mod eh;
pub mod error;
pub mod experiments;
pub mod static_sdr;
pub mod tdma;

pub use channel::{ChannelRealization, SystemConfig};
pub use dynamic_sca::{Schedule, Solution};
pub use eh::EhParams;
pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
