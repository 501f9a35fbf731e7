//! Self-interference cancellation for full-duplex OFDM links with
//! reconfigurable reflecting surfaces.
//!
//! Channels come from [`near_field`] geometry and [`far_field`] Rician
//! fading, and are combined per subcarrier in [`system`]. [`ao`] alternates
//! between [`power`] allocation and [`rc`] reflection-coefficient design to
//! maximize self-interference suppression. [`scenario`] and [`experiment`]
//! turn a configuration into averaged metrics.

#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod ao;
pub mod error;
pub mod experiment;
pub mod far_field;
pub mod near_field;
pub mod power;
pub mod rc;
pub mod scenario;
pub mod system;

pub use error::{Error, Result};
