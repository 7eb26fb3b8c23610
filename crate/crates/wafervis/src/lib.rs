//! Automated visual fault detection for diced wafers.
//!
//! The crate combines three subsystems:
//!
//! * a synthetic wafer generator with exact ground truth ([`synthwafer`]),
//! * a neural model of visual attention that localizes dicing streets via
//!   simulated eye movements ([`earlyvision`], [`hva`], [`fef`], [`roi`]),
//! * a small CPU convolutional-network engine for street and chip
//!   classification ([`classifier`]),
//!
//! orchestrated end to end by [`pipeline`].

pub mod classifier;
pub mod earlyvision;
pub mod error;
pub mod fef;
pub mod hva;
pub mod pipeline;
pub mod plane;
pub mod roi;
pub mod synthwafer;
pub mod tensorbin;

pub use error::{Error, Result};
pub use plane::{Plane, PlaneExt};
