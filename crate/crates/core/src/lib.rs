//! Early deforestation warnings from multitemporal C-band SAR backscatter.
//!
//! The crate covers the full chain from σ⁰ stacks to evaluated alerts:
//!
//! * [`stack`] loads and writes raster time-series stacks and sample sets.
//! * [`calibration`] turns σ⁰ into γ⁰ with the local incidence angle and
//!   converts between linear power and dB.
//! * [`filters`] holds the median, Lee and Frost despeckling filters, the
//!   Quegan-Yu multitemporal filter and their 25-cell combination grid.
//! * [`metrics`] scores filter combinations with ENL and the Range index.
//! * [`stats`] fits the stable-forest model, runs the normality and
//!   equal-variance tests and derives one-sided z-test thresholds.
//! * [`detection`] raises confirmed alerts and evaluates them against
//!   reference dates.
//! * [`synth`] generates speckled scenes with known clear-cut events.

pub mod calibration;
pub mod detection;
pub mod error;
pub mod filters;
pub mod metrics;
pub mod report;
pub mod special;
pub mod stack;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
