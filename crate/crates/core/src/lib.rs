//! Chained hydrologic-hydraulic flood modeling with ensemble data
//! assimilation.
//!
//! * [`routing`]: matrix Muskingum routing through a river network;
//! * [`hydraulics`]: 2D shallow-water floodplain model;
//! * [`observing`]: gauge and wet-surface-ratio observation operators;
//! * [`anamorphosis`]: empirical Gaussian anamorphosis;
//! * [`enkf`]: cycled stochastic EnKF over friction, inflow factor and
//!   subdomain depth corrections;
//! * [`metrics`]: station RMSE, contingency maps and CSI;
//! * [`experiment`]: twin-experiment scenario, forcings and the
//!   OL / IDA / IGDA experiment matrix.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anamorphosis;
pub mod enkf;
pub mod error;
pub mod experiment;
pub mod hydraulics;
pub mod metrics;
pub mod observing;
pub mod routing;
mod textio;

pub use error::{Error, Result};

// Book chapters, compiled so their examples run under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/routing.md")]
    mod routing {}
    #[doc = include_str!("../../../book/src/hydraulics.md")]
    mod hydraulics {}
    #[doc = include_str!("../../../book/src/observing.md")]
    mod observing {}
    #[doc = include_str!("../../../book/src/anamorphosis.md")]
    mod anamorphosis {}
    #[doc = include_str!("../../../book/src/enkf.md")]
    mod enkf {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
