//! Condensed Stein variational gradient descent for sparse Bayesian neural
//! networks.
//!
//! The crate is organised bottom-up: [`net`] (layered networks and their
//! gradients), [`prior`] and [`kernel`], [`likelihood`] targets,
//! [`mechanics`] (hyperelastic potentials and data), the [`svgd`] engine,
//! [`condense`] (graph condensation), [`metrics`] and the
//! [`experiments`] used by the command-line front end.

pub mod condense;
pub mod data;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod likelihood;
pub mod mechanics;
pub mod metrics;
pub mod net;
pub mod prior;
pub mod special;
pub mod svgd;

pub use error::{Error, Result};
