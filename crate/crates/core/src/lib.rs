//! Statistical variational data assimilation on a synthetic heat-plate testbed.
//!
//! The crate couples three pieces:
//!
//! * a finite-element solver for a nonlinear heat plate ([`fem`]) that
//!   synthesizes "true" and "best-knowledge" temperature trajectories,
//! * a state-estimation core ([`observation`], [`reduction`], [`pbdw`])
//!   that reconstructs a field from a reduced background space plus
//!   patch-sensor observations via a saddle-point solve,
//! * a from-scratch LSTM forecaster ([`ml`]) that replaces unavailable
//!   observations with autoregressive predictions.
//!
//! [`pipeline`] wires everything into an offline/online workflow and
//! produces per-step error reports that also verify the a-priori error
//! bound relating the prediction-driven estimate to the one computed
//! from true observations.
//!
//! With the default `parallel` feature the data-parallel inner loops
//! (assembly, representer solves, batch gradients, per-step reporting)
//! run on rayon; disabling the feature yields a fully sequential build
//! with identical results.

pub mod config;
pub mod error;
pub mod exec;
pub mod fem;
pub mod io;
pub mod ml;

pub mod linalg;

pub mod observation;
pub mod pbdw;
pub mod pipeline;
pub mod plot;

pub mod reduction;
pub mod rng;

pub use error::{Error, Result};
