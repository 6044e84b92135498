//! Analysis and simulation of a pest / entomopathogenic-nematode model with
//! an inhibited pest birth rate and a constant nematode release rate.
//!
//! - [`model`]: parameterizations, vector fields, Jacobians, scaling.
//! - [`equilibria`]: equilibria, release thresholds, linear stability,
//!   Dulac check for the system without release.
//! - [`bifurcation`]: Hopf analysis at `u0/2` and the saddle-node normal
//!   form at `u0`.
//! - [`simulator`]: adaptive Dormand-Prince integration, attractor
//!   detection and cycle periods.
//! - [`planner`]: release-rate sweeps and plans in original units.

pub mod bifurcation;
pub mod equilibria;
pub mod error;
pub mod model;
pub mod planner;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{Model, NormalizedParams, OriginalParams, ScaleMap, State, UnitSystem};
