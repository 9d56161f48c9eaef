//! Simulation and numerical verification toolkit for finite-range asymmetric
//! exclusion processes on a ring.
//!
//! The crate is organised around three pillars:
//!
//! * an exact event-driven Monte Carlo engine ([`sim`]) with second/third
//!   class particle couplings and current/height observers,
//! * exact finite-ring computations ([`oracle`]): sparse generator
//!   assembly, uniformized semigroups and resolvent solves, used as ground
//!   truth for every Monte Carlo estimator,
//! * closed-form resolvent computations on the translation-reduced pair
//!   sector ([`resolvent`]) together with Laplace-transform and exponent
//!   fitting tools ([`analysis`]).
//!
//! Estimators turning replica ensembles into two-point functions,
//! diffusivity curves and identity checks live in [`estimators`].

pub mod analysis;
pub mod estimators;
pub mod model;
pub mod oracle;
pub mod output;
pub mod resolvent;
pub mod rng;
pub mod sim;
pub mod stats;
