//! Lifetime-reliability simulation of clustered manycores.
//!
//! The crate models process variation across the die, a lumped-RC thermal
//! network, four aging mechanisms (thermal cycling, NBTI, HCI and
//! electromigration), and a two-level Q-learning task mapper that first picks
//! a temperature-homogeneous bin of cores and then a core inside it.
//!
//! A note on symbols: the literature this model follows reuses `gamma` and
//! `beta` for unrelated constants. Here they are spelled out by role:
//! `gamma_res` (grid resistance per variation unit), `beta_f` (frequency per
//! variation unit), `nbti_beta` (NBTI fitting exponent), `learning_rate` and
//! `discount` for the Q-learning update.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod harness;
pub mod mapper;
pub mod pvgrid;
pub mod reliability;
pub mod rlcore;
pub mod seeds;
pub mod thermal;
pub mod workload;

pub use error::{Error, Result};

/// Boltzmann constant in eV/K, as tabulated for the aging models.
pub const BOLTZMANN_EV: f64 = 8.62e-5;

pub const SECONDS_PER_YEAR: f64 = 365.25 * 24.0 * 3600.0;
