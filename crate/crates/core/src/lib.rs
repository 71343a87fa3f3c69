//! Contact processes with viral load (CPVL) and with lingering infections
//! (CPLI): exact simulation, shared-randomness couplings, Siegmund duality
//! checks, finite-state oracles and phase-transition estimators.
#![allow(clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bd;
pub mod duality;
pub mod engine;
pub mod error;
pub mod graphs;
pub mod oracle;
pub mod rates;
pub mod seeding;
pub mod stats;

pub use error::{Error, Result};
pub use graphs::{Graph, GraphKind, Vertex};
pub use rates::{InfectionRate, Load, RateModel};
