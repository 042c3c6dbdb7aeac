//! Storage arbitrage and storage-sharing solvers for single-peaked
//! time-of-use (ToU) tariffs.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the `tousim` companion crate.
//!
//! Layout:
//! * [`schedule`] - tariff representation, validation and hour mapping.
//! * [`demand`] - demand distributions, scenario matrices and the
//!   Monte Carlo statistics the solvers are built on.
//! * [`value`] - marginal value of stored energy (first-purchase
//!   probabilities) shared by every solver.
//! * [`policy`] - standalone `(M, C)` reservation/capacity policy.
//! * [`market`] - sharing prices, collective dispatch and daily settlement.
//! * [`game`] - capacity decision game: equilibrium allocation and
//!   certification.
//! * [`division`] - the decoupled "2-tier division" baseline.
//! * [`oracle`] - brute-force references (hindsight, dynamic programming,
//!   exhaustive social optimum).
#![no_std]

extern crate alloc;

pub mod demand;
pub mod division;
pub mod error;
pub mod game;
pub mod market;
mod math;
pub mod oracle;
pub mod policy;
pub mod schedule;
pub mod value;

pub use demand::{
    DemandDistribution, Estimate, FirmProfile, RealizedDay, SamplingMode, ScenarioSet,
};
pub use error::Error;
pub use game::EquilibriumResult;
pub use market::{MarketOutcome, SharingMarket};
pub use policy::{Efficiency, ReservationPolicy};
pub use schedule::{PeriodId, Rate, ToUSchedule};

/// Default Monte Carlo sample count for solver scenario matrices.
pub const DEFAULT_SAMPLES: usize = 200_000;

/// Bisection tolerance (kWh) for reservation and capacity solves.
pub const SOLVE_TOLERANCE: f64 = 1e-4;
