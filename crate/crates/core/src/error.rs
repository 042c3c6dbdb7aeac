use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid efficiency: eta_in={eta_in}, eta_out={eta_out} (both must lie in (0, 1])")]
    Efficiency { eta_in: f64, eta_out: f64 },
    #[error("empty empirical sample set for firm {firm}, period {period}")]
    EmptySamples { firm: usize, period: usize },
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("no firms supplied")]
    NoFirms,
    #[error("scenario shape mismatch: {0}")]
    Shape(String),
    #[error("reservations are not ordered: M_{index} = {value} exceeds M_{prev} = {prev_value}")]
    ReservationOrder {
        index: usize,
        value: f64,
        prev: usize,
        prev_value: f64,
    },
    #[error("marginal revenue of RU_{period} is not monotone (Assumption 7 violated or sample count too low)")]
    NonMonotone { period: usize },
    #[error("conditioning event too rare: {hits} accepted samples with half-width {half_width}")]
    RareEvent { hits: usize, half_width: f64 },
    #[error("density estimate {0} below floor")]
    DensityFloor(f64),
    #[error("allocation renormalization factor {0} outside [0.95, 1.05]")]
    Renormalization(f64),
    #[error("capacities sum to {sum}, expected collective capacity {expected}")]
    CapacityMismatch { sum: f64, expected: f64 },
    #[error("state space of {0} cells exceeds the oracle bound")]
    StateSpace(usize),
    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;
