//! Demand models: per-firm, per-period distributions, realized days and the
//! scenario matrices every Monte Carlo estimate is drawn from.

mod scenario;
pub mod stats;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use scenario::ScenarioSet;
pub use stats::{
    aggregate_quantile, conditional_mean_band, pairwise_correlation, BandEstimate, BandQuery,
    Constraint, CorrelationMatrix,
};

/// A point estimate with its Monte Carlo standard error (zero in exact mode).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub const fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }
}

/// Daily energy demand (kWh) of one firm in one tariff period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandDistribution {
    /// Historical daily totals, resampled with replacement.
    Empirical { samples: Vec<f64> },
    Uniform { low: f64, high: f64 },
    /// Normal(mean, std_dev) conditioned on being non-negative.
    TruncatedNormal { mean: f64, std_dev: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// Probability masses on the grid `0, step, 2 step, ...`.
    Discrete { step: f64, masses: Vec<f64> },
}

impl DemandDistribution {
    pub fn point_mass(value: f64) -> Self {
        DemandDistribution::Empirical {
            samples: alloc::vec![value],
        }
    }

    pub fn zero() -> Self {
        Self::point_mass(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Distribution(msg));
        match self {
            DemandDistribution::Empirical { samples } => {
                if samples.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return bad("empirical samples must be finite and non-negative".into());
                }
            }
            DemandDistribution::Uniform { low, high } => {
                if !(*low >= 0.0 && high >= low && high.is_finite()) {
                    return bad(format!("uniform[{low}, {high}] is not a valid demand law"));
                }
            }
            DemandDistribution::TruncatedNormal { mean, std_dev } => {
                if !(*std_dev > 0.0 && mean.is_finite() && *mean >= -2.0 * std_dev) {
                    return bad(format!("truncated normal({mean}, {std_dev}) is not supported"));
                }
            }
            DemandDistribution::LogNormal { mu, sigma } => {
                if !(mu.is_finite() && *sigma >= 0.0 && sigma.is_finite()) {
                    return bad(format!("lognormal({mu}, {sigma}) is not valid"));
                }
            }
            DemandDistribution::Discrete { step, masses } => {
                let total: f64 = masses.iter().sum();
                if !(*step > 0.0) || masses.iter().any(|&m| !(m >= 0.0)) || libm::fabs(total - 1.0) > 1e-9 {
                    return bad("discrete masses must be non-negative and sum to 1".into());
                }
            }
        }
        Ok(())
    }

    /// True for laws with atoms; solvers flag their output as possibly
    /// non-unique in that case.
    pub fn is_degenerate(&self) -> bool {
        match self {
            DemandDistribution::Empirical { .. } | DemandDistribution::Discrete { .. } => true,
            DemandDistribution::Uniform { low, high } => low == high,
            DemandDistribution::LogNormal { sigma, .. } => *sigma == 0.0,
            DemandDistribution::TruncatedNormal { .. } => false,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DemandDistribution::Empirical { samples } => match samples.len() {
                0 => 0.0,
                1 => samples[0],
                n => samples[rng.random_range(0..n)],
            },
            DemandDistribution::Uniform { low, high } => {
                if low == high {
                    *low
                } else {
                    low + (high - low) * rng.random::<f64>()
                }
            }
            DemandDistribution::TruncatedNormal { mean, std_dev } => {
                let normal = Normal::new(*mean, *std_dev).expect("validated");
                loop {
                    let x = normal.sample(rng);
                    if x >= 0.0 {
                        return x;
                    }
                }
            }
            DemandDistribution::LogNormal { mu, sigma } => {
                LogNormal::new(*mu, *sigma).expect("validated").sample(rng)
            }
            DemandDistribution::Discrete { step, masses } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, m) in masses.iter().enumerate() {
                    acc += m;
                    if u < acc {
                        return k as f64 * step;
                    }
                }
                (masses.len().saturating_sub(1)) as f64 * step
            }
        }
    }

    /// Analytic mean, when one exists in closed form.
    pub fn mean(&self) -> Option<f64> {
        match self {
            DemandDistribution::Empirical { samples } if !samples.is_empty() => {
                Some(samples.iter().sum::<f64>() / samples.len() as f64)
            }
            DemandDistribution::Empirical { .. } => None,
            DemandDistribution::Uniform { low, high } => Some(0.5 * (low + high)),
            DemandDistribution::LogNormal { mu, sigma } => Some(libm::exp(mu + 0.5 * sigma * sigma)),
            DemandDistribution::Discrete { step, masses } => Some(
                masses
                    .iter()
                    .enumerate()
                    .map(|(k, m)| k as f64 * step * m)
                    .sum(),
            ),
            DemandDistribution::TruncatedNormal { .. } => None,
        }
    }
}

/// One historical day of a firm: per-period totals, indexed by flat period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    /// Opaque ordinal shared across firms (e.g. days since epoch).
    pub day: i64,
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmProfile {
    pub firm_id: String,
    /// One law per flat period; index 0 is off peak.
    pub periods: Vec<DemandDistribution>,
    /// Whole historical days, when the profile came from metered data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<DayRecord>,
}

impl FirmProfile {
    pub fn new(firm_id: impl Into<String>, periods: Vec<DemandDistribution>) -> Self {
        FirmProfile {
            firm_id: firm_id.into(),
            periods,
            history: Vec::new(),
        }
    }

    /// Builds empirical per-period laws from whole days.
    pub fn from_history(firm_id: impl Into<String>, history: Vec<DayRecord>) -> Result<Self> {
        let firm_id = firm_id.into();
        let n_periods = history.first().map(|d| d.demand.len()).unwrap_or(0);
        if history.is_empty() || n_periods == 0 {
            return Err(Error::EmptySamples { firm: 0, period: 0 });
        }
        if history.iter().any(|d| d.demand.len() != n_periods) {
            return Err(Error::Shape(format!("firm {firm_id}: day records differ in length")));
        }
        let periods = (0..n_periods)
            .map(|tau| DemandDistribution::Empirical {
                samples: history.iter().map(|d| d.demand[tau]).collect(),
            })
            .collect();
        Ok(FirmProfile {
            firm_id,
            periods,
            history,
        })
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Each firm and period drawn independently.
    #[default]
    Independent,
    /// A whole historical day per firm, keeping within-day correlation.
    /// Periods are then no longer independent.
    Paired,
}

/// Demands of every firm in every period of one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedDay {
    n_firms: usize,
    n_periods: usize,
    demand: Vec<f64>,
    /// Set when drawn in [`SamplingMode::Paired`].
    pub paired: bool,
}

impl RealizedDay {
    /// `demand[firm][period]`, flattened row-major.
    pub fn new(n_firms: usize, n_periods: usize, demand: Vec<f64>) -> Result<Self> {
        if demand.len() != n_firms * n_periods || n_firms == 0 {
            return Err(Error::Shape(format!(
                "{} values for {n_firms} firms x {n_periods} periods",
                demand.len()
            )));
        }
        if demand.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Shape("realized demand must be non-negative".into()));
        }
        Ok(RealizedDay {
            n_firms,
            n_periods,
            demand,
            paired: false,
        })
    }

    pub fn single(demand: &[f64]) -> Result<Self> {
        Self::new(1, demand.len(), demand.to_vec())
    }

    pub fn n_firms(&self) -> usize {
        self.n_firms
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn firm(&self, i: usize) -> &[f64] {
        &self.demand[i * self.n_periods..(i + 1) * self.n_periods]
    }

    pub fn get(&self, firm: usize, tau: usize) -> f64 {
        self.demand[firm * self.n_periods + tau]
    }

    pub fn collective(&self, tau: usize) -> f64 {
        (0..self.n_firms).map(|i| self.get(i, tau)).sum()
    }

    /// Collective demand per period.
    pub fn collective_day(&self) -> Vec<f64> {
        (0..self.n_periods).map(|tau| self.collective(tau)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.demand
    }
}

pub(crate) fn validate_profiles(profiles: &[FirmProfile]) -> Result<usize> {
    let first = profiles.first().ok_or(Error::NoFirms)?;
    let n_periods = first.n_periods();
    for (i, prof) in profiles.iter().enumerate() {
        if prof.n_periods() != n_periods {
            return Err(Error::Shape(format!(
                "firm {} has {} periods, expected {n_periods}",
                prof.firm_id,
                prof.n_periods()
            )));
        }
        for (tau, d) in prof.periods.iter().enumerate() {
            if let DemandDistribution::Empirical { samples } = d {
                if samples.is_empty() {
                    return Err(Error::EmptySamples { firm: i, period: tau });
                }
            }
            d.validate()?;
        }
    }
    Ok(n_periods)
}

pub(crate) fn draw_day_into<R: Rng + ?Sized>(
    profiles: &[FirmProfile],
    mode: SamplingMode,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    let n_periods = profiles[0].n_periods();
    for (i, prof) in profiles.iter().enumerate() {
        let row = &mut out[i * n_periods..(i + 1) * n_periods];
        match mode {
            SamplingMode::Independent => {
                for (slot, law) in row.iter_mut().zip(&prof.periods) {
                    *slot = law.sample(rng);
                }
            }
            SamplingMode::Paired => {
                if prof.history.is_empty() {
                    return Err(Error::EmptySamples { firm: i, period: 0 });
                }
                let day = &prof.history[rng.random_range(0..prof.history.len())];
                row.copy_from_slice(&day.demand);
            }
        }
    }
    Ok(())
}

/// Draws one day for every firm from a fixed seed.
pub fn sample_day(profiles: &[FirmProfile], seed: u64, mode: SamplingMode) -> Result<RealizedDay> {
    let n_periods = validate_profiles(profiles)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demand = alloc::vec![0.0; profiles.len() * n_periods];
    draw_day_into(profiles, mode, &mut rng, &mut demand)?;
    let mut day = RealizedDay::new(profiles.len(), n_periods, demand)?;
    day.paired = mode == SamplingMode::Paired;
    Ok(day)
}
