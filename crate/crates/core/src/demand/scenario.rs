use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{draw_day_into, validate_profiles, DemandDistribution, Estimate, FirmProfile, RealizedDay, SamplingMode};
use crate::error::{Error, Result};
use crate::math;

/// Largest scenario count accepted by exact enumeration.
pub const MAX_EXACT_SCENARIOS: usize = 10_000_000;

/// A pre-drawn matrix of demand scenarios, laid out `[scenario][firm][period]`.
///
/// Every solver evaluates its expectations over one shared set so that
/// estimates are monotone in thresholds (common random numbers). In exact
/// mode each scenario carries its probability instead of weight `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    n_firms: usize,
    n_periods: usize,
    data: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl ScenarioSet {
    pub fn from_profiles(
        profiles: &[FirmProfile],
        n_samples: usize,
        seed: u64,
        mode: SamplingMode,
    ) -> Result<Self> {
        let n_periods = validate_profiles(profiles)?;
        if n_samples == 0 {
            return Err(Error::Shape("sample count must be positive".into()));
        }
        let n_firms = profiles.len();
        let stride = n_firms * n_periods;
        let mut data = vec![0.0; n_samples * stride];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for row in data.chunks_exact_mut(stride) {
            draw_day_into(profiles, mode, &mut rng, row)?;
        }
        Ok(ScenarioSet {
            n_firms,
            n_periods,
            data,
            weights: None,
        })
    }

    /// Equally weighted scenarios from explicit rows.
    pub fn from_rows(n_firms: usize, n_periods: usize, data: Vec<f64>) -> Result<Self> {
        let stride = n_firms * n_periods;
        if stride == 0 || data.is_empty() || data.len() % stride != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form rows of {n_firms} firms x {n_periods} periods",
                data.len()
            )));
        }
        if data.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Shape("scenario demand must be non-negative".into()));
        }
        Ok(ScenarioSet {
            n_firms,
            n_periods,
            data,
            weights: None,
        })
    }

    /// Weighted scenarios; weights must be non-negative and sum to one.
    pub fn from_weighted_rows(
        n_firms: usize,
        n_periods: usize,
        data: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut set = Self::from_rows(n_firms, n_periods, data)?;
        if weights.len() != set.len() {
            return Err(Error::Shape("one weight per scenario required".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || math::abs(total - 1.0) > 1e-9 {
            return Err(Error::Distribution("scenario weights must sum to 1".into()));
        }
        set.weights = Some(weights);
        Ok(set)
    }

    /// Full product enumeration of discrete per-firm, per-period laws.
    /// Scenarios with zero probability are skipped.
    pub fn exact(profiles: &[FirmProfile]) -> Result<Self> {
        let n_periods = validate_profiles(profiles)?;
        let n_firms = profiles.len();
        // Support of every coordinate as (value, mass).
        let mut axes: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n_firms * n_periods);
        for prof in profiles {
            for law in &prof.periods {
                let axis: Vec<(f64, f64)> = match law {
                    DemandDistribution::Discrete { step, masses } => masses
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m > 0.0)
                        .map(|(k, &m)| (k as f64 * step, m))
                        .collect(),
                    DemandDistribution::Empirical { samples } => {
                        let w = 1.0 / samples.len() as f64;
                        samples.iter().map(|&x| (x, w)).collect()
                    }
                    DemandDistribution::Uniform { low, high } if low == high => vec![(*low, 1.0)],
                    other => {
                        return Err(Error::Unsupported(format!(
                            "exact enumeration needs discrete laws, got {other:?}"
                        )))
                    }
                };
                axes.push(axis);
            }
        }
        let count = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len().max(1)));
        let count = match count {
            Some(c) if c <= MAX_EXACT_SCENARIOS => c,
            _ => return Err(Error::StateSpace(MAX_EXACT_SCENARIOS)),
        };
        let stride = n_firms * n_periods;
        let mut data = Vec::with_capacity(count * stride);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; stride];
        'outer: loop {
            let mut w = 1.0;
            for (axis, &k) in axes.iter().zip(&idx) {
                let (x, m) = axis[k];
                data.push(x);
                w *= m;
            }
            weights.push(w);
            // Odometer increment, last coordinate fastest.
            for c in (0..stride).rev() {
                idx[c] += 1;
                if idx[c] < axes[c].len() {
                    continue 'outer;
                }
                idx[c] = 0;
            }
            break;
        }
        Ok(ScenarioSet {
            n_firms,
            n_periods,
            data,
            weights: Some(weights),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.n_firms * self.n_periods)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_firms(&self) -> usize {
        self.n_firms
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    /// True when scenarios carry exact probabilities.
    pub fn is_exact(&self) -> bool {
        self.weights.is_some()
    }

    pub fn weight(&self, s: usize) -> f64 {
        match &self.weights {
            Some(w) => w[s],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn demand(&self, s: usize, firm: usize, tau: usize) -> f64 {
        self.data[(s * self.n_firms + firm) * self.n_periods + tau]
    }

    /// One firm's demands in scenario `s`, indexed by period.
    pub fn firm_row(&self, s: usize, firm: usize) -> &[f64] {
        let start = (s * self.n_firms + firm) * self.n_periods;
        &self.data[start..start + self.n_periods]
    }

    pub fn collective_demand(&self, s: usize, tau: usize) -> f64 {
        (0..self.n_firms).map(|i| self.demand(s, i, tau)).sum()
    }

    pub fn day(&self, s: usize) -> RealizedDay {
        let stride = self.n_firms * self.n_periods;
        RealizedDay::new(
            self.n_firms,
            self.n_periods,
            self.data[s * stride..(s + 1) * stride].to_vec(),
        )
        .expect("scenario rows are validated on construction")
    }

    /// Sum over firms: a single-decision-maker view of the community.
    pub fn collective(&self) -> ScenarioSet {
        let all: Vec<usize> = (0..self.n_firms).collect();
        self.merged(&[all])
    }

    /// Each group of firm indices becomes one merged firm.
    pub fn merged(&self, groups: &[Vec<usize>]) -> ScenarioSet {
        let n = self.len();
        let mut data = Vec::with_capacity(n * groups.len() * self.n_periods);
        for s in 0..n {
            for g in groups {
                for tau in 0..self.n_periods {
                    data.push(g.iter().map(|&i| self.demand(s, i, tau)).sum());
                }
            }
        }
        ScenarioSet {
            n_firms: groups.len(),
            n_periods: self.n_periods,
            data,
            weights: self.weights.clone(),
        }
    }

    pub fn select_firms(&self, firms: &[usize]) -> ScenarioSet {
        let groups: Vec<Vec<usize>> = firms.iter().map(|&i| vec![i]).collect();
        self.merged(&groups)
    }

    /// Keeps only the listed periods, in the given order.
    pub fn select_periods(&self, periods: &[usize]) -> ScenarioSet {
        let n = self.len();
        let mut data = Vec::with_capacity(n * self.n_firms * periods.len());
        for s in 0..n {
            for i in 0..self.n_firms {
                let row = self.firm_row(s, i);
                data.extend(periods.iter().map(|&tau| row[tau]));
            }
        }
        ScenarioSet {
            n_firms: self.n_firms,
            n_periods: periods.len(),
            data,
            weights: self.weights.clone(),
        }
    }

    /// Expectation of `f(s)` over scenarios, with its standard error
    /// (zero in exact mode).
    pub fn expect<F: FnMut(usize) -> f64>(&self, mut f: F) -> Estimate {
        match &self.weights {
            Some(w) => Estimate::exact(w.iter().enumerate().map(|(s, &ws)| ws * f(s)).sum()),
            None => {
                let (mean, se, _) = math::mean_and_se((0..self.len()).map(f));
                Estimate { value: mean, se }
            }
        }
    }

    /// Total collective demand over `periods`, one value per scenario.
    pub fn collective_sums(&self, periods: &[usize]) -> Vec<f64> {
        (0..self.len())
            .map(|s| periods.iter().map(|&tau| self.collective_demand(s, tau)).sum())
            .collect()
    }
}
