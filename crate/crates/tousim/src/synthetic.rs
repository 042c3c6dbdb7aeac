//! Synthetic communities: lognormal demand per firm and period, multiplied
//! by a factor shared by every firm on the same day and period.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tousim_core::demand::{DemandDistribution, FirmProfile, ScenarioSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub firms: usize,
    /// Mean daily kWh of a reference firm per flat period, off peak first.
    pub mean_kwh: Vec<f64>,
    /// Firm `i` scales the reference means by a factor spaced evenly over
    /// this range (first firm at the low end).
    #[serde(default = "unit_range")]
    pub scale_range: [f64; 2],
    /// Log-scale spread of each firm's own noise, spaced the same way.
    #[serde(default = "default_sigma")]
    pub sigma_range: [f64; 2],
    /// Log-scale spread of the common day factor; 0 makes firms independent.
    #[serde(default)]
    pub day_factor_sigma: f64,
    /// Indices of firms that never consume anything.
    #[serde(default)]
    pub idle_firms: Vec<usize>,
}

fn unit_range() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_sigma() -> [f64; 2] {
    [0.5, 0.5]
}

impl SyntheticSpec {
    /// `n` identical, independent firms.
    pub fn iid(n: usize, mean_kwh: Vec<f64>, sigma: f64) -> Self {
        SyntheticSpec {
            firms: n,
            mean_kwh,
            scale_range: [1.0, 1.0],
            sigma_range: [sigma, sigma],
            day_factor_sigma: 0.0,
            idle_firms: Vec::new(),
        }
    }

    /// Ten households of different size under a four-period tariff
    /// (off peak, shoulder, peak, evening shoulder), loosely correlated.
    pub fn demo() -> Self {
        SyntheticSpec {
            firms: 10,
            mean_kwh: vec![6.0, 4.0, 6.0, 2.5],
            scale_range: [0.5, 1.5],
            sigma_range: [0.3, 0.7],
            day_factor_sigma: 0.2,
            idle_firms: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.firms == 0 {
            return Err("synthetic community needs at least one firm".into());
        }
        if self.mean_kwh.len() < 2 {
            return Err("mean_kwh needs off peak plus at least one period".into());
        }
        if self.mean_kwh.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err("mean_kwh entries must be finite and non-negative".into());
        }
        let ranges = [self.scale_range, self.sigma_range];
        if ranges.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) || !(self.day_factor_sigma >= 0.0) {
            return Err("scale, sigma and day factor must be finite and non-negative".into());
        }
        if let Some(i) = self.idle_firms.iter().find(|&&i| i >= self.firms) {
            return Err(format!("idle firm {i} out of range"));
        }
        Ok(())
    }

    pub fn n_periods(&self) -> usize {
        self.mean_kwh.len()
    }

    fn spaced(&self, range: [f64; 2], i: usize) -> f64 {
        if self.firms == 1 {
            0.5 * (range[0] + range[1])
        } else {
            range[0] + (range[1] - range[0]) * i as f64 / (self.firms - 1) as f64
        }
    }

    pub fn firm_ids(&self) -> Vec<String> {
        (0..self.firms).map(|i| format!("firm-{i:03}")).collect()
    }

    /// Marginal law of each firm with the day factor folded out; exact only
    /// when `day_factor_sigma` is zero.
    pub fn profiles(&self) -> Vec<FirmProfile> {
        (0..self.firms)
            .map(|i| {
                let laws = (0..self.n_periods()).map(|tau| self.law(i, tau)).collect();
                FirmProfile::new(format!("firm-{i:03}"), laws)
            })
            .collect()
    }

    fn law(&self, i: usize, tau: usize) -> DemandDistribution {
        let mean = self.spaced(self.scale_range, i) * self.mean_kwh[tau];
        if mean == 0.0 || self.idle_firms.contains(&i) {
            return DemandDistribution::zero();
        }
        let sigma = self.spaced(self.sigma_range, i);
        DemandDistribution::LogNormal {
            mu: mean.ln() - 0.5 * sigma * sigma,
            sigma,
        }
    }

    /// Draws `n_days` days of the whole community.
    pub fn generate(&self, n_days: usize, seed: u64) -> Result<ScenarioSet, tousim_core::Error> {
        let n = self.firms;
        let periods = self.n_periods();
        let laws: Vec<Vec<DemandDistribution>> =
            (0..n).map(|i| (0..periods).map(|tau| self.law(i, tau)).collect()).collect();
        let s = self.day_factor_sigma;
        let factor = DemandDistribution::LogNormal { mu: -0.5 * s * s, sigma: s };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n_days * n * periods);
        let mut shared = vec![1.0; periods];
        for _ in 0..n_days {
            if s > 0.0 {
                for f in shared.iter_mut() {
                    *f = factor.sample(&mut rng);
                }
            }
            for firm in &laws {
                for (law, f) in firm.iter().zip(&shared) {
                    data.push(law.sample(&mut rng) * f);
                }
            }
        }
        ScenarioSet::from_rows(n, periods, data)
    }
}
