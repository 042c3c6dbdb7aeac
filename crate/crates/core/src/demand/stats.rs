//! Quantiles, correlations and band-conditional means over scenario sets.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{FirmProfile, SamplingMode, ScenarioSet};
use crate::error::{Error, Result};
use crate::math;

/// Tolerance used for "equal to r" when scenarios are exact.
pub const EXACT_MATCH_TOL: f64 = 1e-9;

/// Minimum accepted samples for a band-conditional estimate.
pub const MIN_BAND_HITS: usize = 1000;

const MAX_BAND_DOUBLINGS: usize = 12;

/// Smallest `v` with `P(X <= v) >= prob`; `prob <= 0` returns the support
/// bound 0. `weights == None` means equal weights.
pub fn weighted_quantile(values: &[f64], weights: Option<&[f64]>, prob: f64) -> f64 {
    if prob <= 0.0 || values.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    match weights {
        None => {
            let n = values.len();
            // ceil(prob * n) - 1, guarded against rounding just above an integer.
            let rank = libm::ceil(prob * n as f64 - 1e-9) as usize;
            values[order[rank.clamp(1, n) - 1]]
        }
        Some(w) => {
            let mut acc = 0.0;
            for &i in &order {
                acc += w[i];
                if acc >= prob - 1e-12 {
                    return values[i];
                }
            }
            values[*order.last().unwrap()]
        }
    }
}

/// Quantile of the collective demand summed over `periods`.
pub fn scenario_quantile(scen: &ScenarioSet, periods: &[usize], prob: f64) -> f64 {
    let sums = scen.collective_sums(periods);
    let weights: Option<Vec<f64>> = scen
        .is_exact()
        .then(|| (0..scen.len()).map(|s| scen.weight(s)).collect());
    weighted_quantile(&sums, weights.as_deref(), prob)
}

/// Monte Carlo quantile of the community's total demand over `periods`.
pub fn aggregate_quantile(
    profiles: &[FirmProfile],
    periods: &[usize],
    prob: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Distribution(format!("probability {prob} outside [0, 1]")));
    }
    let scen = ScenarioSet::from_profiles(profiles, n_samples, seed, SamplingMode::Independent)?;
    Ok(scenario_quantile(&scen, periods, prob))
}

/// Symmetric correlation matrix; `None` marks an undefined entry
/// (a zero-variance series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub n: usize,
    pub entries: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.n + j]
    }

    /// Off-diagonal defined entries with `i < j`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if let Some(r) = self.get(i, j) {
                    out.push(r);
                }
            }
        }
        out
    }
}

/// Pearson correlation between every pair of per-day series.
pub fn pairwise_correlation(series: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let n = series.len();
    if n < 2 {
        return Err(Error::Shape("correlation needs at least two firms".into()));
    }
    let len = series[0].len();
    if len < 2 || series.iter().any(|s| s.len() != len) {
        return Err(Error::Shape("correlation needs equally long series of >= 2 days".into()));
    }
    let centered: Vec<(Vec<f64>, f64)> = series
        .iter()
        .map(|s| {
            let mean = s.iter().sum::<f64>() / len as f64;
            let c: Vec<f64> = s.iter().map(|x| x - mean).collect();
            let norm = math::sqrt(c.iter().map(|x| x * x).sum());
            (c, norm)
        })
        .collect();
    let mut entries = vec![None; n * n];
    for i in 0..n {
        for j in i..n {
            let (ci, ni) = &centered[i];
            let (cj, nj) = &centered[j];
            let scale = ni * nj;
            let r = if !(scale > 1e-12 * len as f64) {
                None
            } else if i == j {
                Some(1.0)
            } else {
                let dot: f64 = ci.iter().zip(cj).map(|(a, b)| a * b).sum();
                Some((dot / scale).clamp(-1.0, 1.0))
            };
            entries[i * n + j] = r;
            entries[j * n + i] = r;
        }
    }
    Ok(CorrelationMatrix { n, entries })
}

/// Per-day totals over `periods` for each firm, taken from the firms'
/// day histories. Days are matched by their ordinal; only days present for
/// every firm are kept.
pub fn period_sum_series(profiles: &[FirmProfile], periods: &[usize]) -> Result<Vec<Vec<f64>>> {
    let first = profiles.first().ok_or(Error::NoFirms)?;
    let mut common: Vec<i64> = first.history.iter().map(|d| d.day).collect();
    for prof in &profiles[1..] {
        common.retain(|day| prof.history.iter().any(|d| d.day == *day));
    }
    common.sort_unstable();
    common.dedup();
    Ok(profiles
        .iter()
        .map(|prof| {
            common
                .iter()
                .map(|day| {
                    let rec = prof.history.iter().find(|d| d.day == *day).unwrap();
                    periods.iter().map(|&tau| rec.demand[tau]).sum()
                })
                .collect()
        })
        .collect())
}

/// `sum over periods of collective demand < bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub periods: Vec<usize>,
    pub bound: f64,
}

/// Conditioning event `{ |sum over conditioning periods of collective
/// demand - target| <= h } ∩ constraints` and the numerator periods whose
/// per-firm total is averaged over it.
#[derive(Debug, Clone, PartialEq)]
pub struct BandQuery {
    pub numerator: Vec<usize>,
    pub conditioning: Vec<usize>,
    pub target: f64,
    pub constraints: Vec<Constraint>,
    /// Initial half-width; defaults to 1% of the target.
    pub half_width: Option<f64>,
    pub min_hits: usize,
}

impl BandQuery {
    /// Numerator and conditioning over the same periods, no constraints.
    pub fn over(periods: Vec<usize>, target: f64) -> Self {
        BandQuery {
            numerator: periods.clone(),
            conditioning: periods,
            target,
            constraints: Vec::new(),
            half_width: None,
            min_hits: MIN_BAND_HITS,
        }
    }

    fn initial_half_width(&self) -> f64 {
        self.half_width
            .unwrap_or_else(|| (0.01 * math::abs(self.target)).max(1e-6))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub value: f64,
    pub se: f64,
    /// Accepted scenarios (the effective sample count).
    pub hits: usize,
    /// Half-width actually used (0 in exact mode).
    pub half_width: f64,
}

fn constraint_mask(scen: &ScenarioSet, constraints: &[Constraint]) -> Vec<bool> {
    let mut ok = vec![true; scen.len()];
    for c in constraints {
        let sums = scen.collective_sums(&c.periods);
        for (flag, s) in ok.iter_mut().zip(sums) {
            *flag &= s < c.bound;
        }
    }
    ok
}

/// Band-conditional means of every firm's numerator total, all sharing one
/// accepted band.
pub fn conditional_means_band(scen: &ScenarioSet, query: &BandQuery) -> Result<Vec<BandEstimate>> {
    let sums = scen.collective_sums(&query.conditioning);
    let mask = constraint_mask(scen, &query.constraints);
    let numer = |s: usize, i: usize| -> f64 {
        query.numerator.iter().map(|&tau| scen.demand(s, i, tau)).sum()
    };

    if scen.is_exact() {
        let accepted: Vec<usize> = (0..scen.len())
            .filter(|&s| mask[s] && math::abs(sums[s] - query.target) <= EXACT_MATCH_TOL)
            .collect();
        let mass: f64 = accepted.iter().map(|&s| scen.weight(s)).sum();
        if !(mass > 0.0) {
            return Err(Error::RareEvent { hits: 0, half_width: 0.0 });
        }
        return Ok((0..scen.n_firms())
            .map(|i| BandEstimate {
                value: accepted.iter().map(|&s| scen.weight(s) * numer(s, i)).sum::<f64>() / mass,
                se: 0.0,
                hits: accepted.len(),
                half_width: 0.0,
            })
            .collect());
    }

    let mut h = query.initial_half_width();
    let mut hits = 0;
    for _ in 0..=MAX_BAND_DOUBLINGS {
        let accepted: Vec<usize> = (0..scen.len())
            .filter(|&s| mask[s] && math::abs(sums[s] - query.target) <= h)
            .collect();
        hits = accepted.len();
        if hits >= query.min_hits {
            return Ok((0..scen.n_firms())
                .map(|i| {
                    let (value, se, _) = math::mean_and_se(accepted.iter().map(|&s| numer(s, i)));
                    BandEstimate { value, se, hits, half_width: h }
                })
                .collect());
        }
        h *= 2.0;
    }
    Err(Error::RareEvent { hits, half_width: h / 2.0 })
}

/// Band-conditional mean of one firm's numerator total.
pub fn conditional_mean_band(scen: &ScenarioSet, firm: usize, query: &BandQuery) -> Result<BandEstimate> {
    if firm >= scen.n_firms() {
        return Err(Error::Shape(format!("firm {firm} out of range")));
    }
    Ok(conditional_means_band(scen, query)?[firm])
}

/// Interquartile range of equally weighted values.
fn iqr(values: &[f64]) -> f64 {
    weighted_quantile(values, None, 0.75) - weighted_quantile(values, None, 0.25)
}

/// Density of the conditioning sum at `query.target`, restricted to the
/// constraint event: `d/dr P(S <= r, constraints)`. Monte Carlo mode uses a
/// histogram bin of Freedman-Diaconis width centred on the target; exact
/// mode returns the probability mass at the target instead.
pub fn sub_density(scen: &ScenarioSet, query: &BandQuery) -> f64 {
    let sums = scen.collective_sums(&query.conditioning);
    let mask = constraint_mask(scen, &query.constraints);
    if scen.is_exact() {
        return (0..scen.len())
            .filter(|&s| mask[s] && math::abs(sums[s] - query.target) <= EXACT_MATCH_TOL)
            .map(|s| scen.weight(s))
            .sum();
    }
    let n = sums.len() as f64;
    let mut width = 2.0 * iqr(&sums) / math::cbrt(n);
    if !(width > 0.0) {
        width = 1e-6 * math::abs(query.target).max(1.0);
    }
    let half = 0.5 * width;
    let count = (0..sums.len())
        .filter(|&s| mask[s] && math::abs(sums[s] - query.target) <= half)
        .count();
    count as f64 / (n * width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandDistribution;
    use alloc::vec;

    fn uniform_firm(id: &str, high: f64) -> FirmProfile {
        FirmProfile::new(id, vec![DemandDistribution::Uniform { low: 0.0, high }])
    }

    #[test]
    fn uniform_quantile_matches_inverse_cdf() {
        let q = aggregate_quantile(&[uniform_firm("a", 10.0)], &[0], 24.0 / 39.0, 200_000, 1).unwrap();
        assert!((q - 10.0 * 24.0 / 39.0).abs() < 0.03, "{q}");
    }

    #[test]
    fn quantile_at_zero_is_support_bound() {
        let q = aggregate_quantile(&[uniform_firm("a", 10.0)], &[0], 0.0, 1000, 1).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn triangular_median() {
        let firms = [uniform_firm("a", 10.0), uniform_firm("b", 10.0)];
        let q = aggregate_quantile(&firms, &[0], 0.5, 200_000, 3).unwrap();
        assert!((q - 10.0).abs() < 0.05, "{q}");
    }

    #[test]
    fn quantile_monotone_under_common_numbers() {
        let firms = [uniform_firm("a", 10.0), uniform_firm("b", 4.0)];
        let scen = ScenarioSet::from_profiles(&firms, 5000, 9, SamplingMode::Independent).unwrap();
        let mut prev = 0.0;
        for k in 0..=100 {
            let q = scenario_quantile(&scen, &[0], k as f64 / 100.0);
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn weighted_quantile_uses_cumulative_mass() {
        let v = [3.0, 1.0, 2.0];
        let w = [0.5, 0.25, 0.25];
        assert_eq!(weighted_quantile(&v, Some(&w), 0.25), 1.0);
        assert_eq!(weighted_quantile(&v, Some(&w), 0.3), 2.0);
        assert_eq!(weighted_quantile(&v, Some(&w), 0.5), 2.0);
        assert_eq!(weighted_quantile(&v, Some(&w), 0.51), 3.0);
    }

    #[test]
    fn correlation_extremes_and_undefined() {
        let a: Vec<f64> = (0..50).map(|k| (k * 7 % 11) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| 10.0 - x).collect();
        let flat = vec![2.0; 50];
        let m = pairwise_correlation(&[a.clone(), a.clone(), b, flat]).unwrap();
        assert!((m.get(0, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.get(0, 2).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m.get(0, 3), None);
        assert_eq!(m.get(2, 0), m.get(0, 2));
    }

    #[test]
    fn independent_series_are_nearly_uncorrelated() {
        let firms = [uniform_firm("a", 1.0), uniform_firm("b", 1.0)];
        let scen = ScenarioSet::from_profiles(&firms, 10_000, 17, SamplingMode::Independent).unwrap();
        let series: Vec<Vec<f64>> = (0..2)
            .map(|i| (0..scen.len()).map(|s| scen.demand(s, i, 0)).collect())
            .collect();
        let r = pairwise_correlation(&series).unwrap().get(0, 1).unwrap();
        assert!(r.abs() < 0.05, "{r}");
    }

    #[test]
    fn band_mean_symmetric_pair() {
        let firms = [uniform_firm("a", 10.0), uniform_firm("b", 10.0)];
        let scen = ScenarioSet::from_profiles(&firms, 200_000, 5, SamplingMode::Independent).unwrap();
        let q = BandQuery::over(vec![0], 10.0);
        let est = conditional_means_band(&scen, &q).unwrap();
        assert!((est[0].value - 5.0).abs() < 0.1, "{:?}", est[0]);
        assert!(est[0].hits >= MIN_BAND_HITS);
        let total = est[0].value + est[1].value;
        assert!((total - 10.0).abs() <= 2.0 * est[0].half_width);
    }

    #[test]
    fn band_mean_of_zero_firm_is_zero() {
        let firms = [uniform_firm("a", 10.0), FirmProfile::new("z", vec![DemandDistribution::zero()])];
        let scen = ScenarioSet::from_profiles(&firms, 20_000, 5, SamplingMode::Independent).unwrap();
        let est = conditional_mean_band(&scen, 1, &BandQuery::over(vec![0], 4.0)).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn rare_event_is_reported() {
        let firms = [uniform_firm("a", 10.0)];
        let scen = ScenarioSet::from_profiles(&firms, 500, 5, SamplingMode::Independent).unwrap();
        assert!(matches!(
            conditional_mean_band(&scen, 0, &BandQuery::over(vec![0], 5.0)),
            Err(Error::RareEvent { .. })
        ));
    }

    #[test]
    fn uniform_density_is_flat() {
        let firms = [uniform_firm("a", 10.0)];
        let scen = ScenarioSet::from_profiles(&firms, 200_000, 8, SamplingMode::Independent).unwrap();
        let d = sub_density(&scen, &BandQuery::over(vec![0], 5.0));
        assert!((d - 0.1).abs() < 0.01, "{d}");
    }
}
