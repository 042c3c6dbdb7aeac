//! Marginal value of stored energy under an `(M, C)` dispatch rule.
//!
//! Starting from the end of period `t` with `u` kWh in storage, follow the
//! reservation rule forward. The extra marginal unit of energy is consumed in
//! the first period `k` whose available energy falls short of demand (a strict
//! deficit while the state is at or above the reservation `M_k`). Consuming it
//! there avoids buying `eta_out` kWh at the period rate; if it is never used it
//! saves its own refill instead. Measured against the refill cost
//! `pi_off / eta_in`, the marginal value is
//!
//! ```text
//! V'_t(u) = sum_k (pi_k eta_out - pi_off / eta_in) P_t^k(u)
//! ```
//!
//! where `P_t^k` is the first-purchase probability. For `u >= M_{t+1}` the
//! reservations are non-increasing, so "a purchase happens by period k" is
//! exactly `u < b_k` with `b_k = max_{t<m<=k} (cumulative demand / eta_out +
//! M_m)`. Sorting these thresholds once per period turns every evaluation into
//! a binary search over the shared scenario matrix.

use alloc::vec::Vec;

use crate::demand::{Estimate, ScenarioSet};
use crate::math;
use crate::policy::Efficiency;
use crate::schedule::ToUSchedule;

/// Rate multiplied out by efficiencies: `pi_k eta_out` for `1 <= k <= p+q`,
/// and the refill cost `pi_off / eta_in` for the sentinel `k = p+q+1`.
pub fn effective_rate(sched: &ToUSchedule, eff: Efficiency, k: usize) -> f64 {
    if k == 0 || k > sched.p() + sched.q() {
        sched.off_peak_rate().cents() / eff.eta_in
    } else {
        sched.rate_cents(k) * eff.eta_out
    }
}

/// Per-period reservation levels indexed by flat period `1..=p+q`
/// (entry 0 unused, ramp-down entries zero).
pub fn reservation_levels(sched: &ToUSchedule, reservations: &[f64]) -> Vec<f64> {
    let mut levels = alloc::vec![0.0; sched.n_periods()];
    for (j, &m) in reservations.iter().enumerate().take(sched.p()) {
        levels[j + 1] = m;
    }
    levels
}

#[derive(Debug, Clone)]
struct ThresholdTable {
    sorted: Vec<f64>,
    /// Suffix sums of weights in sorted order (exact mode only).
    suffix: Option<Vec<f64>>,
}

impl ThresholdTable {
    /// Probability that the threshold exceeds `u`.
    fn above(&self, u: f64) -> f64 {
        let idx = self.sorted.partition_point(|&b| b <= u);
        match &self.suffix {
            Some(s) => s[idx],
            None => (self.sorted.len() - idx) as f64 / self.sorted.len() as f64,
        }
    }
}

/// Marginal value from the end of one period, valid for `u >= M_{start+1}`.
#[derive(Debug, Clone)]
pub struct MarginalValue {
    start: usize,
    /// `effective_rate(k) - effective_rate(k+1)` for `k = start+1..=p+q`.
    steps: Vec<f64>,
    /// `effective_rate(k) - effective_rate(p+q+1)`.
    gains: Vec<f64>,
    tables: Vec<ThresholdTable>,
    n: usize,
    exact: bool,
}

impl MarginalValue {
    /// `levels` as returned by [`reservation_levels`].
    pub fn build(
        scen: &ScenarioSet,
        sched: &ToUSchedule,
        eff: Efficiency,
        levels: &[f64],
        start: usize,
    ) -> Self {
        let last = sched.p() + sched.q();
        let n = scen.len();
        let span = last - start;
        let mut thresholds: Vec<Vec<f64>> = (0..span).map(|_| Vec::with_capacity(n)).collect();
        for s in 0..n {
            let mut cum = 0.0;
            let mut running = f64::NEG_INFINITY;
            for (off, col) in thresholds.iter_mut().enumerate() {
                let k = start + 1 + off;
                cum += scen.collective_demand(s, k);
                let b = cum / eff.eta_out + levels[k];
                if b > running {
                    running = b;
                }
                col.push(running);
            }
        }
        let tables = thresholds
            .into_iter()
            .map(|col| {
                if scen.is_exact() {
                    let mut pairs: Vec<(f64, f64)> =
                        col.iter().enumerate().map(|(s, &b)| (b, scen.weight(s))).collect();
                    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let mut suffix = alloc::vec![0.0; pairs.len() + 1];
                    for i in (0..pairs.len()).rev() {
                        suffix[i] = suffix[i + 1] + pairs[i].1;
                    }
                    ThresholdTable {
                        sorted: pairs.into_iter().map(|p| p.0).collect(),
                        suffix: Some(suffix),
                    }
                } else {
                    let mut sorted = col;
                    sorted.sort_by(|a, b| a.total_cmp(b));
                    ThresholdTable { sorted, suffix: None }
                }
            })
            .collect();
        let sentinel = effective_rate(sched, eff, last + 1);
        let steps = (start + 1..=last)
            .map(|k| effective_rate(sched, eff, k) - effective_rate(sched, eff, k + 1))
            .collect();
        let gains = (start + 1..=last)
            .map(|k| effective_rate(sched, eff, k) - sentinel)
            .collect();
        MarginalValue {
            start,
            steps,
            gains,
            tables,
            n,
            exact: scen.is_exact(),
        }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Distinct threshold values in ascending order: the points where the
    /// step function [`MarginalValue::value`] can change (exact mode).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.tables.iter().flat_map(|t| t.sorted.iter().copied()).collect();
        all.sort_by(|a, b| a.total_cmp(b));
        all.dedup();
        all
    }

    /// Largest threshold: the marginal value vanishes from here on.
    pub fn upper_bound(&self) -> f64 {
        self.tables
            .last()
            .and_then(|t| t.sorted.last().copied())
            .unwrap_or(0.0)
    }

    /// Probability that a purchase has happened by each later period.
    fn cumulative(&self, u: f64) -> Vec<f64> {
        self.tables.iter().map(|t| t.above(u)).collect()
    }

    /// `V'_start(u)` in cents per stored kWh.
    pub fn value(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (step, table) in self.steps.iter().zip(&self.tables) {
            acc += step * table.above(u);
        }
        acc
    }

    pub fn estimate(&self, u: f64) -> Estimate {
        let value = self.value(u);
        if self.exact {
            return Estimate::exact(value);
        }
        let second: f64 = self
            .first_purchase(u)
            .iter()
            .zip(&self.gains)
            .map(|(p, g)| g * g * p)
            .sum();
        let var = (second - value * value).max(0.0);
        Estimate {
            value,
            se: math::sqrt(var / self.n as f64),
        }
    }

    /// `P_start^k(u)` for `k = start+1..=p+q`.
    pub fn first_purchase(&self, u: f64) -> Vec<f64> {
        let cum = self.cumulative(u);
        let mut prev = 0.0;
        cum.iter()
            .map(|&c| {
                let p = (c - prev).max(0.0);
                prev = c;
                p
            })
            .collect()
    }
}

/// Marginal values from the end of every period under fixed reservations.
#[derive(Debug, Clone)]
pub struct ValueTable {
    levels: Vec<f64>,
    by_start: Vec<MarginalValue>,
    exact: bool,
    n: usize,
}

impl ValueTable {
    pub fn build(scen: &ScenarioSet, sched: &ToUSchedule, eff: Efficiency, reservations: &[f64]) -> Self {
        let levels = reservation_levels(sched, reservations);
        let last = sched.p() + sched.q();
        let by_start = (0..last)
            .map(|t| MarginalValue::build(scen, sched, eff, &levels, t))
            .collect();
        ValueTable {
            levels,
            by_start,
            exact: scen.is_exact(),
            n: scen.len(),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Every point where any marginal value can change, ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.by_start.iter().flat_map(|m| m.breakpoints()).collect();
        all.extend(self.levels.iter().copied());
        all.sort_by(|a, b| a.total_cmp(b));
        all.dedup();
        all
    }

    /// Start index whose structure applies: the state passes untouched
    /// through later ramp-up periods whose reservation exceeds it.
    fn effective_start(&self, after: usize, u: f64) -> Option<usize> {
        let last = self.levels.len() - 1;
        let mut m = after + 1;
        while m <= last && self.levels[m] > u {
            m += 1;
        }
        (m <= last).then(|| m - 1)
    }

    /// `V'_after(u)`; zero after the last period.
    pub fn marginal_value(&self, after: usize, u: f64) -> Estimate {
        match self.effective_start(after, u) {
            Some(t) => self.by_start[t].estimate(u),
            None => Estimate::exact(0.0),
        }
    }

    /// `P_after^k(u)`: probability that `k` is the first period needing the
    /// marginal unit.
    pub fn first_purchase_prob(&self, after: usize, k: usize, u: f64) -> Estimate {
        let Some(t) = self.effective_start(after, u) else {
            return Estimate::exact(0.0);
        };
        if k <= t || k >= self.levels.len() {
            return Estimate::exact(0.0);
        }
        let p = self.by_start[t].first_purchase(u)[k - t - 1];
        let se = if self.exact {
            0.0
        } else {
            math::sqrt(p * (1.0 - p) / self.n as f64)
        };
        Estimate { value: p, se }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
        use alloc::vec;

    fn sched(off: f64, ru: &[f64], rd: &[f64]) -> ToUSchedule {
        ToUSchedule::from_rates(off, ru, rd, 14.0).unwrap()
    }

    #[test]
    fn deterministic_first_purchase() {
        let s = sched(13.0, &[28.0], &[52.0]);
        let scen = ScenarioSet::from_rows(1, 3, vec![0.0, 3.0, 3.0]).unwrap();
        let table = ValueTable::build(&scen, &s, Efficiency::LOSSLESS, &[2.0]);
        assert_eq!(table.first_purchase_prob(0, 1, 4.0).value, 1.0);
        assert_eq!(table.first_purchase_prob(0, 2, 4.0).value, 0.0);
    }

    #[test]
    fn zero_demand_never_purchases() {
        let s = sched(13.0, &[28.0], &[52.0, 20.0]);
        let scen = ScenarioSet::from_rows(1, 4, vec![0.0; 4]).unwrap();
        let table = ValueTable::build(&scen, &s, Efficiency::LOSSLESS, &[1.0]);
        for k in 1..=3 {
            assert_eq!(table.first_purchase_prob(0, k, 5.0).value, 0.0);
        }
        assert_eq!(table.marginal_value(0, 5.0).value, 0.0);
    }

    #[test]
    fn state_below_reservation_passes_through() {
        // Reservation 4 in RU_1 with only 3 kWh: nothing is released there.
        let s = sched(13.0, &[28.0], &[52.0]);
        let scen = ScenarioSet::from_rows(1, 3, vec![0.0, 5.0, 1.0]).unwrap();
        let table = ValueTable::build(&scen, &s, Efficiency::LOSSLESS, &[4.0]);
        assert_eq!(table.first_purchase_prob(0, 1, 3.0).value, 0.0);
        assert_eq!(table.first_purchase_prob(0, 2, 3.0).value, 0.0);
        assert_eq!(table.marginal_value(0, 3.0).value, 0.0);
        assert_eq!(table.first_purchase_prob(0, 2, 0.5).value, 1.0);
        assert_eq!(table.marginal_value(0, 0.5).value, 39.0);
    }

    #[test]
    fn exact_weights_give_exact_probabilities() {
        let s = sched(13.0, &[], &[52.0]);
        let data: Vec<f64> = (0..=5).flat_map(|k| [0.0, k as f64]).collect();
        let scen = ScenarioSet::from_weighted_rows(1, 2, data, vec![1.0 / 6.0; 6]).unwrap();
        let table = ValueTable::build(&scen, &s, Efficiency::LOSSLESS, &[]);
        // P(X > 3) = 2/6
        let p = table.first_purchase_prob(0, 1, 3.0);
        assert!((p.value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.se, 0.0);
    }
}
