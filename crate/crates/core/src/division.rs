//! The decoupled baseline: each non-off-peak period is treated as its own
//! two-rate sharing problem (that period against off peak), with its own
//! physical storage and its own daily settlement. Firm capacities add up
//! across the sub-problems.

use alloc::vec;
use alloc::vec::Vec;

use crate::demand::{RealizedDay, ScenarioSet};
use crate::error::Result;
use crate::game::{solve_equilibrium, EquilibriumResult};
use crate::market::SharingMarket;
use crate::policy::Efficiency;
use crate::schedule::ToUSchedule;

#[derive(Debug, Clone)]
pub struct SubProblem {
    /// Flat period of the full schedule this sub-problem covers.
    pub period: usize,
    pub schedule: ToUSchedule,
    pub spread_cents: f64,
    pub equilibrium: EquilibriumResult,
    pub market: SharingMarket,
}

#[derive(Debug, Clone)]
pub struct DivisionPlan {
    pub subproblems: Vec<SubProblem>,
    /// Total capacity per firm across all sub-problems.
    pub firm_capacities: Vec<f64>,
    off_peak_cents: f64,
}

impl DivisionPlan {
    pub fn total_capacity(&self) -> f64 {
        self.firm_capacities.iter().sum()
    }

    /// Daily investment per firm, `pi_s eta_out C_i`.
    pub fn investment(&self, sched: &ToUSchedule, eff: Efficiency) -> Vec<f64> {
        self.firm_capacities
            .iter()
            .map(|c| sched.storage_cost_cents() * eff.eta_out * c)
            .collect()
    }

    /// Operating cost of each firm on one day: every sub-market settles its
    /// own period; off-peak demand is billed once.
    pub fn settle_day(&self, day: &RealizedDay) -> Result<Vec<f64>> {
        let n = day.n_firms();
        let mut totals: Vec<f64> = (0..n).map(|i| self.off_peak_cents * day.get(i, 0)).collect();
        for sub in &self.subproblems {
            let mut data = Vec::with_capacity(2 * n);
            for i in 0..n {
                data.push(0.0);
                data.push(day.get(i, sub.period));
            }
            let sub_day = RealizedDay::new(n, 2, data)?;
            let out = sub.market.settle_day(&sub_day, &sub.equilibrium.allocations)?;
            for (t, c) in totals.iter_mut().zip(&out.firm_totals) {
                *t += c;
            }
        }
        Ok(totals)
    }
}

/// Solves one two-rate sharing game per non-off-peak period.
pub fn decompose_two_tier(scen: &ScenarioSet, sched: &ToUSchedule, eff: Efficiency) -> Result<DivisionPlan> {
    let n = scen.n_firms();
    let mut firm_capacities = vec![0.0; n];
    let mut subproblems = Vec::with_capacity(sched.n_periods() - 1);
    for tau in 1..sched.n_periods() {
        let sub_sched = sched.two_tier_for(tau)?;
        let sub_scen = scen.select_periods(&[0, tau]);
        let equilibrium = solve_equilibrium(&sub_scen, &sub_sched, eff)?;
        let market = SharingMarket::new(
            &sub_sched,
            eff,
            &sub_scen.collective(),
            equilibrium.collective_capacity,
            &[],
        )?;
        for (c, a) in firm_capacities.iter_mut().zip(&equilibrium.allocations) {
            *c += a;
        }
        subproblems.push(SubProblem {
            period: tau,
            spread_cents: sched.rate_cents(tau) - sched.off_peak_rate().cents(),
            schedule: sub_sched,
            equilibrium,
            market,
        });
    }
    Ok(DivisionPlan {
        subproblems,
        firm_capacities,
        off_peak_cents: sched.off_peak_rate().cents(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandDistribution, FirmProfile, SamplingMode};
    use alloc::vec;

    fn community(n: usize, periods: usize, seed: u64) -> ScenarioSet {
        let f = FirmProfile::new(
            "f",
            (0..periods)
                .map(|_| DemandDistribution::Uniform { low: 0.0, high: 6.0 })
                .collect(),
        );
        ScenarioSet::from_profiles(&vec![f; n], 100_000, seed, SamplingMode::Independent).unwrap()
    }

    #[test]
    fn sce_spreads_and_viability() {
        let sched = ToUSchedule::sce_tou_d_a();
        let plan = decompose_two_tier(&community(2, 4, 1), &sched, Efficiency::LOSSLESS).unwrap();
        let spreads: Vec<f64> = plan.subproblems.iter().map(|s| s.spread_cents).collect();
        assert_eq!(spreads, vec![15.0, 39.0, 15.0]);
        assert!(plan.subproblems.iter().all(|s| s.equilibrium.collective_capacity > 0.0));
    }

    #[test]
    fn only_peak_invests_when_storage_is_dear() {
        let base = ToUSchedule::sce_tou_d_a();
        let sched = ToUSchedule::new(
            base.off_peak_rate(),
            base.ramp_up_rates().to_vec(),
            base.ramp_down_rates().to_vec(),
            base.windows().to_vec(),
            crate::schedule::Rate::from_tenths(160),
        );
        let plan = decompose_two_tier(&community(2, 4, 2), &sched, Efficiency::LOSSLESS).unwrap();
        let caps: Vec<f64> = plan.subproblems.iter().map(|s| s.equilibrium.collective_capacity).collect();
        assert_eq!(caps[0], 0.0);
        assert!(caps[1] > 0.0);
        assert_eq!(caps[2], 0.0);
    }

    #[test]
    fn two_tier_schedule_decomposes_to_itself() {
        let sched = ToUSchedule::from_rates(13.0, &[], &[52.0], 14.0).unwrap();
        let scen = community(2, 2, 3);
        let plan = decompose_two_tier(&scen, &sched, Efficiency::LOSSLESS).unwrap();
        let eq = solve_equilibrium(&scen, &sched, Efficiency::LOSSLESS).unwrap();
        assert_eq!(plan.firm_capacities, eq.allocations);
        let market = SharingMarket::new(&sched, Efficiency::LOSSLESS, &scen.collective(), eq.collective_capacity, &[]).unwrap();
        for s in 0..20 {
            let day = scen.day(s);
            let a = plan.settle_day(&day).unwrap();
            let b = market.settle_day(&day, &eq.allocations).unwrap().firm_totals;
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
