//! Aggregator-side sharing market: posted sharing prices, collective
//! dispatch of the pooled storage, and per-firm settlement.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::demand::stats::scenario_quantile;
use crate::demand::{Estimate, RealizedDay, ScenarioSet};
use crate::error::{Error, Result};
use crate::math;
use crate::policy::{dispatch_step, simulate_standalone_day, Efficiency, ReservationPolicy};
use crate::schedule::ToUSchedule;
use crate::value::ValueTable;

pub use crate::policy::reservation_trajectory;

/// Pooled storage of a community together with the forward-looking value
/// table the aggregator prices against.
#[derive(Debug, Clone)]
pub struct SharingMarket {
    sched: ToUSchedule,
    eff: Efficiency,
    capacity: f64,
    reservations: Vec<f64>,
    table: ValueTable,
}

impl SharingMarket {
    /// `scen` supplies the collective demand law used for forward prices;
    /// reservations above the capacity are clamped to it.
    pub fn new(
        sched: &ToUSchedule,
        eff: Efficiency,
        scen: &ScenarioSet,
        capacity: f64,
        reservations: &[f64],
    ) -> Result<Self> {
        if reservations.len() != sched.p() {
            return Err(Error::Shape(format!(
                "{} reservations for {} ramp-up periods",
                reservations.len(),
                sched.p()
            )));
        }
        let reservations: Vec<f64> = reservations.iter().map(|&m| m.min(capacity)).collect();
        ReservationPolicy::new(capacity, reservations.clone(), eff)?;
        let table = ValueTable::build(scen, sched, eff, &reservations);
        Ok(SharingMarket {
            sched: sched.clone(),
            eff,
            capacity,
            reservations,
            table,
        })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn reservations(&self) -> &[f64] {
        &self.reservations
    }

    pub fn schedule(&self) -> &ToUSchedule {
        &self.sched
    }

    pub fn efficiency(&self) -> Efficiency {
        self.eff
    }

    /// The collective `(M, C)` policy the market dispatches.
    pub fn policy(&self) -> ReservationPolicy {
        ReservationPolicy {
            capacity_kwh: self.capacity,
            reservations_kwh: self.reservations.clone(),
            eta_in: self.eff.eta_in,
            eta_out: self.eff.eta_out,
        }
    }

    fn reserve(&self, tau: usize) -> f64 {
        if tau >= 1 && tau <= self.reservations.len() {
            self.reservations[tau - 1]
        } else {
            0.0
        }
    }

    /// Sharing price of period `tau` given collective demand and the pooled
    /// storage level entering the period.
    ///
    /// On a deficit (demand at least what storage may release) the price is
    /// the period rate itself. Otherwise one more kWh left in storage is
    /// worth the refill it saves plus its marginal value, per delivered kWh.
    pub fn clearing_price(&self, tau: usize, collective_demand: f64, u_prev: f64) -> Estimate {
        if tau == 0 {
            return Estimate::exact(self.sched.off_peak_rate().cents());
        }
        let step = dispatch_step(u_prev, collective_demand, self.reserve(tau), self.eff);
        if step.deficit {
            return Estimate::exact(self.sched.rate_cents(tau));
        }
        let forward = self.table.marginal_value(tau, step.u_next);
        let refill = self.sched.off_peak_rate().cents() / self.eff.eta_in;
        Estimate {
            value: (refill + forward.value) / self.eff.eta_out,
            se: forward.se / self.eff.eta_out,
        }
    }

    /// Dispatches the pool for one realized day and settles every firm.
    /// `capacities` are the firms' shares of the pool.
    pub fn settle_day(&self, day: &RealizedDay, capacities: &[f64]) -> Result<MarketOutcome> {
        let n_firms = day.n_firms();
        let n_periods = self.sched.n_periods();
        if capacities.len() != n_firms {
            return Err(Error::Shape(format!("{} capacities for {n_firms} firms", capacities.len())));
        }
        if day.n_periods() != n_periods {
            return Err(Error::Shape(format!("day has {} periods, schedule {n_periods}", day.n_periods())));
        }
        let sum: f64 = capacities.iter().sum();
        if math::abs(sum - self.capacity) > 1e-9 {
            return Err(Error::CapacityMismatch {
                sum,
                expected: self.capacity,
            });
        }

        let off_rate = self.sched.off_peak_rate().cents();
        let mut u_firm = capacities.to_vec();
        let mut u_c = self.capacity;
        let mut prices = vec![off_rate; n_periods];
        let mut deficit = vec![false; n_periods];
        let mut grid = vec![0.0; n_periods];
        let mut storage = vec![u_c; n_periods];
        let mut balance = vec![0.0; n_periods];
        let mut procurement = vec![vec![0.0; n_periods]; n_firms];
        let mut cash = vec![vec![0.0; n_periods]; n_firms];
        for (i, row) in procurement.iter_mut().enumerate() {
            row[0] = day.get(i, 0);
            cash[i][0] = off_rate * day.get(i, 0);
        }
        grid[0] = day.collective(0);

        for tau in 1..n_periods {
            let x_c = day.collective(tau);
            let price = self.clearing_price(tau, x_c, u_c).value;
            let step = dispatch_step(u_c, x_c, self.reserve(tau), self.eff);
            prices[tau] = price;
            deficit[tau] = step.deficit;
            grid[tau] = step.purchase;
            let mut intake = 0.0;
            for i in 0..n_firms {
                let share = if u_c > 0.0 { u_firm[i] / u_c } else { 0.0 };
                let d_i = step.discharge * share;
                let own = step.delivered * share;
                let net = day.get(i, tau) - own;
                procurement[i][tau] = net;
                cash[i][tau] = price * net;
                intake += price * net;
                u_firm[i] -= d_i;
            }
            balance[tau] = intake - self.sched.rate_cents(tau) * step.purchase;
            u_c = step.u_next;
            storage[tau] = u_c;
        }

        let recharge: Vec<f64> = capacities
            .iter()
            .zip(&u_firm)
            .map(|(c, u)| off_rate * (c - u) / self.eff.eta_in)
            .collect();
        let totals: Vec<f64> = (0..n_firms)
            .map(|i| cash[i][1..].iter().sum::<f64>() + cash[i][0] + recharge[i])
            .collect();
        Ok(MarketOutcome {
            day: day.clone(),
            capacities: capacities.to_vec(),
            prices,
            deficit,
            grid_purchase: grid,
            storage,
            procurement,
            cash_flow: cash,
            recharge_cost: recharge,
            firm_totals: totals,
            aggregator_by_period: balance.clone(),
            aggregator_balance: balance.iter().sum(),
        })
    }

    /// Checks that the settled firm costs add up to the collective policy's
    /// own cost on the same realization.
    pub fn social_cost_certificate(&self, outcome: &MarketOutcome) -> Result<CostCertificate> {
        let collective = simulate_standalone_day(&self.policy(), &self.sched, &outcome.day.collective_day())?;
        let settled: f64 = outcome.firm_totals.iter().sum();
        let diff = settled - collective.total;
        Ok(CostCertificate {
            settled_total: settled,
            collective_cost: collective.total,
            difference: diff,
            passed: math::abs(diff) <= CERTIFICATE_TOLERANCE * collective.total.abs().max(1.0),
        })
    }
}

/// Relative tolerance of the welfare certificate.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-9;

/// One settled day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub day: RealizedDay,
    pub capacities: Vec<f64>,
    /// Sharing price per flat period (off-peak entry is the off-peak rate).
    pub prices: Vec<f64>,
    pub deficit: Vec<bool>,
    /// Collective grid purchase per period.
    pub grid_purchase: Vec<f64>,
    /// Pooled storage after each period.
    pub storage: Vec<f64>,
    /// `D_tau^i`: positive when firm `i` procures, negative when it supplies.
    pub procurement: Vec<Vec<f64>>,
    /// Cents paid by each firm per period (negative when paid).
    pub cash_flow: Vec<Vec<f64>>,
    /// Off-peak refill of each firm's own share.
    pub recharge_cost: Vec<f64>,
    pub firm_totals: Vec<f64>,
    pub aggregator_by_period: Vec<f64>,
    /// Intake minus grid payments; zero when the market balances.
    pub aggregator_balance: f64,
}

impl MarketOutcome {
    pub fn total_cost(&self) -> f64 {
        self.firm_totals.iter().sum()
    }

    /// True when every price lies between the off-peak and period rate.
    pub fn prices_within_bounds(&self, sched: &ToUSchedule) -> bool {
        let low = sched.off_peak_rate().cents();
        (1..self.prices.len()).all(|tau| self.prices[tau] >= low && self.prices[tau] <= sched.rate_cents(tau))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCertificate {
    pub settled_total: f64,
    pub collective_cost: f64,
    pub difference: f64,
    pub passed: bool,
}

/// Collective ramp-up reservation for one ramp-up and one peak period:
/// the `(pi_2 - pi_1) / (pi_2 - pi_l)` quantile of collective peak demand.
pub fn rus_reservation(scen: &ScenarioSet, sched: &ToUSchedule) -> Result<f64> {
    if sched.p() != 1 || sched.q() != 1 {
        return Err(Error::Unsupported("needs one ramp-up and one peak period".into()));
    }
    let (low, mid, high) = (sched.rate_cents(0), sched.rate_cents(1), sched.rate_cents(2));
    Ok(scenario_quantile(scen, &[2], (high - mid) / (high - low)))
}
