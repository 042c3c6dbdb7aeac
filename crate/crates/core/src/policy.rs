//! Standalone `(M, C)` arbitrage policy: reservation thresholds for the
//! ramp-up periods, the capacity investment, and the daily dispatch rule.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::demand::stats::scenario_quantile;
use crate::demand::{Estimate, ScenarioSet};
use crate::error::{Error, Result};
use crate::math;
use crate::schedule::{PeriodId, ToUSchedule};
use crate::value::{effective_rate, reservation_levels, MarginalValue, ValueTable};
use crate::SOLVE_TOLERANCE;

/// Charging and discharging efficiencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub eta_in: f64,
    pub eta_out: f64,
}

impl Efficiency {
    pub const LOSSLESS: Efficiency = Efficiency {
        eta_in: 1.0,
        eta_out: 1.0,
    };

    pub fn new(eta_in: f64, eta_out: f64) -> Result<Self> {
        let ok = |x: f64| x > 0.0 && x <= 1.0;
        if ok(eta_in) && ok(eta_out) {
            Ok(Efficiency { eta_in, eta_out })
        } else {
            Err(Error::Efficiency { eta_in, eta_out })
        }
    }

    pub fn is_lossless(&self) -> bool {
        self.eta_in == 1.0 && self.eta_out == 1.0
    }

    /// `pi_peak eta_out - pi_off / eta_in > 0`.
    pub fn arbitrage_viable(&self, sched: &ToUSchedule) -> bool {
        effective_rate(sched, *self, sched.peak_index()) - effective_rate(sched, *self, 0) > 0.0
    }
}

impl Default for Efficiency {
    fn default() -> Self {
        Efficiency::LOSSLESS
    }
}

/// Capacity plus ramp-up reservations `M_1 >= ... >= M_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservationPolicy {
    pub capacity_kwh: f64,
    pub reservations_kwh: Vec<f64>,
    #[serde(default = "one")]
    pub eta_in: f64,
    #[serde(default = "one")]
    pub eta_out: f64,
}

fn one() -> f64 {
    1.0
}

impl ReservationPolicy {
    pub fn new(capacity_kwh: f64, reservations_kwh: Vec<f64>, eff: Efficiency) -> Result<Self> {
        let policy = ReservationPolicy {
            capacity_kwh,
            reservations_kwh,
            eta_in: eff.eta_in,
            eta_out: eff.eta_out,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Storage-free baseline.
    pub fn no_storage(p: usize) -> Self {
        ReservationPolicy {
            capacity_kwh: 0.0,
            reservations_kwh: vec![0.0; p],
            eta_in: 1.0,
            eta_out: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Efficiency::new(self.eta_in, self.eta_out)?;
        if !(self.capacity_kwh >= 0.0 && self.capacity_kwh.is_finite()) {
            return Err(Error::Shape(format!("capacity {} is not a valid size", self.capacity_kwh)));
        }
        let mut prev = (0usize, self.capacity_kwh);
        for (j, &m) in self.reservations_kwh.iter().enumerate() {
            if !(m >= 0.0) || m > prev.1 {
                return Err(Error::ReservationOrder {
                    index: j + 1,
                    value: m,
                    prev: prev.0,
                    prev_value: prev.1,
                });
            }
            prev = (j + 1, m);
        }
        Ok(())
    }

    pub fn efficiency(&self) -> Efficiency {
        Efficiency {
            eta_in: self.eta_in,
            eta_out: self.eta_out,
        }
    }

    /// Reservation in force in flat period `tau` (zero outside ramp-up).
    pub fn reservation(&self, tau: usize) -> f64 {
        if tau >= 1 && tau <= self.reservations_kwh.len() {
            self.reservations_kwh[tau - 1]
        } else {
            0.0
        }
    }

    /// Daily amortized investment: `pi_s eta_out C`.
    pub fn investment_cost(&self, sched: &ToUSchedule) -> f64 {
        sched.storage_cost_cents() * self.eta_out * self.capacity_kwh
    }
}

/// One period of the `(M, C)` dispatch rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub u_next: f64,
    /// Energy leaving storage (storage side).
    pub discharge: f64,
    /// Energy reaching the load: `discharge * eta_out`.
    pub delivered: f64,
    pub purchase: f64,
    /// Demand met or exceeded what storage could release (`>=` convention).
    pub deficit: bool,
}

/// Discharges what is available above `reserve`, buys the rest.
pub fn dispatch_step(u_prev: f64, demand: f64, reserve: f64, eff: Efficiency) -> Step {
    let avail = (u_prev - reserve).max(0.0);
    let reach = avail * eff.eta_out;
    if reach > demand {
        let discharge = demand / eff.eta_out;
        Step {
            u_next: u_prev - discharge,
            discharge,
            delivered: demand,
            purchase: 0.0,
            deficit: false,
        }
    } else {
        Step {
            u_next: u_prev - avail,
            discharge: avail,
            delivered: reach,
            purchase: demand - reach,
            deficit: true,
        }
    }
}

/// [`dispatch_step`] keyed by period: ramp-up periods keep `M_j`, ramp-down
/// periods discharge greedily. `reservations` are `M_1..M_p`.
pub fn reservation_trajectory(
    u_prev: f64,
    demand: f64,
    period: PeriodId,
    reservations: &[f64],
    eff: Efficiency,
) -> Step {
    let reserve = match period {
        PeriodId::RampUp(j) => reservations.get(j - 1).copied().unwrap_or(0.0),
        PeriodId::RampDown(_) => 0.0,
        PeriodId::OffPeak => {
            return Step {
                u_next: u_prev,
                discharge: 0.0,
                delivered: 0.0,
                purchase: demand,
                deficit: true,
            }
        }
    };
    dispatch_step(u_prev, demand, reserve, eff)
}

/// Cost and energy ledger of one simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayLedger {
    /// Storage level after each flat period (`[0]` is the full start).
    pub storage: Vec<f64>,
    pub discharge: Vec<f64>,
    pub purchase: Vec<f64>,
    /// Grid energy bought off peak to refill storage.
    pub recharge_kwh: f64,
    pub recharge_cost: f64,
    pub off_peak_cost: f64,
    /// Purchases in non-off-peak periods.
    pub period_cost: f64,
    pub total: f64,
}

/// Runs the policy through one realized day: full storage at the start,
/// refill of the discharged energy off peak. `demand` is indexed by flat
/// period, entry 0 being off-peak demand (billed at the off-peak rate).
pub fn simulate_standalone_day(
    policy: &ReservationPolicy,
    sched: &ToUSchedule,
    demand: &[f64],
) -> Result<DayLedger> {
    let n = sched.n_periods();
    if demand.len() != n {
        return Err(Error::Shape(format!("{} demands for {n} periods", demand.len())));
    }
    let eff = policy.efficiency();
    let cap = policy.capacity_kwh;
    let mut storage = vec![cap; n];
    let mut discharge = vec![0.0; n];
    let mut purchase = vec![0.0; n];
    purchase[0] = demand[0];
    let mut u = cap;
    let mut period_cost = 0.0;
    for tau in 1..n {
        let reserve = policy.reservation(tau).min(cap);
        let step = dispatch_step(u, demand[tau], reserve, eff);
        u = step.u_next;
        storage[tau] = u;
        discharge[tau] = step.discharge;
        purchase[tau] = step.purchase;
        period_cost += sched.rate_cents(tau) * step.purchase;
    }
    let off_rate = sched.off_peak_rate().cents();
    let recharge_kwh = (cap - u) / eff.eta_in;
    let recharge_cost = off_rate * recharge_kwh;
    let off_peak_cost = off_rate * demand[0];
    Ok(DayLedger {
        storage,
        discharge,
        purchase,
        recharge_kwh,
        recharge_cost,
        off_peak_cost,
        total: period_cost + off_peak_cost + recharge_cost,
        period_cost,
    })
}

/// Expected daily operating cost (no investment term) over a scenario set,
/// treating the community as one decision maker.
pub fn expected_daily_cost(policy: &ReservationPolicy, sched: &ToUSchedule, scen: &ScenarioSet) -> Estimate {
    let collective = scen.n_firms() > 1;
    let mut row = vec![0.0; sched.n_periods()];
    scen.expect(|s| {
        for (tau, slot) in row.iter_mut().enumerate() {
            *slot = if collective {
                scen.collective_demand(s, tau)
            } else {
                scen.demand(s, 0, tau)
            };
        }
        simulate_standalone_day(policy, sched, &row)
            .map(|l| l.total)
            .unwrap_or(f64::NAN)
    })
}

/// `MR_j(M) = V'_j(M)` with downstream reservations frozen.
/// `downstream` holds `M_{j+1}..M_p`.
pub fn marginal_revenue(
    scen: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
    j: usize,
    m_j: f64,
    downstream: &[f64],
) -> Estimate {
    let mut reservations = vec![0.0; sched.p()];
    for (k, &m) in downstream.iter().enumerate() {
        reservations[j + k] = m;
    }
    let levels = reservation_levels(sched, &reservations);
    let mv = MarginalValue::build(scen, sched, eff, &levels, j);
    if m_j >= levels.get(j + 1).copied().unwrap_or(0.0) {
        mv.estimate(m_j)
    } else {
        ValueTable::build(scen, sched, eff, &reservations).marginal_value(j, m_j)
    }
}

/// Solved reservations with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservationSolution {
    pub reservations: Vec<f64>,
    pub warnings: Vec<String>,
    /// Set in exact mode, where the fixed point may be an interval.
    pub possibly_non_unique: bool,
}

const MONOTONE_GRID: usize = 33;

/// Backward solve of `pi_j eta_out - pi_off / eta_in = MR_j(M_j)` for
/// `j = p..1`. Each `M_j` is searched at or above `M_{j+1}`, which keeps the
/// ordering by construction.
pub fn solve_reservations(
    scen: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
) -> Result<ReservationSolution> {
    let p = sched.p();
    let mut reservations = vec![0.0; p];
    let mut warnings = Vec::new();
    let sentinel = effective_rate(sched, eff, p + sched.q() + 1);
    for j in (1..=p).rev() {
        let levels = reservation_levels(sched, &reservations);
        let mv = MarginalValue::build(scen, sched, eff, &levels, j);
        let lo = levels[j + 1];
        let hi = mv.upper_bound().max(lo);
        let target = effective_rate(sched, eff, j) - sentinel;
        if target <= 0.0 {
            warnings.push(format!(
                "RU_{j}: serving load from storage loses money, reserving everything"
            ));
            reservations[j - 1] = hi;
            continue;
        }
        check_monotone(&mv, lo, hi, j, scen.is_exact(), &mut warnings)?;
        let m = if mv.value(lo) <= target {
            lo
        } else if scen.is_exact() {
            mv.breakpoints()
                .into_iter()
                .filter(|&b| b > lo)
                .find(|&b| mv.value(b) <= target)
                .unwrap_or(hi)
        } else {
            math::bisect_decreasing(|x| mv.value(x), target, lo, hi, SOLVE_TOLERANCE)
        };
        reservations[j - 1] = m;
    }
    Ok(ReservationSolution {
        reservations,
        warnings,
        possibly_non_unique: scen.is_exact(),
    })
}

fn check_monotone(
    mv: &MarginalValue,
    lo: f64,
    hi: f64,
    j: usize,
    exact: bool,
    warnings: &mut Vec<String>,
) -> Result<()> {
    if !(hi > lo) {
        return Ok(());
    }
    let grid: Vec<f64> = (0..MONOTONE_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / (MONOTONE_GRID - 1) as f64)
        .collect();
    let est: Vec<Estimate> = grid.iter().map(|&x| mv.estimate(x)).collect();
    for w in est.windows(2) {
        let rise = w[1].value - w[0].value;
        let noise = 3.0 * math::sqrt(w[0].se * w[0].se + w[1].se * w[1].se);
        if rise > noise + 1e-12 {
            if exact {
                warnings.push(format!("RU_{j}: marginal revenue is not monotone on this instance"));
                return Ok(());
            }
            return Err(Error::NonMonotone { period: j });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySolution {
    pub capacity: f64,
    /// Marginal value of storage at the solution, with its standard error.
    pub marginal_value: Estimate,
    pub warnings: Vec<String>,
}

/// Quantile used for the upper end of the capacity bracket.
pub const CAPACITY_BRACKET_QUANTILE: f64 = 0.9999;

/// Root of `pi_s eta_out = V'_0(C)` given solved reservations.
pub fn solve_capacity(
    scen: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
    reservations: &[f64],
) -> Result<CapacitySolution> {
    let table = ValueTable::build(scen, sched, eff, reservations);
    solve_capacity_with(&table, scen, sched, eff)
}

pub(crate) fn solve_capacity_with(
    table: &ValueTable,
    scen: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
) -> Result<CapacitySolution> {
    let mut warnings = Vec::new();
    if !sched.arbitrage_viable() {
        warnings.push(format!(
            "peak spread {:.1} does not exceed storage cost {:.1}; arbitrage is unviable",
            sched.peak_spread_cents(),
            sched.storage_cost_cents()
        ));
    }
    let target = sched.storage_cost_cents() * eff.eta_out;
    let rhs = |c: f64| table.marginal_value(0, c).value;
    if rhs(0.0) <= target {
        warnings.push("marginal value of the first kWh is below its cost; investing nothing".into());
        return Ok(CapacitySolution {
            capacity: 0.0,
            marginal_value: table.marginal_value(0, 0.0),
            warnings,
        });
    }
    let capacity = if scen.is_exact() {
        table
            .breakpoints()
            .into_iter()
            .filter(|&b| b > 0.0)
            .find(|&b| rhs(b) <= target)
            .unwrap_or(0.0)
    } else {
        let periods: Vec<usize> = (1..sched.n_periods()).collect();
        let mut hi = scenario_quantile(scen, &periods, CAPACITY_BRACKET_QUANTILE) / eff.eta_out;
        if rhs(hi) > target {
            // Reservations can push the zero of V' past the demand quantile.
            let top = table.breakpoints().last().copied().unwrap_or(hi);
            hi = hi.max(top);
        }
        math::bisect_decreasing(rhs, target, 0.0, hi, SOLVE_TOLERANCE)
    };
    Ok(CapacitySolution {
        capacity,
        marginal_value: table.marginal_value(0, capacity),
        warnings,
    })
}

/// Complete standalone solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedPolicy {
    pub policy: ReservationPolicy,
    /// Reservations before clamping to the capacity.
    pub raw_reservations: Vec<f64>,
    pub marginal_value: Estimate,
    pub warnings: Vec<String>,
    pub possibly_non_unique: bool,
}

/// Solves reservations, then capacity, and clamps `M_j <= C`.
pub fn solve_policy(scen: &ScenarioSet, sched: &ToUSchedule, eff: Efficiency) -> Result<SolvedPolicy> {
    let res = solve_reservations(scen, sched, eff)?;
    let cap = solve_capacity(scen, sched, eff, &res.reservations)?;
    let clamped = res.reservations.iter().map(|&m| m.min(cap.capacity)).collect();
    let mut warnings = res.warnings;
    warnings.extend(cap.warnings);
    Ok(SolvedPolicy {
        policy: ReservationPolicy::new(cap.capacity, clamped, eff)?,
        raw_reservations: res.reservations,
        marginal_value: cap.marginal_value,
        warnings,
        possibly_non_unique: res.possibly_non_unique,
    })
}

/// Closed form for one ramp-up and one peak period:
/// `M = F_{X_2}^{-1}((pi_h - pi_m) / (pi_h - pi_l))` and `C` the
/// `(pi_m - pi_l - pi_s) / (pi_m - pi_l)` quantile of `X_1 + X_2` given
/// `X_2 > M`. Lossless storage.
pub fn closed_form_three_tier(scen: &ScenarioSet, sched: &ToUSchedule) -> Result<(f64, f64)> {
    if sched.p() != 1 || sched.q() != 1 {
        return Err(Error::Unsupported("closed form needs exactly one ramp-up and one peak period".into()));
    }
    let (low, mid, high) = (sched.rate_cents(0), sched.rate_cents(1), sched.rate_cents(2));
    let m = scenario_quantile(scen, &[2], (high - mid) / (high - low));
    let spread = mid - low;
    let cost = sched.storage_cost_cents();
    if spread <= cost {
        return Ok((m, 0.0));
    }
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for s in 0..scen.len() {
        let x2 = scen.collective_demand(s, 2);
        if x2 > m {
            values.push(scen.collective_demand(s, 1) + x2);
            weights.push(scen.weight(s));
        }
    }
    let mass: f64 = weights.iter().sum();
    if values.is_empty() || !(mass > 0.0) {
        return Ok((m, m));
    }
    for w in &mut weights {
        *w /= mass;
    }
    let c = crate::demand::stats::weighted_quantile(&values, Some(&weights), (spread - cost) / spread);
    Ok((m, c))
}
