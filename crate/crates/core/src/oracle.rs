//! Brute-force references used to certify the analytic solvers: hindsight
//! dispatch, backward induction over discretized storage levels, and joint
//! enumeration of small multi-firm instances.
//!
//! All dynamic programs assume lossless storage and integer demand levels
//! on a grid of `step` kWh.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{DemandDistribution, FirmProfile, ScenarioSet};
use crate::error::{Error, Result};
use crate::math;
use crate::policy::{dispatch_step, Efficiency};
use crate::schedule::ToUSchedule;

/// Upper bound on DP work (states x demand outcomes x actions per period).
pub const MAX_DP_WORK: usize = 10_000_000;

const TIE_TOL: f64 = 1e-9;

/// Cheapest possible day with perfect foresight: the stored energy goes to
/// the dearest periods first, only where that beats refilling it.
/// `demand` is the collective demand per flat period.
pub fn offline_optimal_cost(demand: &[f64], capacity: f64, sched: &ToUSchedule, eff: Efficiency) -> f64 {
    let n = sched.n_periods().min(demand.len());
    let refill = sched.off_peak_rate().cents() / eff.eta_in;
    let mut order: Vec<usize> = (1..n).collect();
    order.sort_by(|&a, &b| sched.rate(b).cmp(&sched.rate(a)));
    let mut left = capacity;
    let mut used = 0.0;
    let mut cost = sched.off_peak_rate().cents() * demand[0];
    for tau in order {
        let rate = sched.rate_cents(tau);
        let x = demand[tau];
        if rate * eff.eta_out > refill && left > 0.0 {
            let step = dispatch_step(left, x, 0.0, eff);
            left = step.u_next;
            used += step.discharge;
            cost += rate * step.purchase;
        } else {
            cost += rate * x;
        }
    }
    cost + refill * used
}

/// Probability masses on `0, step, 2 step, ...` for each firm and period,
/// plus the tariff. The desk-scale substrate for the DP oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedInstance {
    pub schedule: ToUSchedule,
    pub step: f64,
    /// `masses[firm][period][level]`.
    pub masses: Vec<Vec<Vec<f64>>>,
}

fn normalize(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

impl DiscretizedInstance {
    pub fn new(schedule: ToUSchedule, step: f64, masses: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = schedule.n_periods();
        if masses.is_empty() {
            return Err(Error::NoFirms);
        }
        for (i, firm) in masses.iter().enumerate() {
            if firm.len() != n {
                return Err(Error::Shape(format!("firm {i}: {} periods, schedule has {n}", firm.len())));
            }
            for m in firm {
                DemandDistribution::Discrete {
                    step,
                    masses: m.clone(),
                }
                .validate()?;
            }
        }
        Ok(DiscretizedInstance {
            schedule,
            step,
            masses,
        })
    }

    /// Random single-peaked tariff with `p + q <= max_periods` and demand
    /// laws on `0..=K` with `K <= max_level`, one kWh per level.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_firms: usize, max_level: usize, max_periods: usize) -> Self {
        let total = rng.random_range(1..=max_periods.max(1));
        let p = rng.random_range(0..total);
        let q = total - p;
        let off = rng.random_range(5..=15) as f64;
        let mut rate = off;
        let mut ramp_up = Vec::with_capacity(p);
        for _ in 0..p {
            rate += rng.random_range(1..=12) as f64;
            ramp_up.push(rate);
        }
        // Leave room for q - 1 distinct shoulder rates between off peak and peak.
        let peak = (rate + rng.random_range(1..=20) as f64).max(off + q as f64);
        let mut shoulders: Vec<i64> = ((off as i64 + 1)..(peak as i64)).collect();
        let mut ramp_down = vec![peak];
        for _ in 1..q {
            let pick = rng.random_range(0..shoulders.len());
            ramp_down.push(shoulders.swap_remove(pick) as f64);
        }
        ramp_down[1..].sort_by(|a, b| b.total_cmp(a));
        let spread = peak - off;
        let storage = rng.random_range(1..=(spread as i64).max(1)) as f64;
        let schedule = ToUSchedule::from_rates(off, &ramp_up, &ramp_down, storage)
            .expect("random tariff is single peaked by construction");
        let masses = (0..n_firms)
            .map(|_| {
                (0..=p + q)
                    .map(|tau| {
                        let k = if tau == 0 { rng.random_range(0..=2) } else { rng.random_range(1..=max_level) };
                        let mut w: Vec<f64> = (0..=k).map(|_| rng.random_range(1..=9) as f64).collect();
                        normalize(&mut w);
                        w
                    })
                    .collect()
            })
            .collect();
        DiscretizedInstance {
            schedule,
            step: 1.0,
            masses,
        }
    }

    pub fn n_firms(&self) -> usize {
        self.masses.len()
    }

    pub fn profiles(&self) -> Vec<FirmProfile> {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, firm)| {
                FirmProfile::new(
                    format!("firm{i}"),
                    firm.iter()
                        .map(|m| DemandDistribution::Discrete {
                            step: self.step,
                            masses: m.clone(),
                        })
                        .collect(),
                )
            })
            .collect()
    }

    /// Law of the community's total demand per period (independent firms).
    pub fn collective_masses(&self) -> Vec<Vec<f64>> {
        (0..self.schedule.n_periods())
            .map(|tau| {
                self.masses[1..]
                    .iter()
                    .fold(self.masses[0][tau].clone(), |acc, firm| convolve(&acc, &firm[tau]))
            })
            .collect()
    }

    /// The community as a single firm.
    pub fn collective(&self) -> DiscretizedInstance {
        DiscretizedInstance {
            schedule: self.schedule.clone(),
            step: self.step,
            masses: vec![self.collective_masses()],
        }
    }

    /// Exact scenario set of the collective demand.
    pub fn collective_scenarios(&self) -> Result<ScenarioSet> {
        ScenarioSet::exact(&self.collective().profiles())
    }
}

/// Threshold structure the DP found in one ramp-up period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFinding {
    pub period: usize,
    /// Smallest reservation `T` such that discharging `min(x, (u - T)+)` is
    /// optimal in every state; `None` when no threshold rule is optimal.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    /// Cost-minimizing capacity on the grid (kWh).
    pub capacity: f64,
    /// Expected daily cost including the investment term.
    pub expected_cost: f64,
    /// `(capacity, expected cost)` for every capacity searched.
    pub cost_by_capacity: Vec<(f64, f64)>,
    pub thresholds: Vec<ThresholdFinding>,
    /// Greedy discharge is optimal in every ramp-down state.
    pub ramp_down_greedy: bool,
}

/// Value tables of the single-decision-maker DP for a fixed capacity.
struct SingleDp {
    /// `values[tau][u]`: expected cost from the start of period `tau` (1-based,
    /// `p+q+1` is the refill) with `u` levels stored.
    values: Vec<Vec<f64>>,
}

fn single_dp(sched: &ToUSchedule, masses: &[Vec<f64>], step: f64, cap: usize) -> SingleDp {
    let last = sched.n_periods() - 1;
    let off = sched.off_peak_rate().cents();
    let mut values = vec![Vec::new(); last + 2];
    values[last + 1] = (0..=cap).map(|u| off * (cap - u) as f64 * step).collect();
    for tau in (1..=last).rev() {
        let rate = sched.rate_cents(tau);
        let next = &values[tau + 1];
        let row = (0..=cap)
            .map(|u| {
                masses[tau]
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0.0)
                    .map(|(x, &m)| {
                        let best = (0..=u.min(x))
                            .map(|d| rate * (x - d) as f64 * step + next[u - d])
                            .fold(f64::INFINITY, f64::min);
                        m * best
                    })
                    .sum()
            })
            .collect();
        values[tau] = row;
    }
    SingleDp { values }
}

fn expected_off_peak(sched: &ToUSchedule, masses: &[f64], step: f64) -> f64 {
    let off = sched.off_peak_rate().cents();
    masses.iter().enumerate().map(|(x, m)| off * x as f64 * step * m).sum()
}

/// Exact backward induction over storage levels and discharge amounts,
/// searched over every integer capacity up to the largest useful one.
/// Multi-firm instances are solved for the community as one decision maker.
pub fn dp_optimal_policy(instance: &DiscretizedInstance) -> Result<DpSolution> {
    let inst = if instance.n_firms() > 1 {
        instance.collective()
    } else {
        instance.clone()
    };
    let sched = &inst.schedule;
    let masses = &inst.masses[0];
    let step = inst.step;
    let max_cap: usize = masses[1..].iter().map(|m| m.len() - 1).sum();
    let levels: usize = masses.iter().map(|m| m.len()).max().unwrap_or(1);
    let work = (max_cap + 1) * (max_cap + 1) * levels * levels * sched.n_periods();
    if work > MAX_DP_WORK {
        return Err(Error::StateSpace(work));
    }
    let off_peak = expected_off_peak(sched, &masses[0], step);
    let mut cost_by_capacity = Vec::with_capacity(max_cap + 1);
    let mut best = (0usize, f64::INFINITY);
    for cap in 0..=max_cap {
        let dp = single_dp(sched, masses, step, cap);
        let total = dp.values[1][cap] + off_peak + sched.storage_cost_cents() * cap as f64 * step;
        cost_by_capacity.push((cap as f64 * step, total));
        if total < best.1 - TIE_TOL {
            best = (cap, total);
        }
    }
    let cap = best.0;
    let dp = single_dp(sched, masses, step, cap);
    let mut thresholds = Vec::new();
    for tau in 1..=sched.p() {
        let rate = sched.rate_cents(tau);
        let next = &dp.values[tau + 1];
        let optimal = |u: usize, x: usize, d: usize| -> bool {
            let cost = |d: usize| rate * (x - d) as f64 * step + next[u - d];
            let min = (0..=u.min(x)).map(cost).fold(f64::INFINITY, f64::min);
            cost(d) <= min + TIE_TOL
        };
        let threshold = (0..=cap).find(|&t| {
            (0..=cap).all(|u| {
                (0..masses[tau].len())
                    .filter(|&x| masses[tau][x] > 0.0)
                    .all(|x| optimal(u, x, x.min(u.saturating_sub(t))))
            })
        });
        thresholds.push(ThresholdFinding {
            period: tau,
            threshold: threshold.map(|t| t as f64 * step),
        });
    }
    let ramp_down_greedy = (sched.p() + 1..sched.n_periods()).all(|tau| {
        let rate = sched.rate_cents(tau);
        let next = &dp.values[tau + 1];
        (0..=cap).all(|u| {
            (0..masses[tau].len()).filter(|&x| masses[tau][x] > 0.0).all(|x| {
                let cost = |d: usize| rate * (x - d) as f64 * step + next[u - d];
                let min = (0..=u.min(x)).map(cost).fold(f64::INFINITY, f64::min);
                cost(u.min(x)) <= min + TIE_TOL
            })
        })
    });
    Ok(DpSolution {
        capacity: cap as f64 * step,
        expected_cost: best.1,
        cost_by_capacity,
        thresholds,
        ramp_down_greedy,
    })
}

/// Expected daily cost (investment included) of the optimal dispatch for a
/// fixed capacity, on the community as one decision maker.
pub fn dp_cost_at(instance: &DiscretizedInstance, capacity_levels: usize) -> Result<f64> {
    let inst = instance.collective();
    let sched = &inst.schedule;
    let masses = &inst.masses[0];
    let dp = single_dp(sched, masses, inst.step, capacity_levels);
    Ok(dp.values[1][capacity_levels]
        + expected_off_peak(sched, &masses[0], inst.step)
        + sched.storage_cost_cents() * capacity_levels as f64 * inst.step)
}

/// Minimum expected daily cost (investment included) of up to three firms
/// with fixed storage sizes, by enumeration of every joint state, demand
/// outcome and discharge profile. With `sharing`, any firm's storage may
/// serve any firm's load; without it each firm serves only itself.
pub fn exhaustive_social_optimum(
    instance: &DiscretizedInstance,
    capacity_levels: &[usize],
    sharing: bool,
) -> Result<f64> {
    let n = instance.n_firms();
    if n == 0 || n > 3 || capacity_levels.len() != n {
        return Err(Error::Unsupported(format!(
            "joint enumeration needs 1 to 3 firms with one capacity each, got {n} firms"
        )));
    }
    let sched = &instance.schedule;
    let step = instance.step;
    let sizes: Vec<usize> = capacity_levels.iter().map(|c| c + 1).collect();
    let n_states: usize = sizes.iter().product();
    let outcomes = |tau: usize| -> usize { instance.masses.iter().map(|f| f[tau].len()).product() };
    let max_outcomes = (1..sched.n_periods()).map(outcomes).max().unwrap_or(1);
    let work = n_states * n_states * max_outcomes * sched.n_periods();
    if work > MAX_DP_WORK * 10 {
        return Err(Error::StateSpace(work));
    }
    let decode = |mut idx: usize| -> Vec<usize> {
        let mut v = vec![0; n];
        for i in (0..n).rev() {
            v[i] = idx % sizes[i];
            idx /= sizes[i];
        }
        v
    };
    let encode = |v: &[usize]| -> usize { v.iter().zip(&sizes).fold(0, |acc, (x, s)| acc * s + x) };
    let off = sched.off_peak_rate().cents();
    let last = sched.n_periods() - 1;
    let mut next: Vec<f64> = (0..n_states)
        .map(|idx| {
            let u = decode(idx);
            off * step * u.iter().zip(capacity_levels).map(|(x, c)| (c - x) as f64).sum::<f64>()
        })
        .collect();
    for tau in (1..=last).rev() {
        let rate = sched.rate_cents(tau);
        // Joint demand outcomes of this period with their probabilities.
        let mut joint: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        for firm in &instance.masses {
            let mut grown = Vec::new();
            for (xs, w) in &joint {
                for (x, &m) in firm[tau].iter().enumerate() {
                    if m > 0.0 {
                        let mut ys = xs.clone();
                        ys.push(x);
                        grown.push((ys, w * m));
                    }
                }
            }
            joint = grown;
        }
        let mut cur = vec![0.0; n_states];
        for (idx, slot) in cur.iter_mut().enumerate() {
            let u = decode(idx);
            let mut expected = 0.0;
            for (xs, w) in &joint {
                let total: usize = xs.iter().sum();
                let mut best = f64::INFINITY;
                // Every discharge profile d <= u.
                for didx in 0..=idx.min(n_states - 1) {
                    let d = decode(didx);
                    if d.iter().zip(&u).any(|(a, b)| a > b) {
                        continue;
                    }
                    let served: usize = d.iter().sum();
                    let feasible = if sharing {
                        served <= total
                    } else {
                        d.iter().zip(xs).all(|(a, x)| a <= x)
                    };
                    if !feasible {
                        continue;
                    }
                    let rest: Vec<usize> = u.iter().zip(&d).map(|(a, b)| a - b).collect();
                    let c = rate * (total - served) as f64 * step + next[encode(&rest)];
                    if c < best {
                        best = c;
                    }
                }
                expected += w * best;
            }
            *slot = expected;
        }
        next = cur;
    }
    let full = encode(capacity_levels);
    let off_peak: f64 = instance
        .masses
        .iter()
        .map(|f| expected_off_peak(sched, &f[0], step))
        .sum();
    let invest = sched.storage_cost_cents() * step * capacity_levels.iter().sum::<usize>() as f64;
    Ok(next[full] + off_peak + invest)
}

/// Definitional first-purchase probabilities by forward simulation of every
/// scenario: from the end of period `after` with `u` stored, the first period
/// whose demand exceeds what the policy may release while the state is at or
/// above its reservation. Returns `P^k` for `k = after+1..=p+q`.
pub fn first_purchase_by_simulation(
    scen: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
    reservations: &[f64],
    after: usize,
    u: f64,
) -> Vec<f64> {
    let last = sched.n_periods() - 1;
    let reserve = |k: usize| if k >= 1 && k <= reservations.len() { reservations[k - 1] } else { 0.0 };
    let mut probs = vec![0.0; last - after];
    for s in 0..scen.len() {
        let mut state = u;
        for k in after + 1..=last {
            let x = scen.collective_demand(s, k);
            let m = reserve(k);
            if state >= m && x > (state - m) * eff.eta_out {
                probs[k - after - 1] += scen.weight(s);
                break;
            }
            state = dispatch_step(state, x, m, eff).u_next;
        }
    }
    probs
}

/// Expected cost from the end of period `after` onward (purchases plus the
/// off-peak refill back to `capacity`) when `u` kWh are stored. Its negative
/// slope in `u`, minus the refill rate, is the marginal value of storage.
pub fn future_cost(
    scen: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
    reservations: &[f64],
    after: usize,
    u: f64,
    capacity: f64,
) -> f64 {
    let last = sched.n_periods() - 1;
    let reserve = |k: usize| if k >= 1 && k <= reservations.len() { reservations[k - 1] } else { 0.0 };
    let refill = sched.off_peak_rate().cents() / eff.eta_in;
    let mut total = 0.0;
    for s in 0..scen.len() {
        let mut state = u;
        let mut cost = 0.0;
        for k in after + 1..=last {
            let step = dispatch_step(state, scen.collective_demand(s, k), reserve(k), eff);
            cost += sched.rate_cents(k) * step.purchase;
            state = step.u_next;
        }
        cost += refill * (capacity - state);
        total += scen.weight(s) * cost;
    }
    total
}

/// Brute-force hindsight optimum over an allocation grid of `resolution`
/// kWh, for cross-checking [`offline_optimal_cost`] on tiny days.
pub fn offline_by_enumeration(
    demand: &[f64],
    capacity: f64,
    sched: &ToUSchedule,
    resolution: f64,
) -> f64 {
    let n = sched.n_periods();
    let off = sched.off_peak_rate().cents();
    let units = libm::round(capacity / resolution) as usize;
    let mut best = f64::INFINITY;
    let mut alloc = vec![0usize; n];
    fn recurse(
        k: usize,
        left: usize,
        alloc: &mut Vec<usize>,
        demand: &[f64],
        sched: &ToUSchedule,
        res: f64,
        off: f64,
        best: &mut f64,
    ) {
        if k == alloc.len() {
            let mut cost = off * demand[0];
            let mut used = 0.0;
            for tau in 1..alloc.len() {
                let d = (alloc[tau] as f64 * res).min(demand[tau]);
                used += d;
                cost += sched.rate_cents(tau) * (demand[tau] - d);
            }
            cost += off * used;
            if cost < *best {
                *best = cost;
            }
            return;
        }
        for a in 0..=left {
            alloc[k] = a;
            recurse(k + 1, left - a, alloc, demand, sched, res, off, best);
        }
        alloc[k] = 0;
    }
    recurse(1, units, &mut alloc, demand, sched, resolution, off, &mut best);
    best
}

/// Analytic policy against the DP on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpCheck {
    pub analytic_capacity: f64,
    pub analytic_cost: f64,
    pub dp_capacity: f64,
    pub dp_cost: f64,
    pub thresholds_found: bool,
    pub ramp_down_greedy: bool,
    pub passed: bool,
}

/// Solves `instance` (as one decision maker) both analytically on its exact
/// scenario set and by backward induction, and compares expected costs.
pub fn certify_against_dp(instance: &DiscretizedInstance, tolerance: f64) -> Result<DpCheck> {
    let dp = dp_optimal_policy(instance)?;
    let scen = instance.collective_scenarios()?;
    let solved = crate::policy::solve_policy(&scen, &instance.schedule, Efficiency::LOSSLESS)?;
    let analytic_cost = crate::policy::expected_daily_cost(&solved.policy, &instance.schedule, &scen).value
        + solved.policy.investment_cost(&instance.schedule);
    let thresholds_found = dp.thresholds.iter().all(|t| t.threshold.is_some());
    Ok(DpCheck {
        analytic_capacity: solved.policy.capacity_kwh,
        analytic_cost,
        dp_capacity: dp.capacity,
        dp_cost: dp.expected_cost,
        thresholds_found,
        ramp_down_greedy: dp.ramp_down_greedy,
        passed: math::abs(analytic_cost - dp.expected_cost) <= tolerance && thresholds_found && dp.ramp_down_greedy,
    })
}

/// Largest absolute gap between two cost curves, for tests and reports.
pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| math::abs(x - y)).fold(0.0, f64::max)
}
