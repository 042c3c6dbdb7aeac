//! Capacity decision game: every firm buys a share of a pooled storage
//! system, then trades through the sharing market. The pool size solves the
//! collective capacity condition; shares follow from band-conditional
//! expectations of each firm's demand at the pool boundary.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::demand::stats::{
    conditional_means_band, scenario_quantile, sub_density, BandEstimate, BandQuery, Constraint,
    MIN_BAND_HITS,
};
use crate::demand::{Estimate, ScenarioSet};
use crate::error::{Error, Result};
use crate::market::SharingMarket;
use crate::math;
use crate::policy::{
    expected_daily_cost, simulate_standalone_day, solve_policy, Efficiency, ReservationPolicy, SolvedPolicy,
};
use crate::schedule::ToUSchedule;
use crate::value::{effective_rate, ValueTable};

/// Densities below this are treated as zero when weighting ramp-down terms.
pub const DENSITY_FLOOR: f64 = 1e-9;

/// Accepted range of the allocation renormalization factor.
pub const RENORMALIZATION_RANGE: (f64, f64) = (0.95, 1.05);

/// Default capacity deviations tried by [`verify_best_response`].
pub const DEVIATION_FACTORS: [f64; 6] = [0.5, 0.8, 0.9, 1.1, 1.2, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Slope of one firm's conditional demand in the collective total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub firm: usize,
    /// Ramp-down index `j` (1 is the peak).
    pub ramp_down: usize,
    pub min_slope: f64,
    pub se: f64,
    /// Point of the r-grid where the minimum was found (left end).
    pub at: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub checks: Vec<SlopeCheck>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub collective_capacity: f64,
    /// Collective ramp-up reservations (clamped to the capacity).
    pub reservations: Vec<f64>,
    pub allocations: Vec<f64>,
    /// Allocations before renormalization.
    pub raw_allocations: Vec<f64>,
    /// `C_c / sum(raw)`; 1 when nothing needed fixing.
    pub renormalization: f64,
    pub rho_weights: Vec<f64>,
    /// `(rho_1, rho_2)` for pure ramp-down schedules with two periods.
    pub lambda_weights: Option<(f64, f64)>,
    pub densities: Vec<f64>,
    /// Band-conditional means per ramp-down term, per firm.
    pub conditional_means: Vec<Vec<BandEstimate>>,
    /// Marginal value of the pool at the solution.
    pub marginal_value: Estimate,
    pub alignment: Option<AlignmentReport>,
    pub warnings: Vec<String>,
}

impl EquilibriumResult {
    pub fn collective_policy(&self, eff: Efficiency) -> ReservationPolicy {
        ReservationPolicy {
            capacity_kwh: self.collective_capacity,
            reservations_kwh: self.reservations.clone(),
            eta_in: eff.eta_in,
            eta_out: eff.eta_out,
        }
    }
}

/// Pool size: the standalone solve applied to the community's total demand.
pub fn collective_capacity(scen: &ScenarioSet, sched: &ToUSchedule, eff: Efficiency) -> Result<SolvedPolicy> {
    solve_policy(&scen.collective(), sched, eff)
}

/// Conditioning event of ramp-down term `l`: total demand over periods
/// `1..=p+l` equal to `r`, while every ramp-up prefix `n` stays below
/// `r - M_n eta_out`.
fn term_query(sched: &ToUSchedule, eff: Efficiency, reservations: &[f64], l: usize, r: f64) -> BandQuery {
    let p = sched.p();
    let periods: Vec<usize> = (1..=p + l).collect();
    let constraints = (1..=p)
        .map(|n| Constraint {
            periods: (1..=n).collect(),
            bound: r - reservations[n - 1] * eff.eta_out,
        })
        .collect();
    BandQuery {
        numerator: periods.clone(),
        conditioning: periods,
        target: r,
        constraints,
        half_width: None,
        min_hits: MIN_BAND_HITS,
    }
}

/// Per-firm allocation of a given pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub allocations: Vec<f64>,
    pub raw: Vec<f64>,
    pub renormalization: f64,
    pub rho: Vec<f64>,
    pub densities: Vec<f64>,
    pub means: Vec<Vec<BandEstimate>>,
}

/// Splits pool `capacity` among the firms of `scen`: a density-weighted
/// mix over ramp-down terms of each firm's expected demand given that the
/// community exactly exhausts the pool in that term.
pub fn equilibrium_allocation(
    scen: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
    capacity: f64,
    reservations: &[f64],
) -> Result<Allocation> {
    let n = scen.n_firms();
    let q = sched.q();
    let p = sched.p();
    if capacity <= 0.0 {
        return Ok(Allocation {
            allocations: vec![0.0; n],
            raw: vec![0.0; n],
            renormalization: 1.0,
            rho: vec![1.0 / q as f64; q],
            densities: vec![0.0; q],
            means: Vec::new(),
        });
    }
    let r = capacity * eff.eta_out;
    let queries: Vec<BandQuery> = (1..=q).map(|l| term_query(sched, eff, reservations, l, r)).collect();
    let densities: Vec<f64> = queries.iter().map(|qr| sub_density(scen, qr)).collect();
    let weights: Vec<f64> = (1..=q)
        .map(|l| {
            let k = p + l;
            let step = effective_rate(sched, eff, k) - effective_rate(sched, eff, k + 1);
            if densities[l - 1] < DENSITY_FLOOR {
                0.0
            } else {
                step * densities[l - 1]
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let rho: Vec<f64> = if q == 1 {
        vec![1.0]
    } else if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        return Err(Error::DensityFloor(densities.iter().copied().fold(0.0, f64::max)));
    };

    let mut raw = vec![0.0; n];
    let mut means = Vec::with_capacity(q);
    for (l, qr) in queries.iter().enumerate() {
        if rho[l] == 0.0 {
            means.push(Vec::new());
            continue;
        }
        let est = conditional_means_band(scen, qr)?;
        for (slot, e) in raw.iter_mut().zip(&est) {
            *slot += rho[l] * e.value;
        }
        means.push(est);
    }
    for v in &mut raw {
        *v /= eff.eta_out;
    }
    let sum: f64 = raw.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Renormalization(f64::INFINITY));
    }
    let factor = capacity / sum;
    if factor < RENORMALIZATION_RANGE.0 || factor > RENORMALIZATION_RANGE.1 {
        return Err(Error::Renormalization(factor));
    }
    let mut allocations: Vec<f64> = raw.iter().map(|v| v * factor).collect();
    // Absorb the last rounding residue so the shares add up to the pool.
    let residue = capacity - allocations.iter().sum::<f64>();
    if let Some(big) = (0..n).max_by(|&a, &b| allocations[a].total_cmp(&allocations[b])) {
        allocations[big] += residue;
    }
    Ok(Allocation {
        allocations,
        raw,
        renormalization: factor,
        rho,
        densities,
        means,
    })
}

/// Full equilibrium: pool size, reservations and shares.
pub fn solve_equilibrium(scen: &ScenarioSet, sched: &ToUSchedule, eff: Efficiency) -> Result<EquilibriumResult> {
    let solved = collective_capacity(scen, sched, eff)?;
    let cap = solved.policy.capacity_kwh;
    let alloc = equilibrium_allocation(scen, sched, eff, cap, &solved.policy.reservations_kwh)?;
    let mut warnings = solved.warnings;
    if alloc.renormalization != 1.0 {
        warnings.push(format!(
            "allocations rescaled by {:.4} to match the pool",
            alloc.renormalization
        ));
    }
    let lambda_weights = (sched.p() == 0 && sched.q() == 2).then(|| (alloc.rho[0], alloc.rho[1]));
    Ok(EquilibriumResult {
        collective_capacity: cap,
        reservations: solved.policy.reservations_kwh,
        allocations: alloc.allocations,
        raw_allocations: alloc.raw,
        renormalization: alloc.renormalization,
        rho_weights: alloc.rho,
        lambda_weights,
        densities: alloc.densities,
        conditional_means: alloc.means,
        marginal_value: solved.marginal_value,
        alignment: None,
        warnings,
    })
}

const ALIGNMENT_GRID: usize = 9;

/// Finite-difference slopes of each firm's conditional demand `G_j^i(r)` in
/// the collective total `r`. A slope below `-2 SE` fails; one within
/// `2 SE` of zero is inconclusive. `grid` defaults to the 10%..90% deciles of
/// the collective total.
pub fn check_alignment(
    scen: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
    reservations: &[f64],
    grid: Option<&[f64]>,
) -> Result<AlignmentReport> {
    let n = scen.n_firms();
    let mut notes = Vec::new();
    if n < 2 {
        let checks = (1..=sched.q())
            .map(|j| SlopeCheck {
                firm: 0,
                ramp_down: j,
                min_slope: 1.0,
                se: 0.0,
                at: 0.0,
                verdict: Verdict::Pass,
            })
            .collect();
        return Ok(AlignmentReport {
            checks,
            verdict: Verdict::Pass,
            notes: vec!["single firm: alignment holds trivially".into()],
        });
    }
    let mut checks = Vec::new();
    for l in 1..=sched.q() {
        let periods: Vec<usize> = (1..=sched.p() + l).collect();
        let points: Vec<f64> = match grid {
            Some(g) => g.to_vec(),
            None => (1..=ALIGNMENT_GRID)
                .map(|k| scenario_quantile(scen, &periods, k as f64 / (ALIGNMENT_GRID + 1) as f64))
                .collect(),
        };
        let mut curve: Vec<(f64, Vec<BandEstimate>)> = Vec::new();
        for &r in &points {
            if curve.last().is_some_and(|(prev, _)| *prev >= r) {
                continue;
            }
            let mut query = term_query(sched, eff, reservations, l, r);
            // Keep neighbouring bands from overlapping.
            query.half_width = Some((0.01 * r).max(1e-6));
            match conditional_means_band(scen, &query) {
                Ok(est) => curve.push((r, est)),
                Err(Error::RareEvent { .. }) => {
                    notes.push(format!("RD_{l}: r = {r:.3} dropped, conditioning event too rare"));
                }
                Err(e) => return Err(e),
            }
        }
        if curve.len() < 2 {
            notes.push(format!("RD_{l}: fewer than two usable grid points"));
        }
        for i in 0..n {
            let mut worst: Option<(f64, f64, f64)> = None;
            let mut verdict = Verdict::Pass;
            for w in curve.windows(2) {
                let (r0, e0) = (&w[0].0, &w[0].1[i]);
                let (r1, e1) = (&w[1].0, &w[1].1[i]);
                let dr = r1 - r0;
                let slope = (e1.value - e0.value) / dr;
                let se = math::sqrt(e0.se * e0.se + e1.se * e1.se) / dr;
                if slope < -2.0 * se && slope < 0.0 {
                    verdict = Verdict::Fail;
                } else if verdict == Verdict::Pass && se > 0.0 && math::abs(slope) <= 2.0 * se {
                    verdict = Verdict::Inconclusive;
                }
                if worst.is_none_or(|(s, _, _)| slope < s) {
                    worst = Some((slope, se, *r0));
                }
            }
            let (min_slope, se, at) = worst.unwrap_or((f64::NAN, 0.0, 0.0));
            if worst.is_none() {
                verdict = Verdict::Inconclusive;
            }
            checks.push(SlopeCheck {
                firm: i,
                ramp_down: l,
                min_slope,
                se,
                at,
                verdict,
            });
        }
    }
    let verdict = if checks.iter().any(|c| c.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if checks.iter().any(|c| c.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(AlignmentReport { checks, verdict, notes })
}

/// Paired comparison of one deviation against the equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCheck {
    pub capacity: f64,
    /// Mean daily cost change (deviation minus equilibrium), investment included.
    pub cost_change: Estimate,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseCertificate {
    pub firm: usize,
    /// `pi_s eta_out - V'_0(C_c)` on the validation scenarios.
    pub alpha: Estimate,
    pub alpha_passed: bool,
    pub equilibrium_cost: Estimate,
    pub deviations: Vec<DeviationCheck>,
    pub passed: bool,
}

/// Per-day settled cost of every firm (operating cost only).
pub fn settled_costs(market: &SharingMarket, capacities: &[f64], days: &ScenarioSet) -> Result<Vec<Vec<f64>>> {
    (0..days.len())
        .map(|s| Ok(market.settle_day(&days.day(s), capacities)?.firm_totals))
        .collect()
}

/// Checks that firm `firm` cannot lower its expected cost by changing its
/// share while the others keep theirs, and that the pool satisfies its own
/// first-order condition on fresh scenarios.
///
/// `solve_scen` is the matrix the equilibrium was solved on (it also drives
/// forward prices); `validation` is an independent set of days.
pub fn verify_best_response(
    firm: usize,
    eq: &EquilibriumResult,
    solve_scen: &ScenarioSet,
    validation: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
    deviations: Option<&[f64]>,
) -> Result<BestResponseCertificate> {
    let collective_solve = solve_scen.collective();
    let collective_val = validation.collective();
    let table = ValueTable::build(&collective_val, sched, eff, &eq.reservations);
    let target = sched.storage_cost_cents() * eff.eta_out;
    let rhs = table.marginal_value(0, eq.collective_capacity);
    let alpha = Estimate {
        value: target - rhs.value,
        se: math::sqrt(rhs.se * rhs.se + eq.marginal_value.se * eq.marginal_value.se),
    };
    let alpha_passed = if validation.is_exact() {
        let below = table.marginal_value(0, (eq.collective_capacity - 1e-7).max(0.0)).value;
        rhs.value <= target + 1e-9 && (eq.collective_capacity == 0.0 || below >= target - 1e-9)
    } else if eq.collective_capacity == 0.0 {
        alpha.value >= -3.0 * alpha.se
    } else {
        math::abs(alpha.value) < 3.0 * alpha.se
    };

    let invest = |c: f64| sched.storage_cost_cents() * eff.eta_out * c;
    let base_market = SharingMarket::new(sched, eff, &collective_solve, eq.collective_capacity, &eq.reservations)?;
    let base: Vec<f64> = settled_costs(&base_market, &eq.allocations, validation)?
        .into_iter()
        .map(|row| row[firm])
        .collect();
    let c_star = eq.allocations[firm];
    let equilibrium_cost = validation.expect(|s| base[s] + invest(c_star));

    let candidates: Vec<f64> = match deviations {
        Some(list) => list.to_vec(),
        None if c_star > 0.0 => DEVIATION_FACTORS.iter().map(|f| f * c_star).collect(),
        None => vec![0.5, 1.0, 2.0],
    };
    let mut checks = Vec::with_capacity(candidates.len());
    for c_dev in candidates {
        let mut caps = eq.allocations.clone();
        caps[firm] = c_dev;
        let pool: f64 = caps.iter().sum();
        let market = SharingMarket::new(sched, eff, &collective_solve, pool, &eq.reservations)?;
        let dev: Vec<f64> = settled_costs(&market, &caps, validation)?
            .into_iter()
            .map(|row| row[firm])
            .collect();
        let change = validation.expect(|s| (dev[s] + invest(c_dev)) - (base[s] + invest(c_star)));
        let passed = change.value >= -3.0 * change.se - 1e-9;
        checks.push(DeviationCheck {
            capacity: c_dev,
            cost_change: change,
            passed,
        });
    }
    let passed = alpha_passed && checks.iter().all(|c| c.passed);
    Ok(BestResponseCertificate {
        firm,
        alpha,
        alpha_passed,
        equilibrium_cost,
        deviations: checks,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionCheck {
    pub members: Vec<usize>,
    /// Members' combined daily cost inside the grand coalition.
    pub grand_cost: Estimate,
    /// Their daily cost when pooling only among themselves.
    pub defect_cost: Estimate,
    /// `grand - defect`, paired per day; positive means defecting pays.
    pub improvement: Estimate,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionCertificate {
    pub checks: Vec<CoalitionCheck>,
    pub stable: bool,
}

/// Compares each listed coalition's cost inside the grand coalition with
/// the cost of pooling on its own (solving its own collective policy).
pub fn coalition_stability(
    coalitions: &[Vec<usize>],
    eq: &EquilibriumResult,
    solve_scen: &ScenarioSet,
    validation: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
) -> Result<CoalitionCertificate> {
    let n = solve_scen.n_firms();
    for c in coalitions {
        if c.is_empty() || c.iter().any(|&i| i >= n) {
            return Err(Error::Shape(format!("coalition {c:?} is not a subset of {n} firms")));
        }
    }
    let collective_solve = solve_scen.collective();
    let market = SharingMarket::new(sched, eff, &collective_solve, eq.collective_capacity, &eq.reservations)?;
    let grand = settled_costs(&market, &eq.allocations, validation)?;
    let invest = |c: f64| sched.storage_cost_cents() * eff.eta_out * c;

    let mut checks = Vec::with_capacity(coalitions.len());
    for members in coalitions {
        let own = solve_policy(&solve_scen.select_firms(members).collective(), sched, eff)?;
        let merged = validation.merged(&[members.clone()]);
        let mut defect = Vec::with_capacity(validation.len());
        for s in 0..validation.len() {
            let day = simulate_standalone_day(&own.policy, sched, merged.firm_row(s, 0))?;
            defect.push(day.total + own.policy.investment_cost(sched));
        }
        let inside: Vec<f64> = (0..validation.len())
            .map(|s| members.iter().map(|&i| grand[s][i] + invest(eq.allocations[i])).sum())
            .collect();
        let improvement = validation.expect(|s| inside[s] - defect[s]);
        let stable = improvement.value <= 3.0 * improvement.se + 1e-9;
        checks.push(CoalitionCheck {
            members: members.clone(),
            grand_cost: validation.expect(|s| inside[s]),
            defect_cost: validation.expect(|s| defect[s]),
            improvement,
            stable,
        });
    }
    let stable = checks.iter().all(|c| c.stable);
    Ok(CoalitionCertificate { checks, stable })
}

/// Expected daily cost (operating plus investment) of the community when
/// every firm runs its own standalone policy.
pub fn standalone_total_cost(
    solve_scen: &ScenarioSet,
    validation: &ScenarioSet,
    sched: &ToUSchedule,
    eff: Efficiency,
) -> Result<Estimate> {
    let mut per_day = vec![0.0; validation.len()];
    for i in 0..solve_scen.n_firms() {
        let own = solve_policy(&solve_scen.select_firms(&[i]), sched, eff)?;
        let invest = own.policy.investment_cost(sched);
        for (s, slot) in per_day.iter_mut().enumerate() {
            *slot += simulate_standalone_day(&own.policy, sched, validation.firm_row(s, i))?.total + invest;
        }
    }
    Ok(validation.expect(|s| per_day[s]))
}

/// Expected daily cost of the grand coalition (operating plus investment).
pub fn grand_coalition_cost(eq: &EquilibriumResult, validation: &ScenarioSet, sched: &ToUSchedule, eff: Efficiency) -> Estimate {
    let policy = eq.collective_policy(eff);
    let op = expected_daily_cost(&policy, sched, &validation.collective());
    Estimate {
        value: op.value + policy.investment_cost(sched),
        se: op.se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandDistribution, FirmProfile, SamplingMode};
    use alloc::vec;

    fn uniform(high: f64) -> DemandDistribution {
        DemandDistribution::Uniform { low: 0.0, high }
    }

    fn firm(id: &str, laws: Vec<DemandDistribution>) -> FirmProfile {
        FirmProfile::new(id, laws)
    }

    #[test]
    fn two_tier_pool_is_newsvendor() {
        let sched = ToUSchedule::from_rates(13.0, &[], &[52.0], 14.0).unwrap();
        let f = firm("a", vec![DemandDistribution::zero(), uniform(10.0)]);
        let scen = ScenarioSet::from_profiles(&[f], 200_000, 1, SamplingMode::Independent).unwrap();
        let c = collective_capacity(&scen, &sched, Efficiency::LOSSLESS).unwrap();
        assert!((c.policy.capacity_kwh - 6.410).abs() < 0.02);
    }

    #[test]
    fn ramp_down_pool_with_fixed_peak() {
        // Peak demand fixed at 5: 14 = 15 (1 - (C - 5) / 10) gives C = 5 + 2/3.
        let sched = ToUSchedule::from_rates(13.0, &[], &[52.0, 28.0], 14.0).unwrap();
        let f = firm("a", vec![DemandDistribution::zero(), DemandDistribution::point_mass(5.0), uniform(10.0)]);
        let scen = ScenarioSet::from_profiles(&[f], 200_000, 2, SamplingMode::Independent).unwrap();
        let c = collective_capacity(&scen, &sched, Efficiency::LOSSLESS).unwrap();
        assert!((c.policy.capacity_kwh - (5.0 + 2.0 / 3.0)).abs() < 0.03, "{}", c.policy.capacity_kwh);
    }

    #[test]
    fn unviable_pool_is_empty() {
        let sched = ToUSchedule::from_rates(13.0, &[], &[52.0], 39.0).unwrap();
        let f = firm("a", vec![DemandDistribution::zero(), uniform(10.0)]);
        let scen = ScenarioSet::from_profiles(&[f], 10_000, 2, SamplingMode::Independent).unwrap();
        let eq = solve_equilibrium(&scen, &sched, Efficiency::LOSSLESS).unwrap();
        assert_eq!(eq.collective_capacity, 0.0);
        assert_eq!(eq.allocations, vec![0.0]);
    }

    #[test]
    fn symmetric_firms_split_evenly() {
        let sched = ToUSchedule::from_rates(13.0, &[], &[52.0, 28.0], 14.0).unwrap();
        let f = firm("a", vec![DemandDistribution::zero(), uniform(6.0), uniform(6.0)]);
        let scen = ScenarioSet::from_profiles(&[f.clone(), f], 200_000, 3, SamplingMode::Independent).unwrap();
        let eq = solve_equilibrium(&scen, &sched, Efficiency::LOSSLESS).unwrap();
        let (l1, l2) = eq.lambda_weights.unwrap();
        assert!((l1 + l2 - 1.0).abs() < 1e-12);
        let half = eq.collective_capacity / 2.0;
        for a in &eq.allocations {
            assert!((a - half).abs() < 0.02 * half, "{:?}", eq.allocations);
        }
        let sum: f64 = eq.allocations.iter().sum();
        assert!((sum - eq.collective_capacity).abs() <= 1e-6 * eq.collective_capacity);
    }

    #[test]
    fn zero_demand_firm_gets_nothing() {
        let sched = ToUSchedule::sce_tou_d_a();
        let busy = firm("a", vec![uniform(2.0), uniform(8.0), uniform(8.0), uniform(4.0)]);
        let idle = firm("z", vec![uniform(2.0), DemandDistribution::zero(), DemandDistribution::zero(), DemandDistribution::zero()]);
        let scen = ScenarioSet::from_profiles(&[busy.clone(), idle, busy], 200_000, 4, SamplingMode::Independent).unwrap();
        let eq = solve_equilibrium(&scen, &sched, Efficiency::LOSSLESS).unwrap();
        assert!(eq.collective_capacity > 0.0);
        assert_eq!(eq.allocations[1], 0.0);
    }

    #[test]
    fn single_firm_alignment_is_vacuous() {
        let sched = ToUSchedule::from_rates(13.0, &[], &[52.0], 14.0).unwrap();
        let f = firm("a", vec![DemandDistribution::zero(), uniform(10.0)]);
        let scen = ScenarioSet::from_profiles(&[f], 1000, 2, SamplingMode::Independent).unwrap();
        let rep = check_alignment(&scen, &sched, Efficiency::LOSSLESS, &[], None).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
        assert_eq!(rep.checks[0].min_slope, 1.0);
    }
}
