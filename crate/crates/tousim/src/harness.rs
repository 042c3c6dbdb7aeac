//! Mechanism comparison on common random numbers.
//!
//! Every mechanism is solved on the same pre-drawn solve matrix and then
//! evaluated on the same stream of realized days, so per-day cost
//! differences between mechanisms are paired.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tousim_core::demand::stats::weighted_quantile;
use tousim_core::demand::{pairwise_correlation, FirmProfile, SamplingMode, ScenarioSet};
use tousim_core::division::decompose_two_tier;
use tousim_core::game::{check_alignment, collective_capacity, solve_equilibrium, Verdict};
use tousim_core::market::CERTIFICATE_TOLERANCE;
use tousim_core::oracle::offline_optimal_cost;
use tousim_core::policy::{simulate_standalone_day, solve_policy};
use tousim_core::{Efficiency, EquilibriumResult, Estimate, SharingMarket, ToUSchedule};

use crate::config::{ConfigFile, ScheduleFile};
use crate::error::HarnessError;
use crate::ingest::load_profiles;
use crate::synthetic::SyntheticSpec;

/// Largest tolerated aggregator imbalance on one day, in cents.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    NoStorage,
    NoSharing,
    TwoTierDivision,
    Sharing,
    OfflineOptimal,
}

impl Mechanism {
    /// Weakest to strongest.
    pub const ALL: [Mechanism; 5] = [
        Mechanism::NoStorage,
        Mechanism::NoSharing,
        Mechanism::TwoTierDivision,
        Mechanism::Sharing,
        Mechanism::OfflineOptimal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::NoStorage => "no_storage",
            Mechanism::NoSharing => "no_sharing",
            Mechanism::TwoTierDivision => "two_tier_division",
            Mechanism::Sharing => "sharing",
            Mechanism::OfflineOptimal => "offline_optimal",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown mechanism `{s}`"))
    }
}

/// Parses a comma-separated mechanism list.
pub fn parse_mechanisms(list: &str) -> Result<Vec<Mechanism>, String> {
    let mut out: Vec<Mechanism> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("no mechanisms given".into());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum DemandSource {
    Profiles { profiles: Vec<FirmProfile>, mode: SamplingMode },
    Synthetic(SyntheticSpec),
}

impl DemandSource {
    pub fn n_firms(&self) -> usize {
        match self {
            DemandSource::Profiles { profiles, .. } => profiles.len(),
            DemandSource::Synthetic(spec) => spec.firms,
        }
    }

    pub fn firm_ids(&self) -> Vec<String> {
        match self {
            DemandSource::Profiles { profiles, .. } => profiles.iter().map(|p| p.firm_id.clone()).collect(),
            DemandSource::Synthetic(spec) => spec.firm_ids(),
        }
    }

    pub fn n_periods(&self) -> usize {
        match self {
            DemandSource::Profiles { profiles, .. } => profiles.first().map_or(0, |p| p.n_periods()),
            DemandSource::Synthetic(spec) => spec.n_periods(),
        }
    }

    /// `n` days of the listed firms.
    pub fn draw(&self, firms: &[usize], n: usize, seed: u64) -> Result<ScenarioSet, HarnessError> {
        Ok(match self {
            DemandSource::Profiles { profiles, mode } => {
                let chosen: Vec<FirmProfile> = firms.iter().map(|&i| profiles[i].clone()).collect();
                ScenarioSet::from_profiles(&chosen, n, seed, *mode)?
            }
            DemandSource::Synthetic(spec) => {
                let all = spec.generate(n, seed)?;
                if firms.len() == spec.firms && firms.iter().enumerate().all(|(k, &i)| k == i) {
                    all
                } else {
                    all.select_firms(firms)
                }
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub schedule: ToUSchedule,
    pub source: DemandSource,
    pub mechanisms: Vec<Mechanism>,
    pub days: usize,
    pub seed: u64,
    pub samples: usize,
    pub efficiency: Efficiency,
    pub community_sizes: Vec<usize>,
    pub repetitions: usize,
    pub sweep_samples: usize,
    pub sweep_days: usize,
}

impl Scenario {
    pub fn new(schedule: ToUSchedule, source: DemandSource) -> Self {
        Scenario {
            schedule,
            source,
            mechanisms: Mechanism::ALL.to_vec(),
            days: 1000,
            seed: 1,
            samples: tousim_core::DEFAULT_SAMPLES,
            efficiency: Efficiency::LOSSLESS,
            community_sizes: Vec::new(),
            repetitions: 30,
            sweep_samples: 50_000,
            sweep_days: 2000,
        }
    }

    /// Resolves the data source and checks it against the schedule.
    pub fn from_config(cfg: &ConfigFile) -> Result<Self, HarnessError> {
        let schedule = cfg.schedule.to_schedule()?;
        let sc = &cfg.scenario;
        let source = match (&sc.data, &cfg.synthetic) {
            (Some(path), _) => {
                let mut profiles = load_profiles(path, &schedule)?;
                if !sc.firms.is_empty() {
                    profiles.retain(|p| sc.firms.contains(&p.firm_id));
                }
                DemandSource::Profiles {
                    profiles,
                    mode: sc.sampling,
                }
            }
            (None, Some(spec)) => DemandSource::Synthetic(spec.clone()),
            (None, None) => {
                return Err(HarnessError::Scenario(
                    "no data source: give --data or a [synthetic] section".into(),
                ))
            }
        };
        let scenario = Scenario {
            mechanisms: sc.mechanisms.clone(),
            days: sc.days,
            seed: sc.seed,
            samples: sc.samples,
            efficiency: Efficiency::new(sc.eta_in, sc.eta_out)?,
            community_sizes: sc.community_sizes.clone(),
            repetitions: sc.repetitions,
            sweep_samples: sc.sweep_samples.unwrap_or(sc.samples.min(50_000)),
            sweep_days: sc.sweep_days.unwrap_or(sc.days.min(2000)),
            ..Scenario::new(schedule, source)
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.mechanisms.is_empty() {
            return Err(HarnessError::Scenario("at least one mechanism is required".into()));
        }
        if self.days == 0 || self.samples == 0 {
            return Err(HarnessError::Scenario("days and samples must be at least 1".into()));
        }
        if let DemandSource::Synthetic(spec) = &self.source {
            spec.validate().map_err(HarnessError::Scenario)?;
        }
        if self.source.n_firms() == 0 {
            return Err(HarnessError::Scenario("no firms".into()));
        }
        if self.source.n_periods() != self.schedule.n_periods() {
            return Err(HarnessError::Scenario(format!(
                "data has {} periods per day, schedule has {}",
                self.source.n_periods(),
                self.schedule.n_periods()
            )));
        }
        if let Some(&size) = self.community_sizes.iter().find(|&&s| s == 0 || s > self.source.n_firms()) {
            return Err(HarnessError::Scenario(format!(
                "community size {size} outside 1..={}",
                self.source.n_firms()
            )));
        }
        Ok(())
    }

    pub fn all_firms(&self) -> Vec<usize> {
        (0..self.source.n_firms()).collect()
    }

    pub fn solve_set(&self) -> Result<ScenarioSet, HarnessError> {
        self.source.draw(&self.all_firms(), self.samples, derive_seed(self.seed, 1))
    }

    pub fn day_set(&self) -> Result<ScenarioSet, HarnessError> {
        self.source.draw(&self.all_firms(), self.days, derive_seed(self.seed, 2))
    }
}

/// Independent seed for stream `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(stream))
}

/// Per-day results of one mechanism.
#[derive(Debug, Clone)]
pub struct MechanismRun {
    pub mechanism: Mechanism,
    pub firm_capacities: Vec<f64>,
    /// Community cost per day, investment included.
    pub daily_cost: Vec<f64>,
    /// Per-firm mean daily cost, when the mechanism bills firms separately.
    pub firm_mean_cost: Option<Vec<f64>>,
    pub flags: Vec<String>,
}

impl MechanismRun {
    pub fn total_capacity(&self) -> f64 {
        self.firm_capacities.iter().sum()
    }
}

/// Day-by-day market certificates of the sharing mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketChecks {
    pub days: usize,
    pub max_abs_balance: f64,
    pub budget_balanced: bool,
    pub welfare_failures: usize,
    pub max_welfare_gap: f64,
    pub price_violations: usize,
    /// Days on which hindsight dispatch was dearer than the market.
    pub hindsight_violations: Option<usize>,
    pub alignment: Option<Verdict>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub runs: Vec<MechanismRun>,
    pub equilibrium: Option<EquilibriumResult>,
    pub market: Option<MarketChecks>,
}

impl Evaluation {
    pub fn run(&self, m: Mechanism) -> Option<&MechanismRun> {
        self.runs.iter().find(|r| r.mechanism == m)
    }
}

fn per_day<F>(days: &ScenarioSet, f: F) -> Result<Vec<Vec<f64>>, HarnessError>
where
    F: Fn(usize) -> Result<Vec<f64>, HarnessError> + Sync + Send,
{
    (0..days.len()).into_par_iter().map(f).collect()
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64)
        .collect()
}

fn billed_run(mechanism: Mechanism, firm_capacities: Vec<f64>, rows: Vec<Vec<f64>>) -> MechanismRun {
    MechanismRun {
        mechanism,
        firm_capacities,
        daily_cost: rows.iter().map(|r| r.iter().sum()).collect(),
        firm_mean_cost: Some(column_means(&rows)),
        flags: Vec::new(),
    }
}

/// Solves and evaluates the requested mechanisms (plus the no-storage
/// baseline) for one community.
pub fn evaluate(
    sched: &ToUSchedule,
    eff: Efficiency,
    solve: &ScenarioSet,
    days: &ScenarioSet,
    mechanisms: &[Mechanism],
    alignment: bool,
) -> Result<Evaluation, HarnessError> {
    let n = solve.n_firms();
    let invest = |c: f64| sched.storage_cost_cents() * eff.eta_out * c;
    let wants = |m: Mechanism| mechanisms.contains(&m);
    let mut runs = Vec::new();

    let baseline = per_day(days, |s| {
        Ok((0..n)
            .map(|i| (0..sched.n_periods()).map(|tau| sched.rate_cents(tau) * days.demand(s, i, tau)).sum())
            .collect())
    })?;
    runs.push(billed_run(Mechanism::NoStorage, vec![0.0; n], baseline));

    if wants(Mechanism::NoSharing) {
        let policies = (0..n)
            .into_par_iter()
            .map(|i| solve_policy(&solve.select_firms(&[i]), sched, eff))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = per_day(days, |s| {
            policies
                .iter()
                .enumerate()
                .map(|(i, sp)| {
                    let day = simulate_standalone_day(&sp.policy, sched, days.firm_row(s, i))?;
                    Ok(day.total + sp.policy.investment_cost(sched))
                })
                .collect()
        })?;
        let caps = policies.iter().map(|sp| sp.policy.capacity_kwh).collect();
        runs.push(billed_run(Mechanism::NoSharing, caps, rows));
    }

    if wants(Mechanism::TwoTierDivision) {
        let plan = decompose_two_tier(solve, sched, eff)?;
        let inv = plan.investment(sched, eff);
        let rows = per_day(days, |s| {
            let mut costs = plan.settle_day(&days.day(s))?;
            for (c, v) in costs.iter_mut().zip(&inv) {
                *c += v;
            }
            Ok(costs)
        })?;
        let mut run = billed_run(Mechanism::TwoTierDivision, plan.firm_capacities.clone(), rows);
        for sub in &plan.subproblems {
            if sub.equilibrium.collective_capacity == 0.0 {
                run.flags.push(format!("period {} does not invest", sub.period));
            }
        }
        runs.push(run);
    }

    let mut equilibrium = None;
    let mut market_checks = None;
    let mut sharing_daily: Option<Vec<f64>> = None;
    if wants(Mechanism::Sharing) {
        let mut eq = solve_equilibrium(solve, sched, eff)?;
        let mut flags = Vec::new();
        if alignment {
            let report = check_alignment(solve, sched, eff, &eq.reservations, None)?;
            match report.verdict {
                Verdict::Fail => flags.push("alignment check failed".to_string()),
                Verdict::Inconclusive => flags.push("alignment check inconclusive".to_string()),
                Verdict::Pass => {}
            }
            eq.alignment = Some(report);
        }
        let market = SharingMarket::new(sched, eff, &solve.collective(), eq.collective_capacity, &eq.reservations)?;
        struct DayCheck {
            costs: Vec<f64>,
            balance: f64,
            welfare_gap: f64,
            welfare_ok: bool,
            prices_ok: bool,
        }
        let checks = (0..days.len())
            .into_par_iter()
            .map(|s| {
                let out = market.settle_day(&days.day(s), &eq.allocations)?;
                let cert = market.social_cost_certificate(&out)?;
                Ok(DayCheck {
                    costs: out
                        .firm_totals
                        .iter()
                        .zip(&eq.allocations)
                        .map(|(c, a)| c + invest(*a))
                        .collect(),
                    balance: out.aggregator_balance,
                    welfare_gap: cert.difference.abs(),
                    welfare_ok: cert.passed,
                    prices_ok: out.prices_within_bounds(sched),
                })
            })
            .collect::<Result<Vec<DayCheck>, HarnessError>>()?;
        let max_abs_balance = checks.iter().map(|c| c.balance.abs()).fold(0.0, f64::max);
        let welfare_failures = checks.iter().filter(|c| !c.welfare_ok).count();
        let price_violations = checks.iter().filter(|c| !c.prices_ok).count();
        let mc = MarketChecks {
            days: days.len(),
            max_abs_balance,
            budget_balanced: max_abs_balance < BUDGET_TOLERANCE,
            welfare_failures,
            max_welfare_gap: checks.iter().map(|c| c.welfare_gap).fold(0.0, f64::max),
            price_violations,
            hindsight_violations: None,
            alignment: eq.alignment.as_ref().map(|a| a.verdict),
            passed: false,
        };
        let rows: Vec<Vec<f64>> = checks.into_iter().map(|c| c.costs).collect();
        let mut run = billed_run(Mechanism::Sharing, eq.allocations.clone(), rows);
        run.flags = flags;
        sharing_daily = Some(run.daily_cost.clone());
        runs.push(run);
        market_checks = Some(mc);
        equilibrium = Some(eq);
    }

    if wants(Mechanism::OfflineOptimal) {
        let (capacity, caps) = match &equilibrium {
            Some(eq) => (eq.collective_capacity, eq.allocations.clone()),
            None => {
                let c = collective_capacity(solve, sched, eff)?.policy.capacity_kwh;
                (c, vec![c / n as f64; n])
            }
        };
        let daily: Vec<f64> = (0..days.len())
            .into_par_iter()
            .map(|s| {
                let day = days.day(s).collective_day();
                offline_optimal_cost(&day, capacity, sched, eff) + invest(capacity)
            })
            .collect();
        if let (Some(share), Some(mc)) = (&sharing_daily, market_checks.as_mut()) {
            let tol = |x: f64| CERTIFICATE_TOLERANCE * x.abs().max(1.0);
            mc.hindsight_violations = Some(daily.iter().zip(share).filter(|(o, s)| **o > **s + tol(**s)).count());
        }
        runs.push(MechanismRun {
            mechanism: Mechanism::OfflineOptimal,
            firm_capacities: caps,
            daily_cost: daily,
            firm_mean_cost: None,
            flags: Vec::new(),
        });
    }

    if let Some(mc) = market_checks.as_mut() {
        mc.passed = mc.budget_balanced
            && mc.welfare_failures == 0
            && mc.price_violations == 0
            && mc.hindsight_violations.unwrap_or(0) == 0
            && mc.alignment != Some(Verdict::Fail);
    }
    Ok(Evaluation {
        runs,
        equilibrium,
        market: market_checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismRow {
    pub mechanism: Mechanism,
    pub total_capacity_kwh: f64,
    pub firm_capacities_kwh: Vec<f64>,
    pub mean_daily_cost: Estimate,
    /// Paired mean of no-storage cost minus this mechanism's cost.
    pub mean_daily_profit: Estimate,
    pub saving_fraction: f64,
    pub profit_std_dev: f64,
    /// 5% and 95% quantiles of the daily profit.
    pub profit_band: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub firm_mean_cost: Option<Vec<f64>>,
    pub flags: Vec<String>,
}

/// How much `to` saves over `from` per day, paired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub from: Mechanism,
    pub to: Mechanism,
    pub saving: Estimate,
}

/// `stronger` saves at least as much as `weaker`, within 3 paired SE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub stronger: Mechanism,
    pub weaker: Mechanism,
    pub gap: Estimate,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub community_size: usize,
    pub mechanism: Mechanism,
    pub repetitions: usize,
    pub capacity_per_firm_mean: f64,
    pub capacity_per_firm_variance: f64,
    /// Daily saving per firm against no storage.
    pub profit_per_firm_mean: f64,
    pub profit_per_firm_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    /// Lower edges of equal-width bins over [-1, 1].
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Pairs with a zero-variance firm.
    pub undefined: usize,
    pub pairs: usize,
    pub mean: Option<f64>,
    pub negative_fraction: Option<f64>,
    /// Where the series came from: metered history or simulated days.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schedule: ScheduleFile,
    pub firm_ids: Vec<String>,
    pub days: usize,
    pub samples: usize,
    pub seed: u64,
    pub eta_in: f64,
    pub eta_out: f64,
    pub sampling: String,
    pub rows: Vec<MechanismRow>,
    pub deltas: Vec<PairDelta>,
    pub ordering: Vec<OrderingCheck>,
    /// Sharing saving over offline-optimal saving.
    pub sharing_to_offline_ratio: Option<f64>,
    pub equilibrium: Option<EquilibriumResult>,
    pub market: Option<MarketChecks>,
    pub sweep: Vec<SweepRow>,
    pub correlations: Option<CorrelationSummary>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn row(&self, m: Mechanism) -> Option<&MechanismRow> {
        self.rows.iter().find(|r| r.mechanism == m)
    }

    /// True when every enabled certificate passed.
    pub fn certificates_passed(&self) -> bool {
        self.market.as_ref().is_none_or(|m| m.passed)
    }
}

fn paired(days: &ScenarioSet, a: &[f64], b: &[f64]) -> Estimate {
    days.expect(|s| a[s] - b[s])
}

/// Builds the comparison rows, paired deltas and ordering checks.
pub fn summarize(eval: &Evaluation, days: &ScenarioSet, mechanisms: &[Mechanism]) -> (Vec<MechanismRow>, Vec<PairDelta>, Vec<OrderingCheck>, Option<f64>) {
    let base = eval.run(Mechanism::NoStorage).expect("baseline is always run");
    let base_mean = days.expect(|s| base.daily_cost[s]);
    let present: Vec<&MechanismRun> = Mechanism::ALL
        .iter()
        .filter(|m| mechanisms.contains(m))
        .filter_map(|&m| eval.run(m))
        .collect();
    let rows = present
        .iter()
        .map(|run| {
            let profit: Vec<f64> = (0..days.len()).map(|s| base.daily_cost[s] - run.daily_cost[s]).collect();
            let mean_profit = days.expect(|s| profit[s]);
            let var = profit.iter().map(|p| (p - mean_profit.value).powi(2)).sum::<f64>() / (profit.len().max(2) - 1) as f64;
            MechanismRow {
                mechanism: run.mechanism,
                total_capacity_kwh: run.total_capacity(),
                firm_capacities_kwh: run.firm_capacities.clone(),
                mean_daily_cost: days.expect(|s| run.daily_cost[s]),
                mean_daily_profit: mean_profit,
                saving_fraction: if base_mean.value > 0.0 { mean_profit.value / base_mean.value } else { 0.0 },
                profit_std_dev: var.sqrt(),
                profit_band: (
                    weighted_quantile(&profit, None, 0.05),
                    weighted_quantile(&profit, None, 0.95),
                ),
                firm_mean_cost: run.firm_mean_cost.clone(),
                flags: run.flags.clone(),
            }
        })
        .collect();
    let mut deltas = Vec::new();
    for (k, a) in present.iter().enumerate() {
        for b in &present[k + 1..] {
            deltas.push(PairDelta {
                from: a.mechanism,
                to: b.mechanism,
                saving: paired(days, &a.daily_cost, &b.daily_cost),
            });
        }
    }
    let mut ordering = Vec::new();
    let ranked: Vec<&MechanismRun> = Mechanism::ALL.iter().filter_map(|&m| eval.run(m)).filter(|r| r.mechanism == Mechanism::NoStorage || mechanisms.contains(&r.mechanism)).collect();
    for w in ranked.windows(2) {
        let gap = paired(days, &w[0].daily_cost, &w[1].daily_cost);
        ordering.push(OrderingCheck {
            stronger: w[1].mechanism,
            weaker: w[0].mechanism,
            holds: gap.value >= -3.0 * gap.se,
            gap,
        });
    }
    let ratio = match (eval.run(Mechanism::Sharing), eval.run(Mechanism::OfflineOptimal)) {
        (Some(sh), Some(off)) => {
            let s = paired(days, &base.daily_cost, &sh.daily_cost).value;
            let o = paired(days, &base.daily_cost, &off.daily_cost).value;
            (o > 0.0).then(|| s / o)
        }
        _ => None,
    };
    (rows, deltas, ordering, ratio)
}

const CORRELATION_BINS: usize = 20;

/// Histogram of pairwise correlations of per-day non-off-peak totals.
pub fn correlation_summary(series: &[Vec<f64>], source: &str) -> Result<Option<CorrelationSummary>, HarnessError> {
    if series.len() < 2 || series[0].len() < 2 {
        return Ok(None);
    }
    let matrix = pairwise_correlation(series)?;
    let n = series.len();
    let mut counts = vec![0; CORRELATION_BINS];
    let mut defined = Vec::new();
    let mut undefined = 0;
    for i in 0..n {
        for j in i + 1..n {
            match matrix.get(i, j) {
                Some(r) => {
                    let k = (((r + 1.0) / 2.0) * CORRELATION_BINS as f64).floor() as isize;
                    counts[k.clamp(0, CORRELATION_BINS as isize - 1) as usize] += 1;
                    defined.push(r);
                }
                None => undefined += 1,
            }
        }
    }
    let bin_edges = (0..CORRELATION_BINS).map(|k| -1.0 + 2.0 * k as f64 / CORRELATION_BINS as f64).collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let negative_fraction =
        (!defined.is_empty()).then(|| defined.iter().filter(|&&r| r < 0.0).count() as f64 / defined.len() as f64);
    Ok(Some(CorrelationSummary {
        bin_edges,
        counts,
        undefined,
        pairs: n * (n - 1) / 2,
        mean,
        negative_fraction,
        source: source.to_string(),
    }))
}

fn peak_side_totals(days: &ScenarioSet) -> Vec<Vec<f64>> {
    (0..days.n_firms())
        .map(|i| (0..days.len()).map(|s| days.firm_row(s, i)[1..].iter().sum()).collect())
        .collect()
}

fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Per-firm capacity and daily profit of each mechanism over random
/// sub-communities of each size.
pub fn community_sweep(scenario: &Scenario) -> (Vec<SweepRow>, Vec<String>) {
    let n = scenario.source.n_firms();
    let sizes = if scenario.community_sizes.is_empty() {
        vec![n]
    } else {
        scenario.community_sizes.clone()
    };
    let reps = scenario.repetitions.max(1);
    let cells: Vec<(usize, usize)> = sizes.iter().flat_map(|&k| (0..reps).map(move |r| (k, r))).collect();
    let results: Vec<Result<Vec<(Mechanism, f64, f64)>, HarnessError>> = cells
        .par_iter()
        .map(|&(k, rep)| {
            let cell_seed = derive_seed(derive_seed(scenario.seed, 1000 + k as u64), rep as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
            let mut firms = sample_indices(&mut rng, n, k).into_vec();
            firms.sort_unstable();
            let solve = scenario.source.draw(&firms, scenario.sweep_samples, derive_seed(cell_seed, 1))?;
            let days = scenario.source.draw(&firms, scenario.sweep_days, derive_seed(cell_seed, 2))?;
            let eval = evaluate(&scenario.schedule, scenario.efficiency, &solve, &days, &scenario.mechanisms, false)?;
            let base = &eval.run(Mechanism::NoStorage).expect("baseline").daily_cost;
            Ok(scenario
                .mechanisms
                .iter()
                .filter_map(|&m| eval.run(m))
                .map(|run| {
                    let profit = days.expect(|s| base[s] - run.daily_cost[s]).value;
                    (run.mechanism, run.total_capacity() / k as f64, profit / k as f64)
                })
                .collect())
        })
        .collect();

    let mut notes = Vec::new();
    let mut rows = Vec::new();
    for &k in &sizes {
        let mut ok: Vec<&Vec<(Mechanism, f64, f64)>> = Vec::new();
        for ((size, rep), res) in cells.iter().zip(&results) {
            if *size != k {
                continue;
            }
            match res {
                Ok(v) => ok.push(v),
                Err(e) => notes.push(format!("size {k}, repetition {rep}: {e}")),
            }
        }
        for &m in Mechanism::ALL.iter().filter(|m| scenario.mechanisms.contains(m)) {
            let caps: Vec<f64> = ok.iter().filter_map(|v| v.iter().find(|e| e.0 == m)).map(|e| e.1).collect();
            let profits: Vec<f64> = ok.iter().filter_map(|v| v.iter().find(|e| e.0 == m)).map(|e| e.2).collect();
            if caps.is_empty() {
                continue;
            }
            rows.push(SweepRow {
                community_size: k,
                mechanism: m,
                repetitions: caps.len(),
                capacity_per_firm_mean: caps.iter().sum::<f64>() / caps.len() as f64,
                capacity_per_firm_variance: sample_variance(&caps),
                profit_per_firm_mean: profits.iter().sum::<f64>() / profits.len() as f64,
                profit_per_firm_variance: sample_variance(&profits),
            });
        }
    }
    (rows, notes)
}

/// Solves, simulates and summarizes a scenario. The community sweep runs
/// only when `sweep` is set.
pub fn run_scenario(scenario: &Scenario, sweep: bool) -> Result<ComparisonReport, HarnessError> {
    scenario.validate()?;
    let solve = scenario.solve_set()?;
    let days = scenario.day_set()?;
    let eval = evaluate(&scenario.schedule, scenario.efficiency, &solve, &days, &scenario.mechanisms, true)?;
    let (rows, deltas, ordering, ratio) = summarize(&eval, &days, &scenario.mechanisms);
    let mut notes = Vec::new();

    let correlations = match &scenario.source {
        DemandSource::Profiles { profiles, .. } if profiles.iter().all(|p| !p.history.is_empty()) => {
            let periods: Vec<usize> = (1..scenario.schedule.n_periods()).collect();
            let series = tousim_core::demand::stats::period_sum_series(profiles, &periods)?;
            correlation_summary(&series, "metered history")?
        }
        _ => correlation_summary(&peak_side_totals(&days), "simulated days")?,
    };

    let sampling = match &scenario.source {
        DemandSource::Profiles { mode, .. } => {
            if *mode == SamplingMode::Paired {
                notes.push("days drawn whole from history; periods are not independent".into());
            }
            format!("{mode:?}").to_lowercase()
        }
        DemandSource::Synthetic(_) => "synthetic".into(),
    };
    let (sweep_rows, sweep_notes) = if sweep {
        community_sweep(scenario)
    } else {
        (sweep_from_evaluation(&eval, &days, &scenario.mechanisms), Vec::new())
    };
    notes.extend(sweep_notes);
    if let Some(eq) = &eval.equilibrium {
        notes.extend(eq.warnings.iter().cloned());
    }

    Ok(ComparisonReport {
        schedule: ScheduleFile::from_schedule(&scenario.schedule),
        firm_ids: scenario.source.firm_ids(),
        days: scenario.days,
        samples: scenario.samples,
        seed: scenario.seed,
        eta_in: scenario.efficiency.eta_in,
        eta_out: scenario.efficiency.eta_out,
        sampling,
        rows,
        deltas,
        ordering,
        sharing_to_offline_ratio: ratio,
        equilibrium: eval.equilibrium,
        market: eval.market,
        sweep: sweep_rows,
        correlations,
        notes,
    })
}

fn sweep_from_evaluation(eval: &Evaluation, days: &ScenarioSet, mechanisms: &[Mechanism]) -> Vec<SweepRow> {
    let base = &eval.run(Mechanism::NoStorage).expect("baseline").daily_cost;
    Mechanism::ALL
        .iter()
        .filter(|m| mechanisms.contains(m))
        .filter_map(|&m| eval.run(m))
        .map(|run| {
            let k = run.firm_capacities.len().max(1) as f64;
            SweepRow {
                community_size: run.firm_capacities.len(),
                mechanism: run.mechanism,
                repetitions: 1,
                capacity_per_firm_mean: run.total_capacity() / k,
                capacity_per_firm_variance: 0.0,
                profit_per_firm_mean: days.expect(|s| base[s] - run.daily_cost[s]).value / k,
                profit_per_firm_variance: 0.0,
            }
        })
        .collect()
}
