use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use tousim::config::{ConfigFile, ScenarioSection, ScheduleFile};
use tousim::harness::{parse_mechanisms, Mechanism};
use tousim::output::write_json;
use tousim::{emit_plot_data, run_scenario, run_validation, Scenario, SyntheticSpec};
use tousim_core::game::{check_alignment, solve_equilibrium, Verdict};
use tousim_core::policy::solve_policy;
use tousim_core::{EquilibriumResult, ReservationPolicy, ToUSchedule};

#[derive(Parser)]
#[command(name = "tousim", version, about = "Storage sharing under single-peaked time-of-use tariffs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the collective policy and the capacity equilibrium only.
    Solve(Common),
    /// Compare mechanisms on simulated days and write report and plot data.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Skip the community-size sweep.
        #[arg(long)]
        no_sweep: bool,
    },
    /// Run the oracle certification suite.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Random discretized instances checked against the DP.
        #[arg(long, default_value_t = 25)]
        dp_instances: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; without it the SCE ToU-D-A schedule and a built-in
    /// synthetic community are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Load CSV (timestamp,meter_id,kwh) or JSON profile cache.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated subset of no_storage,no_sharing,two_tier_division,sharing,offline_optimal.
    #[arg(long, value_parser = parse_mechanisms)]
    mechanisms: Option<Vec<Mechanism>>,
    #[arg(long)]
    eta_in: Option<f64>,
    #[arg(long)]
    eta_out: Option<f64>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut cfg = match &self.config {
            Some(path) => ConfigFile::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ConfigFile {
                schedule: ScheduleFile::from_schedule(&ToUSchedule::sce_tou_d_a()),
                scenario: ScenarioSection::default(),
                synthetic: Some(SyntheticSpec::demo()),
            },
        };
        let sc = &mut cfg.scenario;
        if let Some(d) = &self.data {
            sc.data = Some(d.clone());
        }
        if let Some(v) = self.seed {
            sc.seed = v;
        }
        if let Some(v) = self.days {
            sc.days = v;
        }
        if let Some(v) = self.samples {
            sc.samples = v;
        }
        if let Some(v) = &self.mechanisms {
            sc.mechanisms = v.clone();
        }
        if let Some(v) = self.eta_in {
            sc.eta_in = v;
        }
        if let Some(v) = self.eta_out {
            sc.eta_out = v;
        }
        Ok(Scenario::from_config(&cfg)?)
    }
}

#[derive(Serialize)]
struct StandaloneEntry {
    firm_id: String,
    policy: ReservationPolicy,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct SolveOutput {
    firm_ids: Vec<String>,
    equilibrium: EquilibriumResult,
    standalone: Vec<StandaloneEntry>,
}

fn solve(scenario: &Scenario, out: &Path) -> Result<bool> {
    let solve = scenario.solve_set()?;
    let (sched, eff) = (&scenario.schedule, scenario.efficiency);
    let mut eq = solve_equilibrium(&solve, sched, eff)?;
    eq.alignment = Some(check_alignment(&solve, sched, eff, &eq.reservations, None)?);
    let ids = scenario.source.firm_ids();
    let standalone = (0..solve.n_firms())
        .map(|i| {
            let sp = solve_policy(&solve.select_firms(&[i]), sched, eff)?;
            Ok(StandaloneEntry {
                firm_id: ids[i].clone(),
                policy: sp.policy,
                warnings: sp.warnings,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    println!("pool capacity {:.4} kWh, reservations {:?}", eq.collective_capacity, eq.reservations);
    for (id, c) in ids.iter().zip(&eq.allocations) {
        println!("  {id}: {c:.4} kWh");
    }
    let verdict = eq.alignment.as_ref().map(|a| a.verdict);
    println!("alignment: {verdict:?}");
    std::fs::create_dir_all(out)?;
    write_json(
        &SolveOutput {
            firm_ids: ids,
            equilibrium: eq,
            standalone,
        },
        &out.join("solve.json"),
    )?;
    Ok(verdict != Some(Verdict::Fail))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve(common) => {
            let scenario = common.scenario()?;
            solve(&scenario, &common.out)
        }
        Command::Simulate { common, no_sweep } => {
            let scenario = common.scenario()?;
            let report = run_scenario(&scenario, !no_sweep)?;
            emit_plot_data(&report, &common.out)?;
            for row in &report.rows {
                println!(
                    "{:<18} capacity {:>9.3} kWh  cost {:>9.3}¢/day  saving {:>8.3} ± {:.3}¢/day ({:.1}%)",
                    row.mechanism.as_str(),
                    row.total_capacity_kwh,
                    row.mean_daily_cost.value,
                    row.mean_daily_profit.value,
                    row.mean_daily_profit.se,
                    100.0 * row.saving_fraction
                );
            }
            for note in &report.notes {
                info!("{note}");
            }
            println!("outputs written to {}", common.out.display());
            Ok(report.certificates_passed())
        }
        Command::Validate { common, dp_instances } => {
            let scenario = common.scenario()?;
            let report = run_validation(&scenario, dp_instances)?;
            std::fs::create_dir_all(&common.out)?;
            write_json(&report, &common.out.join("validation.json"))?;
            let m = &report.market;
            println!("budget balance: max |net| {:.3e}¢ over {} days", m.max_abs_balance, m.days);
            println!("welfare certificate failures: {}", m.welfare_failures);
            println!("price-law violations: {}", m.price_violations);
            println!("alignment: {:?}", m.alignment);
            for b in &report.best_response {
                println!(
                    "firm {}: alpha {:.4} ± {:.4}, deviations {}",
                    b.firm,
                    b.alpha.value,
                    b.alpha.se,
                    if b.deviations.iter().all(|d| d.passed) { "costlier" } else { "FAIL" }
                );
            }
            println!("coalitions stable: {}", report.coalitions.stable);
            let dp_ok = report.dp_checks.iter().filter(|d| d.passed).count();
            println!("DP equivalence: {dp_ok}/{}", report.dp_checks.len());
            println!("overall: {}", if report.passed { "pass" } else { "FAIL" });
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
