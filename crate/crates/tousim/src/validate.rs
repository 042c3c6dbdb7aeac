//! Oracle certification suite behind `tousim validate`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tousim_core::game::{coalition_stability, verify_best_response, BestResponseCertificate, CoalitionCertificate, Verdict};
use tousim_core::oracle::{certify_against_dp, DiscretizedInstance, DpCheck};
use tousim_core::EquilibriumResult;

use crate::error::HarnessError;
use crate::harness::{derive_seed, evaluate, MarketChecks, Mechanism, Scenario};

/// Coalitions larger than singletons are only enumerated up to this size
/// of community.
pub const PAIR_ENUMERATION_LIMIT: usize = 8;

/// Tolerance of the analytic-versus-DP cost comparison.
pub const DP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub equilibrium: EquilibriumResult,
    pub market: MarketChecks,
    pub best_response: Vec<BestResponseCertificate>,
    pub coalitions: CoalitionCertificate,
    pub dp_checks: Vec<DpCheck>,
    pub passed: bool,
    pub notes: Vec<String>,
}

/// Singletons, plus every pair in small communities.
pub fn default_coalitions(n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    if n > 2 && n <= PAIR_ENUMERATION_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                out.push(vec![i, j]);
            }
        }
    }
    if n == 1 {
        out.clear();
    }
    out
}

pub fn run_validation(scenario: &Scenario, dp_instances: usize) -> Result<ValidationReport, HarnessError> {
    scenario.validate()?;
    let sched = &scenario.schedule;
    let eff = scenario.efficiency;
    let solve = scenario.solve_set()?;
    let days = scenario.day_set()?;
    let eval = evaluate(sched, eff, &solve, &days, &[Mechanism::Sharing, Mechanism::OfflineOptimal], true)?;
    let eq = eval.equilibrium.expect("sharing was requested");
    let market = eval.market.expect("sharing was requested");
    let mut notes = eq.warnings.clone();

    let best_response = (0..solve.n_firms())
        .into_par_iter()
        .map(|i| verify_best_response(i, &eq, &solve, &days, sched, eff, None))
        .collect::<Result<Vec<_>, _>>()?;
    let coalitions = coalition_stability(&default_coalitions(solve.n_firms()), &eq, &solve, &days, sched, eff)?;

    if !eff.is_lossless() {
        notes.push("dynamic-programming checks use lossless storage".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, 7));
    let instances: Vec<DiscretizedInstance> = (0..dp_instances).map(|_| DiscretizedInstance::random(&mut rng, 1, 6, 4)).collect();
    let dp_checks = instances
        .par_iter()
        .map(|inst| certify_against_dp(inst, DP_TOLERANCE))
        .collect::<Result<Vec<_>, _>>()?;

    if eq.alignment.as_ref().is_some_and(|a| a.verdict == Verdict::Inconclusive) {
        notes.push("alignment inconclusive; equilibrium existence is not certified".into());
    }
    let passed = market.passed
        && best_response.iter().all(|b| b.passed)
        && coalitions.stable
        && dp_checks.iter().all(|d| d.passed);
    Ok(ValidationReport {
        equilibrium: eq,
        market,
        best_response,
        coalitions,
        dp_checks,
        passed,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coalition_lists() {
        assert!(default_coalitions(1).is_empty());
        assert_eq!(default_coalitions(2), vec![vec![0], vec![1]]);
        assert_eq!(default_coalitions(3).len(), 6);
        assert_eq!(default_coalitions(10).len(), 10);
    }
}
