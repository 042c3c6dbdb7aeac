//! TOML scenario files.
//!
//! ```toml
//! off_peak_rate_cents = 13.0
//! rates = [13.0, 13.0, ...]          # 24 entries, hour 0 first
//! storage_cost_cents_per_kwh_day = 14.0
//!
//! [scenario]                           # optional
//! mechanisms = ["no_storage", "sharing"]
//! days = 1000
//! seed = 7
//!
//! [synthetic]                          # optional, used when no data file is given
//! firms = 10
//! mean_kwh = [10.0, 6.0, 6.0, 2.0]    # per flat period, off peak first
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tousim_core::demand::SamplingMode;
use tousim_core::schedule::Rate;
use tousim_core::ToUSchedule;

use crate::harness::Mechanism;
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rate list is empty")]
    EmptyRates,
    #[error("rates must cover 24 hours, got {0} entries")]
    WindowsNotCovering(usize),
    #[error("invalid schedule: {0}")]
    Schedule(#[from] tousim_core::Error),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

/// The on-disk layout of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub off_peak_rate_cents: f64,
    /// One rate per clock hour, hour 0 first.
    pub rates: Vec<f64>,
    pub storage_cost_cents_per_kwh_day: f64,
}

impl ScheduleFile {
    pub fn to_schedule(&self) -> Result<ToUSchedule, ConfigError> {
        if self.rates.is_empty() {
            return Err(ConfigError::EmptyRates);
        }
        if self.rates.len() != 24 {
            return Err(ConfigError::WindowsNotCovering(self.rates.len()));
        }
        let hourly = self
            .rates
            .iter()
            .map(|&r| Rate::from_cents(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ToUSchedule::from_hourly_rates(
            Rate::from_cents(self.off_peak_rate_cents)?,
            &hourly,
            Rate::from_cents(self.storage_cost_cents_per_kwh_day)?,
        )?)
    }

    pub fn from_schedule(sched: &ToUSchedule) -> Self {
        ScheduleFile {
            off_peak_rate_cents: sched.off_peak_rate().cents(),
            rates: sched.hourly_rates().iter().map(|r| r.cents()).collect(),
            storage_cost_cents_per_kwh_day: sched.storage_cost_cents(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub mechanisms: Vec<Mechanism>,
    pub days: usize,
    pub seed: u64,
    pub samples: usize,
    pub eta_in: f64,
    pub eta_out: f64,
    /// Community sizes for the plot sweep; empty means the whole community only.
    pub community_sizes: Vec<usize>,
    pub repetitions: usize,
    /// Solve samples and days per sweep cell; default to smaller run sizes.
    pub sweep_samples: Option<usize>,
    pub sweep_days: Option<usize>,
    pub sampling: SamplingMode,
    /// CSV or profile-cache file, relative to the config file.
    pub data: Option<PathBuf>,
    /// Meter ids to keep from metered data; empty keeps all.
    pub firms: Vec<String>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            mechanisms: Mechanism::ALL.to_vec(),
            days: 1000,
            seed: 1,
            samples: tousim_core::DEFAULT_SAMPLES,
            eta_in: 1.0,
            eta_out: 1.0,
            community_sizes: Vec::new(),
            repetitions: 30,
            sweep_samples: None,
            sweep_days: None,
            sampling: SamplingMode::Independent,
            data: None,
            firms: Vec::new(),
        }
    }
}

/// A whole config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub schedule: ScheduleFile,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ConfigFile = toml::from_str(text)?;
        cfg.schedule.to_schedule()?;
        if cfg.scenario.mechanisms.is_empty() {
            return Err(ConfigError::Scenario("at least one mechanism is required".into()));
        }
        if cfg.scenario.days == 0 {
            return Err(ConfigError::Scenario("days must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(data), Some(dir)) = (&cfg.scenario.data, path.parent()) {
            if data.is_relative() {
                cfg.scenario.data = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }
}

pub fn parse_schedule(text: &str) -> Result<ToUSchedule, ConfigError> {
    let file: ScheduleFile = toml::from_str(text)?;
    file.to_schedule()
}

pub fn serialize_schedule(sched: &ToUSchedule) -> String {
    toml::to_string(&ScheduleFile::from_schedule(sched)).expect("schedule fields are plain numbers")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tousim_core::schedule::PeriodId;

    fn sce_text() -> String {
        serialize_schedule(&ToUSchedule::sce_tou_d_a())
    }

    #[test]
    fn sce_round_trip() {
        let sched = parse_schedule(&sce_text()).unwrap();
        assert_eq!(sched, ToUSchedule::sce_tou_d_a());
        assert_eq!((sched.p(), sched.q()), (1, 2));
        assert_eq!(sched.period_of(15), PeriodId::RampDown(1));
        assert_eq!(sched.period_of(3), PeriodId::OffPeak);
        assert_eq!(sched.period_of(9), PeriodId::RampUp(1));
    }

    #[test]
    fn two_local_maxima_rejected() {
        let mut rates = vec![13.0; 24];
        rates[8..11].fill(52.0);
        rates[11..14].fill(28.0);
        rates[14..17].fill(52.0);
        let file = ScheduleFile {
            off_peak_rate_cents: 13.0,
            rates,
            storage_cost_cents_per_kwh_day: 14.0,
        };
        let err = file.to_schedule().unwrap_err().to_string();
        assert!(err.contains("two local maxima"), "{err}");
    }

    #[test]
    fn short_rate_list_rejected() {
        let text = "off_peak_rate_cents = 13.0\nrates = [13.0, 52.0]\nstorage_cost_cents_per_kwh_day = 14.0\n";
        assert!(matches!(parse_schedule(text), Err(ConfigError::WindowsNotCovering(2))));
        let text = "off_peak_rate_cents = 13.0\nrates = []\nstorage_cost_cents_per_kwh_day = 14.0\n";
        assert!(matches!(parse_schedule(text), Err(ConfigError::EmptyRates)));
        assert!(matches!(parse_schedule("rates = ["), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn scenario_defaults() {
        let cfg = ConfigFile::parse(&sce_text()).unwrap();
        assert_eq!(cfg.scenario.mechanisms.len(), 5);
        assert_eq!(cfg.scenario.repetitions, 30);
        assert!(cfg.synthetic.is_none());
    }

    proptest::proptest! {
        #[test]
        fn serialize_then_parse_is_identity(
            off in 50i64..200,
            ru in proptest::collection::vec(1i64..60, 0..3),
            rd_drops in proptest::collection::vec(1i64..40, 0..3),
            peak_rise in 1i64..80,
            lengths in proptest::collection::vec(1usize..4, 6),
            lead in 0usize..6,
            storage in 1i64..300,
        ) {
            // Tenths of a cent: strictly up to the peak, strictly down after it.
            let mut rates = Vec::new();
            let mut r = off;
            for step in &ru {
                r += step;
                rates.push(r);
            }
            r += peak_rise;
            rates.push(r);
            let mut down = r;
            for drop in &rd_drops {
                if down - drop <= off {
                    break;
                }
                down -= drop;
                rates.push(down);
            }
            let mut hourly = vec![off; lead];
            for (rate, len) in rates.iter().zip(&lengths) {
                hourly.extend(std::iter::repeat_n(*rate, *len));
            }
            hourly.resize(24, off);
            let file = ScheduleFile {
                off_peak_rate_cents: off as f64 / 10.0,
                rates: hourly.iter().map(|&t| t as f64 / 10.0).collect(),
                storage_cost_cents_per_kwh_day: storage as f64 / 10.0,
            };
            let sched = file.to_schedule().unwrap();
            let again = parse_schedule(&serialize_schedule(&sched)).unwrap();
            proptest::prop_assert_eq!(&again, &sched);
            proptest::prop_assert_eq!(ScheduleFile::from_schedule(&again), file);
        }
    }
}
