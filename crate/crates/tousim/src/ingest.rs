//! Smart-meter CSV ingestion and the JSON profile cache.
//!
//! Input rows are `timestamp,meter_id,kwh`, one reading per interval, the
//! timestamp marking the start of the interval in local clock time. Readings
//! are summed per clock hour, hours are mapped to tariff periods, and each
//! calendar day that has data for all 24 hours becomes one historical day.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tousim_core::demand::{DayRecord, FirmProfile};
use tousim_core::{PeriodId, ToUSchedule};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(&'static str),
    #[error("no meter has a complete day")]
    NoCompleteDays,
    #[error("profile cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Core(#[from] tousim_core::Error),
}

#[derive(Debug, Deserialize)]
struct Row {
    timestamp: String,
    meter_id: String,
    kwh: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedDay {
    pub meter_id: String,
    pub date: NaiveDate,
    pub hours_present: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    #[serde(skip)]
    pub profiles: Vec<FirmProfile>,
    pub rows: usize,
    /// Line numbers of readings clamped from negative to zero.
    pub clamped_lines: Vec<u64>,
    pub dropped_days: Vec<DroppedDay>,
    /// Meters left with no complete day.
    pub dropped_meters: Vec<String>,
}

pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.naive_local());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f%#z", "%Y-%m-%dT%H:%M:%S%.f%#z"] {
        if let Ok(t) = DateTime::parse_from_str(text, fmt) {
            return Some(t.naive_local());
        }
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
}

/// Reads a load CSV and builds one empirical profile per meter, sorted by
/// meter id.
pub fn ingest_load_csv(path: &Path, sched: &ToUSchedule) -> Result<IngestReport, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(file, sched)
}

pub fn ingest_reader<R: Read>(reader: R, sched: &ToUSchedule) -> Result<IngestReport, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| row_error(&e, 1))?.clone();
    for col in ["timestamp", "meter_id", "kwh"] {
        if !headers.iter().any(|h| h == col) {
            return Err(IngestError::MissingColumn(col));
        }
    }

    // meter -> date -> hourly kWh, with the hours actually seen.
    let mut meters: BTreeMap<String, BTreeMap<NaiveDate, ([f64; 24], BTreeSet<u32>)>> = BTreeMap::new();
    let mut clamped_lines = Vec::new();
    let mut rows = 0;
    for result in rdr.records() {
        let record = result.map_err(|e| row_error(&e, 0))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| IngestError::Row {
            line,
            message: e.to_string(),
        })?;
        rows += 1;
        let ts = parse_timestamp(&row.timestamp).ok_or_else(|| IngestError::Row {
            line,
            message: format!("unparseable timestamp `{}`", row.timestamp),
        })?;
        let mut kwh: f64 = row.kwh.parse().map_err(|_| IngestError::Row {
            line,
            message: format!("unparseable kwh `{}`", row.kwh),
        })?;
        if !kwh.is_finite() {
            return Err(IngestError::Row {
                line,
                message: format!("kwh `{}` is not finite", row.kwh),
            });
        }
        if kwh < 0.0 {
            log::warn!("line {line}: negative reading {kwh} kWh clamped to 0");
            clamped_lines.push(line);
            kwh = 0.0;
        }
        let day = meters.entry(row.meter_id).or_default().entry(ts.date()).or_insert(([0.0; 24], BTreeSet::new()));
        day.0[ts.hour() as usize] += kwh;
        day.1.insert(ts.hour());
    }

    let p = sched.p();
    let hour_period: Vec<usize> = (0..24u8).map(|h| sched.period_of(h).flat_index(p)).collect();
    let mut profiles = Vec::new();
    let mut dropped_days = Vec::new();
    let mut dropped_meters = Vec::new();
    for (meter_id, days) in meters {
        let mut history = Vec::new();
        for (date, (hourly, seen)) in days {
            if seen.len() < 24 {
                dropped_days.push(DroppedDay {
                    meter_id: meter_id.clone(),
                    date,
                    hours_present: seen.len(),
                });
                continue;
            }
            let mut demand = vec![0.0; sched.n_periods()];
            for (h, kwh) in hourly.iter().enumerate() {
                demand[hour_period[h]] += kwh;
            }
            history.push(DayRecord {
                day: date.num_days_from_ce() as i64,
                demand,
            });
        }
        if history.is_empty() {
            log::warn!("meter {meter_id}: no complete day, dropped");
            dropped_meters.push(meter_id);
            continue;
        }
        profiles.push(FirmProfile::from_history(meter_id, history)?);
    }
    if !dropped_days.is_empty() {
        log::warn!("{} incomplete meter-days dropped", dropped_days.len());
    }
    if profiles.is_empty() {
        return Err(IngestError::NoCompleteDays);
    }
    Ok(IngestReport {
        profiles,
        rows,
        clamped_lines,
        dropped_days,
        dropped_meters,
    })
}

fn row_error(e: &csv::Error, fallback: u64) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    IngestError::Row { line, message }
}

/// Per-period sample arrays of every firm, plus the day histories they
/// came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCache {
    /// Period labels in flat order, off peak first.
    pub periods: Vec<String>,
    pub firms: Vec<FirmProfile>,
}

impl ProfileCache {
    pub fn new(sched: &ToUSchedule, firms: Vec<FirmProfile>) -> Self {
        let periods = (0..sched.n_periods())
            .map(|tau| PeriodId::from_flat(tau, sched.p()).to_string())
            .collect();
        ProfileCache { periods, firms }
    }

    pub fn write(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| IngestError::Cache(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path, sched: &ToUSchedule) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cache: ProfileCache = serde_json::from_str(&text).map_err(|e| IngestError::Cache(e.to_string()))?;
        let expected = ProfileCache::new(sched, Vec::new()).periods;
        if cache.periods != expected {
            return Err(IngestError::Cache(format!(
                "cached periods {:?} do not match the schedule's {:?}",
                cache.periods, expected
            )));
        }
        for f in &cache.firms {
            if f.n_periods() != expected.len() {
                return Err(IngestError::Cache(format!("firm {} has {} periods", f.firm_id, f.n_periods())));
            }
            for law in &f.periods {
                law.validate()?;
            }
        }
        Ok(cache)
    }
}

/// Loads firms from a CSV file or, for `.json` paths, a profile cache.
pub fn load_profiles(path: &Path, sched: &ToUSchedule) -> Result<Vec<FirmProfile>, IngestError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Ok(ProfileCache::read(path, sched)?.firms)
    } else {
        Ok(ingest_load_csv(path, sched)?.profiles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tousim_core::demand::DemandDistribution;

    fn day_csv(meter: &str, date: &str, hours: impl Iterator<Item = u32>, kwh: f64) -> String {
        hours.map(|h| format!("{date}T{h:02}:00:00,{meter},{kwh}\n")).collect()
    }

    fn samples(law: &DemandDistribution) -> &[f64] {
        match law {
            DemandDistribution::Empirical { samples } => samples,
            other => panic!("not empirical: {other:?}"),
        }
    }

    #[test]
    fn flat_day_under_sce() {
        let csv = format!("timestamp,meter_id,kwh\n{}", day_csv("m1", "2016-07-01", 0..24, 1.0));
        let rep = ingest_reader(csv.as_bytes(), &ToUSchedule::sce_tou_d_a()).unwrap();
        let f = &rep.profiles[0];
        let got: Vec<f64> = f.periods.iter().map(|l| samples(l)[0]).collect();
        assert_eq!(got, vec![10.0, 6.0, 6.0, 2.0]);
    }

    #[test]
    fn negative_reading_is_clamped() {
        let mut body = day_csv("m1", "2016-07-01", 0..24, 1.0);
        body = body.replacen("T15:00:00,m1,1", "T15:00:00,m1,-0.5", 1);
        let csv = format!("timestamp,meter_id,kwh\n{body}");
        let rep = ingest_reader(csv.as_bytes(), &ToUSchedule::sce_tou_d_a()).unwrap();
        assert_eq!(rep.clamped_lines, vec![17]);
        assert_eq!(samples(&rep.profiles[0].periods[2])[0], 5.0);
    }

    #[test]
    fn short_day_is_dropped() {
        let body = format!(
            "{}{}",
            day_csv("m1", "2016-07-01", 0..24, 1.0),
            day_csv("m1", "2016-07-02", 0..23, 1.0)
        );
        let csv = format!("timestamp,meter_id,kwh\n{body}");
        let rep = ingest_reader(csv.as_bytes(), &ToUSchedule::sce_tou_d_a()).unwrap();
        assert_eq!(rep.dropped_days.len(), 1);
        assert_eq!(rep.dropped_days[0].hours_present, 23);
        assert_eq!(samples(&rep.profiles[0].periods[1]).len(), 1);
    }

    #[test]
    fn sub_hourly_readings_are_summed() {
        let body: String = (0..96)
            .map(|k| format!("2016-07-01 {:02}:{:02}:00-05,m,0.25\n", k / 4, (k % 4) * 15))
            .collect();
        let csv = format!("timestamp,meter_id,kwh\n{body}");
        let rep = ingest_reader(csv.as_bytes(), &ToUSchedule::sce_tou_d_a()).unwrap();
        assert_eq!(samples(&rep.profiles[0].periods[0])[0], 10.0);
    }

    #[test]
    fn bad_row_reports_line() {
        let csv = "timestamp,meter_id,kwh\n2016-07-01T00:00:00,m,1\nnot-a-time,m,1\n";
        match ingest_reader(csv.as_bytes(), &ToUSchedule::sce_tou_d_a()) {
            Err(IngestError::Row { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("timestamp"));
            }
            other => panic!("{other:?}"),
        }
        let csv = "timestamp,meter_id,kwh\n2016-07-01T00:00:00,m,abc\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &ToUSchedule::sce_tou_d_a()),
            Err(IngestError::Row { line: 2, .. })
        ));
        let csv = "time,meter_id,kwh\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &ToUSchedule::sce_tou_d_a()),
            Err(IngestError::MissingColumn("timestamp"))
        ));
    }

    #[test]
    fn cache_round_trip() {
        let sched = ToUSchedule::sce_tou_d_a();
        let csv = format!(
            "timestamp,meter_id,kwh\n{}{}",
            day_csv("b", "2016-07-01", 0..24, 0.5),
            day_csv("a", "2016-07-01", 0..24, 1.0)
        );
        let rep = ingest_reader(csv.as_bytes(), &sched).unwrap();
        assert_eq!(rep.profiles[0].firm_id, "a");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.json");
        ProfileCache::new(&sched, rep.profiles.clone()).write(&path).unwrap();
        assert_eq!(load_profiles(&path, &sched).unwrap(), rep.profiles);
        let two_tier = ToUSchedule::from_rates(13.0, &[], &[52.0], 14.0).unwrap();
        assert!(ProfileCache::read(&path, &two_tier).is_err());
    }
}
