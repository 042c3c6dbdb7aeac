//! Single-peaked time-of-use tariffs.
//!
//! A day is an off-peak window followed by `p` ramp-up periods (`RU_1..RU_p`)
//! and `q` ramp-down periods (`RD_1..RD_q`, where `RD_1` is the peak). Periods
//! are also addressed by a flat index: `0` is off peak, `RU_j` is `j` and
//! `RD_j` is `p + j`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A price held as an exact integer number of tenths of a cent.
///
/// Comparisons between rates (strict ramps, "is this the peak price") are
/// exact; arithmetic happens on [`Rate::cents`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rate(i64);

impl Rate {
    pub const fn from_tenths(tenths: i64) -> Self {
        Rate(tenths)
    }

    /// Converts a cent value, rejecting anything finer than a tenth of a cent.
    pub fn from_cents(cents: f64) -> Result<Self> {
        if !cents.is_finite() {
            return Err(Error::Schedule(format!("rate {cents} is not finite")));
        }
        let tenths = cents * 10.0;
        let rounded = libm::round(tenths);
        if libm::fabs(tenths - rounded) > 1e-6 {
            return Err(Error::Schedule(format!(
                "rate {cents} is not a whole number of tenths of a cent"
            )));
        }
        Ok(Rate(rounded as i64))
    }

    pub const fn tenths(self) -> i64 {
        self.0
    }

    pub fn cents(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}¢", self.cents())
    }
}

/// Which tariff period an hour belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeriodId {
    OffPeak,
    /// `RU_j`, 1-based.
    RampUp(usize),
    /// `RD_j`, 1-based; `RD_1` is the peak.
    RampDown(usize),
}

impl PeriodId {
    /// Flat index `tau`: 0 for off peak, `j` for `RU_j`, `p + j` for `RD_j`.
    pub fn flat_index(self, p: usize) -> usize {
        match self {
            PeriodId::OffPeak => 0,
            PeriodId::RampUp(j) => j,
            PeriodId::RampDown(j) => p + j,
        }
    }

    pub fn from_flat(tau: usize, p: usize) -> Self {
        if tau == 0 {
            PeriodId::OffPeak
        } else if tau <= p {
            PeriodId::RampUp(tau)
        } else {
            PeriodId::RampDown(tau - p)
        }
    }
}

impl fmt::Display for PeriodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeriodId::OffPeak => write!(f, "OffPeak"),
            PeriodId::RampUp(j) => write!(f, "RU({j})"),
            PeriodId::RampDown(j) => write!(f, "RD({j})"),
        }
    }
}

/// A contiguous block of clock hours. `start_hour + len_hours` may run past
/// midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodWindow {
    pub start_hour: u8,
    pub len_hours: u8,
    pub period: PeriodId,
}

impl PeriodWindow {
    pub fn contains(&self, hour: u8) -> bool {
        let offset = (hour as i32 - self.start_hour as i32).rem_euclid(24);
        offset < self.len_hours as i32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToUSchedule {
    off_peak: Rate,
    ramp_up: Vec<Rate>,
    ramp_down: Vec<Rate>,
    windows: Vec<PeriodWindow>,
    storage_cost: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoPeak,
    /// Ramp-up rates (starting from off peak) are not strictly increasing.
    RampUpNotStrict { at: PeriodId },
    /// Ramp-down rates are not strictly decreasing down to off peak.
    RampDownNotStrict { at: PeriodId },
    StorageCostNotPositive,
    HourUncovered(u8),
    HourOverlap(u8),
    PeriodWithoutWindow(PeriodId),
    PeriodNotContiguous(PeriodId),
    PeriodOutOfOrder(PeriodId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoPeak => write!(f, "schedule has no peak period"),
            Violation::RampUpNotStrict { at } => {
                write!(f, "strict monotonicity: ramp-up rate at {at} does not exceed its predecessor")
            }
            Violation::RampDownNotStrict { at } => {
                write!(f, "strict monotonicity: ramp-down rate at {at} does not fall below its predecessor or stay above off peak")
            }
            Violation::StorageCostNotPositive => write!(f, "storage cost must be positive"),
            Violation::HourUncovered(h) => write!(f, "hour {h} is not covered by any window"),
            Violation::HourOverlap(h) => write!(f, "hour {h} is covered by more than one window"),
            Violation::PeriodWithoutWindow(id) => write!(f, "period {id} has no window"),
            Violation::PeriodNotContiguous(id) => write!(f, "period {id} is split across windows"),
            Violation::PeriodOutOfOrder(id) => write!(f, "period {id} appears out of order in the day"),
        }
    }
}

/// Outcome of [`ToUSchedule::validate_single_peaked`]. Violations make the
/// schedule unusable; warnings do not.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ToUSchedule {
    /// Builds a schedule without validating it.
    pub fn new(
        off_peak: Rate,
        ramp_up: Vec<Rate>,
        ramp_down: Vec<Rate>,
        windows: Vec<PeriodWindow>,
        storage_cost: Rate,
    ) -> Self {
        ToUSchedule {
            off_peak,
            ramp_up,
            ramp_down,
            windows,
            storage_cost,
        }
    }

    /// Builds and validates a schedule whose non-off-peak periods occupy one
    /// hour each from 08:00. Handy when clock hours are irrelevant.
    pub fn from_rates(
        off_peak_cents: f64,
        ramp_up_cents: &[f64],
        ramp_down_cents: &[f64],
        storage_cost_cents: f64,
    ) -> Result<Self> {
        let p = ramp_up_cents.len();
        let q = ramp_down_cents.len();
        if p + q > 16 {
            return Err(Error::Schedule(format!("{} non-off-peak periods do not fit in a day", p + q)));
        }
        let mut windows = Vec::with_capacity(p + q + 1);
        windows.push(PeriodWindow {
            start_hour: ((8 + p + q) % 24) as u8,
            len_hours: (24 - p - q) as u8,
            period: PeriodId::OffPeak,
        });
        for tau in 1..=p + q {
            windows.push(PeriodWindow {
                start_hour: (7 + tau) as u8,
                len_hours: 1,
                period: PeriodId::from_flat(tau, p),
            });
        }
        let to_rates = |xs: &[f64]| xs.iter().map(|&c| Rate::from_cents(c)).collect::<Result<Vec<_>>>();
        let sched = ToUSchedule::new(
            Rate::from_cents(off_peak_cents)?,
            to_rates(ramp_up_cents)?,
            to_rates(ramp_down_cents)?,
            windows,
            Rate::from_cents(storage_cost_cents)?,
        );
        sched.validated()
    }

    /// Derives periods from an hour-indexed rate vector (24 entries).
    ///
    /// Hours billed at `off_peak` form the off-peak window; every maximal run
    /// of equal rates elsewhere becomes one period.
    pub fn from_hourly_rates(off_peak: Rate, hourly: &[Rate], storage_cost: Rate) -> Result<Self> {
        if hourly.len() != 24 {
            return Err(Error::Schedule(format!(
                "expected 24 hourly rates, got {}",
                hourly.len()
            )));
        }
        if let Some(h) = hourly.iter().position(|&r| r < off_peak) {
            return Err(Error::Schedule(format!(
                "hour {h} is priced below the off-peak rate"
            )));
        }
        if hourly.iter().all(|&r| r == off_peak) {
            return Err(Error::Schedule("schedule has no peak period".into()));
        }
        if !hourly.contains(&off_peak) {
            return Err(Error::Schedule("no hour is billed at the off-peak rate".into()));
        }

        // Circular runs, starting right after a rate change so no run wraps.
        let first = (0..24).find(|&h| hourly[h] != hourly[(h + 23) % 24]).unwrap_or(0);
        let mut runs: Vec<(usize, usize, Rate)> = Vec::new();
        for k in 0..24 {
            let h = (first + k) % 24;
            match runs.last_mut() {
                Some(last) if last.2 == hourly[h] => last.1 += 1,
                _ => runs.push((h, 1, hourly[h])),
            }
        }
        let n = runs.len();
        let maxima = (0..n)
            .filter(|&i| {
                let prev = runs[(i + n - 1) % n].2;
                let next = runs[(i + 1) % n].2;
                runs[i].2 > prev && runs[i].2 > next
            })
            .count();
        if maxima > 1 {
            return Err(Error::Schedule(format!(
                "{} local maxima; the tariff is not single peaked",
                if maxima == 2 { String::from("two") } else { format!("{maxima}") }
            )));
        }
        let off_runs: Vec<usize> = (0..n).filter(|&i| runs[i].2 == off_peak).collect();
        if off_runs.len() != 1 {
            return Err(Error::Schedule("off-peak window is not contiguous".into()));
        }
        let off_idx = off_runs[0];
        let ordered: Vec<(usize, usize, Rate)> = (0..n).map(|k| runs[(off_idx + k) % n]).collect();
        let peak_pos = (1..n)
            .max_by_key(|&i| ordered[i].2)
            .ok_or_else(|| Error::Schedule("schedule has no peak period".into()))?;
        let p = peak_pos - 1;
        let mut windows = Vec::with_capacity(n);
        let mut ramp_up = Vec::new();
        let mut ramp_down = Vec::new();
        for (i, &(start, len, rate)) in ordered.iter().enumerate() {
            let period = if i == 0 {
                PeriodId::OffPeak
            } else if i <= p {
                ramp_up.push(rate);
                PeriodId::RampUp(i)
            } else {
                ramp_down.push(rate);
                PeriodId::RampDown(i - p)
            };
            windows.push(PeriodWindow {
                start_hour: start as u8,
                len_hours: len as u8,
                period,
            });
        }
        ToUSchedule::new(off_peak, ramp_up, ramp_down, windows, storage_cost).validated()
    }

    /// Southern California Edison ToU-D-A with a 14¢/kWh/day storage cost:
    /// 13¢ off peak (22:00-08:00), 28¢ 08:00-14:00, 52¢ 14:00-20:00,
    /// 28¢ 20:00-22:00.
    pub fn sce_tou_d_a() -> Self {
        let c = |x: i64| Rate::from_tenths(x * 10);
        let mut hourly = [c(13); 24];
        for (h, slot) in hourly.iter_mut().enumerate() {
            *slot = match h {
                8..=13 => c(28),
                14..=19 => c(52),
                20..=21 => c(28),
                _ => c(13),
            };
        }
        ToUSchedule::from_hourly_rates(c(13), &hourly, c(14)).expect("preset is valid")
    }

    pub fn validated(self) -> Result<Self> {
        let report = self.validate_single_peaked();
        match report.violations.first() {
            None => Ok(self),
            Some(v) => Err(Error::Schedule(format!("{v}"))),
        }
    }

    pub fn validate_single_peaked(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let p = self.p();
        if self.ramp_down.is_empty() {
            report.violations.push(Violation::NoPeak);
        }
        let mut prev = self.off_peak;
        for (j, &r) in self.ramp_up.iter().enumerate() {
            if r <= prev {
                report.violations.push(Violation::RampUpNotStrict {
                    at: PeriodId::RampUp(j + 1),
                });
            }
            prev = r;
        }
        if let Some(&peak) = self.ramp_down.first() {
            if peak <= prev {
                report.violations.push(Violation::RampUpNotStrict {
                    at: PeriodId::RampDown(1),
                });
            }
        }
        for j in 1..self.ramp_down.len() {
            if self.ramp_down[j] >= self.ramp_down[j - 1] || self.ramp_down[j] <= self.off_peak {
                report.violations.push(Violation::RampDownNotStrict {
                    at: PeriodId::RampDown(j + 1),
                });
            }
        }
        if self.storage_cost.tenths() <= 0 {
            report.violations.push(Violation::StorageCostNotPositive);
        }
        self.check_windows(p, &mut report);
        if !self.ramp_down.is_empty() && self.peak_spread_cents() <= self.storage_cost.cents() {
            report.warnings.push(format!(
                "arbitrage is not viable: peak spread {}¢ does not exceed storage cost {}",
                self.peak_spread_cents(),
                self.storage_cost
            ));
        }
        report
    }

    fn check_windows(&self, p: usize, report: &mut ValidationReport) {
        let mut owner: [Option<usize>; 24] = [None; 24];
        for (w_idx, w) in self.windows.iter().enumerate() {
            for k in 0..w.len_hours {
                let h = ((w.start_hour as usize + k as usize) % 24) as u8;
                if owner[h as usize].is_some() {
                    report.violations.push(Violation::HourOverlap(h));
                } else {
                    owner[h as usize] = Some(w_idx);
                }
            }
        }
        for (h, o) in owner.iter().enumerate() {
            if o.is_none() {
                report.violations.push(Violation::HourUncovered(h as u8));
            }
        }
        let n_periods = self.n_periods();
        for tau in 0..n_periods {
            let id = PeriodId::from_flat(tau, p);
            let count = self.windows.iter().filter(|w| w.period == id).count();
            if count == 0 {
                report.violations.push(Violation::PeriodWithoutWindow(id));
            } else if count > 1 {
                report.violations.push(Violation::PeriodNotContiguous(id));
            }
        }
        for w in &self.windows {
            if w.period.flat_index(p) >= n_periods {
                report.violations.push(Violation::PeriodOutOfOrder(w.period));
            }
        }
        if !report.violations.is_empty() {
            return;
        }
        // Walking the clock from the off-peak window must visit RU_1..RD_q in order.
        let off = self.windows.iter().find(|w| w.period == PeriodId::OffPeak).copied();
        if let Some(off) = off {
            let mut hour = (off.start_hour as usize + off.len_hours as usize) % 24;
            for tau in 1..n_periods {
                let id = PeriodId::from_flat(tau, p);
                let here = self.period_of(hour as u8);
                if here != id {
                    report.violations.push(Violation::PeriodOutOfOrder(id));
                    return;
                }
                let w = self.windows.iter().find(|w| w.period == id).copied();
                if let Some(w) = w {
                    hour = (hour + w.len_hours as usize) % 24;
                }
            }
        }
    }

    /// Number of ramp-up periods.
    pub fn p(&self) -> usize {
        self.ramp_up.len()
    }

    /// Number of ramp-down periods, the peak included.
    pub fn q(&self) -> usize {
        self.ramp_down.len()
    }

    /// `p + q + 1`: every period, off peak included.
    pub fn n_periods(&self) -> usize {
        self.ramp_up.len() + self.ramp_down.len() + 1
    }

    pub fn off_peak_rate(&self) -> Rate {
        self.off_peak
    }

    pub fn ramp_up_rates(&self) -> &[Rate] {
        &self.ramp_up
    }

    pub fn ramp_down_rates(&self) -> &[Rate] {
        &self.ramp_down
    }

    pub fn storage_cost(&self) -> Rate {
        self.storage_cost
    }

    pub fn windows(&self) -> &[PeriodWindow] {
        &self.windows
    }

    /// Rate of flat period `tau`. `tau == 0` and the sentinel `tau == p + q + 1`
    /// both return the off-peak rate.
    pub fn rate(&self, tau: usize) -> Rate {
        let p = self.p();
        if tau == 0 || tau > p + self.q() {
            self.off_peak
        } else if tau <= p {
            self.ramp_up[tau - 1]
        } else {
            self.ramp_down[tau - p - 1]
        }
    }

    pub fn rate_cents(&self, tau: usize) -> f64 {
        self.rate(tau).cents()
    }

    pub fn storage_cost_cents(&self) -> f64 {
        self.storage_cost.cents()
    }

    pub fn peak_index(&self) -> usize {
        self.p() + 1
    }

    /// `pi_{p+1} - pi_l`, the largest spread available for arbitrage.
    pub fn peak_spread_cents(&self) -> f64 {
        self.rate_cents(self.peak_index()) - self.off_peak.cents()
    }

    /// True when the peak spread exceeds the amortized storage cost.
    pub fn arbitrage_viable(&self) -> bool {
        self.peak_spread_cents() > self.storage_cost.cents()
    }

    pub fn period_of(&self, hour: u8) -> PeriodId {
        self.windows
            .iter()
            .find(|w| w.contains(hour % 24))
            .map(|w| w.period)
            .unwrap_or(PeriodId::OffPeak)
    }

    /// Hour at which a tariff day starts: midnight when midnight is off peak,
    /// otherwise the start of the off-peak window. Either way every
    /// non-off-peak period falls inside one day, in order.
    pub fn day_start_hour(&self) -> u8 {
        if self.period_of(0) == PeriodId::OffPeak {
            0
        } else {
            self.windows
                .iter()
                .find(|w| w.period == PeriodId::OffPeak)
                .map(|w| w.start_hour)
                .unwrap_or(0)
        }
    }

    /// Rate of each clock hour.
    pub fn hourly_rates(&self) -> [Rate; 24] {
        let mut out = [self.off_peak; 24];
        let p = self.p();
        for (h, slot) in out.iter_mut().enumerate() {
            *slot = self.rate(self.period_of(h as u8).flat_index(p));
        }
        out
    }

    /// Two-rate schedule (off peak vs. period `tau`) used by the decoupled
    /// baseline. Windows are synthetic.
    pub fn two_tier_for(&self, tau: usize) -> Result<ToUSchedule> {
        ToUSchedule::from_rates(
            self.off_peak.cents(),
            &[],
            &[self.rate_cents(tau)],
            self.storage_cost.cents(),
        )
    }
}
