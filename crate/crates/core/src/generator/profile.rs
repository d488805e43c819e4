use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};

use super::ChargingSchedule;
use crate::domain::{format_minute, TimeGrid, MINUTES_PER_DAY};
use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, parse_timestamp};

/// Power drawn over one day on a fixed grid, in kW.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyProfile {
    /// Vehicle id, customer id, or an aggregate tag.
    pub label: String,
    pub date: NaiveDate,
    pub grid: TimeGrid,
    pub power_kw: Vec<f64>,
}

impl DailyProfile {
    pub fn zeros(label: impl Into<String>, date: NaiveDate, grid: TimeGrid) -> Self {
        DailyProfile { label: label.into(), date, grid, power_kw: vec![0.0; grid.steps_per_day()] }
    }

    pub fn new(label: impl Into<String>, date: NaiveDate, grid: TimeGrid, power_kw: Vec<f64>) -> Result<Self> {
        if power_kw.len() != grid.steps_per_day() {
            return Err(Error::Structural(format!(
                "{} values for a grid of {} steps",
                power_kw.len(),
                grid.steps_per_day()
            )));
        }
        Ok(DailyProfile { label: label.into(), date, grid, power_kw })
    }

    /// Σ power·Δt in kWh.
    pub fn energy_kwh(&self) -> f64 {
        self.power_kw.iter().sum::<f64>() * self.grid.step_hours()
    }

    /// First step attaining the maximum, with that maximum.
    pub fn peak(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in self.power_kw.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    pub fn timestamp(&self, step: usize) -> NaiveDateTime {
        let minute = self.grid.minute_of_step(step);
        self.date.and_time(NaiveTime::from_hms_opt(minute / 60, minute % 60, 0).expect("minute within day"))
    }
}

/// Minute-level on/off train for a schedule. Minutes past midnight are
/// returned separately as the overflow length.
pub fn pulse_train(schedule: &ChargingSchedule) -> (Vec<bool>, u32) {
    let mut on = vec![false; MINUTES_PER_DAY as usize];
    let mut overflow = 0;
    for iv in &schedule.intervals {
        let end = iv.end_min.min(MINUTES_PER_DAY);
        for m in iv.start_min..end {
            on[m as usize] = true;
        }
        overflow = overflow.max(iv.end_min.saturating_sub(MINUTES_PER_DAY));
    }
    (on, overflow)
}

/// Rated power times the pulse train, averaged onto `grid`. Charging past
/// midnight is cut at 24:00.
pub fn schedule_to_profile(schedule: &ChargingSchedule, rated_power_kw: f64, grid: TimeGrid) -> DailyProfile {
    let (on, _) = pulse_train(schedule);
    train_to_profile(&schedule.ev_id, schedule.date, &on, rated_power_kw, grid)
}

/// Like [`schedule_to_profile`], but first switches on minutes
/// `[0, carry_in_min)` for charging carried over from the previous day.
/// Returns the profile and the minutes this day carries into the next.
pub fn schedule_to_profile_with_carry(
    schedule: &ChargingSchedule,
    rated_power_kw: f64,
    grid: TimeGrid,
    carry_in_min: u32,
) -> (DailyProfile, u32) {
    let (mut on, overflow) = pulse_train(schedule);
    for m in on.iter_mut().take(carry_in_min.min(MINUTES_PER_DAY) as usize) {
        *m = true;
    }
    (train_to_profile(&schedule.ev_id, schedule.date, &on, rated_power_kw, grid), overflow)
}

fn train_to_profile(label: &str, date: NaiveDate, on: &[bool], rated_power_kw: f64, grid: TimeGrid) -> DailyProfile {
    let r = grid.resolution_min() as usize;
    let power_kw = on
        .chunks(r)
        .map(|bin| {
            let minutes = bin.iter().filter(|&&x| x).count();
            if minutes == r {
                rated_power_kw
            } else {
                rated_power_kw * minutes as f64 / r as f64
            }
        })
        .collect();
    DailyProfile { label: label.to_string(), date, grid, power_kw }
}

/// Wide layout: one row per profile, `label,date,<HH:MM>...`.
pub fn write_profiles_wide<W: Write>(profiles: &[DailyProfile], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let grid = match profiles.first() {
        Some(p) => p.grid,
        None => {
            w.write_record(["ev_id", "date"])?;
            w.flush()?;
            return Ok(());
        }
    };
    let mut header = vec!["ev_id".to_string(), "date".to_string()];
    header.extend((0..grid.steps_per_day()).map(|s| format_minute(grid.minute_of_step(s))));
    w.write_record(&header)?;
    for p in profiles {
        if p.grid != grid {
            return Err(Error::Structural("profiles on different grids".into()));
        }
        let mut row = vec![p.label.clone(), p.date.to_string()];
        row.extend(p.power_kw.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long layout: one row per time step, `ev_id,timestamp,kw`.
pub fn write_profiles_long<W: Write>(profiles: &[DailyProfile], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["ev_id", "timestamp", "kw"])?;
    for p in profiles {
        for (i, v) in p.power_kw.iter().enumerate() {
            w.write_record([p.label.as_str(), &format_timestamp(p.timestamp(i)), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Single series as `timestamp,kw`.
pub fn write_series<W: Write>(profile: &DailyProfile, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["timestamp", "kw"])?;
    for (i, v) in profile.power_kw.iter().enumerate() {
        w.write_record([format_timestamp(profile.timestamp(i)), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `timestamp,kw` series covering exactly one day at a uniform
/// resolution.
pub fn read_series<R: Read>(label: &str, source: R) -> Result<DailyProfile> {
    let mut r = csv::Reader::from_reader(source);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["timestamp", "kw"] {
        return Err(Error::Parse("expected header `timestamp,kw`".into()));
    }
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("row {}: expected 2 fields", i + 1)));
        }
        let t = parse_timestamp(&rec[0]).map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
        let v: f64 = rec[1].parse().map_err(|_| Error::Parse(format!("row {}: bad value `{}`", i + 1, &rec[1])))?;
        stamps.push(t);
        values.push(v);
    }
    if values.is_empty() || MINUTES_PER_DAY as usize % values.len() != 0 {
        return Err(Error::Parse(format!("{} rows do not tile a day", values.len())));
    }
    let grid = TimeGrid::new(MINUTES_PER_DAY / values.len() as u32)?;
    let profile = DailyProfile::new(label, stamps[0].date(), grid, values)?;
    for (i, t) in stamps.iter().enumerate() {
        if *t != profile.timestamp(i) {
            return Err(Error::Parse(format!("row {}: timestamp {} out of sequence", i + 1, format_timestamp(*t))));
        }
    }
    Ok(profile)
}
