//! Charging-event logs: parsing, cleaning, per-event power and vehicle
//! classification.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::domain::EvType;
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";
pub const EVENTS_HEADER: [&str; 4] = ["ev_id", "start", "end", "energy_kwh"];

/// Class boundaries in kW: small below the first, large from the second up.
pub const SMALL_MEDIUM_KW: f64 = 3.3;
pub const MEDIUM_LARGE_KW: f64 = 7.7;

/// 240 V at 48 A.
pub const DEFAULT_MAX_POWER_KW: f64 = 11.52;

/// One logged charging session.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingEvent {
    pub ev_id: String,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub energy_kwh: f64,
}

impl ChargingEvent {
    pub fn duration_min(&self) -> i64 {
        (self.end - self.start).num_minutes()
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start.date()
    }

    pub fn start_minute_of_day(&self) -> u32 {
        self.start.hour() * 60 + self.start.minute()
    }
}

/// Average power of an event: energy · 60 / minutes.
pub fn compute_event_power(event: &ChargingEvent) -> f64 {
    event.energy_kwh * 60.0 / event.duration_min() as f64
}

/// Half-open partition `[0, 3.3)`, `[3.3, 7.7)`, `[7.7, ∞)`.
pub fn classify_ev(power_kw: f64) -> Result<EvType> {
    if !(power_kw > 0.0) || !power_kw.is_finite() {
        return Err(Error::Domain(format!("charging power {power_kw} kW is not positive")));
    }
    Ok(if power_kw < SMALL_MEDIUM_KW {
        EvType::Small
    } else if power_kw < MEDIUM_LARGE_KW {
        EvType::Medium
    } else {
        EvType::Large
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub max_power_kw: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { max_power_kw: DEFAULT_MAX_POWER_KW }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    FieldCount(usize),
    EmptyEvId,
    BadTimestamp(String),
    BadEnergy(String),
    NonPositiveDuration,
    NonPositiveEnergy,
    PowerExceedsMax,
    Malformed(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::FieldCount(n) => write!(f, "expected 4 fields, found {n}"),
            RejectReason::EmptyEvId => f.write_str("empty ev_id"),
            RejectReason::BadTimestamp(s) => write!(f, "bad timestamp `{s}`"),
            RejectReason::BadEnergy(s) => write!(f, "bad energy `{s}`"),
            RejectReason::NonPositiveDuration => f.write_str("non-positive duration"),
            RejectReason::NonPositiveEnergy => f.write_str("non-positive energy"),
            RejectReason::PowerExceedsMax => f.write_str("power exceeds plausible maximum"),
            RejectReason::Malformed(s) => write!(f, "malformed row: {s}"),
        }
    }
}

/// A rejected input row. `row` counts data rows from 1, header excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub row: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub events: Vec<ChargingEvent>,
    pub rejections: Vec<Rejection>,
    /// Number of data rows read.
    pub rows: usize,
}

/// Reads `ev_id,start,end,energy_kwh` rows. Bad rows land in the rejection
/// report; only an unreadable stream or a wrong header is fatal.
pub fn parse_events<R: Read>(source: R, config: &IngestConfig) -> Result<ParsedEvents> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(Error::Parse("missing header".into())),
        Some(Err(e)) => return Err(Error::Parse(format!("unreadable header: {e}"))),
        Some(Ok(h)) => h,
    };
    let header: Vec<&str> = header.iter().map(|s| s.trim_start_matches('\u{feff}')).collect();
    if header != EVENTS_HEADER {
        return Err(Error::Parse(format!(
            "expected header `{}`, found `{}`",
            EVENTS_HEADER.join(","),
            header.join(",")
        )));
    }

    let mut out = ParsedEvents::default();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        out.rows += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                out.rejections.push(Rejection { row, reason: RejectReason::Malformed(e.to_string()) });
                continue;
            }
        };
        match parse_row(&rec, config) {
            Ok(ev) => out.events.push(ev),
            Err(reason) => out.rejections.push(Rejection { row, reason }),
        }
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord, config: &IngestConfig) -> Result<ChargingEvent, RejectReason> {
    if rec.len() != 4 {
        return Err(RejectReason::FieldCount(rec.len()));
    }
    let ev_id = &rec[0];
    if ev_id.is_empty() {
        return Err(RejectReason::EmptyEvId);
    }
    let start = parse_timestamp(&rec[1])?;
    let end = parse_timestamp(&rec[2])?;
    let energy_kwh: f64 = rec[3]
        .parse()
        .map_err(|_| RejectReason::BadEnergy(rec[3].to_string()))?;
    if !energy_kwh.is_finite() {
        return Err(RejectReason::BadEnergy(rec[3].to_string()));
    }
    if end <= start {
        return Err(RejectReason::NonPositiveDuration);
    }
    if energy_kwh <= 0.0 {
        return Err(RejectReason::NonPositiveEnergy);
    }
    let event = ChargingEvent { ev_id: ev_id.to_string(), start, end, energy_kwh };
    if compute_event_power(&event) > config.max_power_kw {
        return Err(RejectReason::PowerExceedsMax);
    }
    Ok(event)
}

/// Strict `yyyy-mm-dd hh:mm`.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime, RejectReason> {
    let b = s.as_bytes();
    let shape_ok = b.len() == 16
        && b.iter().enumerate().all(|(i, c)| match i {
            4 | 7 => *c == b'-',
            10 => *c == b' ',
            13 => *c == b':',
            _ => c.is_ascii_digit(),
        });
    if !shape_ok {
        return Err(RejectReason::BadTimestamp(s.to_string()));
    }
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).map_err(|_| RejectReason::BadTimestamp(s.to_string()))
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Writes events in the ingestion format. Energies use the shortest
/// representation that parses back to the same `f64`.
pub fn write_events<W: Write>(events: &[ChargingEvent], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        w.write_record([
            e.ev_id.as_str(),
            &format_timestamp(e.start),
            &format_timestamp(e.end),
            &e.energy_kwh.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the rejection report as `row,reason`.
pub fn write_rejections<W: Write>(rejections: &[Rejection], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["row", "reason"])?;
    for r in rejections {
        w.write_record([r.row.to_string(), r.reason.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// A vehicle with its rated power and class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvRecord {
    pub ev_id: String,
    pub rated_power_kw: f64,
    pub ev_type: EvType,
    pub event_count: usize,
}

impl EvRecord {
    /// Record for a vehicle known only by its rated power.
    pub fn new(ev_id: impl Into<String>, rated_power_kw: f64) -> Result<Self> {
        Ok(EvRecord {
            ev_id: ev_id.into(),
            rated_power_kw,
            ev_type: classify_ev(rated_power_kw)?,
            event_count: 0,
        })
    }
}

/// Groups events by vehicle; each vehicle's rated power is the median of
/// its per-event powers. Records come back sorted by `ev_id`.
pub fn assign_rated_power(events: &[ChargingEvent]) -> Result<Vec<EvRecord>> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in events {
        groups.entry(&e.ev_id).or_default().push(compute_event_power(e));
    }
    groups
        .into_iter()
        .map(|(id, powers)| {
            let event_count = powers.len();
            let rated = median(powers).ok_or_else(|| Error::Structural(format!("no events for {id}")))?;
            Ok(EvRecord { ev_id: id.to_string(), rated_power_kw: rated, ev_type: classify_ev(rated)?, event_count })
        })
        .collect()
}

pub(crate) fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Vehicle records indexed by id.
#[derive(Debug, Clone, Default)]
pub struct Fleet {
    records: Vec<EvRecord>,
    index: HashMap<String, usize>,
}

impl Fleet {
    pub fn new(records: Vec<EvRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.ev_id.clone(), i).is_some() {
                return Err(Error::Structural(format!("duplicate ev_id `{}`", r.ev_id)));
            }
        }
        Ok(Fleet { records, index })
    }

    pub fn from_events(events: &[ChargingEvent]) -> Result<Self> {
        Fleet::new(assign_rated_power(events)?)
    }

    pub fn records(&self) -> &[EvRecord] {
        &self.records
    }

    pub fn get(&self, ev_id: &str) -> Option<&EvRecord> {
        self.index.get(ev_id).map(|&i| &self.records[i])
    }

    pub fn ev_type(&self, ev_id: &str) -> Option<EvType> {
        self.get(ev_id).map(|r| r.ev_type)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn of_type(&self, ev_type: EvType) -> impl Iterator<Item = &EvRecord> {
        self.records.iter().filter(move |r| r.ev_type == ev_type)
    }
}

/// Vehicle counts per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetSummary {
    pub counts: [usize; 3],
}

impl FleetSummary {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn count(&self, ev_type: EvType) -> usize {
        self.counts[ev_type.index()]
    }

    /// Share of the fleet in percent.
    pub fn ratio_percent(&self, ev_type: EvType) -> f64 {
        100.0 * self.count(ev_type) as f64 / self.total() as f64
    }
}

impl fmt::Display for FleetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<26}{:<10}{:>14}{:>11}", "Power measured P_EV", "EV type", "Number of EVs", "Ratio (%)")?;
        let bounds = ["P_EV < 3.3 kW", "3.3 kW <= P_EV < 7.7 kW", "P_EV >= 7.7 kW"];
        for (t, b) in EvType::ALL.iter().zip(bounds) {
            writeln!(f, "{:<26}{:<10}{:>14}{:>11.1}", b, t, self.count(*t), self.ratio_percent(*t))?;
        }
        write!(f, "{:<26}{:<10}{:>14}{:>11.1}", "", "total", self.total(), 100.0)
    }
}

pub fn fleet_summary(records: &[EvRecord]) -> Result<FleetSummary> {
    if records.is_empty() {
        return Err(Error::EmptyFleet);
    }
    let mut counts = [0; 3];
    for r in records {
        counts[r.ev_type.index()] += 1;
    }
    Ok(FleetSummary { counts })
}
