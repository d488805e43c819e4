//! Stochastic daily charging schedules.
//!
//! For one vehicle-day the generator draws the number of charging events,
//! then a start time and a duration for each. If any two events overlap the
//! start times are drawn again, up to a retry budget; after that the
//! conflicting events placed last are dropped. The surviving schedule is
//! turned into a power profile by multiplying the on/off train by the
//! vehicle's rated power.

mod profile;

use chrono::NaiveDate;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DayOfWeek, StreamKey, StreamRng, TimeGrid};
use crate::error::{Error, Result};
use crate::ingest::EvRecord;
use crate::model::{EvProfileModel, BIN_WIDTH_MIN};

pub use profile::{
    pulse_train, read_series, schedule_to_profile, schedule_to_profile_with_carry, write_profiles_long,
    write_profiles_wide, write_series, DailyProfile,
};

/// One charging event within a day, `[start_min, end_min)` in minutes
/// from midnight. The end may pass 1440.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChargingInterval {
    pub start_min: u32,
    pub end_min: u32,
}

impl ChargingInterval {
    pub fn new(start_min: u32, duration_min: u32) -> Result<Self> {
        if duration_min == 0 {
            return Err(Error::Domain("charging interval with zero duration".into()));
        }
        Ok(ChargingInterval { start_min, end_min: start_min + duration_min })
    }

    pub fn duration_min(&self) -> u32 {
        self.end_min - self.start_min
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargingSchedule {
    pub ev_id: String,
    pub date: NaiveDate,
    /// Sorted, pairwise separated by at least one idle minute.
    pub intervals: Vec<ChargingInterval>,
    /// Event count drawn from the recharge-count PMF.
    pub requested: u32,
    /// Events discarded after the retry budget ran out.
    pub dropped: u32,
}

impl ChargingSchedule {
    pub fn n(&self) -> usize {
        self.intervals.len()
    }

    /// Strict ordering `t_s,1 < t_f,1 < t_s,2 < … < t_f,n`.
    pub fn is_well_ordered(&self) -> bool {
        self.intervals.iter().all(|iv| iv.end_min > iv.start_min)
            && self.intervals.windows(2).all(|w| w[1].start_min > w[0].end_min)
    }

    /// Scheduled minutes before midnight.
    pub fn minutes_within_day(&self) -> u32 {
        self.intervals
            .iter()
            .map(|iv| iv.end_min.min(crate::domain::MINUTES_PER_DAY).saturating_sub(iv.start_min))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationMode {
    /// A bin labelled 30 yields exactly 30 minutes.
    #[default]
    UpperLabel,
    /// Uniform over the bin's minutes `(label − 15, label]`.
    UniformWithinBin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MidnightMode {
    #[default]
    Truncate,
    /// Charging past 24:00 continues at the start of the next generated
    /// date for the same vehicle.
    Carryover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Draw a uniform minute inside the sampled 15-minute start bin.
    pub start_jitter: bool,
    pub duration_mode: DurationMode,
    /// Full re-draws of the start times allowed after the first attempt.
    pub retry_budget: u32,
    pub midnight: MidnightMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            start_jitter: true,
            duration_mode: DurationMode::UpperLabel,
            retry_budget: 100,
            midnight: MidnightMode::Truncate,
        }
    }
}

impl GeneratorConfig {
    /// Bin-exact draws: starts on bin labels, durations at upper labels.
    pub fn exact_bins() -> Self {
        GeneratorConfig { start_jitter: false, ..Default::default() }
    }
}

/// Random stream owned by one vehicle-day.
pub fn ev_day_stream(seed: u64, ev_id: &str, date: NaiveDate) -> StreamRng {
    StreamKey::new(seed).with("ev-day").with(ev_id).with_date(date).rng()
}

/// Draws one day's schedule for `ev`.
pub fn generate_schedule<R: Rng + ?Sized>(
    model: &EvProfileModel,
    ev: &EvRecord,
    date: NaiveDate,
    rng: &mut R,
    config: &GeneratorConfig,
) -> ChargingSchedule {
    let day = DayOfWeek::of(date);
    let season = model.season_map().season_of(date);
    let n = model.recharge_count(ev.ev_type, day).sample(rng) as usize;
    let start_pmf = model.start_time(ev.ev_type, day.day_type(), season);
    let dur_pmf = model.duration(ev.ev_type);

    let draw_starts = |rng: &mut R, starts: &mut Vec<u32>| {
        starts.clear();
        for _ in 0..n {
            let bin = start_pmf.sample(rng);
            let offset = if config.start_jitter { rng.random_range(0..BIN_WIDTH_MIN) } else { 0 };
            starts.push(bin + offset);
        }
    };

    let mut starts = Vec::with_capacity(n);
    draw_starts(rng, &mut starts);
    let durations: Vec<u32> = (0..n)
        .map(|_| {
            let label = dur_pmf.sample(rng);
            match config.duration_mode {
                DurationMode::UpperLabel => label,
                DurationMode::UniformWithinBin => label - rng.random_range(0..BIN_WIDTH_MIN),
            }
        })
        .collect();

    let mut attempt = 0;
    let mut intervals = loop {
        let ivs: Vec<ChargingInterval> = starts
            .iter()
            .zip(&durations)
            .map(|(&s, &d)| ChargingInterval { start_min: s, end_min: s + d })
            .collect();
        let mut sorted = ivs.clone();
        sorted.sort_unstable();
        if sorted.windows(2).all(|w| w[1].start_min > w[0].end_min) {
            break sorted;
        }
        if attempt == config.retry_budget {
            break ivs;
        }
        attempt += 1;
        draw_starts(rng, &mut starts);
    };

    // Retry budget exhausted: keep events in draw order, skipping any that
    // collide with one already kept.
    let mut dropped = 0;
    if intervals.windows(2).any(|w| w[1].start_min <= w[0].end_min) {
        let mut kept: Vec<ChargingInterval> = Vec::with_capacity(n);
        for iv in intervals {
            let clashes = kept
                .iter()
                .any(|k| iv.start_min <= k.end_min && k.start_min <= iv.end_min);
            if clashes {
                dropped += 1;
            } else {
                kept.push(iv);
            }
        }
        kept.sort_unstable();
        intervals = kept;
    }

    ChargingSchedule { ev_id: ev.ev_id.clone(), date, intervals, requested: n as u32, dropped }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerationStats {
    pub ev_days: usize,
    pub requested_events: u64,
    pub placed_events: u64,
    /// EV-days where at least one event was dropped.
    pub ev_days_with_drops: usize,
}

impl GenerationStats {
    pub(crate) fn add(&mut self, s: &ChargingSchedule) {
        self.ev_days += 1;
        self.requested_events += s.requested as u64;
        self.placed_events += s.n() as u64;
        self.ev_days_with_drops += (s.dropped > 0) as usize;
    }

    pub fn drop_rate(&self) -> f64 {
        if self.ev_days == 0 {
            0.0
        } else {
            self.ev_days_with_drops as f64 / self.ev_days as f64
        }
    }
}

/// Schedules for every (vehicle, date) pair, ordered by fleet position
/// then date. Each pair uses its own stream, so the result does not depend
/// on fleet order or thread count.
pub fn generate_fleet_schedules(
    model: &EvProfileModel,
    fleet: &[EvRecord],
    dates: &[NaiveDate],
    seed: u64,
    config: &GeneratorConfig,
) -> Vec<ChargingSchedule> {
    fleet
        .par_iter()
        .flat_map_iter(|ev| {
            dates.iter().map(move |&date| {
                let mut rng = ev_day_stream(seed, &ev.ev_id, date);
                generate_schedule(model, ev, date, &mut rng, config)
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FleetRun {
    pub profiles: Vec<DailyProfile>,
    pub stats: GenerationStats,
}

/// One profile per (vehicle, date), ordered by fleet position then date.
pub fn generate_fleet(
    model: &EvProfileModel,
    fleet: &[EvRecord],
    dates: &[NaiveDate],
    seed: u64,
    grid: TimeGrid,
    config: &GeneratorConfig,
) -> FleetRun {
    let per_ev: Vec<(Vec<DailyProfile>, GenerationStats)> = fleet
        .par_iter()
        .map(|ev| ev_profiles(model, ev, dates, seed, grid, config))
        .collect();
    let mut stats = GenerationStats::default();
    let mut profiles = Vec::with_capacity(fleet.len() * dates.len());
    for (p, s) in per_ev {
        profiles.extend(p);
        stats.ev_days += s.ev_days;
        stats.requested_events += s.requested_events;
        stats.placed_events += s.placed_events;
        stats.ev_days_with_drops += s.ev_days_with_drops;
    }
    FleetRun { profiles, stats }
}

fn ev_profiles(
    model: &EvProfileModel,
    ev: &EvRecord,
    dates: &[NaiveDate],
    seed: u64,
    grid: TimeGrid,
    config: &GeneratorConfig,
) -> (Vec<DailyProfile>, GenerationStats) {
    let mut stats = GenerationStats::default();
    let mut carry = 0;
    let mut prev: Option<NaiveDate> = None;
    let profiles = dates
        .iter()
        .map(|&date| {
            let mut rng = ev_day_stream(seed, &ev.ev_id, date);
            let s = generate_schedule(model, ev, date, &mut rng, config);
            stats.add(&s);
            match config.midnight {
                MidnightMode::Truncate => schedule_to_profile(&s, ev.rated_power_kw, grid),
                MidnightMode::Carryover => {
                    let carry_in = match prev {
                        Some(p) if p.succ_opt() == Some(date) => carry,
                        _ => 0,
                    };
                    let (profile, out) = schedule_to_profile_with_carry(&s, ev.rated_power_kw, grid, carry_in);
                    carry = out;
                    prev = Some(date);
                    profile
                }
            }
        })
        .collect();
    (profiles, stats)
}

const AGGREGATE_CHUNK: usize = 256;

/// Sum of all fleet profiles for one date without materializing them.
/// Partial sums are formed over fixed chunks of the fleet and combined in
/// fleet order, so the result is bit-identical across thread counts.
pub fn generate_fleet_aggregate(
    model: &EvProfileModel,
    fleet: &[EvRecord],
    date: NaiveDate,
    seed: u64,
    grid: TimeGrid,
    config: &GeneratorConfig,
) -> (DailyProfile, GenerationStats) {
    let partials: Vec<(Vec<f64>, GenerationStats)> = fleet
        .par_chunks(AGGREGATE_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; grid.steps_per_day()];
            let mut stats = GenerationStats::default();
            for ev in chunk {
                let mut rng = ev_day_stream(seed, &ev.ev_id, date);
                let s = generate_schedule(model, ev, date, &mut rng, config);
                stats.add(&s);
                let p = schedule_to_profile(&s, ev.rated_power_kw, grid);
                for (a, v) in acc.iter_mut().zip(&p.power_kw) {
                    *a += v;
                }
            }
            (acc, stats)
        })
        .collect();
    let mut total = DailyProfile::zeros("fleet", date, grid);
    let mut stats = GenerationStats::default();
    for (acc, s) in partials {
        for (t, v) in total.power_kw.iter_mut().zip(&acc) {
            *t += v;
        }
        stats.ev_days += s.ev_days;
        stats.requested_events += s.requested_events;
        stats.placed_events += s.placed_events;
        stats.ev_days_with_drops += s.ev_days_with_drops;
    }
    (total, stats)
}
