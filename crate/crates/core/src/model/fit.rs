use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    start_time_labels, EvProfileModel, Fallback, Family, ModelMetadata, TypeStats, BIN_WIDTH_MIN, START_BINS,
};
use crate::domain::{DateRange, DayOfWeek, DayType, EvType, Pmf, Season, SeasonMap};
use crate::error::{Error, Result};
use crate::ingest::{median, ChargingEvent, Fleet};

/// Duration bin label: `15·ceil(d/15)`, so `(15i, 15(i+1)]` maps to `15(i+1)`.
pub fn bin_duration(duration_min: i64) -> Result<u32> {
    if duration_min <= 0 {
        return Err(Error::Domain(format!("duration {duration_min} min is not positive")));
    }
    let w = BIN_WIDTH_MIN as i64;
    u32::try_from((duration_min + w - 1) / w * w).map_err(|_| Error::Domain("duration too long".into()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub season_map: SeasonMap,
    /// Observation window for zero-event days. Defaults to the span of
    /// event start dates.
    pub window: Option<DateRange>,
}

/// `[first start date, last start date]` over all events.
pub fn study_window(events: &[ChargingEvent]) -> Result<DateRange> {
    let first = events.iter().map(|e| e.start_date()).min();
    let last = events.iter().map(|e| e.start_date()).max();
    match (first, last) {
        (Some(a), Some(b)) => DateRange::inclusive(a, b),
        _ => Err(Error::EmptyDistribution("no events to derive a study window from".into())),
    }
}

/// One event with its fleet lookups resolved.
#[derive(Debug, Clone, Copy)]
struct Obs {
    ev: u32,
    ev_type: EvType,
    date: NaiveDate,
    day: DayOfWeek,
    season: Season,
    start_minute: u32,
    duration_min: i64,
}

fn observations(events: &[ChargingEvent], fleet: &Fleet, seasons: &SeasonMap) -> Result<Vec<Obs>> {
    let index: HashMap<&str, u32> =
        fleet.records().iter().enumerate().map(|(i, r)| (r.ev_id.as_str(), i as u32)).collect();
    events
        .iter()
        .map(|e| {
            let ev = *index
                .get(e.ev_id.as_str())
                .ok_or_else(|| Error::Structural(format!("event for unknown vehicle `{}`", e.ev_id)))?;
            let date = e.start_date();
            Ok(Obs {
                ev,
                ev_type: fleet.records()[ev as usize].ev_type,
                date,
                day: DayOfWeek::of(date),
                season: seasons.season_of(date),
                start_minute: e.start_minute_of_day(),
                duration_min: e.duration_min(),
            })
        })
        .collect()
}

fn duration_pmf<'a>(obs: impl Iterator<Item = &'a Obs>) -> Result<Pmf> {
    let mut counts: Vec<u64> = Vec::new();
    for o in obs {
        let bin = (bin_duration(o.duration_min)? / BIN_WIDTH_MIN) as usize - 1;
        if bin >= counts.len() {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyDistribution("no events in duration stratum".into()));
    }
    let labels: Vec<u32> = (1..=counts.len() as u32).map(|i| i * BIN_WIDTH_MIN).collect();
    Pmf::from_counts(&counts, &labels)
}

fn start_pmf<'a>(obs: impl Iterator<Item = &'a Obs>) -> Result<Pmf> {
    let mut counts = vec![0u64; START_BINS];
    let mut any = false;
    for o in obs {
        counts[(o.start_minute / BIN_WIDTH_MIN) as usize] += 1;
        any = true;
    }
    if !any {
        return Err(Error::EmptyDistribution("no events in start-time stratum".into()));
    }
    Pmf::from_counts(&counts, &start_time_labels())
}

/// Count PMF over EV-days of the vehicles in `evs` on the window dates
/// accepted by `day_ok`, zero-event days included.
fn recharge_pmf<'a>(
    obs: impl Iterator<Item = &'a Obs>,
    evs: &[u32],
    window: &DateRange,
    day_ok: impl Fn(DayOfWeek) -> bool,
) -> Result<Pmf> {
    let n_dates = window.iter().filter(|d| day_ok(DayOfWeek::of(*d))).count() as u64;
    if n_dates == 0 || evs.is_empty() {
        return Err(Error::EmptyDistribution("no EV-days in recharge-count stratum".into()));
    }
    let mut in_set = vec![false; evs.iter().max().map_or(0, |m| *m as usize + 1)];
    for &e in evs {
        in_set[e as usize] = true;
    }
    let mut per_day: HashMap<(u32, NaiveDate), u64> = HashMap::new();
    for o in obs {
        if in_set.get(o.ev as usize).copied().unwrap_or(false) && window.contains(o.date) && day_ok(o.day) {
            *per_day.entry((o.ev, o.date)).or_default() += 1;
        }
    }
    let ev_days = evs.len() as u64 * n_dates;
    let max_n = per_day.values().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; max_n + 1];
    counts[0] = ev_days - per_day.len() as u64;
    for &n in per_day.values() {
        counts[n as usize] += 1;
    }
    let labels: Vec<u32> = (0..=max_n as u32).collect();
    Pmf::from_counts(&counts, &labels)
}

fn ev_indices(fleet: &Fleet, ev_type: Option<EvType>) -> Vec<u32> {
    fleet
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| ev_type.is_none_or(|t| r.ev_type == t))
        .map(|(i, _)| i as u32)
        .collect()
}

/// Duration PMF of one vehicle class over 15-minute bins.
pub fn fit_duration_pmf(events: &[ChargingEvent], fleet: &Fleet, ev_type: EvType) -> Result<Pmf> {
    let obs = observations(events, fleet, &SeasonMap::default())?;
    duration_pmf(obs.iter().filter(|o| o.ev_type == ev_type))
}

/// Daily event-count PMF for one class and weekday. Every vehicle of the
/// class is observed on every matching date of `window`.
pub fn fit_recharge_count_pmf(
    events: &[ChargingEvent],
    fleet: &Fleet,
    ev_type: EvType,
    day: DayOfWeek,
    window: &DateRange,
) -> Result<Pmf> {
    let obs = observations(events, fleet, &SeasonMap::default())?;
    recharge_pmf(obs.iter(), &ev_indices(fleet, Some(ev_type)), window, |d| d == day)
}

/// Start-time PMF over the 96 quarter-hours of the day for one class,
/// day type and season.
pub fn fit_start_time_pmf(
    events: &[ChargingEvent],
    fleet: &Fleet,
    ev_type: EvType,
    day_type: DayType,
    season: Season,
    season_map: &SeasonMap,
) -> Result<Pmf> {
    let obs = observations(events, fleet, season_map)?;
    start_pmf(
        obs.iter()
            .filter(|o| o.ev_type == ev_type && day_type.contains(o.day) && o.season == season),
    )
}

/// Share of a class's charges falling on each weekday (labels 0 = Monday
/// … 6 = Sunday), normalized over the week.
pub fn weekly_charge_share(events: &[ChargingEvent], fleet: &Fleet, ev_type: EvType) -> Result<Pmf> {
    let obs = observations(events, fleet, &SeasonMap::default())?;
    let mut counts = [0u64; 7];
    for o in obs.iter().filter(|o| o.ev_type == ev_type) {
        counts[o.day.index()] += 1;
    }
    Pmf::from_counts(&counts, &[0, 1, 2, 3, 4, 5, 6])
}

/// Fits every stratum of the model. Strata without data are filled from
/// coarser pools (season dropped, then day type, then class) and the
/// substitution is recorded in the metadata.
pub fn fit_model(events: &[ChargingEvent], fleet: &Fleet, config: &FitConfig) -> Result<EvProfileModel> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    if events.is_empty() {
        return Err(Error::EmptyDistribution("no events".into()));
    }
    let window = match config.window {
        Some(w) if w.is_empty() => return Err(Error::EmptyDistribution("empty study window".into())),
        Some(w) => w,
        None => study_window(events)?,
    };
    let obs = observations(events, fleet, &config.season_map)?;
    let by_type: Vec<Vec<Obs>> = EvType::ALL
        .iter()
        .map(|&t| obs.iter().filter(|o| o.ev_type == t).copied().collect())
        .collect();

    let durations: Vec<(EvType, Pmf, Option<Fallback>)> = EvType::ALL
        .par_iter()
        .map(|&t| match duration_pmf(by_type[t.index()].iter()) {
            Ok(p) => Ok((t, p, None)),
            Err(Error::EmptyDistribution(_)) => {
                let fb = Fallback { family: Family::Duration, stratum: t.to_string(), pooled_over: "all types".into() };
                Ok((t, duration_pmf(obs.iter())?, Some(fb)))
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;

    let rech_keys: Vec<(EvType, DayOfWeek)> =
        EvType::ALL.iter().flat_map(|&t| DayOfWeek::ALL.iter().map(move |&d| (t, d))).collect();
    let recharges: Vec<((EvType, DayOfWeek), Pmf, Option<Fallback>)> = rech_keys
        .par_iter()
        .map(|&(t, d)| {
            let typed = &by_type[t.index()];
            let evs = ev_indices(fleet, Some(t));
            let stratum = format!("{t}/{d}");
            let attempts: [(Option<&str>, &dyn Fn() -> Result<Pmf>); 3] = [
                (None, &|| recharge_pmf(typed.iter(), &evs, &window, |x| x == d)),
                (Some("all days"), &|| recharge_pmf(typed.iter(), &evs, &window, |_| true)),
                (Some("all days, all types"), &|| {
                    recharge_pmf(obs.iter(), &ev_indices(fleet, None), &window, |_| true)
                }),
            ];
            first_fit(&attempts, Family::RechargeCount, &stratum).map(|(p, fb)| ((t, d), p, fb))
        })
        .collect::<Result<_>>()?;

    let start_keys: Vec<(EvType, DayType, Season)> = EvType::ALL
        .iter()
        .flat_map(|&t| {
            DayType::ALL.iter().flat_map(move |&dt| Season::ALL.iter().map(move |&s| (t, dt, s)))
        })
        .collect();
    let starts: Vec<((EvType, DayType, Season), Pmf, Option<Fallback>)> = start_keys
        .par_iter()
        .map(|&(t, dt, s)| {
            let typed = &by_type[t.index()];
            let stratum = format!("{t}/{dt}/{s}");
            let attempts: [(Option<&str>, &dyn Fn() -> Result<Pmf>); 4] = [
                (None, &|| start_pmf(typed.iter().filter(|o| dt.contains(o.day) && o.season == s))),
                (Some("both seasons"), &|| start_pmf(typed.iter().filter(|o| dt.contains(o.day)))),
                (Some("both seasons, all days"), &|| start_pmf(typed.iter())),
                (Some("both seasons, all days, all types"), &|| start_pmf(obs.iter())),
            ];
            first_fit(&attempts, Family::StartTime, &stratum).map(|(p, fb)| ((t, dt, s), p, fb))
        })
        .collect::<Result<_>>()?;

    let mut fallbacks = Vec::new();
    let duration: BTreeMap<_, _> = durations
        .into_iter()
        .map(|(k, p, fb)| {
            fallbacks.extend(fb);
            (k, p)
        })
        .collect();
    let recharge_count: BTreeMap<_, _> = recharges
        .into_iter()
        .map(|(k, p, fb)| {
            fallbacks.extend(fb);
            (k, p)
        })
        .collect();
    let start_time: BTreeMap<_, _> = starts
        .into_iter()
        .map(|(k, p, fb)| {
            fallbacks.extend(fb);
            (k, p)
        })
        .collect();

    let fleet_stats = EvType::ALL
        .iter()
        .map(|&t| {
            let powers: Vec<f64> = fleet.of_type(t).map(|r| r.rated_power_kw).collect();
            TypeStats { ev_type: t, count: powers.len(), rated_power_kw: median(powers) }
        })
        .collect();
    let metadata = ModelMetadata {
        window,
        bin_width_min: BIN_WIDTH_MIN,
        season_map: config.season_map,
        fleet: fleet_stats,
        event_count: events.len() as u64,
        fallbacks,
    };
    EvProfileModel::new(metadata, recharge_count, start_time, duration)
}

type Attempt<'a> = (Option<&'a str>, &'a dyn Fn() -> Result<Pmf>);

fn first_fit(attempts: &[Attempt<'_>], family: Family, stratum: &str) -> Result<(Pmf, Option<Fallback>)> {
    for (pool, attempt) in attempts {
        match attempt() {
            Ok(p) => {
                let fb = pool.map(|pool| Fallback { family, stratum: stratum.to_string(), pooled_over: pool.to_string() });
                return Ok((p, fb));
            }
            Err(Error::EmptyDistribution(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::EmptyDistribution(format!("no data for {stratum} at any pooling level")))
}
