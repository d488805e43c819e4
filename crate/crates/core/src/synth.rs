//! Known-truth models and synthetic event logs for exercising the fitting
//! pipeline end to end.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DateRange, DayOfWeek, DayType, EvType, Pmf, Season, SeasonMap, StreamKey, TimeGrid};
use crate::error::{Error, Result};
use crate::generator::{generate_fleet_schedules, GeneratorConfig};
use crate::ingest::{ChargingEvent, EvRecord};
use crate::model::{
    start_time_labels, EvProfileModel, ModelMetadata, RechargeKey, StartKey, TypeStats, BIN_WIDTH_MIN,
};
use crate::scenario::BaseLoadSet;

/// Explicit PMFs per stratum plus the fleet they apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub fleet_size: usize,
    /// Class shares, small/medium/large.
    pub mix: [f64; 3],
    pub window: DateRange,
    pub season_map: SeasonMap,
    /// Rated powers are drawn uniformly from these ranges, per class.
    pub power_range_kw: [(f64, f64); 3],
    pub recharge_count: BTreeMap<RechargeKey, Pmf>,
    pub start_time: BTreeMap<StartKey, Pmf>,
    pub duration: BTreeMap<EvType, Pmf>,
}

const POWER_RANGES: [(f64, f64); 3] = [(1.9, 3.2), (3.4, 7.6), (7.8, 11.4)];

impl GroundTruthSpec {
    /// Uniform PMFs everywhere: 0–3 daily charges, any quarter-hour start,
    /// 15–120 minute durations.
    pub fn uniform(fleet_size: usize, window: DateRange) -> Self {
        let rech = Pmf::uniform((0..=3).collect()).expect("non-empty");
        let start = Pmf::uniform(start_time_labels()).expect("non-empty");
        let dur = Pmf::uniform((1..=8).map(|i| i * BIN_WIDTH_MIN).collect()).expect("non-empty");
        Self::from_parts(fleet_size, [1.0 / 3.0; 3], window, |_, _| rech.clone(), |_, _, _| start.clone(), |_| {
            dur.clone()
        })
    }

    /// Residential shapes: short charges for small vehicles, 30–90 minute
    /// charges for large ones, 20–30 % of days without charging, and start
    /// times with a night bump near 03:00 and the main peak between 15:00
    /// and 18:00. The medium winter-Monday start PMF peaks at 15:00 with
    /// 2.6 % of its mass.
    pub fn residential(fleet_size: usize, window: DateRange) -> Self {
        Self::from_parts(
            fleet_size,
            [0.208, 0.588, 0.204],
            window,
            |t, _| residential_recharge(t),
            |t, dt, s| residential_start(t, dt, s),
            residential_duration,
        )
    }

    fn from_parts(
        fleet_size: usize,
        mix: [f64; 3],
        window: DateRange,
        rech: impl Fn(EvType, DayOfWeek) -> Pmf,
        start: impl Fn(EvType, DayType, Season) -> Pmf,
        dur: impl Fn(EvType) -> Pmf,
    ) -> Self {
        let mut recharge_count = BTreeMap::new();
        let mut start_time = BTreeMap::new();
        let mut duration = BTreeMap::new();
        for t in EvType::ALL {
            for d in DayOfWeek::ALL {
                recharge_count.insert((t, d), rech(t, d));
            }
            for dt in DayType::ALL {
                for s in Season::ALL {
                    start_time.insert((t, dt, s), start(t, dt, s));
                }
            }
            duration.insert(t, dur(t));
        }
        GroundTruthSpec {
            fleet_size,
            mix,
            window,
            season_map: SeasonMap::default(),
            power_range_kw: POWER_RANGES,
            recharge_count,
            start_time,
            duration,
        }
    }

    pub fn with_mix(mut self, mix: [f64; 3]) -> Self {
        self.mix = mix;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mix.iter().any(|m| !(0.0..=1.0).contains(m)) || (self.mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("fleet mix {:?} must be shares summing to 1", self.mix)));
        }
        for (i, (lo, hi)) in self.power_range_kw.iter().enumerate() {
            let t = EvType::ALL[i];
            let ok = lo <= hi
                && crate::ingest::classify_ev(*lo).ok() == Some(t)
                && crate::ingest::classify_ev(*hi).ok() == Some(t);
            if !ok {
                return Err(Error::Validation(format!("power range {lo}..{hi} kW is not inside the {t} class")));
            }
        }
        Ok(())
    }

    /// Vehicles per class, apportioned by largest remainder.
    pub fn type_counts(&self) -> [usize; 3] {
        apportion(&self.mix, self.fleet_size)
    }
}

/// Splits `total` by `shares` so the parts sum to `total` exactly.
pub fn apportion(shares: &[f64; 3], total: usize) -> [usize; 3] {
    let exact: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut out = [0usize; 3];
    for (o, e) in out.iter_mut().zip(&exact) {
        *o = (e + 1e-9).floor() as usize;
    }
    let mut rest = total.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - out[a] as f64;
        let fb = exact[b] - out[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

fn residential_duration(t: EvType) -> Pmf {
    let probs: &[f64] = match t {
        EvType::Small => &[0.30, 0.30, 0.15, 0.12, 0.08, 0.03, 0.02],
        EvType::Medium => &[0.20, 0.30, 0.18, 0.15, 0.12, 0.03, 0.02],
        EvType::Large => &[0.03, 0.10, 0.12, 0.20, 0.17, 0.18, 0.08, 0.07, 0.03, 0.02],
    };
    let labels = (1..=probs.len() as u32).map(|i| i * BIN_WIDTH_MIN).collect();
    Pmf::from_weights(labels, probs).expect("static weights")
}

fn residential_recharge(t: EvType) -> Pmf {
    let probs: &[f64] = match t {
        EvType::Small => &[0.20, 0.25, 0.20, 0.12, 0.08, 0.06, 0.05, 0.04],
        EvType::Medium => &[0.25, 0.35, 0.20, 0.12, 0.05, 0.03],
        EvType::Large => &[0.30, 0.40, 0.21, 0.07, 0.02],
    };
    Pmf::from_weights((0..probs.len() as u32).collect(), probs).expect("static weights")
}

fn gauss(x: f64, mu: f64, sd: f64) -> f64 {
    (-0.5 * ((x - mu) / sd).powi(2)).exp()
}

/// Start-time PMF with a main peak at `main_min` carrying exactly
/// `peak_mass`, a lower shoulder 150 minutes later and a night bump at
/// 03:00, on a flat floor chosen to hit the peak mass.
pub fn start_shape(main_min: f64, peak_mass: f64) -> Result<Pmf> {
    let labels = start_time_labels();
    let shape: Vec<f64> = labels
        .iter()
        .map(|&l| {
            let x = l as f64;
            gauss(x, main_min, 60.0) + 0.7 * gauss(x, main_min + 150.0, 60.0) + 0.35 * gauss(x, 180.0, 50.0)
        })
        .collect();
    let peak_bin = (main_min / BIN_WIDTH_MIN as f64).round() as usize;
    let total: f64 = shape.iter().sum();
    let n = labels.len() as f64;
    let floor = (shape[peak_bin] - peak_mass * total) / (n * peak_mass - 1.0);
    if !(floor >= 0.0) {
        return Err(Error::Validation(format!("peak mass {peak_mass} unreachable for this shape")));
    }
    let weights: Vec<f64> = shape.iter().map(|s| s + floor).collect();
    Pmf::from_weights(labels, &weights)
}

fn residential_start(t: EvType, dt: DayType, s: Season) -> Pmf {
    let main = if dt == DayType::Weekend { 960.0 } else { 900.0 };
    let base = match t {
        EvType::Small => 0.024,
        EvType::Medium => 0.026,
        EvType::Large => 0.028,
    };
    let peak = match (s, dt) {
        (Season::Winter, DayType::Weekend) => base - 0.003,
        (Season::Winter, _) => base,
        (Season::Summer, DayType::Weekend) => base - 0.006,
        (Season::Summer, _) => base - 0.004,
    };
    start_shape(main, peak).expect("residential shapes are feasible")
}

/// Model whose PMFs are exactly those of `spec`.
pub fn make_ground_truth_model(spec: &GroundTruthSpec) -> Result<EvProfileModel> {
    spec.validate()?;
    let counts = spec.type_counts();
    let metadata = ModelMetadata {
        window: spec.window,
        bin_width_min: BIN_WIDTH_MIN,
        season_map: spec.season_map,
        fleet: EvType::ALL
            .iter()
            .map(|&t| {
                let (lo, hi) = spec.power_range_kw[t.index()];
                TypeStats { ev_type: t, count: counts[t.index()], rated_power_kw: Some(0.5 * (lo + hi)) }
            })
            .collect(),
        event_count: 0,
        fallbacks: Vec::new(),
    };
    EvProfileModel::new(metadata, spec.recharge_count.clone(), spec.start_time.clone(), spec.duration.clone())
}

/// Fleet realizing the spec's class counts exactly, with ids `EV0001…`
/// in shuffled class order and rated powers drawn inside each class range.
pub fn make_fleet(spec: &GroundTruthSpec, seed: u64) -> Result<Vec<EvRecord>> {
    spec.validate()?;
    let counts = spec.type_counts();
    let mut types: Vec<EvType> = EvType::ALL.iter().flat_map(|&t| std::iter::repeat_n(t, counts[t.index()])).collect();
    types.shuffle(&mut StreamKey::new(seed).with("fleet-order").rng());
    let width = spec.fleet_size.to_string().len().max(4);
    types
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let id = format!("EV{:0width$}", i + 1);
            let (lo, hi) = spec.power_range_kw[t.index()];
            let u: f64 = StreamKey::new(seed).with("fleet-power").with(&id).rng().random();
            let power = ((lo + u * (hi - lo)) * 100.0).round() / 100.0;
            let power = power.clamp(lo, hi);
            Ok(EvRecord { ev_id: id, rated_power_kw: power, ev_type: t, event_count: 0 })
        })
        .collect()
}

/// Runs the generator over every vehicle-day of `window` and logs each
/// scheduled interval as an event whose energy is `rated · minutes / 60`.
pub fn sample_events_from_model(
    model: &EvProfileModel,
    fleet: &[EvRecord],
    window: &DateRange,
    seed: u64,
    config: &GeneratorConfig,
) -> Vec<ChargingEvent> {
    let dates: Vec<NaiveDate> = window.iter().collect();
    let power: BTreeMap<&str, f64> = fleet.iter().map(|r| (r.ev_id.as_str(), r.rated_power_kw)).collect();
    generate_fleet_schedules(model, fleet, &dates, seed, config)
        .into_iter()
        .flat_map(|s| {
            let p = power[s.ev_id.as_str()];
            s.intervals
                .into_iter()
                .map(move |iv| {
                    let start = s.date.and_time(NaiveTime::MIN) + Duration::minutes(iv.start_min as i64);
                    let minutes = iv.duration_min();
                    ChargingEvent {
                        ev_id: s.ev_id.clone(),
                        start,
                        end: start + Duration::minutes(minutes as i64),
                        energy_kwh: p * minutes as f64 / 60.0,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Winter base load for a heated home: a flat floor of 1.8 kW, a 07:00
/// morning peak 0.25 kW above it and a small 20:00 hump, scaled per customer.
pub fn make_base_load(customers: usize, date: NaiveDate, grid: TimeGrid, seed: u64) -> Result<BaseLoadSet> {
    let width = customers.to_string().len().max(4);
    let profiles = (0..customers)
        .map(|i| {
            let id = format!("C{:0width$}", i + 1);
            let mut rng = StreamKey::new(seed).with("base-load").with(&id).rng();
            let scale = rng.random_range(0.7..1.3);
            let values = (0..grid.steps_per_day())
                .map(|step| {
                    let x = grid.minute_of_step(step) as f64 + 0.5 * (grid.resolution_min() as f64 - 1.0);
                    let shape = 1.8 + 0.25 * gauss(x, 427.5, 45.0) + 0.1 * gauss(x, 1200.0, 75.0);
                    scale * shape * rng.random_range(0.97..1.03)
                })
                .collect();
            (id, values)
        })
        .collect();
    BaseLoadSet::new(date, grid, profiles)
}
