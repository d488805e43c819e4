#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use evload::domain::DateRange;
use evload::generator::GeneratorConfig;
use evload::ingest::{ChargingEvent, EvRecord};
use evload::model::EvProfileModel;
use evload::synth::{make_fleet, make_ground_truth_model, sample_events_from_model, GroundTruthSpec};

pub fn monday() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 7).unwrap()
}

pub fn weeks(start: NaiveDate, n: i64) -> DateRange {
    DateRange::new(start, start + Duration::days(7 * n)).unwrap()
}

pub struct Oracle {
    pub spec: GroundTruthSpec,
    pub model: EvProfileModel,
    pub fleet: Vec<EvRecord>,
    pub events: Vec<ChargingEvent>,
}

/// Residential ground truth sampled bin-exactly over `window`.
pub fn oracle(spec: GroundTruthSpec, seed: u64) -> Oracle {
    let model = make_ground_truth_model(&spec).unwrap();
    let fleet = make_fleet(&spec, seed).unwrap();
    let events = sample_events_from_model(&model, &fleet, &spec.window, seed, &GeneratorConfig::exact_bins());
    Oracle { spec, model, fleet, events }
}
