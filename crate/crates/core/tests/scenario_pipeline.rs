mod common;

use chrono::NaiveDate;
use common::{monday, oracle, weeks};
use evload::domain::TimeGrid;
use evload::generator::{generate_fleet_aggregate, DailyProfile, GeneratorConfig};
use evload::ingest::Fleet;
use evload::model::{fit_model, FitConfig};
use evload::scenario::{compare_profiles, max_normalize, penetration_sweep, ScenarioConfig};
use evload::synth::{make_base_load, GroundTruthSpec};
use proptest::prelude::*;

#[test]
fn forecast_tracks_measured_ensemble() {
    // Fit on one seed's log, forecast the same fleet, compare with a
    // "measured" day drawn from the ground truth under another seed.
    let o = oracle(GroundTruthSpec::residential(500, weeks(monday(), 8)), 21);
    let fleet = Fleet::from_events(&o.events).unwrap();
    let fitted = fit_model(&o.events, &fleet, &FitConfig::default()).unwrap();
    let day = NaiveDate::from_ymd_opt(2019, 3, 13).unwrap();
    let cfg = GeneratorConfig::default();
    let (forecast, _) = generate_fleet_aggregate(&fitted, fleet.records(), day, 1, TimeGrid::QUARTER_HOUR, &cfg);
    let (measured, _) = generate_fleet_aggregate(&o.model, &o.fleet, day, 2, TimeGrid::QUARTER_HOUR, &cfg);
    let c = compare_profiles(&forecast, &measured).unwrap();
    assert!(c.cosine > 0.95, "{c:?}");
    assert!((c.energy_ratio - 1.0).abs() < 0.15, "{c:?}");
}

#[test]
fn afternoon_charging_overtakes_morning_peak() {
    let date = NaiveDate::from_ymd_opt(2019, 1, 16).unwrap();
    let o = oracle(GroundTruthSpec::residential(10, weeks(monday(), 1)), 1);
    let base = make_base_load(4000, date, TimeGrid::QUARTER_HOUR, 4).unwrap();
    let rs = penetration_sweep(&base, &ScenarioConfig::new(0.0, 8), &[0.0, 0.3, 0.5, 0.7], &o.model).unwrap();
    assert_eq!(rs[0].peak_minute(), 420);
    assert_eq!(rs[0].peak_pu(), 1.0);
    for w in rs.windows(2) {
        assert!(w[1].peak_kw >= w[0].peak_kw);
    }
    assert!((900..=1080).contains(&rs[3].peak_minute()), "{}", rs[3].peak_minute());
}

proptest! {
    #[test]
    fn normalization_keeps_peak_time(values in prop::collection::vec(0.0f64..50.0, 96), base in 0.1f64..1e4) {
        prop_assume!(values.iter().any(|v| *v > 0.0));
        let p = DailyProfile::new("p", monday(), TimeGrid::QUARTER_HOUR, values).unwrap();
        let own = max_normalize(&p, None).unwrap();
        let ext = max_normalize(&p, Some(base)).unwrap();
        prop_assert_eq!(own.peak().0, p.peak().0);
        prop_assert_eq!(ext.peak().0, p.peak().0);
        prop_assert!(own.power_kw.iter().all(|v| *v <= 1.0));
    }
}
