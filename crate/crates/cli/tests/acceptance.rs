//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{Duration as Days, NaiveDate};
use evload::domain::{total_variation_union, DateRange, DayOfWeek, DayType, EvType, Pmf, Season, StreamKey, TimeGrid};
use evload::generator::{
    generate_fleet_aggregate, generate_fleet_schedules, schedule_to_profile, GenerationStats, GeneratorConfig,
};
use evload::ingest::{fleet_summary, parse_events, write_events, EvRecord, Fleet, IngestConfig};
use evload::model::{
    bin_duration, charging_probability, fit_model, start_time_labels, EvProfileModel, FitConfig, ProbabilityQuery,
};
use evload::scenario::{penetration_sweep, ScenarioConfig};
use evload::sensitivity::{bootstrap_convergence, sample_size_study, SensitivityConfig, SizeResult};
use evload::synth::{make_base_load, make_fleet, make_ground_truth_model, sample_events_from_model, GroundTruthSpec};
use rand::Rng;

type Verdict = Result<String, String>;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn window(start: NaiveDate, days: i64) -> DateRange {
    DateRange::new(start, start + Days::days(days)).unwrap()
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Verdict {
    if elapsed.as_secs_f64() < limit_s {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
    }
}

fn classification() -> Verdict {
    let t = Instant::now();
    let spec = GroundTruthSpec::residential(500, window(date(2019, 1, 7), 7));
    let model = make_ground_truth_model(&spec).unwrap();
    let fleet = make_fleet(&spec, 1).unwrap();
    let events = sample_events_from_model(&model, &fleet, &spec.window, 1, &GeneratorConfig::exact_bins());
    let mut csv = Vec::new();
    write_events(&events, &mut csv).unwrap();
    let parsed = parse_events(csv.as_slice(), &IngestConfig::default()).unwrap();
    let fleet = Fleet::from_events(&parsed.events).unwrap();
    let summary = fleet_summary(fleet.records()).unwrap();
    let got: Vec<f64> = EvType::ALL.iter().map(|&t| summary.ratio_percent(t)).collect();
    let detail = format!("counts {:?}, ratios {:.1}/{:.1}/{:.1} %", summary.counts, got[0], got[1], got[2]);
    let ok = got.iter().zip([20.8, 58.8, 20.4]).all(|(g, w)| (g - w).abs() <= 0.05) && summary.counts == [104, 294, 102];
    if !ok {
        return Err(detail);
    }
    within(t.elapsed(), 1.0, detail)
}

fn duration_binning() -> Verdict {
    let mut mismatches = 0;
    for d in 1..=600i64 {
        let mut label = 15;
        while label < d {
            label += 15;
        }
        if bin_duration(d).ok() != Some(label as u32) {
            mismatches += 1;
        }
    }
    let detail = format!("{mismatches} mismatches over 1..600 min");
    if mismatches == 0 { Ok(detail) } else { Err(detail) }
}

fn oracle_recovery() -> Verdict {
    let t = Instant::now();
    // A year from November with 1000/1500/2000 vehicles per class puts
    // over 50 000 starts in every (class, day type, season) stratum.
    let mut spec = GroundTruthSpec::residential(4500, window(date(2018, 11, 5), 364));
    spec.mix = [1000.0 / 4500.0, 1500.0 / 4500.0, 2000.0 / 4500.0];
    let truth = make_ground_truth_model(&spec).unwrap();
    let fleet = make_fleet(&spec, 31).unwrap();
    let events = sample_events_from_model(&truth, &fleet, &spec.window, 31, &GeneratorConfig::exact_bins());
    let fleet = Fleet::from_events(&events).unwrap();
    let fitted = fit_model(&events, &fleet, &FitConfig { window: Some(spec.window), ..Default::default() }).unwrap();
    drop(events);

    let mut failures = Vec::new();
    let mut dur_max: f64 = 0.0;
    for t in EvType::ALL {
        let n: u64 = fitted.duration(t).counts().unwrap().iter().sum();
        if n < 200_000 {
            failures.push(format!("only {n} {t} events"));
        }
        dur_max = dur_max.max(total_variation_union(fitted.duration(t), truth.duration(t)));
    }
    if dur_max >= 0.02 {
        failures.push(format!("duration TV {dur_max:.4}"));
    }
    let mut start_max: f64 = 0.0;
    let mut min_events = u64::MAX;
    for t in EvType::ALL {
        for dt in DayType::ALL {
            for s in Season::ALL {
                let f = fitted.start_time(t, dt, s);
                min_events = min_events.min(f.counts().unwrap().iter().sum());
                start_max = start_max.max(total_variation_union(f, truth.start_time(t, dt, s)));
            }
        }
    }
    if min_events < 50_000 {
        failures.push(format!("smallest start stratum has {min_events} events"));
    }
    if start_max >= 0.05 {
        failures.push(format!("start-time TV {start_max:.4}"));
    }

    // Recharge counts: 1000 vehicle-weeks per class, so each (class, day)
    // stratum holds 1000 vehicle-days.
    let week = window(date(2019, 1, 7), 7);
    let spec = GroundTruthSpec::residential(3000, week).with_mix([1.0 / 3.0; 3]);
    let truth_rc = make_ground_truth_model(&spec).unwrap();
    let rc_fleet = make_fleet(&spec, 32).unwrap();
    let events = sample_events_from_model(&truth_rc, &rc_fleet, &week, 32, &GeneratorConfig::exact_bins());
    let fleet = Fleet::new(rc_fleet).unwrap();
    let fitted_rc = fit_model(&events, &fleet, &FitConfig { window: Some(week), ..Default::default() }).unwrap();
    let mut rc_tv = Vec::new();
    for t in EvType::ALL {
        for d in DayOfWeek::ALL {
            rc_tv.push(total_variation_union(fitted_rc.recharge_count(t, d), truth_rc.recharge_count(t, d)));
        }
    }
    let rc_max = rc_tv.iter().cloned().fold(0.0, f64::max);
    let rc_mean = rc_tv.iter().sum::<f64>() / rc_tv.len() as f64;
    let rc_over = rc_tv.iter().filter(|v| **v >= 0.02).count();
    if rc_max >= 0.02 {
        failures.push(format!("recharge-count TV max {rc_max:.4} ({rc_over}/21 strata at or above 0.02)"));
    }

    let detail = format!(
        "duration TV max {dur_max:.4}; start TV max {start_max:.4} (min {min_events} events/stratum); \
         recharge TV max {rc_max:.4}, mean {rc_mean:.4}"
    );
    if !failures.is_empty() {
        return Err(format!("{detail}; failed: {}", failures.join(", ")));
    }
    within(t.elapsed(), 60.0, detail)
}

fn residential_model() -> EvProfileModel {
    make_ground_truth_model(&GroundTruthSpec::residential(10, window(date(2019, 1, 7), 7))).unwrap()
}

fn stress_model() -> EvProfileModel {
    let mut spec = GroundTruthSpec::uniform(10, window(date(2019, 1, 7), 7));
    let heavy = Pmf::from_weights(vec![3, 4, 5, 6], &[1.0; 4]).unwrap();
    let labels = start_time_labels();
    let narrow: Vec<f64> = labels.iter().map(|l| if (1020..=1080).contains(l) { 1.0 } else { 0.0 }).collect();
    let narrow = Pmf::from_weights(labels, &narrow).unwrap();
    spec.recharge_count.values_mut().for_each(|p| *p = heavy.clone());
    spec.start_time.values_mut().for_each(|p| *p = narrow.clone());
    make_ground_truth_model(&spec).unwrap()
}

fn oracle_schedules(model: &EvProfileModel, evs: usize, days: i64, seed: u64) -> (Vec<EvRecord>, Vec<evload::generator::ChargingSchedule>) {
    let spec = GroundTruthSpec::residential(evs, window(date(2019, 1, 7), days));
    let fleet = make_fleet(&spec, seed).unwrap();
    let dates: Vec<NaiveDate> = spec.window.iter().collect();
    let schedules = generate_fleet_schedules(model, &fleet, &dates, seed, &GeneratorConfig::default());
    (fleet, schedules)
}

fn non_overlap() -> Verdict {
    let mut total = 0;
    let mut violations = 0;
    let models = [residential_model(), make_ground_truth_model(&GroundTruthSpec::uniform(10, window(date(2019, 1, 7), 7))).unwrap(), stress_model()];
    let mut residential_stats = GenerationStats::default();
    for (i, m) in models.iter().enumerate() {
        let (_, schedules) = oracle_schedules(m, 1000, 34, 40 + i as u64);
        for s in &schedules {
            total += 1;
            violations += !s.is_well_ordered() as usize;
            if i == 0 {
                residential_stats.ev_days += 1;
                residential_stats.ev_days_with_drops += (s.dropped > 0) as usize;
            }
        }
    }
    let rate = residential_stats.drop_rate();
    let detail = format!(
        "{violations} violations in {total} schedules; drops on {:.3}% of default-PMF EV-days",
        100.0 * rate
    );
    if violations == 0 && total >= 100_000 && rate < 0.01 { Ok(detail) } else { Err(detail) }
}

fn energy_conservation() -> Verdict {
    let (fleet, schedules) = oracle_schedules(&residential_model(), 1000, 100, 50);
    let power: std::collections::HashMap<&str, f64> = fleet.iter().map(|r| (r.ev_id.as_str(), r.rated_power_kw)).collect();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for s in &schedules {
        let p = power[s.ev_id.as_str()];
        let expect = p * s.minutes_within_day() as f64 / 60.0;
        for grid in [TimeGrid::MINUTE, TimeGrid::QUARTER_HOUR] {
            let got = schedule_to_profile(s, p, grid).energy_kwh();
            let err = if expect == 0.0 { got.abs() } else { (got - expect).abs() / expect };
            worst = worst.max(err);
            checked += 1;
        }
    }
    let detail = format!("{checked} profiles, worst relative error {worst:.2e}");
    if worst <= 1e-9 { Ok(detail) } else { Err(detail) }
}

fn run_cli(bin: &Path, args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(bin).args(args).env("EVLOAD_THREADS", threads).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`evload {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn dirs_identical(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut other: Vec<_> = std::fs::read_dir(b).unwrap().map(|e| e.unwrap().file_name()).collect();
    other.sort();
    if names != other {
        return Err(format!("{} and {} hold different files", a.display(), b.display()));
    }
    for n in &names {
        if std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).unwrap() {
            return Err(format!("{} differs between runs", n.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn determinism() -> Verdict {
    let bin = Path::new(env!("CARGO_BIN_EXE_evload"));
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let synth_dir = p("synth");
    run_cli(
        bin,
        &["synth", "--seed", "11", "--evs", "300", "--days", "28", "--customers", "300", "--base-date", "2019-01-16", "--out", &synth_dir],
        "1",
    )?;
    let events = format!("{synth_dir}/events.csv");
    let base = format!("{synth_dir}/base_load.csv");
    let mut files = 0;
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let fit = p(&format!("fit_{name}"));
        run_cli(bin, &["fit", "--events", &events, "--out", &fit], threads)?;
        let model = p("fit_a/model.json");
        run_cli(bin, &["generate", "--model", &model, "--evs", "500", "--days", "2", "--seed", "42", "--format", "long", "--out", &p(&format!("gen_{name}"))], threads)?;
        run_cli(bin, &["scenario", "--model", &model, "--base", &base, "--seed", "5", "--penetration", "0,0.3,0.5,0.7", "--out", &p(&format!("scen_{name}"))], threads)?;
        run_cli(bin, &["sensitivity", "--events", &events, "--sizes", "30,60,100", "--reps", "300", "--seed", "9", "--out", &p(&format!("sens_{name}"))], threads)?;
    }
    for stage in ["fit", "gen", "scen", "sens"] {
        files += dirs_identical(&tmp.path().join(format!("{stage}_a")), &tmp.path().join(format!("{stage}_b")))?;
    }
    Ok(format!("{files} output files byte-identical across re-runs with 1 and 3 threads"))
}

fn sensitivity_convergence() -> Verdict {
    let t = Instant::now();
    let spec = GroundTruthSpec::residential(500, window(date(2018, 11, 5), 26 * 7));
    let truth = make_ground_truth_model(&spec).unwrap();
    let fleet = make_fleet(&spec, 70).unwrap();
    let events = sample_events_from_model(&truth, &fleet, &spec.window, 70, &GeneratorConfig::exact_bins());
    let report = sample_size_study(&events, &[30, 60, 100], 1000, 71, &SensitivityConfig::default()).unwrap();
    let check = bootstrap_convergence(&report, 1000, 72);
    let stds: Vec<f64> = report.sizes.iter().map(SizeResult::mean_std).collect();
    let cos: Vec<f64> = report.sizes.iter().map(SizeResult::median_cosine).collect();
    let detail = format!(
        "mean std {:.4}/{:.4}/{:.4}, decreasing in {:.1}% of 1000 bootstrap re-runs; median cosine {:.4}/{:.4}/{:.4}",
        stds[0], stds[1], stds[2], 100.0 * check.std_decreasing, cos[0], cos[1], cos[2]
    );
    if check.std_decreasing < 0.95 || !(cos[0] < cos[1] && cos[1] < cos[2]) {
        return Err(detail);
    }
    within(t.elapsed(), 300.0, detail)
}

fn peak_shift() -> Verdict {
    let base = make_base_load(16_000, date(2019, 1, 16), TimeGrid::QUARTER_HOUR, 80).unwrap();
    let results = penetration_sweep(&base, &ScenarioConfig::new(0.0, 81), &[0.0, 0.3, 0.5, 0.7], &residential_model()).unwrap();
    let line: Vec<String> = results
        .iter()
        .map(|r| format!("{}: {:.0} kW at {}", r.penetration, r.peak_kw, evload::domain::format_minute(r.peak_minute())))
        .collect();
    let detail = line.join(", ");
    let monotone = results.windows(2).all(|w| w[1].peak_kw >= w[0].peak_kw);
    let first = results[0].peak_minute();
    let last = results[3].peak_minute();
    if monotone && first == 420 && (900..1080).contains(&last) { Ok(detail) } else { Err(detail) }
}

fn throughput() -> Verdict {
    let spec = GroundTruthSpec::residential(16_000, window(date(2019, 1, 16), 1));
    let model = residential_model();
    let fleet = make_fleet(&spec, 90).unwrap();
    let t = Instant::now();
    let (agg, stats) = generate_fleet_aggregate(&model, &fleet, date(2019, 1, 16), 90, TimeGrid::MINUTE, &GeneratorConfig::default());
    let elapsed = t.elapsed();
    let detail = format!(
        "{} EV-days at 1-min resolution, {:.0} kWh, in {:.2}s",
        stats.ev_days,
        agg.energy_kwh(),
        elapsed.as_secs_f64()
    );
    if stats.ev_days != 16_000 {
        return Err(detail);
    }
    within(elapsed, 10.0, detail)
}

fn literal_probability() -> Verdict {
    // A model fitted on a small log, so many bins carry zero mass.
    let spec = GroundTruthSpec::residential(40, window(date(2019, 1, 7), 14));
    let truth = make_ground_truth_model(&spec).unwrap();
    let fleet = make_fleet(&spec, 100).unwrap();
    let events = sample_events_from_model(&truth, &fleet, &spec.window, 100, &GeneratorConfig::exact_bins());
    let model = fit_model(&events, &Fleet::from_events(&events).unwrap(), &FitConfig::default()).unwrap();
    let mut rng = StreamKey::new(101).with("coordinates").rng();
    let (mut zero_cases, mut bad) = (0, 0);
    for _ in 0..10_000 {
        let q = ProbabilityQuery {
            ev_type: EvType::ALL[rng.random_range(0..3)],
            day: DayOfWeek::ALL[rng.random_range(0..7)],
            season: Season::ALL[rng.random_range(0..2)],
            minute_of_day: rng.random_range(0..1440),
            reference_duration_min: rng.random_range(1..=240),
        };
        let p = charging_probability(&model, &q).unwrap();
        let product = p.recharge * p.duration * p.start_time;
        let any_zero = p.recharge == 0.0 || p.duration == 0.0 || p.start_time == 0.0;
        zero_cases += any_zero as usize;
        let ok = if any_zero { p.rho == 0.0 } else { (p.rho - product).abs() <= 1e-12 }
            && p.rho <= p.recharge.min(p.duration).min(p.start_time);
        bad += !ok as usize;
    }
    let detail = format!("{bad} violations over 10000 coordinates ({zero_cases} with a zero factor)");
    if bad == 0 && zero_cases > 0 { Ok(detail) } else { Err(detail) }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("classification shares", classification),
        ("duration binning", duration_binning),
        ("oracle recovery", oracle_recovery),
        ("non-overlap", non_overlap),
        ("energy conservation", energy_conservation),
        ("determinism", determinism),
        ("sensitivity convergence", sensitivity_convergence),
        ("peak shift", peak_shift),
        ("throughput", throughput),
        ("literal charging probability", literal_probability),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = check();
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
