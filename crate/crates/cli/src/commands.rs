use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use evload::domain::{DateRange, DayType, EvType, Season, TimeGrid};
use evload::generator::{
    generate_fleet, generate_fleet_aggregate, read_series, write_profiles_long, write_profiles_wide, DailyProfile,
    GenerationStats, GeneratorConfig, MidnightMode,
};
use evload::ingest::{
    fleet_summary, format_timestamp, parse_events, write_events, write_rejections, EvRecord, Fleet, IngestConfig,
    ParsedEvents, DEFAULT_MAX_POWER_KW,
};
use evload::model::{fit_model, load_model_file, save_model_file, EvProfileModel, FitConfig};
use evload::scenario::{self, BaseLoadSet, ScenarioConfig, REPRESENTATIVE_POWER_KW};
use evload::sensitivity::{self, SensitivityConfig};
use evload::synth::{self, GroundTruthSpec};

use crate::settings::{parse_mix, Settings};
use crate::{
    CompareArgs, Failure, FitArgs, GenerateArgs, ProfileFormat, ScenarioArgs, SensitivityArgs, Shape, SynthArgs,
};

const TABLE_ONE_MIX: [f64; 3] = [0.208, 0.588, 0.204];

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Input(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", path.display())))
}

fn read_events(path: &Path, max_power_kw: f64) -> Result<ParsedEvents, Failure> {
    Ok(parse_events(open(path)?, &IngestConfig { max_power_kw })?)
}

fn load_model(path: &Path, s: &Settings) -> Result<EvProfileModel, Failure> {
    let model = load_model_file(path)?;
    if let Some(map) = s.season_map {
        if map != *model.season_map() {
            return Err(Failure::Config("--season-map differs from the season map the model was fitted with".into()));
        }
    }
    Ok(model)
}

fn write_fleet(records: &[EvRecord], path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| Failure::Input(e.to_string());
    w.write_record(["ev_id", "rated_power_kw", "ev_type"]).map_err(io)?;
    for r in records {
        w.write_record([r.ev_id.as_str(), &r.rated_power_kw.to_string(), r.ev_type.as_str()]).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Input(e.to_string()))
}

/// Reads `ev_id,rated_power_kw[,ev_type]`; the class always follows from
/// the power.
fn read_fleet(path: &Path) -> Result<Vec<EvRecord>, Failure> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header = r.headers().map_err(|e| Failure::Input(e.to_string()))?.clone();
    if header.get(0) != Some("ev_id") || header.get(1) != Some("rated_power_kw") {
        return Err(Failure::Input(format!("{}: expected header `ev_id,rated_power_kw`", path.display())));
    }
    let mut records = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Failure::Input(e.to_string()))?;
        let power: f64 = rec
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Failure::Input(format!("{} row {}: bad rated power", path.display(), i + 1)))?;
        records.push(EvRecord::new(&rec[0], power)?);
    }
    Fleet::new(records.clone())?;
    Ok(records)
}

fn synthetic_fleet(n: usize, mix: [f64; 3]) -> Result<Vec<EvRecord>, Failure> {
    if (mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 || mix.iter().any(|m| *m < 0.0) {
        return Err(Failure::Config(format!("mix {mix:?} must be shares summing to 1")));
    }
    let counts = synth::apportion(&mix, n);
    let width = n.to_string().len().max(4);
    let mut out = Vec::with_capacity(n);
    for t in EvType::ALL {
        for _ in 0..counts[t.index()] {
            let id = format!("EV{:0width$}", out.len() + 1);
            out.push(EvRecord::new(id, REPRESENTATIVE_POWER_KW[t.index()])?);
        }
    }
    Ok(out)
}

fn print_stats(stats: &GenerationStats) {
    println!(
        "{} EV-days, {} events requested, {} placed, {:.3}% of EV-days with dropped events",
        stats.ev_days,
        stats.requested_events,
        stats.placed_events,
        100.0 * stats.drop_rate()
    );
}

pub fn fit(s: &Settings, a: FitArgs) -> Result<(), Failure> {
    let max_power = a.max_power.or(s.file.max_power).unwrap_or(DEFAULT_MAX_POWER_KW);
    let parsed = read_events(&a.events, max_power)?;
    let fleet = Fleet::from_events(&parsed.events)?;
    let summary = fleet_summary(fleet.records())?;
    let model = fit_model(&parsed.events, &fleet, &FitConfig { season_map: s.season_map_or_default(), window: None })?;

    save_model_file(&model, &s.output("model.json", &[&a.events])?)?;
    write_rejections(&parsed.rejections, create(&s.output("rejections.csv", &[&a.events])?)?)?;
    write_fleet(fleet.records(), &s.output("fleet.csv", &[&a.events])?)?;

    println!("{summary}");
    println!(
        "{} rows read, {} events accepted, {} rejected",
        parsed.rows,
        parsed.events.len(),
        parsed.rejections.len()
    );
    let w = model.metadata().window;
    println!("study window {} to {} ({} days)", w.start, w.end - Duration::days(1), w.len_days());
    for fb in &model.metadata().fallbacks {
        println!("fallback: {:?} {} pooled over {}", fb.family, fb.stratum, fb.pooled_over);
    }
    Ok(())
}

fn write_aggregate_series(profiles: &[DailyProfile], path: &Path) -> Result<(), Failure> {
    let mut w = create(path)?;
    let io = |e: std::io::Error| Failure::Input(e.to_string());
    writeln!(w, "timestamp,kw").map_err(io)?;
    for p in profiles {
        for (i, v) in p.power_kw.iter().enumerate() {
            writeln!(w, "{},{v}", format_timestamp(p.timestamp(i))).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn generate(s: &Settings, a: GenerateArgs) -> Result<(), Failure> {
    let seed = s.seed()?;
    let model = load_model(&a.model, s)?;
    let grid = s.grid(TimeGrid::QUARTER_HOUR);
    let fleet = match (&a.fleet, a.evs.or(s.file.evs)) {
        (Some(p), _) => read_fleet(p)?,
        (None, Some(n)) => {
            let mix = match a.mix.as_ref().or(s.file.mix.as_ref()) {
                Some(m) => parse_mix(m)?,
                None => TABLE_ONE_MIX,
            };
            synthetic_fleet(n, mix)?
        }
        (None, None) => return Err(Failure::Config("either --fleet or --evs is required".into())),
    };
    if fleet.is_empty() {
        return Err(Failure::Data("fleet is empty".into()));
    }
    let start = a.start.or(s.file.start).unwrap_or(model.metadata().window.start);
    let days = a.days.or(s.file.days).unwrap_or(1);
    if days == 0 {
        return Err(Failure::Config("--days must be at least 1".into()));
    }
    let dates: Vec<NaiveDate> = (0..days as i64).map(|i| start + Duration::days(i)).collect();
    let mut config = if a.exact_bins { GeneratorConfig::exact_bins() } else { GeneratorConfig::default() };
    if a.carryover {
        config.midnight = MidnightMode::Carryover;
    }

    let mut inputs: Vec<&Path> = vec![&a.model];
    if let Some(p) = &a.fleet {
        inputs.push(p);
    }
    let (aggregates, stats) = if a.aggregate_only && !a.carryover {
        let mut stats = GenerationStats::default();
        let mut aggs = Vec::with_capacity(dates.len());
        for &d in &dates {
            let (p, st) = generate_fleet_aggregate(&model, &fleet, d, seed, grid, &config);
            stats.ev_days += st.ev_days;
            stats.requested_events += st.requested_events;
            stats.placed_events += st.placed_events;
            stats.ev_days_with_drops += st.ev_days_with_drops;
            aggs.push(p);
        }
        (aggs, stats)
    } else {
        let run = generate_fleet(&model, &fleet, &dates, seed, grid, &config);
        let mut aggs: Vec<DailyProfile> =
            dates.iter().map(|&d| DailyProfile::zeros("fleet", d, grid)).collect();
        for (i, p) in run.profiles.iter().enumerate() {
            for (t, v) in aggs[i % dates.len()].power_kw.iter_mut().zip(&p.power_kw) {
                *t += v;
            }
        }
        if !a.aggregate_only {
            let path = s.output("profiles.csv", &inputs)?;
            match a.format.or(s.file.format).unwrap_or(ProfileFormat::Wide) {
                ProfileFormat::Wide => write_profiles_wide(&run.profiles, create(&path)?)?,
                ProfileFormat::Long => write_profiles_long(&run.profiles, create(&path)?)?,
            }
        }
        (aggs, run.stats)
    };
    write_aggregate_series(&aggregates, &s.output("aggregate.csv", &inputs)?)?;
    print_stats(&stats);
    Ok(())
}

pub fn scenario(s: &Settings, a: ScenarioArgs) -> Result<(), Failure> {
    let seed = s.seed()?;
    let model = load_model(&a.model, s)?;
    let base = BaseLoadSet::read(open(&a.base)?)?;
    if let Some(r) = s.resolution {
        if r != base.grid().resolution_min() {
            return Err(Failure::Config(format!(
                "--resolution {r} does not match the base load's {}-minute grid",
                base.grid().resolution_min()
            )));
        }
    }
    let levels = a.penetration.or_else(|| s.file.penetration.clone()).unwrap_or_else(|| vec![0.0, 0.3, 0.5, 0.7]);
    let mut config = ScenarioConfig::new(0.0, seed);
    if let Some(m) = a.mix.as_ref().or(s.file.mix.as_ref()) {
        config.fleet_mix = parse_mix(m)?;
    }
    let results = scenario::penetration_sweep(&base, &config, &levels, &model)?;

    let inputs: [&Path; 2] = [&a.model, &a.base];
    scenario::write_summary(&results, create(&s.output("summary.csv", &inputs)?)?)?;
    for r in &results {
        let name = format!("scenario_{}.csv", r.penetration);
        scenario::write_curve(r, create(&s.output(&name, &inputs)?)?)?;
    }
    println!("{:>12}{:>8}{:>12}{:>10}{:>10}", "penetration", "EVs", "peak_kw", "peak_time", "peak_pu");
    for r in &results {
        println!(
            "{:>12}{:>8}{:>12.1}{:>10}{:>10.3}",
            r.penetration,
            r.ev_count,
            r.peak_kw,
            evload::domain::format_minute(r.peak_minute()),
            r.peak_pu()
        );
    }
    Ok(())
}

pub fn sensitivity(s: &Settings, a: SensitivityArgs) -> Result<(), Failure> {
    let seed = s.seed()?;
    let parsed = read_events(&a.events, s.file.max_power.unwrap_or(DEFAULT_MAX_POWER_KW))?;
    let sizes = a.sizes.or_else(|| s.file.sizes.clone()).unwrap_or_else(|| vec![30, 60, 100]);
    let reps = a.reps.or(s.file.reps).unwrap_or(1000);
    let mut config = SensitivityConfig { season_map: s.season_map_or_default(), ..Default::default() };
    if let Some(d) = &a.day_type {
        config.day_type = d.parse::<DayType>().map_err(|e| Failure::Config(e.to_string()))?;
    }
    if let Some(x) = &a.season {
        config.season = x.parse::<Season>().map_err(|e| Failure::Config(e.to_string()))?;
    }
    let report = sensitivity::sample_size_study(&parsed.events, &sizes, reps, seed, &config)?;

    let inputs: [&Path; 1] = [&a.events];
    sensitivity::write_cosines(&report, create(&s.output("cosines.csv", &inputs)?)?)?;
    sensitivity::write_profile_stats(&report, create(&s.output("profile_stats.csv", &inputs)?)?)?;
    sensitivity::write_summary(&report, create(&s.output("sensitivity_summary.csv", &inputs)?)?)?;

    println!("{} vehicles, {} {} stratum, {reps} repetitions", report.fleet_size, config.season, config.day_type);
    println!("{:>6}{:>16}{:>12}{:>10}{:>8}", "size", "median_cosine", "mean_std", "mean_tv", "failed");
    for r in &report.sizes {
        println!(
            "{:>6}{:>16.4}{:>12.4}{:>10.4}{:>8}",
            r.size,
            r.median_cosine(),
            r.mean_std(),
            r.mean_tv(),
            r.failed_reps
        );
    }
    let resamples = a.bootstrap.or(s.file.bootstrap).unwrap_or(200);
    if resamples > 0 {
        let check = sensitivity::bootstrap_convergence(&report, resamples, seed);
        println!(
            "bootstrap ({resamples} resamples): std decreasing in {:.1}%, median cosine increasing in {:.1}%",
            100.0 * check.std_decreasing,
            100.0 * check.cosine_increasing
        );
    }
    Ok(())
}

pub fn compare(s: &Settings, a: CompareArgs) -> Result<(), Failure> {
    let forecast = read_series("forecast", open(&a.forecast)?)?;
    let reference = read_series("reference", open(&a.reference)?)?;
    let c = scenario::compare_profiles(&forecast, &reference)?;
    scenario::write_comparison(&c, create(&s.output("comparison.csv", &[&a.forecast, &a.reference])?)?)?;
    println!("cosine similarity     {:.4}", c.cosine);
    println!("peak time difference  {} min", c.peak_time_diff_min);
    println!("peak ratio            {:.4}", c.peak_ratio);
    println!("energy ratio          {:.4}", c.energy_ratio);
    println!("energy error before   {:.3} kWh", c.energy_error_before_peak_kwh);
    println!("energy error after    {:.3} kWh", c.energy_error_after_peak_kwh);
    Ok(())
}

pub fn synth(s: &Settings, a: SynthArgs) -> Result<(), Failure> {
    let seed = s.seed()?;
    let evs = a.evs.or(s.file.evs).unwrap_or(500);
    let start = a.start.or(s.file.start).unwrap_or(NaiveDate::from_ymd_opt(2019, 1, 7).expect("valid date"));
    let days = a.days.or(s.file.days).unwrap_or(28);
    let window = DateRange::new(start, start + Duration::days(days as i64))?;
    let mut spec = match a.shape {
        Shape::Residential => GroundTruthSpec::residential(evs, window),
        Shape::Uniform => GroundTruthSpec::uniform(evs, window),
    };
    if let Some(m) = a.mix.as_ref().or(s.file.mix.as_ref()) {
        spec = spec.with_mix(parse_mix(m)?);
    }
    spec.season_map = s.season_map_or_default();
    let model = synth::make_ground_truth_model(&spec).map_err(|e| Failure::Config(e.to_string()))?;
    let fleet = synth::make_fleet(&spec, seed).map_err(|e| Failure::Config(e.to_string()))?;
    let config = if a.jitter { GeneratorConfig::default() } else { GeneratorConfig::exact_bins() };
    let events = synth::sample_events_from_model(&model, &fleet, &window, seed, &config);

    write_events(&events, create(&s.output("events.csv", &[])?)?)?;
    save_model_file(&model, &s.output("truth_model.json", &[])?)?;
    write_fleet(&fleet, &s.output("fleet.csv", &[])?)?;
    if let Some(n) = a.customers.or(s.file.customers) {
        let date = a.base_date.unwrap_or(start);
        let base = synth::make_base_load(n, date, s.grid(TimeGrid::QUARTER_HOUR), seed)?;
        base.write(create(&s.output("base_load.csv", &[])?)?)?;
    }
    println!("{} vehicles, {} days, {} events", fleet.len(), window.len_days(), events.len());
    Ok(())
}
