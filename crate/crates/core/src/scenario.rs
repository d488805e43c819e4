//! Penetration scenarios: generated EV load stacked on metered base load.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{cosine_similarity, format_minute, EvType, StreamKey, TimeGrid};
use crate::error::{Error, Result};
use crate::generator::{
    ev_day_stream, generate_schedule, schedule_to_profile, DailyProfile, GenerationStats, GeneratorConfig,
};
use crate::ingest::{classify_ev, format_timestamp, EvRecord};
use crate::model::EvProfileModel;

/// Element-wise sum on a shared grid. An empty input yields zeros on `grid`.
pub fn aggregate_profiles(profiles: &[DailyProfile], grid: TimeGrid, date: NaiveDate) -> Result<DailyProfile> {
    let mut total = DailyProfile::zeros("aggregate", date, grid);
    for p in profiles {
        if p.grid != grid {
            return Err(Error::Structural(format!(
                "profile `{}` is on a {}-min grid, expected {}",
                p.label,
                p.grid.resolution_min(),
                grid.resolution_min()
            )));
        }
        for (t, v) in total.power_kw.iter_mut().zip(&p.power_kw) {
            *t += v;
        }
    }
    Ok(total)
}

/// Divides by `base`, or by the profile's own maximum when `base` is None.
pub fn max_normalize(profile: &DailyProfile, base: Option<f64>) -> Result<DailyProfile> {
    let scale = match base {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(Error::Domain(format!("normalization base {b} must be positive"))),
        None => profile.peak().1,
    };
    if !(scale > 0.0) {
        return Err(Error::ZeroProfile);
    }
    let mut out = profile.clone();
    for v in &mut out.power_kw {
        *v /= scale;
    }
    Ok(out)
}

/// Base consumption per customer for one date.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseLoadSet {
    date: NaiveDate,
    grid: TimeGrid,
    profiles: BTreeMap<String, DailyProfile>,
}

impl BaseLoadSet {
    pub fn new(date: NaiveDate, grid: TimeGrid, customers: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut profiles = BTreeMap::new();
        for (id, values) in customers {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("customer `{id}` has non-finite load")));
            }
            let p = DailyProfile::new(id.clone(), date, grid, values)?;
            if profiles.insert(id.clone(), p).is_some() {
                return Err(Error::Structural(format!("duplicate customer `{id}`")));
            }
        }
        Ok(BaseLoadSet { date, grid, profiles })
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn customer_ids(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &DailyProfile> {
        self.profiles.values()
    }

    /// Feeder-level base load, summed in customer-id order.
    pub fn aggregate(&self) -> DailyProfile {
        let mut total = DailyProfile::zeros("base", self.date, self.grid);
        for p in self.profiles.values() {
            for (t, v) in total.power_kw.iter_mut().zip(&p.power_kw) {
                *t += v;
            }
        }
        total
    }

    /// Reads the base-load table:
    ///
    /// ```text
    /// # date=2019-01-16 resolution=15
    /// customer_id,v1,...,v96
    /// C0001,0.61,0.60,...
    /// ```
    pub fn read<R: BufRead>(mut source: R) -> Result<Self> {
        let mut first = String::new();
        source.read_line(&mut first)?;
        let meta = first
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("base load must start with `# date=... resolution=...`".into()))?;
        let (mut date, mut resolution) = (None, None);
        for tok in meta.split(|c: char| c.is_whitespace() || c == ';').filter(|t| !t.is_empty()) {
            match tok.split_once('=') {
                Some(("date", v)) => {
                    date = Some(
                        NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| Error::Parse(format!("bad date `{v}`")))?,
                    )
                }
                Some(("resolution", v)) => {
                    resolution = Some(v.parse::<u32>().map_err(|_| Error::Parse(format!("bad resolution `{v}`")))?)
                }
                _ => return Err(Error::Parse(format!("unknown base-load header token `{tok}`"))),
            }
        }
        let date = date.ok_or_else(|| Error::Parse("base-load header lacks date".into()))?;
        let grid = TimeGrid::new(resolution.ok_or_else(|| Error::Parse("base-load header lacks resolution".into()))?)
            .map_err(|e| Error::Parse(e.to_string()))?;

        let mut r = csv::Reader::from_reader(source);
        let header = r.headers()?.clone();
        if header.len() != grid.steps_per_day() + 1 || &header[0] != "customer_id" {
            return Err(Error::Parse(format!(
                "expected header customer_id plus {} value columns",
                grid.steps_per_day()
            )));
        }
        let mut customers = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Parse(format!("row {}: expected {} fields", i + 1, header.len())));
            }
            let values = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad value `{v}`", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            customers.push((rec[0].to_string(), values));
        }
        BaseLoadSet::new(date, grid, customers)
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "# date={} resolution={}", self.date, self.grid.resolution_min())?;
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["customer_id".to_string()];
        header.extend((1..=self.grid.steps_per_day()).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (id, p) in &self.profiles {
            let mut row = vec![id.clone()];
            row.extend(p.power_kw.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Typical rated powers for vehicles assigned to customers, per class.
pub const REPRESENTATIVE_POWER_KW: [f64; 3] = [3.0, 6.6, 9.6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Share of customers owning an EV.
    pub penetration: f64,
    /// Class shares, small/medium/large.
    pub fleet_mix: [f64; 3],
    pub seed: u64,
    pub representative_power_kw: [f64; 3],
    pub generator: GeneratorConfig,
}

impl ScenarioConfig {
    pub fn new(penetration: f64, seed: u64) -> Self {
        ScenarioConfig {
            penetration,
            fleet_mix: [0.208, 0.588, 0.204],
            seed,
            representative_power_kw: REPRESENTATIVE_POWER_KW,
            generator: GeneratorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err(Error::Config(format!("penetration {} outside [0, 1]", self.penetration)));
        }
        if self.fleet_mix.iter().any(|m| !(0.0..=1.0).contains(m))
            || (self.fleet_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!("fleet mix {:?} must be shares summing to 1", self.fleet_mix)));
        }
        for t in EvType::ALL {
            let p = self.representative_power_kw[t.index()];
            if classify_ev(p).ok() != Some(t) {
                return Err(Error::Config(format!("{p} kW is not a {t}-class power")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub penetration: f64,
    pub ev_count: usize,
    pub base: DailyProfile,
    pub ev_load: DailyProfile,
    pub total: DailyProfile,
    pub peak_step: usize,
    pub peak_kw: f64,
    pub base_peak_kw: f64,
    pub stats: GenerationStats,
}

impl ScenarioResult {
    /// Peak relative to the base case with no EVs.
    pub fn peak_pu(&self) -> f64 {
        self.peak_kw / self.base_peak_kw
    }

    pub fn peak_minute(&self) -> u32 {
        self.total.grid.minute_of_step(self.peak_step)
    }
}

/// Customers in the order EVs are handed out. Raising the penetration
/// extends the prefix, so scenarios with the same seed are nested.
pub fn assignment_order(base: &BaseLoadSet, seed: u64) -> Vec<&str> {
    let mut ids: Vec<&str> = base.customer_ids().collect();
    ids.shuffle(&mut StreamKey::new(seed).with("penetration-order").rng());
    ids
}

/// Class for a customer's EV, drawn from the mix on a per-customer stream.
pub fn assign_class(customer_id: &str, mix: &[f64; 3], seed: u64) -> EvType {
    let u: f64 = StreamKey::new(seed).with("ev-class").with(customer_id).rng().random();
    let mut acc = 0.0;
    for t in EvType::ALL {
        acc += mix[t.index()];
        if u < acc {
            return t;
        }
    }
    // u landed in rounding slack above the last cumulative share
    *EvType::ALL.iter().rev().find(|t| mix[t.index()] > 0.0).unwrap_or(&EvType::Large)
}

pub fn apply_penetration(base: &BaseLoadSet, config: &ScenarioConfig, model: &EvProfileModel) -> Result<ScenarioResult> {
    config.validate()?;
    if base.is_empty() {
        return Err(Error::Config("base load has no customers".into()));
    }
    let n_ev = (config.penetration * base.len() as f64).round() as usize;
    let fleet: Vec<EvRecord> = assignment_order(base, config.seed)
        .into_iter()
        .take(n_ev)
        .map(|id| {
            let t = assign_class(id, &config.fleet_mix, config.seed);
            EvRecord {
                ev_id: id.to_string(),
                rated_power_kw: config.representative_power_kw[t.index()],
                ev_type: t,
                event_count: 0,
            }
        })
        .collect();

    let date = base.date();
    let grid = base.grid();
    let profiles: Vec<(DailyProfile, crate::generator::ChargingSchedule)> = fleet
        .par_iter()
        .map(|ev| {
            let mut rng = ev_day_stream(config.seed, &ev.ev_id, date);
            let s = generate_schedule(model, ev, date, &mut rng, &config.generator);
            (schedule_to_profile(&s, ev.rated_power_kw, grid), s)
        })
        .collect();

    let mut stats = GenerationStats::default();
    let mut ev_load = DailyProfile::zeros("ev", date, grid);
    for (p, s) in &profiles {
        stats.add(s);
        for (t, v) in ev_load.power_kw.iter_mut().zip(&p.power_kw) {
            *t += v;
        }
    }
    let base_agg = base.aggregate();
    let mut total = base_agg.clone();
    total.label = "total".into();
    for (t, v) in total.power_kw.iter_mut().zip(&ev_load.power_kw) {
        *t += v;
    }
    let (peak_step, peak_kw) = total.peak();
    let base_peak_kw = base_agg.peak().1;
    Ok(ScenarioResult {
        penetration: config.penetration,
        ev_count: fleet.len(),
        base: base_agg,
        ev_load,
        total,
        peak_step,
        peak_kw,
        base_peak_kw,
        stats,
    })
}

/// Runs one scenario per penetration level with otherwise identical settings.
pub fn penetration_sweep(
    base: &BaseLoadSet,
    config: &ScenarioConfig,
    penetrations: &[f64],
    model: &EvProfileModel,
) -> Result<Vec<ScenarioResult>> {
    penetrations
        .iter()
        .map(|&p| apply_penetration(base, &ScenarioConfig { penetration: p, ..config.clone() }, model))
        .collect()
}

/// `penetration,peak_kw,peak_time,peak_pu`.
pub fn write_summary<W: Write>(results: &[ScenarioResult], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["penetration", "peak_kw", "peak_time", "peak_pu"])?;
    for r in results {
        w.write_record([
            r.penetration.to_string(),
            r.peak_kw.to_string(),
            format_minute(r.peak_minute()),
            r.peak_pu().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `timestamp,base_kw,ev_kw,total_kw,total_pu` for one scenario, scaled
/// to the base-case peak.
pub fn write_curve<W: Write>(result: &ScenarioResult, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["timestamp", "base_kw", "ev_kw", "total_kw", "total_pu"])?;
    for i in 0..result.total.power_kw.len() {
        w.write_record([
            format_timestamp(result.total.timestamp(i)),
            result.base.power_kw[i].to_string(),
            result.ev_load.power_kw[i].to_string(),
            result.total.power_kw[i].to_string(),
            (result.total.power_kw[i] / result.base_peak_kw).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileComparison {
    pub cosine: f64,
    /// Forecast peak time minus reference peak time.
    pub peak_time_diff_min: i64,
    pub peak_ratio: f64,
    pub energy_ratio: f64,
    /// Forecast minus reference energy (kWh) before the reference peak.
    pub energy_error_before_peak_kwh: f64,
    /// Forecast minus reference energy (kWh) from the reference peak on.
    pub energy_error_after_peak_kwh: f64,
}

pub fn compare_profiles(forecast: &DailyProfile, reference: &DailyProfile) -> Result<ProfileComparison> {
    if forecast.grid != reference.grid {
        return Err(Error::Structural("forecast and reference are on different grids".into()));
    }
    let cosine = cosine_similarity(&forecast.power_kw, &reference.power_kw)?;
    let (f_step, f_peak) = forecast.peak();
    let (r_step, r_peak) = reference.peak();
    let grid = reference.grid;
    let dt = grid.step_hours();
    let (mut before, mut after) = (0.0, 0.0);
    for (i, (f, r)) in forecast.power_kw.iter().zip(&reference.power_kw).enumerate() {
        if i < r_step {
            before += (f - r) * dt;
        } else {
            after += (f - r) * dt;
        }
    }
    Ok(ProfileComparison {
        cosine,
        peak_time_diff_min: grid.minute_of_step(f_step) as i64 - grid.minute_of_step(r_step) as i64,
        peak_ratio: f_peak / r_peak,
        energy_ratio: forecast.energy_kwh() / reference.energy_kwh(),
        energy_error_before_peak_kwh: before,
        energy_error_after_peak_kwh: after,
    })
}

pub fn write_comparison<W: Write>(c: &ProfileComparison, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["metric", "value"])?;
    let rows = [
        ("cosine", c.cosine.to_string()),
        ("peak_time_diff_min", c.peak_time_diff_min.to_string()),
        ("peak_ratio", c.peak_ratio.to_string()),
        ("energy_ratio", c.energy_ratio.to_string()),
        ("energy_error_before_peak_kwh", c.energy_error_before_peak_kwh.to_string()),
        ("energy_error_after_peak_kwh", c.energy_error_after_peak_kwh.to_string()),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DateRange;
    use crate::synth::{make_base_load, make_ground_truth_model, GroundTruthSpec};

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 1, 16).unwrap()
    }

    fn flat(label: &str, v: f64, grid: TimeGrid) -> DailyProfile {
        DailyProfile::new(label, date(), grid, vec![v; grid.steps_per_day()]).unwrap()
    }

    fn model() -> EvProfileModel {
        let w = DateRange::inclusive(date(), date()).unwrap();
        make_ground_truth_model(&GroundTruthSpec::residential(10, w)).unwrap()
    }

    #[test]
    fn aggregate_examples() {
        let g = TimeGrid::QUARTER_HOUR;
        let agg = aggregate_profiles(&[flat("a", 7.2, g), flat("b", 7.2, g)], g, date()).unwrap();
        assert!(agg.power_kw.iter().all(|v| *v == 14.4));
        let mut p = flat("a", 0.0, g);
        p.power_kw[3] = 1.5;
        let agg = aggregate_profiles(&[p.clone(), flat("z", 0.0, g)], g, date()).unwrap();
        assert_eq!(agg.power_kw, p.power_kw);
        let empty = aggregate_profiles(&[], TimeGrid::MINUTE, date()).unwrap();
        assert_eq!(empty.power_kw, vec![0.0; 1440]);
        assert!(matches!(
            aggregate_profiles(&[flat("a", 1.0, TimeGrid::MINUTE)], g, date()),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn normalization() {
        let g = TimeGrid::QUARTER_HOUR;
        let mut p = flat("a", 2.0, g);
        p.power_kw[40] = 8.0;
        let n = max_normalize(&p, None).unwrap();
        assert_eq!(n.power_kw[40], 1.0);
        assert_eq!(n.peak().0, p.peak().0);
        assert!(max_normalize(&flat("f", 3.0, g), None).unwrap().power_kw.iter().all(|v| *v == 1.0));
        assert!(matches!(max_normalize(&flat("z", 0.0, g), None), Err(Error::ZeroProfile)));
        assert_eq!(max_normalize(&p, Some(4.0)).unwrap().power_kw[40], 2.0);
    }

    #[test]
    fn base_load_round_trip() {
        let base = make_base_load(5, date(), TimeGrid::QUARTER_HOUR, 1).unwrap();
        let mut buf = Vec::new();
        base.write(&mut buf).unwrap();
        let back = BaseLoadSet::read(buf.as_slice()).unwrap();
        assert_eq!(back, base);
        assert!(BaseLoadSet::read("customer_id,v1\n".as_bytes()).is_err());
        assert!(BaseLoadSet::read("# date=2019-01-16 resolution=15\ncustomer_id,v1\nC1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn zero_penetration_is_identity() {
        let base = make_base_load(50, date(), TimeGrid::QUARTER_HOUR, 2).unwrap();
        let r = apply_penetration(&base, &ScenarioConfig::new(0.0, 9), &model()).unwrap();
        assert_eq!(r.ev_count, 0);
        assert_eq!(r.total.power_kw, base.aggregate().power_kw);
        assert_eq!(r.peak_pu(), 1.0);
    }

    #[test]
    fn full_penetration_assigns_everyone() {
        let base = make_base_load(100, date(), TimeGrid::QUARTER_HOUR, 2).unwrap();
        let r = apply_penetration(&base, &ScenarioConfig::new(1.0, 9), &model()).unwrap();
        assert_eq!(r.ev_count, 100);
        assert_eq!(r.stats.ev_days, 100);
    }

    #[test]
    fn config_errors() {
        let base = make_base_load(10, date(), TimeGrid::QUARTER_HOUR, 2).unwrap();
        for p in [-0.1, 1.5, f64::NAN] {
            assert!(matches!(apply_penetration(&base, &ScenarioConfig::new(p, 1), &model()), Err(Error::Config(_))));
        }
        let mut cfg = ScenarioConfig::new(0.5, 1);
        cfg.representative_power_kw[0] = 5.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn nested_penetration_is_monotone() {
        let base = make_base_load(120, date(), TimeGrid::QUARTER_HOUR, 2).unwrap();
        let rs = penetration_sweep(&base, &ScenarioConfig::new(0.0, 4), &[0.0, 0.1, 0.3, 0.5, 0.7, 1.0], &model())
            .unwrap();
        for w in rs.windows(2) {
            assert!(w[0].total.power_kw.iter().zip(&w[1].total.power_kw).all(|(a, b)| a <= b));
            assert!(w[1].peak_kw >= w[0].peak_kw);
        }
    }

    #[test]
    fn class_assignment_follows_mix() {
        let counts = (0..20_000).fold([0usize; 3], |mut acc, i| {
            acc[assign_class(&format!("C{i}"), &[0.2, 0.6, 0.2], 5).index()] += 1;
            acc
        });
        // 3σ at n = 20 000, p = 0.6 is ≈ 0.0104.
        assert!((counts[1] as f64 / 20_000.0 - 0.6).abs() < 0.0104);
        assert_eq!(assign_class("C1", &[0.0, 1.0, 0.0], 5), EvType::Medium);
    }

    #[test]
    fn comparison_examples() {
        let g = TimeGrid::QUARTER_HOUR;
        let mut r = flat("r", 1.0, g);
        r.power_kw[60] = 4.0;
        let c = compare_profiles(&r, &r).unwrap();
        assert!((c.cosine - 1.0).abs() < 1e-12);
        assert_eq!((c.peak_time_diff_min, c.peak_ratio, c.energy_ratio), (0, 1.0, 1.0));
        assert_eq!((c.energy_error_before_peak_kwh, c.energy_error_after_peak_kwh), (0.0, 0.0));

        let mut f = r.clone();
        f.power_kw.iter_mut().for_each(|v| *v *= 2.0);
        let c = compare_profiles(&f, &r).unwrap();
        assert!((c.cosine - 1.0).abs() < 1e-12);
        assert_eq!(c.energy_ratio, 2.0);
        assert_eq!(c.peak_ratio, 2.0);

        let mut shifted = flat("s", 1.0, g);
        shifted.power_kw[64] = 4.0;
        let c = compare_profiles(&shifted, &r).unwrap();
        assert_eq!(c.peak_time_diff_min, 60);
        assert!((c.energy_error_before_peak_kwh - 0.0).abs() < 1e-12);
        assert!(matches!(compare_profiles(&flat("m", 1.0, TimeGrid::MINUTE), &r), Err(Error::Structural(_))));
    }
}
