//! How much the fitted daily profile depends on the number of vehicles
//! observed: repeated random sub-fleets compared against the full fleet.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{cosine_similarity, total_variation, DayOfWeek, DayType, Pmf, Season, SeasonMap, StreamKey};
use crate::error::{Error, Result};
use crate::ingest::{compute_event_power, ChargingEvent};
use crate::model::{start_time_labels, BIN_WIDTH_MIN, START_BINS};

/// All events of `n_evs` distinct vehicles chosen uniformly at random.
pub fn subsample_fleet<R: Rng + ?Sized>(events: &[ChargingEvent], n_evs: usize, rng: &mut R) -> Result<Vec<ChargingEvent>> {
    let ids: Vec<&str> = events.iter().map(|e| e.ev_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    if n_evs > ids.len() {
        return Err(Error::Domain(format!("cannot draw {n_evs} vehicles from a fleet of {}", ids.len())));
    }
    let chosen: BTreeSet<&str> = index::sample(rng, ids.len(), n_evs).into_iter().map(|i| ids[i]).collect();
    Ok(events.iter().filter(|e| chosen.contains(e.ev_id.as_str())).cloned().collect())
}

/// Which days feed the profile being compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub day_type: DayType,
    pub season: Season,
    pub season_map: SeasonMap,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig { day_type: DayType::Mon, season: Season::Winter, season_map: SeasonMap::default() }
    }
}

/// Per-vehicle share of the stratum: charging power per 15-minute bin of
/// the day, summed over the vehicle's matching days, and start-bin counts.
struct Contribution {
    power: Vec<f64>,
    starts: Vec<u64>,
}

fn contributions(events: &[ChargingEvent], config: &SensitivityConfig) -> Vec<Contribution> {
    let mut by_ev: BTreeMap<&str, Contribution> = BTreeMap::new();
    for e in events {
        let c = by_ev
            .entry(e.ev_id.as_str())
            .or_insert_with(|| Contribution { power: vec![0.0; START_BINS], starts: vec![0; START_BINS] });
        let date = e.start_date();
        if !config.day_type.contains(DayOfWeek::of(date)) || config.season_map.season_of(date) != config.season {
            continue;
        }
        let p = compute_event_power(e);
        let start = e.start_minute_of_day();
        let end = (start as i64 + e.duration_min()).min(1440) as u32;
        c.starts[(start / BIN_WIDTH_MIN) as usize] += 1;
        let mut m = start;
        while m < end {
            let bin = m / BIN_WIDTH_MIN;
            let bin_end = ((bin + 1) * BIN_WIDTH_MIN).min(end);
            c.power[bin as usize] += p * (bin_end - m) as f64 / BIN_WIDTH_MIN as f64;
            m = bin_end;
        }
    }
    by_ev.into_values().collect()
}

/// Max-normalized profile and start-time PMF of the vehicles at `members`
/// (ascending indices, so equal sets give bit-equal sums).
fn combine(contrib: &[Contribution], members: &[usize]) -> Option<(Vec<f64>, Pmf)> {
    let mut power = vec![0.0; START_BINS];
    let mut starts = vec![0u64; START_BINS];
    for &i in members {
        for (a, v) in power.iter_mut().zip(&contrib[i].power) {
            *a += v;
        }
        for (a, v) in starts.iter_mut().zip(&contrib[i].starts) {
            *a += v;
        }
    }
    let max = power.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return None;
    }
    power.iter_mut().for_each(|v| *v /= max);
    let pmf = Pmf::from_counts(&starts, &start_time_labels()).ok()?;
    Some((power, pmf))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeResult {
    pub size: usize,
    /// Normalized profile of each successful repetition.
    pub profiles: Vec<Vec<f64>>,
    /// Repetition index of each entry in `profiles`.
    pub rep_index: Vec<usize>,
    pub cosines: Vec<f64>,
    /// TV distance from each sub-fleet start-time PMF to the full fleet's.
    pub tv_to_full: Vec<f64>,
    /// Sub-fleets without a single charging event in the stratum.
    pub failed_reps: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SizeResult {
    /// Average over the day of the across-repetition standard deviation.
    pub fn mean_std(&self) -> f64 {
        self.std.iter().sum::<f64>() / self.std.len() as f64
    }

    pub fn median_cosine(&self) -> f64 {
        median(&self.cosines)
    }

    pub fn mean_tv(&self) -> f64 {
        self.tv_to_full.iter().sum::<f64>() / self.tv_to_full.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub seed: u64,
    pub reps: usize,
    pub fleet_size: usize,
    pub config: SensitivityConfig,
    pub full_profile: Vec<f64>,
    pub sizes: Vec<SizeResult>,
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-step mean and sample standard deviation across rows. Deviations
/// are taken from the first row, so identical rows give exactly zero.
fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let width = rows.first().map_or(START_BINS, Vec::len);
    let mut mean = vec![f64::NAN; width];
    let mut std = vec![f64::NAN; width];
    if n == 0 {
        return (mean, std);
    }
    for j in 0..width {
        let x0 = rows[0][j];
        let (mut s, mut s2) = (0.0, 0.0);
        for r in rows {
            let d = r[j] - x0;
            s += d;
            s2 += d * d;
        }
        mean[j] = x0 + s / n as f64;
        std[j] = if n > 1 { ((s2 - s * s / n as f64) / (n - 1) as f64).max(0.0).sqrt() } else { 0.0 };
    }
    (mean, std)
}

/// For each size, `reps` independent sub-fleets drawn without replacement.
/// Repetition `r` of size `n` uses its own stream keyed by (seed, n, r).
pub fn sample_size_study(
    events: &[ChargingEvent],
    sizes: &[usize],
    reps: usize,
    seed: u64,
    config: &SensitivityConfig,
) -> Result<SensitivityReport> {
    if reps < 2 {
        return Err(Error::Config(format!("at least 2 repetitions needed, got {reps}")));
    }
    if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("sizes {sizes:?} must be positive and strictly increasing")));
    }
    let contrib = contributions(events, config);
    let fleet_size = contrib.len();
    if let Some(&n) = sizes.iter().find(|&&n| n > fleet_size) {
        return Err(Error::Domain(format!("cannot draw {n} vehicles from a fleet of {fleet_size}")));
    }
    let all: Vec<usize> = (0..fleet_size).collect();
    let (full_profile, full_pmf) = combine(&contrib, &all).ok_or_else(|| {
        Error::EmptyDistribution(format!("no charging in the {} {} stratum", config.season, config.day_type))
    })?;

    let sizes = sizes
        .iter()
        .map(|&size| {
            let runs: Vec<Option<(Vec<f64>, f64, f64)>> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = StreamKey::new(seed).with("subsample").with_u64(size as u64).with_u64(rep as u64).rng();
                    let mut members = index::sample(&mut rng, fleet_size, size).into_vec();
                    members.sort_unstable();
                    let (profile, pmf) = combine(&contrib, &members)?;
                    let cos = cosine_similarity(&profile, &full_profile).ok()?;
                    let tv = total_variation(&pmf, &full_pmf).ok()?;
                    Some((profile, cos, tv))
                })
                .collect();
            let mut out = SizeResult {
                size,
                profiles: Vec::new(),
                rep_index: Vec::new(),
                cosines: Vec::new(),
                tv_to_full: Vec::new(),
                failed_reps: 0,
                mean: Vec::new(),
                std: Vec::new(),
            };
            for (rep, run) in runs.into_iter().enumerate() {
                match run {
                    Some((p, c, tv)) => {
                        out.profiles.push(p);
                        out.rep_index.push(rep);
                        out.cosines.push(c);
                        out.tv_to_full.push(tv);
                    }
                    None => out.failed_reps += 1,
                }
            }
            (out.mean, out.std) = column_stats(&out.profiles);
            out
        })
        .collect();

    Ok(SensitivityReport { seed, reps, fleet_size, config: *config, full_profile, sizes })
}

/// Share of bootstrap resamples (repetitions drawn with replacement) in
/// which a size-ordered statistic moves strictly in the expected direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCheck {
    pub resamples: usize,
    /// Share where the mean across-rep std strictly decreases with size.
    pub std_decreasing: f64,
    /// Share where the median cosine strictly increases with size.
    pub cosine_increasing: f64,
}

pub fn bootstrap_convergence(report: &SensitivityReport, resamples: usize, seed: u64) -> BootstrapCheck {
    let outcomes: Vec<(bool, bool)> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = StreamKey::new(seed).with("bootstrap").with_u64(b as u64).rng();
            let mut stds = Vec::with_capacity(report.sizes.len());
            let mut cosines = Vec::with_capacity(report.sizes.len());
            for s in &report.sizes {
                let n = s.profiles.len();
                if n == 0 {
                    stds.push(f64::NAN);
                    cosines.push(f64::NAN);
                    continue;
                }
                let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let rows: Vec<Vec<f64>> = picks.iter().map(|&i| s.profiles[i].clone()).collect();
                let (_, std) = column_stats(&rows);
                stds.push(std.iter().sum::<f64>() / std.len() as f64);
                cosines.push(median(&picks.iter().map(|&i| s.cosines[i]).collect::<Vec<_>>()));
            }
            (stds.windows(2).all(|w| w[1] < w[0]), cosines.windows(2).all(|w| w[1] > w[0]))
        })
        .collect();
    let share = |f: fn(&(bool, bool)) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / resamples.max(1) as f64;
    BootstrapCheck { resamples, std_decreasing: share(|o| o.0), cosine_increasing: share(|o| o.1) }
}

/// `size,rep,cosine`, one row per successful repetition.
pub fn write_cosines<W: Write>(report: &SensitivityReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["size", "rep", "cosine"])?;
    for s in &report.sizes {
        for (rep, c) in s.rep_index.iter().zip(&s.cosines) {
            w.write_record([s.size.to_string(), rep.to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `size,step,mean,std` per size, plus the full fleet under its own size
/// with a zero std.
pub fn write_profile_stats<W: Write>(report: &SensitivityReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["size", "step", "mean", "std"])?;
    for s in &report.sizes {
        for (step, (m, sd)) in s.mean.iter().zip(&s.std).enumerate() {
            w.write_record([s.size.to_string(), step.to_string(), m.to_string(), sd.to_string()])?;
        }
    }
    for (step, m) in report.full_profile.iter().enumerate() {
        w.write_record([report.fleet_size.to_string(), step.to_string(), m.to_string(), "0".to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `size,median_cosine,mean_std,mean_tv,failed_reps`.
pub fn write_summary<W: Write>(report: &SensitivityReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["size", "median_cosine", "mean_std", "mean_tv", "failed_reps"])?;
    for s in &report.sizes {
        w.write_record([
            s.size.to_string(),
            s.median_cosine().to_string(),
            s.mean_std().to_string(),
            s.mean_tv().to_string(),
            s.failed_reps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DateRange;
    use crate::generator::GeneratorConfig;
    use crate::synth::{make_fleet, make_ground_truth_model, sample_events_from_model, GroundTruthSpec};
    use chrono::NaiveDate;

    fn oracle_events(n: usize, seed: u64) -> Vec<ChargingEvent> {
        let d = NaiveDate::from_ymd_opt(2019, 1, 7).unwrap();
        let window = DateRange::new(d, d + chrono::Duration::days(28)).unwrap();
        let spec = GroundTruthSpec::residential(n, window);
        let m = make_ground_truth_model(&spec).unwrap();
        let fleet = make_fleet(&spec, seed).unwrap();
        sample_events_from_model(&m, &fleet, &window, seed, &GeneratorConfig::exact_bins())
    }

    fn ids(events: &[ChargingEvent]) -> BTreeSet<String> {
        events.iter().map(|e| e.ev_id.clone()).collect()
    }

    #[test]
    fn subsample_examples() {
        let events = oracle_events(40, 1);
        let n = ids(&events).len();
        let mut rng = StreamKey::new(1).rng();
        assert_eq!(subsample_fleet(&events, n, &mut rng).unwrap(), events);
        let one = subsample_fleet(&events, 1, &mut rng).unwrap();
        let id = ids(&one);
        assert_eq!(id.len(), 1);
        let expect: Vec<_> = events.iter().filter(|e| id.contains(&e.ev_id)).cloned().collect();
        assert_eq!(one, expect);
        assert!(matches!(subsample_fleet(&events, n + 1, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn subsamples_rarely_repeat() {
        let events = oracle_events(40, 2);
        let distinct: BTreeSet<BTreeSet<String>> = (0..100)
            .map(|s| ids(&subsample_fleet(&events, 10, &mut StreamKey::new(s).rng()).unwrap()))
            .collect();
        assert!(distinct.len() >= 99);
    }

    #[test]
    fn full_size_has_no_spread() {
        let events = oracle_events(30, 3);
        let n = ids(&events).len();
        let r = sample_size_study(&events, &[n], 5, 7, &SensitivityConfig::default()).unwrap();
        let s = &r.sizes[0];
        assert!(s.std.iter().all(|v| *v == 0.0));
        assert!(s.cosines.iter().all(|c| (c - 1.0).abs() < 1e-12));
        assert!(s.tv_to_full.iter().all(|tv| *tv == 0.0));
    }

    #[test]
    fn spread_shrinks_with_size() {
        let events = oracle_events(200, 4);
        let r = sample_size_study(&events, &[10, 40, 120], 200, 11, &SensitivityConfig::default()).unwrap();
        let stds: Vec<f64> = r.sizes.iter().map(SizeResult::mean_std).collect();
        let cos: Vec<f64> = r.sizes.iter().map(SizeResult::median_cosine).collect();
        let tv: Vec<f64> = r.sizes.iter().map(SizeResult::mean_tv).collect();
        assert!(stds[0] > stds[1] && stds[1] > stds[2], "{stds:?}");
        assert!(cos[0] < cos[1] && cos[1] < cos[2], "{cos:?}");
        assert!(tv[0] > tv[1] && tv[1] > tv[2], "{tv:?}");
        let again = sample_size_study(&events, &[10, 40, 120], 200, 11, &SensitivityConfig::default()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn rejects_bad_arguments() {
        let events = oracle_events(20, 5);
        let cfg = SensitivityConfig::default();
        assert!(matches!(sample_size_study(&events, &[5, 5], 10, 1, &cfg), Err(Error::Config(_))));
        assert!(matches!(sample_size_study(&events, &[5], 1, 1, &cfg), Err(Error::Config(_))));
        assert!(matches!(sample_size_study(&events, &[500], 10, 1, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn column_stats_match_naive() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 2.0]];
        let (m, s) = column_stats(&rows);
        assert_eq!(m, vec![3.0, 2.0]);
        assert_eq!(s, vec![2.0, 0.0]);
    }
}
