//! The fitted charging-behaviour model: three PMF families keyed by
//! vehicle class and calendar strata.

mod fit;
mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{DateRange, DayOfWeek, DayType, EvType, Pmf, Season, SeasonMap, MINUTES_PER_DAY};
use crate::error::{Error, Result};

pub use fit::{
    bin_duration, fit_duration_pmf, fit_model, fit_recharge_count_pmf, fit_start_time_pmf, study_window,
    weekly_charge_share, FitConfig,
};
pub use io::{load_model, load_model_file, save_model, save_model_file, SCHEMA_VERSION};

/// Width of duration and start-time bins.
pub const BIN_WIDTH_MIN: u32 = 15;
pub const START_BINS: usize = (MINUTES_PER_DAY / BIN_WIDTH_MIN) as usize;

/// Labels of the 96 start-time bins: 0, 15, …, 1425.
pub fn start_time_labels() -> Vec<u32> {
    (0..START_BINS as u32).map(|i| i * BIN_WIDTH_MIN).collect()
}

pub type RechargeKey = (EvType, DayOfWeek);
pub type StartKey = (EvType, DayType, Season);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    RechargeCount,
    StartTime,
    Duration,
}

/// A stratum that had no data and was filled from a coarser pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fallback {
    pub family: Family,
    pub stratum: String,
    pub pooled_over: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub ev_type: EvType,
    pub count: usize,
    /// Median rated power of vehicles of this class, if any were seen.
    pub rated_power_kw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub window: DateRange,
    pub bin_width_min: u32,
    pub season_map: SeasonMap,
    pub fleet: Vec<TypeStats>,
    pub event_count: u64,
    #[serde(default)]
    pub fallbacks: Vec<Fallback>,
}

impl ModelMetadata {
    pub fn type_stats(&self, ev_type: EvType) -> Option<&TypeStats> {
        self.fleet.iter().find(|s| s.ev_type == ev_type)
    }

    pub fn fleet_size(&self) -> usize {
        self.fleet.iter().map(|s| s.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvProfileModel {
    metadata: ModelMetadata,
    recharge_count: BTreeMap<RechargeKey, Pmf>,
    start_time: BTreeMap<StartKey, Pmf>,
    duration: BTreeMap<EvType, Pmf>,
}

impl EvProfileModel {
    /// Assembles a model, checking that every stratum is present and that
    /// bin labels follow the 15-minute layout.
    pub fn new(
        metadata: ModelMetadata,
        recharge_count: BTreeMap<RechargeKey, Pmf>,
        start_time: BTreeMap<StartKey, Pmf>,
        duration: BTreeMap<EvType, Pmf>,
    ) -> Result<Self> {
        if metadata.bin_width_min != BIN_WIDTH_MIN {
            return Err(Error::Validation(format!("bin width {} min, expected 15", metadata.bin_width_min)));
        }
        for t in EvType::ALL {
            for d in DayOfWeek::ALL {
                if !recharge_count.contains_key(&(t, d)) {
                    return Err(Error::Validation(format!("missing recharge-count pmf for {t}/{d}")));
                }
            }
            for dt in DayType::ALL {
                for s in Season::ALL {
                    let pmf = start_time
                        .get(&(t, dt, s))
                        .ok_or_else(|| Error::Validation(format!("missing start-time pmf for {t}/{dt}/{s}")))?;
                    if pmf.labels() != start_time_labels().as_slice() {
                        return Err(Error::Validation(format!("start-time pmf {t}/{dt}/{s} must have 96 bins 0..=1425")));
                    }
                }
            }
            let dur = duration
                .get(&t)
                .ok_or_else(|| Error::Validation(format!("missing duration pmf for {t}")))?;
            if dur.labels().iter().any(|&l| l == 0 || l % BIN_WIDTH_MIN != 0) {
                return Err(Error::Validation(format!("duration labels for {t} must be positive multiples of 15")));
            }
        }
        let expected = EvType::ALL.len() * (DayOfWeek::ALL.len() + 1 + DayType::ALL.len() * Season::ALL.len());
        if recharge_count.len() + duration.len() + start_time.len() != expected {
            return Err(Error::Validation("unexpected extra strata".into()));
        }
        Ok(EvProfileModel { metadata, recharge_count, start_time, duration })
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn season_map(&self) -> &SeasonMap {
        &self.metadata.season_map
    }

    pub fn recharge_count(&self, ev_type: EvType, day: DayOfWeek) -> &Pmf {
        &self.recharge_count[&(ev_type, day)]
    }

    pub fn start_time(&self, ev_type: EvType, day_type: DayType, season: Season) -> &Pmf {
        &self.start_time[&(ev_type, day_type, season)]
    }

    pub fn duration(&self, ev_type: EvType) -> &Pmf {
        &self.duration[&ev_type]
    }

    pub fn recharge_counts(&self) -> &BTreeMap<RechargeKey, Pmf> {
        &self.recharge_count
    }

    pub fn start_times(&self) -> &BTreeMap<StartKey, Pmf> {
        &self.start_time
    }

    pub fn durations(&self) -> &BTreeMap<EvType, Pmf> {
        &self.duration
    }
}

/// Coordinates at which the composite charging probability is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityQuery {
    pub ev_type: EvType,
    pub day: DayOfWeek,
    pub season: Season,
    pub minute_of_day: u32,
    /// Duration whose bin supplies the duration factor.
    pub reference_duration_min: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargingProbability {
    /// Probability of at least one charge that day.
    pub recharge: f64,
    /// Mass of the duration bin holding the reference duration.
    pub duration: f64,
    /// Mass of the start-time bin holding the queried minute.
    pub start_time: f64,
    pub rho: f64,
}

/// Product of the three factor masses at the queried coordinates.
pub fn charging_probability(model: &EvProfileModel, q: &ProbabilityQuery) -> Result<ChargingProbability> {
    if q.minute_of_day >= MINUTES_PER_DAY {
        return Err(Error::Domain(format!("minute {} outside [0, 1440)", q.minute_of_day)));
    }
    let recharge = 1.0 - model.recharge_count(q.ev_type, q.day).mass(0);
    let recharge = recharge.clamp(0.0, 1.0);
    let duration = model.duration(q.ev_type).mass(bin_duration(q.reference_duration_min as i64)?);
    let start_bin = q.minute_of_day / BIN_WIDTH_MIN * BIN_WIDTH_MIN;
    let start_time = model.start_time(q.ev_type, q.day.day_type(), q.season).mass(start_bin);
    let rho = if recharge == 0.0 || duration == 0.0 || start_time == 0.0 {
        0.0
    } else {
        recharge * duration * start_time
    };
    Ok(ChargingProbability { recharge, duration, start_time, rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    pub(crate) fn toy_model(rech_zero: f64, dur: Pmf, start: Pmf) -> EvProfileModel {
        let d = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let meta = ModelMetadata {
            window: DateRange::inclusive(d, d).unwrap(),
            bin_width_min: 15,
            season_map: SeasonMap::default(),
            fleet: EvType::ALL.iter().map(|&t| TypeStats { ev_type: t, count: 1, rated_power_kw: Some(6.6) }).collect(),
            event_count: 0,
            fallbacks: vec![],
        };
        let rech = Pmf::new(vec![0, 1], vec![rech_zero, 1.0 - rech_zero]).unwrap();
        let mut rc = BTreeMap::new();
        let mut st = BTreeMap::new();
        let mut du = BTreeMap::new();
        for t in EvType::ALL {
            for d in DayOfWeek::ALL {
                rc.insert((t, d), rech.clone());
            }
            for dt in DayType::ALL {
                for s in Season::ALL {
                    st.insert((t, dt, s), start.clone());
                }
            }
            du.insert(t, dur.clone());
        }
        EvProfileModel::new(meta, rc, st, du).unwrap()
    }

    fn start_with_peak(label: u32, mass: f64) -> Pmf {
        let labels = start_time_labels();
        let rest = (1.0 - mass) / 95.0;
        let probs = labels.iter().map(|&l| if l == label { mass } else { rest }).collect();
        Pmf::new(labels, probs).unwrap()
    }

    #[test]
    fn product_of_factors() {
        let dur = Pmf::new(vec![15, 30, 45], vec![0.1, 0.3, 0.6]).unwrap();
        let m = toy_model(0.8, dur, start_with_peak(900, 0.026));
        let q = ProbabilityQuery {
            ev_type: EvType::Medium,
            day: DayOfWeek::Mon,
            season: Season::Winter,
            minute_of_day: 905,
            reference_duration_min: 10,
        };
        let p = charging_probability(&m, &q).unwrap();
        assert!((p.recharge - 0.2).abs() < 1e-15);
        assert_eq!(p.duration, 0.1);
        assert_eq!(p.start_time, 0.026);
        assert!((p.rho - 5.2e-4).abs() < 1e-15);
        assert!(p.rho <= p.recharge.min(p.duration).min(p.start_time));
    }

    #[test]
    fn zero_factor_gates() {
        let dur = Pmf::new(vec![15, 30], vec![0.0, 1.0]).unwrap();
        let m = toy_model(0.5, dur, start_with_peak(0, 1.0 / 96.0));
        let q = ProbabilityQuery {
            ev_type: EvType::Small,
            day: DayOfWeek::Sat,
            season: Season::Summer,
            minute_of_day: 100,
            reference_duration_min: 15,
        };
        assert_eq!(charging_probability(&m, &q).unwrap().rho, 0.0);
        let q = ProbabilityQuery { reference_duration_min: 600, ..q };
        assert_eq!(charging_probability(&m, &q).unwrap().rho, 0.0);
        let q = ProbabilityQuery { minute_of_day: 1440, ..q };
        assert!(matches!(charging_probability(&m, &q), Err(Error::Domain(_))));

        let m = toy_model(1.0, Pmf::degenerate(15), start_with_peak(0, 0.5));
        let q = ProbabilityQuery { minute_of_day: 0, reference_duration_min: 15, ..q };
        assert_eq!(charging_probability(&m, &q).unwrap().rho, 0.0);
    }

    #[test]
    fn rejects_missing_strata_and_bad_labels() {
        let m = toy_model(0.5, Pmf::degenerate(30), start_with_peak(0, 0.5));
        let mut st = m.start_times().clone();
        st.remove(&(EvType::Large, DayType::Weekend, Season::Summer));
        assert!(EvProfileModel::new(m.metadata().clone(), m.recharge_counts().clone(), st, m.durations().clone()).is_err());

        let mut du = m.durations().clone();
        du.insert(EvType::Small, Pmf::degenerate(20));
        assert!(EvProfileModel::new(m.metadata().clone(), m.recharge_counts().clone(), m.start_times().clone(), du).is_err());
    }
}
