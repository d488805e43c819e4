use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvProfileModel, ModelMetadata};
use crate::domain::{DayOfWeek, DayType, EvType, Pmf, Season};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    metadata: ModelMetadata,
    recharge_count: Vec<RechargeEntry>,
    start_time: Vec<StartEntry>,
    duration: Vec<DurationEntry>,
}

#[derive(Serialize, Deserialize)]
struct RechargeEntry {
    ev_type: EvType,
    day: DayOfWeek,
    pmf: Pmf,
}

#[derive(Serialize, Deserialize)]
struct StartEntry {
    ev_type: EvType,
    day_type: DayType,
    season: Season,
    pmf: Pmf,
}

#[derive(Serialize, Deserialize)]
struct DurationEntry {
    ev_type: EvType,
    pmf: Pmf,
}

/// Writes the model as pretty-printed JSON. Output is a pure function of
/// the model.
pub fn save_model<W: Write>(model: &EvProfileModel, sink: W) -> Result<()> {
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        metadata: model.metadata.clone(),
        recharge_count: model
            .recharge_count
            .iter()
            .map(|(&(ev_type, day), pmf)| RechargeEntry { ev_type, day, pmf: pmf.clone() })
            .collect(),
        start_time: model
            .start_time
            .iter()
            .map(|(&(ev_type, day_type, season), pmf)| StartEntry { ev_type, day_type, season, pmf: pmf.clone() })
            .collect(),
        duration: model
            .duration
            .iter()
            .map(|(&ev_type, pmf)| DurationEntry { ev_type, pmf: pmf.clone() })
            .collect(),
    };
    let mut sink = sink;
    serde_json::to_writer_pretty(&mut sink, &file)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}

/// Reads and validates a model. Nothing is returned unless every PMF and
/// stratum checks out.
pub fn load_model<R: Read>(source: R) -> Result<EvProfileModel> {
    let value: serde_json::Value = serde_json::from_reader(source)?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Validation("missing schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion { found: found.min(u32::MAX as u64) as u32, expected: SCHEMA_VERSION });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Validation(e.to_string()))?;

    let mut recharge = std::collections::BTreeMap::new();
    for e in file.recharge_count {
        if recharge.insert((e.ev_type, e.day), e.pmf).is_some() {
            return Err(Error::Validation(format!("duplicate recharge-count stratum {}/{}", e.ev_type, e.day)));
        }
    }
    let mut start = std::collections::BTreeMap::new();
    for e in file.start_time {
        if start.insert((e.ev_type, e.day_type, e.season), e.pmf).is_some() {
            return Err(Error::Validation(format!(
                "duplicate start-time stratum {}/{}/{}",
                e.ev_type, e.day_type, e.season
            )));
        }
    }
    let mut duration = std::collections::BTreeMap::new();
    for e in file.duration {
        if duration.insert(e.ev_type, e.pmf).is_some() {
            return Err(Error::Validation(format!("duplicate duration stratum {}", e.ev_type)));
        }
    }
    EvProfileModel::new(file.metadata, recharge, start, duration)
}

pub fn save_model_file(model: &EvProfileModel, path: &Path) -> Result<()> {
    save_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model_file(path: &Path) -> Result<EvProfileModel> {
    load_model(BufReader::new(File::open(path)?))
}
