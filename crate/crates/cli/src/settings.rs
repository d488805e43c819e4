use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use evload::domain::{SeasonMap, TimeGrid};
use serde::Deserialize;

use crate::{CommonArgs, Failure, ProfileFormat};

/// Contents of a `--config` file. Every key is optional and is overridden
/// by the matching flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub resolution: Option<u32>,
    pub season_map: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mix: Option<Vec<f64>>,
    pub penetration: Option<Vec<f64>>,
    pub sizes: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub bootstrap: Option<usize>,
    pub evs: Option<usize>,
    pub start: Option<NaiveDate>,
    pub days: Option<u32>,
    pub format: Option<ProfileFormat>,
    pub customers: Option<usize>,
    pub max_power: Option<f64>,
}

pub struct Settings {
    pub seed: Option<u64>,
    pub resolution: Option<u32>,
    season_map_path: Option<PathBuf>,
    pub season_map: Option<SeasonMap>,
    pub out: PathBuf,
    pub file: FileConfig,
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let seed = args.seed.or(file.seed);
        let resolution = args.resolution.or(file.resolution);
        if let Some(r) = resolution {
            if r != 1 && r != 15 {
                return Err(Failure::Config(format!("resolution must be 1 or 15, got {r}")));
            }
        }
        let season_map_path = args.season_map.clone().or_else(|| file.season_map.clone());
        let season_map = match &season_map_path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Failure::Input(format!("cannot read season map {}: {e}", p.display())))?;
                Some(SeasonMap::parse(&text)?)
            }
            None => None,
        };
        let out = args.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("."));
        Ok(Settings { seed, resolution, season_map_path, season_map, out, file })
    }

    pub fn seed(&self) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure::Config("--seed is required for this subcommand".into()))
    }

    pub fn grid(&self, default: TimeGrid) -> TimeGrid {
        self.resolution.map_or(default, |r| TimeGrid::new(r).expect("validated resolution"))
    }

    pub fn season_map_or_default(&self) -> SeasonMap {
        self.season_map.unwrap_or_default()
    }

    /// Creates the output directory and returns the path of `name` in it,
    /// refusing to overwrite any of `inputs`.
    pub fn output(&self, name: &str, inputs: &[&Path]) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Input(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        let mut all_inputs: Vec<&Path> = inputs.to_vec();
        if let Some(p) = &self.season_map_path {
            all_inputs.push(p);
        }
        if let Ok(target) = path.canonicalize() {
            for input in all_inputs {
                if input.canonicalize().is_ok_and(|i| i == target) {
                    return Err(Failure::Config(format!("output {} would overwrite an input", path.display())));
                }
            }
        }
        Ok(path)
    }
}

/// Three class shares from a flag or config list.
pub fn parse_mix(values: &[f64]) -> Result<[f64; 3], Failure> {
    <[f64; 3]>::try_from(values)
        .map_err(|_| Failure::Config(format!("mix needs three shares, got {}", values.len())))
}
