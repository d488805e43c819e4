use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 1440;

/// Uniform time discretization of one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct TimeGrid {
    resolution_min: u32,
}

impl TimeGrid {
    pub const MINUTE: TimeGrid = TimeGrid { resolution_min: 1 };
    pub const QUARTER_HOUR: TimeGrid = TimeGrid { resolution_min: 15 };

    /// Accepts any resolution that tiles the day exactly.
    pub fn new(resolution_min: u32) -> Result<Self> {
        if resolution_min == 0 || MINUTES_PER_DAY % resolution_min != 0 {
            return Err(Error::Domain(format!(
                "resolution of {resolution_min} min does not divide a day"
            )));
        }
        Ok(TimeGrid { resolution_min })
    }

    pub fn resolution_min(&self) -> u32 {
        self.resolution_min
    }

    pub fn steps_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.resolution_min) as usize
    }

    /// Step length in hours.
    pub fn step_hours(&self) -> f64 {
        self.resolution_min as f64 / 60.0
    }

    pub fn step_of_minute(&self, minute: u32) -> usize {
        (minute / self.resolution_min) as usize
    }

    pub fn minute_of_step(&self, step: usize) -> u32 {
        step as u32 * self.resolution_min
    }
}

impl TryFrom<u32> for TimeGrid {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for u32 {
    fn from(g: TimeGrid) -> u32 {
        g.resolution_min
    }
}

/// `HH:MM` for a minute of the day.
pub fn format_minute(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}
