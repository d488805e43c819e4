//! Value types shared across the crate: calendar strata, the time grid,
//! PMFs and the vector metrics used to compare profiles.

mod calendar;
mod grid;
mod pmf;
mod stream;

pub use calendar::{DateRange, DayOfWeek, DayType, EvType, Season, SeasonMap};
pub use grid::{format_minute, TimeGrid, MINUTES_PER_DAY};
pub use pmf::{total_variation, total_variation_union, Pmf, NORMALIZATION_TOL};
pub use stream::{StreamKey, StreamRng};

use crate::error::{Error, Result};

/// `dot(a, b) / (‖a‖·‖b‖)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Structural(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
