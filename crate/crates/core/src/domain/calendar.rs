use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vehicle class, assigned from the rated charging power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvType {
    Small,
    Medium,
    Large,
}

impl EvType {
    pub const ALL: [EvType; 3] = [EvType::Small, EvType::Medium, EvType::Large];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvType::Small => "small",
            EvType::Medium => "medium",
            EvType::Large => "large",
        }
    }
}

impl fmt::Display for EvType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(EvType::Small),
            "medium" => Ok(EvType::Medium),
            "large" => Ok(EvType::Large),
            other => Err(Error::Parse(format!("unknown EV type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayOfWeek {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl DayOfWeek {
    pub const ALL: [DayOfWeek; 7] = [
        DayOfWeek::Mon,
        DayOfWeek::Tue,
        DayOfWeek::Wed,
        DayOfWeek::Thu,
        DayOfWeek::Fri,
        DayOfWeek::Sat,
        DayOfWeek::Sun,
    ];

    pub fn of(date: NaiveDate) -> Self {
        date.weekday().into()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn day_type(self) -> DayType {
        match self {
            DayOfWeek::Mon => DayType::Mon,
            DayOfWeek::Tue => DayType::Tue,
            DayOfWeek::Wed => DayType::Wed,
            DayOfWeek::Thu => DayType::Thu,
            DayOfWeek::Fri => DayType::Fri,
            DayOfWeek::Sat | DayOfWeek::Sun => DayType::Weekend,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayOfWeek::Mon => "mon",
            DayOfWeek::Tue => "tue",
            DayOfWeek::Wed => "wed",
            DayOfWeek::Thu => "thu",
            DayOfWeek::Fri => "fri",
            DayOfWeek::Sat => "sat",
            DayOfWeek::Sun => "sun",
        }
    }
}

impl From<Weekday> for DayOfWeek {
    fn from(w: Weekday) -> Self {
        match w {
            Weekday::Mon => DayOfWeek::Mon,
            Weekday::Tue => DayOfWeek::Tue,
            Weekday::Wed => DayOfWeek::Wed,
            Weekday::Thu => DayOfWeek::Thu,
            Weekday::Fri => DayOfWeek::Fri,
            Weekday::Sat => DayOfWeek::Sat,
            Weekday::Sun => DayOfWeek::Sun,
        }
    }
}

impl fmt::Display for DayOfWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Day stratum used for start times: weekdays stay distinct, Saturday and
/// Sunday are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Weekend,
}

impl DayType {
    pub const ALL: [DayType; 6] = [
        DayType::Mon,
        DayType::Tue,
        DayType::Wed,
        DayType::Thu,
        DayType::Fri,
        DayType::Weekend,
    ];

    pub fn contains(self, day: DayOfWeek) -> bool {
        day.day_type() == self
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayType::Mon => "mon",
            DayType::Tue => "tue",
            DayType::Wed => "wed",
            DayType::Thu => "thu",
            DayType::Fri => "fri",
            DayType::Weekend => "weekend",
        }
    }
}

impl fmt::Display for DayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DayType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        DayType::ALL
            .into_iter()
            .find(|d| d.as_str() == lower)
            .ok_or_else(|| Error::Parse(format!("unknown day type `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Summer,
}

impl Season {
    pub const ALL: [Season; 2] = [Season::Winter, Season::Summer];

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Summer => "summer",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "winter" => Ok(Season::Winter),
            "summer" => Ok(Season::Summer),
            other => Err(Error::Parse(format!("unknown season `{other}`"))),
        }
    }
}

/// Month to season lookup. Index 0 is January.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeasonMap([Season; 12]);

impl Default for SeasonMap {
    /// Winter from November through April, summer from May through October.
    fn default() -> Self {
        use Season::*;
        SeasonMap([
            Winter, Winter, Winter, Winter, Summer, Summer, Summer, Summer, Summer, Summer, Winter,
            Winter,
        ])
    }
}

impl SeasonMap {
    pub fn new(months: [Season; 12]) -> Self {
        SeasonMap(months)
    }

    /// `month` is 1-based.
    pub fn season_of_month(&self, month: u32) -> Season {
        self.0[(month as usize - 1) % 12]
    }

    pub fn season_of(&self, date: NaiveDate) -> Season {
        self.season_of_month(date.month())
    }

    /// Parses `month,season` lines (header optional). Every month must be
    /// listed exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut months: [Option<Season>; 12] = [None; 12];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("month,season")
            {
                continue;
            }
            let (m, s) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("season map line {}: expected `month,season`", lineno + 1)))?;
            let month: u32 = m
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("season map line {}: bad month `{m}`", lineno + 1)))?;
            if !(1..=12).contains(&month) {
                return Err(Error::Parse(format!("season map line {}: month {month} out of range", lineno + 1)));
            }
            let slot = &mut months[month as usize - 1];
            if slot.is_some() {
                return Err(Error::Parse(format!("season map: month {month} listed twice")));
            }
            *slot = Some(s.trim().parse()?);
        }
        let mut out = [Season::Winter; 12];
        for (i, m) in months.iter().enumerate() {
            out[i] = m.ok_or_else(|| Error::Parse(format!("season map: month {} missing", i + 1)))?;
        }
        Ok(SeasonMap(out))
    }
}

/// Half-open calendar range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Domain(format!("date range ends ({end}) before it starts ({start})")));
        }
        Ok(DateRange { start, end })
    }

    /// Range covering `first..=last`.
    pub fn inclusive(first: NaiveDate, last: NaiveDate) -> Result<Self> {
        let end = last
            .checked_add_days(Days::new(1))
            .ok_or_else(|| Error::Domain("date out of supported calendar".into()))?;
        DateRange::new(first, end)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn len_days(&self) -> usize {
        (self.end - self.start).num_days().max(0) as usize
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take(self.len_days())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ev_type_order() {
        assert!(EvType::Small < EvType::Medium && EvType::Medium < EvType::Large);
    }

    #[test]
    fn weekend_days_merge() {
        assert_eq!(DayOfWeek::Sat.day_type(), DayType::Weekend);
        assert_eq!(DayOfWeek::Sun.day_type(), DayType::Weekend);
        assert_eq!(DayOfWeek::Wed.day_type(), DayType::Wed);
        for d in DayOfWeek::ALL {
            assert!(d.day_type().contains(d));
        }
    }

    #[test]
    fn default_seasons() {
        let map = SeasonMap::default();
        let winter: Vec<u32> = (1..=12).filter(|&m| map.season_of_month(m) == Season::Winter).collect();
        assert_eq!(winter, vec![1, 2, 3, 4, 11, 12]);
    }

    #[test]
    fn season_map_parse() {
        let mut text = String::from("month,season\n");
        for m in 1..=12 {
            let s = if (6..=8).contains(&m) { "summer" } else { "winter" };
            text.push_str(&format!("{m},{s}\n"));
        }
        let map = SeasonMap::parse(&text).unwrap();
        assert_eq!(map.season_of_month(5), Season::Winter);
        assert_eq!(map.season_of_month(7), Season::Summer);

        assert!(SeasonMap::parse("1,winter\n").is_err());
        assert!(SeasonMap::parse("1,winter\n1,summer\n").is_err());
    }

    #[test]
    fn date_range() {
        let d = NaiveDate::from_ymd_opt(2019, 1, 7).unwrap();
        let r = DateRange::new(d, d).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.iter().count(), 0);
        let r = DateRange::inclusive(d, NaiveDate::from_ymd_opt(2019, 1, 13).unwrap()).unwrap();
        assert_eq!(r.len_days(), 7);
        assert_eq!(r.iter().filter(|&x| DayOfWeek::of(x) == DayOfWeek::Mon).count(), 1);
    }
}
