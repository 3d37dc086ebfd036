use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate};

use crate::error::{Error, Result};
use crate::model::CalendarFeatures;

/// Gap-free daily series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    start: NaiveDate,
    values: Vec<f64>,
}

impl Series {
    pub fn new(start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "value at position {i} is not finite"
            )));
        }
        Ok(Series { start, values })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.start + Duration::days(i as i64)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn calendar(&self) -> Vec<CalendarFeatures> {
        (0..self.len())
            .map(|i| CalendarFeatures::from_date(self.date(i)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("date,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{}", self.date(i), v);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn ingest_csv(path: &Path) -> Result<Series> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, &path.display().to_string())
}

/// Parses `date,value` rows (optional header) into a sorted, gap-checked
/// series. `source` names the input in error messages.
pub fn parse_csv(text: &str, source: &str) -> Result<Series> {
    let err = |line: usize, message: String| Error::Ingest {
        path: source.into(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let (Some(d), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            if rows.is_empty() && i == 0 {
                continue;
            }
            return Err(err(i + 1, format!("expected two columns, got {line:?}")));
        };
        let date = NaiveDate::parse_from_str(d, "%Y-%m-%d");
        let value = v.parse::<f64>();
        match (date, value) {
            (Ok(date), Ok(value)) if value.is_finite() => rows.push((date, value)),
            (Ok(_), Ok(value)) => return Err(err(i + 1, format!("value {value} is not finite"))),
            // A leading non-numeric row is a header.
            (Err(_), Err(_)) if i == 0 => continue,
            (Err(e), _) => return Err(err(i + 1, format!("bad date {d:?}: {e}"))),
            (_, Err(e)) => return Err(err(i + 1, format!("bad value {v:?}: {e}"))),
        }
    }
    if rows.is_empty() {
        return Err(err(0, "no data rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        let (a, b) = (w[0].0, w[1].0);
        if a == b {
            return Err(Error::DuplicateDate(a));
        }
        if b - a != Duration::days(1) {
            return Err(Error::Gap(a + Duration::days(1)));
        }
    }
    Series::new(rows[0].0, rows.into_iter().map(|r| r.1).collect())
}
