use chrono::{Datelike, NaiveDate};

/// Calendar indices used by the temporal embedding tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CalendarFeatures {
    /// 0 = Monday.
    pub day_of_week: u8,
    /// 0-based.
    pub day_of_month: u8,
    /// 0-based.
    pub month: u8,
}

impl CalendarFeatures {
    pub fn from_date(d: NaiveDate) -> Self {
        CalendarFeatures {
            day_of_week: d.weekday().num_days_from_monday() as u8,
            day_of_month: d.day0() as u8,
            month: d.month0() as u8,
        }
    }
}

/// A run of consecutive time steps presented to the embedding layer.
/// The first `observed` values are real; the rest are forecast placeholders
/// whose values are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub values: Vec<f64>,
    pub calendar: Vec<CalendarFeatures>,
    pub observed: usize,
}

impl Segment {
    pub fn observed(values: Vec<f64>, calendar: Vec<CalendarFeatures>) -> Self {
        let observed = values.len();
        Segment {
            values,
            calendar,
            observed,
        }
    }

    /// `values` followed by `horizon` placeholder steps.
    pub fn with_placeholders(
        mut values: Vec<f64>,
        calendar: Vec<CalendarFeatures>,
        horizon: usize,
    ) -> Self {
        let observed = values.len();
        values.resize(observed + horizon, 0.0);
        Segment {
            values,
            calendar,
            observed,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Everything the network needs to forecast one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastInput {
    /// `L_o` observed steps before the origin.
    pub encoder: Segment,
    /// `label_len` observed steps followed by `L_f` placeholders.
    pub decoder: Segment,
    /// Retrieved V segments, nearest first.
    pub retrieved: Vec<Segment>,
}
