//! Chronological splits and forecast-origin enumeration.

use crate::error::{Error, Result};
use crate::model::{CalendarFeatures, ModelConfig};
use crate::pipeline::NormStats;

/// Normalised values with their calendar features, index-aligned.
#[derive(Debug, Clone, Copy)]
pub struct SeriesContext<'a> {
    pub values: &'a [f64],
    pub calendar: &'a [CalendarFeatures],
}

impl<'a> SeriesContext<'a> {
    pub fn new(values: &'a [f64], calendar: &'a [CalendarFeatures]) -> Result<Self> {
        if values.len() != calendar.len() {
            return Err(Error::dim(
                "series context",
                &[values.len()],
                &[calendar.len()],
            ));
        }
        Ok(SeriesContext { values, calendar })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `[0, train_end)` train, `[train_end, eval_end)` eval, `[eval_end, len)` test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Splits {
    pub train_end: usize,
    pub eval_end: usize,
    pub len: usize,
}

impl Splits {
    pub fn new(train_end: usize, eval_end: usize, len: usize) -> Result<Self> {
        if !(0 < train_end && train_end <= eval_end && eval_end <= len) {
            return Err(Error::Config(format!(
                "invalid split boundaries {train_end}/{eval_end}/{len}"
            )));
        }
        Ok(Splits {
            train_end,
            eval_end,
            len,
        })
    }

    /// Chronological 70/10/20 split.
    pub fn proportional(len: usize) -> Result<Self> {
        Self::fractions(len, 0.7, 0.1)
    }

    pub fn fractions(len: usize, train: f64, eval: f64) -> Result<Self> {
        let train_end = (len as f64 * train).round() as usize;
        let eval_end = (len as f64 * (train + eval)).round() as usize;
        Self::new(train_end, eval_end.min(len), len)
    }

    fn origins(lo: usize, hi: usize, cfg: &ModelConfig) -> Vec<usize> {
        let first = lo.max(cfg.context_len());
        if hi < cfg.l_f || first + cfg.l_f > hi {
            return Vec::new();
        }
        (first..=hi - cfg.l_f).collect()
    }

    /// Forecast origins `t` whose whole horizon `[t, t + L_f)` lies in train.
    pub fn train_origins(&self, cfg: &ModelConfig) -> Vec<usize> {
        Self::origins(0, self.train_end, cfg)
    }

    pub fn eval_origins(&self, cfg: &ModelConfig) -> Vec<usize> {
        Self::origins(self.train_end, self.eval_end, cfg)
    }

    /// Stride-1 rolling origins over the test split.
    pub fn test_origins(&self, cfg: &ModelConfig) -> Vec<usize> {
        Self::origins(self.eval_end, self.len, cfg)
    }
}

/// Everything [`super::train`] needs besides the model and knowledge base.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub series: SeriesContext<'a>,
    pub splits: Splits,
    pub stats: NormStats,
}
