//! One end-to-end run: split, normalise, build the knowledge base, train,
//! and score the test split.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;

use super::metrics::Metrics;
use super::norm::NormStats;
use super::series::Series;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{parse_kv, CalendarFeatures, Checkpoint, Model, ModelConfig};
use crate::training::{
    self, evaluate_origins, predict_origins, EpochRecord, SeriesContext, Splits, TrainConfig,
    TrainOutcome, TrainingData,
};
use crate::tskb::{KnowledgeBase, RetrievalMode};

/// Model, training, and data-handling settings for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub kb_stride: usize,
    pub train_fraction: f64,
    pub eval_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            kb_stride: 1,
            train_fraction: 0.7,
            eval_fraction: 0.1,
        }
    }
}

const RUN_KEYS: [&str; 3] = ["kb_stride", "train_fraction", "eval_fraction"];

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        ModelConfig::KEYS
            .iter()
            .chain(TrainConfig::KEYS)
            .chain(RUN_KEYS.iter())
            .copied()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let real = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))
        };
        match key {
            "kb_stride" => {
                self.kb_stride = value
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: expected integer, got {value:?}")))?
            }
            "train_fraction" => self.train_fraction = real(value)?,
            "eval_fraction" => self.eval_fraction = real(value)?,
            k if ModelConfig::KEYS.contains(&k) => self.model.set(k, value)?,
            k if TrainConfig::KEYS.contains(&k) => self.train.set(k, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(&parse_kv(text)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = self.model.to_kv_text();
        s.push_str(&self.train.to_kv_text());
        let _ = writeln!(s, "kb_stride = {}", self.kb_stride);
        let _ = writeln!(s, "train_fraction = {:?}", self.train_fraction);
        let _ = writeln!(s, "eval_fraction = {:?}", self.eval_fraction);
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.kb_stride == 0 {
            return Err(Error::Config("kb_stride must be positive".into()));
        }
        let (a, b) = (self.train_fraction, self.eval_fraction);
        if !(a > 0.0 && b > 0.0 && a + b < 1.0) {
            return Err(Error::Config(format!(
                "split fractions {a}/{b} must be positive and leave a test split"
            )));
        }
        Ok(())
    }
}

/// A series with its splits, train-split statistics, and normalised values.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: Series,
    pub calendar: Vec<CalendarFeatures>,
    pub normalized: Vec<f64>,
    pub splits: Splits,
    pub stats: NormStats,
}

impl Dataset {
    pub fn prepare(series: Series, train_fraction: f64, eval_fraction: f64) -> Result<Self> {
        let splits = Splits::fractions(series.len(), train_fraction, eval_fraction)?;
        let stats = NormStats::fit(&series.values()[..splits.train_end])?;
        Ok(Dataset {
            calendar: series.calendar(),
            normalized: stats.normalize(series.values()),
            series,
            splits,
            stats,
        })
    }

    /// Renormalises with externally supplied statistics, e.g. those stored
    /// in a checkpoint.
    pub fn with_stats(mut self, stats: NormStats) -> Self {
        self.normalized = stats.normalize(self.series.values());
        self.stats = stats;
        self
    }

    pub fn context(&self) -> SeriesContext<'_> {
        SeriesContext {
            values: &self.normalized,
            calendar: &self.calendar,
        }
    }

    pub fn training_data(&self) -> TrainingData<'_> {
        TrainingData {
            series: self.context(),
            splits: self.splits,
            stats: self.stats,
        }
    }

    /// Knowledge base over the train split only.
    pub fn train_kb(&self, cfg: &ModelConfig, stride: usize) -> Result<KnowledgeBase> {
        KnowledgeBase::build(
            &self.normalized[..self.splits.train_end],
            cfg.l_v,
            cfg.l_r,
            stride,
        )
    }

    /// Knowledge base over every point; used at test time, where retrieval
    /// still excludes windows that reach past the forecast origin.
    pub fn full_kb(&self, cfg: &ModelConfig, stride: usize) -> Result<KnowledgeBase> {
        KnowledgeBase::build(&self.normalized, cfg.l_v, cfg.l_r, stride)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trained: TrainOutcome,
    /// Eval-split metrics of the returned model.
    pub eval: Metrics,
    pub test: Metrics,
}

pub fn train_run<F>(
    data: &Dataset,
    cfg: &RunConfig,
    exec: Execution,
    on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord),
{
    cfg.validate()?;
    let model = Model::new(cfg.model.clone(), cfg.train.seed)?;
    let mut kb = data.train_kb(&cfg.model, cfg.kb_stride)?;
    training::train(
        model,
        &mut kb,
        &data.training_data(),
        &cfg.train,
        exec,
        on_epoch,
    )
}

/// Test-split metrics of `model`, retrieving from all history before each
/// origin.
pub fn test_metrics(
    data: &Dataset,
    model: &Model,
    mode: RetrievalMode,
    kb_stride: usize,
    exec: Execution,
) -> Result<Metrics> {
    let origins = data.splits.test_origins(model.config());
    if origins.is_empty() {
        return Err(Error::Evaluation(
            "test split has no complete forecast window".into(),
        ));
    }
    let mut kb = data.full_kb(model.config(), kb_stride)?;
    if mode == RetrievalMode::Embedding {
        training::reindex(model, &data.context(), &mut kb, exec)?;
    }
    evaluate_origins(
        model,
        &data.context(),
        &kb,
        mode,
        &origins,
        &data.stats,
        exec,
    )
}

pub fn run<F>(data: &Dataset, cfg: &RunConfig, exec: Execution, on_epoch: F) -> Result<RunOutcome>
where
    F: FnMut(&EpochRecord),
{
    let trained = train_run(data, cfg, exec, on_epoch)?;
    let best = trained.best_record();
    let eval = Metrics {
        mse: best.eval_mse,
        mae: best.eval_mae,
    };
    let test = test_metrics(data, &trained.model, trained.best_mode, cfg.kb_stride, exec)?;
    Ok(RunOutcome {
        trained,
        eval,
        test,
    })
}

/// Checkpoint carrying everything needed to forecast with `outcome`.
pub fn checkpoint(outcome: &TrainOutcome, stats: &NormStats, kb_stride: usize) -> Checkpoint {
    let mut ck = Checkpoint::new(outcome.model.clone());
    let meta = &mut ck.metadata;
    meta.insert("mu".into(), format!("{:?}", stats.mu));
    meta.insert("sigma".into(), format!("{:?}", stats.sigma));
    meta.insert("retrieval".into(), outcome.best_mode.as_str().into());
    meta.insert("kb_stride".into(), kb_stride.to_string());
    meta.insert("best_epoch".into(), outcome.best_epoch.to_string());
    ck
}

/// Normalisation, retrieval mode, and stride stored by [`checkpoint`].
pub fn checkpoint_settings(ck: &Checkpoint) -> Result<(NormStats, RetrievalMode, usize)> {
    let get = |k: &str| {
        ck.metadata
            .get(k)
            .ok_or_else(|| Error::format("checkpoint", format!("missing metadata {k:?}")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::format("checkpoint", format!("metadata {k:?} is not a number")))
    };
    let stats = NormStats::new(num("mu")?, num("sigma")?)?;
    let mode = get("retrieval")?.parse()?;
    let stride = get("kb_stride")?
        .parse()
        .map_err(|_| Error::format("checkpoint", "metadata \"kb_stride\" is not an integer"))?;
    Ok((stats, mode, stride))
}

/// Forecasts the `L_f` days after the last observation of `series`.
pub fn forecast_next(
    model: &Model,
    series: &Series,
    stats: &NormStats,
    mode: RetrievalMode,
    kb_stride: usize,
    exec: Execution,
) -> Result<Vec<(NaiveDate, f64)>> {
    let c = model.config();
    let t = series.len();
    if t < c.context_len() || t < c.l_v {
        return Err(Error::Argument(format!(
            "forecasting needs at least {} observations, got {t}",
            c.context_len().max(c.l_v)
        )));
    }
    let mut values = stats.normalize(series.values());
    let mut kb = KnowledgeBase::build(&values, c.l_v, c.l_r, kb_stride)?;
    // Horizon slots carry calendar features only; their values are never read.
    values.resize(t + c.l_f, 0.0);
    let calendar: Vec<_> = (0..t + c.l_f)
        .map(|i| CalendarFeatures::from_date(series.date(i)))
        .collect();
    let ctx = SeriesContext::new(&values, &calendar)?;
    if mode == RetrievalMode::Embedding {
        training::reindex(model, &ctx, &mut kb, exec)?;
    }
    let pred = predict_origins(model, &ctx, &kb, mode, &[t], exec)?.remove(0);
    Ok(stats
        .denormalize(&pred)
        .into_iter()
        .enumerate()
        .map(|(h, v)| (series.date(t + h), v))
        .collect())
}
