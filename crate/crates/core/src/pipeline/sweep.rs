//! Hyperparameter sweeps producing best-row-marked reports.

use std::fmt::Write as _;

use super::experiment::{run, train_run, Dataset, RunConfig, RunOutcome};
use super::metrics::Metrics;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::training::{self, evaluate_origins};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: usize,
    /// `Err` holds the failure message of a row that did not train.
    pub result: std::result::Result<Metrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Name of the swept parameter.
    pub name: String,
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the lowest-MAE row.
    pub best: usize,
}

impl SweepReport {
    pub const CSV_HEADER: &'static str = "param,mse,mae,best";

    /// Marks the lowest-MAE row, breaking ties toward the smaller parameter.
    pub fn new(name: impl Into<String>, rows: Vec<SweepRow>) -> Result<Self> {
        let name = name.into();
        let best = rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.result.as_ref().ok().map(|m| (i, m.mae, r.param)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
            .map(|(i, ..)| i)
            .ok_or_else(|| Error::Training(format!("every row of the {name} sweep failed")))?;
        Ok(SweepReport { name, rows, best })
    }

    pub fn best_param(&self) -> usize {
        self.rows[self.best].param
    }

    pub fn params(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.param).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let (mse, mae) = match &r.result {
                Ok(m) => (format!("{:?}", m.mse), format!("{:?}", m.mae)),
                Err(_) => ("nan".into(), "nan".into()),
            };
            let _ = writeln!(s, "{},{mse},{mae},{}", r.param, i == self.best);
        }
        s
    }

    /// Aligned table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:>10} {:>14} {:>14}  best\n", self.name, "mse", "mae");
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if i == self.best { "  *" } else { "" };
            match &r.result {
                Ok(m) => {
                    let _ = writeln!(s, "{:>10} {:>14.6} {:>14.6}{mark}", r.param, m.mse, m.mae);
                }
                Err(e) => {
                    let _ = writeln!(s, "{:>10} {:>14} {:>14}  failed: {e}", r.param, "-", "-");
                }
            }
        }
        s
    }
}

fn row(param: usize, result: Result<Metrics>) -> SweepRow {
    SweepRow {
        param,
        result: result.map_err(|e| e.to_string()),
    }
}

/// Trains one model per value and reports its eval-split metrics.
pub fn sweep<F>(
    data: &Dataset,
    name: &str,
    values: &[usize],
    exec: Execution,
    configure: F,
) -> Result<SweepReport>
where
    F: Fn(usize) -> Result<RunConfig>,
{
    let rows = values
        .iter()
        .map(|&v| {
            let result = configure(v).and_then(|cfg| {
                let out = train_run(data, &cfg, exec, |_| {})?;
                let best = out.best_record();
                Ok(Metrics {
                    mse: best.eval_mse,
                    mae: best.eval_mae,
                })
            });
            row(v, result)
        })
        .collect();
    SweepReport::new(name, rows)
}

/// Content-length candidates `L_r + k·L_f` for `k = 1, 2, 3`.
pub fn content_length_candidates(l_r: usize, l_f: usize) -> Vec<usize> {
    (1..=3).map(|k| l_r + k * l_f).collect()
}

/// Key-length candidates `k·L_f/2` rounded half up, for every `k` with
/// `k·L_f/2 ≤ L_v`.
pub fn key_length_candidates(l_f: usize, l_v: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..)
        .take_while(|k| k * l_f <= 2 * l_v)
        .map(|k| (k * l_f).div_ceil(2))
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone)]
pub struct DeploymentReport {
    pub content_length: SweepReport,
    pub key_length: SweepReport,
    /// The model retrained from scratch at the chosen lengths.
    pub final_run: RunOutcome,
    pub final_config: RunConfig,
}

/// Picks `L_v` by retraining per candidate, then `L_r` by re-scoring the
/// chosen model with shorter or longer keys, then retrains at both.
pub fn sweep_deployment(
    data: &Dataset,
    base: &RunConfig,
    exec: Execution,
) -> Result<DeploymentReport> {
    let m = &base.model;
    let with_lv = |l_v: usize| {
        let mut cfg = base.clone();
        cfg.model.l_v = l_v;
        cfg.kb_stride = 1;
        Ok(cfg)
    };
    let content = sweep(
        data,
        "l_v",
        &content_length_candidates(m.l_r, m.l_f),
        exec,
        with_lv,
    )?;
    let l_v = content.best_param();
    let chosen = with_lv(l_v)?;
    let trained = train_run(data, &chosen, exec, |_| {})?;

    let origins = data.splits.eval_origins(&chosen.model);
    let rows = key_length_candidates(m.l_f, l_v)
        .into_iter()
        .map(|l_r| {
            let result = (|| {
                let model = trained.model.with_retrieval_length(l_r)?;
                let mut kb = data.train_kb(model.config(), 1)?;
                training::reindex(&model, &data.context(), &mut kb, exec)?;
                evaluate_origins(
                    &model,
                    &data.context(),
                    &kb,
                    trained.best_mode,
                    &origins,
                    &data.stats,
                    exec,
                )
            })();
            row(l_r, result)
        })
        .collect();
    let key = SweepReport::new("l_r", rows)?;

    let mut final_config = chosen;
    final_config.model.l_r = key.best_param();
    let final_run = run(data, &final_config, exec, |_| {})?;
    Ok(DeploymentReport {
        content_length: content,
        key_length: key,
        final_run,
        final_config,
    })
}

pub const KEY_LENGTHS: [usize; 6] = [4, 7, 14, 21, 28, 35];
pub const RETRIEVAL_COUNTS: [usize; 6] = [0, 1, 2, 3, 4, 5];
pub const COLD_START_EPOCHS: [usize; 6] = [0, 1, 2, 3, 4, 5];

#[derive(Debug, Clone)]
pub struct AblationReports {
    pub key_length: SweepReport,
    pub retrieval_count: SweepReport,
    pub cold_start: SweepReport,
}

/// Key length (content length grown to at least `L_r + L_f`), retrieval
/// count, and cold-start epoch sweeps.
pub fn sweep_ablations(
    data: &Dataset,
    base: &RunConfig,
    exec: Execution,
) -> Result<AblationReports> {
    let key_length = sweep(data, "l_r", &KEY_LENGTHS, exec, |l_r| {
        let mut cfg = base.clone();
        cfg.model.l_r = l_r;
        cfg.model.l_v = base.model.l_v.max(l_r + base.model.l_f);
        Ok(cfg)
    })?;
    let retrieval_count = sweep(data, "n", &RETRIEVAL_COUNTS, exec, |n| {
        let mut cfg = base.clone();
        cfg.model.n_retrieved = n;
        Ok(cfg)
    })?;
    let cold_start = sweep(data, "dtw_epochs", &COLD_START_EPOCHS, exec, |e| {
        let mut cfg = base.clone();
        cfg.train.dtw_epochs = e;
        Ok(cfg)
    })?;
    Ok(AblationReports {
        key_length,
        retrieval_count,
        cold_start,
    })
}
