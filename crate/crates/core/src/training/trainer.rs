use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::config::TrainConfig;
use super::data::TrainingData;
use super::forecaster::{build_input, evaluate_origins, reindex, retrieve};
use super::history::{EpochRecord, TrainHistory};
use super::loss::mse_on_graph;
use super::schedule::lr_schedule;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::Model;
use crate::numeric::{Gradients, Graph};
use crate::tskb::{KnowledgeBase, RetrievalMode};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest eval MAE.
    pub model: Model,
    pub history: TrainHistory,
    pub best_epoch: usize,
    /// Retrieval mode the best model was evaluated with.
    pub best_mode: RetrievalMode,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &EpochRecord {
        &self.history.epochs[self.best_epoch - 1]
    }
}

pub fn retrieval_mode(cfg: &TrainConfig, epoch: usize) -> RetrievalMode {
    if epoch <= cfg.dtw_epochs {
        RetrievalMode::Dtw
    } else {
        RetrievalMode::Embedding
    }
}

/// Loss and parameter gradients of one forecast origin.
fn sample_gradients(
    model: &Model,
    data: &TrainingData<'_>,
    kb: &KnowledgeBase,
    mode: RetrievalMode,
    t: usize,
) -> Result<(f64, Gradients)> {
    let ctx = &data.series;
    let l_f = model.config().l_f;
    let hits = retrieve(model, ctx, kb, mode, t)?;
    let input = build_input(model, ctx, kb, t, &hits)?;
    let mut g = Graph::with_params(model.params());
    let pred = model.forward(&mut g, &input)?;
    let loss = mse_on_graph(&mut g, pred, &ctx.values[t..t + l_f])?;
    let value = g.value(loss).data()[0];
    let mut grads = Gradients::zeros_like(model.params());
    g.backward(loss)?.accumulate_params(&g, &mut grads);
    Ok((value, grads))
}

/// Trains `model` on the train split, evaluating on the eval split after
/// every epoch. `kb` must hold train-split history only; its embeddings are
/// left indexed by the returned model.
pub fn train<F>(
    mut model: Model,
    kb: &mut KnowledgeBase,
    data: &TrainingData<'_>,
    cfg: &TrainConfig,
    exec: Execution,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord),
{
    cfg.validate()?;
    if kb.is_empty() {
        return Err(Error::Config("knowledge base is empty".into()));
    }
    if kb
        .entries()
        .last()
        .is_some_and(|e| e.end_index() > data.splits.train_end)
    {
        return Err(Error::Config(
            "knowledge base reaches past the training split".into(),
        ));
    }
    let mc = model.config().clone();
    let mut order = data.splits.train_origins(&mc);
    let eval = data.splits.eval_origins(&mc);
    if order.is_empty() || eval.is_empty() {
        return Err(Error::Config(format!(
            "series of length {} is too short for context {} and horizon {}",
            data.splits.len,
            mc.context_len(),
            mc.l_f
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, RetrievalMode, Model)> = None;
    let mut best_mse = f64::INFINITY;
    let mut stale = 0;
    // Whether the embeddings in `kb` match the current parameters.
    let mut indexed = false;

    for epoch in 1..=cfg.max_epochs {
        let mode = retrieval_mode(cfg, epoch);
        let lr = lr_schedule(cfg, epoch)?;
        if mode == RetrievalMode::Embedding && !indexed {
            reindex(&model, &data.series, kb, exec)?;
        }
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let kb_ref = &*kb;
            let results = exec.map(batch, |&t| sample_gradients(&model, data, kb_ref, mode, t));
            let mut grads = Gradients::zeros_like(model.params());
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            grads.add_l1(model.params(), cfg.l1_lambda);
            let total = batch_loss / batch.len() as f64 + cfg.l1_lambda * model.params().l1_norm();
            if !total.is_finite() || !grads.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss or gradient at epoch {epoch}, batch {b} (loss {total})"
                )));
            }
            loss_sum += batch_loss;
            adam.step(model.params_mut(), &grads, lr);
        }
        indexed = false;

        if mode == RetrievalMode::Embedding {
            reindex(&model, &data.series, kb, exec)?;
            indexed = true;
        }
        let m = evaluate_origins(&model, &data.series, kb, mode, &eval, &data.stats, exec)?;
        if !(m.mse.is_finite() && m.mae.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite eval metrics at epoch {epoch}"
            )));
        }
        let record = EpochRecord {
            epoch,
            mode,
            train_loss: loss_sum / order.len() as f64 + cfg.l1_lambda * model.params().l1_norm(),
            eval_mse: m.mse,
            eval_mae: m.mae,
            lr,
        };
        on_epoch(&record);
        history.epochs.push(record);

        if best.as_ref().is_none_or(|(mae, ..)| m.mae < *mae) {
            best = Some((m.mae, epoch, mode, model.clone()));
        }
        if m.mse < best_mse {
            best_mse = m.mse;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (_, best_epoch, best_mode, model) =
        best.ok_or_else(|| Error::Training("no epochs ran".into()))?;
    reindex(&model, &data.series, kb, exec)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_mode,
    })
}
