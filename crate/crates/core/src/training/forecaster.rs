//! Retrieval plus forward pass for a single forecast origin, shared by
//! training, evaluation, and the CLI.

use super::data::SeriesContext;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ForecastInput, Model, Segment};
use crate::pipeline::{evaluate, Metrics, NormStats};
use crate::tskb::{KnowledgeBase, RetrievalMode, RetrievalResult};

fn segment(ctx: &SeriesContext<'_>, start: usize, len: usize) -> Segment {
    Segment::observed(
        ctx.values[start..start + len].to_vec(),
        ctx.calendar[start..start + len].to_vec(),
    )
}

fn check_geometry(model: &Model, kb: &KnowledgeBase) -> Result<()> {
    let c = model.config();
    if kb.l_r() != c.l_r || kb.l_v() != c.l_v {
        return Err(Error::Config(format!(
            "knowledge base geometry L_v={}, L_r={} does not match model L_v={}, L_r={}",
            kb.l_v(),
            kb.l_r(),
            c.l_v,
            c.l_r
        )));
    }
    Ok(())
}

/// Recomputes every entry's retrieval embedding with the model's encoder.
pub fn reindex(
    model: &Model,
    ctx: &SeriesContext<'_>,
    kb: &mut KnowledgeBase,
    exec: Execution,
) -> Result<()> {
    check_geometry(model, kb)?;
    let l_r = kb.l_r();
    if kb
        .entries()
        .last()
        .is_some_and(|e| e.end_index() > ctx.len())
    {
        return Err(Error::Argument(
            "knowledge base extends past the series".into(),
        ));
    }
    kb.reindex_embeddings_with(exec, |entry| {
        let seg = Segment::observed(
            entry.k_segment().to_vec(),
            ctx.calendar[entry.start_index..entry.start_index + l_r].to_vec(),
        );
        model.retrieval_embedding(&seg)
    })
}

/// Top-N entries for the origin `t`, queried with the `L_r` values before
/// `t` and restricted to windows that end at or before `t`.
pub fn retrieve(
    model: &Model,
    ctx: &SeriesContext<'_>,
    kb: &KnowledgeBase,
    mode: RetrievalMode,
    t: usize,
) -> Result<RetrievalResult> {
    let c = model.config();
    if c.n_retrieved == 0 {
        return Ok(RetrievalResult::default());
    }
    check_geometry(model, kb)?;
    if t < c.l_r || t > ctx.len() {
        return Err(Error::Argument(format!(
            "origin {t} has no full retrieval query"
        )));
    }
    let query = segment(ctx, t - c.l_r, c.l_r);
    let result = match mode {
        RetrievalMode::Dtw => kb.retrieve_dtw(&query.values, c.n_retrieved, t)?,
        RetrievalMode::Embedding => {
            let emb = model.retrieval_embedding(&query)?;
            kb.retrieve_embedding(&emb, c.n_retrieved, t)?
        }
    };
    if let Some(bad) = result.ranked.iter().find(|r| r.start_index + kb.l_v() > t) {
        return Err(Error::Training(format!(
            "retrieved window at {} overlaps forecast origin {t}",
            bad.start_index
        )));
    }
    Ok(result)
}

/// Assembles the network input for origin `t`.
pub fn build_input(
    model: &Model,
    ctx: &SeriesContext<'_>,
    kb: &KnowledgeBase,
    t: usize,
    retrieved: &RetrievalResult,
) -> Result<ForecastInput> {
    let c = model.config();
    if t < c.context_len() {
        return Err(Error::Argument(format!(
            "origin {t} needs {} steps of history",
            c.context_len()
        )));
    }
    if t + c.l_f > ctx.calendar.len() {
        return Err(Error::Argument(format!(
            "origin {t} has no calendar for the horizon"
        )));
    }
    let encoder = segment(ctx, t - c.l_o, c.l_o);
    let label_start = t - c.label_len;
    let decoder = Segment::with_placeholders(
        ctx.values[label_start..t].to_vec(),
        ctx.calendar[label_start..t + c.l_f].to_vec(),
        c.l_f,
    );
    let retrieved = retrieved
        .ranked
        .iter()
        .map(|r| {
            let e = &kb.entries()[r.entry];
            Segment::observed(
                e.v_segment().to_vec(),
                ctx.calendar[e.start_index..e.end_index()].to_vec(),
            )
        })
        .collect();
    Ok(ForecastInput {
        encoder,
        decoder,
        retrieved,
    })
}

/// Normalised forecasts for every origin, in order.
pub fn predict_origins(
    model: &Model,
    ctx: &SeriesContext<'_>,
    kb: &KnowledgeBase,
    mode: RetrievalMode,
    origins: &[usize],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    exec.map(origins, |&t| {
        let hits = retrieve(model, ctx, kb, mode, t)?;
        let input = build_input(model, ctx, kb, t, &hits)?;
        model.predict(&input)
    })
    .into_iter()
    .collect()
}

/// Denormalised error over `origins`; the ground truth is the denormalised
/// horizon of the context series.
pub fn evaluate_origins(
    model: &Model,
    ctx: &SeriesContext<'_>,
    kb: &KnowledgeBase,
    mode: RetrievalMode,
    origins: &[usize],
    stats: &NormStats,
    exec: Execution,
) -> Result<Metrics> {
    let l_f = model.config().l_f;
    let preds = predict_origins(model, ctx, kb, mode, origins, exec)?;
    let mut pred = Vec::with_capacity(origins.len() * l_f);
    let mut truth = Vec::with_capacity(origins.len() * l_f);
    for (p, &t) in preds.iter().zip(origins) {
        pred.extend(stats.denormalize(p));
        truth.extend(stats.denormalize(&ctx.values[t..t + l_f]));
    }
    evaluate(&pred, &truth)
}
