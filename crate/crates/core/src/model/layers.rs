//! Parameterised building blocks. Each block holds [`ParamId`]s into the
//! model's store and records its forward pass on a [`Graph`].

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numeric::{Graph, ParamId, ParamKind, ParamStore, Tensor, Var};

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_linear_weight(format!("{name}.weight"), fan_in, fan_out, rng);
        let bias = store.add(
            format!("{name}.bias"),
            ParamKind::Bias,
            Tensor::zeros(&[fan_out]),
        );
        Linear {
            weight,
            bias: Some(bias),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        let gain = store.add(
            format!("{name}.gain"),
            ParamKind::Norm,
            Tensor::vector(vec![1.0; width]),
        );
        let bias = store.add(
            format!("{name}.bias"),
            ParamKind::Norm,
            Tensor::zeros(&[width]),
        );
        LayerNorm { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Multi-head scaled dot-product attention without an output projection;
/// heads are concatenated back to width `D`.
#[derive(Debug, Clone)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub heads: usize,
    pub scale: f64,
}

impl Attention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        Attention {
            query: Linear::new(store, &format!("{name}.query"), d, d, rng),
            key: Linear::new(store, &format!("{name}.key"), d, d, rng),
            value: Linear::new(store, &format!("{name}.value"), d, d, rng),
            heads,
            scale,
        }
    }

    /// `softmax(Q Kᵀ / s) V` per head. With `causal`, query row `i` only sees
    /// key rows `0..=i`.
    pub fn forward(&self, g: &mut Graph<'_>, queries: Var, keys: Var, causal: bool) -> Result<Var> {
        let qd = g.value(queries).dims().to_vec();
        let kd = g.value(keys).dims().to_vec();
        if qd.len() != 2 || kd.len() != 2 || qd[1] != kd[1] {
            return Err(Error::dim("attention", &qd, &kd));
        }
        let d = qd[1];
        let q = self.query.forward(g, queries)?;
        let k = self.key.forward(g, keys)?;
        let v = self.value.forward(g, keys)?;
        let dh = d / self.heads;
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.scale(scores, 1.0 / self.scale);
            let weights = if causal {
                g.causal_softmax_rows(scores)?
            } else {
                g.softmax_rows(scores)?
            };
            outs.push(g.matmul(weights, vh)?);
        }
        if outs.len() == 1 {
            Ok(outs[0])
        } else {
            g.concat_cols(&outs)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Self {
        FeedForward {
            inner: Linear::new(store, &format!("{name}.inner"), d, d_ff, rng),
            outer: Linear::new(store, &format!("{name}.outer"), d_ff, d, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let h = self.inner.forward(g, x)?;
        let h = g.gelu(h);
        self.outer.forward(g, h)
    }
}

/// Post-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attention: Attention,
    pub attention_out: Linear,
    pub norm1: LayerNorm,
    pub ff: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        d_ff: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        EncoderLayer {
            attention: Attention::new(store, &format!("{name}.attn"), d, heads, scale, rng),
            attention_out: Linear::new(store, &format!("{name}.attn_out"), d, d, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, d_ff, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let a = self.attention.forward(g, x, x, false)?;
        let a = self.attention_out.forward(g, a)?;
        let h = g.add(x, a)?;
        let h = self.norm1.forward(g, h)?;
        let f = self.ff.forward(g, h)?;
        let out = g.add(h, f)?;
        self.norm2.forward(g, out)
    }
}

/// Decoder layer whose cross-attention is split into two parallel units:
/// one over the encoded observation window, one over the concatenated
/// retrieved segments. The unit outputs are merged by an affine map.
#[derive(Debug, Clone)]
pub struct RacaLayer {
    pub self_attention: Attention,
    pub self_out: Linear,
    pub norm1: LayerNorm,
    pub observed_unit: Attention,
    pub retrieval_unit: Attention,
    /// `2D -> D`; rows `0..D` act on the observed unit, rows `D..2D` on the
    /// retrieval unit.
    pub merge: Linear,
    pub norm2: LayerNorm,
    pub ff: FeedForward,
    pub norm3: LayerNorm,
}

impl RacaLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        d_ff: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        RacaLayer {
            self_attention: Attention::new(
                store,
                &format!("{name}.self_attn"),
                d,
                heads,
                scale,
                rng,
            ),
            self_out: Linear::new(store, &format!("{name}.self_out"), d, d, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d),
            observed_unit: Attention::new(store, &format!("{name}.unit_obs"), d, heads, scale, rng),
            retrieval_unit: Attention::new(
                store,
                &format!("{name}.unit_ret"),
                d,
                heads,
                scale,
                rng,
            ),
            merge: Linear::new(store, &format!("{name}.merge"), 2 * d, d, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, d_ff, rng),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), d),
        }
    }

    /// `merge(concat(H1, H2))` where `H1` attends over `observed` and `H2`
    /// over `retrieved`. The two `[L, D]` unit outputs are stacked along
    /// time into `[2L, D]` and row `i` is paired with row `L + i`, which is
    /// the feature-wise concatenation `[L, 2D]`. With no retrieved rows the
    /// `H2` half is zero.
    pub fn dual_cross_attention(
        &self,
        g: &mut Graph<'_>,
        hf: Var,
        observed: Var,
        retrieved: Option<Var>,
    ) -> Result<Var> {
        let h1 = self.observed_unit.forward(g, hf, observed, false)?;
        let h2 = match retrieved {
            Some(r) if g.value(r).dims().first().copied().unwrap_or(0) > 0 => {
                self.retrieval_unit.forward(g, hf, r, false)?
            }
            _ => {
                let dims = g.value(h1).dims().to_vec();
                g.constant(Tensor::zeros(&dims))
            }
        };
        let paired = g.concat_cols(&[h1, h2])?;
        self.merge.forward(g, paired)
    }

    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        hf: Var,
        observed: Var,
        retrieved: Option<Var>,
    ) -> Result<Var> {
        let s = self.self_attention.forward(g, hf, hf, true)?;
        let s = self.self_out.forward(g, s)?;
        let h = g.add(hf, s)?;
        let h = self.norm1.forward(g, h)?;
        let c = self.dual_cross_attention(g, h, observed, retrieved)?;
        let h = g.add(h, c)?;
        let h = self.norm2.forward(g, h)?;
        let f = self.ff.forward(g, h)?;
        let out = g.add(h, f)?;
        self.norm3.forward(g, out)
    }
}

/// Value projection, learned placeholder, calendar tables, and sinusoidal
/// positions, summed.
#[derive(Debug, Clone)]
pub struct InputEmbedding {
    pub value: Linear,
    pub placeholder: ParamId,
    pub day_of_week: ParamId,
    pub day_of_month: ParamId,
    pub month: ParamId,
    width: usize,
    positions: Tensor,
}

const POSITION_CACHE: usize = 512;

pub fn sinusoidal_positions(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10_000f64.powf(exponent);
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(&[len, d], data).expect("rank 2")
}

impl InputEmbedding {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Self {
        let mut table = |store: &mut ParamStore, key: &str, rows: usize| {
            let normal = Normal::new(0.0, 0.1).expect("positive std");
            let data = (0..rows * d).map(|_| normal.sample(rng)).collect();
            store.add(
                format!("{name}.{key}"),
                ParamKind::Table,
                Tensor::new(&[rows, d], data).expect("rank 2"),
            )
        };
        let placeholder = table(store, "placeholder", 1);
        let day_of_week = table(store, "day_of_week", 7);
        let day_of_month = table(store, "day_of_month", 31);
        let month = table(store, "month", 12);
        let value = Linear::new(store, &format!("{name}.value"), 1, d, rng);
        InputEmbedding {
            value,
            placeholder,
            day_of_week,
            day_of_month,
            month,
            width: d,
            positions: sinusoidal_positions(POSITION_CACHE, d),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, seg: &super::Segment) -> Result<Var> {
        let len = seg.len();
        if seg.calendar.len() != len || seg.observed > len || len == 0 {
            return Err(Error::Argument(format!(
                "segment with {len} values, {} calendar rows, {} observed",
                seg.calendar.len(),
                seg.observed
            )));
        }
        let d = self.width;
        let mut column = seg.values.clone();
        column[seg.observed..].iter_mut().for_each(|v| *v = 0.0);
        let column = g.constant(Tensor::new(&[len, 1], column)?);
        let mut x = self.value.forward(g, column)?;
        if seg.observed < len {
            let keep = (0..len)
                .map(|i| if i < seg.observed { 1.0 } else { 0.0 })
                .collect::<Vec<_>>();
            let fill = keep.iter().map(|k| 1.0 - k).collect::<Vec<_>>();
            x = g.row_scale(x, keep)?;
            let fill = g.constant(Tensor::new(&[len, 1], fill)?);
            let ph = g.param(self.placeholder);
            let ph = g.matmul(fill, ph)?;
            x = g.add(x, ph)?;
        }
        let tables = [
            (
                self.day_of_week,
                seg.calendar
                    .iter()
                    .map(|c| c.day_of_week as usize)
                    .collect::<Vec<_>>(),
            ),
            (
                self.day_of_month,
                seg.calendar
                    .iter()
                    .map(|c| c.day_of_month as usize)
                    .collect(),
            ),
            (
                self.month,
                seg.calendar.iter().map(|c| c.month as usize).collect(),
            ),
        ];
        for (table, idx) in tables {
            let t = g.param(table);
            let rows = g.gather_rows(t, idx)?;
            x = g.add(x, rows)?;
        }
        let pos = if len <= POSITION_CACHE {
            Tensor::new(&[len, d], self.positions.data()[..len * d].to_vec())?
        } else {
            sinusoidal_positions(len, d)
        };
        let pos = g.constant(pos);
        g.add(x, pos)
    }
}
