use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{DecodeSource, EmbeddingPooling, Fusion, ModelConfig};
use super::input::{ForecastInput, Segment};
use super::layers::{EncoderLayer, InputEmbedding, Linear, RacaLayer};
use crate::error::{Error, Result};
use crate::numeric::{Graph, ParamStore, Tensor, Var};

/// Encoder-decoder forecaster with dual cross-attention decoder layers.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    pub embedding: InputEmbedding,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<RacaLayer>,
    pub head: Linear,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (d, h, ff, s) = (config.d_model, config.heads, config.d_ff, config.scale());
        let embedding = InputEmbedding::new(&mut params, "embed", d, &mut rng);
        let encoder = (0..config.enc_layers)
            .map(|i| EncoderLayer::new(&mut params, &format!("enc{i}"), d, h, ff, s, &mut rng))
            .collect();
        let decoder = (0..config.dec_layers)
            .map(|i| RacaLayer::new(&mut params, &format!("dec{i}"), d, h, ff, s, &mut rng))
            .collect();
        let head = Linear::new(&mut params, "head", d, 1, &mut rng);
        Ok(Model {
            config,
            params,
            embedding,
            encoder,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// The same parameters under a different retrieval key length. No
    /// parameter depends on `L_r`.
    pub fn with_retrieval_length(&self, l_r: usize) -> Result<Model> {
        let mut m = self.clone();
        m.config.l_r = l_r;
        m.config.validate()?;
        Ok(m)
    }

    /// `[len, D]` input embedding of a segment.
    pub fn embed(&self, g: &mut Graph<'_>, seg: &Segment) -> Result<Var> {
        self.embedding.forward(g, seg)
    }

    /// Runs the encoder stack; output shape equals input shape.
    pub fn encode(&self, g: &mut Graph<'_>, xb: Var) -> Result<Var> {
        let mut x = xb;
        for layer in &self.encoder {
            x = layer.forward(g, x)?;
        }
        Ok(x)
    }

    /// Builds the forward pass on `g` (which must be bound to `self.params()`)
    /// and returns the `[L_f, 1]` prediction node.
    pub fn forward(&self, g: &mut Graph<'_>, input: &ForecastInput) -> Result<Var> {
        let c = &self.config;
        if input.encoder.len() != c.l_o {
            return Err(Error::Argument(format!(
                "encoder window has {} steps, expected {}",
                input.encoder.len(),
                c.l_o
            )));
        }
        if input.decoder.len() != c.decoder_len() || input.decoder.observed != c.label_len {
            return Err(Error::Argument(format!(
                "decoder input has {} steps ({} observed), expected {} ({} observed)",
                input.decoder.len(),
                input.decoder.observed,
                c.decoder_len(),
                c.label_len
            )));
        }
        let retrieved = &input.retrieved[..input.retrieved.len().min(c.n_retrieved)];

        let xb_o = self.embed(g, &input.encoder)?;
        let mut xb_r = Vec::with_capacity(retrieved.len());
        for seg in retrieved {
            xb_r.push(self.embed(g, seg)?);
        }

        let (xe_o, xr) = match c.fusion {
            Fusion::Raca => {
                let xe_o = self.encode(g, xb_o)?;
                let parts = match c.decode_source {
                    DecodeSource::Embedding => xb_r,
                    DecodeSource::Encoder => xb_r
                        .into_iter()
                        .map(|x| self.encode(g, x))
                        .collect::<Result<Vec<_>>>()?,
                };
                let xr = if parts.is_empty() {
                    None
                } else {
                    Some(g.concat_rows(&parts)?)
                };
                (xe_o, xr)
            }
            Fusion::EncoderConcat => {
                let mut parts = xb_r;
                parts.push(xb_o);
                let joined = if parts.len() == 1 {
                    parts[0]
                } else {
                    g.concat_rows(&parts)?
                };
                (self.encode(g, joined)?, None)
            }
        };

        let mut h = self.embed(g, &input.decoder)?;
        for layer in &self.decoder {
            h = layer.forward(g, h, xe_o, xr)?;
        }
        let tail = g.slice_rows(h, c.label_len, c.l_f)?;
        self.head.forward(g, tail)
    }

    /// Normalised point forecasts for one origin.
    pub fn predict(&self, input: &ForecastInput) -> Result<Vec<f64>> {
        let mut g = Graph::with_params(&self.params);
        let out = self.forward(&mut g, input)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Retrieval embedding of a K segment: the encoder output pooled per
    /// the configured [`EmbeddingPooling`].
    pub fn retrieval_embedding(&self, seg: &Segment) -> Result<Vec<f64>> {
        let mut g = Graph::with_params(&self.params);
        let xb = self.embed(&mut g, seg)?;
        let xe = self.encode(&mut g, xb)?;
        let t: &Tensor = g.value(xe);
        Ok(match self.config.pooling {
            EmbeddingPooling::Flatten => t.data().to_vec(),
            EmbeddingPooling::Mean => {
                let (rows, d) = (t.dims()[0], t.dims()[1]);
                let mut out = vec![0.0; d];
                for i in 0..rows {
                    for (o, v) in out.iter_mut().zip(t.row(i)) {
                        *o += v / rows as f64;
                    }
                }
                out
            }
        })
    }
}
