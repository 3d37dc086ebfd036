use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Where retrieved V segments enter the decoder from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeSource {
    /// Input-embedding output (`X^b_r`).
    Embedding,
    /// Encoder output (`X^e_r`).
    Encoder,
}

/// How retrieved segments are fused into the forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    /// Dual cross-attention in every decoder layer.
    Raca,
    /// Retrieved segments are prepended to the encoder input; the decoder's
    /// retrieval unit sees nothing.
    EncoderConcat,
}

/// How a retrieval embedding is pooled from the encoder output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingPooling {
    /// `[L_r, D]` flattened row-major.
    Flatten,
    /// Mean over time, width `D`.
    Mean,
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $s),+ }
            }
        }
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

str_enum!(DecodeSource { Embedding => "embedding", Encoder => "encoder" });
str_enum!(Fusion { Raca => "raca", EncoderConcat => "encoder_concat" });
str_enum!(EmbeddingPooling { Flatten => "flatten", Mean => "mean" });

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_ff: usize,
    /// Encoder window length.
    pub l_o: usize,
    /// Forecast length.
    pub l_f: usize,
    /// Retrieval index (K) length.
    pub l_r: usize,
    /// Content (V) length.
    pub l_v: usize,
    /// Observed points in front of the decoder placeholders.
    pub label_len: usize,
    /// Number of retrieved segments fed to the decoder.
    pub n_retrieved: usize,
    /// Attention temperature; `None` means `sqrt(d_model / heads)`.
    pub attn_scale: Option<f64>,
    pub decode_source: DecodeSource,
    pub fusion: Fusion,
    pub pooling: EmbeddingPooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            d_ff: 128,
            l_o: 98,
            l_f: 7,
            l_r: 14,
            l_v: 21,
            label_len: 14,
            n_retrieved: 3,
            attn_scale: None,
            decode_source: DecodeSource::Encoder,
            fusion: Fusion::Raca,
            pooling: EmbeddingPooling::Flatten,
        }
    }
}

impl ModelConfig {
    pub const KEYS: &'static [&'static str] = &[
        "d_model",
        "heads",
        "enc_layers",
        "dec_layers",
        "d_ff",
        "l_o",
        "l_f",
        "l_r",
        "l_v",
        "label_len",
        "n_retrieved",
        "attn_scale",
        "decode_source",
        "fusion",
        "pooling",
    ];

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("d_ff", self.d_ff),
            ("l_o", self.l_o),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("l_v", self.l_v),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model={} not divisible by heads={}",
                self.d_model, self.heads
            )));
        }
        if self.l_r > self.l_v {
            return Err(Error::Config(format!(
                "l_r={} exceeds l_v={}",
                self.l_r, self.l_v
            )));
        }
        if self.label_len > self.l_o {
            return Err(Error::Config(format!(
                "label_len={} exceeds l_o={}",
                self.label_len, self.l_o
            )));
        }
        if let Some(s) = self.attn_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config("attn_scale must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        self.attn_scale
            .unwrap_or_else(|| ((self.d_model / self.heads) as f64).sqrt())
    }

    /// Rows of the decoder input: observed label plus forecast placeholders.
    pub fn decoder_len(&self) -> usize {
        self.label_len + self.l_f
    }

    /// Longest history a sample needs before its forecast origin.
    pub fn context_len(&self) -> usize {
        self.l_o.max(self.l_r).max(self.label_len)
    }

    pub fn embedding_width(&self) -> usize {
        match self.pooling {
            EmbeddingPooling::Flatten => self.l_r * self.d_model,
            EmbeddingPooling::Mean => self.d_model,
        }
    }

    /// Assigns one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num(key: &str, v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: expected integer, got {v:?}")))
        }
        match key {
            "d_model" => self.d_model = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "enc_layers" => self.enc_layers = num(key, value)?,
            "dec_layers" => self.dec_layers = num(key, value)?,
            "d_ff" => self.d_ff = num(key, value)?,
            "l_o" => self.l_o = num(key, value)?,
            "l_f" => self.l_f = num(key, value)?,
            "l_r" => self.l_r = num(key, value)?,
            "l_v" => self.l_v = num(key, value)?,
            "label_len" => self.label_len = num(key, value)?,
            "n_retrieved" => self.n_retrieved = num(key, value)?,
            "attn_scale" => {
                self.attn_scale = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| {
                        Error::Config(format!(
                            "attn_scale: expected number or auto, got {value:?}"
                        ))
                    })?)
                }
            }
            "decode_source" => self.decode_source = value.parse()?,
            "fusion" => self.fusion = value.parse()?,
            "pooling" => self.pooling = value.parse()?,
            other => return Err(Error::Config(format!("unknown model key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_model", self.d_model.to_string()),
            ("heads", self.heads.to_string()),
            ("enc_layers", self.enc_layers.to_string()),
            ("dec_layers", self.dec_layers.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("l_o", self.l_o.to_string()),
            ("l_f", self.l_f.to_string()),
            ("l_r", self.l_r.to_string()),
            ("l_v", self.l_v.to_string()),
            ("label_len", self.label_len.to_string()),
            ("n_retrieved", self.n_retrieved.to_string()),
            (
                "attn_scale",
                self.attn_scale
                    .map_or_else(|| "auto".to_string(), |s| format!("{s:?}")),
            ),
            ("decode_source", self.decode_source.as_str().to_string()),
            ("fusion", self.fusion.as_str().to_string()),
            ("pooling", self.pooling.as_str().to_string()),
        ]
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Parses `key = value` lines; unknown keys are rejected.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
/// Duplicate keys are an error.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if out.insert(k.clone(), v).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key {k:?}",
                lineno + 1
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_geometry() {
        let c = ModelConfig::default();
        assert_eq!(
            (c.l_o, c.l_f, c.l_r, c.l_v, c.n_retrieved),
            (98, 7, 14, 21, 3)
        );
        assert_eq!(c.decoder_len(), 21);
        assert_eq!(c.scale(), 4.0);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut c = ModelConfig::default();
        c.attn_scale = Some(2.5);
        c.decode_source = DecodeSource::Embedding;
        let back = ModelConfig::from_kv_text(&c.to_kv_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ModelConfig::from_kv_text("bogus = 1").is_err());
        assert!(ModelConfig::from_kv_text("d_model = 10\nheads = 4").is_err());
        assert!(ModelConfig::from_kv_text("l_r = 30").is_err());
        assert!(ModelConfig::from_kv_text("heads = 2\nheads = 2").is_err());
        assert!(ModelConfig::from_kv_text("fusion = magic").is_err());
    }
}
