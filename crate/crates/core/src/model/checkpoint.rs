//! Binary checkpoint: `RATSFCK1`, a length-prefixed UTF-8 block of
//! `key = value` lines (model configuration plus `meta.*` entries), then the
//! parameter count and per parameter: name length, name bytes, rank,
//! extents (all little-endian `u32`) and the values as little-endian `f64`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::config::{parse_kv, ModelConfig};
use super::network::Model;
use crate::error::{Error, Result};
use crate::numeric::{ParamKind, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"RATSFCK1";
const META_PREFIX: &str = "meta.";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    /// Free-form run metadata (normalisation statistics, retrieval mode, ...).
    pub metadata: BTreeMap<String, String>,
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v =
        u32::try_from(v).map_err(|_| Error::format("checkpoint", format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint {
            model,
            metadata: BTreeMap::new(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut text = self.model.config().to_kv_text();
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n', '#']) || v.contains(['\n', '#']) {
                return Err(Error::format(
                    "checkpoint",
                    format!("metadata {k:?} is not representable"),
                ));
            }
            text.push_str(&format!("{META_PREFIX}{k} = {v}\n"));
        }
        w.write_all(MAGIC)?;
        put_u32(&mut w, text.len())?;
        w.write_all(text.as_bytes())?;
        let params = self.model.params();
        put_u32(&mut w, params.len())?;
        for p in params.iter() {
            put_u32(&mut w, p.name.len())?;
            w.write_all(p.name.as_bytes())?;
            put_u32(&mut w, p.value.dims().len())?;
            for &e in p.value.dims() {
                put_u32(&mut w, e)?;
            }
            for v in p.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let text_len = get_u32(&mut r)?;
        let mut text = vec![0u8; text_len];
        r.read_exact(&mut text)?;
        let text = String::from_utf8(text)
            .map_err(|_| Error::format("checkpoint", "config is not UTF-8"))?;

        let mut config = ModelConfig::default();
        let mut metadata = BTreeMap::new();
        for (k, v) in parse_kv(&text)? {
            match k.strip_prefix(META_PREFIX) {
                Some(meta) => {
                    metadata.insert(meta.to_string(), v);
                }
                None => config.set(&k, &v)?,
            }
        }

        let count = get_u32(&mut r)?;
        let mut loaded = ParamStore::new();
        for _ in 0..count {
            let name_len = get_u32(&mut r)?;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name =
                String::from_utf8(name).map_err(|_| Error::format("checkpoint", "bad name"))?;
            let rank = get_u32(&mut r)?;
            if rank > 3 {
                return Err(Error::format("checkpoint", format!("{name}: rank {rank}")));
            }
            let dims = (0..rank)
                .map(|_| get_u32(&mut r))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            loaded.add(name, ParamKind::Weight, Tensor::new(&dims, data)?);
        }

        let mut model = Model::new(config, 0)?;
        if loaded.len() != model.params().len() {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "{} tensors, architecture needs {}",
                    loaded.len(),
                    model.params().len()
                ),
            ));
        }
        model.params_mut().load_from(&loaded)?;
        Ok(Checkpoint { model, metadata })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }
}
