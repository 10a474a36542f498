use std::fs;
use std::path::Path;

use rand::Rng;

use super::config::{Mode, ModelConfig};
use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `(-bound, bound)`.
    Uniform(f64),
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub init: Init,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All model weights as one flat vector, laid out tensor by tensor in
/// lexicographic name order, each tensor row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    config: ModelConfig,
    layout: Vec<TensorSpec>,
    data: Vec<f64>,
}

fn weight(specs: &mut Vec<TensorSpec>, name: String, rows: usize, cols: usize) {
    let bound = 1.0 / (rows as f64).sqrt();
    specs.push(TensorSpec {
        name,
        rows,
        cols,
        offset: 0,
        init: Init::Uniform(bound),
    });
}

fn vector(specs: &mut Vec<TensorSpec>, name: String, cols: usize, init: Init) {
    specs.push(TensorSpec {
        name,
        rows: 1,
        cols,
        offset: 0,
        init,
    });
}

fn layer_norm(specs: &mut Vec<TensorSpec>, prefix: &str, d: usize) {
    vector(specs, format!("{prefix}.g"), d, Init::Ones);
    vector(specs, format!("{prefix}.b"), d, Init::Zeros);
}

fn attention(specs: &mut Vec<TensorSpec>, prefix: &str, d: usize) {
    for p in ["q", "k", "v", "o"] {
        weight(specs, format!("{prefix}.w{p}"), d, d);
        vector(specs, format!("{prefix}.b{p}"), d, Init::Zeros);
    }
}

fn feed_forward(specs: &mut Vec<TensorSpec>, prefix: &str, d: usize, f: usize) {
    weight(specs, format!("{prefix}.w1"), d, f);
    vector(specs, format!("{prefix}.b1"), f, Init::Zeros);
    weight(specs, format!("{prefix}.w2"), f, d);
    vector(specs, format!("{prefix}.b2"), d, Init::Zeros);
}

/// Tensor shapes implied by a config, sorted by name with offsets filled in.
pub fn layout(config: &ModelConfig) -> Vec<TensorSpec> {
    let (v, d, f) = (config.vocab_size, config.d_model, config.ffn_dim);
    let embed_bound = Init::Uniform(1.0 / (d as f64).sqrt());
    let mut specs = Vec::new();
    specs.push(TensorSpec {
        name: "tok_emb".into(),
        rows: v,
        cols: d,
        offset: 0,
        init: embed_bound,
    });
    specs.push(TensorSpec {
        name: "dec.pos_emb".into(),
        rows: config.max_len,
        cols: d,
        offset: 0,
        init: embed_bound,
    });
    let enc_dec = config.mode == Mode::EncoderDecoder;
    if enc_dec {
        specs.push(TensorSpec {
            name: "enc.pos_emb".into(),
            rows: config.max_len,
            cols: d,
            offset: 0,
            init: embed_bound,
        });
        for l in 0..config.n_layers {
            layer_norm(&mut specs, &format!("enc.{l}.ln_attn"), d);
            attention(&mut specs, &format!("enc.{l}.attn"), d);
            layer_norm(&mut specs, &format!("enc.{l}.ln_ffn"), d);
            feed_forward(&mut specs, &format!("enc.{l}.ffn"), d, f);
        }
        layer_norm(&mut specs, "enc.ln_f", d);
    }
    for l in 0..config.n_layers {
        layer_norm(&mut specs, &format!("dec.{l}.ln_attn"), d);
        attention(&mut specs, &format!("dec.{l}.attn"), d);
        if enc_dec {
            layer_norm(&mut specs, &format!("dec.{l}.ln_cross"), d);
            attention(&mut specs, &format!("dec.{l}.cross"), d);
        }
        layer_norm(&mut specs, &format!("dec.{l}.ln_ffn"), d);
        feed_forward(&mut specs, &format!("dec.{l}.ffn"), d, f);
    }
    layer_norm(&mut specs, "dec.ln_f", d);
    weight(&mut specs, "lm_head.w".into(), d, v);
    vector(&mut specs, "lm_head.b".into(), v, Init::Zeros);

    specs.sort_by(|a, b| a.name.cmp(&b.name));
    let mut offset = 0;
    for s in &mut specs {
        s.offset = offset;
        offset += s.len();
    }
    specs
}

/// Deterministic initialisation from `config.seed`; each tensor draws from
/// its own keyed stream.
pub fn init_model(config: &ModelConfig) -> Result<Parameters> {
    config.validate()?;
    let layout = layout(config);
    let total = layout.iter().map(TensorSpec::len).sum();
    let mut data = vec![0.0; total];
    for (t, spec) in layout.iter().enumerate() {
        let slot = &mut data[spec.offset..spec.offset + spec.len()];
        match spec.init {
            Init::Zeros => {}
            Init::Ones => slot.fill(1.0),
            Init::Uniform(bound) => {
                let mut rng = keyed(config.seed, Stream::ModelInit, &[t as u64]);
                for x in slot {
                    *x = rng.gen_range(-bound..bound);
                }
            }
        }
    }
    Ok(Parameters {
        config: config.clone(),
        layout,
        data,
    })
}

impl Parameters {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &[TensorSpec] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn tensor_index(&self, name: &str) -> Option<usize> {
        self.layout
            .binary_search_by(|s| s.name.as_str().cmp(name))
            .ok()
    }

    pub fn tensor_data(&self, index: usize) -> &[f64] {
        let s = &self.layout[index];
        &self.data[s.offset..s.offset + s.len()]
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensor_index(name).map(|i| self.tensor_data(i))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let s = &self.layout[self.tensor_index(name)?];
        Some(&mut self.data[s.offset..s.offset + s.len()])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

const MAGIC: &[u8; 8] = b"CTCLCKPT";
const VERSION: u32 = 1;

/// Serialises to the checkpoint byte format.
pub fn checkpoint_bytes(params: &Parameters) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(&params.config)?;
    let mut out =
        Vec::with_capacity(64 + config.len() + params.len() * 8 + params.layout.len() * 48);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    for (t, spec) in params.layout.iter().enumerate() {
        out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(spec.rows as u64).to_le_bytes());
        out.extend_from_slice(&(spec.cols as u64).to_le_bytes());
        for x in params.tensor_data(t) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Parameters> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(MAGIC.len())?;
    if magic != MAGIC {
        return Err(Error::Format(
            "not a checkpoint: bad magic bytes (unknown version)".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)?;
    config.validate()?;
    let layout = layout(&config);
    let mut data = Vec::with_capacity(layout.iter().map(TensorSpec::len).sum());
    for spec in &layout {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if name != spec.name {
            return Err(Error::Format(format!(
                "expected tensor {}, found {name}",
                spec.name
            )));
        }
        let rank = r.u32()? as usize;
        let dims: Vec<u64> = (0..rank).map(|_| r.u64()).collect::<Result<_>>()?;
        if dims != [spec.rows as u64, spec.cols as u64] {
            return Err(Error::Format(format!("tensor {name} has shape {dims:?}")));
        }
        let payload = r.take(spec.len() * 8)?;
        data.extend(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        );
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(Parameters {
        config,
        layout,
        data,
    })
}

pub fn save_checkpoint(params: &Parameters, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Parameters> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
