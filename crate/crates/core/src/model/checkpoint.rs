//! Versioned binary checkpoints: magic, version, then length-prefixed named
//! sections holding the config, vocabulary, parameter tensors, optimizer
//! state and counters. Tensor data is little-endian f64, so a save/load
//! round trip is bit-exact for both supported scalar types.

use std::fs;
use std::path::Path;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{
    ConvSpec, Hyperparameters, ModelConfig, ModelError, ModelParams, TrainingState, Vocabulary,
};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QOCR";
pub const CHECKPOINT_VERSION: u16 = 1;

const SECTION_CONFIG: &str = "config";
const SECTION_VOCAB: &str = "vocabulary";
const SECTION_PARAMS: &str = "tensors";
const SECTION_OPT: &str = "optimizer";
const SECTION_COUNTER: &str = "counter";

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self {
            bytes,
            pos: 0,
            what,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n);
        if end.is_none_or(|e| e > self.bytes.len()) {
            return Err(ModelError::CheckpointCorrupt(format!(
                "{}: wanted {n} bytes at offset {}, only {} available",
                self.what,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ModelError::CheckpointCorrupt(format!("{}: non-utf8 string", self.what)))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn encode_tensors<T: Scalar>(named: &[(String, &Tensor<T>)]) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, named.len() as u32);
    for (name, t) in named {
        put_str(&mut buf, name);
        put_u32(&mut buf, t.rank() as u32);
        for &d in t.shape() {
            put_u64(&mut buf, d as u64);
        }
        for &v in t.data() {
            put_f64(&mut buf, v.as_f64());
        }
    }
    buf
}

fn decode_tensors<T: Scalar>(
    bytes: &[u8],
    what: &'static str,
    into: &mut [(String, &mut Tensor<T>)],
) -> Result<(), ModelError> {
    let mut r = Reader::new(bytes, what);
    let count = r.u32()? as usize;
    if count != into.len() {
        return Err(ModelError::CheckpointInconsistent(format!(
            "{what}: stores {count} tensors, the config implies {}",
            into.len()
        )));
    }
    for (name, tensor) in into.iter_mut() {
        let stored = r.string()?;
        if &stored != name {
            return Err(ModelError::CheckpointInconsistent(format!(
                "{what}: expected tensor {name:?}, found {stored:?}"
            )));
        }
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        if shape != tensor.shape() {
            return Err(ModelError::CheckpointInconsistent(format!(
                "{what}: tensor {name:?} has shape {shape:?}, the config implies {:?}",
                tensor.shape()
            )));
        }
        for slot in tensor.data_mut() {
            *slot = T::c(r.f64()?);
        }
    }
    if !r.done() {
        return Err(ModelError::CheckpointCorrupt(format!(
            "{what}: trailing bytes"
        )));
    }
    Ok(())
}

fn encode_config(cfg: &ModelConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, cfg.input_width as u32);
    put_u32(&mut buf, cfg.input_height as u32);
    put_u32(&mut buf, cfg.vocab_size as u32);
    put_u32(&mut buf, cfg.lstm_hidden as u32);
    put_u32(&mut buf, cfg.lstm_layers as u32);
    put_u32(&mut buf, cfg.conv.len() as u32);
    for spec in &cfg.conv {
        put_u32(&mut buf, spec.kernel.0 as u32);
        put_u32(&mut buf, spec.kernel.1 as u32);
        put_u32(&mut buf, spec.filters as u32);
        put_u32(&mut buf, spec.pool.0 as u32);
        put_u32(&mut buf, spec.pool.1 as u32);
    }
    buf
}

fn decode_config(bytes: &[u8]) -> Result<ModelConfig, ModelError> {
    let mut r = Reader::new(bytes, SECTION_CONFIG);
    let input_width = r.u32()? as usize;
    let input_height = r.u32()? as usize;
    let vocab_size = r.u32()? as usize;
    let lstm_hidden = r.u32()? as usize;
    let lstm_layers = r.u32()? as usize;
    let blocks = r.u32()? as usize;
    let mut conv = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let kernel = (r.u32()? as usize, r.u32()? as usize);
        let filters = r.u32()? as usize;
        let pool = (r.u32()? as usize, r.u32()? as usize);
        conv.push(ConvSpec {
            kernel,
            filters,
            pool,
        });
    }
    if !r.done() {
        return Err(ModelError::CheckpointCorrupt("config: trailing bytes".into()));
    }
    Ok(ModelConfig {
        input_width,
        input_height,
        conv,
        lstm_hidden,
        lstm_layers,
        vocab_size,
    })
}

/// Serialize the full training state to `path`.
pub fn save_checkpoint<T: Scalar>(
    state: &TrainingState<T>,
    path: impl AsRef<Path>,
) -> Result<(), ModelError> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let section = |out: &mut Vec<u8>, name: &str, payload: Vec<u8>| {
        put_str(out, name);
        put_u64(out, payload.len() as u64);
        out.extend_from_slice(&payload);
    };

    section(&mut out, SECTION_CONFIG, encode_config(&state.config));
    section(
        &mut out,
        SECTION_VOCAB,
        state.vocab.to_text().into_bytes(),
    );
    section(
        &mut out,
        SECTION_PARAMS,
        encode_tensors(&state.params.named_tensors(true)),
    );
    let mut opt = Vec::new();
    put_f64(&mut opt, state.hyper.learning_rate);
    put_f64(&mut opt, state.hyper.rho);
    put_f64(&mut opt, state.hyper.epsilon);
    put_u64(&mut opt, state.hyper.batch_size as u64);
    opt.extend_from_slice(&encode_tensors(&state.opt.named_tensors(false)));
    section(&mut out, SECTION_OPT, opt);
    let mut counter = Vec::new();
    put_u64(&mut counter, state.iteration);
    put_u64(&mut counter, state.seed);
    section(&mut out, SECTION_COUNTER, counter);

    fs::write(path, out)?;
    Ok(())
}

/// Load a training state saved by [`save_checkpoint`].
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<TrainingState<T>, ModelError> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, "header");
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(ModelError::CheckpointMagic);
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::CheckpointVersion(version));
    }

    let mut sections: Vec<(String, &[u8])> = Vec::new();
    while !r.done() {
        let name = r.string()?;
        let len = r.u64()? as usize;
        let payload = r.take(len)?;
        sections.push((name, payload));
    }
    let find = |name: &str| -> Result<&[u8], ModelError> {
        sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| *p)
            .ok_or_else(|| ModelError::CheckpointMissing(name.to_string()))
    };

    let config = decode_config(find(SECTION_CONFIG)?)?;
    config.validate()?;
    let vocab = Vocabulary::from_text(
        std::str::from_utf8(find(SECTION_VOCAB)?)
            .map_err(|_| ModelError::CheckpointCorrupt("vocabulary: non-utf8".into()))?,
    )?;
    if vocab.size() != config.vocab_size {
        return Err(ModelError::CheckpointInconsistent(format!(
            "vocabulary has {} symbols but config expects {}",
            vocab.size(),
            config.vocab_size
        )));
    }

    let mut params = ModelParams::<T>::zeros(&config)?;
    decode_tensors(
        find(SECTION_PARAMS)?,
        "tensors",
        &mut params.named_tensors_mut(true),
    )?;

    let opt_bytes = find(SECTION_OPT)?;
    let mut opt_reader = Reader::new(opt_bytes, SECTION_OPT);
    let hyper = Hyperparameters {
        learning_rate: opt_reader.f64()?,
        rho: opt_reader.f64()?,
        epsilon: opt_reader.f64()?,
        batch_size: opt_reader.u64()? as usize,
    };
    let mut opt = params.zeros_like();
    decode_tensors(
        &opt_bytes[opt_reader.pos..],
        "optimizer",
        &mut opt.named_tensors_mut(false),
    )?;

    let mut counter = Reader::new(find(SECTION_COUNTER)?, SECTION_COUNTER);
    let iteration = counter.u64()?;
    let seed = counter.u64()?;

    Ok(TrainingState {
        config,
        vocab,
        params,
        opt,
        iteration,
        seed,
        hyper,
    })
}
