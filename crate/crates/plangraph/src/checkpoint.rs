//! Binary training checkpoints.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "PLGRAPH\0" | u32 version | u32 crc32 of everything after this field
//! u32 len + model config (JSON)
//! u64 epoch | [u8; 32] rng seed | u64 rng stream | u128 rng word position
//! u64 adam steps | f64 beta1 | f64 beta2 | f64 epsilon | f64 learning rate
//! u32 tensor count, then per tensor:
//!   u32 len + name | u32 rank | u64 dims.. | f64 values.. | f64 m.. | f64 v..
//! ```

use std::fs;
use std::path::Path;

use plangraph_core::optim::AdamState;
use plangraph_core::train::TrainerState;
use plangraph_core::{ModelConfig, Tensor};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PLGRAPH\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub state: TrainerState,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    fn values(&mut self, t: &Tensor) {
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(what: &str) -> Error {
    Error::Format(format!("corrupt checkpoint: {what}"))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.arr()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.arr()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.arr()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.arr()?))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n.checked_mul(8).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(corrupt("tensor larger than file"));
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(shape.to_vec(), data).map_err(Error::from)
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let config = serde_json::to_vec(&ck.model).expect("model config serializes");
    w.bytes(&config);
    let s = &ck.state;
    w.u64(s.epoch as u64);
    w.0.extend_from_slice(&s.rng_seed);
    w.u64(s.rng_stream);
    w.0.extend_from_slice(&s.rng_word_pos.to_le_bytes());
    let o = &s.optimizer;
    w.u64(o.step_count);
    for v in [o.beta1, o.beta2, o.epsilon, o.learning_rate] {
        w.f64(v);
    }
    w.u32(s.params.len() as u32);
    for (i, (name, value)) in s.params.iter().enumerate() {
        w.bytes(name.as_bytes());
        w.u32(value.rank() as u32);
        for &d in value.shape() {
            w.u64(d as u64);
        }
        w.values(value);
        w.values(&o.first_moment[i]);
        w.values(&o.second_moment[i]);
    }
    let body = w.0;
    let mut out = Vec::with_capacity(body.len() + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let crc = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    let body = &bytes[16..];
    if crc32fast::hash(body) != crc {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 0 };
    let model: ModelConfig =
        serde_json::from_slice(r.bytes()?).map_err(|e| corrupt(&format!("model config: {e}")))?;
    let epoch = r.u64()? as usize;
    let rng_seed = r.arr::<32>()?;
    let rng_stream = r.u64()?;
    let rng_word_pos = r.u128()?;
    let step_count = r.u64()?;
    let (beta1, beta2, epsilon, learning_rate) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let count = r.u32()? as usize;
    let mut params = Vec::new();
    let mut first_moment = Vec::new();
    let mut second_moment = Vec::new();
    for _ in 0..count {
        let name = String::from_utf8(r.bytes()?.to_vec()).map_err(|_| corrupt("parameter name"))?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(corrupt("tensor rank"));
        }
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        params.push((name, r.tensor(&shape)?));
        first_moment.push(r.tensor(&shape)?);
        second_moment.push(r.tensor(&shape)?);
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(Checkpoint {
        model,
        state: TrainerState {
            params,
            optimizer: AdamState {
                step_count,
                first_moment,
                second_moment,
                beta1,
                beta2,
                epsilon,
                learning_rate,
            },
            epoch,
            rng_seed,
            rng_stream,
            rng_word_pos,
        },
    })
}

pub fn checkpoint_save(ck: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
