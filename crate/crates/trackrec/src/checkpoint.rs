//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   8 bytes  "TRKRCKPT"
//! version u32      FORMAT_VERSION
//! kind    u8       1 generator, 2 validator, 3 ctr model
//! ndims   u32      then ndims x u32 shape values
//! count   u64      then count x f64 parameter values
//! ```
//!
//! The shape is checked against the value count on load, so a truncated or
//! mismatched file fails loudly rather than producing a wrong model.

use std::fs;
use std::path::Path;

use trackrec_core::rec::{CtrModelParams, CtrShape};
use trackrec_core::{GeneratorParams, ValidatorParams};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"TRKRCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Generator = 1,
    Validator = 2,
    Ctr = 3,
}

impl Kind {
    fn from_byte(b: u8) -> Option<Kind> {
        match b {
            1 => Some(Kind::Generator),
            2 => Some(Kind::Validator),
            3 => Some(Kind::Ctr),
            _ => None,
        }
    }
}

pub fn encode(kind: Kind, shape: &[u32], values: impl ExactSizeIterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(25 + 4 * shape.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for d in shape {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Parses a checkpoint, returning its shape and values after checking the
/// header and kind.
pub fn decode(bytes: &[u8], expected: Kind) -> Result<(Vec<u32>, Vec<f64>), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8) != Some(MAGIC.as_slice()) {
        return Err("not a trackrec checkpoint (bad magic)".into());
    }
    let version = c.u32().ok_or("truncated header")?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}, expected {FORMAT_VERSION}"));
    }
    let kind = c.take(1).and_then(|b| Kind::from_byte(b[0])).ok_or("unknown checkpoint kind")?;
    if kind != expected {
        return Err(format!("checkpoint holds a {kind:?}, expected a {expected:?}"));
    }
    let ndims = c.u32().ok_or("truncated header")? as usize;
    let shape = (0..ndims).map(|_| c.u32()).collect::<Option<Vec<u32>>>().ok_or("truncated shape")?;
    let count = c.u64().ok_or("truncated header")? as usize;
    if bytes.len() - c.pos != count.saturating_mul(8) {
        return Err(format!("expected {count} values, found {} bytes of payload", bytes.len() - c.pos));
    }
    let values = (0..count).map(|_| f64::from_le_bytes(c.take(8).unwrap().try_into().unwrap())).collect();
    Ok((shape, values))
}

fn read(path: &Path, kind: Kind) -> Result<(Vec<u32>, Vec<f64>)> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::MissingCheckpoint(path.to_path_buf()))
        }
        Err(e) => return Err(CliError::Io { path: path.to_path_buf(), source: e }),
    };
    decode(&bytes, kind).map_err(|msg| CliError::Checkpoint { path: path.to_path_buf(), msg })
}

fn bad_shape(path: &Path, e: trackrec_core::Error) -> CliError {
    CliError::Checkpoint { path: path.to_path_buf(), msg: e.to_string() }
}

fn dims<const N: usize>(path: &Path, shape: &[u32]) -> Result<[usize; N]> {
    let arr: [u32; N] = shape.try_into().map_err(|_| CliError::Checkpoint {
        path: path.to_path_buf(),
        msg: format!("expected {N} shape values, found {}", shape.len()),
    })?;
    Ok(arr.map(|d| d as usize))
}

pub fn generator_bytes(g: &GeneratorParams) -> Vec<u8> {
    let shape = [g.num_tags() as u32, g.cot_len() as u32];
    let values: Vec<f64> = g.weights().iter().chain(g.bias()).copied().collect();
    encode(Kind::Generator, &shape, values.into_iter())
}

pub fn write_generator(path: &Path, g: &GeneratorParams) -> Result<()> {
    fs::write(path, generator_bytes(g)).map_err(CliError::io(path))
}

pub fn read_generator(path: &Path) -> Result<GeneratorParams> {
    let (shape, mut values) = read(path, Kind::Generator)?;
    let [k, l] = dims(path, &shape)?;
    let n_weights = k * (2 * k + l);
    if values.len() != n_weights + k {
        return Err(CliError::Checkpoint { path: path.to_path_buf(), msg: "value count does not match shape".into() });
    }
    let bias = values.split_off(n_weights);
    GeneratorParams::from_parts(k, l, values, bias).map_err(|e| bad_shape(path, e))
}

pub fn validator_bytes(v: &ValidatorParams) -> Vec<u8> {
    let shape = [v.num_tags() as u32];
    let values: Vec<f64> = v.w_yes.iter().chain(&v.w_no).chain([&v.b_yes, &v.b_no]).copied().collect();
    encode(Kind::Validator, &shape, values.into_iter())
}

pub fn write_validator(path: &Path, v: &ValidatorParams) -> Result<()> {
    fs::write(path, validator_bytes(v)).map_err(CliError::io(path))
}

pub fn read_validator(path: &Path) -> Result<ValidatorParams> {
    let (shape, values) = read(path, Kind::Validator)?;
    let [k] = dims(path, &shape)?;
    if values.len() != 8 * k + 2 {
        return Err(CliError::Checkpoint { path: path.to_path_buf(), msg: "value count does not match shape".into() });
    }
    let w_yes = values[..4 * k].to_vec();
    let w_no = values[4 * k..8 * k].to_vec();
    ValidatorParams::from_parts(k, w_yes, w_no, values[8 * k], values[8 * k + 1]).map_err(|e| bad_shape(path, e))
}

pub fn ctr_bytes(p: &CtrModelParams) -> Vec<u8> {
    let s = p.shape();
    let shape = [s.n_users, s.n_items, s.num_tags, s.id_dim, s.enc_dim, s.connector_hidden, s.pref_dim, s.hidden]
        .map(|d| d as u32);
    encode(Kind::Ctr, &shape, p.values().iter().copied())
}

pub fn write_ctr(path: &Path, p: &CtrModelParams) -> Result<()> {
    fs::write(path, ctr_bytes(p)).map_err(CliError::io(path))
}

pub fn read_ctr(path: &Path) -> Result<CtrModelParams> {
    let (shape, values) = read(path, Kind::Ctr)?;
    let [n_users, n_items, num_tags, id_dim, enc_dim, connector_hidden, pref_dim, hidden] = dims(path, &shape)?;
    let shape = CtrShape { n_users, n_items, num_tags, id_dim, enc_dim, connector_hidden, pref_dim, hidden };
    CtrModelParams::from_values(shape, values).map_err(|e| bad_shape(path, e))
}
