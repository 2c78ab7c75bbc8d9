//! Binary network checkpoints.
//!
//! Layout (little-endian): magic `KWETNET\0`, `u16` version, `u32` layer
//! count followed by `count + 1` `u32` widths, hidden and output activation
//! ids (`u8` each), normalisation `lo[3]`, `hi[3]` as `f64`, `u64` parameter
//! count, the parameters as `f64` in [`Network::params`] order, and a SHA-256
//! digest of everything before it.

use std::io::{self, Read, Write};

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::network::{Activation, Layer, NetError, Network, Normalization};
use crate::scalar::NetScalar;

pub const MAGIC: &[u8; 8] = b"KWETNET\0";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a network checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Network(#[from] NetError),
}

/// Serialises `net` into a byte vector.
pub fn encode<T: NetScalar>(net: &Network<T>) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    let dims = net.dims();
    b.extend_from_slice(&((dims.len() - 1) as u32).to_le_bytes());
    for d in &dims {
        b.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    b.push(net.hidden as u8);
    b.push(net.output as u8);
    for v in net.norm.lo.iter().chain(&net.norm.hi) {
        b.extend_from_slice(&v.to_f64().unwrap().to_le_bytes());
    }
    let params = net.params();
    b.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        b.extend_from_slice(&p.to_f64().unwrap().to_le_bytes());
    }
    let digest = Sha256::digest(&b);
    b.extend_from_slice(&digest);
    b
}

pub fn write_checkpoint<T: NetScalar>(net: &Network<T>, out: &mut impl Write) -> io::Result<()> {
    out.write_all(&encode(net))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Corrupt("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses and verifies a checkpoint.
pub fn decode<T: NetScalar>(bytes: &[u8]) -> Result<Network<T>, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 2 + 32 {
        return Err(CheckpointError::Corrupt("truncated".into()));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Checksum);
    }
    let mut c = Cursor { bytes: body, pos: 10 };
    let n_layers = c.u32()? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(CheckpointError::Corrupt(format!("{n_layers} layers")));
    }
    let dims = (0..=n_layers).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let act = |id: u8| Activation::from_id(id).ok_or_else(|| CheckpointError::Corrupt(format!("activation id {id}")));
    let ids = c.take(2)?;
    let (hidden, output) = (act(ids[0])?, act(ids[1])?);
    let conv = |v: f64| T::from_f64(v).unwrap();
    let mut bounds = [0.0; 6];
    for b in &mut bounds {
        *b = c.f64()?;
    }
    let norm = Normalization {
        lo: [conv(bounds[0]), conv(bounds[1]), conv(bounds[2])],
        hi: [conv(bounds[3]), conv(bounds[4]), conv(bounds[5])],
    };
    let count = u64::from_le_bytes(c.take(8)?.try_into().unwrap()) as usize;
    let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if count != expected || c.bytes.len() - c.pos != 8 * count {
        return Err(CheckpointError::Corrupt(format!("{count} parameters for dims {dims:?}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for w in dims.windows(2) {
        let weight = (0..w[0] * w[1]).map(|_| c.f64().map(conv)).collect::<Result<Vec<_>, _>>()?;
        let bias = (0..w[1]).map(|_| c.f64().map(conv)).collect::<Result<Vec<_>, _>>()?;
        layers.push(Layer {
            weight: Array2::from_shape_vec((w[1], w[0]), weight).unwrap(),
            bias: Array1::from_vec(bias),
        });
    }
    let net = Network { layers, hidden, output, norm };
    net.validate()?;
    Ok(net)
}

pub fn read_checkpoint<T: NetScalar>(input: &mut impl Read) -> Result<Network<T>, CheckpointError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode(&bytes)
}
