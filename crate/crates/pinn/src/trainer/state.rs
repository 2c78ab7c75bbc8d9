//! Resumable training state.
//!
//! Layout (little-endian): magic `KWETSTAT`, `u16` version, `u64` next epoch,
//! `u8` early-stop flag with `u64` epoch, the network as an embedded
//! checkpoint (`u64` length + bytes), Adam step `u64` and moments, the best
//! validation record, the loss history, the validation curve and a SHA-256
//! digest of everything before it. Values are stored as `f64`, which holds
//! single-precision state exactly.

use std::io::{self, Read, Write};

use sha2::{Digest, Sha256};

use super::adam::Adam;
use super::early_stop::Best;
use crate::autodiff::{decode, encode, CheckpointError, Network};
use crate::kpinn_loss::{LogRow, LossParts, LossWeights};

pub const STATE_MAGIC: &[u8; 8] = b"KWETSTAT";
pub const STATE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Next Adam epoch to run.
    pub epoch: usize,
    pub net: Network<f64>,
    pub adam: Adam<f64>,
    pub best: Option<Best<Vec<f64>>>,
    pub history: Vec<LogRow>,
    pub validation: Vec<(usize, f64)>,
    pub stopped_early: Option<usize>,
}

impl TrainState {
    pub fn new(net: &Network<f64>) -> Self {
        Self {
            epoch: 0,
            net: net.clone(),
            adam: Adam::new(net.param_count()),
            best: None,
            history: Vec::new(),
            validation: Vec::new(),
            stopped_early: None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(STATE_MAGIC);
        b.extend_from_slice(&STATE_VERSION.to_le_bytes());
        put_u64(&mut b, self.epoch as u64);
        b.push(self.stopped_early.is_some() as u8);
        put_u64(&mut b, self.stopped_early.unwrap_or(0) as u64);
        let net = encode(&self.net);
        put_u64(&mut b, net.len() as u64);
        b.extend_from_slice(&net);
        put_u64(&mut b, self.adam.t);
        put_vec(&mut b, &self.adam.m);
        put_vec(&mut b, &self.adam.v);
        b.push(self.best.is_some() as u8);
        if let Some(best) = &self.best {
            put_u64(&mut b, best.epoch as u64);
            put_f64(&mut b, best.value);
            put_vec(&mut b, &best.params);
        }
        put_u64(&mut b, self.history.len() as u64);
        for r in &self.history {
            put_u64(&mut b, r.epoch as u64);
            let p = &r.parts;
            let w = &r.weights;
            for v in [p.phys, p.data, p.bc_periodic, p.bc_bounce, p.init, r.total, w.phys, w.data, w.bc, w.init, r.g_ads] {
                put_f64(&mut b, v);
            }
        }
        put_u64(&mut b, self.validation.len() as u64);
        for (e, v) in &self.validation {
            put_u64(&mut b, *e as u64);
            put_f64(&mut b, *v);
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < STATE_MAGIC.len() + 2 + 32 {
            return Err(CheckpointError::Corrupt("truncated".into()));
        }
        if &bytes[..8] != STATE_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::Checksum);
        }
        let mut c = Reader { bytes: body, pos: 8 };
        let version = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
        if version != STATE_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let epoch = c.usize()?;
        let stopped = c.u8()? != 0;
        let stop_epoch = c.usize()?;
        let len = c.usize()?;
        let net = decode::<f64>(c.take(len)?)?;
        let t = c.u64()?;
        let m = c.vec()?;
        let v = c.vec()?;
        let n = net.param_count();
        if m.len() != n || v.len() != n {
            return Err(CheckpointError::Corrupt("moment length differs from the network".into()));
        }
        let best = if c.u8()? != 0 {
            let epoch = c.usize()?;
            let value = c.f64()?;
            let params = c.vec()?;
            if params.len() != n {
                return Err(CheckpointError::Corrupt("best parameters differ from the network".into()));
            }
            Some(Best { epoch, value, params })
        } else {
            None
        };
        let rows = c.usize()?;
        let mut history = Vec::with_capacity(rows.min(1 << 20));
        for _ in 0..rows {
            let epoch = c.usize()?;
            let mut f = [0.0; 11];
            for v in &mut f {
                *v = c.f64()?;
            }
            history.push(LogRow {
                epoch,
                parts: LossParts { phys: f[0], data: f[1], bc_periodic: f[2], bc_bounce: f[3], init: f[4] },
                total: f[5],
                weights: LossWeights { phys: f[6], data: f[7], bc: f[8], init: f[9] },
                g_ads: f[10],
            });
        }
        let checks = c.usize()?;
        let mut validation = Vec::with_capacity(checks.min(1 << 20));
        for _ in 0..checks {
            validation.push((c.usize()?, c.f64()?));
        }
        if c.pos != body.len() {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        Ok(Self {
            epoch,
            net,
            adam: Adam { m, v, t },
            best,
            history,
            validation,
            stopped_early: stopped.then_some(stop_epoch),
        })
    }

    pub fn write(&self, out: &mut impl Write) -> io::Result<()> {
        out.write_all(&self.encode())
    }

    pub fn read(input: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut b = Vec::new();
        input.read_to_end(&mut b)?;
        Self::decode(&b)
    }
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, v: f64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_vec(b: &mut Vec<u8>, v: &[f64]) {
    put_u64(b, v.len() as u64);
    v.iter().for_each(|x| put_f64(b, *x));
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Corrupt("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Corrupt("length overflow".into()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.usize()?;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(CheckpointError::Corrupt("vector longer than the file".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Normalization;

    fn sample_state() -> TrainState {
        let net = Network::new(&[5, 4], Normalization::unit(), 3).unwrap();
        let mut s = TrainState::new(&net);
        s.epoch = 17;
        s.adam.t = 17;
        s.adam.m.iter_mut().enumerate().for_each(|(k, v)| *v = k as f64 * 1e-3);
        s.adam.v.iter_mut().enumerate().for_each(|(k, v)| *v = (k as f64).sqrt() * 1e-7);
        s.best = Some(Best { epoch: 10, value: 0.25, params: net.params() });
        s.history.push(LogRow {
            epoch: 0,
            parts: LossParts { phys: 1.0, data: 2.0, bc_periodic: 3.0, bc_bounce: 4.0, init: 5.0 },
            total: 6.0,
            weights: LossWeights::default(),
            g_ads: -0.5,
        });
        s.validation = vec![(0, 0.5), (10, 0.25)];
        s.stopped_early = Some(15);
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample_state();
        let back = TrainState::decode(&s.encode()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn corruption_is_detected() {
        let mut b = sample_state().encode();
        let k = b.len() / 2;
        b[k] ^= 1;
        assert!(matches!(TrainState::decode(&b), Err(CheckpointError::Checksum)));
        assert!(matches!(TrainState::decode(b"KWETNET\0junkjunkjunkjunkjunkjunkjunkjunkjunk"), Err(CheckpointError::BadMagic)));
        assert!(TrainState::decode(&[]).is_err());
    }
}
