//! Binary artifacts: snapshots, datasets and trained models.
//!
//! Every file starts with an 8-byte magic and a `u8` version, carries the
//! SHA-256 hash of the run configuration that produced it, stores numbers
//! little-endian and ends with a SHA-256 digest of all preceding bytes.
//!
//! Snapshot (`KWETSNAP`, version 1): `u8` dtype tag (8 = f64), `u8` flags
//! (bit 0 distributions present, bit 1 extrapolated beyond the trained
//! horizon), `u32` nx, `u32` ny, `u64` time, config hash, then the ρ, u and v
//! grids row-major with `x` fastest, then the optional 9-channel population
//! grid channel-major.
//!
//! Dataset (`KWETDATA`, version 1): config hash, `f64` horizon, `u32` nx,
//! `u32` ny, `f64` validation fraction, `u64` seed, `u8` densify, `u64`
//! count, then per observation `x y t ρ u v` as `f64` and a `u8` split flag
//! (1 = validation).
//!
//! Model (`KWETMODL`, version 1): config hash, `f64` horizon, `u32` nx,
//! `u32` ny, `u64` length and an embedded network checkpoint.

use std::fs;
use std::path::{Path, PathBuf};

use kwet_core::lbm::{DistributionField, MacroField, Snapshot};
use kwet_pinn::autodiff::{decode, encode, Network};
use kwet_pinn::kpinn_loss::{DataSet, Observation};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KWETSNAP";
pub const DATASET_MAGIC: &[u8; 8] = b"KWETDATA";
pub const MODEL_MAGIC: &[u8; 8] = b"KWETMODL";
pub const FORMAT_VERSION: u8 = 1;
pub const DTYPE_F64: u8 = 8;

const FLAG_DISTRIBUTIONS: u8 = 1;
const FLAG_EXTRAPOLATED: u8 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("wrong file type (expected {0})")]
    BadMagic(&'static str),
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("unsupported dtype tag {0}")]
    Dtype(u8),
    #[error("checksum mismatch")]
    Checksum,
    #[error("corrupt file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub snapshot: Snapshot<f64>,
    /// Set on predictions past the latest training time.
    pub extrapolated: bool,
}

impl SnapshotFile {
    pub fn encode(&self) -> Vec<u8> {
        let s = &self.snapshot;
        let f = &s.fields;
        let mut w = Writer::new(SNAPSHOT_MAGIC);
        w.u8(DTYPE_F64);
        let mut flags = 0;
        if s.distributions.is_some() {
            flags |= FLAG_DISTRIBUTIONS;
        }
        if self.extrapolated {
            flags |= FLAG_EXTRAPOLATED;
        }
        w.u8(flags);
        w.u32(f.nx as u32);
        w.u32(f.ny as u32);
        w.u64(s.time);
        w.bytes(&s.config_hash);
        for grid in [&f.rho, &f.ux, &f.uy] {
            w.f64s(grid);
        }
        if let Some(d) = &s.distributions {
            w.f64s(&d.data);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::open(bytes, SNAPSHOT_MAGIC, "snapshot")?;
        let dtype = r.u8()?;
        if dtype != DTYPE_F64 {
            return Err(FormatError::Dtype(dtype));
        }
        let flags = r.u8()?;
        if flags & !(FLAG_DISTRIBUTIONS | FLAG_EXTRAPOLATED) != 0 {
            return Err(FormatError::Corrupt(format!("unknown flags {flags:#x}")));
        }
        let (nx, ny) = (r.u32()? as usize, r.u32()? as usize);
        let time = r.u64()?;
        let config_hash = r.hash()?;
        let cells = nx.checked_mul(ny).ok_or_else(|| FormatError::Corrupt("dimensions overflow".into()))?;
        let channels = if flags & FLAG_DISTRIBUTIONS != 0 { 12 } else { 3 };
        if r.remaining() != cells.saturating_mul(channels).saturating_mul(8) {
            return Err(FormatError::Corrupt(format!("payload does not match {nx} x {ny}")));
        }
        let fields = MacroField { nx, ny, rho: r.f64s(cells)?, ux: r.f64s(cells)?, uy: r.f64s(cells)? };
        let distributions = if flags & FLAG_DISTRIBUTIONS != 0 {
            Some(DistributionField { nx, ny, data: r.f64s(9 * cells)? })
        } else {
            None
        };
        r.end()?;
        Ok(Self {
            snapshot: Snapshot { time, fields, distributions, config_hash },
            extrapolated: flags & FLAG_EXTRAPOLATED != 0,
        })
    }
}

/// Observations with their split, plus what is needed to rebuild the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub config_hash: [u8; 32],
    pub horizon: f64,
    pub nx: usize,
    pub ny: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub densify: bool,
    pub data: DataSet<f64>,
}

impl DatasetFile {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(DATASET_MAGIC);
        w.bytes(&self.config_hash);
        w.f64(self.horizon);
        w.u32(self.nx as u32);
        w.u32(self.ny as u32);
        w.f64(self.validation_fraction);
        w.u64(self.seed);
        w.u8(self.densify as u8);
        w.u64(self.data.observations.len() as u64);
        for (o, &v) in self.data.observations.iter().zip(&self.data.validation) {
            w.f64s(&[o.point[0], o.point[1], o.point[2], o.rho, o.u[0], o.u[1]]);
            w.u8(v as u8);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::open(bytes, DATASET_MAGIC, "dataset")?;
        let config_hash = r.hash()?;
        let horizon = r.f64()?;
        let (nx, ny) = (r.u32()? as usize, r.u32()? as usize);
        let validation_fraction = r.f64()?;
        let seed = r.u64()?;
        let densify = r.u8()? != 0;
        let n = r.u64()? as usize;
        if r.remaining() != n.saturating_mul(49) {
            return Err(FormatError::Corrupt("observation count does not match the payload".into()));
        }
        let mut observations = Vec::with_capacity(n);
        let mut validation = Vec::with_capacity(n);
        for _ in 0..n {
            let v = r.f64s(6)?;
            observations.push(Observation { point: [v[0], v[1], v[2]], rho: v[3], u: [v[4], v[5]] });
            validation.push(r.u8()? != 0);
        }
        r.end()?;
        Ok(Self {
            config_hash,
            horizon,
            nx,
            ny,
            validation_fraction,
            seed,
            densify,
            data: DataSet { observations, validation },
        })
    }
}

/// A trained network with the domain and horizon it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config_hash: [u8; 32],
    pub horizon: f64,
    pub nx: usize,
    pub ny: usize,
    pub net: Network<f64>,
}

impl ModelFile {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(MODEL_MAGIC);
        w.bytes(&self.config_hash);
        w.f64(self.horizon);
        w.u32(self.nx as u32);
        w.u32(self.ny as u32);
        let net = encode(&self.net);
        w.u64(net.len() as u64);
        w.bytes(&net);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::open(bytes, MODEL_MAGIC, "model")?;
        let config_hash = r.hash()?;
        let horizon = r.f64()?;
        let (nx, ny) = (r.u32()? as usize, r.u32()? as usize);
        let len = r.u64()? as usize;
        let net = decode::<f64>(r.take(len)?).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        r.end()?;
        Ok(Self { config_hash, horizon, nx, ny, net })
    }
}

/// File name of the snapshot at `time` inside a snapshot directory.
pub fn snapshot_name(time: u64) -> String {
    format!("snap_{time:08}.kwsnap")
}

/// Snapshot files of a directory, sorted by name (and therefore by time).
pub fn snapshot_paths(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "kwsnap"))
        .collect();
    paths.sort();
    Ok(paths)
}

struct Writer {
    b: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        let mut b = magic.to_vec();
        b.push(FORMAT_VERSION);
        Self { b }
    }
    fn u8(&mut self, v: u8) {
        self.b.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.b.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.b.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.b.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.b.reserve(8 * v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    fn bytes(&mut self, v: &[u8]) {
        self.b.extend_from_slice(v);
    }
    fn finish(mut self) -> Vec<u8> {
        let d = Sha256::digest(&self.b);
        self.b.extend_from_slice(&d);
        self.b
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 8], what: &'static str) -> Result<Self, FormatError> {
        if bytes.len() < 8 || &bytes[..8] != magic {
            return Err(FormatError::BadMagic(what));
        }
        if bytes.len() < 9 + 32 {
            return Err(FormatError::Corrupt("truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(FormatError::Checksum);
        }
        if body[8] != FORMAT_VERSION {
            return Err(FormatError::Version(body[8]));
        }
        Ok(Self { b: body, pos: 9 })
    }
    fn remaining(&self) -> usize {
        self.b.len() - self.pos
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if n > self.remaining() {
            return Err(FormatError::Corrupt("truncated".into()));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| FormatError::Corrupt("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn hash(&mut self) -> Result<[u8; 32], FormatError> {
        Ok(self.take(32)?.try_into().unwrap())
    }
    fn end(&self) -> Result<(), FormatError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(FormatError::Corrupt("trailing bytes".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kwet_pinn::autodiff::Normalization;

    fn snapshot(with_f: bool) -> SnapshotFile {
        let (nx, ny) = (5, 3);
        let grid = |k: f64| (0..nx * ny).map(|n| k * n as f64 + 0.1).collect::<Vec<_>>();
        SnapshotFile {
            snapshot: Snapshot {
                time: 1200,
                fields: MacroField { nx, ny, rho: grid(1.0), ux: grid(-0.01), uy: grid(1e-3) },
                distributions: with_f.then(|| DistributionField { nx, ny, data: (0..9 * nx * ny).map(|k| k as f64 / 7.0).collect() }),
                config_hash: [7; 32],
            },
            extrapolated: !with_f,
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        for with_f in [false, true] {
            let s = snapshot(with_f);
            let bytes = s.encode();
            let back = SnapshotFile::decode(&bytes).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.encode(), bytes);
        }
    }

    #[test]
    fn snapshot_damage_is_detected() {
        let bytes = snapshot(true).encode();
        let mut flipped = bytes.clone();
        flipped[60] ^= 0x10;
        assert_eq!(SnapshotFile::decode(&flipped), Err(FormatError::Checksum));
        assert_eq!(SnapshotFile::decode(&bytes[..bytes.len() - 1]), Err(FormatError::Checksum));
        assert_eq!(SnapshotFile::decode(b"KWETDATA\x01"), Err(FormatError::BadMagic("snapshot")));
    }

    #[test]
    fn snapshot_dims_must_match_the_payload() {
        // rewrite nx with a consistent checksum
        let mut bytes = snapshot(false).encode();
        bytes.truncate(bytes.len() - 32);
        bytes[11..15].copy_from_slice(&6u32.to_le_bytes());
        let d = Sha256::digest(&bytes);
        bytes.extend_from_slice(&d);
        assert!(matches!(SnapshotFile::decode(&bytes), Err(FormatError::Corrupt(_))));
    }

    #[test]
    fn future_versions_are_rejected() {
        let mut bytes = snapshot(false).encode();
        bytes.truncate(bytes.len() - 32);
        bytes[8] = 2;
        let d = Sha256::digest(&bytes);
        bytes.extend_from_slice(&d);
        assert_eq!(SnapshotFile::decode(&bytes), Err(FormatError::Version(2)));
    }

    #[test]
    fn dataset_and_model_round_trip() {
        let obs = (0..10)
            .map(|k| Observation { point: [k as f64, 2.0, 100.0], rho: 0.4 + k as f64, u: [1e-3, -2e-3] })
            .collect();
        let d = DatasetFile {
            config_hash: [3; 32],
            horizon: 2000.0,
            nx: 100,
            ny: 100,
            validation_fraction: 0.1,
            seed: 9,
            densify: true,
            data: DataSet::split(obs, 0.1, 9),
        };
        assert_eq!(DatasetFile::decode(&d.encode()).unwrap(), d);

        let net = Network::new(&[6, 5], Normalization::new([0.0; 3], [10.0, 9.0, 50.0]).unwrap(), 4).unwrap();
        let m = ModelFile { config_hash: [1; 32], horizon: 50.0, nx: 10, ny: 10, net };
        assert_eq!(ModelFile::decode(&m.encode()).unwrap(), m);
        assert!(matches!(ModelFile::decode(&d.encode()), Err(FormatError::BadMagic("model"))));
    }
}
