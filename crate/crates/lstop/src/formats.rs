//! Binary file formats: datasets (`LSTP`), predictive-model checkpoints
//! (`LSTW`), and policy checkpoints (`LSTQ`). All integers and reals are
//! little-endian; layouts are fixed and byte-exact for reproducibility.

use std::fs;
use std::io::Write;
use std::path::Path;

use lstop_core::data::{Dataset, DatasetMeta, SparseInstance};
use lstop_core::lista::{ListaLayer, ListaParams};
use lstop_core::mat::DenseMat;
use lstop_core::policy::{FeatureMode, PolicyParams};
use thiserror::Error;

pub const DATASET_MAGIC: [u8; 4] = *b"LSTP";
pub const THETA_MAGIC: [u8; 4] = *b"LSTW";
pub const POLICY_MAGIC: [u8; 4] = *b"LSTQ";

pub const DATASET_VERSION: u16 = 1;
pub const THETA_VERSION: u16 = 1;
/// Version 1 is the raw-feature policy; version 2 appends a feature-mode
/// word to carry the residual-augmented variant.
pub const POLICY_VERSION_RAW: u16 = 1;
pub const POLICY_VERSION_AUG: u16 = 2;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (supported: {supported})")]
    BadVersion { found: u16, supported: &'static str },
    #[error("file truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated {
        needed: usize,
        offset: usize,
        len: usize,
    },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("inconsistent dimensions: {0}")]
    BadDims(String),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated {
                needed: n,
                offset: self.pos,
                len: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let got = self.take(4)?;
        let found = [got[0], got[1], got[2], got[3]];
        if found != expected {
            return Err(FormatError::BadMagic { expected, found });
        }
        Ok(())
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64_vec(&mut self, len: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| {
            FormatError::BadDims(format!("vector of {len} reals overflows"))
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    fn finish(self) -> Result<(), FormatError> {
        let rest = self.buf.len() - self.pos;
        if rest != 0 {
            return Err(FormatError::TrailingBytes(rest));
        }
        Ok(())
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    fn f64_slice(&mut self, v: &[f64]) {
        self.buf.reserve(v.len() * 8);
        for &x in v {
            self.f64(x);
        }
    }

    fn write_to(self, path: &Path) -> Result<(), FormatError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.buf)?;
        Ok(())
    }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), FormatError> {
    let mut w = Writer::new();
    w.bytes(&DATASET_MAGIC);
    w.u16(DATASET_VERSION);
    w.u32(ds.m() as u32);
    w.u32(ds.n() as u32);
    w.u32(ds.instances.len() as u32);
    w.f64(ds.meta.p_b);
    w.u64(ds.meta.seed);
    w.f64_slice(ds.a.data());
    for inst in &ds.instances {
        w.f64(inst.snr_db);
        w.u64(inst.instance_seed);
        w.f64_slice(&inst.b);
        w.f64_slice(&inst.x_star);
    }
    w.write_to(path)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, FormatError> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(DATASET_MAGIC)?;
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(FormatError::BadVersion {
            found: version,
            supported: "1",
        });
    }
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let count = r.u32()? as usize;
    let p_b = r.f64()?;
    let seed = r.u64()?;
    let a_len = m
        .checked_mul(n)
        .ok_or_else(|| FormatError::BadDims(format!("{m}x{n} matrix overflows")))?;
    let a = DenseMat::new(m, n, r.f64_vec(a_len)?);
    let mut instances = Vec::with_capacity(count);
    for _ in 0..count {
        let snr_db = r.f64()?;
        let instance_seed = r.u64()?;
        let b = r.f64_vec(m)?;
        let x_star = r.f64_vec(n)?;
        instances.push(SparseInstance {
            b,
            x_star,
            snr_db,
            instance_seed,
        });
    }
    r.finish()?;
    Ok(Dataset {
        a,
        instances,
        meta: DatasetMeta { p_b, seed },
    })
}

pub fn write_theta(theta: &ListaParams, path: &Path) -> Result<(), FormatError> {
    let mut w = Writer::new();
    w.bytes(&THETA_MAGIC);
    w.u16(THETA_VERSION);
    w.u32(theta.depth() as u32);
    w.u32(theta.measurement_dim() as u32);
    w.u32(theta.signal_dim() as u32);
    for l in &theta.layers {
        w.f64(l.lambda);
        w.f64_slice(l.w1.data());
        w.f64_slice(l.w2.data());
    }
    w.write_to(path)
}

pub fn read_theta(path: &Path) -> Result<ListaParams, FormatError> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(THETA_MAGIC)?;
    let version = r.u16()?;
    if version != THETA_VERSION {
        return Err(FormatError::BadVersion {
            found: version,
            supported: "1",
        });
    }
    let depth = r.u32()? as usize;
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    if depth == 0 || m == 0 || n == 0 {
        return Err(FormatError::BadDims(format!(
            "empty model: T={depth} m={m} n={n}"
        )));
    }
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let lambda = r.f64()?;
        let w1 = DenseMat::new(n, m, r.f64_vec(n * m)?);
        let w2 = DenseMat::new(n, n, r.f64_vec(n * n)?);
        layers.push(ListaLayer { lambda, w1, w2 });
    }
    r.finish()?;
    Ok(ListaParams { layers })
}

pub fn write_policy(phi: &PolicyParams, path: &Path) -> Result<(), FormatError> {
    let (h1, h2) = phi.hidden_dims();
    let mut w = Writer::new();
    w.bytes(&POLICY_MAGIC);
    match phi.feature_mode {
        FeatureMode::Raw => w.u16(POLICY_VERSION_RAW),
        FeatureMode::ResidualAugmented => w.u16(POLICY_VERSION_AUG),
    }
    w.u32(h1 as u32);
    w.u32(h2 as u32);
    w.u32(phi.measurement_dim as u32);
    w.u32(phi.signal_dim as u32);
    w.u32(phi.stop_positions() as u32);
    if phi.feature_mode == FeatureMode::ResidualAugmented {
        w.u32(1);
    }
    w.f64_slice(phi.w_in.data());
    w.f64_slice(&phi.b_in);
    w.f64_slice(phi.w_mid.data());
    w.f64_slice(&phi.b_mid);
    w.f64_slice(&phi.w_out);
    w.f64(phi.b_out);
    for e in &phi.layer_embed {
        w.f64_slice(e);
    }
    w.write_to(path)
}

pub fn read_policy(path: &Path) -> Result<PolicyParams, FormatError> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic(POLICY_MAGIC)?;
    let version = r.u16()?;
    if version != POLICY_VERSION_RAW && version != POLICY_VERSION_AUG {
        return Err(FormatError::BadVersion {
            found: version,
            supported: "1, 2",
        });
    }
    let h1 = r.u32()? as usize;
    let h2 = r.u32()? as usize;
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let t = r.u32()? as usize;
    if h1 == 0 || h2 == 0 || t == 0 {
        return Err(FormatError::BadDims(format!(
            "empty policy: h1={h1} h2={h2} T={t}"
        )));
    }
    let feature_mode = if version == POLICY_VERSION_AUG {
        match r.u32()? {
            1 => FeatureMode::ResidualAugmented,
            other => {
                return Err(FormatError::BadDims(format!(
                    "unknown feature-mode word {other}"
                )))
            }
        }
    } else {
        FeatureMode::Raw
    };
    let in_dim = lstop_core::policy::input_dim(feature_mode, m, n);
    let w_in = DenseMat::new(h1, in_dim, r.f64_vec(h1 * in_dim)?);
    let b_in = r.f64_vec(h1)?;
    let w_mid = DenseMat::new(h2, h1, r.f64_vec(h2 * h1)?);
    let b_mid = r.f64_vec(h2)?;
    let w_out = r.f64_vec(h2)?;
    let b_out = r.f64()?;
    let mut layer_embed = Vec::with_capacity(t - 1);
    for _ in 0..t - 1 {
        layer_embed.push(r.f64_vec(h2)?);
    }
    r.finish()?;
    Ok(PolicyParams {
        w_in,
        b_in,
        w_mid,
        b_mid,
        w_out,
        b_out,
        layer_embed,
        feature_mode,
        measurement_dim: m,
        signal_dim: n,
    })
}
