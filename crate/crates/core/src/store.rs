//! Posterior sample collections and their on-disk format.
//!
//! Binary layout (little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `BNNS` |
//! | 4 | format version, `u32` |
//! | 8 | parameter count, `u64` |
//! | 8 | sample count, `u64` |
//! | 8·P·K | samples, row-major `f64` |
//!
//! Metadata (method, chain id, acceptance history, configuration snapshot)
//! lives in a JSON sidecar next to the binary file with extension `.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterVector;

pub const MAGIC: &[u8; 4] = b"BNNS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptRecord {
    pub p_accept: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    /// Producing method, e.g. `hmc`, `sgld`, `sghmc`.
    pub method: String,
    pub chain_id: usize,
    pub seed: u64,
    pub accept_rate: f64,
    #[serde(default)]
    pub accept_history: Vec<AcceptRecord>,
    /// Accept probabilities evaluated (but not applied) during burn-in.
    #[serde(default)]
    pub burnin_accept_probs: Vec<f64>,
    /// Resolved configuration of the producing run.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleStore {
    pub samples: Vec<ParameterVector>,
    pub meta: StoreMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    param_count: u64,
    sample_count: u64,
    #[serde(flatten)]
    meta: StoreMeta,
}

impl SampleStore {
    pub fn new(samples: Vec<ParameterVector>, meta: StoreMeta) -> Result<Self> {
        let store = SampleStore { samples, meta };
        store.check()?;
        Ok(store)
    }

    fn check(&self) -> Result<()> {
        let p = self.param_count();
        for (k, s) in self.samples.iter().enumerate() {
            if s.len() != p {
                return Err(Error::Format(format!("sample {k} has length {}, expected {p}", s.len())));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("stored sample {k}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn accept_rate(&self) -> f64 {
        self.meta.accept_rate
    }

    /// Samples `range` as a new store with the same metadata.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SampleStore {
        SampleStore {
            samples: self.samples[range].to_vec(),
            meta: self.meta.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.param_count() as u64).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for s in &self.samples {
            for v in s.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        let sidecar = Sidecar {
            format_version: FORMAT_VERSION,
            param_count: self.param_count() as u64,
            sample_count: self.len() as u64,
            meta: self.meta.clone(),
        };
        let mut f = BufWriter::new(File::create(sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<SampleStore> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("{}: bad magic {magic:?}", path.display())));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("{}: unsupported version {version}", path.display())));
        }
        let p = read_u64(&mut r)? as usize;
        let k = read_u64(&mut r)? as usize;
        let mut buf = vec![0u8; 8 * p];
        let mut samples = Vec::with_capacity(k);
        for i in 0..k {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format(format!("{}: truncated at sample {i} of {k}", path.display())))?;
            let values: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            samples.push(ParameterVector::new(values)?);
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format(format!("{}: trailing bytes after {k} samples", path.display())));
        }
        let sc = sidecar_path(path);
        let meta = if sc.exists() {
            let side: Sidecar = serde_json::from_reader(BufReader::new(File::open(&sc)?))?;
            if side.param_count as usize != p || side.sample_count as usize != k {
                return Err(Error::Format(format!("{}: sidecar does not match binary", sc.display())));
            }
            side.meta
        } else {
            StoreMeta {
                method: "unknown".into(),
                chain_id: 0,
                seed: 0,
                accept_rate: f64::NAN,
                accept_history: Vec::new(),
                burnin_accept_probs: Vec::new(),
                config: serde_json::Value::Null,
            }
        };
        Ok(SampleStore { samples, meta })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u64::from_le_bytes(b))
}
