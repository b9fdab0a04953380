//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "GNNSTRAT"   8 bytes
//! version            u32 (1)
//! arch, variant      u8, u8
//! layers, hidden, input, classes, heads   5 x u32
//! leaky_slope        f64
//! has_theta, theta   u8, u64
//! param count        u32
//! per parameter: rows u32, cols u32, rows * cols f64 row-major
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{Arch, ModelSpec, ModelWeights, Variant};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"GNNSTRAT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub weights: ModelWeights,
    pub theta: Option<usize>,
}

fn arch_code(a: Arch) -> u8 {
    match a {
        Arch::Gcn => 0,
        Arch::Gat => 1,
        Arch::Sage => 2,
    }
}

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Baseline => 0,
        Variant::Stratified => 1,
        Variant::Random => 2,
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.weights.spec();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(arch_code(spec.arch));
        out.push(variant_code(spec.variant));
        for d in [spec.num_layers, spec.hidden_dim, spec.input_dim, spec.num_classes, spec.gat_heads] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&spec.leaky_slope.to_le_bytes());
        out.push(self.theta.is_some() as u8);
        out.extend_from_slice(&(self.theta.unwrap_or(0) as u64).to_le_bytes());
        let params = self.weights.params();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            out.extend_from_slice(&(p.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(p.cols() as u32).to_le_bytes());
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let arch = match r.u8()? {
            0 => Arch::Gcn,
            1 => Arch::Gat,
            2 => Arch::Sage,
            c => return Err(Error::Checkpoint(format!("unknown arch code {c}"))),
        };
        let variant = match r.u8()? {
            0 => Variant::Baseline,
            1 => Variant::Stratified,
            2 => Variant::Random,
            c => return Err(Error::Checkpoint(format!("unknown variant code {c}"))),
        };
        let mut spec = ModelSpec::new(arch, variant, 1, 1);
        spec.num_layers = r.u32()? as usize;
        spec.hidden_dim = r.u32()? as usize;
        spec.input_dim = r.u32()? as usize;
        spec.num_classes = r.u32()? as usize;
        spec.gat_heads = r.u32()? as usize;
        spec.leaky_slope = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let has_theta = r.u8()? != 0;
        let theta = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let raw = r.take(rows * cols * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.push(Tensor::from_vec(rows, cols, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let weights = ModelWeights::from_params(&spec, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            weights,
            theta: has_theta.then_some(theta),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("file truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
