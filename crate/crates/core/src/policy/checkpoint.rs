use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{PolicyConfig, PolicyParams, TensorSpec};
use super::tape::Mat;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SKALPOL1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: PolicyConfig,
    tensors: Vec<TensorSpec>,
}

/// `MAGIC | u32 header length | header JSON | f32 LE parameters | u64 LE version`.
pub fn to_bytes(params: &PolicyParams) -> Vec<u8> {
    let header = serde_json::to_vec(&Header { config: params.config.clone(), tensors: params.specs().to_vec() })
        .expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 4 * params.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in &params.tensors {
        for v in t.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(&params.version.to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<PolicyParams> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("not a policy checkpoint"));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let len = u32::from_le_bytes(len) as usize;
    if r.len() < len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&r[..len])?;
    r = &r[len..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for spec in &header.tensors {
        let count = spec.rows * spec.cols;
        if r.len() < 4 * count {
            return Err(bad("truncated parameter block"));
        }
        let vals = r[..4 * count].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        tensors.push(Mat::from_iterator(spec.rows, spec.cols, vals));
        r = &r[4 * count..];
    }
    if r.len() != 8 {
        return Err(bad("bad trailer"));
    }
    let version = u64::from_le_bytes(r.try_into().expect("eight bytes"));
    PolicyParams::from_tensors(header.config, tensors, version)
}

pub fn save(params: &PolicyParams, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PolicyParams> {
    from_bytes(&std::fs::read(path)?)
}

impl PolicyParams {
    /// Rounds every weight to f32, matching what a checkpoint stores.
    pub fn quantize_f32(&mut self) {
        for t in &mut self.tensors {
            t.apply(|v| *v = *v as f32 as f64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_byte_stable() {
        let cfg = PolicyConfig { embed_dim: 8, heads: 2, feedforward_dim: 8, max_seq_len: 16, ..Default::default() };
        let mut p = PolicyParams::init(cfg).unwrap();
        p.version = 7;
        let bytes = to_bytes(&p);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        p.quantize_f32();
        assert_eq!(back, p);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
