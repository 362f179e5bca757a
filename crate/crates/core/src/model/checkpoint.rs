//! `LIDM1` checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "LIDM1"
//! n: u32, width: u32, depth: u32
//! activation: u8, embedding: u8 (0 scalar, 1 sinusoidal), frequencies: u32
//! target: u8 (0 epsilon, 1 velocity)
//! sigma_min: f64, sigma_max: f64
//! parameter count: u64, parameters: f64 × count
//! ```
//!
//! Parameters are stored in layer order: input layer, hidden blocks, output
//! layer, output skip.

use std::path::Path;

use super::mlp::{Activation, MLPConfig, MLPModel, SigmaEmbedding, Target};
use crate::error::{LidError, Result};
use crate::io::Reader;

pub const MODEL_MAGIC: &[u8; 5] = b"LIDM1";

pub fn model_to_bytes(model: &MLPModel) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(64 + model.param_count() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    for v in [c.n, c.width, c.depth] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(c.activation.code());
    let (kind, freqs) = match c.embedding {
        SigmaEmbedding::Scalar => (0u8, 0u32),
        SigmaEmbedding::Sinusoidal(k) => (1, k as u32),
    };
    out.push(kind);
    out.extend_from_slice(&freqs.to_le_bytes());
    out.push(match c.target {
        Target::Epsilon => 0,
        Target::Velocity => 1,
    });
    let (lo, hi) = model.sigma_range();
    out.extend_from_slice(&lo.to_le_bytes());
    out.extend_from_slice(&hi.to_le_bytes());
    out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MLPModel> {
    let mut r = Reader::new(bytes);
    if r.take(5)? != MODEL_MAGIC {
        return Err(LidError::Format("missing LIDM1 magic".into()));
    }
    let n = r.u32()? as usize;
    let width = r.u32()? as usize;
    let depth = r.u32()? as usize;
    let activation = Activation::from_code(r.u8()?)?;
    let kind = r.u8()?;
    let freqs = r.u32()? as usize;
    let embedding = match kind {
        0 => SigmaEmbedding::Scalar,
        1 => SigmaEmbedding::Sinusoidal(freqs),
        k => return Err(LidError::Format(format!("unknown embedding code {k}"))),
    };
    let target = match r.u8()? {
        0 => Target::Epsilon,
        1 => Target::Velocity,
        t => return Err(LidError::Format(format!("unknown target code {t}"))),
    };
    let lo = r.f64()?;
    let hi = r.f64()?;
    let count = r.u64()? as usize;
    if count > bytes.len() / 8 {
        return Err(LidError::Format(format!(
            "parameter count {count} exceeds file size"
        )));
    }
    let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let config = MLPConfig {
        n,
        width,
        depth,
        activation,
        embedding,
        target,
    };
    MLPModel::from_parts(config, params, (lo, hi))
}

pub fn save_model(path: &Path, model: &MLPModel) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MLPModel> {
    model_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn roundtrip() {
        let cfg = MLPConfig::new(3).with_width(5).with_depth(2);
        let mut m = MLPModel::new(cfg, 4).unwrap();
        let mut rng = RngStream::new(1, 1);
        m.params_mut().iter_mut().for_each(|p| *p += rng.normal());
        m.set_sigma_range(0.005, 1.0);
        let bytes = model_to_bytes(&m);
        assert_eq!(&bytes[..5], b"LIDM1");
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_bytes(&back), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lidm");
        save_model(&path, &m).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = MLPModel::new(MLPConfig::new(2).with_width(3).with_depth(1), 0).unwrap();
        let bytes = model_to_bytes(&m);
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(model_from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(model_from_bytes(&extra).is_err());
    }
}
