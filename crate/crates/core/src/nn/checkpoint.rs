//! Checkpoint byte layout, all integers and reals little-endian:
//!
//! ```text
//! magic        8 bytes  "HWLQNET\0"
//! version      u32      1
//! n_layers     u32
//! sizes        u32 × n_layers
//! train_step   u64
//! config_hash  u64
//! n_params     u64
//! params       f64 × n_params
//! adam_step    u64
//! lr beta1 beta2 eps   f64 × 4
//! adam_m       f64 × n_params
//! adam_v       f64 × n_params
//! checksum     u64      first 8 bytes of SHA-256 over everything above
//! ```

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::adam::{AdamConfig, AdamState};
use super::mlp::MlpParams;

const MAGIC: &[u8; 8] = b"HWLQNET\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub layer_sizes: Vec<usize>,
    pub training_step: u64,
    pub config_hash: u64,
}

/// Stable 64-bit fingerprint of a configuration's canonical text.
pub fn config_hash(text: &str) -> u64 {
    digest64(text.as_bytes())
}

fn digest64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn save_checkpoint(params: &MlpParams, opt: &AdamState, training_step: u64, config_hash: u64) -> Vec<u8> {
    let n = params.len();
    let mut out = Vec::with_capacity(64 + 24 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.sizes().len() as u32).to_le_bytes());
    for &s in params.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&training_step.to_le_bytes());
    out.extend_from_slice(&config_hash.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    let put = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    put(&mut out, params.as_slice());
    out.extend_from_slice(&opt.step.to_le_bytes());
    let c = opt.config;
    put(&mut out, &[c.lr, c.beta1, c.beta2, c.eps]);
    put(&mut out, &opt.m);
    put(&mut out, &opt.v);
    let sum = digest64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<(MlpParams, AdamState, CheckpointMeta)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_layers = r.u32()? as usize;
    if !(2..=64).contains(&n_layers) {
        return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
    }
    let sizes = (0..n_layers).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    let training_step = r.u64()?;
    let hash = r.u64()?;
    let n = r.u64()? as usize;
    let mut params = MlpParams::zeros(&sizes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if n != params.len() {
        return Err(Error::Checkpoint(format!("parameter count {n} does not match layer sizes {sizes:?}")));
    }
    params.as_mut_slice().copy_from_slice(&r.f64s(n)?);
    let step = r.u64()?;
    let c = r.f64s(4)?;
    let config = AdamConfig { lr: c[0], beta1: c[1], beta2: c[2], eps: c[3] };
    let m = r.f64s(n)?;
    let v = r.f64s(n)?;
    let body_end = r.pos;
    let sum = r.u64()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if digest64(&bytes[..body_end]) != sum {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let meta = CheckpointMeta { layer_sizes: sizes, training_step, config_hash: hash };
    Ok((params, AdamState { config, step, m, v }, meta))
}

/// Like [`load_checkpoint`], but fails unless the stored network has
/// exactly the given layer sizes.
pub fn load_checkpoint_for(bytes: &[u8], sizes: &[usize]) -> Result<(MlpParams, AdamState, CheckpointMeta)> {
    let loaded = load_checkpoint(bytes)?;
    if loaded.2.layer_sizes != sizes {
        return Err(Error::Checkpoint(format!(
            "layer sizes {:?} do not match expected {sizes:?}",
            loaded.2.layer_sizes
        )));
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::adam_step;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (MlpParams, AdamState) {
        let mut p = MlpParams::init(&[4, 3, 2], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut opt = AdamState::for_params(&p, AdamConfig::default());
        let g: Vec<f64> = (0..p.len()).map(|i| i as f64 * 0.1 - 0.7).collect();
        adam_step(p.as_mut_slice(), &g, &mut opt).unwrap();
        (p, opt)
    }

    #[test]
    fn round_trip_is_exact() {
        let (p, opt) = fixture();
        let bytes = save_checkpoint(&p, &opt, 42, config_hash("a = 1"));
        let (p2, opt2, meta) = load_checkpoint(&bytes).unwrap();
        assert_eq!(p2, p);
        assert_eq!(opt2, opt);
        assert_eq!(meta, CheckpointMeta { layer_sizes: vec![4, 3, 2], training_step: 42, config_hash: config_hash("a = 1") });
        assert_eq!(save_checkpoint(&p2, &opt2, 42, meta.config_hash), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let (p, opt) = fixture();
        let bytes = save_checkpoint(&p, &opt, 0, 0);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(load_checkpoint(&bad).is_err());
        let mut bad = bytes.clone();
        bad[40] ^= 1;
        assert!(load_checkpoint(&bad).is_err());
        assert!(load_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(load_checkpoint(&bad).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn layer_mismatch_is_rejected() {
        let (p, opt) = fixture();
        let bytes = save_checkpoint(&p, &opt, 0, 0);
        assert!(load_checkpoint_for(&bytes, &[4, 3, 2]).is_ok());
        assert!(load_checkpoint_for(&bytes, &[480, 256, 128, 7]).is_err());
    }
}
