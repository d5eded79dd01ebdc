//! Binary checkpoint container.
//!
//! Layout: the magic bytes `FLC1`, a little-endian u64 header length, a JSON
//! header, then every tensor as raw little-endian f32 in directory order.
//! Directory offsets and lengths are in bytes, relative to the payload start.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::terrain::NormStats;

use super::adam::{Adam, AdamConfig};
use super::model::{Network, Param};
use super::tensor::Tensor;
use super::ModelConfig;

pub const MAGIC: &[u8; 4] = b"FLC1";
pub const VERSION: u32 = 1;

/// Trained weights plus everything needed to resume or predict.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub norm_stats: NormStats,
    pub params: Vec<Param<f32>>,
    pub adam: Adam<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamHeader {
    step: u64,
    #[serde(flatten)]
    config: AdamConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    config_hash: String,
    norm_stats: NormStats,
    r_ref: f64,
    adam: AdamHeader,
    tensors: Vec<TensorEntry>,
}

/// sha256 of the config's JSON encoding, hex.
pub fn config_hash(config: &ModelConfig) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

fn corrupt<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint(msg.into()))
}

impl Checkpoint {
    pub fn new(net: &Network<f32>, adam: &Adam<f32>, norm_stats: NormStats) -> Self {
        Checkpoint { config: net.config().clone(), norm_stats, params: net.params().to_vec(), adam: adam.clone() }
    }

    pub fn network(&self) -> Result<Network<f32>> {
        Network::from_params(&self.config, self.params.clone())
    }

    /// (name, shape) of every stored tensor, in payload order.
    fn directory(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> =
            self.params.iter().map(|p| (p.name.clone(), p.value.shape().to_vec())).collect();
        for kind in ["m", "v"] {
            out.extend(self.params.iter().map(|p| (format!("adam.{kind}.{}", p.name), p.value.shape().to_vec())));
        }
        out
    }
}

/// Serialises a checkpoint.
pub fn write_checkpoint(ck: &Checkpoint, mut out: impl Write) -> Result<()> {
    let moments_fit = |bufs: &[Vec<f32>]| bufs.len() == ck.params.len() && bufs.iter().zip(&ck.params).all(|(b, p)| b.len() == p.value.len());
    if !moments_fit(&ck.adam.m) || !moments_fit(&ck.adam.v) {
        return corrupt("optimizer state does not match the parameter list");
    }
    let mut tensors = Vec::new();
    let mut offset = 0u64;
    for (name, shape) in ck.directory() {
        let len = 4 * shape.iter().product::<usize>() as u64;
        tensors.push(TensorEntry { name, shape, offset, len });
        offset += len;
    }
    let header = Header {
        version: VERSION,
        config: ck.config.clone(),
        config_hash: config_hash(&ck.config)?,
        norm_stats: ck.norm_stats,
        r_ref: ck.config.r_ref,
        adam: AdamHeader { step: ck.adam.step, config: ck.adam.config },
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let payloads = ck.params.iter().map(|p| p.value.data()).chain(ck.adam.m.iter().map(Vec::as_slice)).chain(ck.adam.v.iter().map(Vec::as_slice));
    for data in payloads {
        let mut buf = Vec::with_capacity(data.len() * 4);
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Parses and validates a checkpoint.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return corrupt("bad magic bytes");
    }
    let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let body = &bytes[12..];
    if hlen > body.len() as u64 {
        return corrupt(format!("header of {hlen} bytes exceeds the file"));
    }
    let (json, payload) = body.split_at(hlen as usize);
    let header: Header = serde_json::from_slice(json)?;
    if header.version != VERSION {
        return corrupt(format!("unsupported version {}", header.version));
    }
    if header.config_hash != config_hash(&header.config)? {
        return corrupt("config hash mismatch");
    }
    header.config.validate()?;
    if header.r_ref.to_bits() != header.config.r_ref.to_bits() {
        return corrupt("r_ref disagrees with the stored config");
    }

    let mut expected = 0u64;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        if e.offset != expected || e.len != 4 * n as u64 {
            return corrupt(format!("tensor `{}`: directory entry does not match its shape or position", e.name));
        }
        expected += e.len;
        let end = e.offset + e.len;
        if end > payload.len() as u64 {
            return corrupt(format!("payload truncated in tensor `{}`", e.name));
        }
        let data = payload[e.offset as usize..end as usize]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        tensors.push((e.name.clone(), Tensor::from_vec(&e.shape, data)?));
    }
    if expected != payload.len() as u64 {
        return corrupt(format!("{} trailing payload bytes", payload.len() as u64 - expected));
    }
    if tensors.len() % 3 != 0 {
        return corrupt("tensor directory is not weights + two moment sets");
    }
    let n = tensors.len() / 3;
    let v_part = tensors.split_off(2 * n);
    let m_part = tensors.split_off(n);
    let params: Vec<Param<f32>> = tensors.into_iter().map(|(name, value)| Param { name, value }).collect();
    let mut adam = Adam::new(header.adam.config, &[]);
    adam.step = header.adam.step;
    for (kind, part, dst) in [("m", m_part, &mut adam.m), ("v", v_part, &mut adam.v)] {
        for ((name, t), p) in part.into_iter().zip(&params) {
            if name != format!("adam.{kind}.{}", p.name) || t.shape() != p.value.shape() {
                return corrupt(format!("optimizer tensor `{name}` does not match parameter `{}`", p.name));
            }
            dst.push(t.into_data());
        }
    }
    // validates names and shapes against the architecture
    Network::from_params(&header.config, params.clone())?;
    Ok(Checkpoint { config: header.config, norm_stats: header.norm_stats, params, adam })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(ck, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Range;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig { patch_size: 32, widths: vec![3], ..ModelConfig::default() };
        let net = Network::<f32>::init(&cfg, 1).unwrap();
        let sizes: Vec<usize> = net.params().iter().map(|p| p.value.len()).collect();
        let mut adam = Adam::new(AdamConfig::default(), &sizes);
        let grads: Vec<Vec<f32>> = sizes.iter().map(|&n| (0..n).map(|i| (i as f32).sin()).collect()).collect();
        let mut net2 = net.clone();
        adam.update(net2.params_mut().iter_mut().map(|p| p.value.data_mut()), &grads).unwrap();
        let r = Range { min: -1.5, max: 0.1 + 0.2 };
        Checkpoint::new(&net2, &adam, NormStats { elevation: r, slope: r, aspect: r, curvature: r })
    }

    fn bytes(ck: &Checkpoint) -> Vec<u8> {
        let mut b = Vec::new();
        write_checkpoint(ck, &mut b).unwrap();
        b
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ck = sample();
        let b = bytes(&ck);
        let back = read_checkpoint(&b).unwrap();
        assert_eq!(back, ck);
        assert_eq!(bytes(&back), b);
    }

    #[test]
    fn rejects_corruption() {
        let b = bytes(&sample());
        assert!(read_checkpoint(&b[..b.len() - 1]).is_err());
        assert!(read_checkpoint(&b[..20]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra).is_err());
        let mut magic = b.clone();
        magic[0] = b'X';
        assert!(read_checkpoint(&magic).is_err());
    }

    fn edit_header(b: &[u8], f: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
        let hlen = u64::from_le_bytes(b[4..12].try_into().unwrap()) as usize;
        let mut v: serde_json::Value = serde_json::from_slice(&b[12..12 + hlen]).unwrap();
        f(&mut v);
        let json = serde_json::to_vec(&v).unwrap();
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&b[12 + hlen..]);
        out
    }

    #[test]
    fn rejects_header_mismatches() {
        let b = bytes(&sample());
        assert!(read_checkpoint(&edit_header(&b, |_| {})).is_ok());
        assert!(read_checkpoint(&edit_header(&b, |v| v["version"] = 2.into())).is_err());
        assert!(read_checkpoint(&edit_header(&b, |v| v["config"]["loss_c"] = (-2.0).into())).is_err());
        assert!(read_checkpoint(&edit_header(&b, |v| v["tensors"][0]["shape"][0] = 1.into())).is_err());
        assert!(read_checkpoint(&edit_header(&b, |v| v["tensors"][1]["name"] = "x".into())).is_err());
    }
}
