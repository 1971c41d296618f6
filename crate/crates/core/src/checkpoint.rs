//! Binary checkpoints.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! b"ACGANCKP"  u32 version
//! u32 len, JSON metadata
//! u32 len, architecture spec as TOML
//! u32 network count, then per network:
//!     u8 role, u32 tensor count, then per tensor:
//!         u32 ndim, ndim x u32 dims, f32 payload
//! ```

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netspec::{ArchSpec, NetRole, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ACGANCKP";
pub const FORMAT_VERSION: u32 = 1;

/// Bookkeeping stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: String,
    pub epoch: usize,
    pub seed: u64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub spec: ArchSpec,
    pub networks: Vec<(NetRole, Vec<Tensor<f32>>)>,
}

fn role_code(r: NetRole) -> u8 {
    match r {
        NetRole::Discriminator => 0,
        NetRole::BaselineCnn => 1,
        NetRole::Generator => 2,
    }
}

fn role_from(c: u8) -> Result<NetRole> {
    Ok(match c {
        0 => NetRole::Discriminator,
        1 => NetRole::BaselineCnn,
        2 => NetRole::Generator,
        _ => return Err(Error::Checkpoint(format!("unknown network role {c}"))),
    })
}

fn bad(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

impl Checkpoint {
    /// Captures the parameters of `nets`, which must share one spec.
    pub fn capture<T: Scalar>(meta: CheckpointMeta, nets: &[&Network<T>]) -> Result<Self> {
        let spec = nets
            .first()
            .ok_or_else(|| bad("no networks to checkpoint"))?
            .spec()
            .clone();
        if nets.iter().any(|n| *n.spec() != spec) {
            return Err(bad("networks in one checkpoint must share an architecture"));
        }
        let networks = nets
            .iter()
            .map(|n| (n.role(), n.params().iter().map(Tensor::cast).collect()))
            .collect();
        Ok(Checkpoint {
            meta,
            spec,
            networks,
        })
    }

    /// Rebuilds the network stored under `role`.
    pub fn network<T: Scalar>(&self, role: NetRole) -> Result<Network<T>> {
        let (_, params) = self
            .networks
            .iter()
            .find(|(r, _)| *r == role)
            .ok_or_else(|| bad(format!("checkpoint holds no {role:?} network")))?;
        let mut net = Network::build(&self.spec, role, crate::rng::SeedStream::new(0))?;
        net.set_params(params.iter().map(Tensor::cast).collect())
            .map_err(|_| bad("stored parameters do not match the architecture"))?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LE>(FORMAT_VERSION).unwrap();
        let meta = serde_json::to_vec(&self.meta)?;
        let spec = self.spec.to_toml_string().into_bytes();
        for blob in [&meta, &spec] {
            out.write_u32::<LE>(blob.len() as u32).unwrap();
            out.write_all(blob).unwrap();
        }
        out.write_u32::<LE>(self.networks.len() as u32).unwrap();
        for (role, params) in &self.networks {
            out.write_u8(role_code(*role)).unwrap();
            out.write_u32::<LE>(params.len() as u32).unwrap();
            for t in params {
                out.write_u32::<LE>(t.shape().len() as u32).unwrap();
                for &d in t.shape() {
                    out.write_u32::<LE>(d as u32).unwrap();
                }
                for &v in t.data() {
                    out.write_f32::<LE>(v).unwrap();
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.read_u32::<LE>().map_err(bad)?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let meta: CheckpointMeta = serde_json::from_slice(&read_blob(&mut r)?)?;
        let spec_text = String::from_utf8(read_blob(&mut r)?).map_err(bad)?;
        let spec = ArchSpec::from_toml_str(&spec_text)?;
        let n = r.read_u32::<LE>().map_err(bad)?;
        let mut networks = Vec::new();
        for _ in 0..n {
            let role = role_from(r.read_u8().map_err(bad)?)?;
            let count = r.read_u32::<LE>().map_err(bad)?;
            let mut params = Vec::new();
            for _ in 0..count {
                let ndim = r.read_u32::<LE>().map_err(bad)? as usize;
                if ndim > 8 {
                    return Err(bad(format!("tensor rank {ndim} is implausible")));
                }
                let mut shape = Vec::with_capacity(ndim);
                for _ in 0..ndim {
                    shape.push(r.read_u32::<LE>().map_err(bad)? as usize);
                }
                let len = shape
                    .iter()
                    .try_fold(1usize, |a, &d| a.checked_mul(d))
                    .ok_or_else(|| bad("overflow"))?;
                let remaining = bytes.len() - r.position() as usize;
                if len.checked_mul(4).is_none_or(|b| b > remaining) {
                    return Err(bad("truncated tensor payload"));
                }
                let mut data = vec![0f32; len];
                r.read_f32_into::<LE>(&mut data).map_err(bad)?;
                params.push(Tensor::new(&shape, data)?);
            }
            networks.push((role, params));
        }
        if (r.position() as usize) != bytes.len() {
            return Err(bad("trailing bytes after checkpoint"));
        }
        Ok(Checkpoint {
            meta,
            spec,
            networks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn read_blob(r: &mut Cursor<&[u8]>) -> Result<Vec<u8>> {
    let len = r.read_u32::<LE>().map_err(bad)? as usize;
    let remaining = r.get_ref().len() - r.position() as usize;
    if len > remaining {
        return Err(bad("truncated header block"));
    }
    let mut buf = vec![0; len];
    r.read_exact(&mut buf).map_err(bad)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::tests::TINY;
    use crate::rng::SeedStream;

    fn sample() -> Checkpoint {
        let spec = ArchSpec::from_toml_str(TINY).unwrap();
        let d = Network::<f32>::build(&spec, NetRole::Discriminator, SeedStream::new(1)).unwrap();
        let g = Network::<f32>::build(&spec, NetRole::Generator, SeedStream::new(2)).unwrap();
        let meta = CheckpointMeta {
            variant: "x".into(),
            epoch: 3,
            seed: 9,
            val_accuracy: Some(0.5),
        };
        Checkpoint::capture(meta, &[&d, &g]).unwrap()
    }

    #[test]
    fn byte_round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        let d: Network<f32> = back.network(NetRole::Discriminator).unwrap();
        assert_eq!(d.params(), c.networks[0].1.as_slice());
        assert!(back.network::<f32>(NetRole::BaselineCnn).is_err());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut v = bytes.clone();
        v[8] = 2;
        assert!(Checkpoint::from_bytes(&v).is_err());
        let mut v = bytes.clone();
        v[0] = b'X';
        assert!(Checkpoint::from_bytes(&v).is_err());
        let mut v = bytes;
        v.push(0);
        assert!(Checkpoint::from_bytes(&v).is_err());
    }
}
