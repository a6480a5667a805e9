//! Binary parameter snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "MDNCSNP1"
//! tag_len    u8
//! tag        tag_len bytes of UTF-8
//! n_sizes    u32
//! sizes      n_sizes x u32
//! n_params   u64
//! params     n_params x f64
//! ```

use std::io::{Read, Write};

use super::{param_count, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MDNCSNP1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tag: String,
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Snapshot {
    pub fn of<T: Scalar>(tag: &str, net: &Network<T>) -> Self {
        Self {
            tag: tag.to_string(),
            layer_sizes: net.layer_sizes().to_vec(),
            params: net.params().iter().map(|p| p.as_f64()).collect(),
        }
    }

    pub fn to_network<T: Scalar>(&self) -> Result<Network<T>> {
        Network::from_params(
            &self.layer_sizes,
            self.params.iter().map(|&p| T::lit(p)).collect(),
        )
    }

    /// Like [`Snapshot::to_network`] but insists on the expected tag.
    pub fn expect_network<T: Scalar>(&self, tag: &str) -> Result<Network<T>> {
        if self.tag != tag {
            return Err(Error::Snapshot(format!(
                "expected tag {tag:?}, found {:?}",
                self.tag
            )));
        }
        self.to_network()
    }
}

pub fn write_snapshot<W: Write>(mut w: W, snap: &Snapshot) -> Result<()> {
    let tag = snap.tag.as_bytes();
    let tag_len = u8::try_from(tag.len())
        .map_err(|_| Error::Snapshot(format!("tag too long: {}", snap.tag)))?;
    w.write_all(MAGIC)?;
    w.write_all(&[tag_len])?;
    w.write_all(tag)?;
    w.write_all(&(snap.layer_sizes.len() as u32).to_le_bytes())?;
    for &s in &snap.layer_sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&(snap.params.len() as u64).to_le_bytes())?;
    for &p in &snap.params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Snapshot(format!("truncated snapshot: {e}")))?;
    Ok(buf)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    if &read_array::<8, _>(&mut r)? != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let [tag_len] = read_array::<1, _>(&mut r)?;
    let mut tag = vec![0u8; tag_len as usize];
    r.read_exact(&mut tag)
        .map_err(|e| Error::Snapshot(format!("truncated tag: {e}")))?;
    let tag = String::from_utf8(tag).map_err(|_| Error::Snapshot("tag is not UTF-8".into()))?;
    let n_sizes = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if n_sizes > 1024 {
        return Err(Error::Snapshot(format!("implausible layer count {n_sizes}")));
    }
    let layer_sizes = (0..n_sizes)
        .map(|_| Ok(u32::from_le_bytes(read_array(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_params = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if n_sizes < 2 || n_params != param_count(&layer_sizes) {
        return Err(Error::Snapshot(format!(
            "parameter count {n_params} inconsistent with layers {layer_sizes:?}"
        )));
    }
    let params = (0..n_params)
        .map(|_| Ok(f64::from_le_bytes(read_array(&mut r)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshot {
        tag,
        layer_sizes,
        params,
    })
}
