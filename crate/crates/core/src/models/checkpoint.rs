use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: usize,
}

/// Layout: header length as u64 LE, JSON header, then f64 LE payload.
pub fn save_params(params: &ParamSet) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(params.len());
    let mut payload = Vec::with_capacity(params.num_scalars() * 8);
    for (name, t) in params.iter() {
        entries.push(Entry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: payload.len(),
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&entries).map_err(|e| Error::Data(format!("checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn load_params(bytes: &[u8]) -> Result<ParamSet> {
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::format(bytes.len(), "checkpoint shorter than its length prefix"))?;
    let hlen = u64::from_le_bytes(len_bytes) as usize;
    let header = bytes
        .get(8..8usize.saturating_add(hlen))
        .ok_or_else(|| Error::format(bytes.len(), format!("checkpoint header of {hlen} bytes truncated")))?;
    let entries: Vec<Entry> =
        serde_json::from_slice(header).map_err(|e| Error::format(8, format!("checkpoint header: {e}")))?;
    let base = 8 + hlen;
    let mut params = ParamSet::new();
    for e in entries {
        let n: usize = e.shape.iter().product();
        let start = base + e.offset;
        let raw = bytes
            .get(start..start + 8 * n)
            .ok_or_else(|| Error::format(bytes.len(), format!("payload for {} truncated", e.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        params.insert(e.name, Tensor::new(e.shape, data)?);
    }
    Ok(params)
}
