//! `.odrl` binary layout, little-endian:
//!
//! ```text
//! "ODRL"        4 bytes
//! version       u32 (= 1)
//! state_dim     u32
//! action_dim    u32
//! count         u64
//! count × (s[state_dim], a[action_dim], r, s_next[state_dim], done) as f64
//! ```
//!
//! Metadata lives in a JSON sidecar at `<path>.meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DatagenError, DatasetMeta, OfflineDataset, Transitions};

pub const MAGIC: &[u8; 4] = b"ODRL";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn encode(t: &Transitions) -> Result<Vec<u8>, DatagenError> {
    if t.is_empty() {
        return Err(DatagenError::Empty);
    }
    let record = 2 * t.state_dim() + t.action_dim() + 2;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * record * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.state_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(t.action_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(t.len() as u64).to_le_bytes());
    for tr in t.iter() {
        let done = if tr.done { 1.0f64 } else { 0.0 };
        for v in
            tr.s.iter()
                .chain(tr.a)
                .chain([&tr.r])
                .chain(tr.s_next)
                .chain([&done])
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Transitions, DatagenError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(DatagenError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DatagenError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(DatagenError::UnsupportedVersion(version));
    }
    let (sd, ad) = (u32_at(8) as usize, u32_at(12) as usize);
    let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    if count == 0 {
        return Err(DatagenError::Empty);
    }
    let record = 2 * sd + ad + 2;
    let expected = record
        .checked_mul(count)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(DatagenError::Truncated {
            expected: usize::MAX,
            found: bytes.len(),
        })?;
    if bytes.len() < expected {
        return Err(DatagenError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DatagenError::TrailingBytes(bytes.len() - expected));
    }
    let mut vals = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut t = Transitions::new(sd, ad);
    let mut rec = vec![0.0; record];
    for _ in 0..count {
        for v in rec.iter_mut() {
            *v = vals.next().expect("length checked");
        }
        let (s, rest) = rec.split_at(sd);
        let (a, rest) = rest.split_at(ad);
        let (r, rest) = rest.split_at(1);
        let (s2, done) = rest.split_at(sd);
        if done[0] != 0.0 && done[0] != 1.0 {
            return Err(DatagenError::Malformed(format!(
                "done flag {} is not 0 or 1",
                done[0]
            )));
        }
        t.push(s, a, r[0], s2, done[0] == 1.0)?;
    }
    Ok(t)
}

pub fn save(dataset: &OfflineDataset, path: &Path) -> Result<(), DatagenError> {
    let t = &dataset.transitions;
    let env = &dataset.meta.env;
    if t.state_dim() != env.state_dim || t.action_dim() != env.action_dim {
        return Err(DatagenError::DimensionMismatch {
            what: "dataset vs environment state+action",
            expected: env.state_dim + env.action_dim,
            found: t.state_dim() + t.action_dim(),
        });
    }
    let bytes = encode(t)?;
    fs::write(path, bytes).map_err(|e| DatagenError::io(path, e))?;
    let meta = serde_json::to_string_pretty(&dataset.meta).expect("metadata serializes");
    let mp = meta_path(path);
    fs::write(&mp, meta + "\n").map_err(|e| DatagenError::io(&mp, e))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<OfflineDataset, DatagenError> {
    let bytes = fs::read(path).map_err(|e| DatagenError::io(path, e))?;
    let transitions = decode(&bytes)?;
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| DatagenError::io(&mp, e))?;
    let meta: DatasetMeta =
        serde_json::from_str(&text).map_err(|e| DatagenError::Metadata(e.to_string()))?;
    if transitions.state_dim() != meta.env.state_dim
        || transitions.action_dim() != meta.env.action_dim
    {
        return Err(DatagenError::DimensionMismatch {
            what: "dataset header vs metadata env",
            expected: meta.env.state_dim + meta.env.action_dim,
            found: transitions.state_dim() + transitions.action_dim(),
        });
    }
    Ok(OfflineDataset { transitions, meta })
}
