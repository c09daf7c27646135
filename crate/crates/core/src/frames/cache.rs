//! `.feat` files, one per (backbone, video):
//!
//! ```text
//! 0   "VIDCAPFEAT\0\0"  magic (12 bytes)
//! 12  u32 LE            format version (1)
//! 16  u32 LE + bytes    video id (UTF-8)
//!     u32 LE + bytes    backbone name (UTF-8)
//!     u32 LE, u32 LE    rows, cols
//!     rows*cols f32 LE  row-major features
//! ```
//!
//! Files live at `<cache_dir>/<backbone>/<escaped video id>.feat` and are
//! written to a temporary sibling first, then renamed into place.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;

use super::FeatureTensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 12] = b"VIDCAPFEAT\0\0";
const VERSION: u32 = 1;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn escape_id(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn cache_path(cache_dir: &Path, video_id: &str, backbone: &str) -> PathBuf {
    cache_dir
        .join(escape_id(backbone))
        .join(format!("{}.feat", escape_id(video_id)))
}

fn encode(tensor: &FeatureTensor) -> Vec<u8> {
    let (rows, cols) = tensor.features.dim();
    let mut buf = Vec::with_capacity(40 + tensor.video_id.len() + rows * cols * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for s in [&tensor.video_id, &tensor.backbone] {
        buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
        buf.extend_from_slice(s.as_bytes());
    }
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in tensor.features.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptCache {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.corrupt("non UTF-8 string"))
    }
}

fn decode(bytes: &[u8], path: &Path) -> Result<FeatureTensor> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(12)? != MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let video_id = r.string()?;
    let backbone = r.string()?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let payload = &bytes[r.pos..];
    if payload.len() != rows * cols * 4 {
        return Err(r.corrupt(format!(
            "header declares {rows}x{cols} floats but payload holds {} bytes",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(FeatureTensor {
        video_id,
        backbone,
        features: Array2::from_shape_vec((rows, cols), values).expect("length checked"),
    })
}

pub fn save_features(tensor: &FeatureTensor, cache_dir: &Path) -> Result<PathBuf> {
    let path = cache_path(cache_dir, &tensor.video_id, &tensor.backbone);
    let dir = path.parent().expect("cache path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        escape_id(&tensor.video_id),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, encode(tensor)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_features(video_id: &str, backbone: &str, cache_dir: &Path) -> Result<FeatureTensor> {
    let path = cache_path(cache_dir, video_id, backbone);
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::CacheMiss {
                video_id: video_id.to_string(),
                backbone: backbone.to_string(),
            })
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let tensor = decode(&bytes, &path)?;
    if tensor.video_id != video_id || tensor.backbone != backbone {
        return Err(Error::CorruptCache {
            path,
            reason: format!(
                "file holds ({}, {}), expected ({video_id}, {backbone})",
                tensor.video_id, tensor.backbone
            ),
        });
    }
    Ok(tensor)
}

/// Wraps raw little-endian `f32` bytes (`30 * dim` values, row-major) from an
/// external extractor as `precomputed` features.
pub fn import_raw_features(video_id: &str, raw: &[u8], dim: usize) -> Result<FeatureTensor> {
    let rows = super::FRAMES_PER_VIDEO;
    if dim == 0 || raw.len() != rows * dim * 4 {
        return Err(Error::Shape {
            axis: "imported feature bytes",
            expected: rows * dim * 4,
            found: raw.len(),
        });
    }
    let values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(FeatureTensor {
        video_id: video_id.to_string(),
        backbone: "precomputed".into(),
        features: Array2::from_shape_vec((rows, dim), values).expect("length checked"),
    })
}

/// Read access to features of one backbone.
pub trait FeatureStore: Send + Sync {
    fn backbone(&self) -> &str;
    fn contains(&self, video_id: &str) -> bool;
    fn load(&self, video_id: &str) -> Result<FeatureTensor>;
}

#[derive(Debug, Clone)]
pub struct DiskFeatureStore {
    cache_dir: PathBuf,
    backbone: String,
}

impl DiskFeatureStore {
    pub fn new(cache_dir: impl Into<PathBuf>, backbone: impl Into<String>) -> Self {
        Self {
            cache_dir: cache_dir.into(),
            backbone: backbone.into(),
        }
    }
}

impl FeatureStore for DiskFeatureStore {
    fn backbone(&self) -> &str {
        &self.backbone
    }

    fn contains(&self, video_id: &str) -> bool {
        cache_path(&self.cache_dir, video_id, &self.backbone).is_file()
    }

    fn load(&self, video_id: &str) -> Result<FeatureTensor> {
        load_features(video_id, &self.backbone, &self.cache_dir)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryFeatureStore {
    backbone: String,
    tensors: HashMap<String, FeatureTensor>,
}

impl MemoryFeatureStore {
    pub fn new(backbone: impl Into<String>) -> Self {
        Self {
            backbone: backbone.into(),
            tensors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, tensor: FeatureTensor) {
        self.tensors.insert(tensor.video_id.clone(), tensor);
    }
}

impl FeatureStore for MemoryFeatureStore {
    fn backbone(&self) -> &str {
        &self.backbone
    }

    fn contains(&self, video_id: &str) -> bool {
        self.tensors.contains_key(video_id)
    }

    fn load(&self, video_id: &str) -> Result<FeatureTensor> {
        self.tensors
            .get(video_id)
            .cloned()
            .ok_or_else(|| Error::CacheMiss {
                video_id: video_id.to_string(),
                backbone: self.backbone.clone(),
            })
    }
}
