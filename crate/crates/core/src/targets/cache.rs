//! Flat binary target cache.
//!
//! One file per frame at `<targets_dir>/<branch>/<clip_id>/<index:06d>.bin`:
//! magic `TADT`, version u32, then H, W, channels as u32 (all little
//! endian), then `H*W*C` float32 values row-major with the channel index
//! fastest. Regenerating with the same corpus and config is byte-identical.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::Branch;

const MAGIC: [u8; 4] = *b"TADT";
const VERSION: u32 = 1;

pub fn target_path(targets_dir: &Path, branch: Branch, clip_id: &str, index: usize) -> PathBuf {
    targets_dir
        .join(branch.tag())
        .join(clip_id)
        .join(format!("{index:06}.bin"))
}

pub fn meta_path(targets_dir: &Path, branch: Branch) -> PathBuf {
    targets_dir.join(branch.tag()).join("meta.toml")
}

/// Write a `(C, H, W)` target map.
pub fn write_target(path: &Path, target: &Array3<f32>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let (c, h, w) = target.dim();
    let mut buf = Vec::with_capacity(16 + 4 * c * h * w);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(c as u32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                buf.extend_from_slice(&target[[ch, y, x]].to_le_bytes());
            }
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Read a target map back as `(C, H, W)`.
pub fn read_target(path: &Path) -> Result<Array3<f32>> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || bytes[..4] != MAGIC {
        return Err(Error::parse(path, "not a target cache file"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    if word(4) != VERSION {
        return Err(Error::parse(path, format!("unsupported version {}", word(4))));
    }
    let (h, w, c) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let expected = 20 + 4 * h * w * c;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            format!("expected {expected} bytes, got {}", bytes.len()),
        ));
    }
    let mut target = Array3::<f32>::zeros((c, h, w));
    let mut at = 20;
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                target[[ch, y, x]] = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
                at += 4;
            }
        }
    }
    Ok(target)
}

/// Generation settings recorded next to each branch's cache.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TargetMeta {
    pub branch: Branch,
    /// Scaling cap for motion targets (unused by the appearance branch).
    pub flow_cap: Option<f32>,
    pub estimator: String,
    pub miss_rate: f64,
    pub palette: Vec<String>,
    pub frames: usize,
    pub oracle_misses: usize,
}

impl TargetMeta {
    pub fn write(&self, targets_dir: &Path, branch: Branch) -> Result<()> {
        let path = meta_path(targets_dir, branch);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::parse(&path, e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(targets_dir: &Path, branch: Branch) -> Result<TargetMeta> {
        let path = meta_path(targets_dir, branch);
        let text = std::fs::read_to_string(&path).map_err(|_| Error::MissingStage {
            what: format!("target cache meta {}", path.display()),
            command: "gen-targets".into(),
        })?;
        toml::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))
    }
}
