//! Text manifest caching clip names, frame counts, and content checksums.
//!
//! Format: a header line `translad-manifest v1`, then one tab-separated
//! line per clip: `split<TAB>clip_id<TAB>frame_count<TAB>sha256`.

use std::path::Path;

use crate::data_model::{clip_checksum, list_clip_dirs, list_frame_files, Split};
use crate::error::{Error, Result};

const HEADER: &str = "translad-manifest v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    pub clip_id: String,
    pub frame_count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Scan a corpus tree and checksum every clip's frame files.
    pub fn build(root: &Path) -> Result<Manifest> {
        let mut entries = Vec::new();
        for split in [Split::Train, Split::Test] {
            for (clip_id, clip_dir) in list_clip_dirs(root, split)? {
                let files = list_frame_files(&clip_id, &clip_dir)?;
                entries.push(ManifestEntry {
                    split,
                    clip_id,
                    frame_count: files.len(),
                    sha256: clip_checksum(&files)?,
                });
            }
        }
        Ok(Manifest { entries })
    }

    pub fn render(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.split, e.clip_id, e.frame_count, e.sha256
            ));
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Manifest> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == HEADER => {}
            other => {
                return Err(Error::parse(
                    origin,
                    format!("expected header `{HEADER}`, got `{}`", other.unwrap_or("")),
                ))
            }
        }
        let mut entries = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(origin, format!("expected 4 fields: `{line}`")));
            }
            let split = match fields[0] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(Error::parse(origin, format!("unknown split `{other}`"))),
            };
            let frame_count: usize = fields[2]
                .parse()
                .map_err(|_| Error::parse(origin, format!("bad frame count `{}`", fields[2])))?;
            entries.push(ManifestEntry {
                split,
                clip_id: fields[1].to_string(),
                frame_count,
                sha256: fields[3].to_string(),
            });
        }
        Ok(Manifest { entries })
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join("manifest.txt");
        std::fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))
    }

    pub fn read(root: &Path) -> Result<Manifest> {
        let path = root.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text, &path)
    }
}
