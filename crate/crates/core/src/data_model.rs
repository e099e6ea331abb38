//! Core types, corpus ingestion, and the on-disk corpus layout.
//!
//! Layout: `<root>/train/<clip_id>/<index:06d>.png|jpg`,
//! `<root>/test/<clip_id>/...`, `<root>/test/<clip_id>.labels` (one `0`/`1`
//! per line, frame order), `<root>/palette.txt` (one class per line,
//! `background` first). A text manifest (`manifest.txt`) caches clip names,
//! frame counts and content checksums.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub mod manifest;

/// Side length every ingested frame is resized to.
pub const FRAME_SIDE: usize = 224;

/// A single video frame. Pixels are channel-major `(C, H, W)` with values
/// in `[0, 1]` and `C` in `{1, 3}`; after ingestion `H = W = 224` and
/// grayscale sources are replicated to 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub clip_id: String,
    pub index: usize,
    pub pixels: Array3<f32>,
}

impl Frame {
    pub fn channels(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    /// Channel mean, used as the grayscale plane for optical flow.
    pub fn luma(&self) -> Array2<f32> {
        let c = self.channels() as f32;
        self.pixels.sum_axis(ndarray::Axis(0)) / c
    }
}

/// An ordered sequence of frames from one video, with optional per-frame
/// binary anomaly labels (test clips only).
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub frames: Vec<Frame>,
    pub labels: Option<Vec<u8>>,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Ordered object-class identifiers; index 0 is always `background`.
///
/// The palette is the label space of the segmentation oracle, so it may
/// contain classes that never occur in the training split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    classes: Vec<String>,
}

pub const BACKGROUND: &str = "background";

impl Palette {
    /// Build from foreground class names; `background` is prepended.
    pub fn new<I, S>(foreground: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut classes = vec![BACKGROUND.to_string()];
        classes.extend(foreground.into_iter().map(Into::into));
        Self::from_classes(classes)
    }

    /// Build from a full class list whose first entry must be `background`.
    pub fn from_classes(classes: Vec<String>) -> Result<Self> {
        if classes.first().map(String::as_str) != Some(BACKGROUND) {
            return Err(Error::InvalidParam(format!(
                "palette must start with `{BACKGROUND}`"
            )));
        }
        if classes.len() < 2 {
            return Err(Error::InvalidParam(
                "palette needs at least one foreground class".into(),
            ));
        }
        let unique: BTreeSet<&String> = classes.iter().collect();
        if unique.len() != classes.len() {
            return Err(Error::InvalidParam("palette has duplicate classes".into()));
        }
        Ok(Palette { classes })
    }

    /// Number of target channels (foreground classes plus background).
    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn class_name(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }
}

impl fmt::Display for Palette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.classes.join(","))
    }
}

/// Which half of the corpus a clip belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// An ingested corpus: unlabeled train clips (all-normal by assumption),
/// labeled test clips, and the oracle class palette. Immutable after
/// construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    pub root: PathBuf,
    pub train_clips: Vec<Clip>,
    pub test_clips: Vec<Clip>,
    pub palette: Palette,
}

impl Corpus {
    pub fn clips(&self, split: Split) -> &[Clip] {
        match split {
            Split::Train => &self.train_clips,
            Split::Test => &self.test_clips,
        }
    }

    /// Locate a clip by id in either split.
    pub fn find_clip(&self, clip_id: &str) -> Option<(Split, &Clip)> {
        self.train_clips
            .iter()
            .find(|c| c.id == clip_id)
            .map(|c| (Split::Train, c))
            .or_else(|| {
                self.test_clips
                    .iter()
                    .find(|c| c.id == clip_id)
                    .map(|c| (Split::Test, c))
            })
    }
}

/// Per-frame training targets for the two branches: a one-hot semantic map
/// (channel 0 = background) and a masked, `[0, 1]`-scaled flow-magnitude map.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPair {
    /// `(K_c, H, W)` one-hot class channels, values in `[0, 1]`.
    pub seg_target: Array3<f32>,
    /// `(H, W)` nonnegative magnitudes; exactly 0 wherever the instance mask is 0.
    pub flow_target: Array2<f32>,
}

/// Ingestion options.
#[derive(Debug, Clone)]
pub struct IngestConfig {
    /// Square side every frame is resized to.
    pub side: usize,
    /// Palette override; when `None` the corpus `palette.txt` is required.
    pub palette: Option<Palette>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            side: FRAME_SIDE,
            palette: None,
        }
    }
}

const FRAME_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Load a corpus from disk, resizing every frame to `config.side` and
/// normalizing pixels to `[0, 1]`. Test labels are loaded when present.
pub fn ingest_corpus(root: &Path, config: &IngestConfig) -> Result<Corpus> {
    if config.side < 8 {
        return Err(Error::InvalidParam(format!(
            "resize side must be >= 8, got {}",
            config.side
        )));
    }
    for split in [Split::Train, Split::Test] {
        if !root.join(split.dir_name()).is_dir() {
            return Err(Error::CorpusLayout(format!(
                "missing split directory `{}` under {}",
                split.dir_name(),
                root.display()
            )));
        }
    }

    let palette = match &config.palette {
        Some(p) => p.clone(),
        None => read_palette(&root.join("palette.txt"))?,
    };

    let train_clips = ingest_split(root, Split::Train, config)?;
    if train_clips.is_empty() {
        return Err(Error::CorpusLayout("no training clips".into()));
    }
    let test_clips = ingest_split(root, Split::Test, config)?;

    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());

    Ok(Corpus {
        name,
        root: root.to_path_buf(),
        train_clips,
        test_clips,
        palette,
    })
}

fn read_palette(path: &Path) -> Result<Palette> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        Error::CorpusLayout(format!(
            "no palette: provide {} or an ingest-config palette",
            path.display()
        ))
    })?;
    let classes: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    Palette::from_classes(classes)
}

/// Clip directories of a split, sorted by name. Shared with the target cache
/// and oracle loaders, which mirror the same layout.
pub fn list_clip_dirs(root: &Path, split: Split) -> Result<Vec<(String, PathBuf)>> {
    let split_dir = root.join(split.dir_name());
    let mut dirs = Vec::new();
    let entries = std::fs::read_dir(&split_dir).map_err(|e| Error::io(&split_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&split_dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            let id = entry.file_name().to_string_lossy().into_owned();
            dirs.push((id, path));
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Frame image files of one clip directory, sorted and validated to be
/// consecutively indexed from 0.
pub fn list_frame_files(clip_id: &str, clip_dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut files = Vec::new();
    let entries = std::fs::read_dir(clip_dir).map_err(|e| Error::io(clip_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(clip_dir, e))?;
        let path = entry.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if !path.is_file() || !FRAME_EXTENSIONS.contains(&ext.as_str()) {
            continue;
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let index: usize = stem.parse().map_err(|_| {
            Error::CorpusLayout(format!(
                "clip {clip_id}: frame file `{}` is not an integer index",
                path.display()
            ))
        })?;
        files.push((index, path));
    }
    files.sort();
    for (expected, (index, path)) in files.iter().enumerate() {
        if *index != expected {
            return Err(Error::CorpusLayout(format!(
                "clip {clip_id}: frame indices must be consecutive from 0, found {index} at {}",
                path.display()
            )));
        }
    }
    Ok(files)
}

fn ingest_split(root: &Path, split: Split, config: &IngestConfig) -> Result<Vec<Clip>> {
    use rayon::prelude::*;

    let dirs = list_clip_dirs(root, split)?;
    dirs.par_iter()
        .map(|(clip_id, clip_dir)| ingest_clip(root, split, clip_id, clip_dir, config))
        .collect()
}

fn ingest_clip(
    root: &Path,
    split: Split,
    clip_id: &str,
    clip_dir: &Path,
    config: &IngestConfig,
) -> Result<Clip> {
    let files = list_frame_files(clip_id, clip_dir)?;
    let mut frames = Vec::with_capacity(files.len());
    for (index, path) in &files {
        let frame = load_frame(clip_id, *index, path)?;
        frames.push(resize_frame(&frame, config.side)?);
    }

    let labels = if split == Split::Test {
        let label_path = root
            .join(split.dir_name())
            .join(format!("{clip_id}.labels"));
        if label_path.is_file() {
            let labels = read_labels(&label_path)?;
            if labels.len() != frames.len() {
                return Err(Error::LabelMismatch {
                    clip: clip_id.to_string(),
                    frames: frames.len(),
                    labels: labels.len(),
                });
            }
            Some(labels)
        } else {
            None
        }
    } else {
        None
    };

    Ok(Clip {
        id: clip_id.to_string(),
        frames,
        labels,
    })
}

fn load_frame(clip_id: &str, index: usize, path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    // Grayscale sources are replicated to 3 channels so one translator
    // input contract serves all corpora.
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut pixels = Array3::<f32>::zeros((3, h, w));
    for (x, y, p) in rgb.enumerate_pixels() {
        for c in 0..3 {
            pixels[[c, y as usize, x as usize]] = f32::from(p.0[c]) / 255.0;
        }
    }
    Ok(Frame {
        clip_id: clip_id.to_string(),
        index,
        pixels,
    })
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| match l {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(Error::parse(path, format!("label must be 0 or 1, got `{other}`"))),
        })
        .collect()
}

/// Bilinear resize to `side`x`side`. Same-size input is returned bit-exact;
/// constant images stay constant.
pub fn resize_frame(frame: &Frame, side: usize) -> Result<Frame> {
    if side < 8 {
        return Err(Error::InvalidParam(format!(
            "resize side must be >= 8, got {side}"
        )));
    }
    let (c, h, w) = (frame.channels(), frame.height(), frame.width());
    if h == side && w == side {
        return Ok(frame.clone());
    }
    let sy = h as f32 / side as f32;
    let sx = w as f32 / side as f32;
    let mut out = Array3::<f32>::zeros((c, side, side));
    for ch in 0..c {
        let src = frame.pixels.index_axis(ndarray::Axis(0), ch);
        for oy in 0..side {
            // Pixel-center alignment.
            let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let ty = fy - y0 as f32;
            for ox in 0..side {
                let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let tx = fx - x0 as f32;
                let top = lerp(src[[y0, x0]], src[[y0, x1]], tx);
                let bot = lerp(src[[y1, x0]], src[[y1, x1]], tx);
                out[[ch, oy, ox]] = lerp(top, bot, ty).clamp(0.0, 1.0);
            }
        }
    }
    Ok(Frame {
        clip_id: frame.clip_id.clone(),
        index: frame.index,
        pixels: out,
    })
}

// a + t (b - a): exact for a == b, stays within [min(a,b), max(a,b)].
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}

/// Hex SHA-256 of a clip's frame files, hashed in index order.
pub fn clip_checksum(files: &[(usize, PathBuf)]) -> Result<String> {
    let mut hasher = Sha256::new();
    for (_, path) in files {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").expect("write to String");
    }
    Ok(hex)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_frame(value: f32, h: usize, w: usize) -> Frame {
        Frame {
            clip_id: "c".into(),
            index: 0,
            pixels: Array3::from_elem((3, h, w), value),
        }
    }

    #[test]
    fn resize_shrinks_to_requested_side() {
        let mut frame = const_frame(0.0, 240, 360);
        for y in 0..240 {
            for x in 0..360 {
                frame.pixels[[0, y, x]] = (x as f32 / 360.0 + y as f32 / 240.0) / 2.0;
            }
        }
        let out = resize_frame(&frame, 224).unwrap();
        assert_eq!(out.pixels.shape(), &[3, 224, 224]);
        assert!(out.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn resize_same_side_is_bit_exact() {
        let mut frame = const_frame(0.25, 224, 224);
        frame.pixels[[1, 17, 203]] = 0.875;
        let out = resize_frame(&frame, 224).unwrap();
        assert_eq!(out.pixels, frame.pixels);
    }

    #[test]
    fn resize_preserves_constant_images() {
        for side in [8, 97, 224] {
            let frame = const_frame(0.37, 61, 123);
            let out = resize_frame(&frame, side).unwrap();
            for &v in out.pixels.iter() {
                assert!((v - 0.37).abs() < 1e-6, "side {side}: {v}");
            }
        }
    }

    #[test]
    fn resize_rejects_tiny_side() {
        let frame = const_frame(0.0, 16, 16);
        assert!(matches!(
            resize_frame(&frame, 4),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn palette_requires_background_first() {
        assert!(Palette::from_classes(vec!["circle".into()]).is_err());
        assert!(Palette::from_classes(vec![BACKGROUND.into()]).is_err());
        let p = Palette::new(["circle", "square"]).unwrap();
        assert_eq!(p.size(), 3);
        assert_eq!(p.index_of(BACKGROUND), Some(0));
        assert_eq!(p.index_of("square"), Some(2));
    }

    #[test]
    fn luma_of_replicated_gray_is_identity() {
        let mut frame = const_frame(0.5, 4, 4);
        frame.pixels[[0, 1, 2]] = 0.2;
        frame.pixels[[1, 1, 2]] = 0.2;
        frame.pixels[[2, 1, 2]] = 0.2;
        let luma = frame.luma();
        assert!((luma[[1, 2]] - 0.2).abs() < 1e-6);
        assert!((luma[[0, 0]] - 0.5).abs() < 1e-6);
    }
}
