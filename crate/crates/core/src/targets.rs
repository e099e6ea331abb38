//! Per-frame training/inference targets: semantic maps from a pluggable
//! segmentation oracle, dense optical-flow magnitude maps, and their masked
//! fusion.

use ndarray::{Array2, Array3};

use crate::data_model::Frame;
use crate::error::{Error, Result};

pub mod cache;
pub mod farneback;

/// Output of the segmentation oracle for one frame: a palette-index map
/// (0 = background) and the binary union mask of all detected objects.
#[derive(Debug, Clone, PartialEq)]
pub struct SegOracleResult {
    pub class_map: Array2<u16>,
    pub instance_mask: Array2<u8>,
}

impl SegOracleResult {
    /// Derive the instance mask from the class map, which keeps the
    /// `mask = 1 <=> class != 0` invariant by construction.
    pub fn from_class_map(class_map: Array2<u16>) -> Self {
        let instance_mask = class_map.mapv(|c| u8::from(c != 0));
        SegOracleResult {
            class_map,
            instance_mask,
        }
    }

    /// An all-background result, the recorded outcome of an oracle miss.
    pub fn empty(height: usize, width: usize) -> Self {
        SegOracleResult {
            class_map: Array2::zeros((height, width)),
            instance_mask: Array2::zeros((height, width)),
        }
    }
}

/// Pluggable instance-segmentation oracle configured with the corpus
/// palette. Deterministic for a fixed oracle and frame.
pub trait SegmentationOracle: Sync {
    fn segment(&self, frame: &Frame) -> Result<SegOracleResult>;
    /// Number of palette classes including background.
    fn palette_size(&self) -> usize;
}

/// Run the oracle on a frame. Oracle failures become recorded misses
/// (empty mask) rather than crashes; misses are an expected failure mode
/// handled downstream by temporal denoising.
pub fn segment(frame: &Frame, oracle: &dyn SegmentationOracle) -> (SegOracleResult, bool) {
    match oracle.segment(frame) {
        Ok(result) => (result, false),
        Err(_) => (
            SegOracleResult::empty(frame.height(), frame.width()),
            true,
        ),
    }
}

/// Dense displacement field aligned to the current frame, in pixels per
/// frame step.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Array2<f32>,
    pub v: Array2<f32>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField {
            u: Array2::zeros((height, width)),
            v: Array2::zeros((height, width)),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.u.dim()
    }
}

/// Pluggable dense flow estimator; the polynomial-expansion method
/// ([`farneback::FarnebackEstimator`]) is the default, synthetic corpora
/// provide an analytic one for tests.
pub trait FlowEstimator: Sync {
    fn flow(&self, prev: &Frame, curr: &Frame) -> Result<FlowField>;
}

/// Estimate flow between two consecutive frames of one clip.
pub fn dense_flow(
    prev: &Frame,
    curr: &Frame,
    estimator: &dyn FlowEstimator,
) -> Result<FlowField> {
    if prev.pixels.shape() != curr.pixels.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", prev.pixels.shape()),
            got: format!("{:?}", curr.pixels.shape()),
        });
    }
    if prev.clip_id != curr.clip_id || curr.index != prev.index + 1 {
        return Err(Error::InvalidParam(format!(
            "flow needs consecutive frames of one clip, got {}/{} then {}/{}",
            prev.clip_id, prev.index, curr.clip_id, curr.index
        )));
    }
    estimator.flow(prev, curr)
}

/// Per-pixel Euclidean norm of the displacement, discarding direction.
pub fn flow_magnitude(flow: &FlowField) -> Array2<f32> {
    let mut out = Array2::zeros(flow.dim());
    ndarray::Zip::from(&mut out)
        .and(&flow.u)
        .and(&flow.v)
        .for_each(|m, &u, &v| *m = (u * u + v * v).sqrt());
    out
}

/// Suppress background motion: elementwise product with the binary
/// instance mask, exactly 0 off-mask.
pub fn mask_flow(magnitude: &Array2<f32>, mask: &Array2<u8>) -> Result<Array2<f32>> {
    if magnitude.dim() != mask.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", magnitude.dim()),
            got: format!("{:?}", mask.dim()),
        });
    }
    let mut out = magnitude.clone();
    ndarray::Zip::from(&mut out).and(mask).for_each(|m, &k| {
        if k == 0 {
            *m = 0.0;
        }
    });
    Ok(out)
}

/// Monotone normalization into the translator's output range:
/// `min(magnitude, cap) / cap`.
pub fn scale_flow_target(flow_target: &Array2<f32>, cap: f32) -> Result<Array2<f32>> {
    if !(cap > 0.0) {
        return Err(Error::InvalidParam(format!(
            "flow cap must be positive, got {cap}"
        )));
    }
    Ok(flow_target.mapv(|m| (m.min(cap)) / cap))
}

/// One-hot encode a class map over `palette_size` channels; channel 0 is
/// background.
pub fn make_seg_target(result: &SegOracleResult, palette_size: usize) -> Result<Array3<f32>> {
    let (h, w) = result.class_map.dim();
    let mut target = Array3::<f32>::zeros((palette_size, h, w));
    for ((y, x), &class) in result.class_map.indexed_iter() {
        let class = class as usize;
        if class >= palette_size {
            return Err(Error::InvalidParam(format!(
                "class index {class} out of range for palette of {palette_size}"
            )));
        }
        target[[class, y, x]] = 1.0;
    }
    Ok(target)
}

/// Per-pixel argmax over channels; inverse of [`make_seg_target`].
pub fn seg_target_argmax(target: &Array3<f32>) -> Array2<u16> {
    let (c, h, w) = target.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut best = 0usize;
        let mut best_v = target[[0, y, x]];
        for ch in 1..c {
            let v = target[[ch, y, x]];
            if v > best_v {
                best_v = v;
                best = ch;
            }
        }
        best as u16
    })
}

/// Nearest-rank percentile (`q` in [0,1]) used for the flow scaling cap.
pub fn percentile(mut values: Vec<f32>, q: f64) -> Option<f32> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Some(values[rank - 1])
}
