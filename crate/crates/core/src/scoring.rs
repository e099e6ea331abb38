//! Inference-time anomaly maps, morphological refinement, per-frame scores,
//! branch fusion, and temporal denoising.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod morph;
pub mod savgol;
pub mod score_io;

/// The two translator branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Appearance,
    Motion,
}

impl Branch {
    /// Short tag used in paths and CSV columns.
    pub fn tag(self) -> &'static str {
        match self {
            Branch::Appearance => "app",
            Branch::Motion => "mot",
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Post-processing stage of a score series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Raw,
    Refined,
    Smoothed,
    Fused,
}

impl Stage {
    pub fn tag(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Refined => "refined",
            Stage::Smoothed => "smoothed",
            Stage::Fused => "fused",
        }
    }
}

/// Nonnegative per-pixel translation-error image.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    pub values: Array2<f32>,
    pub branch: Branch,
    pub refined: bool,
}

/// Per-clip sequence of per-frame scalar anomaly scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub clip_id: String,
    pub scores: Vec<f64>,
    pub stage: Stage,
}

/// Per-pixel squared difference between a translator output and its target,
/// reduced over channels by mean for the appearance branch and taken
/// directly for the single-channel motion branch.
pub fn anomaly_map(
    output: &Array3<f32>,
    target: &Array3<f32>,
    branch: Branch,
) -> Result<AnomalyMap> {
    if output.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", output.shape()),
        });
    }
    let (c, h, w) = (output.shape()[0], output.shape()[1], output.shape()[2]);
    let mut values = Array2::<f32>::zeros((h, w));
    for ch in 0..c {
        let o = output.index_axis(ndarray::Axis(0), ch);
        let t = target.index_axis(ndarray::Axis(0), ch);
        ndarray::Zip::from(&mut values)
            .and(&o)
            .and(&t)
            .for_each(|v, &ov, &tv| {
                let d = ov - tv;
                *v += d * d;
            });
    }
    if c > 1 {
        values.mapv_inplace(|v| v / c as f32);
    }
    Ok(AnomalyMap {
        values,
        branch,
        refined: false,
    })
}

/// Grayscale morphological opening (`iterations` erosions then as many
/// dilations) with a square kernel and edge replication. Removes
/// non-condensing single-pixel activations left by normal objects.
pub fn refine(map: &AnomalyMap, kernel_size: usize, iterations: usize) -> Result<AnomalyMap> {
    let values = morph::opening(&map.values, kernel_size, iterations)?;
    Ok(AnomalyMap {
        values,
        branch: map.branch,
        refined: true,
    })
}

/// Mean of the anomaly map: the frame's scalar anomaly score.
pub fn frame_score(map: &AnomalyMap) -> f64 {
    let n = map.values.len();
    if n == 0 {
        return 0.0;
    }
    map.values.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64
}

/// Per-clip Savitzky-Golay smoothing of the frame-score series. Clips
/// shorter than `window` fall back to the largest odd window that fits.
pub fn smooth_scores(series: &ScoreSeries, window: usize, polyorder: usize) -> Result<ScoreSeries> {
    let scores = savgol::smooth(&series.scores, window, polyorder)?;
    Ok(ScoreSeries {
        clip_id: series.clip_id.clone(),
        scores,
        stage: Stage::Smoothed,
    })
}

/// Mean/std of one branch's training-split scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    pub mean: f64,
    pub std: f64,
}

impl BranchStats {
    pub fn from_scores(branch: Branch, scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidParam(format!(
                "branch {branch}: no calibration scores"
            )));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std == 0.0 {
            return Err(Error::ZeroVariance {
                branch: branch.tag().into(),
            });
        }
        Ok(BranchStats { mean, std })
    }

    pub fn z(&self, score: f64) -> f64 {
        (score - self.mean) / self.std
    }
}

/// Normalization statistics for both branches, computed on training-split
/// scores at the same post-processing stage as the series being fused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchCalibration {
    pub appearance: BranchStats,
    pub motion: BranchStats,
}

impl BranchCalibration {
    pub fn from_train_scores(appearance: &[f64], motion: &[f64]) -> Result<Self> {
        Ok(BranchCalibration {
            appearance: BranchStats::from_scores(Branch::Appearance, appearance)?,
            motion: BranchStats::from_scores(Branch::Motion, motion)?,
        })
    }
}

/// Continuous fusion: each branch z-normalized by its training statistics,
/// fused per frame by maximum. The continuous surrogate of the per-branch
/// OR rule, usable for ROC curves.
pub fn fuse(
    appearance: &ScoreSeries,
    motion: &ScoreSeries,
    calib: &BranchCalibration,
) -> Result<ScoreSeries> {
    if appearance.scores.len() != motion.scores.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} scores", appearance.scores.len()),
            got: format!("{} scores", motion.scores.len()),
        });
    }
    let scores = appearance
        .scores
        .iter()
        .zip(&motion.scores)
        .map(|(&a, &m)| calib.appearance.z(a).max(calib.motion.z(m)))
        .collect();
    Ok(ScoreSeries {
        clip_id: appearance.clip_id.clone(),
        scores,
        stage: Stage::Fused,
    })
}

/// Deployment-style binary decisions: a frame is flagged iff its raw branch
/// score passes that branch's threshold; `any` is the OR of the branches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrDecisions {
    pub appearance: Vec<u8>,
    pub motion: Vec<u8>,
    pub any: Vec<u8>,
}

pub fn or_decisions(
    appearance: &ScoreSeries,
    motion: &ScoreSeries,
    app_threshold: f64,
    mot_threshold: f64,
) -> Result<OrDecisions> {
    if appearance.scores.len() != motion.scores.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} scores", appearance.scores.len()),
            got: format!("{} scores", motion.scores.len()),
        });
    }
    let app: Vec<u8> = appearance
        .scores
        .iter()
        .map(|&s| u8::from(s > app_threshold))
        .collect();
    let mot: Vec<u8> = motion
        .scores
        .iter()
        .map(|&s| u8::from(s > mot_threshold))
        .collect();
    let any = app.iter().zip(&mot).map(|(&a, &m)| a | m).collect();
    Ok(OrDecisions {
        appearance: app,
        motion: mot,
        any,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn series(scores: Vec<f64>) -> ScoreSeries {
        ScoreSeries {
            clip_id: "c".into(),
            scores,
            stage: Stage::Raw,
        }
    }

    #[test]
    fn anomaly_map_zero_when_equal() {
        let t = Array3::from_shape_fn((4, 8, 8), |(c, y, x)| (c + y + x) as f32 * 0.01);
        let map = anomaly_map(&t, &t, Branch::Appearance).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
        assert!(!map.refined);
    }

    #[test]
    fn anomaly_map_squared_difference_single_channel() {
        let mut o = Array3::<f32>::zeros((1, 4, 4));
        let t = Array3::<f32>::zeros((1, 4, 4));
        o[[0, 2, 1]] = 0.5;
        let map = anomaly_map(&o, &t, Branch::Motion).unwrap();
        assert!((map.values[[2, 1]] - 0.25).abs() < 1e-7);
        assert_eq!(map.values[[0, 0]], 0.0);
    }

    #[test]
    fn anomaly_map_matches_elementwise_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let o = Array3::from_shape_fn((3, 6, 5), |_| rng.random::<f32>());
        let t = Array3::from_shape_fn((3, 6, 5), |_| rng.random::<f32>());
        let map = anomaly_map(&o, &t, Branch::Appearance).unwrap();
        for y in 0..6 {
            for x in 0..5 {
                let mut expect = 0.0f32;
                for c in 0..3 {
                    let d = o[[c, y, x]] - t[[c, y, x]];
                    expect += d * d;
                }
                expect /= 3.0;
                assert!((map.values[[y, x]] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn anomaly_map_rejects_shape_mismatch() {
        let o = Array3::<f32>::zeros((1, 4, 4));
        let t = Array3::<f32>::zeros((1, 4, 5));
        assert!(anomaly_map(&o, &t, Branch::Motion).is_err());
    }

    #[test]
    fn frame_score_is_mean() {
        let map = AnomalyMap {
            values: Array2::from_elem((7, 3), 0.25f32),
            branch: Branch::Motion,
            refined: false,
        };
        assert!((frame_score(&map) - 0.25).abs() < 1e-9);

        let zero = AnomalyMap {
            values: Array2::zeros((5, 5)),
            branch: Branch::Motion,
            refined: false,
        };
        assert_eq!(frame_score(&zero), 0.0);
    }

    #[test]
    fn frame_score_matches_brute_force_sum() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values = Array2::from_shape_fn((9, 13), |_| rng.random::<f32>());
        let brute: f64 = values.iter().map(|&v| f64::from(v)).sum::<f64>() / (9.0 * 13.0);
        let map = AnomalyMap {
            values,
            branch: Branch::Appearance,
            refined: false,
        };
        assert!((frame_score(&map) - brute).abs() < 1e-12);
    }

    #[test]
    fn frame_score_monotone_in_pointwise_order() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = Array2::from_shape_fn((8, 8), |_| rng.random::<f32>());
        let b = a.mapv(|v| v * 0.5);
        let score_a = frame_score(&AnomalyMap {
            values: a,
            branch: Branch::Motion,
            refined: false,
        });
        let score_b = frame_score(&AnomalyMap {
            values: b,
            branch: Branch::Motion,
            refined: false,
        });
        assert!(score_a >= score_b);
    }

    #[test]
    fn fuse_follows_spiking_branch() {
        // One branch flat at its training mean, the other spikes.
        let calib = BranchCalibration {
            appearance: BranchStats { mean: 1.0, std: 0.5 },
            motion: BranchStats { mean: 2.0, std: 1.0 },
        };
        let app = series(vec![1.0, 1.0, 1.0, 1.0]);
        let mot = series(vec![2.0, 2.0, 7.0, 2.0]);
        let fused = fuse(&app, &mot, &calib).unwrap();
        assert_eq!(fused.stage, Stage::Fused);
        assert_eq!(fused.scores[0], 0.0);
        assert_eq!(fused.scores[2], 5.0);
    }

    #[test]
    fn fuse_of_identical_normalized_series_is_identity() {
        let calib = BranchCalibration {
            appearance: BranchStats { mean: 0.0, std: 1.0 },
            motion: BranchStats { mean: 0.0, std: 1.0 },
        };
        let app = series(vec![0.3, -0.2, 1.5]);
        let mot = series(vec![0.3, -0.2, 1.5]);
        let fused = fuse(&app, &mot, &calib).unwrap();
        assert_eq!(fused.scores, vec![0.3, -0.2, 1.5]);
    }

    #[test]
    fn fuse_invariant_under_common_affine_rescale() {
        let app = vec![0.1, 0.4, 0.2, 0.9];
        let mot = vec![0.5, 0.2, 0.8, 0.1];
        let calib = BranchCalibration::from_train_scores(&app, &mot).unwrap();
        let fused = fuse(&series(app.clone()), &series(mot.clone()), &calib).unwrap();

        // Rescale the appearance branch and its statistics together.
        let (a, b) = (3.5, -0.7);
        let app2: Vec<f64> = app.iter().map(|s| a * s + b).collect();
        let calib2 = BranchCalibration::from_train_scores(&app2, &mot).unwrap();
        let fused2 = fuse(&series(app2), &series(mot), &calib2).unwrap();
        for (x, y) in fused.scores.iter().zip(&fused2.scores) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_variance_calibration_names_branch() {
        let err = BranchCalibration::from_train_scores(&[0.5, 0.5, 0.5], &[0.1, 0.2]).unwrap_err();
        match err {
            Error::ZeroVariance { branch } => assert_eq!(branch, "app"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn or_decisions_flag_iff_raw_score_passes_threshold() {
        let app = series(vec![0.1, 0.9, 0.2]);
        let mot = series(vec![0.8, 0.1, 0.1]);
        let d = or_decisions(&app, &mot, 0.5, 0.5).unwrap();
        assert_eq!(d.appearance, vec![0, 1, 0]);
        assert_eq!(d.motion, vec![1, 0, 0]);
        assert_eq!(d.any, vec![1, 1, 0]);
    }
}
