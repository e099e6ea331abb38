//! Frame-level ROC/AUC computation and the run report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::data_model::Corpus;
use crate::error::{Error, Result};
use crate::scoring::score_io::{read_scores, ScoreRow};

/// Published full-scale reference results echoed in every report for
/// comparison: frame-level AUC (percent) on standard benchmarks.
pub const REFERENCE_AUC: [(&str, f64); 3] = [
    ("shanghaitech", 86.18),
    ("ucsd_ped2", 97.76),
    ("ucsd_ped1", 88.61),
];

/// ROC curve over descending thresholds, starting at (0,0) and ending at
/// (1,1), with ties grouped.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

/// Trapezoidal AUC over all distinct thresholds. Equal scores are grouped,
/// which makes the trapezoid sum equal the pairwise Mann-Whitney estimate
/// (ties counted half); the shared numerator is accumulated in integers,
/// so the equality is exact.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", scores.len()),
            got: format!("{}", labels.len()),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParam("scores must be finite".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count() as u128;
    let negatives = labels.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];

    let mut tp: u128 = 0;
    let mut fp: u128 = 0;
    let mut numerator: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        // Consume the whole tie group at this threshold.
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        numerator += (fp - prev_fp) * (tp + prev_tp);
        thresholds.push(threshold);
        tpr.push(tp as f64 / positives as f64);
        fpr.push(fp as f64 / negatives as f64);
    }

    let auc = numerator as f64 / (2.0 * positives as f64 * negatives as f64);
    Ok(RocCurve {
        thresholds,
        tpr,
        fpr,
        auc,
    })
}

/// Options for [`evaluate_run`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Min-max normalize scores per clip before concatenating.
    pub per_clip_normalize: bool,
    /// Additionally report the mean of per-clip AUCs.
    pub macro_auc: bool,
}

/// The branch x stage AUC table plus the static reference row.
#[derive(Debug, Clone)]
pub struct Report {
    /// `(key, auc)` entries, `auc.<series>.<stage>` order.
    pub entries: Vec<(String, f64)>,
    pub frames_evaluated: usize,
}

impl Report {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|&(_, v)| v)
    }

    /// Machine-readable key-value rendering (`report.txt`).
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        let _ = writeln!(out, "frames.evaluated={}", self.frames_evaluated);
        for (name, auc) in REFERENCE_AUC {
            let _ = writeln!(out, "reference.{name}.auc_percent={auc}");
        }
        out
    }

    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>10}", "series", "raw", "refined", "smoothed");
        for series in ["app", "mot", "fused"] {
            let cell = |stage: &str| {
                self.get(&format!("auc.{series}.{stage}"))
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "-".into())
            };
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10} {:>10}",
                series,
                cell("raw"),
                cell("refined"),
                cell("smoothed")
            );
        }
        let _ = writeln!(out, "frames evaluated: {}", self.frames_evaluated);
        let _ = writeln!(out, "published reference (full-scale, AUC %):");
        for (name, auc) in REFERENCE_AUC {
            let _ = writeln!(out, "  {name:<14} {auc:.2}");
        }
        out
    }
}

const SERIES: [(&str, [&str; 3]); 3] = [
    ("app", ["app_raw", "app_refined", "app_smooth"]),
    ("mot", ["mot_raw", "mot_refined", "mot_smooth"]),
    ("fused", ["fused_raw", "fused_refined", "fused"]),
];
const STAGES: [&str; 3] = ["raw", "refined", "smoothed"];

/// Evaluate a score CSV against the corpus's test labels: AUC for
/// appearance-only, motion-only, and fused, each raw / refined / smoothed.
pub fn evaluate_run(score_csv: &Path, corpus: &Corpus, options: &EvalOptions) -> Result<Report> {
    let rows = read_scores(score_csv)?;
    let by_key: HashMap<(&str, usize), &ScoreRow> = rows
        .iter()
        .map(|r| ((r.clip_id.as_str(), r.frame_index), r))
        .collect();

    // Every labeled test frame must be covered.
    let mut missing = Vec::new();
    let mut labeled_clips = Vec::new();
    for clip in &corpus.test_clips {
        let Some(labels) = &clip.labels else { continue };
        labeled_clips.push((clip.id.clone(), labels.clone()));
        for index in 0..clip.len() {
            if !by_key.contains_key(&(clip.id.as_str(), index)) {
                missing.push(format!("{}/{index}", clip.id));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::InvalidParam(format!(
            "score CSV is missing {} labeled test frame(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    if labeled_clips.is_empty() {
        return Err(Error::InvalidParam(
            "corpus has no labeled test clips".into(),
        ));
    }

    let column = |row: &ScoreRow, name: &str| -> f64 {
        match name {
            "app_raw" => row.app_raw,
            "mot_raw" => row.mot_raw,
            "app_smooth" => row.app_smooth,
            "mot_smooth" => row.mot_smooth,
            "fused" => row.fused,
            "app_refined" => row.app_refined,
            "mot_refined" => row.mot_refined,
            "fused_raw" => row.fused_raw,
            "fused_refined" => row.fused_refined,
            other => unreachable!("unknown column {other}"),
        }
    };

    let mut entries = Vec::new();
    let mut frames_evaluated = 0;
    for (series, columns) in SERIES {
        for (stage, col) in STAGES.iter().zip(columns) {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            let mut per_clip = Vec::new();
            for (clip_id, clip_labels) in &labeled_clips {
                let mut clip_scores: Vec<f64> = (0..clip_labels.len())
                    .map(|i| column(by_key[&(clip_id.as_str(), i)], col))
                    .collect();
                if options.per_clip_normalize {
                    min_max_normalize(&mut clip_scores);
                }
                per_clip.push((clip_scores.clone(), clip_labels.clone()));
                scores.extend(clip_scores);
                labels.extend_from_slice(clip_labels);
            }
            frames_evaluated = scores.len();
            let curve = roc_auc(&scores, &labels)?;
            entries.push((format!("auc.{series}.{stage}"), curve.auc));
            if options.macro_auc {
                let mut aucs = Vec::new();
                for (clip_scores, clip_labels) in &per_clip {
                    if let Ok(c) = roc_auc(clip_scores, clip_labels) {
                        aucs.push(c.auc);
                    }
                }
                if !aucs.is_empty() {
                    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
                    entries.push((format!("auc.{series}.{stage}.macro"), mean));
                }
            }
        }
    }

    Ok(Report {
        entries,
        frames_evaluated,
    })
}

fn min_max_normalize(scores: &mut [f64]) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &s in scores.iter() {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if hi > lo {
        for s in scores.iter_mut() {
            *s = (*s - lo) / (hi - lo);
        }
    } else {
        for s in scores.iter_mut() {
            *s = 0.0;
        }
    }
}

/// AUC restricted to the test clips whose id passes `keep`, concatenated.
/// Used to score one anomaly family at a time.
pub fn subset_auc(
    rows: &[ScoreRow],
    corpus: &Corpus,
    column: impl Fn(&ScoreRow) -> f64,
    keep: impl Fn(&str) -> bool,
) -> Result<f64> {
    let clip_ids: HashSet<&str> = corpus
        .test_clips
        .iter()
        .filter(|c| c.labels.is_some() && keep(&c.id))
        .map(|c| c.id.as_str())
        .collect();
    let labels_by_clip: BTreeMap<&str, &[u8]> = corpus
        .test_clips
        .iter()
        .filter(|c| clip_ids.contains(c.id.as_str()))
        .map(|c| (c.id.as_str(), c.labels.as_deref().unwrap()))
        .collect();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for row in rows {
        if let Some(clip_labels) = labels_by_clip.get(row.clip_id.as_str()) {
            if row.frame_index < clip_labels.len() {
                scores.push(column(row));
                labels.push(clip_labels[row.frame_index]);
            }
        }
    }
    Ok(roc_auc(&scores, &labels)?.auc)
}

/// Pairwise Mann-Whitney estimate: P(score_pos > score_neg) + 0.5 P(equal).
/// O(n^2); the independent oracle for [`roc_auc`].
pub fn mann_whitney_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClassLabels);
    }
    let mut greater: u128 = 0;
    let mut equal: u128 = 0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                greater += 1;
            } else if p == n {
                equal += 1;
            }
        }
    }
    Ok((2 * greater + equal) as f64 / (2.0 * pos.len() as f64 * neg.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation_is_one() {
        let curve = roc_auc(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap();
        assert_eq!(curve.auc, 1.0);
    }

    #[test]
    fn all_ties_is_half() {
        let curve = roc_auc(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]).unwrap();
        assert_eq!(curve.auc, 0.5);
    }

    #[test]
    fn four_point_case_matches_pair_counting() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0, 0, 1, 1];
        let curve = roc_auc(&scores, &labels).unwrap();
        assert_eq!(curve.auc, 0.75);
        assert_eq!(curve.auc, mann_whitney_auc(&scores, &labels).unwrap());
    }

    #[test]
    fn curve_starts_at_origin_and_ends_at_one_one() {
        let curve = roc_auc(&[0.3, 0.1, 0.9, 0.3], &[0, 0, 1, 1]).unwrap();
        assert_eq!((curve.fpr[0], curve.tpr[0]), (0.0, 0.0));
        let last = curve.fpr.len() - 1;
        assert_eq!((curve.fpr[last], curve.tpr[last]), (1.0, 1.0));
        assert!(curve
            .thresholds
            .windows(2)
            .all(|w| w[0] >= w[1]));
        assert!(curve.tpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(curve.fpr.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::SingleClassLabels)
        ));
    }

    #[test]
    fn matches_mann_whitney_with_ties() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(2..120);
            // Coarse quantization forces plenty of ties.
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random::<f64>() * 8.0).round() / 8.0)
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
            labels[0] = 0;
            labels[n - 1] = 1;
            let trapezoid = roc_auc(&scores, &labels).unwrap().auc;
            let pairwise = mann_whitney_auc(&scores, &labels).unwrap();
            assert_eq!(trapezoid, pairwise);
        }
    }

    #[test]
    fn auc_flip_identity() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let scores: Vec<f64> = (0..60).map(|_| rng.random()).collect();
        let mut labels: Vec<u8> = (0..60).map(|_| u8::from(rng.random::<bool>())).collect();
        labels[0] = 0;
        labels[1] = 1;
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let auc_neg = roc_auc(&negated, &labels).unwrap().auc;
        assert!((auc + auc_neg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_rendering_includes_reference_row() {
        let report = Report {
            entries: vec![("auc.app.raw".into(), 0.5)],
            frames_evaluated: 10,
        };
        let kv = report.render_kv();
        assert!(kv.contains("auc.app.raw=0.5"));
        assert!(kv.contains("reference.shanghaitech.auc_percent=86.18"));
        assert!(kv.contains("reference.ucsd_ped2.auc_percent=97.76"));
        assert!(kv.contains("reference.ucsd_ped1.auc_percent=88.61"));
        let table = report.render_table();
        assert!(table.contains("shanghaitech"));
    }
}
