//! Score CSV schema shared by the `score` and `eval` stages.
//!
//! Columns: `clip_id,frame_index,app_raw,mot_raw,app_smooth,mot_smooth,fused`
//! then the extra stage columns `app_refined,mot_refined,fused_raw,
//! fused_refined`, optional threshold flags `app_flag,mot_flag,any_flag`,
//! and an optional trailing `label`. `fused` is the fused smoothed score.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub clip_id: String,
    pub frame_index: usize,
    pub app_raw: f64,
    pub mot_raw: f64,
    pub app_smooth: f64,
    pub mot_smooth: f64,
    /// Fused smoothed score (the headline series).
    pub fused: f64,
    pub app_refined: f64,
    pub mot_refined: f64,
    pub fused_raw: f64,
    pub fused_refined: f64,
    /// `(app, mot, any)` OR-rule flags, present when thresholds are configured.
    pub flags: Option<(u8, u8, u8)>,
    pub label: Option<u8>,
}

const BASE_COLUMNS: [&str; 11] = [
    "clip_id",
    "frame_index",
    "app_raw",
    "mot_raw",
    "app_smooth",
    "mot_smooth",
    "fused",
    "app_refined",
    "mot_refined",
    "fused_raw",
    "fused_refined",
];
const FLAG_COLUMNS: [&str; 3] = ["app_flag", "mot_flag", "any_flag"];

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let has_flags = rows.iter().any(|r| r.flags.is_some());
    let has_labels = rows.iter().any(|r| r.label.is_some());

    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if has_flags {
        header.extend(FLAG_COLUMNS);
    }
    if has_labels {
        header.push("label");
    }
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;

    for row in rows {
        let mut record: Vec<String> = vec![
            row.clip_id.clone(),
            row.frame_index.to_string(),
            fmt(row.app_raw),
            fmt(row.mot_raw),
            fmt(row.app_smooth),
            fmt(row.mot_smooth),
            fmt(row.fused),
            fmt(row.app_refined),
            fmt(row.mot_refined),
            fmt(row.fused_raw),
            fmt(row.fused_refined),
        ];
        if has_flags {
            let (a, m, any) = row.flags.unwrap_or((0, 0, 0));
            record.push(a.to_string());
            record.push(m.to_string());
            record.push(any.to_string());
        }
        if has_labels {
            record.push(row.label.map(|l| l.to_string()).unwrap_or_default());
        }
        writer.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let index: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, name)| (name, i))
        .collect();
    for required in BASE_COLUMNS {
        if !index.contains_key(required) {
            return Err(Error::parse(path, format!("missing column `{required}`")));
        }
    }
    let has_flags = FLAG_COLUMNS.iter().all(|c| index.contains_key(c));
    let label_col = index.get("label").copied();

    let field = |record: &csv::StringRecord, name: &str| -> String {
        record.get(index[name]).unwrap_or_default().to_string()
    };
    let float = |record: &csv::StringRecord, name: &str| -> Result<f64> {
        let raw = field(record, name);
        raw.parse()
            .map_err(|_| Error::parse(path, format!("bad float `{raw}` in column {name}")))
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let frame_index: usize = field(&record, "frame_index")
            .parse()
            .map_err(|_| Error::parse(path, "bad frame_index".to_string()))?;
        let flags = if has_flags {
            let parse_flag = |name: &str| -> Result<u8> {
                let raw = field(&record, name);
                raw.parse()
                    .map_err(|_| Error::parse(path, format!("bad flag `{raw}` in {name}")))
            };
            Some((
                parse_flag("app_flag")?,
                parse_flag("mot_flag")?,
                parse_flag("any_flag")?,
            ))
        } else {
            None
        };
        let label = match label_col {
            Some(col) => {
                let raw = record.get(col).unwrap_or_default();
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse().map_err(|_| {
                        Error::parse(path, format!("label must be 0 or 1, got `{raw}`"))
                    })?)
                }
            }
            None => None,
        };
        rows.push(ScoreRow {
            clip_id: field(&record, "clip_id"),
            frame_index,
            app_raw: float(&record, "app_raw")?,
            mot_raw: float(&record, "mot_raw")?,
            app_smooth: float(&record, "app_smooth")?,
            mot_smooth: float(&record, "mot_smooth")?,
            fused: float(&record, "fused")?,
            app_refined: float(&record, "app_refined")?,
            mot_refined: float(&record, "mot_refined")?,
            fused_raw: float(&record, "fused_raw")?,
            fused_refined: float(&record, "fused_refined")?,
            flags,
            label,
        });
    }
    Ok(rows)
}

// Shortest round-trip formatting keeps CSVs byte-stable across runs.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(clip: &str, idx: usize, label: Option<u8>) -> ScoreRow {
        ScoreRow {
            clip_id: clip.into(),
            frame_index: idx,
            app_raw: 0.125 + idx as f64,
            mot_raw: 0.25,
            app_smooth: 0.0625,
            mot_smooth: 1.5,
            fused: 2.25,
            app_refined: 0.1,
            mot_refined: 0.2,
            fused_raw: 0.3,
            fused_refined: 0.4,
            flags: None,
            label,
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let rows = vec![row("a", 0, Some(0)), row("a", 1, Some(1)), row("b", 0, None)];
        write_scores(&path, &rows).unwrap();
        let back = read_scores(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn flags_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let mut r = row("a", 0, Some(1));
        r.flags = Some((1, 0, 1));
        write_scores(&path, std::slice::from_ref(&r)).unwrap();
        let back = read_scores(&path).unwrap();
        assert_eq!(back[0].flags, Some((1, 0, 1)));
    }

    #[test]
    fn missing_column_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(&path, "clip_id,frame_index\na,0\n").unwrap();
        assert!(read_scores(&path).is_err());
    }
}
