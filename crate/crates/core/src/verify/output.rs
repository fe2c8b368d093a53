use std::fmt::Write as _;
use std::path::Path;

use super::metrics::{MetricsReport, RocCurve};
use crate::{write_atomic, Error, Result};

/// CSV with header `threshold,fpr,tpr,fnr`, one row per sweep point.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr,fnr\n");
    for p in &curve.points {
        writeln!(s, "{},{},{},{}", p.threshold, p.fpr, p.tpr, p.fnr).expect("writing to a String");
    }
    s
}

pub fn write_roc_csv(curve: &RocCurve, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, roc_csv(curve).as_bytes())
}

/// Pretty-printed single-object JSON.
pub fn metrics_json(report: &MetricsReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Config(format!("cannot serialize metrics: {e}")))
}

pub fn write_metrics_json(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let mut s = metrics_json(report)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_shapes() {
        let (report, roc) = MetricsReport::from_scores("closed", 4, &[0.1, 0.3], &[0.2, 0.4], &[0.5]).unwrap();
        let csv = roc_csv(&roc);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("threshold,fpr,tpr,fnr"));
        assert_eq!(lines.count(), roc.points.len());
        let v: serde_json::Value = serde_json::from_str(&metrics_json(&report).unwrap()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["scenario", "anchors", "auc", "eer", "eer_threshold", "n_pos", "n_neg", "threshold_table"] {
            assert!(keys.contains(&k), "{k}");
        }
        let row = &v["threshold_table"][0];
        assert!(row["tpr"].is_number() && row["fpr"].is_number() && row["threshold"].is_number());

        let dir = tempfile::tempdir().unwrap();
        write_roc_csv(&roc, dir.path().join("roc.csv")).unwrap();
        write_metrics_json(&report, dir.path().join("m.json")).unwrap();
        let back: MetricsReport =
            serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
