use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// TPR targets of the default threshold table.
pub const DEFAULT_TPR_TARGETS: [f64; 8] = [0.999, 0.990, 0.950, 0.900, 0.861, 0.805, 0.672, 0.424];

/// Accept iff `score <= threshold`.
pub fn decide(score: f64, threshold: f64) -> bool {
    score <= threshold
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub fnr: f64,
}

/// Threshold sweep over all distinct scores.
///
/// The first row sits one unit below the smallest score, where nothing is
/// accepted; the last row is the largest score, where everything is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Config(format!(
            "need positive and negative scores, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    if pos.iter().chain(neg).any(|s| !s.is_finite()) {
        return Err(Error::MalformedInput("scores must be finite".into()));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Number of elements of sorted `s` that are `<= t`.
fn count_le(s: &[f64], t: f64) -> usize {
    s.partition_point(|&x| x <= t)
}

pub fn compute_roc(pos: &[f64], neg: &[f64]) -> Result<RocCurve> {
    check_scores(pos, neg)?;
    let (ps, ns) = (sorted(pos), sorted(neg));
    let mut thresholds: Vec<f64> = ps.iter().chain(&ns).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.insert(0, thresholds[0] - 1.0);
    let (np, nn) = (ps.len() as f64, ns.len() as f64);
    let points = thresholds
        .into_iter()
        .map(|t| {
            let tpr = count_le(&ps, t) as f64 / np;
            RocPoint { threshold: t, fpr: count_le(&ns, t) as f64 / nn, tpr, fnr: 1.0 - tpr }
        })
        .collect();
    Ok(RocCurve { points, n_pos: ps.len(), n_neg: ns.len() })
}

/// Probability that a random positive scores below a random negative, ties
/// counting one half.
pub fn compute_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let ns = sorted(neg);
    let mut wins = 0.0;
    for &p in pos {
        let below_or_eq = ns.partition_point(|&x| x <= p);
        let below = ns.partition_point(|&x| x < p);
        wins += (ns.len() - below_or_eq) as f64 + 0.5 * (below_or_eq - below) as f64;
    }
    Ok(wins / (pos.len() * ns.len()) as f64)
}

/// Trapezoidal area under the TPR-vs-FPR curve.
pub fn trapezoid_auc(curve: &RocCurve) -> f64 {
    curve.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

/// Equal error rate and its threshold, by linear interpolation between the
/// last sweep row with `FPR < FNR` and the first with `FPR >= FNR`.
pub fn compute_eer(curve: &RocCurve) -> (f64, f64) {
    let pts = &curve.points;
    let Some(k) = pts.iter().position(|p| p.fpr >= p.fnr) else {
        let last = pts.last().expect("curve has rows");
        return (last.fnr, last.threshold);
    };
    if k == 0 {
        return (pts[0].fpr, pts[0].threshold);
    }
    let (a, b) = (pts[k - 1], pts[k]);
    let (d0, d1) = (a.fpr - a.fnr, b.fpr - b.fnr);
    let lam = -d0 / (d1 - d0);
    (a.fpr + lam * (b.fpr - a.fpr), a.threshold + lam * (b.threshold - a.threshold))
}

/// Smallest threshold reaching a target true positive rate, and the false
/// positive rate there. `tpr` holds the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub tpr: f64,
    pub fpr: f64,
    pub threshold: f64,
}

pub fn threshold_table(pos: &[f64], neg: &[f64], targets: &[f64]) -> Result<Vec<ThresholdRow>> {
    check_scores(pos, neg)?;
    let (ps, ns) = (sorted(pos), sorted(neg));
    targets
        .iter()
        .map(|&target| {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::Config(format!("TPR target {target} outside (0, 1]")));
            }
            // The k-th smallest positive is the first threshold accepting k positives.
            let k = ((target * ps.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            let threshold = ps[k.min(ps.len()) - 1];
            Ok(ThresholdRow { tpr: target, fpr: count_le(&ns, threshold) as f64 / ns.len() as f64, threshold })
        })
        .collect()
}

/// Summary of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub anchors: usize,
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold_table: Vec<ThresholdRow>,
}

impl MetricsReport {
    /// Metrics and curve for positive (genuine) and negative scores.
    pub fn from_scores(
        scenario: impl Into<String>,
        anchors: usize,
        pos: &[f64],
        neg: &[f64],
        targets: &[f64],
    ) -> Result<(MetricsReport, RocCurve)> {
        let curve = compute_roc(pos, neg)?;
        let auc = compute_auc(pos, neg)?;
        let (eer, eer_threshold) = compute_eer(&curve);
        let report = MetricsReport {
            scenario: scenario.into(),
            anchors,
            auc,
            eer,
            eer_threshold,
            n_pos: pos.len(),
            n_neg: neg.len(),
            threshold_table: threshold_table(pos, neg, targets)?,
        };
        Ok((report, curve))
    }
}
