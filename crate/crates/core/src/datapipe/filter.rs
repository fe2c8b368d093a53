use crate::synth::MessageRecord;
use crate::{Error, Result};

/// `ceil(keep_fraction * n)`, treating products within 1e-9 of an integer as
/// that integer.
pub fn keep_count(keep_fraction: f64, n: usize) -> usize {
    let x = keep_fraction * n as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k as usize).min(n)
}

/// Keeps the `keep_fraction` of records with the lowest noise score.
///
/// Ties are broken by `(transmitter_id, message_id)` ascending. Kept records
/// stay in their input order.
pub fn filter_by_noise(records: Vec<MessageRecord>, keep_fraction: f64) -> Result<Vec<MessageRecord>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep_fraction must lie in (0, 1], got {keep_fraction}")));
    }
    if let Some(r) = records.iter().find(|r| r.noise_score.is_none()) {
        return Err(Error::Precondition(format!(
            "record (transmitter {}, message {}) has no noise score",
            r.transmitter_id, r.message_id
        )));
    }
    let keep = keep_count(keep_fraction, records.len());
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        ra.noise_score
            .unwrap()
            .total_cmp(&rb.noise_score.unwrap())
            .then(ra.transmitter_id.cmp(&rb.transmitter_id))
            .then(ra.message_id.cmp(&rb.message_id))
    });
    let mut kept = vec![false; records.len()];
    for &i in &order[..keep] {
        kept[i] = true;
    }
    Ok(records
        .into_iter()
        .zip(kept)
        .filter_map(|(r, k)| k.then_some(r))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcore::Waveform;
    use proptest::prelude::*;

    fn rec(tx: u32, id: u64, score: Option<f32>) -> MessageRecord {
        MessageRecord {
            transmitter_id: tx,
            message_id: id,
            timestamp_s: 0.0,
            snr_db: 0.0,
            noise_score: score,
            waveform: Waveform::new(vec![1.0], vec![0.0]).unwrap(),
        }
    }

    #[test]
    fn keep_all_is_identity() {
        let recs: Vec<_> = (0..10).map(|k| rec(0, k, Some((10 - k) as f32))).collect();
        assert_eq!(filter_by_noise(recs.clone(), 1.0).unwrap(), recs);
    }

    #[test]
    fn thirty_percent_of_hundred() {
        let recs: Vec<_> = (0..100).map(|k| rec(0, k, Some(((k * 37) % 101) as f32))).collect();
        let kept = filter_by_noise(recs.clone(), 0.3).unwrap();
        assert_eq!(kept.len(), 30);
        let max_kept = kept.iter().map(|r| r.noise_score.unwrap()).fold(f32::MIN, f32::max);
        let min_dropped = recs
            .iter()
            .filter(|r| !kept.iter().any(|k| k.message_id == r.message_id))
            .map(|r| r.noise_score.unwrap())
            .fold(f32::MAX, f32::min);
        assert!(max_kept <= min_dropped);
    }

    #[test]
    fn equal_scores_break_ties_by_ids() {
        let recs: Vec<_> = (0..10).rev().map(|k| rec(0, k, Some(0.5))).collect();
        let kept = filter_by_noise(recs, 0.5).unwrap();
        let mut ids: Vec<u64> = kept.iter().map(|r| r.message_id).collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn unset_scores_rejected() {
        let recs = vec![rec(0, 0, Some(1.0)), rec(0, 1, None)];
        assert!(matches!(filter_by_noise(recs, 0.5), Err(Error::Precondition(_))));
        assert!(matches!(filter_by_noise(vec![], 0.0), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn kept_scores_never_exceed_dropped(
            scores in prop::collection::vec(0u8..20, 1..80),
            keep in 0.01f64..=1.0,
        ) {
            let recs: Vec<_> = scores
                .iter()
                .enumerate()
                .map(|(k, s)| rec((k % 3) as u32, k as u64, Some(*s as f32 / 4.0)))
                .collect();
            let n = recs.len();
            let kept = filter_by_noise(recs.clone(), keep).unwrap();
            prop_assert_eq!(kept.len(), (keep * n as f64 - 1e-9).ceil().max(0.0) as usize);
            let kept_ids: std::collections::HashSet<u64> = kept.iter().map(|r| r.message_id).collect();
            let max_kept = kept.iter().map(|r| r.noise_score.unwrap()).fold(f32::MIN, f32::max);
            for r in recs.iter().filter(|r| !kept_ids.contains(&r.message_id)) {
                prop_assert!(max_kept <= r.noise_score.unwrap());
            }
        }
    }
}
