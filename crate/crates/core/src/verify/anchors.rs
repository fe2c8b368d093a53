use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::model::{angular_distance, Embedding, FingerprintModel};
use crate::sigcore::Waveform;
use crate::synth::{rng_from_seed, MessageRecord};
use crate::{Error, Result};

/// Known-good embeddings of one transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    transmitter_id: u32,
    embeddings: Vec<Embedding>,
    message_ids: Vec<u64>,
    /// Timestamp of the newest source message, in seconds.
    created_at: f64,
}

impl AnchorSet {
    pub fn new(transmitter_id: u32, embeddings: Vec<Embedding>, message_ids: Vec<u64>, created_at: f64) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::Config(format!("anchor set for transmitter {transmitter_id} is empty")));
        }
        if message_ids.len() != embeddings.len() {
            return Err(Error::Shape { what: "anchor message ids", expected: embeddings.len(), actual: message_ids.len() });
        }
        let dim = embeddings[0].dim();
        if let Some(e) = embeddings.iter().find(|e| e.dim() != dim) {
            return Err(Error::Shape { what: "anchor embedding", expected: dim, actual: e.dim() });
        }
        Ok(AnchorSet { transmitter_id, embeddings, message_ids, created_at })
    }

    /// Encodes `records`, which must all come from one transmitter.
    pub fn from_records(model: &FingerprintModel, records: &[&MessageRecord]) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::Config("anchor set needs at least one record".into()));
        };
        let tx = first.transmitter_id;
        if let Some(r) = records.iter().find(|r| r.transmitter_id != tx) {
            return Err(Error::Config(format!(
                "anchor records mix transmitters {tx} and {}",
                r.transmitter_id
            )));
        }
        let ws: Vec<&Waveform> = records.iter().map(|r| &r.waveform).collect();
        let embeddings = model.encode_many(&ws)?;
        let created_at = records.iter().map(|r| r.timestamp_s).fold(f64::NEG_INFINITY, f64::max);
        AnchorSet::new(tx, embeddings, records.iter().map(|r| r.message_id).collect(), created_at)
    }

    pub fn transmitter_id(&self) -> u32 {
        self.transmitter_id
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn message_ids(&self) -> &[u64] {
        &self.message_ids
    }

    pub fn created_at(&self) -> f64 {
        self.created_at
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    /// The first `n` anchors as a new set.
    pub fn truncated(&self, n: usize) -> Result<AnchorSet> {
        if n == 0 || n > self.len() {
            return Err(Error::Config(format!("cannot take {n} of {} anchors", self.len())));
        }
        AnchorSet::new(
            self.transmitter_id,
            self.embeddings[..n].to_vec(),
            self.message_ids[..n].to_vec(),
            self.created_at,
        )
    }

    /// Mean angular distance from `e` to the anchors. Distances are summed
    /// in sorted order so the result does not depend on anchor order.
    pub fn score_embedding(&self, e: &Embedding) -> Result<f64> {
        let mut d = self.embeddings.iter().map(|a| angular_distance(e, a)).collect::<Result<Vec<f64>>>()?;
        d.sort_by(f64::total_cmp);
        Ok(d.iter().sum::<f64>() / d.len() as f64)
    }
}

/// Shuffle split of one transmitter's records: `n` uniformly chosen anchors
/// and the rest, both in shuffled order. For a fixed seed the anchors for a
/// smaller `n` are a prefix of those for a larger one.
pub fn select_anchors<'a>(
    records: &[&'a MessageRecord],
    n: usize,
    seed: u64,
) -> Result<(Vec<&'a MessageRecord>, Vec<&'a MessageRecord>)> {
    if n == 0 || records.len() < n + 1 {
        return Err(Error::Config(format!(
            "need at least {} records to select {n} anchors, have {}",
            n + 1,
            records.len()
        )));
    }
    let mut order: Vec<&MessageRecord> = records.to_vec();
    order.shuffle(&mut rng_from_seed(seed));
    let rest = order.split_off(n);
    Ok((order, rest))
}

/// Mean angular distance between the embedding of `w` and the anchors.
pub fn score_message(w: &Waveform, anchors: &AnchorSet, model: &FingerprintModel) -> Result<f64> {
    anchors.score_embedding(&model.encode(w)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, GenConfig, MessageCount};
    use rand::Rng;

    fn emb(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn records(n: usize) -> Vec<MessageRecord> {
        let cfg = GenConfig {
            n_transmitters: 2,
            messages: MessageCount::Fixed { count: n },
            oversampling: 4,
            ..GenConfig::default()
        };
        generate_dataset(&cfg).unwrap().into_iter().filter(|r| r.transmitter_id == 0).collect()
    }

    #[test]
    fn shuffle_split_counts_and_determinism() {
        let recs = records(40);
        let refs: Vec<&MessageRecord> = recs.iter().collect();
        let (a, rest) = select_anchors(&refs, 16, 7).unwrap();
        assert_eq!((a.len(), rest.len()), (16, 24));
        let mut ids: Vec<u64> = a.iter().chain(&rest).map(|r| r.message_id).collect();
        ids.sort();
        assert_eq!(ids, (0..40).collect::<Vec<u64>>());
        let (a2, _) = select_anchors(&refs, 16, 7).unwrap();
        assert_eq!(a, a2);
        let (small, _) = select_anchors(&refs, 4, 7).unwrap();
        assert_eq!(small[..], a[..4]);
        let (one, rest) = select_anchors(&refs[..2], 1, 0).unwrap();
        assert_eq!((one.len(), rest.len()), (1, 1));
        assert!(matches!(select_anchors(&refs[..16], 16, 0), Err(Error::Config(_))));
    }

    #[test]
    fn scoring_examples() {
        let m = emb(&[1.0, 0.0]);
        let own = AnchorSet::new(3, vec![emb(&[2.0, 0.0])], vec![0], 0.0).unwrap();
        assert_eq!(own.score_embedding(&m).unwrap(), 0.0);
        // Distances 0.2 and 0.6 from the unit x axis.
        let at = |d: f64| emb(&[(1.0 - d) as f32, (1.0 - (1.0 - d) * (1.0 - d)).sqrt() as f32]);
        let two = AnchorSet::new(3, vec![at(0.2), at(0.6)], vec![0, 1], 0.0).unwrap();
        assert!((two.score_embedding(&m).unwrap() - 0.4).abs() < 1e-6);
        assert!(AnchorSet::new(3, vec![], vec![], 0.0).is_err());
    }

    #[test]
    fn score_is_mean_and_order_invariant() {
        let mut rng = rng_from_seed(1);
        let mut v = || emb(&(0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>());
        let probe = v();
        let anchors: Vec<Embedding> = (0..16).map(|_| v()).collect();
        let set = AnchorSet::new(0, anchors.clone(), (0..16).collect(), 0.0).unwrap();
        let brute: f64 = anchors.iter().map(|a| angular_distance(&probe, a).unwrap()).sum::<f64>() / 16.0;
        assert!((set.score_embedding(&probe).unwrap() - brute).abs() < 1e-12);
        let mut rev = anchors.clone();
        rev.reverse();
        let rset = AnchorSet::new(0, rev, (0..16).collect(), 0.0).unwrap();
        assert_eq!(rset.score_embedding(&probe).unwrap(), set.score_embedding(&probe).unwrap());
        assert_eq!(set.truncated(4).unwrap().len(), 4);
    }
}
