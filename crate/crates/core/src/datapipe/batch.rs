use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;

use crate::sigcore::Waveform;
use crate::synth::{rng_from_seed, MessageRecord, SynthRng};
use crate::{Error, Result};

pub const BATCH_TRANSMITTERS: usize = 8;
pub const PER_TRANSMITTER: usize = 4;
pub const BATCH_SIZE: usize = BATCH_TRANSMITTERS * PER_TRANSMITTER;

/// 32 messages: 4 from each of 8 distinct transmitters, grouped by label.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub waveforms: Vec<&'a Waveform>,
    pub labels: Vec<u32>,
    /// Positions of the messages in the sampler's record slice.
    pub indices: Vec<usize>,
}

/// Epoch-based sampler of triplet-friendly batches.
///
/// Within an epoch no record is used twice. Each batch takes 8 distinct
/// transmitters among those with at least 4 unused records, preferring the
/// ones with the most unused records (ties in random order), and 4 random
/// unused records from each. The epoch ends when fewer than 8 transmitters
/// remain eligible; pools are reshuffled for the next one.
///
/// Iterating yields batches forever, rolling over epochs.
pub struct BatchSampler<'a> {
    records: &'a [MessageRecord],
    by_label: BTreeMap<u32, Vec<usize>>,
    rng: SynthRng,
    queue: VecDeque<Vec<usize>>,
    epochs: usize,
}

impl<'a> BatchSampler<'a> {
    pub fn new(records: &'a [MessageRecord], seed: u64) -> Result<Self> {
        let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (k, r) in records.iter().enumerate() {
            by_label.entry(r.transmitter_id).or_default().push(k);
        }
        let eligible = by_label.values().filter(|v| v.len() >= PER_TRANSMITTER).count();
        if eligible < BATCH_TRANSMITTERS {
            let deficient: Vec<String> = by_label
                .iter()
                .filter(|(_, v)| v.len() < PER_TRANSMITTER)
                .map(|(l, v)| format!("{l} ({} records)", v.len()))
                .collect();
            return Err(Error::Config(format!(
                "batches need {BATCH_TRANSMITTERS} transmitters with >= {PER_TRANSMITTER} records; \
                 {eligible} of {} qualify; deficient labels: [{}]",
                by_label.len(),
                deficient.join(", ")
            )));
        }
        Ok(BatchSampler {
            records,
            by_label,
            rng: rng_from_seed(seed),
            queue: VecDeque::new(),
            epochs: 0,
        })
    }

    pub fn epochs_started(&self) -> usize {
        self.epochs
    }

    fn plan_epoch(&mut self) -> Vec<Vec<usize>> {
        let mut pools: Vec<(u32, Vec<usize>)> = self
            .by_label
            .iter()
            .map(|(l, v)| {
                let mut v = v.clone();
                v.shuffle(&mut self.rng);
                (*l, v)
            })
            .collect();
        let mut batches = Vec::new();
        loop {
            let mut eligible: Vec<usize> = (0..pools.len())
                .filter(|&k| pools[k].1.len() >= PER_TRANSMITTER)
                .collect();
            if eligible.len() < BATCH_TRANSMITTERS {
                break;
            }
            eligible.shuffle(&mut self.rng);
            eligible.sort_by_key(|&k| std::cmp::Reverse(pools[k].1.len()));
            let mut batch = Vec::with_capacity(BATCH_SIZE);
            for &k in &eligible[..BATCH_TRANSMITTERS] {
                let pool = &mut pools[k].1;
                batch.extend(pool.drain(pool.len() - PER_TRANSMITTER..));
            }
            batches.push(batch);
        }
        self.epochs += 1;
        batches
    }

    fn materialize(&self, indices: Vec<usize>) -> Batch<'a> {
        let records = self.records;
        Batch {
            waveforms: indices.iter().map(|&k| &records[k].waveform).collect(),
            labels: indices.iter().map(|&k| records[k].transmitter_id).collect(),
            indices,
        }
    }

    /// All batches of the next epoch. Discards anything left of the current one.
    pub fn next_epoch(&mut self) -> Vec<Batch<'a>> {
        self.queue.clear();
        let plan = self.plan_epoch();
        plan.into_iter().map(|b| self.materialize(b)).collect()
    }
}

impl<'a> Iterator for BatchSampler<'a> {
    type Item = Batch<'a>;

    fn next(&mut self) -> Option<Batch<'a>> {
        if self.queue.is_empty() {
            let plan = self.plan_epoch();
            self.queue.extend(plan);
        }
        let b = self.queue.pop_front()?;
        Some(self.materialize(b))
    }
}

/// Checks the 8 x 4 label structure.
pub(crate) fn check_structure(labels: &[u32]) -> Result<()> {
    if labels.len() != BATCH_SIZE {
        return Err(Error::BatchStructure(format!(
            "expected {BATCH_SIZE} labels, got {}",
            labels.len()
        )));
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_default() += 1;
    }
    if counts.len() != BATCH_TRANSMITTERS || counts.values().any(|&c| c != PER_TRANSMITTER) {
        return Err(Error::BatchStructure(format!(
            "expected {BATCH_TRANSMITTERS} labels x {PER_TRANSMITTER}, got {counts:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn recs(n_tx: u32, per: &dyn Fn(u32) -> usize) -> Vec<MessageRecord> {
        let mut out = Vec::new();
        let mut id = 0;
        for tx in 0..n_tx {
            for _ in 0..per(tx) {
                out.push(MessageRecord {
                    transmitter_id: tx,
                    message_id: id,
                    timestamp_s: 0.0,
                    snr_db: 0.0,
                    noise_score: None,
                    waveform: Waveform::new(vec![id as f32], vec![0.0]).unwrap(),
                });
                id += 1;
            }
        }
        out
    }

    #[test]
    fn eight_by_four_single_batch() {
        let r = recs(8, &|_| 4);
        let mut s = BatchSampler::new(&r, 1).unwrap();
        let epoch = s.next_epoch();
        assert_eq!(epoch.len(), 1);
        let mut idx = epoch[0].indices.clone();
        idx.sort();
        assert_eq!(idx, (0..32).collect::<Vec<_>>());
        check_structure(&epoch[0].labels).unwrap();
    }

    #[test]
    fn sixteen_by_eight_four_batches() {
        let r = recs(16, &|_| 8);
        let mut s = BatchSampler::new(&r, 7).unwrap();
        let epoch = s.next_epoch();
        assert_eq!(epoch.len(), 4);
        let mut seen = HashSet::new();
        for b in &epoch {
            check_structure(&b.labels).unwrap();
            for &i in &b.indices {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 128);
    }

    #[test]
    fn seven_transmitters_rejected() {
        let r = recs(7, &|_| 10);
        let err = BatchSampler::new(&r, 0).err().unwrap();
        assert!(matches!(err, Error::Config(_)));
        let r = recs(9, &|tx| if tx < 2 { 3 } else { 10 });
        match BatchSampler::new(&r, 0) {
            Err(Error::Config(msg)) => assert!(msg.contains("0 (3 records)") && msg.contains("1 (3 records)"), "{msg}"),
            _ => panic!("expected configuration error"),
        }
    }

    #[test]
    fn deterministic_and_reshuffled_per_epoch() {
        let r = recs(12, &|tx| 5 + tx as usize);
        let a: Vec<Vec<usize>> = BatchSampler::new(&r, 3).unwrap().take(10).map(|b| b.indices).collect();
        let b: Vec<Vec<usize>> = BatchSampler::new(&r, 3).unwrap().take(10).map(|b| b.indices).collect();
        assert_eq!(a, b);
        let mut s = BatchSampler::new(&r, 3).unwrap();
        let e1: Vec<_> = s.next_epoch().into_iter().map(|b| b.indices).collect();
        let e2: Vec<_> = s.next_epoch().into_iter().map(|b| b.indices).collect();
        assert_ne!(e1, e2);
    }

    #[test]
    fn structure_check_rejects_bad_batches() {
        assert!(check_structure(&[0; 32]).is_err());
        assert!(check_structure(&[0; 4]).is_err());
        let good: Vec<u32> = (0..32).map(|k| k / 4).collect();
        check_structure(&good).unwrap();
    }

    proptest::proptest! {
        #[test]
        fn every_batch_is_eight_by_four(
            sizes in proptest::collection::vec(0usize..30, 8..20),
            seed in proptest::prelude::any::<u64>(),
        ) {
            let r = recs(sizes.len() as u32, &|tx| sizes[tx as usize]);
            let Ok(mut s) = BatchSampler::new(&r, seed) else {
                proptest::prop_assume!(false);
                unreachable!()
            };
            for _ in 0..2 {
                let mut seen = HashSet::new();
                for b in s.next_epoch() {
                    proptest::prop_assert!(check_structure(&b.labels).is_ok());
                    for &i in &b.indices {
                        proptest::prop_assert!(seen.insert(i));
                    }
                }
            }
        }
    }
}
