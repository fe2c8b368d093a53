use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::synth::{rng_from_seed, MessageRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<MessageRecord>,
    pub validation: Vec<MessageRecord>,
    pub test: Vec<MessageRecord>,
    pub split_seed: u64,
}

/// Largest-remainder apportionment of `n` items over `ratios`.
///
/// Every part first gets `floor(n * ratio)`; the leftover items go to the
/// parts with the largest fractional remainders, earlier parts winning ties.
pub fn apportion(n: usize, ratios: &[f64]) -> Result<Vec<usize>> {
    if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Config(format!("ratios must be positive and finite, got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ratios must sum to 1, got {total}")));
    }
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        sizes[k] += 1;
    }
    Ok(sizes)
}

/// Shuffles by `seed` and cuts into train/validation/test by `ratios`.
pub fn split_dataset(records: Vec<MessageRecord>, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let sizes = apportion(records.len(), &ratios)?;
    let mut records = records;
    records.shuffle(&mut rng_from_seed(seed));
    let test = records.split_off(sizes[0] + sizes[1]);
    let validation = records.split_off(sizes[0]);
    Ok(DatasetSplit {
        train: records,
        validation,
        test,
        split_seed: seed,
    })
}

/// Separates the records of `excluded` transmitters into their own pool,
/// e.g. to hold them out of training entirely.
pub fn partition_transmitters(
    records: Vec<MessageRecord>,
    excluded: &BTreeSet<u32>,
) -> (Vec<MessageRecord>, Vec<MessageRecord>) {
    records
        .into_iter()
        .partition(|r| !excluded.contains(&r.transmitter_id))
}
