//! Record persistence, dataset splits, noise filtering and triplet batches.

pub(crate) mod batch;
mod filter;
mod siq;
mod split;

pub use batch::{Batch, BatchSampler, BATCH_SIZE, BATCH_TRANSMITTERS, PER_TRANSMITTER};
pub use filter::{filter_by_noise, keep_count};
pub use siq::{open_records, read_records, write_records, RecordReader, RecordWriter, SIQ_MAGIC, SIQ_VERSION};
pub use split::{apportion, partition_transmitters, split_dataset, DatasetSplit};
