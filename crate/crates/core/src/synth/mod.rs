//! Synthetic stand-in for a capture rig: per-transmitter hardware
//! impairments, channel effects, labeled dataset generation and an
//! over-the-wire replay attacker.

mod channel;
mod dataset;
mod impair;
mod replay;

pub use channel::{apply_channel, ChannelParams, Tap};
pub use dataset::{generate_dataset, ChannelConfig, GenConfig, MessageCount, MessageRecord};
pub use impair::{apply_impairments, make_profile, TransmitterProfile};
pub use replay::{replay, Attacker};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere a seeded stream is needed.
pub type SynthRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}
