use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{apply_channel, apply_impairments, make_profile, rng_from_seed, ChannelParams, Tap, TransmitterProfile};
use crate::seed::derive;
use crate::sigcore::{modulate_qpsk, noise_score, normalize, HeaderSpec, Waveform};
use crate::{Error, Result};

const SECONDS_PER_DAY: f64 = 86_400.0;

// Seed-derivation tags.
const TAG_PROFILE: u64 = 0x5052_4f46;
const TAG_ECHO: u64 = 0x4543_484f;
const TAG_COUNT: u64 = 0x434f_554e;
const TAG_TIME: u64 = 0x5449_4d45;
const TAG_MESSAGE: u64 = 0x4d53_4753;

/// One labeled header capture.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub transmitter_id: u32,
    pub message_id: u64,
    pub timestamp_s: f64,
    pub snr_db: f32,
    pub noise_score: Option<f32>,
    pub waveform: Waveform,
}

impl MessageRecord {
    pub fn day(&self) -> f64 {
        self.timestamp_s / SECONDS_PER_DAY
    }
}

/// How many messages each transmitter contributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageCount {
    Fixed { count: usize },
    /// Right-skewed counts: a shifted exponential with the given mean, capped
    /// at `max`. Transmitters receive stratified quantiles in shuffled order
    /// so the empirical mean tracks `mean` closely even for few transmitters.
    Skewed { mean: f64, min: usize, max: usize },
}

impl MessageCount {
    fn counts(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        match *self {
            MessageCount::Fixed { count } => Ok(vec![count; n]),
            MessageCount::Skewed { mean, min, max } => {
                if !(mean > min as f64) || max < min {
                    return Err(Error::Config(format!(
                        "skewed message count needs min < mean and min <= max (min {min}, mean {mean}, max {max})"
                    )));
                }
                let scale = mean - min as f64;
                let mut counts: Vec<usize> = (0..n)
                    .map(|k| {
                        let u = (k as f64 + 0.5) / n as f64;
                        let draw = min as f64 - scale * (1.0 - u).ln();
                        (draw.round() as usize).min(max)
                    })
                    .collect();
                counts.shuffle(&mut rng_from_seed(seed));
                Ok(counts)
            }
        }
    }
}

/// Propagation conditions shared by a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// Mean SNR in dB; `None` disables noise.
    pub snr_db: Option<f64>,
    /// Per-message SNR is uniform in `snr_db +- snr_spread_db`.
    pub snr_spread_db: f64,
    /// Standard deviation of the residual carrier phase left by the receiver's
    /// phase synchronization, radians.
    pub phase_jitter: f64,
    /// Magnitude of the per-transmitter echo path at day 0.
    pub echo_gain: f64,
    /// Largest echo delay in samples.
    pub echo_max_delay: usize,
    /// Relative echo growth per simulated day.
    pub drift_rate: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            snr_db: Some(25.0),
            snr_spread_db: 3.0,
            phase_jitter: 0.02,
            echo_gain: 0.05,
            echo_max_delay: 10,
            drift_rate: 0.0,
        }
    }
}

/// Corpus generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_transmitters: usize,
    pub messages: MessageCount,
    pub severity: f64,
    pub oversampling: usize,
    pub channel: ChannelConfig,
    /// First simulated day of the capture window.
    pub start_day: f64,
    pub duration_days: f64,
    /// Message ids for each transmitter start here, so a later capture of the
    /// same transmitters gets fresh ids and fresh randomness.
    pub first_message_id: u64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_transmitters: 60,
            messages: MessageCount::Fixed { count: 200 },
            severity: 0.5,
            oversampling: crate::sigcore::DEFAULT_OVERSAMPLING,
            channel: ChannelConfig::default(),
            start_day: 0.0,
            duration_days: 23.0,
            first_message_id: 0,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn header_spec(&self) -> HeaderSpec {
        HeaderSpec::iridium(self.oversampling)
    }

    /// The hardware profile of transmitter `tx` under this config.
    pub fn profile(&self, tx: u32) -> Result<TransmitterProfile> {
        Ok(make_profile(derive(&[self.seed, tx as u64, TAG_PROFILE]), self.severity)?
            .with_id(tx as u64))
    }

    /// Day-0 channel of transmitter `tx`: a single echo with a transmitter
    /// specific delay and phase.
    pub fn base_channel(&self, tx: u32) -> ChannelParams {
        let mut rng = rng_from_seed(derive(&[self.seed, tx as u64, TAG_ECHO]));
        let delay = rng.random_range(1..=self.channel.echo_max_delay.max(1));
        let mag = self.channel.echo_gain * rng.random_range(0.5..=1.0);
        let phase = rng.random_range(-PI..PI);
        let g = Complex64::from_polar(mag, phase);
        ChannelParams {
            snr_db: self.channel.snr_db,
            phase_rotation: 0.0,
            multipath_taps: if self.channel.echo_gain > 0.0 {
                vec![Tap { delay, gain_re: g.re, gain_im: g.im }]
            } else {
                Vec::new()
            },
            drift_rate: self.channel.drift_rate,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_transmitters < 2 {
            return Err(Error::Config(format!(
                "need at least 2 transmitters, got {}",
                self.n_transmitters
            )));
        }
        if self.oversampling == 0 {
            return Err(Error::Config("oversampling must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.severity) {
            return Err(Error::Config(format!("severity {} outside [0, 1]", self.severity)));
        }
        if !(self.duration_days >= 0.0) || !self.start_day.is_finite() {
            return Err(Error::Config("capture window must be finite and non-negative".into()));
        }
        if self.channel.snr_spread_db < 0.0 || self.channel.phase_jitter < 0.0 {
            return Err(Error::Config("spreads must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generates `normalize(channel(impair(modulate(header))))` records for every
/// transmitter, ordered by transmitter id then message id.
///
/// Each message draws from its own stream seeded by
/// `(seed, transmitter, message_id)`, so the output is a pure function of the
/// config.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Vec<MessageRecord>> {
    cfg.validate()?;
    let spec = cfg.header_spec();
    let clean = modulate_qpsk(&spec.bits, &spec)?;
    let counts = cfg.messages.counts(cfg.n_transmitters, derive(&[cfg.seed, TAG_COUNT]))?;
    let mut records = Vec::with_capacity(counts.iter().sum());
    for (tx, &count) in counts.iter().enumerate() {
        let tx = tx as u32;
        let profile = cfg.profile(tx)?;
        let base = cfg.base_channel(tx);
        let mut time_rng = rng_from_seed(derive(&[cfg.seed, tx as u64, TAG_TIME, cfg.first_message_id]));
        let mut days: Vec<f64> = (0..count)
            .map(|_| cfg.start_day + cfg.duration_days * time_rng.random::<f64>())
            .collect();
        days.sort_by(f64::total_cmp);
        for (k, day) in days.into_iter().enumerate() {
            let message_id = cfg.first_message_id + k as u64;
            let mut rng = rng_from_seed(derive(&[cfg.seed, tx as u64, message_id, TAG_MESSAGE]));
            let impaired = apply_impairments(&clean, &profile, &mut rng)?;
            let mut channel = base.at_day(day);
            let snr = cfg.channel.snr_db.map(|s| {
                s + cfg.channel.snr_spread_db * rng.random_range(-1.0..=1.0f64)
            });
            channel.snr_db = snr;
            let jitter: f64 = rng.sample(StandardNormal);
            channel.phase_rotation = cfg.channel.phase_jitter * jitter;
            let received = apply_channel(&impaired, &channel, &mut rng)?;
            let waveform = normalize(&received)?.with_sample_rate(spec.sample_rate());
            let score = noise_score(&waveform, &spec)? as f32;
            records.push(MessageRecord {
                transmitter_id: tx,
                message_id,
                timestamp_s: day * SECONDS_PER_DAY,
                snr_db: snr.map_or(f32::INFINITY, |s| s as f32),
                noise_score: Some(score),
                waveform,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GenConfig {
        GenConfig {
            n_transmitters: 8,
            messages: MessageCount::Fixed { count: 10 },
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn counts_per_label() {
        let recs = generate_dataset(&small(1)).unwrap();
        assert_eq!(recs.len(), 80);
        for tx in 0..8 {
            assert_eq!(recs.iter().filter(|r| r.transmitter_id == tx).count(), 10);
        }
        for r in &recs {
            assert_eq!(r.waveform.len(), 320);
            assert_eq!(r.waveform.max_abs(), 1.0);
            assert!(r.noise_score.unwrap() > 0.0);
            assert!((0.0..23.0 * SECONDS_PER_DAY).contains(&r.timestamp_s));
        }
    }

    #[test]
    fn bit_identical_regeneration() {
        let a = generate_dataset(&small(5)).unwrap();
        let b = generate_dataset(&small(5)).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&small(6)).unwrap();
        assert_ne!(a[0].waveform, c[0].waveform);
    }

    #[test]
    fn later_capture_keeps_profiles_but_not_messages() {
        let early = small(3);
        let later = GenConfig {
            first_message_id: 1000,
            start_day: 40.0,
            ..small(3)
        };
        assert_eq!(early.profile(2).unwrap(), later.profile(2).unwrap());
        let a = generate_dataset(&early).unwrap();
        let b = generate_dataset(&later).unwrap();
        assert_eq!(b[0].message_id, 1000);
        assert_ne!(a[0].waveform, b[0].waveform);
    }

    #[test]
    fn too_few_transmitters() {
        let cfg = GenConfig { n_transmitters: 1, ..small(0) };
        assert!(matches!(generate_dataset(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn skewed_counts_track_mean() {
        let cfg = MessageCount::Skewed { mean: 200.0, min: 4, max: 872 };
        let counts = cfg.counts(60, 17).unwrap();
        let mean = counts.iter().sum::<usize>() as f64 / 60.0;
        assert!((mean - 200.0).abs() <= 20.0, "mean {mean}");
        assert!(counts.iter().all(|&c| (4..=872).contains(&c)));
        assert!(counts.iter().max() > counts.iter().min());
    }

    #[test]
    fn skewed_dataset_mean_within_ten_percent() {
        let cfg = GenConfig {
            n_transmitters: 60,
            messages: MessageCount::Skewed { mean: 200.0, min: 4, max: 872 },
            oversampling: 4,
            seed: 2,
            ..GenConfig::default()
        };
        let recs = generate_dataset(&cfg).unwrap();
        let mean = recs.len() as f64 / 60.0;
        assert!((mean - 200.0).abs() <= 20.0, "mean {mean}");
    }
}
