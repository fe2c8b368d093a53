use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{apply_channel, apply_impairments, ChannelParams, TransmitterProfile};
use crate::sigcore::{normalize, Waveform};
use crate::{Error, Result};

/// A replay attacker: its SDR's impairment chain, the link into the victim
/// receiver and the converter resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attacker {
    pub profile: TransmitterProfile,
    /// Defaults to a noiseless wire.
    pub channel: ChannelParams,
    /// Converter resolution in bits; `None` disables quantization.
    pub quantization_bits: Option<u32>,
}

impl Attacker {
    pub fn new(profile: TransmitterProfile) -> Self {
        Attacker {
            profile,
            channel: ChannelParams::noiseless(),
            quantization_bits: Some(8),
        }
    }
}

fn quantize(x: f32, levels: f64) -> f32 {
    let step = 2.0 / (levels - 1.0);
    let k = ((x as f64 + 1.0) / step).round().clamp(0.0, levels - 1.0);
    (k * step - 1.0) as f32
}

/// Re-transmits a captured waveform through the attacker's hardware.
///
/// The waveform passes the attacker impairments and link, is scaled to full
/// scale and quantized to `quantization_bits`, then normalized again.
pub fn replay<R: Rng + ?Sized>(w: &Waveform, attacker: &Attacker, rng: &mut R) -> Result<Waveform> {
    let impaired = apply_impairments(w, &attacker.profile, rng)?;
    let sent = normalize(&apply_channel(&impaired, &attacker.channel, rng)?)?;
    let Some(bits) = attacker.quantization_bits else {
        return Ok(sent);
    };
    if !(1..=24).contains(&bits) {
        return Err(Error::MalformedInput(format!("quantization bits {bits} outside 1..=24")));
    }
    let levels = (1u64 << bits) as f64;
    let i = sent.i().iter().map(|v| quantize(*v, levels)).collect();
    let q = sent.q().iter().map(|v| quantize(*v, levels)).collect();
    let mut out = Waveform::new(i, q)?;
    if let Some(rate) = w.sample_rate_hint() {
        out = out.with_sample_rate(rate);
    }
    normalize(&out)
}
