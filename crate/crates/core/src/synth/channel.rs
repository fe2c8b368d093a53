use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::sigcore::Waveform;
use crate::{Error, Result};

/// One echo path: the input delayed by `delay` samples and scaled by the
/// complex gain `(gain_re, gain_im)`. The direct path is implicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay: usize,
    pub gain_re: f64,
    pub gain_im: f64,
}

impl Tap {
    pub fn gain(&self) -> Complex64 {
        Complex64::new(self.gain_re, self.gain_im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub phase_rotation: f64,
    pub multipath_taps: Vec<Tap>,
    /// Relative growth of the echo gains per simulated day, see [`ChannelParams::at_day`].
    pub drift_rate: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl ChannelParams {
    pub fn noiseless() -> Self {
        ChannelParams {
            snr_db: None,
            phase_rotation: 0.0,
            multipath_taps: Vec::new(),
            drift_rate: 0.0,
        }
    }

    /// The channel as seen `day` simulated days after the reference epoch:
    /// every echo gain is multiplied by `1 + drift_rate * day`.
    pub fn at_day(&self, day: f64) -> ChannelParams {
        let factor = 1.0 + self.drift_rate * day;
        ChannelParams {
            multipath_taps: self
                .multipath_taps
                .iter()
                .map(|t| Tap {
                    delay: t.delay,
                    gain_re: t.gain_re * factor,
                    gain_im: t.gain_im * factor,
                })
                .collect(),
            drift_rate: 0.0,
            ..self.clone()
        }
    }
}

/// Multipath echoes, then a global phase rotation, then complex white
/// Gaussian noise at `snr_db` relative to the power of the signal at that
/// point.
pub fn apply_channel<R: Rng + ?Sized>(
    w: &Waveform,
    c: &ChannelParams,
    rng: &mut R,
) -> Result<Waveform> {
    if let Some(snr) = c.snr_db {
        if !snr.is_finite() {
            return Err(Error::MalformedInput(format!("snr_db must be finite, got {snr}")));
        }
    }
    let x = w.to_complex();
    let mut y = x.clone();
    for tap in &c.multipath_taps {
        let g = tap.gain();
        for k in tap.delay..x.len() {
            y[k] += g * x[k - tap.delay];
        }
    }
    if c.phase_rotation != 0.0 {
        let r = Complex64::from_polar(1.0, c.phase_rotation);
        y.iter_mut().for_each(|z| *z *= r);
    }
    if let Some(snr) = c.snr_db {
        let power = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / y.len() as f64;
        let sigma = (power / 10f64.powf(snr / 10.0) / 2.0).sqrt();
        for z in y.iter_mut() {
            let ni: f64 = rng.sample(StandardNormal);
            let nq: f64 = rng.sample(StandardNormal);
            *z += Complex64::new(ni * sigma, nq * sigma);
        }
    }
    let mut out = Waveform::from_complex(&y)?;
    if let Some(rate) = w.sample_rate_hint() {
        out = out.with_sample_rate(rate);
    }
    Ok(out)
}
