use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::sigcore::Waveform;
use crate::{Error, Result};

/// Persistent hardware impairments of one transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitterProfile {
    pub profile_id: u64,
    /// I gain divided by Q gain.
    pub iq_gain_imbalance: f64,
    /// Quadrature skew in radians.
    pub iq_phase_skew: f64,
    pub dc_offset_i: f64,
    pub dc_offset_q: f64,
    /// Standard deviation of the per-sample phase random-walk increment, rad.
    pub phase_noise_std: f64,
    /// Cubic compression coefficient: `z -> z * (1 - c |z|^2)`.
    pub nonlinearity_coeff: f64,
    pub seed: u64,
}

// Full-scale ranges at severity 1.
const GAIN_SPAN: f64 = 0.1;
const SKEW_SPAN: f64 = 0.1;
const DC_SPAN: f64 = 0.05;
const PHASE_NOISE_MAX: f64 = 0.002;
const NONLINEARITY_MAX: f64 = 0.1;

impl TransmitterProfile {
    pub fn identity() -> Self {
        TransmitterProfile {
            profile_id: 0,
            iq_gain_imbalance: 1.0,
            iq_phase_skew: 0.0,
            dc_offset_i: 0.0,
            dc_offset_q: 0.0,
            phase_noise_std: 0.0,
            nonlinearity_coeff: 0.0,
            seed: 0,
        }
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.profile_id = id;
        self
    }

    /// Parameter vector in a fixed order, handy for comparisons.
    pub fn parameters(&self) -> [f64; 6] {
        [
            self.iq_gain_imbalance,
            self.iq_phase_skew,
            self.dc_offset_i,
            self.dc_offset_q,
            self.phase_noise_std,
            self.nonlinearity_coeff,
        ]
    }
}

/// Draws a profile whose parameter ranges scale linearly with `severity`.
///
/// At severity 1 the gain imbalance lies in [0.9, 1.1], skew in +-0.1 rad,
/// DC offsets in +-0.05, phase-noise increments up to 0.002 rad and cubic
/// compression up to 0.1. Severity 0 is the identity profile.
pub fn make_profile(seed: u64, severity: f64) -> Result<TransmitterProfile> {
    if !(0.0..=1.0).contains(&severity) {
        return Err(Error::MalformedInput(format!(
            "severity must lie in [0, 1], got {severity}"
        )));
    }
    let mut rng = super::rng_from_seed(seed);
    let mut sym = || rng.random_range(-1.0..=1.0f64);
    let (g, sk, di, dq) = (sym(), sym(), sym(), sym());
    let pn: f64 = rng.random();
    let nl: f64 = rng.random();
    Ok(TransmitterProfile {
        profile_id: seed,
        iq_gain_imbalance: 1.0 + GAIN_SPAN * severity * g,
        iq_phase_skew: SKEW_SPAN * severity * sk,
        dc_offset_i: DC_SPAN * severity * di,
        dc_offset_q: DC_SPAN * severity * dq,
        phase_noise_std: PHASE_NOISE_MAX * severity * pn,
        nonlinearity_coeff: NONLINEARITY_MAX * severity * nl,
        seed,
    })
}

/// Applies the transmitter chain in a fixed order: gain imbalance on I,
/// quadrature skew, cubic compression, random-walk phase noise, DC offsets.
pub fn apply_impairments<R: Rng + ?Sized>(
    w: &Waveform,
    p: &TransmitterProfile,
    rng: &mut R,
) -> Result<Waveform> {
    let (sin_skew, cos_skew) = p.iq_phase_skew.sin_cos();
    let mut phase = 0.0f64;
    let out: Vec<Complex64> = w
        .i()
        .iter()
        .zip(w.q())
        .map(|(&i, &q)| {
            let i = i as f64 * p.iq_gain_imbalance;
            let q = q as f64;
            // Q axis sits at 90 degrees + skew.
            let mut z = Complex64::new(i - q * sin_skew, q * cos_skew);
            if p.nonlinearity_coeff != 0.0 {
                z *= 1.0 - p.nonlinearity_coeff * z.norm_sqr();
            }
            if p.phase_noise_std != 0.0 {
                let step: f64 = rng.sample(StandardNormal);
                phase += p.phase_noise_std * step;
                z *= Complex64::from_polar(1.0, phase);
            }
            z + Complex64::new(p.dc_offset_i, p.dc_offset_q)
        })
        .collect();
    let mut res = Waveform::from_complex(&out)?;
    if let Some(rate) = w.sample_rate_hint() {
        res = res.with_sample_rate(rate);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcore::{modulate_qpsk, HeaderSpec};
    use crate::synth::rng_from_seed;

    fn header() -> Waveform {
        let spec = HeaderSpec::iridium(40);
        modulate_qpsk(&spec.bits, &spec).unwrap()
    }

    #[test]
    fn deterministic_profiles() {
        assert_eq!(make_profile(7, 0.5).unwrap(), make_profile(7, 0.5).unwrap());
    }

    #[test]
    fn zero_severity_is_identity() {
        for seed in [0, 1, 99, u64::MAX] {
            let p = make_profile(seed, 0.0).unwrap();
            assert_eq!(p.parameters(), TransmitterProfile::identity().parameters());
        }
    }

    #[test]
    fn severity_out_of_range() {
        assert!(make_profile(1, 1.5).is_err());
        assert!(make_profile(1, -0.1).is_err());
        assert!(make_profile(1, f64::NAN).is_err());
    }

    #[test]
    fn hundred_profiles_pairwise_distinct() {
        let ps: Vec<_> = (0..100).map(|s| make_profile(s, 0.5).unwrap().parameters()).collect();
        for a in 0..ps.len() {
            for b in a + 1..ps.len() {
                assert_ne!(ps[a], ps[b], "seeds {a} and {b}");
            }
        }
    }

    #[test]
    fn identity_profile_is_noop() {
        let w = header();
        let out = apply_impairments(&w, &TransmitterProfile::identity(), &mut rng_from_seed(1)).unwrap();
        assert_eq!(out.i(), w.i());
        assert_eq!(out.q(), w.q());
    }

    #[test]
    fn dc_offset_only_shifts_i() {
        let w = header();
        let p = TransmitterProfile {
            dc_offset_i: 0.1,
            ..TransmitterProfile::identity()
        };
        let out = apply_impairments(&w, &p, &mut rng_from_seed(1)).unwrap();
        for k in 0..w.len() {
            assert!((out.i()[k] - (w.i()[k] + 0.1)).abs() < 1e-7);
            assert_eq!(out.q()[k], w.q()[k]);
        }
    }

    #[test]
    fn gain_only_scales_i() {
        let w = header();
        let p = TransmitterProfile {
            iq_gain_imbalance: 1.05,
            ..TransmitterProfile::identity()
        };
        let out = apply_impairments(&w, &p, &mut rng_from_seed(1)).unwrap();
        for k in 0..w.len() {
            assert_eq!(out.i()[k], (w.i()[k] as f64 * 1.05) as f32);
            assert_eq!(out.q()[k], w.q()[k]);
        }
    }

    #[test]
    fn deviation_grows_with_severity() {
        let w = header();
        let severities = [0.0, 0.25, 0.5, 0.75, 1.0];
        let means: Vec<f64> = severities
            .iter()
            .map(|&s| {
                (0..500u64)
                    .map(|trial| {
                        let p = make_profile(trial, s).unwrap();
                        let out = apply_impairments(&w, &p, &mut rng_from_seed(trial + 10_000)).unwrap();
                        out.i()
                            .iter()
                            .zip(out.q())
                            .zip(w.i().iter().zip(w.q()))
                            .map(|((a, b), (c, d))| ((a - c).powi(2) + (b - d).powi(2)) as f64)
                            .sum::<f64>()
                            .sqrt()
                    })
                    .sum::<f64>()
                    / 500.0
            })
            .collect();
        assert_eq!(means[0], 0.0);
        for pair in means.windows(2) {
            assert!(pair[1] >= pair[0], "{means:?}");
        }
    }
}
