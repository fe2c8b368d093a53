use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use num_complex::Complex64;

use super::{HeaderSpec, PulseShape, Waveform};
use crate::{Error, Result};

/// Gray mapping of a bit pair onto the unit-energy QPSK constellation.
fn map_symbol(b0: u8, b1: u8) -> Complex64 {
    let s = FRAC_1_SQRT_2;
    match (b0, b1) {
        (0, 0) => Complex64::new(s, s),
        (0, 1) => Complex64::new(-s, s),
        (1, 1) => Complex64::new(-s, -s),
        _ => Complex64::new(s, -s),
    }
}

/// Inverse of [`map_symbol`] by quadrant.
fn decide(z: Complex64) -> (u8, u8) {
    match (z.re >= 0.0, z.im >= 0.0) {
        (true, true) => (0, 0),
        (false, true) => (0, 1),
        (false, false) => (1, 1),
        (true, false) => (1, 0),
    }
}

fn symbols(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(Error::MalformedInput(format!(
            "QPSK needs an even bit count, got {}",
            bits.len()
        )));
    }
    if let Some(b) = bits.iter().find(|b| **b > 1) {
        return Err(Error::MalformedInput(format!("bit value {b} is not 0 or 1")));
    }
    Ok(bits.chunks_exact(2).map(|p| map_symbol(p[0], p[1])).collect())
}

/// Root-raised-cosine taps spanning `span` symbols at `osr` samples per
/// symbol, scaled so the center tap is 1.
pub fn rrc_taps(rolloff: f64, span: usize, osr: usize) -> Vec<f64> {
    let half = (span * osr) / 2;
    let b = rolloff;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|n| {
            let t = (n as f64 - half as f64) / osr as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / PI
            } else if ((4.0 * b * t).abs() - 1.0).abs() < 1e-9 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let center = taps[half];
    taps.into_iter().map(|h| h / center).collect()
}

/// Symbol `k` is centered on sample `k * osr + osr / 2`.
fn symbol_center(k: usize, osr: usize) -> usize {
    k * osr + osr / 2
}

fn shape(syms: &[Complex64], spec: &HeaderSpec) -> Vec<Complex64> {
    let osr = spec.oversampling;
    let n = syms.len() * osr;
    match spec.pulse {
        PulseShape::Rectangular => syms
            .iter()
            .flat_map(|s| std::iter::repeat_n(*s, osr))
            .collect(),
        PulseShape::RootRaisedCosine { rolloff, span } => {
            let taps = rrc_taps(rolloff, span, osr);
            let half = (taps.len() - 1) / 2;
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            for (k, s) in syms.iter().enumerate() {
                let c = symbol_center(k, osr) as isize;
                for (j, h) in taps.iter().enumerate() {
                    let idx = c + j as isize - half as isize;
                    if (0..n as isize).contains(&idx) {
                        out[idx as usize] += s * h;
                    }
                }
            }
            out
        }
    }
}

/// Modulates `bits` into a QPSK waveform of `bits.len() / 2 * oversampling`
/// samples using the pulse shape in `spec`. `spec.bits` is not used.
pub fn modulate_qpsk(bits: &[u8], spec: &HeaderSpec) -> Result<Waveform> {
    if spec.oversampling == 0 {
        return Err(Error::MalformedInput("oversampling must be >= 1".into()));
    }
    let syms = symbols(bits)?;
    if syms.is_empty() {
        return Err(Error::MalformedInput("no bits to modulate".into()));
    }
    Ok(Waveform::from_complex(&shape(&syms, spec))?.with_sample_rate(spec.sample_rate()))
}

/// Phase alignment chosen while demodulating.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Alignment {
    /// Estimated carrier phase of the input relative to the ideal header,
    /// wrapped to (-pi, pi].
    pub phase_offset: f64,
    /// The QPSK ambiguity resolved against the known header: 0, 90, 180
    /// or 270 degrees.
    pub rotation_deg: u16,
    /// Normalized correlation magnitude between the soft symbols and the
    /// expected header, in [0, 1].
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Demodulated {
    pub bits: Vec<u8>,
    pub alignment: Alignment,
}

fn soft_symbols(samples: &[Complex64], spec: &HeaderSpec) -> Vec<Complex64> {
    let osr = spec.oversampling;
    let n_sym = spec.n_symbols();
    match spec.pulse {
        PulseShape::Rectangular => (0..n_sym)
            .map(|k| samples[k * osr..(k + 1) * osr].iter().sum::<Complex64>() / osr as f64)
            .collect(),
        PulseShape::RootRaisedCosine { rolloff, span } => {
            let taps = rrc_taps(rolloff, span, osr);
            let half = (taps.len() - 1) / 2;
            let n = n_sym * osr;
            (0..n_sym)
                .map(|k| {
                    let c = symbol_center(k, osr) as isize;
                    taps.iter()
                        .enumerate()
                        .filter_map(|(j, h)| {
                            let idx = c + j as isize - half as isize;
                            (0..n as isize)
                                .contains(&idx)
                                .then(|| samples[idx as usize] * h)
                        })
                        .sum()
                })
                .collect()
        }
    }
}

fn wrap_phase(mut x: f64) -> f64 {
    while x > PI {
        x -= 2.0 * PI;
    }
    while x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Recovers the header bits from a waveform.
///
/// Soft symbols come from a matched filter sampled at symbol centers. A
/// fourth-power estimate removes the carrier phase up to a multiple of 90
/// degrees, and that ambiguity is resolved by correlating against
/// `spec.bits`.
pub fn demodulate_header(w: &Waveform, spec: &HeaderSpec) -> Result<Demodulated> {
    spec.validate()?;
    let need = spec.waveform_len();
    if w.len() < need {
        return Err(Error::MalformedInput(format!(
            "demodulation needs at least {need} samples, got {}",
            w.len()
        )));
    }
    let samples = w.to_complex();
    let soft = soft_symbols(&samples[..need], spec);
    let reference = symbols(&spec.bits)?;

    // QPSK symbols at 45 degrees raise to -|s|^4.
    let fourth: Complex64 = soft.iter().map(|s| s.powu(4)).sum();
    let fine = if fourth.norm() > 0.0 { (-fourth).arg() / 4.0 } else { 0.0 };
    let derot = Complex64::from_polar(1.0, -fine);
    let aligned: Vec<Complex64> = soft.iter().map(|s| s * derot).collect();

    let cross: Complex64 = reference
        .iter()
        .zip(&aligned)
        .map(|(r, s)| r.conj() * s)
        .sum();
    let (quadrant, _) = (0..4u16)
        .map(|k| {
            let rot = Complex64::from_polar(1.0, -(k as f64) * FRAC_PI_2);
            (k, (cross * rot).re)
        })
        .fold((0u16, f64::NEG_INFINITY), |best, cand| {
            if cand.1 > best.1 {
                cand
            } else {
                best
            }
        });

    let ref_energy: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
    let soft_energy: f64 = aligned.iter().map(|z| z.norm_sqr()).sum();
    let correlation = if soft_energy > 0.0 {
        cross.norm() / (ref_energy * soft_energy).sqrt()
    } else {
        0.0
    };
    if !(correlation >= spec.correlation_floor) {
        return Err(Error::Undecodable {
            correlation,
            floor: spec.correlation_floor,
        });
    }

    let coarse = Complex64::from_polar(1.0, -(quadrant as f64) * FRAC_PI_2);
    let bits = aligned
        .iter()
        .flat_map(|s| {
            let (b0, b1) = decide(s * coarse);
            [b0, b1]
        })
        .collect();
    Ok(Demodulated {
        bits,
        alignment: Alignment {
            phase_offset: wrap_phase(fine + quadrant as f64 * FRAC_PI_2),
            rotation_deg: quadrant * 90,
            correlation,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcore::{parse_bits, IRIDIUM_HEADER};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rect(osr: usize) -> HeaderSpec {
        HeaderSpec::iridium(osr).with_pulse(PulseShape::Rectangular)
    }

    fn rotated(w: &Waveform, theta: f64) -> Waveform {
        let r = Complex64::from_polar(1.0, theta);
        Waveform::from_complex(&w.to_complex().iter().map(|z| z * r).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_pair_rectangular_repeats_symbol() {
        let w = modulate_qpsk(&[0, 0], &rect(4)).unwrap();
        assert_eq!(w.len(), 4);
        for k in 0..4 {
            assert!((w.i()[k] - 0.7071).abs() < 1e-4);
            assert!((w.q()[k] - 0.7071).abs() < 1e-4);
        }
    }

    #[test]
    fn header_rectangular_osr1_is_symbol_sequence() {
        let spec = rect(1);
        let w = modulate_qpsk(&spec.bits, &spec).unwrap();
        assert_eq!(w.len(), 8);
        assert!((w.i()[0] + 0.7071).abs() < 1e-4);
        assert!((w.q()[0] + 0.7071).abs() < 1e-4);
        let expected = symbols(&spec.bits).unwrap();
        for (k, s) in expected.iter().enumerate() {
            assert_eq!(w.i()[k], s.re as f32);
            assert_eq!(w.q()[k], s.im as f32);
        }
    }

    #[test]
    fn full_rate_header_length() {
        let spec = HeaderSpec::iridium(1000);
        assert_eq!(modulate_qpsk(&spec.bits, &spec).unwrap().len(), 8000);
    }

    #[test]
    fn odd_bits_rejected() {
        assert!(matches!(
            modulate_qpsk(&[1, 0, 1], &HeaderSpec::default()),
            Err(Error::MalformedInput(_))
        ));
    }

    #[test]
    fn rrc_center_and_symmetry() {
        let taps = rrc_taps(0.4, 6, 40);
        assert_eq!(taps.len(), 241);
        assert_eq!(taps[120], 1.0);
        for k in 0..120 {
            assert!((taps[k] - taps[240 - k]).abs() < 1e-12);
        }
        // Singular point |t| = 1/(4*beta) lands on a sample at osr 40 (t = 0.625).
        assert!(taps.iter().all(|t| t.is_finite()));
    }

    #[test]
    fn round_trip_and_quarter_turn() {
        let spec = HeaderSpec::iridium(40);
        let w = modulate_qpsk(&spec.bits, &spec).unwrap();
        let d = demodulate_header(&w, &spec).unwrap();
        assert_eq!(d.bits, parse_bits(IRIDIUM_HEADER).unwrap());
        assert_eq!(d.alignment.rotation_deg, 0);
        assert!(d.alignment.correlation > 0.99);

        let d = demodulate_header(&rotated(&w, FRAC_PI_2), &spec).unwrap();
        assert_eq!(d.bits, spec.bits);
        assert_eq!(d.alignment.rotation_deg, 90);
        assert!((d.alignment.phase_offset - FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn short_waveform_rejected() {
        let spec = HeaderSpec::iridium(40);
        let w = Waveform::new(vec![1.0; 100], vec![0.0; 100]).unwrap();
        assert!(matches!(demodulate_header(&w, &spec), Err(Error::MalformedInput(_))));
    }

    #[test]
    fn noise_only_is_undecodable() {
        let spec = HeaderSpec::iridium(40);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut failures = 0;
        for _ in 0..50 {
            let z: Vec<Complex64> = (0..320)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let w = Waveform::from_complex(&z).unwrap();
            if matches!(demodulate_header(&w, &spec), Err(Error::Undecodable { .. })) {
                failures += 1;
            }
        }
        assert!(failures > 25, "only {failures} of 50 noise bursts rejected");
    }

    #[test]
    fn exhaustive_round_trip_osr1() {
        for osr in [1usize] {
            for value in 0u32..(1 << 16) {
                let bits: Vec<u8> = (0..16).rev().map(|b| ((value >> b) & 1) as u8).collect();
                let spec = HeaderSpec::iridium(osr).with_bits(bits.clone());
                let w = modulate_qpsk(&bits, &spec).unwrap();
                let d = demodulate_header(&w, &spec).unwrap();
                assert_eq!(d.bits, bits, "value {value:016b}");
            }
        }
    }

    #[test]
    fn sampled_round_trip_higher_osr() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for osr in [4usize, 40] {
            for _ in 0..1000 {
                let bits: Vec<u8> = (0..16).map(|_| rng.random_range(0..2u8)).collect();
                let spec = HeaderSpec::iridium(osr).with_bits(bits.clone());
                let w = modulate_qpsk(&bits, &spec).unwrap();
                assert_eq!(w.len(), 8 * osr);
                assert_eq!(demodulate_header(&w, &spec).unwrap().bits, bits);
            }
        }
    }
}
