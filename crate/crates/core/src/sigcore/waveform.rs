use num_complex::Complex64;

use super::{modulate_qpsk, HeaderSpec};
use crate::{Error, Result};

/// One burst header as paired in-phase/quadrature sample sequences.
///
/// `sample_rate_hint` is informational: it is not persisted in record files
/// and does not take part in equality.
#[derive(Debug, Clone)]
pub struct Waveform {
    i: Vec<f32>,
    q: Vec<f32>,
    sample_rate_hint: Option<f64>,
}

impl PartialEq for Waveform {
    fn eq(&self, other: &Self) -> bool {
        self.i == other.i && self.q == other.q
    }
}

impl Waveform {
    pub fn new(i: Vec<f32>, q: Vec<f32>) -> Result<Self> {
        if i.len() != q.len() {
            return Err(Error::MalformedInput(format!(
                "I has {} samples but Q has {}",
                i.len(),
                q.len()
            )));
        }
        if i.is_empty() {
            return Err(Error::MalformedInput("waveform has no samples".into()));
        }
        Ok(Waveform {
            i,
            q,
            sample_rate_hint: None,
        })
    }

    pub fn from_complex(samples: &[Complex64]) -> Result<Self> {
        let (i, q) = samples.iter().map(|z| (z.re as f32, z.im as f32)).unzip();
        Self::new(i, q)
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.i
            .iter()
            .zip(&self.q)
            .map(|(&i, &q)| Complex64::new(i as f64, q as f64))
            .collect()
    }

    pub fn with_sample_rate(mut self, rate: f64) -> Self {
        self.sample_rate_hint = Some(rate);
        self
    }

    pub fn sample_rate_hint(&self) -> Option<f64> {
        self.sample_rate_hint
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    pub fn i(&self) -> &[f32] {
        &self.i
    }

    pub fn q(&self) -> &[f32] {
        &self.q
    }

    /// Largest absolute value over both components.
    pub fn max_abs(&self) -> f32 {
        self.i
            .iter()
            .chain(&self.q)
            .fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// Scales both components by the single joint maximum of `|I|` and `|Q|`.
///
/// A shared divisor keeps I/Q gain imbalance visible after scaling.
pub fn normalize(w: &Waveform) -> Result<Waveform> {
    if w.i.iter().chain(&w.q).any(|v| !v.is_finite()) {
        return Err(Error::MalformedInput("waveform contains non-finite samples".into()));
    }
    let peak = w.max_abs();
    if peak == 0.0 {
        return Err(Error::DegenerateInput("cannot normalize an all-zero waveform".into()));
    }
    let scale = peak as f64;
    let div = |v: &f32| (*v as f64 / scale) as f32;
    Ok(Waveform {
        i: w.i.iter().map(div).collect(),
        q: w.q.iter().map(div).collect(),
        sample_rate_hint: w.sample_rate_hint,
    })
}

/// Residual RMS against the ideal header after fitting one complex gain,
/// relative to the RMS of the fitted reference.
///
/// Zero for a perfect header; unaffected by global phase rotation or
/// amplitude scaling. For additive white noise it tracks `1/sqrt(SNR)`.
pub fn noise_score(w: &Waveform, spec: &HeaderSpec) -> Result<f64> {
    spec.validate()?;
    let expected = spec.waveform_len();
    if w.len() != expected {
        return Err(Error::MalformedInput(format!(
            "noise_score expects {expected} samples, got {}",
            w.len()
        )));
    }
    let reference = modulate_qpsk(&spec.bits, spec)?.to_complex();
    let samples = w.to_complex();
    let ref_energy: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
    let signal_energy: f64 = samples.iter().map(|z| z.norm_sqr()).sum();
    if signal_energy == 0.0 {
        return Err(Error::DegenerateInput("noise_score of an all-zero waveform".into()));
    }
    let cross: Complex64 = reference
        .iter()
        .zip(&samples)
        .map(|(r, s)| r.conj() * s)
        .sum();
    let gain = cross / ref_energy;
    let fitted_energy = gain.norm_sqr() * ref_energy;
    if fitted_energy == 0.0 {
        return Ok(f64::INFINITY);
    }
    let residual: f64 = reference
        .iter()
        .zip(&samples)
        .map(|(r, s)| (s - gain * r).norm_sqr())
        .sum();
    Ok((residual / fitted_energy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcore::{PulseShape, IRIDIUM_HEADER};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rotate(w: &Waveform, theta: f64, scale: f64) -> Waveform {
        let r = Complex64::from_polar(scale, theta);
        Waveform::from_complex(&w.to_complex().iter().map(|z| z * r).collect::<Vec<_>>()).unwrap()
    }

    fn awgn(w: &Waveform, snr_db: f64, rng: &mut ChaCha8Rng) -> Waveform {
        let z = w.to_complex();
        let p = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / z.len() as f64;
        let sigma = (p / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        let noisy: Vec<_> = z
            .iter()
            .map(|v| {
                let ni: f64 = rng.sample(StandardNormal);
                let nq: f64 = rng.sample(StandardNormal);
                v + Complex64::new(ni * sigma, nq * sigma)
            })
            .collect();
        Waveform::from_complex(&noisy).unwrap()
    }

    #[test]
    fn mismatched_or_empty_components_rejected() {
        assert!(matches!(
            Waveform::new(vec![1.0], vec![]),
            Err(Error::MalformedInput(_))
        ));
        assert!(Waveform::new(vec![], vec![]).is_err());
    }

    #[test]
    fn joint_scaling_keeps_imbalance() {
        let w = Waveform::new(vec![2.0, -1.0], vec![0.5, 0.25]).unwrap();
        let n = normalize(&w).unwrap();
        assert_eq!(n.i(), &[1.0, -0.5]);
        assert_eq!(n.q(), &[0.25, 0.125]);
        assert_eq!(n.max_abs(), 1.0);
    }

    #[test]
    fn normalize_rejects_zero() {
        let w = Waveform::new(vec![0.0; 4], vec![0.0; 4]).unwrap();
        assert!(matches!(normalize(&w), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn ideal_header_scores_zero() {
        let spec = HeaderSpec::iridium(40);
        let w = normalize(&modulate_qpsk(&spec.bits, &spec).unwrap()).unwrap();
        assert!(noise_score(&w, &spec).unwrap() < 1e-6);
        for theta in [0.3, 1.0, 2.5, -2.0] {
            let r = rotate(&w, theta, 0.7);
            assert!(noise_score(&r, &spec).unwrap() < 1e-6, "theta {theta}");
        }
    }

    #[test]
    fn noise_score_exact_for_f64_reference() {
        // Rectangular pulse at osr 1 is exactly representable in f32.
        let spec = HeaderSpec::iridium(1).with_pulse(PulseShape::Rectangular);
        let w = modulate_qpsk(&spec.bits, &spec).unwrap();
        assert!(noise_score(&w, &spec).unwrap() <= 1e-9);
    }

    #[test]
    fn noise_score_length_mismatch() {
        let spec = HeaderSpec::iridium(40);
        let w = Waveform::new(vec![1.0; 100], vec![0.0; 100]).unwrap();
        assert!(matches!(noise_score(&w, &spec), Err(Error::MalformedInput(_))));
    }

    #[test]
    fn noise_score_orders_snr_levels() {
        let spec = HeaderSpec::iridium(40);
        let clean = modulate_qpsk(&spec.bits, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let mean = |snr: f64, rng: &mut ChaCha8Rng| {
            (0..500)
                .map(|_| noise_score(&normalize(&awgn(&clean, snr, rng)).unwrap(), &spec).unwrap())
                .sum::<f64>()
                / 500.0
        };
        let low = mean(10.0, &mut rng);
        let high = mean(30.0, &mut rng);
        assert!(low > high, "10 dB {low} vs 30 dB {high}");
        // 1/sqrt(SNR) for white noise.
        assert!((low - 10f64.powf(-0.5)).abs() < 0.03, "{low}");
        assert!((high - 10f64.powf(-1.5)).abs() < 0.01, "{high}");
    }

    #[test]
    fn header_constant_spelled_out() {
        assert_eq!(IRIDIUM_HEADER, "1100001111001100");
    }

    proptest! {
        #[test]
        fn normalize_idempotent_and_scale_invariant(
            samples in prop::collection::vec((-5.0f32..5.0, -5.0f32..5.0), 1..64),
            c in 0.01f32..100.0,
        ) {
            let (i, q): (Vec<f32>, Vec<f32>) = samples.into_iter().unzip();
            prop_assume!(i.iter().chain(&q).any(|v| *v != 0.0));
            let w = Waveform::new(i.clone(), q.clone()).unwrap();
            let n = normalize(&w).unwrap();
            prop_assert_eq!(n.max_abs(), 1.0);
            prop_assert_eq!(&normalize(&n).unwrap(), &n);
            let scaled = Waveform::new(
                i.iter().map(|v| v * c).collect(),
                q.iter().map(|v| v * c).collect(),
            ).unwrap();
            let ns = normalize(&scaled).unwrap();
            for (a, b) in ns.i().iter().chain(ns.q()).zip(n.i().iter().chain(n.q())) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn noise_score_rotation_and_scale_invariant(
            seed in any::<u64>(),
            theta in -3.2f64..3.2,
            scale in 0.05f64..20.0,
        ) {
            let spec = HeaderSpec::iridium(8);
            let clean = modulate_qpsk(&spec.bits, &spec).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy = awgn(&clean, 15.0, &mut rng);
            let base = noise_score(&noisy, &spec).unwrap();
            let moved = noise_score(&rotate(&noisy, theta, scale), &spec).unwrap();
            prop_assert!((base - moved).abs() <= 1e-6, "{} vs {}", base, moved);
        }
    }
}
