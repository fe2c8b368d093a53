//! Signal primitives for the fixed burst header: QPSK modulation and
//! demodulation, joint I/Q normalization and a reference-based noise score.
//!
//! All functions here are pure.

mod qpsk;
mod waveform;

pub use qpsk::{demodulate_header, modulate_qpsk, rrc_taps, Alignment, Demodulated};
pub use waveform::{noise_score, normalize, Waveform};

use crate::{Error, Result};

/// Header bit pattern of an Iridium burst (8 QPSK symbols).
pub const IRIDIUM_HEADER: &str = "1100001111001100";

/// Iridium symbol rate in symbols per second.
pub const IRIDIUM_SYMBOL_RATE: f64 = 25_000.0;

/// Default oversampling for desk-scale work (320-sample headers).
pub const DEFAULT_OVERSAMPLING: usize = 40;

/// Transmit pulse shape.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    /// Root-raised-cosine with the given roll-off and span in symbols.
    RootRaisedCosine { rolloff: f64, span: usize },
    /// Each symbol held for `oversampling` samples. Debug mode.
    Rectangular,
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape::RootRaisedCosine {
            rolloff: 0.4,
            span: 6,
        }
    }
}

/// Everything needed to synthesize or check a header waveform.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeaderSpec {
    /// Expected bits, one `0`/`1` per entry.
    pub bits: Vec<u8>,
    pub symbol_rate: f64,
    pub oversampling: usize,
    pub pulse: PulseShape,
    /// Minimum normalized correlation against the expected header for a
    /// waveform to count as decodable.
    pub correlation_floor: f64,
}

impl Default for HeaderSpec {
    fn default() -> Self {
        Self::iridium(DEFAULT_OVERSAMPLING)
    }
}

impl HeaderSpec {
    pub fn iridium(oversampling: usize) -> Self {
        HeaderSpec {
            bits: parse_bits(IRIDIUM_HEADER).expect("constant header parses"),
            symbol_rate: IRIDIUM_SYMBOL_RATE,
            oversampling,
            pulse: PulseShape::default(),
            correlation_floor: 0.5,
        }
    }

    pub fn with_bits(mut self, bits: Vec<u8>) -> Self {
        self.bits = bits;
        self
    }

    pub fn with_pulse(mut self, pulse: PulseShape) -> Self {
        self.pulse = pulse;
        self
    }

    pub fn n_symbols(&self) -> usize {
        self.bits.len() / 2
    }

    /// Sample count of a header waveform under this spec.
    pub fn waveform_len(&self) -> usize {
        self.n_symbols() * self.oversampling
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.oversampling as f64
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.oversampling == 0 {
            return Err(Error::MalformedInput("oversampling must be >= 1".into()));
        }
        if self.bits.is_empty() || self.bits.len() % 2 != 0 {
            return Err(Error::MalformedInput(format!(
                "header needs a non-empty even bit count, got {}",
                self.bits.len()
            )));
        }
        if let PulseShape::RootRaisedCosine { rolloff, span } = self.pulse {
            if !(rolloff > 0.0 && rolloff <= 1.0) || span == 0 {
                return Err(Error::MalformedInput(format!(
                    "invalid RRC parameters rolloff={rolloff} span={span}"
                )));
            }
        }
        Ok(())
    }
}

/// Parses a string of `0`/`1` characters. Whitespace and `_` are ignored so
/// grouped forms like `"11 00 00 11"` work.
pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::MalformedInput(format!("invalid bit character {other:?}"))),
        })
        .collect()
}

pub fn format_bits(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouped_header_parses_to_same_bits() {
        assert_eq!(
            parse_bits("11 00 00 11 11 00 11 00").unwrap(),
            parse_bits(IRIDIUM_HEADER).unwrap()
        );
        assert!(parse_bits("10x1").is_err());
    }

    #[test]
    fn iridium_spec_lengths() {
        assert_eq!(HeaderSpec::iridium(40).waveform_len(), 320);
        assert_eq!(HeaderSpec::iridium(1000).waveform_len(), 8000);
        assert_eq!(HeaderSpec::iridium(1000).sample_rate(), 25e6);
    }
}
