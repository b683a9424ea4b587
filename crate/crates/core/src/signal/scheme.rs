use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eleven modulation schemes the synthesizer can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModulationKind {
    Lfm,
    Nlfm,
    Bfsk,
    Qfsk,
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
    Qam64,
    BfskQpsk,
    QfskBpsk,
}

/// What the intentional modulation varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Fm,
    Fsk,
    Psk,
    Qam,
    FskPsk,
}

impl ModulationKind {
    pub const ALL: [ModulationKind; 11] = [
        Self::Lfm,
        Self::Nlfm,
        Self::Bfsk,
        Self::Qfsk,
        Self::Bpsk,
        Self::Qpsk,
        Self::Psk8,
        Self::Qam16,
        Self::Qam64,
        Self::BfskQpsk,
        Self::QfskBpsk,
    ];

    /// Stable on-disk tag.
    pub fn tag(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Lfm => "LFM",
            Self::Nlfm => "NLFM",
            Self::Bfsk => "BFSK",
            Self::Qfsk => "QFSK",
            Self::Bpsk => "BPSK",
            Self::Qpsk => "QPSK",
            Self::Psk8 => "8PSK",
            Self::Qam16 => "16QAM",
            Self::Qam64 => "64QAM",
            Self::BfskQpsk => "BFSK_QPSK",
            Self::QfskBpsk => "QFSK_BPSK",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Self::Lfm | Self::Nlfm => Family::Fm,
            Self::Bfsk | Self::Qfsk => Family::Fsk,
            Self::Bpsk | Self::Qpsk | Self::Psk8 => Family::Psk,
            Self::Qam16 | Self::Qam64 => Family::Qam,
            Self::BfskQpsk | Self::QfskBpsk => Family::FskPsk,
        }
    }

    pub fn is_fm(self) -> bool {
        self.family() == Family::Fm
    }

    /// Number of tones used by FSK-bearing schemes (1 otherwise).
    pub fn tone_count(self) -> usize {
        match self {
            Self::Bfsk | Self::BfskQpsk => 2,
            Self::Qfsk | Self::QfskBpsk => 4,
            _ => 1,
        }
    }

    /// Number of phases used by PSK-bearing schemes (1 otherwise).
    pub fn phase_count(self) -> usize {
        match self {
            Self::Bpsk | Self::QfskBpsk => 2,
            Self::Qpsk | Self::BfskQpsk => 4,
            Self::Psk8 => 8,
            _ => 1,
        }
    }

    /// Symbol alphabet size; 0 for the sweep schemes, which carry no symbols.
    pub fn alphabet_size(self) -> usize {
        match self {
            Self::Lfm | Self::Nlfm => 0,
            Self::Qam16 => 16,
            Self::Qam64 => 64,
            _ => self.tone_count() * self.phase_count(),
        }
    }
}

impl fmt::Display for ModulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        let kind = match norm.as_str() {
            "LFM" => Self::Lfm,
            "NLFM" => Self::Nlfm,
            "BFSK" => Self::Bfsk,
            "QFSK" | "4FSK" => Self::Qfsk,
            "BPSK" => Self::Bpsk,
            "QPSK" => Self::Qpsk,
            "8PSK" | "PSK8" => Self::Psk8,
            "16QAM" | "QAM16" => Self::Qam16,
            "64QAM" | "QAM64" => Self::Qam64,
            "BFSK_QPSK" => Self::BfskQpsk,
            "QFSK_BPSK" => Self::QfskBpsk,
            _ => return Err(Error::InvalidScheme(format!("unknown modulation {s:?}"))),
        };
        Ok(kind)
    }
}

/// A modulation kind together with its timing and frequency plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationScheme {
    pub kind: ModulationKind,
    pub carrier_hz: f64,
    pub symbol_rate_hz: f64,
    pub sweep_lo_hz: f64,
    pub sweep_hi_hz: f64,
    pub sample_rate_hz: f64,
    pub pulse_width_s: f64,
}

impl ModulationScheme {
    /// Collection settings: 1 MHz digital carrier and symbol rate,
    /// 0.8-1.2 MHz analog sweep, 16 MHz sampling, 12 us pulses.
    pub fn standard(kind: ModulationKind) -> Self {
        Self {
            kind,
            carrier_hz: 1.0e6,
            symbol_rate_hz: 1.0e6,
            sweep_lo_hz: 0.8e6,
            sweep_hi_hz: 1.2e6,
            sample_rate_hz: 16.0e6,
            pulse_width_s: 12.0e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.carrier_hz,
            self.symbol_rate_hz,
            self.sweep_lo_hz,
            self.sweep_hi_hz,
            self.sample_rate_hz,
            self.pulse_width_s,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.sample_rate_hz <= 0.0 || self.pulse_width_s <= 0.0 {
            return Err(Error::InvalidScheme(format!("{}: non-finite or non-positive timing", self.kind)));
        }
        if self.kind.is_fm() {
            if self.sweep_lo_hz >= self.sweep_hi_hz {
                return Err(Error::InvalidScheme(format!(
                    "{}: sweep_lo_hz {} must be below sweep_hi_hz {}",
                    self.kind, self.sweep_lo_hz, self.sweep_hi_hz
                )));
            }
        } else {
            if self.symbol_rate_hz <= 0.0 {
                return Err(Error::InvalidScheme(format!("{}: symbol_rate_hz must be positive", self.kind)));
            }
            let sps = self.sample_rate_hz / self.symbol_rate_hz;
            if (sps - sps.round()).abs() > 1e-9 || sps.round() < 1.0 {
                return Err(Error::InvalidScheme(format!(
                    "{}: sample_rate/symbol_rate = {sps} is not a whole number of samples",
                    self.kind
                )));
            }
        }
        let max_hz = self.max_frequency_hz();
        if self.sample_rate_hz <= 2.0 * max_hz {
            return Err(Error::Nyquist {
                sample_rate_hz: self.sample_rate_hz,
                max_hz,
            });
        }
        let n = self.pulse_width_s * self.sample_rate_hz;
        if (n - n.round()).abs() > 1e-6 || n.round() < 2.0 {
            return Err(Error::InvalidScheme(format!(
                "{}: pulse width gives {n} samples, expected a whole number >= 2",
                self.kind
            )));
        }
        Ok(())
    }

    /// Largest absolute frequency present in the ideal waveform.
    pub fn max_frequency_hz(&self) -> f64 {
        let mut m = self.carrier_hz.abs();
        if self.kind.is_fm() {
            m = m.max(self.sweep_hi_hz.abs()).max(self.sweep_lo_hz.abs());
        }
        for f in self.tones_hz() {
            m = m.max(f.abs());
        }
        m
    }

    /// Samples in one pulse.
    pub fn pulse_len(&self) -> usize {
        (self.pulse_width_s * self.sample_rate_hz).round() as usize
    }

    pub fn samples_per_symbol(&self) -> usize {
        (self.sample_rate_hz / self.symbol_rate_hz).round() as usize
    }

    /// Symbols needed to fill one pulse (0 for sweeps).
    pub fn symbols_per_pulse(&self) -> usize {
        if self.kind.is_fm() {
            0
        } else {
            self.pulse_len().div_ceil(self.samples_per_symbol())
        }
    }

    /// FSK tones, spaced by the symbol rate and centred on the carrier.
    pub fn tones_hz(&self) -> Vec<f64> {
        let m = self.kind.tone_count();
        if m < 2 {
            return Vec::new();
        }
        let centre = (m as f64 - 1.0) / 2.0;
        (0..m)
            .map(|i| self.carrier_hz + (i as f64 - centre) * self.symbol_rate_hz)
            .collect()
    }
}
