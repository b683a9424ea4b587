//! Emitter fingerprints and the front-end impairment chain.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::IQFrame;
use crate::error::{Error, Result};

/// Per-device front-end impairments.
///
/// The chain applied by [`apply_rff`] is gain and carrier offset, then
/// I/Q imbalance, then a memoryless odd-order power-amplifier polynomial
/// `y = x * (c0 + c1 |x|^2 + c2 |x|^4 + ...)` with `c0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterProfile {
    pub emitter_id: u16,
    pub amp_offset: f64,
    pub cfo_hz: f64,
    pub phase_offset_rad: f64,
    pub iq_gain_imbalance: f64,
    pub iq_phase_skew_rad: f64,
    pub pa_coeffs: Vec<f64>,
}

impl EmitterProfile {
    pub fn identity(emitter_id: u16) -> Self {
        Self {
            emitter_id,
            amp_offset: 1.0,
            cfo_hz: 0.0,
            phase_offset_rad: 0.0,
            iq_gain_imbalance: 1.0,
            iq_phase_skew_rad: 0.0,
            pa_coeffs: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.amp_offset,
            self.cfo_hz,
            self.phase_offset_rad,
            self.iq_gain_imbalance,
            self.iq_phase_skew_rad,
        ];
        if scalars.iter().chain(&self.pa_coeffs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(format!("emitter {}: non-finite parameter", self.emitter_id)));
        }
        if self.amp_offset <= 0.0 {
            return Err(Error::InvalidProfile(format!("emitter {}: amp_offset must be > 0", self.emitter_id)));
        }
        if self.iq_gain_imbalance <= 0.0 {
            return Err(Error::InvalidProfile(format!(
                "emitter {}: iq_gain_imbalance must be > 0",
                self.emitter_id
            )));
        }
        if self.pa_coeffs.first() != Some(&1.0) {
            return Err(Error::InvalidProfile(format!(
                "emitter {}: pa_coeffs must start with unit linear gain",
                self.emitter_id
            )));
        }
        Ok(())
    }

    /// Parameter vector used for distinctness checks.
    fn signature(&self) -> Vec<f64> {
        let mut v = vec![
            self.amp_offset,
            self.cfo_hz,
            self.phase_offset_rad,
            self.iq_gain_imbalance,
            self.iq_phase_skew_rad,
        ];
        v.extend(&self.pa_coeffs);
        v
    }
}

/// Applies the impairment chain sample-wise with `t = n / sample_rate_hz`.
/// Stages whose parameters are at identity are skipped, so the identity
/// profile returns its input bit for bit.
pub fn apply_rff(frame: &IQFrame, profile: &EmitterProfile, sample_rate_hz: f64) -> IQFrame {
    let mut x = frame.to_complex();

    if profile.amp_offset != 1.0 {
        x.iter_mut().for_each(|s| *s *= profile.amp_offset);
    }
    if profile.cfo_hz != 0.0 || profile.phase_offset_rad != 0.0 {
        for (n, s) in x.iter_mut().enumerate() {
            let t = n as f64 / sample_rate_hz;
            let angle = (TAU * profile.cfo_hz * t) % TAU + profile.phase_offset_rad;
            *s *= Complex64::from_polar(1.0, angle);
        }
    }
    if profile.iq_gain_imbalance != 1.0 || profile.iq_phase_skew_rad != 0.0 {
        let (sin, cos) = profile.iq_phase_skew_rad.sin_cos();
        let g = profile.iq_gain_imbalance;
        for s in x.iter_mut() {
            *s = Complex64::new(s.re, g * (s.im * cos - s.re * sin));
        }
    }
    if profile.pa_coeffs.len() > 1 {
        for s in x.iter_mut() {
            let p = s.norm_sqr();
            // Horner in |x|^2
            let gain = profile.pa_coeffs.iter().rev().fold(0.0, |acc, c| acc * p + c);
            *s *= gain;
        }
    }
    IQFrame::from_complex(&x, frame.scheme).with_label(frame.label)
}

/// Closed ranges from which a fleet's fingerprints are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub emitter_count: usize,
    pub seed: u64,
    pub amp_offset: (f64, f64),
    pub cfo_hz: (f64, f64),
    pub phase_offset_rad: (f64, f64),
    pub iq_gain_imbalance: (f64, f64),
    pub iq_phase_skew_rad: (f64, f64),
    pub pa_cubic: (f64, f64),
    pub pa_quintic: (f64, f64),
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            emitter_count: 4,
            seed: 2024,
            amp_offset: (0.9, 1.1),
            cfo_hz: (-5.0e3, 5.0e3),
            phase_offset_rad: (-0.5, 0.5),
            iq_gain_imbalance: (0.9, 1.1),
            iq_phase_skew_rad: (-0.1, 0.1),
            pa_cubic: (-0.12, -0.02),
            pa_quintic: (0.0, 0.02),
        }
    }
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.emitter_count < 2 {
            return Err(Error::InvalidProfile("fleet needs at least 2 emitters".into()));
        }
        if self.emitter_count > u16::MAX as usize - 1 {
            return Err(Error::InvalidProfile("too many emitters".into()));
        }
        let ranges = [
            ("amp_offset", self.amp_offset),
            ("cfo_hz", self.cfo_hz),
            ("phase_offset_rad", self.phase_offset_rad),
            ("iq_gain_imbalance", self.iq_gain_imbalance),
            ("iq_phase_skew_rad", self.iq_phase_skew_rad),
            ("pa_cubic", self.pa_cubic),
            ("pa_quintic", self.pa_quintic),
        ];
        for (name, (lo, hi)) in ranges {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidProfile(format!("{name}: bad range [{lo}, {hi}]")));
            }
        }
        if self.amp_offset.0 <= 0.0 || self.iq_gain_imbalance.0 <= 0.0 {
            return Err(Error::InvalidProfile("gains must be positive".into()));
        }
        Ok(())
    }
}

/// Draws one profile per emitter. Each parameter range is cut into
/// `emitter_count` strata and the strata are dealt to emitters by an
/// independent random permutation per parameter, so no two emitters
/// share a stratum along any axis.
pub fn generate_fleet(cfg: &FleetConfig) -> Result<Vec<EmitterProfile>> {
    cfg.validate()?;
    let n = cfg.emitter_count;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        strata
            .into_iter()
            .map(|k| {
                let u: f64 = rng.random();
                lo + (hi - lo) * (k as f64 + u) / n as f64
            })
            .collect()
    };
    let amp = axis(cfg.amp_offset);
    let cfo = axis(cfg.cfo_hz);
    let phase = axis(cfg.phase_offset_rad);
    let gain = axis(cfg.iq_gain_imbalance);
    let skew = axis(cfg.iq_phase_skew_rad);
    let cubic = axis(cfg.pa_cubic);
    let quintic = axis(cfg.pa_quintic);
    let fleet: Vec<EmitterProfile> = (0..n)
        .map(|i| EmitterProfile {
            emitter_id: i as u16,
            amp_offset: amp[i],
            cfo_hz: cfo[i],
            phase_offset_rad: phase[i],
            iq_gain_imbalance: gain[i],
            iq_phase_skew_rad: skew[i],
            pa_coeffs: vec![1.0, cubic[i], quintic[i]],
        })
        .collect();
    check_fleet(&fleet)?;
    Ok(fleet)
}

/// Validates every profile and rejects duplicate ids or parameter vectors.
pub fn check_fleet(fleet: &[EmitterProfile]) -> Result<()> {
    for (i, a) in fleet.iter().enumerate() {
        a.validate()?;
        for b in &fleet[..i] {
            if a.emitter_id == b.emitter_id {
                return Err(Error::InvalidProfile(format!("duplicate emitter_id {}", a.emitter_id)));
            }
            if a.signature() == b.signature() {
                return Err(Error::InvalidProfile(format!(
                    "emitters {} and {} have identical fingerprints",
                    b.emitter_id, a.emitter_id
                )));
            }
        }
    }
    Ok(())
}
