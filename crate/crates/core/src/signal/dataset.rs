use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::{add_noise, ChannelConfig};
use super::detect::{detect_pulse, DEFAULT_THRESHOLD};
use super::emitter::{apply_rff, check_fleet, EmitterProfile};
use super::frame::IQFrame;
use super::modulate::{modulate, random_payload};
use super::scheme::{ModulationKind, ModulationScheme};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    SourceLabeled,
    TargetUnlabeledTrain,
    TargetUnlabeledTest,
}

impl SplitRole {
    pub fn name(self) -> &'static str {
        match self {
            Self::SourceLabeled => "source_labeled",
            Self::TargetUnlabeledTrain => "target_unlabeled_train",
            Self::TargetUnlabeledTest => "target_unlabeled_test",
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitRole {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "source_labeled" => Ok(Self::SourceLabeled),
            "target_unlabeled_train" => Ok(Self::TargetUnlabeledTrain),
            "target_unlabeled_test" => Ok(Self::TargetUnlabeledTest),
            other => Err(Error::InvalidDataset(format!("unknown split role {other:?}"))),
        }
    }
}

/// Framing applied after the channel: the pulse is located in a longer
/// noisy capture and `sample_len` samples are cropped from its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_len: usize,
    pub detect_threshold: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_len: 200,
            detect_threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub frames: Vec<IQFrame>,
    pub emitter_count: usize,
    pub schemes: Vec<ModulationKind>,
    pub seed: u64,
    pub role: SplitRole,
    pub sample_len: usize,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        self.frames.iter().map(|f| f.label.map(usize::from)).collect()
    }

    pub fn has_any_label(&self) -> bool {
        self.frames.iter().any(|f| f.label.is_some())
    }

    /// Target training split: labels are dropped, not hidden.
    pub fn into_unlabeled_train(mut self) -> Self {
        self.frames.iter_mut().for_each(|f| f.label = None);
        self.role = SplitRole::TargetUnlabeledTrain;
        self
    }

    pub fn with_role(mut self, role: SplitRole) -> Self {
        self.role = role;
        self
    }
}

/// Pulse capture layout: the pulse sits at a random offset in
/// `[pulse_len, 3 * pulse_len)` of a `6 * pulse_len` capture, which keeps
/// most detector windows noise-only.
fn capture_layout(pulse_len: usize, sample_len: usize) -> (usize, usize) {
    let total = (6 * pulse_len).max(pulse_len * 3 + sample_len + 1);
    (pulse_len, total)
}

/// One frame: modulate, impair, embed in a noisy capture, detect, crop.
pub fn synthesize_frame(
    profile: &EmitterProfile,
    scheme: &ModulationScheme,
    channel: &ChannelConfig,
    synth: &SynthConfig,
    rng: &mut impl rand::Rng,
) -> Result<IQFrame> {
    let payload = random_payload(scheme, rng);
    let ideal = modulate(scheme, &payload)?;
    let impaired = apply_rff(&ideal, profile, scheme.sample_rate_hz);
    let pulse = impaired.to_complex();
    let power = impaired.power();
    if power == 0.0 {
        return Err(Error::ZeroPower);
    }
    let (guard, total) = capture_layout(pulse.len(), synth.sample_len);
    let lead = guard + rng.random_range(0..2 * guard);
    let mut capture = vec![Complex64::new(0.0, 0.0); total];
    capture[lead..lead + pulse.len()].copy_from_slice(&pulse);
    if channel.snr_db.is_finite() {
        add_noise(&mut capture, channel.noise_power(power), rng);
    }
    let start = detect_pulse(&capture, pulse.len(), synth.detect_threshold)?;
    let mut crop = vec![Complex64::new(0.0, 0.0); synth.sample_len];
    let avail = (total - start).min(synth.sample_len);
    crop[..avail].copy_from_slice(&capture[start..start + avail]);
    let mut frame = IQFrame::from_complex(&crop, scheme.kind).with_label(Some(profile.emitter_id));
    frame.quantize_f32();
    Ok(frame)
}

/// Labeled frames for every (emitter, scheme) pair. Each frame draws from
/// its own RNG stream keyed by `(seed, emitter_id, scheme, frame_index)`,
/// so the result does not depend on evaluation order.
pub fn generate_dataset(
    emitters: &[EmitterProfile],
    schemes: &[ModulationScheme],
    frames_per_pair: usize,
    channel: &ChannelConfig,
    seed: u64,
    synth: &SynthConfig,
) -> Result<DatasetManifest> {
    if emitters.len() < 2 {
        return Err(Error::InvalidDataset("need at least 2 emitters".into()));
    }
    if frames_per_pair == 0 {
        return Err(Error::InvalidDataset("frames_per_pair must be >= 1".into()));
    }
    if schemes.is_empty() {
        return Err(Error::InvalidDataset("need at least one scheme".into()));
    }
    if synth.sample_len == 0 {
        return Err(Error::InvalidDataset("sample_len must be positive".into()));
    }
    check_fleet(emitters)?;
    channel.validate()?;
    for s in schemes {
        s.validate()?;
        for e in emitters {
            if !s.kind.is_fm() && e.cfo_hz.abs() >= s.symbol_rate_hz {
                return Err(Error::InvalidProfile(format!(
                    "emitter {}: |cfo| {} Hz is not below the {} symbol rate",
                    e.emitter_id, e.cfo_hz, s.kind
                )));
            }
        }
    }

    let jobs: Vec<(usize, usize, usize)> = (0..emitters.len())
        .flat_map(|e| (0..schemes.len()).flat_map(move |s| (0..frames_per_pair).map(move |i| (e, s, i))))
        .collect();
    let frames = jobs
        .par_iter()
        .map(|&(e, s, i)| {
            let profile = &emitters[e];
            let scheme = &schemes[s];
            let mut rng = seed::rng(
                seed,
                &[profile.emitter_id as u64, scheme.kind.tag() as u64, i as u64],
            );
            synthesize_frame(profile, scheme, channel, synth, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DatasetManifest {
        frames,
        emitter_count: emitters.len(),
        schemes: schemes.iter().map(|s| s.kind).collect(),
        seed,
        role: SplitRole::SourceLabeled,
        sample_len: synth.sample_len,
    })
}
