use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::frame::IQFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// `+inf` disables noise.
    pub snr_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { snr_db: 15.0 }
    }
}

impl ChannelConfig {
    pub fn noiseless() -> Self {
        Self { snr_db: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidDataset(format!("snr_db {} is not usable", self.snr_db)));
        }
        Ok(())
    }

    /// Complex noise variance for a signal of the given mean power.
    pub fn noise_power(&self, signal_power: f64) -> f64 {
        signal_power / 10f64.powf(self.snr_db / 10.0)
    }
}

/// Adds circular complex Gaussian noise of total variance `noise_power`.
pub fn add_noise<R: Rng + ?Sized>(samples: &mut [Complex64], noise_power: f64, rng: &mut R) {
    if noise_power == 0.0 {
        return;
    }
    let sigma = (noise_power / 2.0).sqrt();
    for s in samples {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(sigma * re, sigma * im);
    }
}

/// AWGN at `channel.snr_db` relative to the frame's own mean power.
pub fn add_awgn<R: Rng + ?Sized>(frame: &IQFrame, channel: &ChannelConfig, rng: &mut R) -> Result<IQFrame> {
    channel.validate()?;
    let p = frame.power();
    if p == 0.0 {
        return Err(Error::ZeroPower);
    }
    if channel.snr_db == f64::INFINITY {
        return Ok(frame.clone());
    }
    let mut x = frame.to_complex();
    add_noise(&mut x, channel.noise_power(p), rng);
    Ok(IQFrame::from_complex(&x, frame.scheme).with_label(frame.label))
}
