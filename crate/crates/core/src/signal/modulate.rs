//! Ideal (noiseless, unimpaired) waveform synthesis.
//!
//! Digital schemes hold each symbol for `sample_rate / symbol_rate`
//! samples on a complex carrier at `carrier_hz`. FSK phase is continuous
//! across symbols; PSK phases are added on top of the carrier (or tone)
//! phase. Sweeps accumulate phase from a per-sample frequency trajectory
//! so that the first and last phase increments sit exactly on the sweep
//! endpoints.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;

use super::frame::IQFrame;
use super::scheme::{Family, ModulationKind, ModulationScheme};
use crate::error::{Error, Result};

/// Binary-reflected Gray code.
pub fn gray(b: usize) -> usize {
    b ^ (b >> 1)
}

/// Inverse of [`gray`]: the constellation position carrying bit pattern `g`.
pub fn gray_inverse(g: usize) -> usize {
    let mut b = g;
    let mut shift = 1;
    while (g >> shift) > 0 {
        b ^= g >> shift;
        shift += 1;
    }
    b
}

/// Gray-coded M-PSK point for `symbol`, at angle `2*pi*pos/M`.
pub fn psk_point(symbol: usize, order: usize) -> Complex64 {
    let pos = gray_inverse(symbol);
    Complex64::from_polar(1.0, TAU * pos as f64 / order as f64)
}

/// Odd-integer QAM levels `{-(m-1), ..., -1, 1, ..., m-1}` for a side of `m`.
pub fn qam_levels(side: usize) -> Vec<f64> {
    (0..side).map(|i| 2.0 * i as f64 - (side as f64 - 1.0)).collect()
}

/// Gray-coded square QAM point, scaled to unit mean energy.
pub fn qam_point(symbol: usize, order: usize) -> Complex64 {
    let side = (order as f64).sqrt().round() as usize;
    let bits = side.trailing_zeros();
    let levels = qam_levels(side);
    let i_pos = gray_inverse(symbol >> bits);
    let q_pos = gray_inverse(symbol & (side - 1));
    // mean of (i^2 + q^2) over the odd-integer grid
    let mean_energy = 2.0 * (order as f64 - 1.0) / 3.0;
    Complex64::new(levels[i_pos], levels[q_pos]) / mean_energy.sqrt()
}

/// Normalised instantaneous-frequency trajectory on `u in [0, 1]`.
fn sweep_fraction(kind: ModulationKind, u: f64) -> f64 {
    match kind {
        ModulationKind::Nlfm => u - (TAU * u).sin() / TAU,
        _ => u,
    }
}

/// Uniformly random symbols covering one pulse.
pub fn random_payload<R: Rng + ?Sized>(scheme: &ModulationScheme, rng: &mut R) -> Vec<usize> {
    let m = scheme.kind.alphabet_size();
    (0..scheme.symbols_per_pulse()).map(|_| rng.random_range(0..m)).collect()
}

/// Synthesizes one ideal pulse. Sweep schemes ignore `symbols`.
pub fn modulate(scheme: &ModulationScheme, symbols: &[usize]) -> Result<IQFrame> {
    scheme.validate()?;
    let kind = scheme.kind;
    let len = scheme.pulse_len();
    let fs = scheme.sample_rate_hz;

    if kind.is_fm() {
        let (lo, hi) = (scheme.sweep_lo_hz, scheme.sweep_hi_hz);
        let steps = (len - 1).max(1);
        let denom = (steps - 1).max(1) as f64;
        let mut out = Vec::with_capacity(len);
        let mut phase = 0.0;
        for n in 0..len {
            out.push(Complex64::from_polar(1.0, phase));
            if n < steps {
                let f = lo + (hi - lo) * sweep_fraction(kind, n as f64 / denom);
                phase = (phase + TAU * f / fs) % TAU;
            }
        }
        return Ok(IQFrame::from_complex(&out, kind));
    }

    let needed = scheme.symbols_per_pulse();
    if symbols.len() < needed {
        return Err(Error::PayloadTooShort {
            needed,
            got: symbols.len(),
        });
    }
    let alphabet = kind.alphabet_size();
    if let Some(&bad) = symbols.iter().find(|&&s| s >= alphabet) {
        return Err(Error::SymbolOutOfAlphabet {
            scheme: kind.name(),
            symbol: bad,
            alphabet,
        });
    }

    let sps = scheme.samples_per_symbol();
    let tones = scheme.tones_hz();
    let phases = kind.phase_count();
    let mut out = Vec::with_capacity(len);
    let mut tone_phase = 0.0;
    for n in 0..len {
        let sym = symbols[n / sps];
        let sample = match kind.family() {
            Family::Psk => psk_point(sym, phases) * carrier(scheme.carrier_hz, n, fs),
            Family::Qam => qam_point(sym, alphabet) * carrier(scheme.carrier_hz, n, fs),
            Family::Fsk | Family::FskPsk => {
                let tone = gray_inverse(sym / phases);
                let psk = if phases > 1 {
                    psk_point(sym % phases, phases)
                } else {
                    Complex64::new(1.0, 0.0)
                };
                let s = psk * Complex64::from_polar(1.0, tone_phase);
                tone_phase = (tone_phase + TAU * tones[tone] / fs) % TAU;
                s
            }
            Family::Fm => unreachable!(),
        };
        out.push(sample);
    }
    Ok(IQFrame::from_complex(&out, kind))
}

fn carrier(f: f64, n: usize, fs: f64) -> Complex64 {
    // reduce the argument first so long pulses keep full precision
    let cycles = f * n as f64 / fs;
    Complex64::from_polar(1.0, TAU * cycles.fract())
}

/// Nearest-point symbol decisions for PSK/QAM frames at the scheme's
/// carrier: integrate each symbol after removing the carrier and pick the
/// closest constellation point.
pub fn demodulate(scheme: &ModulationScheme, frame: &IQFrame) -> Result<Vec<usize>> {
    let kind = scheme.kind;
    let points: Vec<Complex64> = match kind.family() {
        Family::Psk => (0..kind.phase_count()).map(|s| psk_point(s, kind.phase_count())).collect(),
        Family::Qam => (0..kind.alphabet_size()).map(|s| qam_point(s, kind.alphabet_size())).collect(),
        _ => return Err(Error::InvalidScheme(format!("{kind}: matched-filter demodulation needs PSK or QAM"))),
    };
    let sps = scheme.samples_per_symbol();
    let fs = scheme.sample_rate_hz;
    let n_sym = frame.len() / sps;
    let mut out = Vec::with_capacity(n_sym);
    for k in 0..n_sym {
        let acc: Complex64 = (k * sps..(k + 1) * sps)
            .map(|n| frame.sample(n) * carrier(scheme.carrier_hz, n, fs).conj())
            .sum::<Complex64>()
            / sps as f64;
        let best = points
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - acc).norm_sqr().total_cmp(&(b.1 - acc).norm_sqr()))
            .map(|(s, _)| s)
            .unwrap();
        out.push(best);
    }
    Ok(out)
}

/// `x` wrapped into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x % TAU;
    if y > PI {
        y -= TAU;
    } else if y <= -PI {
        y += TAU;
    }
    y
}
