//! Dataset file and its text manifest.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! "RFFSEI1\n"
//! u32 frame_count | u32 sample_len | u32 emitter_count | u64 seed
//! u8 scheme_count, then per scheme: u8 tag | u8 name_len | name
//! per frame: u16 label (0xFFFF = unlabeled) | u8 scheme tag | f32 I[L] | f32 Q[L]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::channel::ChannelConfig;
use super::dataset::{DatasetManifest, SplitRole, SynthConfig};
use super::emitter::EmitterProfile;
use super::frame::IQFrame;
use super::scheme::{ModulationKind, ModulationScheme};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"RFFSEI1\n";
pub const UNLABELED: u16 = 0xFFFF;

pub fn encode_dataset(ds: &DatasetManifest) -> Result<Vec<u8>> {
    let l = ds.sample_len;
    let mut out = Vec::with_capacity(64 + ds.len() * (3 + 8 * l));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(l as u32).to_le_bytes());
    out.extend_from_slice(&(ds.emitter_count as u32).to_le_bytes());
    out.extend_from_slice(&ds.seed.to_le_bytes());
    out.push(ds.schemes.len() as u8);
    for k in &ds.schemes {
        out.push(k.tag());
        out.push(k.name().len() as u8);
        out.extend_from_slice(k.name().as_bytes());
    }
    for f in &ds.frames {
        if f.len() != l {
            return Err(Error::Format(format!("frame of length {} in a {l}-sample dataset", f.len())));
        }
        let label = match f.label {
            Some(v) if v == UNLABELED => {
                return Err(Error::Format("label 0xFFFF is reserved".into()));
            }
            Some(v) => v,
            None => UNLABELED,
        };
        out.extend_from_slice(&label.to_le_bytes());
        out.push(f.scheme.tag());
        for v in f.rows() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a dataset. The split role is not stored in the binary file;
/// it is set to `role`.
pub fn decode_dataset(bytes: &[u8], role: SplitRole) -> Result<DatasetManifest> {
    let mut cur = bytes
        .strip_prefix(DATASET_MAGIC.as_slice())
        .ok_or_else(|| Error::Format("missing RFFSEI1 magic".into()))?;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::Format("truncated dataset".into()));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let count = u32_at(take(4)?);
    let l = u32_at(take(4)?);
    let emitter_count = u32_at(take(4)?);
    let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let n_schemes = take(1)?[0] as usize;
    let mut schemes = Vec::with_capacity(n_schemes);
    for _ in 0..n_schemes {
        let tag = take(1)?[0];
        let name_len = take(1)?[0] as usize;
        let name = std::str::from_utf8(take(name_len)?).map_err(|e| Error::Format(e.to_string()))?;
        let kind = ModulationKind::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown scheme tag {tag}")))?;
        if kind.name() != name {
            return Err(Error::Format(format!("scheme tag {tag} is {kind}, file says {name}")));
        }
        schemes.push(kind);
    }
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let h = take(3)?;
        let label = u16::from_le_bytes([h[0], h[1]]);
        let kind = ModulationKind::from_tag(h[2]).ok_or_else(|| Error::Format(format!("unknown scheme tag {}", h[2])))?;
        let raw = take(8 * l)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let label = (label != UNLABELED).then_some(label);
        frames.push(IQFrame::from_rows(data, kind, label));
    }
    if !cur.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", cur.len())));
    }
    Ok(DatasetManifest {
        frames,
        emitter_count,
        schemes,
        seed,
        role,
        sample_len: l,
    })
}

pub fn write_dataset(path: &Path, ds: &DatasetManifest) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path, role: SplitRole) -> Result<DatasetManifest> {
    decode_dataset(&fs::read(path)?, role)
}

/// Everything needed to regenerate a dataset.
pub struct GenerationRecord<'a> {
    pub dataset: &'a DatasetManifest,
    pub emitters: &'a [EmitterProfile],
    pub schemes: &'a [ModulationScheme],
    pub frames_per_pair: usize,
    pub channel: &'a ChannelConfig,
    pub synth: &'a SynthConfig,
}

/// Human-readable sidecar in the sectioned `key = value` format.
pub fn render_manifest(rec: &GenerationRecord<'_>) -> String {
    let ds = rec.dataset;
    let mut s = String::new();
    let _ = writeln!(s, "# rffsei dataset manifest");
    let _ = writeln!(s, "[dataset]");
    let _ = writeln!(s, "role = {}", ds.role);
    let _ = writeln!(s, "frame_count = {}", ds.len());
    let _ = writeln!(s, "sample_len = {}", ds.sample_len);
    let _ = writeln!(s, "emitter_count = {}", ds.emitter_count);
    let _ = writeln!(s, "seed = {}", ds.seed);
    let _ = writeln!(s, "frames_per_pair = {}", rec.frames_per_pair);
    let _ = writeln!(s, "snr_db = {}", rec.channel.snr_db);
    let _ = writeln!(s, "detect_threshold = {}", rec.synth.detect_threshold);
    let names: Vec<&str> = ds.schemes.iter().map(|k| k.name()).collect();
    let _ = writeln!(s, "schemes = {}", names.join(", "));
    for sc in rec.schemes {
        let _ = writeln!(s, "\n[scheme.{}]", sc.kind);
        let _ = writeln!(s, "carrier_hz = {}", sc.carrier_hz);
        let _ = writeln!(s, "symbol_rate_hz = {}", sc.symbol_rate_hz);
        let _ = writeln!(s, "sweep_lo_hz = {}", sc.sweep_lo_hz);
        let _ = writeln!(s, "sweep_hi_hz = {}", sc.sweep_hi_hz);
        let _ = writeln!(s, "sample_rate_hz = {}", sc.sample_rate_hz);
        let _ = writeln!(s, "pulse_width_s = {:e}", sc.pulse_width_s);
        if sc.kind.is_fm() {
            let traj = if sc.kind == ModulationKind::Nlfm { "u - sin(2 pi u) / (2 pi)" } else { "u" };
            let _ = writeln!(s, "sweep_trajectory = {traj}");
        }
    }
    for e in rec.emitters {
        let _ = writeln!(s, "\n[emitter.{}]", e.emitter_id);
        let _ = writeln!(s, "amp_offset = {}", e.amp_offset);
        let _ = writeln!(s, "cfo_hz = {}", e.cfo_hz);
        let _ = writeln!(s, "phase_offset_rad = {}", e.phase_offset_rad);
        let _ = writeln!(s, "iq_gain_imbalance = {}", e.iq_gain_imbalance);
        let _ = writeln!(s, "iq_phase_skew_rad = {}", e.iq_phase_skew_rad);
        let pa: Vec<String> = e.pa_coeffs.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "pa_coeffs = {}", pa.join(", "));
    }
    s
}
