//! Emitter waveform synthesis: ideal modulation, front-end fingerprint
//! impairments, channel noise, pulse detection and dataset packaging.

mod channel;
mod dataset;
mod detect;
mod emitter;
mod frame;
pub mod io;
pub mod modulate;
mod scheme;

pub use channel::{add_awgn, add_noise, ChannelConfig};
pub use dataset::{generate_dataset, synthesize_frame, DatasetManifest, SplitRole, SynthConfig};
pub use detect::{autocorrelation_statistic, detect_pulse, DEFAULT_THRESHOLD};
pub use emitter::{apply_rff, check_fleet, generate_fleet, EmitterProfile, FleetConfig};
pub use frame::IQFrame;
pub use modulate::{demodulate, modulate, random_payload};
pub use scheme::{Family, ModulationKind, ModulationScheme};
