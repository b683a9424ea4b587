//! Experiment configuration: a sectioned `key = value` text format.
//!
//! ```text
//! # comment
//! [fleet]
//! seed = 1
//! cfo_hz = -5000, 5000
//! [matrix]
//! group.QAM = 16QAM
//! targets = QPSK, QFSK
//! ```
//!
//! Unknown sections or keys, duplicates and bad values are errors that name
//! the line. `fleet.seed`, `data.seed` and `train.seed` are required; all
//! other keys fall back to the module defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::autodiff::AdamConfig;
use crate::error::{Error, Result};
use crate::mdd::{GrlPlacement, MddConfig};
use crate::model::ModelConfig;
use crate::seed;
use crate::signal::{
    generate_dataset, generate_fleet, ChannelConfig, DatasetManifest, EmitterProfile, FleetConfig, ModulationKind,
    ModulationScheme, SplitRole, SynthConfig,
};
use crate::train::TrainConfig;

/// Timing and frequency plan shared by every scheme, plus the scenario's
/// source and target schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemePlan {
    pub source: Vec<ModulationKind>,
    pub target: ModulationKind,
    pub carrier_hz: f64,
    pub symbol_rate_hz: f64,
    pub sweep_lo_hz: f64,
    pub sweep_hi_hz: f64,
    pub sample_rate_hz: f64,
    pub pulse_width_s: f64,
}

impl Default for SchemePlan {
    fn default() -> Self {
        let s = ModulationScheme::standard(ModulationKind::Qam16);
        Self {
            source: vec![ModulationKind::Qam16],
            target: ModulationKind::Qfsk,
            carrier_hz: s.carrier_hz,
            symbol_rate_hz: s.symbol_rate_hz,
            sweep_lo_hz: s.sweep_lo_hz,
            sweep_hi_hz: s.sweep_hi_hz,
            sample_rate_hz: s.sample_rate_hz,
            pulse_width_s: s.pulse_width_s,
        }
    }
}

impl SchemePlan {
    pub fn scheme(&self, kind: ModulationKind) -> ModulationScheme {
        ModulationScheme {
            kind,
            carrier_hz: self.carrier_hz,
            symbol_rate_hz: self.symbol_rate_hz,
            sweep_lo_hz: self.sweep_lo_hz,
            sweep_hi_hz: self.sweep_hi_hz,
            sample_rate_hz: self.sample_rate_hz,
            pulse_width_s: self.pulse_width_s,
        }
    }
}

/// Split sizes are per (emitter, scheme) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub seed: u64,
    pub source_frames_per_pair: usize,
    pub target_frames_per_pair: usize,
    pub test_frames_per_pair: usize,
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            source_frames_per_pair: 150,
            target_frames_per_pair: 75,
            test_frames_per_pair: 75,
            synth: SynthConfig::default(),
        }
    }
}

/// A named set of source schemes; one row of the experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeGroup {
    pub name: String,
    pub schemes: Vec<ModulationKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConfig {
    pub groups: Vec<SchemeGroup>,
    pub targets: Vec<ModulationKind>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        use ModulationKind::*;
        let group = |name: &str, k| SchemeGroup {
            name: name.into(),
            schemes: vec![k],
        };
        Self {
            groups: vec![group("PSK", Qpsk), group("QAM", Qam16), group("FSK", Qfsk)],
            targets: vec![Qpsk, Qam16, Qfsk],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub fleet: FleetConfig,
    pub schemes: SchemePlan,
    pub channel: ChannelConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub matrix: MatrixConfig,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Module defaults with the three seeds set and `class_count` matched
    /// to the fleet.
    pub fn with_seeds(fleet_seed: u64, data_seed: u64, train_seed: u64) -> Self {
        let fleet = FleetConfig {
            seed: fleet_seed,
            ..FleetConfig::default()
        };
        Self {
            model: ModelConfig {
                class_count: fleet.emitter_count,
                ..ModelConfig::default()
            },
            fleet,
            schemes: SchemePlan::default(),
            channel: ChannelConfig::default(),
            data: DataConfig {
                seed: data_seed,
                ..DataConfig::default()
            },
            train: TrainConfig {
                seed: train_seed,
                ..TrainConfig::default()
            },
            matrix: MatrixConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet.validate()?;
        self.channel.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.class_count != self.fleet.emitter_count {
            return Err(Error::InvalidModel(format!(
                "class_count {} differs from emitter_count {}",
                self.model.class_count, self.fleet.emitter_count
            )));
        }
        if self.model.sample_len != self.data.synth.sample_len {
            return Err(Error::InvalidModel(format!(
                "model sample_len {} differs from data sample_len {}",
                self.model.sample_len, self.data.synth.sample_len
            )));
        }
        if self.schemes.source.is_empty() {
            return Err(Error::InvalidDataset("no source schemes".into()));
        }
        let d = &self.data;
        if d.source_frames_per_pair == 0 || d.target_frames_per_pair == 0 || d.test_frames_per_pair == 0 {
            return Err(Error::InvalidDataset("frames per pair must be >= 1".into()));
        }
        for k in self.schemes.source.iter().chain([&self.schemes.target]) {
            self.schemes.scheme(*k).validate()?;
        }
        Ok(())
    }

    pub fn fleet_profiles(&self) -> Result<Vec<EmitterProfile>> {
        generate_fleet(&self.fleet)
    }

    /// Seed of one split, derived from `data.seed` and the split role so the
    /// splits never share noise or payloads.
    pub fn split_seed(&self, role: SplitRole) -> u64 {
        seed::derive(self.data.seed, &[seed::label(role.name())])
    }

    /// Labeled source split, label-free target training split and labeled
    /// target test split.
    pub fn generate(&self) -> Result<ExperimentData> {
        self.validate()?;
        let fleet = self.fleet_profiles()?;
        let sources: Vec<ModulationScheme> = self.schemes.source.iter().map(|&k| self.schemes.scheme(k)).collect();
        let target = [self.schemes.scheme(self.schemes.target)];
        let d = &self.data;
        let make = |schemes: &[ModulationScheme], n, role| {
            generate_dataset(&fleet, schemes, n, &self.channel, self.split_seed(role), &d.synth).map(|ds| ds.with_role(role))
        };
        let source = make(&sources, d.source_frames_per_pair, SplitRole::SourceLabeled)?;
        let target_train =
            make(&target, d.target_frames_per_pair, SplitRole::TargetUnlabeledTrain)?.into_unlabeled_train();
        let target_test = make(&target, d.test_frames_per_pair, SplitRole::TargetUnlabeledTest)?;
        Ok(ExperimentData {
            fleet,
            source,
            target_train,
            target_test,
        })
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse(&text, &path.display().to_string())
    }

    /// Renders a config that parses back to `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let list = |v: &[ModulationKind]| v.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ");
        let nums = |v: &[usize]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ");
        let f = &self.fleet;
        let _ = writeln!(s, "[fleet]");
        let _ = writeln!(s, "seed = {}", f.seed);
        let _ = writeln!(s, "emitter_count = {}", f.emitter_count);
        for (k, (lo, hi)) in fleet_ranges(f) {
            let _ = writeln!(s, "{k} = {lo}, {hi}");
        }
        let p = &self.schemes;
        let _ = writeln!(s, "\n[schemes]");
        let _ = writeln!(s, "source = {}", list(&p.source));
        let _ = writeln!(s, "target = {}", p.target);
        let _ = writeln!(s, "carrier_hz = {}", p.carrier_hz);
        let _ = writeln!(s, "symbol_rate_hz = {}", p.symbol_rate_hz);
        let _ = writeln!(s, "sweep_lo_hz = {}", p.sweep_lo_hz);
        let _ = writeln!(s, "sweep_hi_hz = {}", p.sweep_hi_hz);
        let _ = writeln!(s, "sample_rate_hz = {}", p.sample_rate_hz);
        let _ = writeln!(s, "pulse_width_s = {:e}", p.pulse_width_s);
        let _ = writeln!(s, "\n[channel]");
        let _ = writeln!(s, "snr_db = {}", self.channel.snr_db);
        let d = &self.data;
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "seed = {}", d.seed);
        let _ = writeln!(s, "source_frames_per_pair = {}", d.source_frames_per_pair);
        let _ = writeln!(s, "target_frames_per_pair = {}", d.target_frames_per_pair);
        let _ = writeln!(s, "test_frames_per_pair = {}", d.test_frames_per_pair);
        let _ = writeln!(s, "sample_len = {}", d.synth.sample_len);
        let _ = writeln!(s, "detect_threshold = {}", d.synth.detect_threshold);
        let m = &self.model;
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "block_channels = {}", nums(&m.block_channels));
        let _ = writeln!(s, "block_strides = {}", nums(&m.block_strides));
        let _ = writeln!(s, "kernel = {}", m.kernel);
        let _ = writeln!(s, "embedding_dim = {}", m.embedding_dim);
        let _ = writeln!(s, "hidden_width = {}", m.hidden_width);
        let _ = writeln!(s, "class_count = {}", m.class_count);
        let _ = writeln!(s, "shrink_init = {}", m.shrink_init);
        let t = &self.train;
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "pretrain_epochs = {}", t.pretrain_epochs);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "lr = {}", t.adam.lr);
        let _ = writeln!(s, "adam_beta1 = {}", t.adam.beta1);
        let _ = writeln!(s, "adam_beta2 = {}", t.adam.beta2);
        let _ = writeln!(s, "adam_eps = {}", t.adam.eps);
        let _ = writeln!(s, "\n[mdd]");
        let _ = writeln!(s, "gamma = {}", t.mdd.gamma);
        let _ = writeln!(s, "lambda = {}", t.mdd.lambda);
        let _ = writeln!(s, "grl_beta = {}", t.mdd.grl_beta);
        let _ = writeln!(s, "grl_placement = {}", t.mdd.grl_placement);
        let _ = writeln!(s, "\n[matrix]");
        for g in &self.matrix.groups {
            let _ = writeln!(s, "group.{} = {}", g.name, list(&g.schemes));
        }
        let _ = writeln!(s, "targets = {}", list(&self.matrix.targets));
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output_dir.display());
        s
    }
}

/// The three splits of one scenario and the fleet that produced them.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub fleet: Vec<EmitterProfile>,
    pub source: DatasetManifest,
    pub target_train: DatasetManifest,
    pub target_test: DatasetManifest,
}

fn fleet_ranges(f: &FleetConfig) -> [(&'static str, (f64, f64)); 7] {
    [
        ("amp_offset", f.amp_offset),
        ("cfo_hz", f.cfo_hz),
        ("phase_offset_rad", f.phase_offset_rad),
        ("iq_gain_imbalance", f.iq_gain_imbalance),
        ("iq_phase_skew_rad", f.iq_phase_skew_rad),
        ("pa_cubic", f.pa_cubic),
        ("pa_quintic", f.pa_quintic),
    ]
}

struct Entry {
    line: usize,
    value: String,
}

struct Reader<'a> {
    origin: &'a str,
    entries: BTreeMap<(String, String), Entry>,
    sections: BTreeMap<String, usize>,
    last_line: usize,
}

impl Reader<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.origin.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(e) = self.take(section, key) {
            *slot = e
                .value
                .parse()
                .map_err(|err| self.err(e.line, format!("{section}.{key}: {err}")))?;
        }
        Ok(())
    }

    fn required<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if !self.entries.contains_key(&(section.to_string(), key.to_string())) {
            let line = self.sections.get(section).copied().unwrap_or(self.last_line);
            return Err(self.err(line, format!("missing required field {section}.{key}")));
        }
        self.get(section, key, slot)
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut Vec<T>) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(e) = self.take(section, key) {
            *slot = parse_list(&e.value).map_err(|err| self.err(e.line, format!("{section}.{key}: {err}")))?;
        }
        Ok(())
    }

    fn range(&mut self, section: &str, key: &str, slot: &mut (f64, f64)) -> Result<()> {
        if let Some(e) = self.take(section, key) {
            let v: Vec<f64> =
                parse_list(&e.value).map_err(|err| self.err(e.line, format!("{section}.{key}: {err}")))?;
            match v[..] {
                [lo, hi] => *slot = (lo, hi),
                _ => return Err(self.err(e.line, format!("{section}.{key}: expected `lo, hi`"))),
            }
        }
        Ok(())
    }
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    if items.iter().any(|i| i.is_empty()) {
        return Err(format!("empty item in list {s:?}"));
    }
    items.iter().map(|i| i.parse().map_err(|e: T::Err| e.to_string())).collect()
}

const SECTIONS: [&str; 9] = ["fleet", "schemes", "channel", "data", "model", "train", "mdd", "matrix", "output"];

/// Parses config text; `origin` names the source in error messages.
pub fn parse(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let mut r = Reader {
        origin,
        entries: BTreeMap::new(),
        sections: BTreeMap::new(),
        last_line: text.lines().count().max(1),
    };
    let mut group_order = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap().trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| r.err(line, "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(r.err(line, format!("unknown section [{name}]")));
            }
            if r.sections.insert(name.to_string(), line).is_some() {
                return Err(r.err(line, format!("section [{name}] appears twice")));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some(sec) = section.clone() else {
            return Err(r.err(line, "key outside any section"));
        };
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| r.err(line, format!("expected `key = value`, got {body:?}")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() || v.is_empty() {
            return Err(r.err(line, "empty key or value"));
        }
        if sec == "matrix" {
            if let Some(g) = k.strip_prefix("group.") {
                group_order.push(g.to_string());
            }
        }
        if r.entries.insert((sec.clone(), k.clone()), Entry { line, value: v }).is_some() {
            return Err(r.err(line, format!("duplicate key {sec}.{k}")));
        }
    }

    let mut cfg = ExperimentConfig::with_seeds(0, 0, 0);
    let f = &mut cfg.fleet;
    r.required("fleet", "seed", &mut f.seed)?;
    r.get("fleet", "emitter_count", &mut f.emitter_count)?;
    r.range("fleet", "amp_offset", &mut f.amp_offset)?;
    r.range("fleet", "cfo_hz", &mut f.cfo_hz)?;
    r.range("fleet", "phase_offset_rad", &mut f.phase_offset_rad)?;
    r.range("fleet", "iq_gain_imbalance", &mut f.iq_gain_imbalance)?;
    r.range("fleet", "iq_phase_skew_rad", &mut f.iq_phase_skew_rad)?;
    r.range("fleet", "pa_cubic", &mut f.pa_cubic)?;
    r.range("fleet", "pa_quintic", &mut f.pa_quintic)?;

    let p = &mut cfg.schemes;
    r.list("schemes", "source", &mut p.source)?;
    r.get("schemes", "target", &mut p.target)?;
    r.get("schemes", "carrier_hz", &mut p.carrier_hz)?;
    r.get("schemes", "symbol_rate_hz", &mut p.symbol_rate_hz)?;
    r.get("schemes", "sweep_lo_hz", &mut p.sweep_lo_hz)?;
    r.get("schemes", "sweep_hi_hz", &mut p.sweep_hi_hz)?;
    r.get("schemes", "sample_rate_hz", &mut p.sample_rate_hz)?;
    r.get("schemes", "pulse_width_s", &mut p.pulse_width_s)?;

    r.get("channel", "snr_db", &mut cfg.channel.snr_db)?;

    let d = &mut cfg.data;
    r.required("data", "seed", &mut d.seed)?;
    r.get("data", "source_frames_per_pair", &mut d.source_frames_per_pair)?;
    r.get("data", "target_frames_per_pair", &mut d.target_frames_per_pair)?;
    r.get("data", "test_frames_per_pair", &mut d.test_frames_per_pair)?;
    r.get("data", "sample_len", &mut d.synth.sample_len)?;
    r.get("data", "detect_threshold", &mut d.synth.detect_threshold)?;

    let m = &mut cfg.model;
    m.sample_len = cfg.data.synth.sample_len;
    m.class_count = cfg.fleet.emitter_count;
    r.list("model", "block_channels", &mut m.block_channels)?;
    r.list("model", "block_strides", &mut m.block_strides)?;
    r.get("model", "kernel", &mut m.kernel)?;
    r.get("model", "embedding_dim", &mut m.embedding_dim)?;
    r.get("model", "hidden_width", &mut m.hidden_width)?;
    r.get("model", "shrink_init", &mut m.shrink_init)?;
    if let Some(e) = r.take("model", "class_count") {
        let k: usize = e.value.parse().map_err(|err| r.err(e.line, format!("model.class_count: {err}")))?;
        if k != cfg.fleet.emitter_count {
            return Err(r.err(
                e.line,
                format!("model.class_count {k} must equal fleet.emitter_count {}", cfg.fleet.emitter_count),
            ));
        }
    }

    let t = &mut cfg.train;
    r.required("train", "seed", &mut t.seed)?;
    r.get("train", "pretrain_epochs", &mut t.pretrain_epochs)?;
    r.get("train", "epochs", &mut t.epochs)?;
    r.get("train", "batch_size", &mut t.batch_size)?;
    let a: &mut AdamConfig = &mut t.adam;
    r.get("train", "lr", &mut a.lr)?;
    r.get("train", "adam_beta1", &mut a.beta1)?;
    r.get("train", "adam_beta2", &mut a.beta2)?;
    r.get("train", "adam_eps", &mut a.eps)?;

    let md: &mut MddConfig = &mut t.mdd;
    r.get("mdd", "gamma", &mut md.gamma)?;
    r.get("mdd", "lambda", &mut md.lambda)?;
    r.get("mdd", "grl_beta", &mut md.grl_beta)?;
    let mut placement: GrlPlacement = md.grl_placement;
    r.get("mdd", "grl_placement", &mut placement)?;
    md.grl_placement = placement;

    if !group_order.is_empty() {
        cfg.matrix.groups.clear();
        for name in group_order {
            let mut schemes = Vec::new();
            r.list("matrix", &format!("group.{name}"), &mut schemes)?;
            cfg.matrix.groups.push(SchemeGroup { name, schemes });
        }
    }
    r.list("matrix", "targets", &mut cfg.matrix.targets)?;
    let mut dir = cfg.output_dir.display().to_string();
    r.get("output", "dir", &mut dir)?;
    cfg.output_dir = PathBuf::from(dir);

    if let Some(((s, k), e)) = r.entries.iter().next() {
        return Err(r.err(e.line, format!("unknown key {s}.{k}")));
    }
    let line = r.last_line;
    cfg.validate().map_err(|e| r.err(line, format!("invalid configuration: {e}")))?;
    Ok(cfg)
}
