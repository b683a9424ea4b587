//! Source-only pretraining, joint adversarial training and prediction.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, Tape};
use crate::error::{Error, Result};
use crate::mdd::{self, argmax_rows, LossRow, MddConfig};
use crate::model::{batch_tensor, Head, ModelBundle};
use crate::seed;
use crate::signal::{DatasetManifest, IQFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mdd: MddConfig,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_epochs: 30,
            epochs: 40,
            batch_size: 32,
            seed: 7,
            mdd: MddConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidTrain("batch_size must be at least 2".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::InvalidTrain(format!("bad optimizer settings {a:?}")));
        }
        self.mdd.validate()
    }
}

/// Per-epoch summary. `train_accuracy` is the running accuracy of f over
/// the source batches seen during the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub phase: Phase,
    pub epoch: usize,
    pub mean_ce: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Mdd,
}

impl EpochRow {
    pub const HEADER: &'static str = "phase,epoch,mean_ce,train_accuracy,test_accuracy";

    pub fn csv(&self) -> String {
        let phase = match self.phase {
            Phase::Pretrain => "pretrain",
            Phase::Mdd => "mdd",
        };
        let test = self.test_accuracy.map(|v| v.to_string()).unwrap_or_default();
        format!("{phase},{},{},{},{test}", self.epoch, self.mean_ce, self.train_accuracy)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRow>,
    pub losses: Vec<LossRow>,
    /// Accuracy of f on the whole source set after the last epoch.
    pub final_train_accuracy: Option<f64>,
}

impl TrainLog {
    pub fn epochs_csv(&self) -> String {
        let mut s = String::from(EpochRow::HEADER);
        s.push('\n');
        for r in &self.epochs {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    pub fn losses_csv(&self) -> String {
        let mut s = String::from(LossRow::HEADER);
        s.push('\n');
        for r in &self.losses {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }
}

/// Per-epoch hook, called after each epoch's last step. A returned value is
/// recorded as that epoch's test accuracy.
pub type EpochHook<'a> = dyn FnMut(usize, &ModelBundle) -> Result<Option<f64>> + 'a;

fn labels_of(ds: &DatasetManifest) -> Result<Vec<usize>> {
    ds.labels().ok_or(Error::UnlabeledSource)
}

fn check_labels(labels: &[usize], class_count: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= class_count) {
        Some(&l) => Err(Error::ClassOutOfRange { index: l, count: class_count }),
        None => Ok(()),
    }
}

fn shuffled(n: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}

/// Source batches for one pretraining epoch; the last batch may be short.
pub fn pretrain_schedule(n: usize, batch: usize, train_seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let perm = shuffled(n, &mut seed::rng(train_seed, &[seed::label("pretrain"), epoch as u64]));
    perm.chunks(batch).map(<[usize]>::to_vec).collect()
}

/// Paired `(source, target)` index batches for one adversarial epoch.
/// Both streams are shuffled independently; the epoch has
/// `ceil(max(ns, nt) / batch)` steps, and the shorter stream cycles so every
/// step pairs equally sized batches.
pub fn mdd_schedule(ns: usize, nt: usize, batch: usize, train_seed: u64, epoch: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let ps = shuffled(ns, &mut seed::rng(train_seed, &[seed::label("mdd.source"), epoch as u64]));
    let pt = shuffled(nt, &mut seed::rng(train_seed, &[seed::label("mdd.target"), epoch as u64]));
    let n = ns.max(nt);
    (0..n.div_ceil(batch))
        .map(|k| {
            let range = k * batch..((k + 1) * batch).min(n);
            (
                range.clone().map(|i| ps[i % ns]).collect(),
                range.map(|i| pt[i % nt]).collect(),
            )
        })
        .collect()
}

fn gather<'a>(frames: &'a [IQFrame], idx: &[usize]) -> Vec<&'a IQFrame> {
    idx.iter().map(|&i| &frames[i]).collect()
}

fn correct(pred: &[usize], labels: &[usize]) -> usize {
    pred.iter().zip(labels).filter(|(a, b)| a == b).count()
}

/// Minimizes source cross-entropy for `pretrain_epochs`, then sets f′ ← f.
pub fn pretrain(bundle: &mut ModelBundle, source: &DatasetManifest, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::Empty("source dataset"));
    }
    let labels = labels_of(source)?;
    check_labels(&labels, bundle.config.class_count)?;
    bundle.adam.config = cfg.adam;
    let mut log = TrainLog::default();
    for epoch in 0..cfg.pretrain_epochs {
        let (mut ce_sum, mut hits) = (0.0, 0);
        let batches = pretrain_schedule(source.len(), cfg.batch_size, cfg.seed, epoch);
        for idx in &batches {
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let x = tape.constant(batch_tensor(&gather(&source.frames, idx), &bundle.config)?)?;
            let e = bundle.extract_on(&mut tape, x)?;
            let logits = bundle.classify_on(&mut tape, e, Head::Main, None)?;
            let ce = mdd::record_cross_entropy(&mut tape, logits, &y)?;
            bundle.store.zero_grad();
            tape.backward(ce, &mut bundle.store)?;
            let frozen = bundle.head_params(Head::Adversarial);
            bundle.adam.step_where(&mut bundle.store, |id| !frozen.contains(&id))?;
            ce_sum += tape.value(ce).item() * idx.len() as f64;
            hits += correct(&argmax_rows(tape.value(logits)), &y);
        }
        log.epochs.push(EpochRow {
            phase: Phase::Pretrain,
            epoch,
            mean_ce: ce_sum / source.len() as f64,
            train_accuracy: 100.0 * hits as f64 / source.len() as f64,
            test_accuracy: None,
        });
    }
    bundle.copy_main_to_adversarial();
    let pred = predict(bundle, &source.frames)?;
    log.final_train_accuracy = Some(100.0 * correct(&pred, &labels) as f64 / labels.len() as f64);
    Ok(log)
}

/// Joint training on labeled source and unlabeled target frames.
pub fn train_mdd(
    bundle: &mut ModelBundle,
    source: &DatasetManifest,
    target_unlabeled: &DatasetManifest,
    cfg: &TrainConfig,
    on_epoch: Option<&mut EpochHook<'_>>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if target_unlabeled.has_any_label() {
        return Err(Error::TargetLabelsPresent);
    }
    if source.is_empty() {
        return Err(Error::Empty("source dataset"));
    }
    if target_unlabeled.is_empty() {
        return Err(Error::Empty("target dataset"));
    }
    let labels = labels_of(source)?;
    check_labels(&labels, bundle.config.class_count)?;
    bundle.adam.config = cfg.adam;
    let mut hook = on_epoch;
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let (mut ce_sum, mut hits, mut seen) = (0.0, 0, 0);
        for (si, ti) in mdd_schedule(source.len(), target_unlabeled.len(), cfg.batch_size, cfg.seed, epoch) {
            let y: Vec<usize> = si.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let xs = tape.constant(batch_tensor(&gather(&source.frames, &si), &bundle.config)?)?;
            let xt = tape.constant(batch_tensor(&gather(&target_unlabeled.frames, &ti), &bundle.config)?)?;
            let vars = mdd::total_objective(&mut tape, bundle, xs, xt, &y, &cfg.mdd)?;
            bundle.store.zero_grad();
            tape.backward(vars.total, &mut bundle.store)?;
            bundle.adam.step(&mut bundle.store)?;
            log.losses.push(LossRow::from_vars(&tape, &vars, epoch, step));
            ce_sum += tape.value(vars.ce).item() * si.len() as f64;
            hits += correct(&argmax_rows(tape.value(vars.f_source)), &y);
            seen += si.len();
            step += 1;
        }
        let test_accuracy = match hook.as_mut() {
            Some(h) => h(epoch, bundle)?,
            None => None,
        };
        log.epochs.push(EpochRow {
            phase: Phase::Mdd,
            epoch,
            mean_ce: ce_sum / seen as f64,
            train_accuracy: 100.0 * hits as f64 / seen as f64,
            test_accuracy,
        });
    }
    Ok(log)
}

/// Frames per forward pass at prediction time.
pub const PREDICT_CHUNK: usize = 64;

/// Argmax of f's logits per frame.
pub fn predict(bundle: &ModelBundle, frames: &[IQFrame]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(PREDICT_CHUNK) {
        let refs: Vec<&IQFrame> = chunk.iter().collect();
        let e = bundle.extract(&refs)?;
        out.extend(argmax_rows(&bundle.classify(&e, Head::Main)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
