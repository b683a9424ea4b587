//! Margin disparity discrepancy losses.
//!
//! For logits `z` and label `y` the margin is `(z_y - max_{y' != y} z_y') / 2`
//! and the ramp loss `Phi_rho` maps it into `[0, 1]`. Training uses the
//! cross-entropy surrogates instead: on source samples
//! `-log softmax(f'(x))[h_f(x)]`, on target samples
//! `log(1 - softmax(f'(x))[h_f(x)])`, where `h_f` is the argmax of f taken as
//! a constant. The discrepancy is `source - gamma * target` and the training
//! scalar is `CE + lambda * discrepancy`.
//!
//! f′ is the adversary: the discrepancy is small when f′ agrees with f on
//! source and disagrees with it on target. A gradient-reversal node sets the
//! two sides of the game against each other; [`GrlPlacement`] selects which
//! side receives the reversed gradient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{Head, ModelBundle};

/// Where the gradient-reversal node sits in the f′ branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrlPlacement {
    /// On the embeddings entering f′: f′ descends the discrepancy and ψ
    /// ascends it through the f′ path.
    Features,
    /// On f′'s parameters: f′ ascends the discrepancy and ψ descends it.
    Adversary,
    /// No reversal; the plain gradient of the scalar.
    Disabled,
}

impl GrlPlacement {
    pub fn name(self) -> &'static str {
        match self {
            Self::Features => "features",
            Self::Adversary => "adversary",
            Self::Disabled => "disabled",
        }
    }
}

impl fmt::Display for GrlPlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GrlPlacement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "features" => Ok(Self::Features),
            "adversary" => Ok(Self::Adversary),
            "disabled" => Ok(Self::Disabled),
            other => Err(Error::InvalidTrain(format!("unknown grl placement {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MddConfig {
    /// `gamma = e^rho`.
    pub gamma: f64,
    pub lambda: f64,
    pub grl_beta: f64,
    pub grl_placement: GrlPlacement,
}

impl Default for MddConfig {
    fn default() -> Self {
        Self {
            gamma: 4.0,
            lambda: 1.0,
            grl_beta: 1.0,
            grl_placement: GrlPlacement::Features,
        }
    }
}

impl MddConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidTrain(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidTrain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.grl_beta >= 0.0 && self.grl_beta.is_finite()) {
            return Err(Error::InvalidTrain(format!("grl_beta must be >= 0, got {}", self.grl_beta)));
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        self.gamma.ln()
    }
}

/// Largest probability allowed inside `log(1 - p)`.
pub const PROB_CEILING: f64 = 1.0 - 1e-12;

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise argmax of a `(batch, k)` tensor.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.shape()[0]).map(|i| argmax(logits.row(i))).collect()
}

pub fn margin(logits: &[f64], y: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Shape {
            op: "margin",
            detail: format!("{} logits", logits.len()),
        });
    }
    if y >= logits.len() {
        return Err(Error::ClassOutOfRange {
            index: y,
            count: logits.len(),
        });
    }
    let other = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * (logits[y] - other))
}

/// Ramp loss `Phi_rho`.
pub fn margin_loss(x: f64, rho: f64) -> f64 {
    if x >= rho {
        0.0
    } else if x <= 0.0 {
        1.0
    } else {
        1.0 - x / rho
    }
}

/// Batch mean of `Phi_rho(margin of f′ at h_f)`: a diagnostic only.
pub fn margin_disparity(f_logits: &Tensor, fprime_logits: &Tensor, rho: f64) -> Result<f64> {
    same_shape("margin_disparity", f_logits, fprime_logits)?;
    let n = f_logits.shape()[0];
    let mut acc = 0.0;
    for i in 0..n {
        acc += margin_loss(margin(fprime_logits.row(i), argmax(f_logits.row(i)))?, rho);
    }
    Ok(acc / n as f64)
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(Error::Shape {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

fn log_softmax_at(row: &[f64], k: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row[k] - lse
}

pub fn source_disparity(f_logits: &Tensor, fprime_logits: &Tensor) -> Result<f64> {
    same_shape("source_disparity", f_logits, fprime_logits)?;
    let n = f_logits.shape()[0];
    let s: f64 = (0..n)
        .map(|i| -log_softmax_at(fprime_logits.row(i), argmax(f_logits.row(i))))
        .sum();
    Ok(s / n as f64)
}

pub fn target_disparity(f_logits: &Tensor, fprime_logits: &Tensor) -> Result<f64> {
    same_shape("target_disparity", f_logits, fprime_logits)?;
    let n = f_logits.shape()[0];
    let s: f64 = (0..n)
        .map(|i| {
            let p = softmax(fprime_logits.row(i))[argmax(f_logits.row(i))].min(PROB_CEILING);
            (1.0 - p).ln()
        })
        .sum();
    Ok(s / n as f64)
}

/// Logits of f and f′ on paired source and target batches.
#[derive(Debug, Clone)]
pub struct DisparityBatch {
    pub f_source: Tensor,
    pub fprime_source: Tensor,
    pub f_target: Tensor,
    pub fprime_target: Tensor,
}

impl DisparityBatch {
    pub fn validate(&self) -> Result<()> {
        same_shape("disparity_batch", &self.f_source, &self.fprime_source)?;
        same_shape("disparity_batch", &self.f_target, &self.fprime_target)?;
        same_shape("disparity_batch", &self.f_source, &self.f_target)
    }
}

pub fn mdd_loss(batch: &DisparityBatch, cfg: &MddConfig) -> Result<f64> {
    batch.validate()?;
    let s = source_disparity(&batch.f_source, &batch.fprime_source)?;
    let t = target_disparity(&batch.f_target, &batch.fprime_target)?;
    Ok(s - cfg.gamma * t)
}

pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::Shape {
            op: "cross_entropy",
            detail: format!("logits {:?}, {} labels", logits.shape(), labels.len()),
        });
    }
    let k = logits.shape()[1];
    let mut acc = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::ClassOutOfRange { index: y, count: k });
        }
        acc -= log_softmax_at(logits.row(i), y);
    }
    Ok(acc / labels.len() as f64)
}

/// Scalar nodes of one recorded objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveVars {
    pub ce: Var,
    pub source_disparity: Var,
    pub target_disparity: Var,
    pub mdd: Var,
    pub total: Var,
    pub f_source: Var,
    pub f_target: Var,
}

/// `mean(-log_softmax(logits)[labels])` on the tape.
pub fn record_cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let ls = tape.log_softmax(logits)?;
    let picked = tape.gather_class(ls, labels)?;
    let m = tape.reduce_mean(picked)?;
    tape.scale(m, -1.0)
}

/// Records `CE + lambda * (source_disparity - gamma * target_disparity)` for
/// a source batch (with labels) and an unlabeled target batch, both given as
/// `(batch, channels, len)` input nodes.
pub fn total_objective(
    tape: &mut Tape,
    model: &ModelBundle,
    source: Var,
    target: Var,
    labels: &[usize],
    cfg: &MddConfig,
) -> Result<ObjectiveVars> {
    cfg.validate()?;
    let es = model.extract_on(tape, source)?;
    let et = model.extract_on(tape, target)?;
    let f_s = model.classify_on(tape, es, Head::Main, None)?;
    let f_t = model.classify_on(tape, et, Head::Main, None)?;

    let beta = cfg.grl_beta;
    let (fp_s, fp_t) = match cfg.grl_placement {
        GrlPlacement::Features => {
            let gs = tape.grl(es, beta)?;
            let gt = tape.grl(et, beta)?;
            (
                model.classify_on(tape, gs, Head::Adversarial, None)?,
                model.classify_on(tape, gt, Head::Adversarial, None)?,
            )
        }
        GrlPlacement::Adversary => (
            model.classify_on(tape, es, Head::Adversarial, Some(beta))?,
            model.classify_on(tape, et, Head::Adversarial, Some(beta))?,
        ),
        GrlPlacement::Disabled => (
            model.classify_on(tape, es, Head::Adversarial, None)?,
            model.classify_on(tape, et, Head::Adversarial, None)?,
        ),
    };
    if tape.value(fp_s).shape()[0] != tape.value(fp_t).shape()[0] {
        return Err(Error::Shape {
            op: "total_objective",
            detail: "source and target batches differ in size".into(),
        });
    }

    let h_s = argmax_rows(tape.value(f_s));
    let h_t = argmax_rows(tape.value(f_t));

    let ce = record_cross_entropy(tape, f_s, labels)?;

    let ls = tape.log_softmax(fp_s)?;
    let picked = tape.gather_class(ls, &h_s)?;
    let m = tape.reduce_mean(picked)?;
    let src = tape.scale(m, -1.0)?;

    let p = tape.softmax(fp_t)?;
    let picked = tape.gather_class(p, &h_t)?;
    let clamped = tape.clamp_max(picked, PROB_CEILING)?;
    let neg = tape.scale(clamped, -1.0)?;
    let shape = tape.value(neg).shape().to_vec();
    let ones = tape.constant(Tensor::filled(&shape, 1.0))?;
    let rest = tape.add(ones, neg)?;
    let logs = tape.log(rest)?;
    let tgt = tape.reduce_mean(logs)?;

    let weighted = tape.scale(tgt, -cfg.gamma)?;
    let mdd = tape.add(src, weighted)?;
    let scaled = tape.scale(mdd, cfg.lambda)?;
    let total = tape.add(ce, scaled)?;
    Ok(ObjectiveVars {
        ce,
        source_disparity: src,
        target_disparity: tgt,
        mdd,
        total,
        f_source: f_s,
        f_target: f_t,
    })
}

/// One row of the per-step loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub step: usize,
    pub ce: f64,
    pub source_disparity: f64,
    pub target_disparity: f64,
    pub mdd: f64,
    pub total: f64,
}

impl LossRow {
    pub const HEADER: &'static str = "epoch,step,ce,source_disparity,target_disparity,mdd,total";

    pub fn from_vars(tape: &Tape, v: &ObjectiveVars, epoch: usize, step: usize) -> Self {
        Self {
            epoch,
            step,
            ce: tape.value(v.ce).item(),
            source_disparity: tape.value(v.source_disparity).item(),
            target_disparity: tape.value(v.target_disparity).item(),
            mdd: tape.value(v.mdd).item(),
            total: tape.value(v.total).item(),
        }
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.step, self.ce, self.source_disparity, self.target_disparity, self.mdd, self.total
        )
    }
}
