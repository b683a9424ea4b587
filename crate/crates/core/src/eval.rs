//! Accuracy, confusion matrices, the source→target experiment matrix and
//! embedding export.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SchemeGroup};
use crate::error::{Error, Result};
use crate::model::{build_model, ModelBundle};
use crate::seed;
use crate::signal::{DatasetManifest, IQFrame, ModulationKind};
use crate::train::{predict, pretrain, train_mdd, TrainLog};

/// `100 * correct / total`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("accuracy"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Shape {
            op: "accuracy",
            detail: format!("{} predictions, {} labels", predictions.len(), labels.len()),
        });
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// Rows are true emitters, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.k).map(|c| (0..self.k).map(|r| self.get(r, c)).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        100.0 * self.trace() as f64 / self.total() as f64
    }

    /// Fraction of all predictions that land in the `n` most used columns.
    pub fn top_column_mass(&self, n: usize) -> f64 {
        let mut cols = self.column_sums();
        cols.sort_unstable_by(|a, b| b.cmp(a));
        cols.iter().take(n).sum::<u64>() as f64 / self.total() as f64
    }

    pub fn to_text(&self) -> String {
        let width = self.counts.iter().max().map_or(1, |m| m.to_string().len()).max(3);
        let mut s = format!("{:>9}", "true\\pred");
        for c in 0..self.k {
            let _ = write!(s, " {c:>width$}");
        }
        s.push('\n');
        for r in 0..self.k {
            let _ = write!(s, "{r:>9}");
            for c in 0..self.k {
                let _ = write!(s, " {:>width$}", self.get(r, c));
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(predictions: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape {
            op: "confusion",
            detail: format!("{} predictions, {} labels", predictions.len(), labels.len()),
        });
    }
    let mut counts = vec![0u64; k * k];
    for (&p, &l) in predictions.iter().zip(labels) {
        if l >= k || p >= k {
            return Err(Error::ClassOutOfRange { index: l.max(p), count: k });
        }
        counts[l * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

/// Accuracy and confusion of f on a labeled split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(bundle: &ModelBundle, split: &DatasetManifest) -> Result<Evaluation> {
    let labels = split.labels().ok_or(Error::InvalidDataset("evaluation split has unlabeled frames".into()))?;
    let pred = predict(bundle, &split.frames)?;
    let confusion = confusion(&pred, &labels, bundle.config.class_count)?;
    Ok(Evaluation {
        accuracy: accuracy(&pred, &labels)?,
        confusion,
    })
}

/// Epoch hook that scores f on a held-out labeled split.
pub fn target_monitor(test: &DatasetManifest) -> impl FnMut(usize, &ModelBundle) -> Result<Option<f64>> + '_ {
    move |_, bundle| evaluate(bundle, test).map(|e| Some(e.accuracy))
}

/// Baseline and adapted results for one source→target scenario.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub baseline: Evaluation,
    pub mdd: Evaluation,
    pub pretrain_log: TrainLog,
    pub mdd_log: TrainLog,
}

/// Generates the three splits, pretrains, scores the baseline on the target
/// test split, then continues from that checkpoint with the MDD objective.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioResult> {
    let data = cfg.generate()?;
    let mut bundle = build_model(&cfg.model, cfg.train.seed, cfg.train.adam)?;
    let pretrain_log = pretrain(&mut bundle, &data.source, &cfg.train)?;
    let baseline = evaluate(&bundle, &data.target_test)?;
    let mut monitor = target_monitor(&data.target_test);
    let mdd_log = train_mdd(&mut bundle, &data.source, &data.target_train, &cfg.train, Some(&mut monitor))?;
    let mdd = evaluate(&bundle, &data.target_test)?;
    Ok(ScenarioResult {
        baseline,
        mdd,
        pretrain_log,
        mdd_log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub group: String,
    pub target: ModulationKind,
    /// The target scheme is one of the group's source schemes.
    pub diagonal: bool,
    pub baseline: f64,
    pub mdd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAverage {
    pub group: String,
    /// Off-diagonal cells that entered the mean.
    pub cells: usize,
    pub baseline: Option<f64>,
    pub mdd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    pub groups: Vec<String>,
    pub targets: Vec<ModulationKind>,
    /// Row-major: group, then target.
    pub cells: Vec<MatrixCell>,
    pub averages: Vec<GroupAverage>,
}

impl ExperimentMatrix {
    pub fn from_cells(groups: Vec<String>, targets: Vec<ModulationKind>, cells: Vec<MatrixCell>) -> Result<Self> {
        if cells.len() != groups.len() * targets.len() {
            return Err(Error::Shape {
                op: "experiment_matrix",
                detail: format!("{} cells for {}x{}", cells.len(), groups.len(), targets.len()),
            });
        }
        let averages = group_averages(&groups, &cells);
        Ok(Self {
            groups,
            targets,
            cells,
            averages,
        })
    }

    pub fn cell(&self, group: usize, target: usize) -> &MatrixCell {
        &self.cells[group * self.targets.len() + target]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned table: one row per group, `baseline/mdd` per target, diagonal
    /// cells starred, and the off-diagonal means at the right.
    pub fn to_table(&self) -> String {
        let mut header = vec!["source".to_string()];
        header.extend(self.targets.iter().map(|t| t.name().to_string()));
        header.push("avg baseline".into());
        header.push("avg mdd".into());
        header.push("gain".into());
        let mut rows = vec![header];
        for (g, name) in self.groups.iter().enumerate() {
            let mut row = vec![name.clone()];
            for t in 0..self.targets.len() {
                let c = self.cell(g, t);
                let star = if c.diagonal { "*" } else { "" };
                row.push(format!("{:.2}/{:.2}{star}", c.baseline, c.mdd));
            }
            let a = &self.averages[g];
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
            row.push(fmt(a.baseline));
            row.push(fmt(a.mdd));
            row.push(fmt(a.baseline.zip(a.mdd).map(|(b, m)| m - b)));
            rows.push(row);
        }
        let cols = rows[0].len();
        let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap()).collect();
        let mut s = String::new();
        for row in &rows {
            let line: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
            s.push_str(line.join("  ").trim_end());
            s.push('\n');
        }
        s.push_str("cells are baseline/mdd target accuracy (%); * marks same-scheme cells, left out of the averages\n");
        s
    }
}

/// Per-group means over cells whose target is not among the group's sources.
pub fn group_averages(groups: &[String], cells: &[MatrixCell]) -> Vec<GroupAverage> {
    groups
        .iter()
        .map(|g| {
            let off: Vec<&MatrixCell> = cells.iter().filter(|c| &c.group == g && !c.diagonal).collect();
            let mean = |f: fn(&MatrixCell) -> f64| {
                (!off.is_empty()).then(|| off.iter().map(|c| f(c)).sum::<f64>() / off.len() as f64)
            };
            GroupAverage {
                group: g.clone(),
                cells: off.len(),
                baseline: mean(|c| c.baseline),
                mdd: mean(|c| c.mdd),
            }
        })
        .collect()
}

/// The scenario configuration for one matrix cell. Data and training seeds
/// are derived from the fleet seed, the group and the target, so a cell's
/// result does not depend on which other cells run or in what order.
pub fn cell_config(cfg: &ExperimentConfig, group: &SchemeGroup, target: ModulationKind) -> ExperimentConfig {
    let path = [seed::label("cell"), seed::label(&group.name), target.tag() as u64];
    let cell_seed = seed::derive(cfg.fleet.seed, &path);
    let mut c = cfg.clone();
    c.schemes.source = group.schemes.clone();
    c.schemes.target = target;
    c.data.seed = seed::derive(cell_seed, &[seed::label("data"), cfg.data.seed]);
    c.train.seed = seed::derive(cell_seed, &[seed::label("train"), cfg.train.seed]);
    c
}

pub fn run_matrix(cfg: &ExperimentConfig) -> Result<ExperimentMatrix> {
    let groups = &cfg.matrix.groups;
    let targets = &cfg.matrix.targets;
    let distinct: std::collections::BTreeSet<ModulationKind> =
        groups.iter().flat_map(|g| g.schemes.iter().copied()).chain(targets.iter().copied()).collect();
    if distinct.len() < 2 && !(groups.len() == 1 && targets.len() == 1) {
        return Err(Error::InvalidTrain("matrix needs at least 2 schemes".into()));
    }
    if groups.is_empty() || targets.is_empty() {
        return Err(Error::InvalidTrain("matrix needs at least one group and one target".into()));
    }
    let jobs: Vec<(&SchemeGroup, ModulationKind)> =
        groups.iter().flat_map(|g| targets.iter().map(move |&t| (g, t))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(g, t)| {
            let r = run_scenario(&cell_config(cfg, g, t))?;
            Ok(MatrixCell {
                group: g.name.clone(),
                target: t,
                diagonal: g.schemes.contains(&t),
                baseline: r.baseline.accuracy,
                mdd: r.mdd.accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ExperimentMatrix::from_cells(groups.iter().map(|g| g.name.clone()).collect(), targets.clone(), cells)
}

/// One CSV row per frame: label (−1 when unlabeled), scheme name, then the
/// embedding values.
pub fn export_embeddings(bundle: &ModelBundle, frames: &[IQFrame], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(render_embeddings(bundle, frames)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn render_embeddings(bundle: &ModelBundle, frames: &[IQFrame]) -> Result<String> {
    let mut s = String::new();
    for chunk in frames.chunks(crate::train::PREDICT_CHUNK) {
        let refs: Vec<&IQFrame> = chunk.iter().collect();
        let e = bundle.extract(&refs)?;
        for (i, f) in chunk.iter().enumerate() {
            let label = f.label.map_or(-1, i64::from);
            let _ = write!(s, "{label},{}", f.scheme);
            for v in e.row(i) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests;
