//! Train a student on a shifted training split and record accuracy per epoch.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use super::{apply_shift, DistillMode, DistillObjective, DistillSpec, ShiftConfig, ShiftKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{accuracy, train_with_callback, Activation, Network, TrainConfig};

/// Data and student shape shared by every run in a grid.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub train_set: &'a Dataset,
    pub eval_set: &'a Dataset,
    /// Input, hidden and output widths of the student.
    pub student_layers: Vec<usize>,
    pub activation: Activation,
    pub final_bias: bool,
    pub train: TrainConfig,
    /// Evaluate on a shifted copy of the eval split instead of the clean one.
    pub eval_on_shifted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub mode: DistillMode,
    pub shift: ShiftConfig,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub accuracy: f64,
    pub wall_time: Duration,
    pub student: Network,
}

/// One student run. The seed drives student initialisation, batch order and
/// the shift realisation (`shift.seed + seed`).
///
/// In kd modes the teacher scores the same shifted batches the student sees.
/// In ckd modes only the precomputed relation matrix is used.
pub fn run_experiment(exp: &Experiment<'_>, spec: &DistillSpec, shift: &ShiftConfig, seed: u64) -> Result<RunReport> {
    let start = Instant::now();
    let objective = DistillObjective::new(spec)?;
    let run_shift = ShiftConfig { seed: shift.seed.wrapping_add(seed), ..*shift };
    let train_set = apply_shift(exp.train_set, &run_shift)?;
    let eval_set = if exp.eval_on_shifted {
        let eval_shift = ShiftConfig { seed: run_shift.seed ^ 0x9e37_79b9_7f4a_7c15, ..run_shift };
        apply_shift(exp.eval_set, &eval_shift)?
    } else {
        exp.eval_set.clone()
    };
    let student = Network::random(&exp.student_layers, exp.activation, exp.final_bias, seed)?;
    let cfg = TrainConfig { seed, ..exp.train.clone() };
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let outcome = train_with_callback(student, &train_set, &cfg, &objective, |net, m| {
        epochs.push(EpochRecord { epoch: m.epoch, train_loss: m.train_loss, eval_accuracy: accuracy(net, &eval_set)? });
        Ok(())
    })?;
    let acc = match epochs.last() {
        Some(e) => e.eval_accuracy,
        None => accuracy(&outcome.network, &eval_set)?,
    };
    Ok(RunReport {
        mode: spec.mode,
        shift: *shift,
        seed,
        epochs,
        accuracy: acc,
        wall_time: start.elapsed(),
        student: outcome.network,
    })
}

/// Mean and sample standard deviation of final accuracy per (mode, shift).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mode: DistillMode,
    pub shift_kind: ShiftKind,
    pub shift_param: f64,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

pub fn summarize(reports: &[RunReport]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(DistillMode, &'static str, u64), (ShiftKind, f64, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        let key = (r.mode, r.shift.kind.name(), r.shift.param().to_bits());
        groups.entry(key).or_insert_with(|| (r.shift.kind, r.shift.param(), Vec::new())).2.push(r.accuracy);
    }
    groups
        .into_iter()
        .map(|((mode, _, _), (shift_kind, shift_param, accs))| {
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = if accs.len() > 1 { accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            SummaryRow { mode, shift_kind, shift_param, runs: accs.len(), mean_accuracy: mean, std_accuracy: var.sqrt() }
        })
        .collect()
}

/// Per-epoch records: `mode,shift_kind,shift_param,seed,epoch,train_loss,eval_accuracy`.
pub fn write_metrics_csv(reports: &[RunReport], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("mode,shift_kind,shift_param,seed,epoch,train_loss,eval_accuracy\n");
    for r in reports {
        for e in &r.epochs {
            let _ = writeln!(s, "{},{},{},{},{},{},{}", r.mode, r.shift.kind.name(), r.shift.param(), r.seed, e.epoch, e.train_loss, e.eval_accuracy);
        }
    }
    write(path.as_ref(), s)
}

/// One row per run: `mode,shift_kind,shift_param,seed,accuracy,wall_time_s`.
pub fn write_runs_csv(reports: &[RunReport], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("mode,shift_kind,shift_param,seed,accuracy,wall_time_s\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{},{},{},{:.3}", r.mode, r.shift.kind.name(), r.shift.param(), r.seed, r.accuracy, r.wall_time.as_secs_f64());
    }
    write(path.as_ref(), s)
}

/// `mode,shift_kind,shift_param,runs,mean_accuracy,std_accuracy`.
pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("mode,shift_kind,shift_param,runs,mean_accuracy,std_accuracy\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.mode, r.shift_kind.name(), r.shift_param, r.runs, r.mean_accuracy, r.std_accuracy);
    }
    write(path.as_ref(), s)
}

fn write(path: &Path, contents: String) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
