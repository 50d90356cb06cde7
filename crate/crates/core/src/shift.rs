//! Two-stage training: Single attention until the validation loss plateaus and a
//! patience period elapses, then the same weights continue under Looped attention.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::markov::{Dataset, Sample};
use crate::model::{batch_loss, Arch, Params};
use crate::scalar::Scalar;
use crate::train::{flops_per_epoch, validation_split, EpochMetrics, FlopShape, TrainConfig, Trainer};

pub const DEFAULT_DELTA1: f64 = 1e-4;
pub const DEFAULT_PLATEAU_WINDOW: usize = 10;
pub const DEFAULT_PATIENCE: usize = 30;
pub const DEFAULT_DELTA2: f64 = 0.2;
pub const DEFAULT_STABILITY_WINDOW: usize = 10;
pub const DEFAULT_SHIFT_MIN: usize = 100;
pub const DEFAULT_SHIFT_MAX: usize = 150;
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScpConfig {
    pub delta1: f64,
    pub plateau_window: usize,
    pub patience: usize,
    pub delta2: f64,
    pub stability_window: usize,
    pub e_shift_min: usize,
    pub e_shift_max: usize,
}

impl Default for ScpConfig {
    fn default() -> Self {
        Self {
            delta1: DEFAULT_DELTA1,
            plateau_window: DEFAULT_PLATEAU_WINDOW,
            patience: DEFAULT_PATIENCE,
            delta2: DEFAULT_DELTA2,
            stability_window: DEFAULT_STABILITY_WINDOW,
            e_shift_min: DEFAULT_SHIFT_MIN,
            e_shift_max: DEFAULT_SHIFT_MAX,
        }
    }
}

impl ScpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta1 > 0.0 && self.delta2 > 0.0) {
            return param_err("delta1 and delta2 must be positive");
        }
        if self.plateau_window == 0 || self.stability_window == 0 {
            return param_err("windows must be at least 1");
        }
        if self.e_shift_min > self.e_shift_max {
            return param_err("e_shift_min exceeds e_shift_max");
        }
        Ok(())
    }

    /// `clamp(e_plateau + W, e_shift_min, e_shift_max)`.
    pub fn shift_epoch(&self, e_plateau: usize) -> usize {
        (e_plateau + self.patience).clamp(self.e_shift_min, self.e_shift_max)
    }
}

/// Earliest `e` such that each of the `window` steps ending at `e` decreased the
/// loss by less than `delta1`. Index 0 is the loss before any update.
pub fn detect_plateau(history: &[f64], delta1: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    let mut run = 0;
    for t in 1..history.len() {
        if history[t - 1] - history[t] < delta1 {
            run += 1;
            if run >= window {
                return Some(t);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Coefficient of variation over the trailing window.
pub fn grad_cov(history: &[f64], window: usize) -> Option<f64> {
    if window == 0 || history.len() < window {
        return None;
    }
    let tail = &history[history.len() - window..];
    let n = window as f64;
    let mean = tail.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Some(0.0);
    }
    let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean.abs())
}

/// `std/mean < delta2` over the trailing window; a zero mean is stable.
pub fn gradient_stable(history: &[f64], delta2: f64, window: usize) -> Result<bool> {
    match grad_cov(history, window) {
        Some(c) => Ok(c < delta2),
        None => param_err(format!("need at least {window} gradient norms, have {}", history.len())),
    }
}

/// When to switch architectures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShiftPoint {
    Scp(ScpConfig),
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalAccuracy {
    pub total: f64,
    pub low: f64,
    pub mid: f64,
    pub high: f64,
}

impl From<&EpochMetrics> for FinalAccuracy {
    fn from(m: &EpochMetrics) -> Self {
        Self { total: m.accuracy_total, low: m.accuracy_low, mid: m.accuracy_mid, high: m.accuracy_high }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    /// Baseline FLOPs over staged FLOPs.
    pub flops_ratio: f64,
    pub wallclock_ratio: f64,
    /// Staged minus baseline final total accuracy.
    pub accuracy_delta: f64,
}

/// Final-row comparison of two metric streams.
pub fn speedup(staged: &[EpochMetrics], baseline: &[EpochMetrics]) -> Result<Speedup> {
    let (Some(s), Some(b)) = (staged.last(), baseline.last()) else {
        return param_err("empty metric stream");
    };
    Ok(Speedup {
        flops_ratio: b.flop_estimate / s.flop_estimate,
        wallclock_ratio: b.wall_time / s.wall_time,
        accuracy_delta: s.accuracy_total - b.accuracy_total,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MatchedSpeedup {
    Bounded { target: f64, epochs_staged: usize, epochs_baseline: usize, epoch_ratio: f64, flops_ratio: f64 },
    /// One of the runs never reached the target; best accuracies for diagnosis.
    Unbounded { target: f64, best_staged: f64, best_baseline: f64 },
}

/// Epochs (and FLOPs) each run needs to first reach `target` total accuracy.
pub fn matched_speedup(staged: &[EpochMetrics], baseline: &[EpochMetrics], target: f64) -> MatchedSpeedup {
    let first = |rows: &[EpochMetrics]| rows.iter().find(|m| m.accuracy_total >= target).cloned();
    let best = |rows: &[EpochMetrics]| rows.iter().map(|m| m.accuracy_total).fold(f64::NEG_INFINITY, f64::max);
    match (first(staged), first(baseline)) {
        (Some(s), Some(b)) => MatchedSpeedup::Bounded {
            target,
            epochs_staged: s.epoch,
            epochs_baseline: b.epoch,
            epoch_ratio: b.epoch as f64 / s.epoch.max(1) as f64,
            flops_ratio: if s.flop_estimate > 0.0 { b.flop_estimate / s.flop_estimate } else { f64::INFINITY },
        },
        _ => MatchedSpeedup::Unbounded { target, best_staged: best(staged), best_baseline: best(baseline) },
    }
}

/// `S·c_L / (E·c_S + (S−E)·c_L)`.
pub fn flop_ratio_closed_form(total: usize, shift: usize, c_single: f64, c_looped: f64) -> f64 {
    let (s, e) = (total as f64, shift.min(total) as f64);
    s * c_looped / (e * c_single + (s - e) * c_looped)
}

/// Closed-form ratio using the per-epoch FLOP model.
pub fn predicted_flop_ratio(total: usize, shift: usize, loops: usize, shape: FlopShape, n_samples: usize) -> f64 {
    let cs = flops_per_epoch(Arch::Single, shape, n_samples);
    let cl = flops_per_epoch(Arch::Looped(loops), shape, n_samples);
    flop_ratio_closed_form(total, shift, cs, cl)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagedRun {
    pub e_plateau: Option<usize>,
    pub e_shift: usize,
    /// No plateau was seen by `e_shift_max`.
    pub fallback: bool,
    /// Rows under Single, including the hand-off epoch. Empty when shifting at 0.
    pub stage1_metrics: Vec<EpochMetrics>,
    /// Rows under Looped, starting at the hand-off epoch.
    pub stage2_metrics: Vec<EpochMetrics>,
    /// Stage-I validation loss, index 0 before training.
    pub val_loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub grad_cov_at_shift: Option<f64>,
    pub grad_stable_at_shift: Option<bool>,
    pub total_flops: f64,
    pub wall_time: f64,
}

impl StagedRun {
    /// Combined stream with the hand-off epoch taken from stage II.
    pub fn combined_metrics(&self) -> Vec<EpochMetrics> {
        let mut out: Vec<EpochMetrics> = self.stage1_metrics.iter().filter(|m| m.epoch < self.e_shift).cloned().collect();
        out.extend(self.stage2_metrics.iter().cloned());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub loops: usize,
    pub epochs: usize,
    pub shift_point: ShiftPoint,
    pub staged: StagedRun,
    pub baseline_metrics: Vec<EpochMetrics>,
    pub final_accuracy: FinalAccuracy,
    pub baseline_final_accuracy: FinalAccuracy,
    pub speedup: Speedup,
    pub predicted_flops_ratio: f64,
    /// Where the baseline metrics live, when written to disk.
    pub baseline_ref: Option<String>,
}

impl ShiftReport {
    /// `e_shift = clamp(e_plateau + W)` under SCP.
    pub fn identity_holds(&self) -> bool {
        match (self.shift_point, self.staged.e_plateau) {
            (ShiftPoint::Scp(c), Some(p)) => self.staged.e_shift == c.shift_epoch(p),
            (ShiftPoint::Scp(c), None) => self.staged.fallback && self.staged.e_shift == c.e_shift_max.min(self.epochs),
            (ShiftPoint::Fixed(e), _) => self.staged.e_shift == e.min(self.epochs),
        }
    }
}

/// Runs the staged schedule on `train` samples, monitoring validation loss on `val`.
/// `config.arch` is ignored: stage I is Single, stage II is `Looped(loops)`.
pub fn run_staged<T: Scalar>(
    config: &TrainConfig,
    loops: usize,
    point: ShiftPoint,
    train: &[Sample],
    val: &[Sample],
    vocab: usize,
    init: Option<Params<T>>,
) -> Result<StagedRun> {
    if let ShiftPoint::Scp(c) = point {
        c.validate()?;
    }
    let looped = Arch::Looped(loops);
    looped.validate()?;
    let mut cfg = config.clone();
    cfg.arch = Arch::Single;
    let mut tr: Trainer<'_, T> = Trainer::new(cfg, train, vocab, init)?;
    let epochs = config.epochs;
    let every = config.eval_every;
    let mut run = StagedRun {
        e_plateau: None,
        e_shift: epochs,
        fallback: false,
        stage1_metrics: Vec::new(),
        stage2_metrics: Vec::new(),
        val_loss: Vec::new(),
        grad_norm: Vec::new(),
        grad_cov_at_shift: None,
        grad_stable_at_shift: None,
        total_flops: 0.0,
        wall_time: 0.0,
    };
    let mut target = match point {
        ShiftPoint::Fixed(e) => Some(e.min(epochs)),
        ShiftPoint::Scp(_) => None,
    };
    let mut stage2 = false;
    if target == Some(0) {
        tr.set_arch(looped)?;
        run.e_shift = 0;
        stage2 = true;
    }
    loop {
        let e = tr.epoch;
        let (loss, grad) = tr.probe()?;
        let gnorm = grad.global_norm().to_f64_lossy();
        if !stage2 {
            if !val.is_empty() {
                run.val_loss.push(batch_loss(&tr.params, &tr.emap, val, Arch::Single)?.to_f64_lossy());
            }
            run.grad_norm.push(gnorm);
            if let ShiftPoint::Scp(c) = point {
                if target.is_none() {
                    if let Some(p) = detect_plateau(&run.val_loss, c.delta1, c.plateau_window) {
                        run.e_plateau = Some(p);
                        target = Some(c.shift_epoch(p).min(epochs));
                    } else if e >= c.e_shift_max.min(epochs) {
                        log::warn!("no plateau by epoch {e}; shifting at the clamp maximum");
                        run.fallback = true;
                        target = Some(e);
                    }
                }
            }
            let shift_now = target == Some(e) || e == epochs;
            if e % every == 0 || shift_now {
                run.stage1_metrics.push(tr.metrics_row(loss, gnorm, train)?);
            }
            if !shift_now {
                tr.update(&grad)?;
                continue;
            }
            if let ShiftPoint::Scp(c) = point {
                run.grad_cov_at_shift = grad_cov(&run.grad_norm, c.stability_window);
                run.grad_stable_at_shift = run.grad_cov_at_shift.map(|v| v < c.delta2);
                if run.grad_stable_at_shift == Some(false) {
                    log::warn!("gradient norm not yet stable at the shift epoch {e}");
                }
            }
            run.e_shift = e;
            tr.set_arch(looped)?;
            stage2 = true;
            let (loss, grad) = tr.probe()?;
            let gnorm = grad.global_norm().to_f64_lossy();
            run.stage2_metrics.push(tr.metrics_row(loss, gnorm, train)?);
            if e == epochs {
                break;
            }
            tr.update(&grad)?;
            continue;
        }
        if e % every == 0 || e == epochs {
            run.stage2_metrics.push(tr.metrics_row(loss, gnorm, train)?);
        }
        if e == epochs {
            break;
        }
        tr.update(&grad)?;
    }
    run.total_flops = tr.flops;
    run.wall_time = tr.elapsed();
    Ok(run)
}

/// Seeded (train, validation) split with [`VALIDATION_FRACTION`] held out.
pub fn shift_split(data: &Dataset, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let (tr_idx, val_idx) = validation_split(data.len(), VALIDATION_FRACTION, seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| data.samples[i].clone()).collect();
    (pick(&tr_idx), pick(&val_idx))
}

/// Staged run plus a pure-Looped baseline with the same seed, split and budget,
/// executed concurrently.
pub fn run_shift<T: Scalar>(config: &TrainConfig, loops: usize, point: ShiftPoint, data: &Dataset) -> Result<ShiftReport> {
    let (train, val) = shift_split(data, config.seed);
    let vocab = data.source_model.vocab_size;
    let (staged, baseline) = thread::scope(|s| {
        let base = s.spawn(|| run_staged::<T>(config, loops, ShiftPoint::Fixed(0), &train, &val, vocab, None));
        let staged = run_staged::<T>(config, loops, point, &train, &val, vocab, None);
        (staged, base.join().expect("baseline thread panicked"))
    });
    let staged = staged?;
    let baseline = baseline?;
    let staged_rows = staged.combined_metrics();
    let baseline_metrics = baseline.stage2_metrics;
    let speedup = speedup(&staged_rows, &baseline_metrics)?;
    let shape = FlopShape { dim: config.dim, seq_len: data.length - 1, vocab };
    Ok(ShiftReport {
        loops,
        epochs: config.epochs,
        shift_point: point,
        final_accuracy: staged_rows.last().expect("non-empty").into(),
        baseline_final_accuracy: baseline_metrics.last().expect("non-empty").into(),
        predicted_flops_ratio: predicted_flop_ratio(config.epochs, staged.e_shift, loops, shape, train.len()),
        staged,
        baseline_metrics,
        speedup,
        baseline_ref: None,
    })
}
