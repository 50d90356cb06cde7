//! Experiment recipes shared by the command line and the acceptance suite.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::hessian::{eigenspectrum, hessian_block, spectrum_report, SpectrumReport, SpectrumSettings, DEFAULT_FD_STEP};
use crate::io::{fmt_num, CsvBuilder};
use crate::markov::{
    build_transition_model, make_length_gen_testset, sample_dataset, simple_fraction, Dataset, Sample, TransitionModel, DEFAULT_ALPHA,
    DEFAULT_LEN, DEFAULT_MATRICES, DEFAULT_N, DEFAULT_VOCAB,
};
use crate::model::{Arch, Block, Checkpoint, EmbeddingMap, Params};
use crate::shift::{run_staged, shift_split, speedup, ShiftPoint, Speedup, StagedRun};
use crate::train::{evaluate, train, EpochMetrics, TrainConfig, TrainOutcome};

/// Markov instance parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub vocab: usize,
    pub len: usize,
    pub n: usize,
    pub alpha: f64,
    pub matrices: usize,
    pub seed: u64,
}

impl DataSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self { vocab: DEFAULT_VOCAB, len: DEFAULT_LEN, n: DEFAULT_N, alpha: DEFAULT_ALPHA, matrices: DEFAULT_MATRICES, seed }
    }

    /// Transition model and training set, both from `seed`.
    pub fn build(&self) -> Result<(TransitionModel, Dataset)> {
        let m = build_transition_model(self.seed, self.vocab, self.matrices)?;
        let d = sample_dataset(&m, self.n, self.len, self.alpha, self.seed)?;
        Ok((m, d))
    }
}

#[derive(Clone, Debug)]
pub struct PairRun {
    pub seed: u64,
    pub loops: usize,
    pub single: TrainOutcome<f64>,
    pub looped: TrainOutcome<f64>,
}

/// Trains Single and `Looped(loops)` from the same seed, concurrently.
pub fn training_pair(base: &TrainConfig, data: &Dataset, loops: usize) -> Result<PairRun> {
    let vocab = data.source_model.vocab_size;
    let cs = TrainConfig { arch: Arch::Single, ..base.clone() };
    let cl = TrainConfig { arch: Arch::Looped(loops), ..base.clone() };
    let (single, looped) = thread::scope(|s| {
        let h = s.spawn(|| train::<f64>(&cl, &data.samples, vocab, None, None));
        let single = train::<f64>(&cs, &data.samples, vocab, None, None);
        (single, h.join().expect("training thread panicked"))
    });
    Ok(PairRun { seed: base.seed, loops, single: single?, looped: looped? })
}

/// Metrics of several runs in one table with a leading `arch,seed` key.
pub fn keyed_metrics_csv(runs: &[(String, u64, &[EpochMetrics])]) -> String {
    let mut b = CsvBuilder::new(&[
        "arch",
        "seed",
        "epoch",
        "train_loss",
        "accuracy_total",
        "accuracy_low",
        "accuracy_mid",
        "accuracy_high",
        "grad_norm",
        "flop_estimate",
    ]);
    for (arch, seed, rows) in runs {
        for m in rows.iter() {
            b.row([
                arch.clone(),
                seed.to_string(),
                m.epoch.to_string(),
                fmt_num(m.train_loss),
                fmt_num(m.accuracy_total),
                fmt_num(m.accuracy_low),
                fmt_num(m.accuracy_mid),
                fmt_num(m.accuracy_high),
                fmt_num(m.grad_norm),
                fmt_num(m.flop_estimate),
            ]);
        }
    }
    b.finish()
}

pub fn pair_csv(pair: &PairRun) -> String {
    keyed_metrics_csv(&[
        (Arch::Single.to_string(), pair.seed, &pair.single.metrics),
        (Arch::Looped(pair.loops).to_string(), pair.seed, &pair.looped.metrics),
    ])
}

/// Accuracy on one stratum at the last row with `epoch ≤ at`.
pub fn high_ic_at(rows: &[EpochMetrics], at: usize) -> Option<f64> {
    rows.iter().rfind(|m| m.epoch <= at).map(|m| m.accuracy_high)
}

pub fn checkpoint_embedding(ck: &Checkpoint<f64>) -> Result<EmbeddingMap<f64>> {
    Ok(EmbeddingMap::new(ck.params.vocab(), ck.params.dim(), ck.embedding_seed)?.with_positional(ck.positional))
}

/// Spectrum of one weight block at every checkpoint, linked for entropy and
/// mutual information. Spectra are computed in parallel.
pub fn hessian_trajectory(
    checkpoints: &[Checkpoint<f64>],
    samples: &[Sample],
    layer: usize,
    block: Block,
    settings: &SpectrumSettings,
) -> Result<Vec<SpectrumReport>> {
    if checkpoints.is_empty() {
        return param_err("no checkpoints");
    }
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(checkpoints.len());
    let spectra: Vec<Result<Vec<f64>>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..checkpoints.len())
                        .step_by(workers)
                        .map(|i| {
                            let ck = &checkpoints[i];
                            let emap = checkpoint_embedding(ck)?;
                            let h = hessian_block(&ck.params, &emap, samples, ck.arch, layer, block, DEFAULT_FD_STEP)?;
                            eigenspectrum(&h)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let per_worker: Vec<Vec<Result<Vec<f64>>>> = handles.into_iter().map(|h| h.join().expect("Hessian worker panicked")).collect();
        let mut out: Vec<Option<Result<Vec<f64>>>> = (0..checkpoints.len()).map(|_| None).collect();
        for (w, list) in per_worker.into_iter().enumerate() {
            for (k, r) in list.into_iter().enumerate() {
                out[w + k * workers] = Some(r);
            }
        }
        out.into_iter().map(|r| r.expect("every index filled")).collect()
    });
    let mut reports: Vec<SpectrumReport> = Vec::with_capacity(checkpoints.len());
    for (ck, eigs) in checkpoints.iter().zip(spectra) {
        let r = spectrum_report(ck.epoch, block, eigs?, reports.last(), settings)?;
        reports.push(r);
    }
    Ok(reports)
}

/// One row of the length-generalisation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub arch: String,
    pub seed: u64,
    pub length: usize,
    pub accuracy_total: f64,
    /// Accuracy on test sequences whose IC does not exceed the training maximum.
    pub accuracy_simple: f64,
    pub simple_fraction: f64,
}

/// Training accuracy plus accuracy on longer test sets from the same dynamics.
pub fn length_generalization(
    arch: Arch,
    seed: u64,
    params: &Params<f64>,
    emap: &EmbeddingMap<f64>,
    train_set: &Dataset,
    tests: &[Dataset],
) -> Result<Vec<LengthRow>> {
    let max_ic = train_set.max_ic();
    let tr = evaluate(params, emap, arch, &train_set.samples)?;
    let mut rows = vec![LengthRow {
        arch: arch.to_string(),
        seed,
        length: train_set.length,
        accuracy_total: tr.accuracy_total,
        accuracy_simple: tr.accuracy_total,
        simple_fraction: 1.0,
    }];
    for t in tests {
        let all = evaluate(params, emap, arch, &t.samples)?;
        let simple: Vec<Sample> = t.samples.iter().filter(|s| s.ic <= max_ic).cloned().collect();
        let acc_simple = if simple.is_empty() { f64::NAN } else { evaluate(params, emap, arch, &simple)?.accuracy_total };
        rows.push(LengthRow {
            arch: arch.to_string(),
            seed,
            length: t.length,
            accuracy_total: all.accuracy_total,
            accuracy_simple: acc_simple,
            simple_fraction: simple_fraction(t, max_ic),
        });
    }
    Ok(rows)
}

/// Test sets at each length, seeded from `seed` and the length.
pub fn length_test_sets(model: &TransitionModel, lengths: &[usize], n_test: usize, alpha: f64, seed: u64) -> Result<Vec<Dataset>> {
    lengths.iter().map(|&l| make_length_gen_testset(model, l, n_test, alpha, seed.wrapping_add(l as u64))).collect()
}

/// `arch,seed,length,accuracy_total,accuracy_simple,simple_fraction`.
pub fn length_csv(rows: &[LengthRow]) -> String {
    let mut b = CsvBuilder::new(&["arch", "seed", "length", "accuracy_total", "accuracy_simple", "simple_fraction"]);
    for r in rows {
        b.row([
            r.arch.clone(),
            r.seed.to_string(),
            r.length.to_string(),
            fmt_num(r.accuracy_total),
            fmt_num(r.accuracy_simple),
            fmt_num(r.simple_fraction),
        ]);
    }
    b.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub shift: usize,
    pub speedup: Speedup,
    pub final_accuracy_total: f64,
}

/// Fixed shift points against one shared pure-Looped baseline.
pub fn shift_sweep(config: &TrainConfig, loops: usize, data: &Dataset, points: &[usize]) -> Result<(StagedRun, Vec<SweepPoint>)> {
    let (train_set, val) = shift_split(data, config.seed);
    let vocab = data.source_model.vocab_size;
    let run = |p: usize| run_staged::<f64>(config, loops, ShiftPoint::Fixed(p), &train_set, &val, vocab, None);
    let (baseline, staged): (Result<StagedRun>, Vec<Result<StagedRun>>) = thread::scope(|s| {
        let handles: Vec<_> = points.iter().map(|&p| s.spawn(move || run(p))).collect();
        let base = run(0);
        (base, handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect())
    });
    let baseline = baseline?;
    let mut out = Vec::with_capacity(points.len());
    for (p, r) in points.iter().zip(staged) {
        let rows = r?.combined_metrics();
        out.push(SweepPoint {
            shift: *p,
            speedup: speedup(&rows, &baseline.stage2_metrics)?,
            final_accuracy_total: rows.last().expect("non-empty").accuracy_total,
        });
    }
    Ok((baseline, out))
}

/// `shift,flops_ratio,wallclock_ratio,accuracy_delta,final_accuracy_total`.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut b = CsvBuilder::new(&["shift", "flops_ratio", "wallclock_ratio", "accuracy_delta", "final_accuracy_total"]);
    for p in points {
        b.row([
            p.shift.to_string(),
            fmt_num(p.speedup.flops_ratio),
            fmt_num(p.speedup.wallclock_ratio),
            fmt_num(p.speedup.accuracy_delta),
            fmt_num(p.final_accuracy_total),
        ]);
    }
    b.finish()
}
