//! Gradient-descent and Adam training with per-stratum accuracy tracking.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, LabError, Result};
use crate::io::{fmt_num, CsvBuilder};
use crate::markov::{Dataset, Sample, Stratum};
use crate::model::{cross_entropy, forward, loss_and_grad, Arch, Checkpoint, EmbeddingMap, Params, DEFAULT_DIM, DEFAULT_INIT_STD};
use crate::scalar::Scalar;

pub const DEFAULT_EPOCHS: usize = 600;
pub const DEFAULT_LR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Gd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchMode {
    Full,
    Mini(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Arch,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub batch: BatchMode,
    pub seed: u64,
    pub eval_every: usize,
    /// Checkpoint stride for offline Hessian replay.
    pub hessian_every: Option<usize>,
    pub dim: usize,
    pub init_std: f64,
    /// Defaults to `seed` when absent.
    pub embedding_seed: Option<u64>,
    pub positional: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Looped(3),
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LR,
            optimizer: Optimizer::adam(),
            batch: BatchMode::Full,
            seed: 0,
            eval_every: 1,
            hessian_every: None,
            dim: DEFAULT_DIM,
            init_std: DEFAULT_INIT_STD,
            embedding_seed: None,
            positional: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return param_err(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if self.epochs == 0 {
            return param_err("epochs must be at least 1");
        }
        if self.eval_every == 0 {
            return param_err("eval_every must be at least 1");
        }
        if self.hessian_every == Some(0) {
            return param_err("hessian_every must be at least 1");
        }
        if self.batch == BatchMode::Mini(0) {
            return param_err("minibatch size must be at least 1");
        }
        if self.dim == 0 {
            return param_err("model dimension must be positive");
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return param_err("Adam hyperparameters out of range");
            }
        }
        Ok(())
    }

    pub fn embedding_seed(&self) -> u64 {
        self.embedding_seed.unwrap_or(self.seed)
    }

    pub fn embedding<T: Scalar>(&self, vocab: usize) -> Result<EmbeddingMap<T>> {
        Ok(EmbeddingMap::new(vocab, self.dim, self.embedding_seed())?.with_positional(self.positional))
    }

    pub fn init_params<T: Scalar>(&self, vocab: usize) -> Params<T> {
        Params::for_arch(self.arch, self.dim, vocab, self.init_std, self.seed)
    }
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub accuracy_total: f64,
    pub accuracy_low: f64,
    pub accuracy_mid: f64,
    pub accuracy_high: f64,
    pub grad_norm: f64,
    /// Seconds since the start of the run; excluded from the CSV so reruns are byte-identical.
    pub wall_time: f64,
    /// Cumulative FLOPs spent on updates before this epoch's evaluation.
    pub flop_estimate: f64,
}

pub const METRICS_HEADER: [&str; 8] =
    ["epoch", "train_loss", "accuracy_total", "accuracy_low", "accuracy_mid", "accuracy_high", "grad_norm", "flop_estimate"];

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut b = CsvBuilder::new(&METRICS_HEADER);
    for m in rows {
        b.row([
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
    b.finish()
}

pub fn timing_csv(rows: &[EpochMetrics]) -> String {
    let mut b = CsvBuilder::new(&["epoch", "wall_time"]);
    for m in rows {
        b.row([m.epoch.to_string(), fmt_num(m.wall_time)]);
    }
    b.finish()
}

/// Parses [`metrics_csv`] output; wall time is not stored there and reads back as 0.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let (header, rows) = crate::io::parse_csv(text);
    if header != METRICS_HEADER {
        return param_err(format!("unexpected metrics header {header:?}"));
    }
    rows.iter()
        .map(|r| {
            if r.len() != METRICS_HEADER.len() {
                return param_err("metrics row width");
            }
            let f = |i: usize| r[i].parse::<f64>().map_err(|e| LabError::Parameter(format!("metrics field '{}': {e}", r[i])));
            Ok(EpochMetrics {
                epoch: r[0].parse().map_err(|e| LabError::Parameter(format!("epoch '{}': {e}", r[0])))?,
                train_loss: f(1)?,
                accuracy_total: f(2)?,
                accuracy_low: f(3)?,
                accuracy_mid: f(4)?,
                accuracy_high: f(5)?,
                grad_norm: f(6)?,
                wall_time: 0.0,
                flop_estimate: f(7)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy_total: f64,
    pub accuracy_low: f64,
    pub accuracy_mid: f64,
    pub accuracy_high: f64,
    pub mean_loss: f64,
    /// Correct predictions per stratum (low, mid, high).
    pub correct: [usize; 3],
    pub counts: [usize; 3],
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Argmax accuracy per stratum and mean cross-entropy.
pub fn evaluate<T: Scalar>(params: &Params<T>, emap: &EmbeddingMap<T>, arch: Arch, samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return param_err("cannot evaluate on an empty dataset");
    }
    let mut correct = [0usize; 3];
    let mut counts = [0usize; 3];
    let mut loss = 0.0;
    for s in samples {
        let tr = forward(params, emap, s.input(), arch)?;
        let k = s.stratum as usize;
        counts[k] += 1;
        if tr.argmax() == s.target() {
            correct[k] += 1;
        }
        loss += cross_entropy(&tr, s.target())?.to_f64_lossy();
    }
    let n: usize = counts.iter().sum();
    Ok(Evaluation {
        accuracy_total: ratio(correct.iter().sum(), n),
        accuracy_low: ratio(correct[Stratum::Low as usize], counts[0]),
        accuracy_mid: ratio(correct[Stratum::Mid as usize], counts[1]),
        accuracy_high: ratio(correct[Stratum::High as usize], counts[2]),
        mean_loss: loss / n as f64,
        correct,
        counts,
    })
}

/// Sizes entering the FLOP model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopShape {
    pub dim: usize,
    pub seq_len: usize,
    pub vocab: usize,
}

/// FLOPs of one training epoch (forward + backward) over `n_samples`, counting
/// `2mkn` per `(m×k)(k×n)` product in the implemented recursion.
///
/// Per sample and attention step, with `d` the width and `n` the input length:
/// forward `4d³ + 2d²n + 2d²`, plus `2d²n` for the embedding update (Looped/Deep);
/// backward `6d³ + 2d²` for Single and `10d³ + 4d² + 6d²n` for Looped/Deep.
/// The head costs `2Vd` forward and `4Vd` backward, and each weight block adds
/// `6d³` per epoch for `W_Kᵀ W_Q` and the `W_K`, `W_Q` gradients.
///
/// Single-Attn at `d = 8, n = 3, V = 3, N = 500` gives
/// `500·(2608 + 3296) + 3072 = 2 955 072` per epoch.
pub fn flops_per_epoch(arch: Arch, shape: FlopShape, n_samples: usize) -> f64 {
    let d = shape.dim as f64;
    let n = shape.seq_len as f64;
    let v = shape.vocab as f64;
    let steps = arch.steps() as f64;
    let (fwd_step, bwd_step) = if arch.updates_embeddings() {
        (4.0 * d * d * d + 4.0 * d * d * n + 2.0 * d * d, 10.0 * d * d * d + 4.0 * d * d + 6.0 * d * d * n)
    } else {
        (4.0 * d * d * d + 2.0 * d * d * n + 2.0 * d * d, 6.0 * d * d * d + 2.0 * d * d)
    };
    let per_sample = steps * (fwd_step + bwd_step) + 6.0 * v * d;
    let per_epoch_fixed = 6.0 * d * d * d * arch.layer_count() as f64;
    n_samples as f64 * per_sample + per_epoch_fixed
}

pub fn flop_estimate(arch: Arch, shape: FlopShape, n_samples: usize, epochs: usize) -> f64 {
    flops_per_epoch(arch, shape, n_samples) * epochs as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

/// Optimizer state carried across epochs (and across a Single→Looped transfer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptState<T> {
    Gd,
    Adam(AdamState<T>),
}

impl<T: Scalar> OptState<T> {
    pub fn new(opt: Optimizer, n: usize) -> Self {
        match opt {
            Optimizer::Gd => OptState::Gd,
            Optimizer::Adam { .. } => OptState::Adam(AdamState { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }),
        }
    }

    fn apply(&mut self, opt: Optimizer, lr: T, params: &mut Params<T>, grad: &Params<T>) -> Result<()> {
        match (self, opt) {
            (OptState::Gd, Optimizer::Gd) => {
                params.add_scaled(grad, -lr);
                Ok(())
            }
            (OptState::Adam(st), Optimizer::Adam { beta1, beta2, eps }) => {
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                let g = grad.flatten();
                if g.len() != st.m.len() {
                    return Err(LabError::Shape("optimizer state does not match parameters".into()));
                }
                st.t += 1;
                let t = i32::try_from(st.t).unwrap_or(i32::MAX);
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                let mut p = params.flatten();
                for i in 0..p.len() {
                    st.m[i] = b1 * st.m[i] + (T::one() - b1) * g[i];
                    st.v[i] = b2 * st.v[i] + (T::one() - b2) * g[i] * g[i];
                    let mhat = st.m[i] / c1;
                    let vhat = st.v[i] / c2;
                    p[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
                *params = params.unflatten_like(&p)?;
                Ok(())
            }
            _ => param_err("optimizer state does not match optimizer"),
        }
    }
}

/// Loss and gradient norm at the parameters entering an epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Epoch-at-a-time driver. `train` wraps it; the staged trainer drives it directly.
pub struct Trainer<'a, T> {
    pub config: TrainConfig,
    pub arch: Arch,
    pub params: Params<T>,
    pub emap: EmbeddingMap<T>,
    pub opt_state: OptState<T>,
    pub epoch: usize,
    pub flops: f64,
    samples: &'a [Sample],
    shape: FlopShape,
    rng: ChaCha8Rng,
    started: Instant,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(config: TrainConfig, samples: &'a [Sample], vocab: usize, params: Option<Params<T>>) -> Result<Self> {
        config.validate()?;
        if samples.is_empty() {
            return param_err("empty training set");
        }
        let emap = config.embedding(vocab)?;
        let params = params.unwrap_or_else(|| config.init_params(vocab));
        params.check(config.arch)?;
        let opt_state = OptState::new(config.optimizer, params.num_entries());
        let shape = FlopShape { dim: config.dim, seq_len: samples[0].input().len(), vocab };
        Ok(Self {
            arch: config.arch,
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c),
            config,
            params,
            emap,
            opt_state,
            epoch: 0,
            flops: 0.0,
            samples,
            shape,
            started: Instant::now(),
        })
    }

    pub fn samples(&self) -> &'a [Sample] {
        self.samples
    }

    pub fn shape(&self) -> FlopShape {
        self.shape
    }

    /// Switches architecture keeping weights and optimizer state. Shapes must agree.
    pub fn set_arch(&mut self, arch: Arch) -> Result<()> {
        self.params.check(arch)?;
        self.arch = arch;
        Ok(())
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    /// Full-batch loss and gradient at the current parameters.
    pub fn probe(&self) -> Result<(f64, Params<T>)> {
        let (loss, grad) = loss_and_grad(&self.params, &self.emap, self.samples, self.arch)?;
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() || !grad.is_finite() {
            return Err(self.abort(format!("non-finite loss {loss}")));
        }
        Ok((loss, grad))
    }

    fn abort(&self, reason: String) -> LabError {
        let ck = Checkpoint {
            arch: self.arch,
            epoch: self.epoch,
            embedding_seed: self.config.embedding_seed(),
            positional: self.config.positional,
            params: self.params.cast::<f64>(),
        };
        LabError::TrainingAborted { epoch: self.epoch, reason, dump: ck.to_json().unwrap_or_default() }
    }

    /// Applies one epoch of updates. `full_grad` is reused in full-batch mode.
    pub fn update(&mut self, full_grad: &Params<T>) -> Result<()> {
        let lr = T::lit(self.config.learning_rate);
        match self.config.batch {
            BatchMode::Full => self.opt_state.apply(self.config.optimizer, lr, &mut self.params, full_grad)?,
            BatchMode::Mini(size) => {
                let mut order: Vec<usize> = (0..self.samples.len()).collect();
                order.shuffle(&mut self.rng);
                for chunk in order.chunks(size) {
                    let batch: Vec<Sample> = chunk.iter().map(|&i| self.samples[i].clone()).collect();
                    let (_, g) = loss_and_grad(&self.params, &self.emap, &batch, self.arch)?;
                    self.opt_state.apply(self.config.optimizer, lr, &mut self.params, &g)?;
                }
            }
        }
        if !self.params.is_finite() {
            return Err(self.abort("non-finite parameters after update".into()));
        }
        self.flops += flops_per_epoch(self.arch, self.shape, self.samples.len());
        self.epoch += 1;
        Ok(())
    }

    /// Probes, then updates. Returns the pre-update record.
    pub fn run_epoch(&mut self) -> Result<StepRecord> {
        let (loss, grad) = self.probe()?;
        let rec = StepRecord { epoch: self.epoch, loss, grad_norm: grad.global_norm().to_f64_lossy() };
        self.update(&grad)?;
        Ok(rec)
    }

    pub fn metrics_row(&self, loss: f64, grad_norm: f64, eval_set: &[Sample]) -> Result<EpochMetrics> {
        let ev = evaluate(&self.params, &self.emap, self.arch, eval_set)?;
        Ok(EpochMetrics {
            epoch: self.epoch,
            train_loss: loss,
            accuracy_total: ev.accuracy_total,
            accuracy_low: ev.accuracy_low,
            accuracy_mid: ev.accuracy_mid,
            accuracy_high: ev.accuracy_high,
            grad_norm,
            wall_time: self.elapsed(),
            flop_estimate: self.flops,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            arch: self.arch,
            epoch: self.epoch,
            embedding_seed: self.config.embedding_seed(),
            positional: self.config.positional,
            params: self.params.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: Params<T>,
    pub metrics: Vec<EpochMetrics>,
    pub checkpoints: Vec<Checkpoint<T>>,
    pub opt_state: OptState<T>,
}

/// Trains `config.epochs` epochs. Metrics rows are taken at epoch 0 (initial
/// parameters), every `eval_every` epochs and at the final epoch; accuracy is
/// measured on `eval_set` (the training samples when `None`).
pub fn train<T: Scalar>(
    config: &TrainConfig,
    samples: &[Sample],
    vocab: usize,
    init: Option<Params<T>>,
    eval_set: Option<&[Sample]>,
) -> Result<TrainOutcome<T>> {
    let mut tr = Trainer::new(config.clone(), samples, vocab, init)?;
    let eval_set = eval_set.unwrap_or(samples);
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    loop {
        let e = tr.epoch;
        let (loss, grad) = tr.probe()?;
        if e % config.eval_every == 0 || e == config.epochs {
            metrics.push(tr.metrics_row(loss, grad.global_norm().to_f64_lossy(), eval_set)?);
        }
        if let Some(k) = config.hessian_every {
            if e % k == 0 || e == config.epochs {
                checkpoints.push(tr.checkpoint());
            }
        }
        if e == config.epochs {
            break;
        }
        tr.update(&grad)?;
    }
    Ok(TrainOutcome { params: tr.params, metrics, checkpoints, opt_state: tr.opt_state })
}

/// Splits indices `0..n` into (train, validation) with `val_frac` held out, seeded.
pub fn validation_split(n: usize, val_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((val_frac * n as f64).round() as usize).min(n.saturating_sub(1));
    let mut val = idx[..n_val].to_vec();
    let mut tr = idx[n_val..].to_vec();
    val.sort_unstable();
    tr.sort_unstable();
    (tr, val)
}

/// Convenience for callers holding a [`Dataset`].
pub fn train_on<T: Scalar>(config: &TrainConfig, data: &Dataset, init: Option<Params<T>>) -> Result<TrainOutcome<T>> {
    train(config, &data.samples, data.source_model.vocab_size, init, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{build_transition_model, sample_dataset};
    use crate::model::grad_full;

    fn small_data() -> Dataset {
        let m = build_transition_model(0, 3, 3).unwrap();
        sample_dataset(&m, 40, 4, 2.0, 0).unwrap()
    }

    fn cfg(arch: Arch) -> TrainConfig {
        TrainConfig { arch, epochs: 5, dim: 4, init_std: 0.3, ..TrainConfig::default() }
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let data = small_data();
        let c = TrainConfig { learning_rate: 0.0, optimizer: Optimizer::Gd, ..cfg(Arch::Looped(3)) };
        let out = train_on::<f64>(&c, &data, None).unwrap();
        assert_eq!(out.params, c.init_params(3));
        let first = &out.metrics[0];
        for m in &out.metrics {
            assert_eq!(m.train_loss, first.train_loss);
            assert_eq!(m.accuracy_total, first.accuracy_total);
        }
    }

    #[test]
    fn one_gd_epoch_on_one_sample() {
        let data = small_data();
        let one = data.subset(&[0]);
        let c = TrainConfig { epochs: 1, learning_rate: 0.5, optimizer: Optimizer::Gd, ..cfg(Arch::Single) };
        let init: Params<f64> = c.init_params(3);
        let emap = c.embedding::<f64>(3).unwrap();
        let g = grad_full(&init, &emap, &one.samples, Arch::Single).unwrap();
        let out = train_on(&c, &one, Some(init.clone())).unwrap();
        let expect: Vec<f64> = init.flatten().iter().zip(g.flatten()).map(|(p, g)| p - 0.5 * g).collect();
        assert_eq!(out.params.flatten(), expect);
    }

    #[test]
    fn training_is_reproducible_and_counts_add_up() {
        let data = small_data();
        let c = TrainConfig { epochs: 20, learning_rate: 0.05, ..cfg(Arch::Looped(3)) };
        let a = train_on::<f64>(&c, &data, None).unwrap();
        let b = train_on::<f64>(&c, &data, None).unwrap();
        assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
        assert!(a.metrics.last().unwrap().train_loss < a.metrics[0].train_loss);
        let emap = c.embedding::<f64>(3).unwrap();
        let ev = evaluate(&a.params, &emap, c.arch, &data.samples).unwrap();
        let total = (ev.accuracy_total * data.len() as f64).round() as usize;
        assert_eq!(total, ev.correct.iter().sum::<usize>());
        assert_eq!(ev.counts.iter().sum::<usize>(), data.len());
    }

    #[test]
    fn minibatch_mode_runs() {
        let data = small_data();
        let c = TrainConfig { batch: BatchMode::Mini(8), epochs: 3, ..cfg(Arch::Deep(2)) };
        let out = train_on::<f64>(&c, &data, None).unwrap();
        assert_eq!(out.metrics.len(), 4);
    }

    #[test]
    fn divergence_aborts_with_dump() {
        let data = small_data();
        let c = TrainConfig { learning_rate: 1e200, optimizer: Optimizer::Gd, init_std: 10.0, ..cfg(Arch::Looped(3)) };
        match train_on::<f64>(&c, &data, None) {
            Err(LabError::TrainingAborted { dump, .. }) => assert!(dump.contains("layers")),
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn zero_model_accuracy_is_token_zero_frequency() {
        let data = small_data();
        let emap = EmbeddingMap::<f64>::new(3, 4, 0).unwrap();
        let ev = evaluate(&Params::zeros(4, 3, 1), &emap, Arch::Single, &data.samples).unwrap();
        let zeros = data.samples.iter().filter(|s| s.target() == 0).count();
        assert_eq!(ev.accuracy_total, zeros as f64 / data.len() as f64);
    }

    #[test]
    fn flop_model_closed_form_and_scaling() {
        let shape = FlopShape { dim: 8, seq_len: 3, vocab: 3 };
        assert_eq!(flops_per_epoch(Arch::Single, shape, 500), 2_955_072.0);
        assert_eq!(flop_estimate(Arch::Single, shape, 1000, 2), 2.0 * (1000.0 * 5904.0 + 3072.0));
        let s = flops_per_epoch(Arch::Single, shape, 1);
        let l = flops_per_epoch(Arch::Looped(3), shape, 1);
        assert!(l > 3.0 * s);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let data = small_data();
        let out = train_on::<f64>(&cfg(Arch::Single), &data, None).unwrap();
        let text = metrics_csv(&out.metrics);
        let back = parse_metrics_csv(&text).unwrap();
        assert_eq!(metrics_csv(&back), text);
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (tr, val) = validation_split(100, 0.1, 3);
        assert_eq!(val.len(), 10);
        assert_eq!(tr.len(), 90);
        assert!(val.iter().all(|v| !tr.contains(v)));
        assert_eq!(validation_split(100, 0.1, 3), (tr, val));
    }
}
