use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use landscape_core::alignment::{sweep, sweep_csv, Construction, GradientMode, SweepConfig};
use landscape_core::experiments::{
    high_ic_at, hessian_trajectory, keyed_metrics_csv, length_csv, length_generalization, length_test_sets, shift_sweep, sweep_csv as shift_sweep_csv,
    training_pair, DataSpec, PairRun,
};
use landscape_core::hessian::{spectrum_csv, spectrum_metrics_csv, SpectrumSettings};
use landscape_core::io::{fmt_num, CsvBuilder};
use landscape_core::markov::{build_transition_model, make_length_gen_testset, sample_dataset, Dataset, TransitionModel};
use landscape_core::model::{Arch, Block, Checkpoint};
use landscape_core::quad::{
    check_capacity_bound, compare_models, simulate, simulate_general, trajectory_csv, GeneralSpec, InstanceSpec, PairSpec, Schedule,
};
use landscape_core::shift::{run_shift, ScpConfig, ShiftPoint};
use landscape_core::train::{metrics_csv, timing_csv, train, BatchMode, Optimizer, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::report::run_report;
use crate::rundir::{self, RunDir, CONFIG};
use crate::{
    invalid, AlignArgs, Command, GenDataArgs, GeneralArgs, HessianArgs, QuadArgs, ReplayArgs, ReproduceArgs, RunConfig, ShiftArgs,
    TrainArgs, Invalid, FORMAT_VERSION, SEED_ENV,
};

pub fn dispatch(cmd: Command) -> Result<()> {
    let cmd = resolve_seeds(cmd)?;
    match &cmd {
        Command::GenData(a) => gen_data(a, &cmd),
        Command::Train(a) => train_cmd(a, &cmd),
        Command::Hessian(a) => hessian_cmd(a, &cmd),
        Command::SimulateQuad(a) => quad_cmd(a, &cmd),
        Command::SimulateGeneral(a) => general_cmd(a, &cmd),
        Command::Shift(a) => shift_cmd(a, &cmd),
        Command::Align(a) => align_cmd(a, &cmd),
        Command::Report(a) => run_report(a, &cmd),
        Command::Reproduce(a) => reproduce_cmd(a, &cmd),
        Command::Replay(a) => replay_cmd(a),
    }
}

/// Explicit seed, else the environment override, else 0.
fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Invalid(format!("{SEED_ENV}='{v}' is not an unsigned integer")).into()),
        Err(_) => Ok(0),
    }
}

fn resolve_seeds(mut cmd: Command) -> Result<Command> {
    let slot = match &mut cmd {
        Command::GenData(a) => &mut a.seed,
        Command::Train(a) => &mut a.seed,
        Command::SimulateQuad(a) => &mut a.seed,
        Command::SimulateGeneral(a) => &mut a.seed,
        Command::Shift(a) => &mut a.seed,
        Command::Align(a) => &mut a.seed,
        Command::Reproduce(a) => &mut a.seed,
        Command::Hessian(_) | Command::Report(_) | Command::Replay(_) => return Ok(cmd),
    };
    if slot.is_none() {
        *slot = Some(default_seed()?);
    }
    Ok(cmd)
}

pub fn open_run(out: &Path, cmd: &Command) -> Result<RunDir> {
    let mut rd = RunDir::create(out)?;
    rd.write_json(CONFIG, &RunConfig { format_version: FORMAT_VERSION.into(), command: cmd.clone() })?;
    Ok(rd)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DataMeta {
    seed: u64,
    alpha: f64,
    length: usize,
    n: usize,
    test_lengths: Vec<usize>,
}

const MODEL_FILE: &str = "model.json";
const TRAIN_FILE: &str = "train.csv";
const META_FILE: &str = "data.json";

fn test_file(l: usize) -> String {
    format!("test_L{l}.csv")
}

fn gen_data(a: &GenDataArgs, cmd: &Command) -> Result<()> {
    let seed = a.seed.expect("resolved");
    let model = build_transition_model(seed, a.vocab, a.matrices)?;
    let data = sample_dataset(&model, a.n, a.len, a.alpha, seed)?;
    let mut rd = open_run(&a.out, cmd)?;
    rd.write(MODEL_FILE, model.to_json()?)?;
    rd.write(TRAIN_FILE, data.to_csv())?;
    for &l in &a.test_lengths {
        let t = make_length_gen_testset(&model, l, a.n_test, a.alpha, seed.wrapping_add(l as u64))?;
        rd.write(&test_file(l), t.to_csv())?;
    }
    rd.write_json(META_FILE, &DataMeta { seed, alpha: a.alpha, length: a.len, n: a.n, test_lengths: a.test_lengths.clone() })?;
    let c = data.stratum_counts();
    println!("wrote {} samples (low/mid/high {}/{}/{}) to {}", data.len(), c[0], c[1], c[2], a.out.display());
    rd.finish()?;
    Ok(())
}

struct LoadedData {
    model: TransitionModel,
    train: Dataset,
}

fn load_data(dir: &Path) -> Result<LoadedData> {
    rundir::require_dir(dir).map_err(|e| Invalid(format!("data directory: {e}")))?;
    let m = rundir::verify(dir)?;
    let read = |rel: &str| -> Result<String> {
        rundir::read_listed(dir, &m, rel)?.ok_or_else(|| Invalid(format!("{} is missing {rel}", dir.display())).into())
    };
    let model = TransitionModel::from_json(&read(MODEL_FILE)?)?;
    let meta: DataMeta = serde_json::from_str(&read(META_FILE)?)?;
    let train = Dataset::from_csv(&read(TRAIN_FILE)?, &model, meta.alpha)?;
    Ok(LoadedData { model, train })
}

fn parse_arch(s: &str) -> Result<Arch> {
    s.parse::<Arch>().map_err(|e| Invalid(e.to_string()).into())
}

fn parse_optimizer(s: &str) -> Result<Optimizer> {
    match s.to_ascii_lowercase().as_str() {
        "adam" => Ok(Optimizer::adam()),
        "gd" | "sgd" => Ok(Optimizer::Gd),
        other => invalid(format!("unknown optimizer '{other}'")),
    }
}

fn parse_batch(s: &str) -> Result<BatchMode> {
    if s.eq_ignore_ascii_case("full") {
        return Ok(BatchMode::Full);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(BatchMode::Mini(n)),
        _ => invalid(format!("batch must be 'full' or a positive size, got '{s}'")),
    }
}

fn checkpoint_name(epoch: usize) -> String {
    format!("checkpoints/epoch_{epoch:05}.json")
}

fn train_cmd(a: &TrainArgs, cmd: &Command) -> Result<()> {
    let data = load_data(&a.data)?;
    let cfg = TrainConfig {
        arch: parse_arch(&a.arch)?,
        epochs: a.epochs,
        learning_rate: a.lr,
        optimizer: parse_optimizer(&a.optimizer)?,
        batch: parse_batch(&a.batch)?,
        seed: a.seed.expect("resolved"),
        eval_every: a.eval_every,
        hessian_every: (a.checkpoint_every > 0).then_some(a.checkpoint_every),
        dim: a.dim,
        init_std: a.init_std,
        ..TrainConfig::default()
    };
    let out = train::<f64>(&cfg, &data.train.samples, data.model.vocab_size, None, None)?;
    let mut rd = open_run(&a.out, cmd)?;
    rd.write("metrics.csv", metrics_csv(&out.metrics))?;
    rd.write("timing.csv", timing_csv(&out.metrics))?;
    for ck in &out.checkpoints {
        rd.write(&checkpoint_name(ck.epoch), ck.to_json()?)?;
    }
    let final_ck = Checkpoint { arch: cfg.arch, epoch: cfg.epochs, embedding_seed: cfg.embedding_seed(), positional: cfg.positional, params: out.params };
    rd.write("final.json", final_ck.to_json()?)?;
    if let Some(last) = out.metrics.last() {
        println!(
            "{} epoch {}: loss {:.6} accuracy {:.4} (low {:.4} mid {:.4} high {:.4})",
            cfg.arch, last.epoch, last.train_loss, last.accuracy_total, last.accuracy_low, last.accuracy_mid, last.accuracy_high
        );
    }
    rd.finish()?;
    Ok(())
}

fn read_config(run: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(run.join(CONFIG)).with_context(|| format!("reading {}", run.join(CONFIG).display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", run.join(CONFIG).display()))?)
}

fn hessian_cmd(a: &HessianArgs, cmd: &Command) -> Result<()> {
    let block: Block = a.block.parse().map_err(|e: landscape_core::LabError| Invalid(e.to_string()))?;
    if a.every == 0 {
        return invalid("--every must be positive");
    }
    let m = rundir::verify(&a.run)?;
    let Command::Train(targs) = read_config(&a.run)?.command else {
        return invalid(format!("{} is not a training run", a.run.display()));
    };
    let data = load_data(&targs.data)?;
    let mut cks = Vec::new();
    for e in m.files.iter().filter(|e| e.path.starts_with("checkpoints/")) {
        let ck: Checkpoint<f64> = Checkpoint::from_json(&fs::read_to_string(a.run.join(&e.path))?)?;
        if ck.epoch % a.every == 0 {
            cks.push(ck);
        }
    }
    if cks.is_empty() {
        return invalid(format!("no checkpoints at multiples of {} in {}; train with a matching --checkpoint-every", a.every, a.run.display()));
    }
    cks.sort_by_key(|c| c.epoch);
    let settings = SpectrumSettings { bins: a.bins, eps_rel: a.eps_rel, eps_abs: a.eps_abs, delta: a.delta, kappa_v: a.kappa_v };
    let reports = hessian_trajectory(&cks, &data.train.samples, a.layer, block, &settings)?;
    let out = a.out.clone().unwrap_or_else(|| a.run.join(format!("hessian-{block}")));
    let mut rd = open_run(&out, cmd)?;
    rd.write("spectrum.csv", spectrum_csv(&reports))?;
    rd.write("spectrum_metrics.csv", spectrum_metrics_csv(&reports))?;
    if let Some(r) = reports.last() {
        println!("epoch {}: lambda_max {:.4e} entropy {:.4} kappa {:.3} shape {}", r.epoch, r.eigenvalues[0], r.entropy, r.kappa, r.shape);
    }
    rd.finish()?;
    Ok(())
}

enum InstanceSource {
    Random(usize),
    Pair(usize),
    File(PathBuf),
}

fn parse_instances(s: &str) -> Result<InstanceSource> {
    let count = |n: &str| n.parse::<usize>().map_err(|_| Invalid(format!("bad instance count in '{s}'")));
    if let Some(n) = s.strip_prefix("random:") {
        return Ok(InstanceSource::Random(count(n)?));
    }
    if let Some(n) = s.strip_prefix("pair:") {
        return Ok(InstanceSource::Pair(count(n)?));
    }
    Ok(InstanceSource::File(PathBuf::from(s)))
}

fn instance_seed(base: u64, i: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

fn quad_cmd(a: &QuadArgs, cmd: &Command) -> Result<()> {
    let seed = a.seed.expect("resolved");
    let specs: Vec<InstanceSpec> = match parse_instances(&a.instances)? {
        InstanceSource::Pair(n) => return quad_pairs(a, cmd, n, seed),
        InstanceSource::Random(n) => (0..n).map(|i| InstanceSpec::random(instance_seed(seed, i))).collect(),
        InstanceSource::File(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            match serde_json::from_str::<Vec<InstanceSpec>>(&text) {
                Ok(v) => v,
                Err(_) => vec![serde_json::from_str::<InstanceSpec>(&text).map_err(|e| Invalid(format!("{}: {e}", p.display())))?],
            }
        }
    };
    let mut rd = open_run(&a.out, cmd)?;
    rd.write_json("instances.json", &specs)?;
    let mut summary =
        CsvBuilder::new(&["instance", "d_v", "d_r", "capacity", "dominant", "max_closed_form_norm", "max_force_norm", "holds"]);
    let mut violations = 0;
    for (i, spec) in specs.iter().enumerate() {
        let l = spec.build::<f64>()?;
        let check = check_capacity_bound(&l, a.k, a.tau)?;
        let cap = landscape_core::quad::capacity_bound(&l, a.tau)?;
        violations += usize::from(!check.holds);
        summary.row([
            i.to_string(),
            spec.d_v.to_string(),
            spec.d_r.to_string(),
            fmt_num(cap.total),
            fmt_num(cap.dominant),
            fmt_num(check.max_closed_form_norm),
            fmt_num(check.max_force_norm),
            check.holds.to_string(),
        ]);
        let traj = simulate(&l, a.k)?;
        rd.write(&format!("trajectories/instance_{i:04}.csv"), trajectory_csv(&traj, cap.total, a.stride))?;
    }
    rd.write("summary.csv", summary.finish())?;
    println!("{} instances, {violations} bound violations", specs.len());
    rd.finish()?;
    Ok(())
}

fn quad_pairs(a: &QuadArgs, cmd: &Command, n: usize, seed: u64) -> Result<()> {
    let mut rd = open_run(&a.out, cmd)?;
    let mut b = CsvBuilder::new(&[
        "pair",
        "k",
        "dominant_single",
        "dominant_looped",
        "dominant_ratio",
        "force_single",
        "force_looped",
        "loss_single",
        "loss_looped",
        "capacity_reached",
    ]);
    let mut failures = 0;
    for i in 0..n {
        let spec = PairSpec { tau: a.tau, ..PairSpec::reference(instance_seed(seed, i), a.coupling) };
        let (s, l) = spec.build::<f64>()?;
        let r = compare_models(&s, &l, a.k, a.tau)?;
        failures += usize::from(!(r.force_norm_looped > r.force_norm_single && r.loss_looped < r.loss_single));
        b.row([
            i.to_string(),
            r.k.to_string(),
            fmt_num(r.capacity_single.dominant),
            fmt_num(r.capacity_looped.dominant),
            fmt_num(r.dominant_ratio()),
            fmt_num(r.force_norm_single),
            fmt_num(r.force_norm_looped),
            fmt_num(r.loss_single),
            fmt_num(r.loss_looped),
            r.capacity_reached.to_string(),
        ]);
    }
    rd.write("pairs.csv", b.finish())?;
    println!("{n} pairs, {failures} where the smaller-spectrum landscape did not win");
    rd.finish()?;
    Ok(())
}

fn general_cmd(a: &GeneralArgs, cmd: &Command) -> Result<()> {
    let seed = a.seed.expect("resolved");
    let InstanceSource::Random(n) = parse_instances(&a.instances)? else {
        return invalid("simulate-general takes random:N");
    };
    let schedule = match a.schedule.as_str() {
        "constant" => Schedule::Constant(0.5),
        "periodic" => Schedule::Periodic { lo: 0.0, hi: 1.0, period: 37 },
        other => return invalid(format!("unknown schedule '{other}'")),
    };
    let mut rd = open_run(&a.out, cmd)?;
    let mut b = CsvBuilder::new(&["instance", "d_v", "d_r", "capacity_gen", "max_unforced_norm", "max_force_norm", "holds"]);
    let mut violations = 0;
    for i in 0..n {
        let spec = GeneralSpec::random(instance_seed(seed, i), schedule);
        let (fam, tv0, eta) = spec.build::<f64>()?;
        let out = simulate_general(&fam, &tv0, &vec![0.0; spec.d_r], eta, a.k)?;
        violations += usize::from(!out.bound_holds);
        b.row([
            i.to_string(),
            spec.d_v.to_string(),
            spec.d_r.to_string(),
            fmt_num(out.capacity_gen),
            fmt_num(out.max_unforced_norm),
            fmt_num(out.max_force_norm),
            out.bound_holds.to_string(),
        ]);
        rd.write(&format!("trajectories/instance_{i:04}.csv"), trajectory_csv(&out.trajectory, out.capacity_gen, a.stride))?;
    }
    rd.write("summary.csv", b.finish())?;
    println!("{n} instances, {violations} bound violations");
    rd.finish()?;
    Ok(())
}

fn shift_cmd(a: &ShiftArgs, cmd: &Command) -> Result<()> {
    let data = load_data(&a.data)?;
    let cfg = TrainConfig { epochs: a.epochs, learning_rate: a.lr, dim: a.dim, seed: a.seed.expect("resolved"), ..TrainConfig::default() };
    let point = match a.shift_at {
        Some(e) => ShiftPoint::Fixed(e),
        None => ShiftPoint::Scp(ScpConfig {
            delta1: a.delta1,
            plateau_window: a.plateau_window,
            patience: a.patience,
            delta2: a.delta2,
            stability_window: a.stability_window,
            e_shift_min: a.shift_min,
            e_shift_max: a.shift_max,
        }),
    };
    let mut rep = run_shift::<f64>(&cfg, a.t, point, &data.train)?;
    rep.baseline_ref = Some("metrics_baseline.csv".into());
    let mut rd = open_run(&a.out, cmd)?;
    rd.write("metrics_stage1.csv", metrics_csv(&rep.staged.stage1_metrics))?;
    rd.write("metrics_stage2.csv", metrics_csv(&rep.staged.stage2_metrics))?;
    rd.write("metrics_combined.csv", metrics_csv(&rep.staged.combined_metrics()))?;
    rd.write("metrics_baseline.csv", metrics_csv(&rep.baseline_metrics))?;
    let mut scp = CsvBuilder::new(&["epoch", "val_loss", "grad_norm"]);
    for (e, (v, g)) in rep.staged.val_loss.iter().zip(&rep.staged.grad_norm).enumerate() {
        scp.row([e.to_string(), fmt_num(*v), fmt_num(*g)]);
    }
    rd.write("scp.csv", scp.finish())?;
    rd.write_json("report.json", &rep)?;
    println!(
        "shift at {} (plateau {:?}{}); accuracy {:.4} vs baseline {:.4}; FLOP speedup {:.3}",
        rep.staged.e_shift,
        rep.staged.e_plateau,
        if rep.staged.fallback { ", fallback" } else { "" },
        rep.final_accuracy.total,
        rep.baseline_final_accuracy.total,
        rep.speedup.flops_ratio
    );
    rd.finish()?;
    Ok(())
}

fn align_cmd(a: &AlignArgs, cmd: &Command) -> Result<()> {
    let mut cfg = SweepConfig::new(a.draws, a.d, a.t, a.eps_scale, a.seed.expect("resolved"));
    cfg.diag_scale = (a.diag_lo, a.diag_hi);
    cfg.batch = a.batch;
    if a.adversarial {
        cfg.construction = Construction::Gaussian;
    }
    if a.full_gradient {
        cfg.mode = GradientMode::Full;
    }
    let s = sweep::<f64>(&cfg)?;
    let mut rd = open_run(&a.out, cmd)?;
    rd.write("alignment.csv", sweep_csv(&s))?;
    #[derive(Serialize)]
    struct Summary {
        draws: usize,
        violations: usize,
        violation_rate: f64,
        min_inner: f64,
        config: SweepConfig,
    }
    let rate = s.violations as f64 / s.draws.max(1) as f64;
    rd.write_json("summary.json", &Summary { draws: s.draws, violations: s.violations, violation_rate: rate, min_inner: s.min_inner, config: cfg })?;
    println!("{} draws, {} violations, min inner product {:.3e}", s.draws, s.violations, s.min_inner);
    rd.finish()?;
    Ok(())
}

fn base_config(epochs: usize, seed: u64, every: Option<usize>) -> TrainConfig {
    TrainConfig { epochs, seed, hessian_every: every, ..TrainConfig::default() }
}

fn pair_for(seed: u64, a: &ReproduceArgs, every: Option<usize>) -> Result<(TransitionModel, Dataset, PairRun)> {
    let (model, data) = DataSpec::with_seed(seed).build()?;
    let pair = training_pair(&base_config(a.epochs, seed, every), &data, a.t)?;
    Ok((model, data, pair))
}

fn reproduce_cmd(a: &ReproduceArgs, cmd: &Command) -> Result<()> {
    let first = a.seed.expect("resolved");
    if a.seeds == 0 {
        return invalid("--seeds must be positive");
    }
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| first + k).collect();
    match a.recipe.as_str() {
        "accuracy" => {
            let mut rd = open_run(&a.out, cmd)?;
            let mut all = Vec::new();
            for &s in &seeds {
                let (_, _, pair) = pair_for(s, a, None)?;
                println!(
                    "seed {s}: high-IC single {:.4} -> {:.4}, looped {:.4} -> {:.4} (epoch 150 -> final)",
                    high_ic_at(&pair.single.metrics, 150).unwrap_or(f64::NAN),
                    pair.single.metrics.last().map_or(f64::NAN, |m| m.accuracy_high),
                    high_ic_at(&pair.looped.metrics, 150).unwrap_or(f64::NAN),
                    pair.looped.metrics.last().map_or(f64::NAN, |m| m.accuracy_high)
                );
                all.push(pair);
            }
            let runs: Vec<_> = all
                .iter()
                .flat_map(|p| {
                    [
                        (Arch::Single.to_string(), p.seed, p.single.metrics.as_slice()),
                        (Arch::Looped(p.loops).to_string(), p.seed, p.looped.metrics.as_slice()),
                    ]
                })
                .collect();
            rd.write("metrics_keyed.csv", keyed_metrics_csv(&runs))?;
            rd.finish()?;
        }
        "spectra" => {
            if a.every == 0 {
                return invalid("--every must be positive");
            }
            let mut rd = open_run(&a.out, cmd)?;
            for &s in &seeds {
                let (_, data, pair) = pair_for(s, a, Some(a.every))?;
                for (name, out) in [("single", &pair.single), ("looped", &pair.looped)] {
                    let reps = hessian_trajectory(&out.checkpoints, &data.samples, 0, Block::Wv, &SpectrumSettings::default())?;
                    rd.write(&format!("seed{s}/spectrum_{name}.csv"), spectrum_csv(&reps))?;
                    rd.write(&format!("seed{s}/spectrum_metrics_{name}.csv"), spectrum_metrics_csv(&reps))?;
                    if let Some(r) = reps.last() {
                        println!("seed {s} {name}: final lambda_max {:.4e} kappa {:.3} shape {}", r.eigenvalues[0], r.kappa, r.shape);
                    }
                }
            }
            rd.finish()?;
        }
        "speedup" => {
            let mut rd = open_run(&a.out, cmd)?;
            for &s in &seeds {
                let (_, data) = DataSpec::with_seed(s).build()?;
                let cfg = base_config(a.epochs, s, None);
                let (_, pts) = shift_sweep(&cfg, a.t, &data, &a.points)?;
                rd.write(&format!("seed{s}/speedup.csv"), shift_sweep_csv(&pts))?;
                let rep = run_shift::<f64>(&cfg, a.t, ShiftPoint::Scp(ScpConfig::default()), &data)?;
                rd.write(&format!("seed{s}/metrics_combined.csv"), metrics_csv(&rep.staged.combined_metrics()))?;
                rd.write(&format!("seed{s}/metrics_baseline.csv"), metrics_csv(&rep.baseline_metrics))?;
                rd.write_json(&format!("seed{s}/report.json"), &rep)?;
                println!(
                    "seed {s}: shift at {}, accuracy delta {:+.4}, FLOP speedup {:.3}",
                    rep.staged.e_shift, rep.speedup.accuracy_delta, rep.speedup.flops_ratio
                );
            }
            rd.finish()?;
        }
        "length" => {
            let mut rd = open_run(&a.out, cmd)?;
            let mut rows = Vec::new();
            for &s in &seeds {
                let (model, data, pair) = pair_for(s, a, None)?;
                let tests = length_test_sets(&model, &a.lengths, a.n_test, data.sampling_power, s)?;
                let emap = base_config(a.epochs, s, None).embedding::<f64>(model.vocab_size)?;
                rows.extend(length_generalization(Arch::Single, s, &pair.single.params, &emap, &data, &tests)?);
                rows.extend(length_generalization(Arch::Looped(a.t), s, &pair.looped.params, &emap, &data, &tests)?);
            }
            for r in &rows {
                println!("{} seed {} L={}: accuracy {:.4}, simple {:.4} ({:.3} simple)", r.arch, r.seed, r.length, r.accuracy_total, r.accuracy_simple, r.simple_fraction);
            }
            rd.write("length.csv", length_csv(&rows))?;
            rd.finish()?;
        }
        other => return invalid(format!("unknown recipe '{other}'; expected accuracy, spectra, speedup or length")),
    }
    Ok(())
}

fn replay_cmd(a: &ReplayArgs) -> Result<()> {
    let original = rundir::verify(&a.run)?;
    let cfg = read_config(&a.run)?;
    if cfg.format_version != FORMAT_VERSION {
        return invalid(format!("config format '{}' is not '{FORMAT_VERSION}'", cfg.format_version));
    }
    let mut cmd = cfg.command;
    match &mut cmd {
        Command::GenData(x) => x.out = a.into.clone(),
        Command::Train(x) => x.out = a.into.clone(),
        Command::Hessian(x) => x.out = Some(a.into.clone()),
        Command::SimulateQuad(x) => x.out = a.into.clone(),
        Command::SimulateGeneral(x) => x.out = a.into.clone(),
        Command::Shift(x) => x.out = a.into.clone(),
        Command::Align(x) => x.out = a.into.clone(),
        Command::Report(x) => x.out = a.into.clone(),
        Command::Reproduce(x) => x.out = a.into.clone(),
        Command::Replay(_) => return invalid("cannot replay a replay"),
    }
    dispatch(cmd)?;
    let fresh = rundir::verify(&a.into)?;
    let csv = |m: &rundir::Manifest| -> Vec<(String, String)> {
        m.files
            .iter()
            .filter(|e| e.path.ends_with(".csv") && !e.path.ends_with("timing.csv"))
            .map(|e| (e.path.clone(), e.sha256.clone()))
            .collect()
    };
    let (x, y) = (csv(&original), csv(&fresh));
    if x != y {
        let diff: Vec<&str> = x.iter().filter(|e| !y.contains(e)).map(|e| e.0.as_str()).collect();
        return Err(rundir::IntegrityError(format!("replay differs in {diff:?}")).into());
    }
    println!("{} CSV files reproduced byte-for-byte", x.len());
    Ok(())
}
