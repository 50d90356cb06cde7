//! One PASS/FAIL line per acceptance criterion. Criteria run concurrently;
//! the test fails if any criterion fails.

use std::thread;
use std::time::Instant;

use landscape_core::alignment::{sweep, Construction, SweepConfig};
use landscape_core::experiments::{hessian_trajectory, high_ic_at, length_generalization, length_test_sets, training_pair, DataSpec, PairRun};
use landscape_core::hessian::{eigenspectrum, fd_hessian, hessian_block, SpectrumReport, SpectrumSettings};
use landscape_core::linalg::Matrix;
use landscape_core::markov::{build_transition_model, enumerate_sequences, sample_dataset, sequence_probability, stratify, Dataset};
use landscape_core::model::{batch_loss, forward, grad_full, Arch, Block, EmbeddingMap, Params};
use landscape_core::paths::{grad_direct_path, preconditioner, DirectBlock};
use landscape_core::quad::{
    check_capacity_bound, compare_models, inverse_sum_split, simulate, simulate_general, unforced_closed_form, unforced_iterated,
    GeneralSpec, InstanceSpec, PairSpec, QuadLandscape, Schedule,
};
use landscape_core::shift::{run_shift, shift_split, ScpConfig, ShiftPoint};
use landscape_core::train::{train, EpochMetrics, TrainConfig};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SEEDS: [u64; 3] = [0, 1, 2];

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn random_batch(rng: &mut ChaCha8Rng, vocab: usize, len: usize, n: usize) -> Vec<(Vec<usize>, usize)> {
    (0..n).map(|_| ((0..len).map(|_| rng.random_range(0..vocab)).collect(), rng.random_range(0..vocab))).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for arch in [Arch::Single, Arch::Looped(3), Arch::Deep(3)] {
        for d in [2, 4, 8] {
            for inst in 0..20u64 {
                let seed = 1000 * d as u64 + inst;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let vocab = 3;
                let p = Params::<f64>::gaussian(d, vocab, arch.layer_count(), 0.4, seed);
                let emap = EmbeddingMap::new(vocab, d, seed + 7).map_err(e)?;
                let batch = random_batch(&mut rng, vocab, 4, 3);
                let g = grad_full(&p, &emap, &batch, arch).map_err(e)?.flatten();
                let theta = p.flatten();
                let h = 1e-5;
                let mut fd = vec![0.0; theta.len()];
                for i in 0..theta.len() {
                    let mut tp = theta.clone();
                    tp[i] += h;
                    let mut tm = theta.clone();
                    tm[i] -= h;
                    let lp = batch_loss(&p.unflatten_like(&tp).map_err(e)?, &emap, &batch, arch).map_err(e)?;
                    let lm = batch_loss(&p.unflatten_like(&tm).map_err(e)?, &emap, &batch, arch).map_err(e)?;
                    fd[i] = (lp - lm) / (2.0 * h);
                }
                // Entrywise error relative to the gradient's largest entry.
                let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
                let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
                worst = worst.max(err);
                check(err <= 1e-6, format!("{arch} d={d} instance {inst}: relative error {err:.3e}"))?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("runtime {secs:.1}s"))?;
    Ok(format!("180 instances, max relative error {worst:.2e}, {secs:.1}s"))
}

/// `Σ_t (A_tᵀ ⊗ b_t) u` and `Σ_t (z_t ⊗ Ã_tᵀ) u`, reshaped column-major, batch-averaged.
fn kronecker_oracle(p: &Params<f64>, emap: &EmbeddingMap<f64>, batch: &[(Vec<usize>, usize)], loops: usize) -> (Matrix<f64>, Matrix<f64>) {
    let d = p.dim();
    let b = &p.layers[0];
    let mut gk = vec![0.0; d * d];
    let mut gq = vec![0.0; d * d];
    let arch = if loops == 1 { Arch::Single } else { Arch::Looped(loops) };
    for (toks, y) in batch {
        let tr = forward(p, emap, toks, arch).unwrap();
        let mut r = tr.probabilities.clone();
        r[*y] -= 1.0;
        let u = Matrix::from_columns(&[p.w_h.t_matvec(&r)]).unwrap();
        for t in 0..loops {
            let e_t = &tr.embeddings[t];
            let z_t = Matrix::from_columns(&[tr.states[t].clone()]).unwrap();
            let a = b.w_v.matmul(&e_t.matmul_t(e_t));
            let bt = b.w_q.matmul(&z_t);
            let at = a.matmul_t(&b.w_k);
            let vk = a.transpose().kron(&bt).matmul(&u);
            let vq = z_t.kron(&at.transpose()).matmul(&u);
            for i in 0..d * d {
                gk[i] += vk[(i, 0)] / batch.len() as f64;
                gq[i] += vq[(i, 0)] / batch.len() as f64;
            }
        }
    }
    (Matrix::unvec(d, d, &gk).unwrap(), Matrix::unvec(d, d, &gq).unwrap())
}

fn criterion_2() -> Outcome {
    let mut worst_kron = 0.0f64;
    let mut worst_single = 0.0f64;
    let mut worst_pre = 0.0f64;
    for seed in 0..20u64 {
        let d = 3 + (seed as usize % 4);
        let vocab = d + 2;
        let p = Params::<f64>::gaussian(d, vocab, 1, 0.5 / (d as f64).sqrt(), seed);
        let emap = EmbeddingMap::new(vocab, d, seed + 1).map_err(e)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, vocab, 4, 4);
        for loops in [1, 2, 3] {
            let arch = if loops == 1 { Arch::Single } else { Arch::Looped(loops) };
            let (ok, oq) = kronecker_oracle(&p, &emap, &batch, loops);
            let wk = grad_direct_path(&p, &emap, &batch, arch, DirectBlock::Wk).map_err(e)?;
            let wq = grad_direct_path(&p, &emap, &batch, arch, DirectBlock::Wq).map_err(e)?;
            let scale = ok.max_abs().max(oq.max_abs()).max(1e-300);
            let err = (&wk - &ok).max_abs().max((&wq - &oq).max_abs()) / scale;
            worst_kron = worst_kron.max(err);
            check(err <= 1e-10, format!("seed {seed} T={loops}: Kronecker mismatch {err:.3e}"))?;
        }
        let full = grad_full(&p, &emap, &batch, Arch::Single).map_err(e)?;
        let wk = grad_direct_path(&p, &emap, &batch, Arch::Single, DirectBlock::Wk).map_err(e)?;
        let wq = grad_direct_path(&p, &emap, &batch, Arch::Single, DirectBlock::Wq).map_err(e)?;
        let err = (&wk - &full.layers[0].w_k).max_abs().max((&wq - &full.layers[0].w_q).max_abs());
        worst_single = worst_single.max(err);
        check(err <= 1e-10, format!("seed {seed}: Single direct path differs from full gradient by {err:.3e}"))?;

        // Full-rank instance: distinct tokens spanning the embedding space.
        let toks: Vec<usize> = (0..d + 1).collect();
        let fr = vec![(toks, 1usize)];
        let rep = preconditioner(&p, &emap, &fr, 3).map_err(e)?;
        check(rep.all_rank_ok(), format!("seed {seed}: constructed instance is not full rank"))?;
        // Residual relative to the Looped direct-path gradient it reconstructs.
        let norm_of = |blk| grad_direct_path(&p, &emap, &fr, Arch::Looped(3), blk).map(|g| g.frobenius_norm()).map_err(e);
        let (nk, nq) = (norm_of(DirectBlock::Wk)?, norm_of(DirectBlock::Wq)?);
        check(nk > 0.0 && nq > 0.0, format!("seed {seed}: vanishing Looped gradient"))?;
        let rel = (rep.samples[0].residual_wk / nk).max(rep.samples[0].residual_wq / nq);
        worst_pre = worst_pre.max(rel);
        check(rel <= 1e-8, format!("seed {seed}: relative preconditioner residual {rel:.3e}"))?;
    }
    Ok(format!("Kronecker {worst_kron:.1e}, Single vs full {worst_single:.1e}, preconditioner residual {worst_pre:.1e}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let k_max = 10_000;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let spec = InstanceSpec::random(i);
        check(spec.d_v <= 16, "d_V above 16")?;
        let l = spec.build::<f64>().map_err(e)?;
        let b = check_capacity_bound(&l, k_max, 0.5).map_err(e)?;
        violations += usize::from(!b.holds);
        for k in [1, 10, 100, 1000, k_max] {
            let cf = unforced_closed_form(&l, k).map_err(e)?;
            let it = unforced_iterated(&l, k);
            let diff = cf.iter().zip(&it).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let n = it.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            worst = worst.max(diff / n);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(violations == 0, format!("{violations} bound violations"))?;
    check(worst <= 1e-10, format!("closed form vs iterated relative error {worst:.3e}"))?;
    check(secs < 120.0, format!("runtime {secs:.1}s"))?;
    Ok(format!("100 instances, 0 violations, closed-form error {worst:.1e}, {secs:.1}s"))
}

fn criterion_4() -> Outcome {
    let r = |n: i64, d: i64| Ratio::new(n, d);
    let (dom1, _) = inverse_sum_split(&[r(1, 5), r(3, 10), r(1, 1), r(6, 5), r(3, 2), r(2, 1)], &r(1, 2));
    let (dom2, _) = inverse_sum_split(&[r(1, 20), r(1, 10), r(3, 20), r(1, 5), r(1, 1), r(3, 2)], &r(1, 2));
    check(dom1 == r(25, 3) && dom2 == r(125, 3), format!("dominant sums {dom1} and {dom2}"))?;
    let exact = dom2 / dom1;
    check(exact == r(5, 1), format!("exact ratio {exact}"))?;
    let mut failures = Vec::new();
    for coupling in [1e-3, 0.1] {
        for seed in 0..50u64 {
            let (s, l) = PairSpec::reference(seed, coupling).build::<f64>().map_err(e)?;
            let rep = compare_models(&s, &l, 20_000, 0.5).map_err(e)?;
            let ratio_ok = (rep.dominant_ratio() - 5.0).abs() <= 1e-9;
            if !(ratio_ok && rep.capacity_reached && rep.force_norm_looped > rep.force_norm_single && rep.loss_looped < rep.loss_single) {
                failures.push(format!("coupling {coupling} seed {seed}: {rep:?}"));
            }
        }
    }
    check(failures.is_empty(), format!("{} failures, first: {}", failures.len(), failures.first().map_or("", |s| s.as_str())))?;
    Ok("dominant ratio exactly 5 (25/3 vs 125/3); 100 pairs, looped force larger and loss lower".into())
}

fn criterion_5() -> Outcome {
    let mut violations = 0;
    for i in 0..50u64 {
        let sched = if i % 2 == 0 { Schedule::Periodic { lo: 0.0, hi: 1.0, period: 37 } } else { Schedule::Constant(0.7) };
        let spec = GeneralSpec::random(i, sched);
        let (fam, tv0, eta) = spec.build::<f64>().map_err(e)?;
        let out = simulate_general(&fam, &tv0, &vec![0.0; spec.d_r], eta, 5000).map_err(e)?;
        violations += usize::from(!out.bound_holds);
    }
    check(violations == 0, format!("{violations} violations of the general bound"))?;
    let mut worst = 0.0f64;
    for i in 0..10u64 {
        let spec = GeneralSpec { s: Schedule::Constant(0.0), c: Schedule::Constant(1.0), ..GeneralSpec::random(500 + i, Schedule::Constant(0.0)) };
        let (fam, tv0, eta) = spec.build::<f64>().map_err(e)?;
        let l = QuadLandscape {
            h_valley: fam.h_b.clone(),
            h_rv: fam.h_rv.clone(),
            h_r: fam.h_r.clone(),
            theta_v0: tv0.clone(),
            theta_r0: vec![0.0; fam.h_r.len()],
            eta,
        };
        let q = simulate(&l, 1000).map_err(e)?;
        let g = simulate_general(&fam, &tv0, &l.theta_r0, eta, 1000).map_err(e)?;
        for k in 0..=1000 {
            for (a, b) in q.theta_v[k].iter().zip(&g.trajectory.theta_v[k]).chain(q.force[k].iter().zip(&g.trajectory.force[k])) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("constant family deviates from the quadratic simulator by {worst:.3e}"))?;
    Ok(format!("50 instances, 0 violations; constant family matches to {worst:.1e}"))
}

fn criterion_6() -> Outcome {
    let cfg = SweepConfig::new(1000, 6, 3, 1e-3, 0);
    let s = sweep::<f64>(&cfg).map_err(e)?;
    let min = s.results.iter().map(|r| r.alignment.min()).fold(f64::INFINITY, f64::min);
    check(s.results.len() == 1000, "draw count")?;
    check(min >= -1e-8, format!("minimum inner product {min:.3e}"))?;
    let adv = SweepConfig { construction: Construction::Gaussian, ..cfg };
    let a = sweep::<f64>(&adv).map_err(e)?;
    let rate = a.violations as f64 / a.draws as f64;
    check(rate > 0.0, "adversarial sweep found no violation")?;
    Ok(format!("1000 draws, min inner product {min:.3e}; adversarial violation rate {rate:.3}"))
}

fn criterion_7(trajectories: &[Vec<SpectrumReport>]) -> Outcome {
    let mut pairs = 0;
    for traj in trajectories {
        for r in traj.iter().skip(1) {
            let mi = r.mi_with_prev.ok_or("missing MI")?;
            let (hp, hc) = r.pair_entropies.ok_or("missing pair entropies")?;
            check(mi <= hp.min(hc) + 1e-9, format!("epoch {}: MI {mi} above entropies {hp}, {hc}", r.epoch))?;
            pairs += 1;
        }
    }
    check(pairs > 0, "no consecutive pairs")?;

    let mut worst_trace = 0.0f64;
    for seed in 0..5u64 {
        let p = Params::<f64>::gaussian(4, 3, 1, 0.5, seed);
        let emap = EmbeddingMap::new(3, 4, seed).map_err(e)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, 3, 4, 8);
        for blk in [Block::Wk, Block::Wq, Block::Wv, Block::Wh] {
            let h = hessian_block(&p, &emap, &batch, Arch::Looped(3), 0, blk, 1e-4).map_err(e)?;
            let ev = eigenspectrum(&h).map_err(e)?;
            let diff = (ev.iter().sum::<f64>() - h.trace()).abs();
            worst_trace = worst_trace.max(diff);
        }
    }
    check(worst_trace <= 1e-9, format!("sum of eigenvalues differs from trace by {worst_trace:.3e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 12;
    let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let a = b.matmul_t(&b).symmetrized();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let got = fd_hessian(&theta, 1e-3, |x: &[f64]| Ok(a.matvec(x).iter().zip(&c).map(|(u, v)| u + v).collect())).map_err(e)?;
    let err = (&got - &a).max_abs();
    check(err <= 1e-4, format!("injected quadratic recovered to {err:.3e}"))?;
    Ok(format!("{pairs} MI pairs within bound; trace error {worst_trace:.1e}; injected quadratic error {err:.1e}"))
}

struct SeedRun {
    seed: u64,
    model: landscape_core::markov::TransitionModel,
    data: Dataset,
    pair: PairRun,
    spectra_single: Vec<SpectrumReport>,
    spectra_looped: Vec<SpectrumReport>,
}

fn base_config(seed: u64) -> TrainConfig {
    TrainConfig { seed, hessian_every: Some(50), ..TrainConfig::default() }
}

fn toy_runs() -> Result<(Vec<SeedRun>, f64), String> {
    let start = Instant::now();
    let runs = thread::scope(|s| {
        let handles: Vec<_> = SEEDS
            .iter()
            .map(|&seed| {
                s.spawn(move || -> Result<SeedRun, String> {
                    let (model, data) = DataSpec::with_seed(seed).build().map_err(e)?;
                    let pair = training_pair(&base_config(seed), &data, 3).map_err(e)?;
                    let st = SpectrumSettings::default();
                    let spectra_single = hessian_trajectory(&pair.single.checkpoints, &data.samples, 0, Block::Wv, &st).map_err(e)?;
                    let spectra_looped = hessian_trajectory(&pair.looped.checkpoints, &data.samples, 0, Block::Wv, &st).map_err(e)?;
                    Ok(SeedRun { seed, model, data, pair, spectra_single, spectra_looped })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    Ok((runs, start.elapsed().as_secs_f64()))
}

fn criterion_8(runs: &[SeedRun], secs: f64) -> Outcome {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for r in runs {
        let m_s = &r.pair.single.metrics;
        let m_l = &r.pair.looped.metrics;
        let (s150, l150) = (high_ic_at(m_s, 150).ok_or("no epoch 150")?, high_ic_at(m_l, 150).ok_or("no epoch 150")?);
        let (sf, lf) = (m_s.last().ok_or("no metrics")?.accuracy_high, m_l.last().ok_or("no metrics")?.accuracy_high);
        let ks = r.spectra_single.last().ok_or("no spectra")?.kappa;
        let kl = r.spectra_looped.last().ok_or("no spectra")?.kappa;
        notes.push(format!(
            "seed {}: single high-IC {s150:.3}->{sf:.3}, looped {l150:.3}->{lf:.3}, kappa {ks:.2} vs {kl:.2}",
            r.seed
        ));
        if (sf - s150).abs() > 0.02 {
            failures.push(format!("seed {} (a) single moved {:+.3}", r.seed, sf - s150));
        }
        if lf - l150 < 0.05 {
            failures.push(format!("seed {} (a) looped improved {:+.3}", r.seed, lf - l150));
        }
        if lf - sf < 0.05 {
            failures.push(format!("seed {} (b) looped minus single {:+.3}", r.seed, lf - sf));
        }
        if !(kl > ks) {
            failures.push(format!("seed {} (c) kappa {kl:.2} vs {ks:.2}", r.seed));
        }
    }
    if secs >= 900.0 {
        failures.push(format!("runtime {secs:.0}s"));
    }
    let detail = notes.join("; ");
    if failures.is_empty() {
        Ok(format!("{detail}; {secs:.0}s"))
    } else {
        Err(format!("{}; {detail}", failures.join(", ")))
    }
}

fn criterion_9(runs: &[SeedRun]) -> Outcome {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for r in runs {
        let tests = length_test_sets(&r.model, &[8, 11], 5000, r.data.sampling_power, r.seed).map_err(e)?;
        let emap = base_config(r.seed).embedding::<f64>(r.model.vocab_size).map_err(e)?;
        let s = length_generalization(Arch::Single, r.seed, &r.pair.single.params, &emap, &r.data, &tests).map_err(e)?;
        let l = length_generalization(Arch::Looped(3), r.seed, &r.pair.looped.params, &emap, &r.data, &tests).map_err(e)?;
        for (rs, rl) in s.iter().zip(&l).skip(1) {
            notes.push(format!("seed {} L={}: {:.3} vs {:.3}", r.seed, rs.length, rs.accuracy_total, rl.accuracy_total));
            if rl.accuracy_total - rs.accuracy_total < 0.05 {
                failures.push(format!("seed {} L={} gap {:+.3}", r.seed, rs.length, rl.accuracy_total - rs.accuracy_total));
            }
        }
    }
    let detail = notes.join("; ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join(", ")))
    }
}

fn criterion_10() -> Outcome {
    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = SEEDS
            .iter()
            .map(|&seed| {
                s.spawn(move || -> Result<_, String> {
                    let (_, data) = DataSpec::with_seed(seed).build().map_err(e)?;
                    let cfg = TrainConfig { seed, ..TrainConfig::default() };
                    run_shift::<f64>(&cfg, 3, ShiftPoint::Scp(ScpConfig::default()), &data).map_err(e)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("shift thread panicked")).collect()
    });
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for (seed, rep) in SEEDS.iter().zip(results) {
        let rep = rep?;
        let es = rep.staged.e_shift;
        let delta = rep.final_accuracy.total - rep.baseline_final_accuracy.total;
        notes.push(format!("seed {seed}: shift {es}, accuracy delta {delta:+.3}, FLOP speedup {:.3}", rep.speedup.flops_ratio));
        if !(100..=150).contains(&es) {
            failures.push(format!("seed {seed} shift {es}"));
        }
        if delta.abs() > 0.02 {
            failures.push(format!("seed {seed} accuracy delta {delta:+.3}"));
        }
        if rep.speedup.flops_ratio < 1.1 {
            failures.push(format!("seed {seed} speedup {:.3}", rep.speedup.flops_ratio));
        }
    }

    let (_, data) = DataSpec::with_seed(0).build().map_err(e)?;
    let cfg = TrainConfig { seed: 0, ..TrainConfig::default() };
    let zero = run_shift::<f64>(&cfg, 3, ShiftPoint::Fixed(0), &data).map_err(e)?;
    let (train_set, _) = shift_split(&data, 0);
    let pure = train::<f64>(&TrainConfig { arch: Arch::Looped(3), ..cfg }, &train_set, 3, None, None).map_err(e)?;
    let strip = |rows: &[EpochMetrics]| rows.iter().map(|m| EpochMetrics { wall_time: 0.0, ..m.clone() }).collect::<Vec<_>>();
    if strip(&zero.staged.combined_metrics()) != strip(&pure.metrics) {
        failures.push("shift-at-0 run differs from pure Looped".into());
    }
    let detail = notes.join("; ");
    if failures.is_empty() {
        Ok(format!("{detail}; shift-at-0 identical to pure Looped"))
    } else {
        Err(format!("{}; {detail}", failures.join(", ")))
    }
}

fn criterion_11() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let m = build_transition_model(seed, 3, 3).map_err(e)?;
        let seqs = enumerate_sequences(3, 4).map_err(e)?;
        check(seqs.len() == 81, format!("{} sequences", seqs.len()))?;
        let total: f64 = seqs.iter().map(|s| sequence_probability(&m, s)).sum::<landscape_core::Result<f64>>().map_err(e)?;
        // Independent product over positions with the cyclic matrix schedule.
        let mut oracle = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        oracle += m.initial[a] * m.transitions[0][a][b] * m.transitions[1][b][c] * m.transitions[2][c][d];
                    }
                }
            }
        }
        worst = worst.max((total - 1.0).abs()).max((oracle - 1.0).abs());
        let ds = sample_dataset(&m, 500, 4, 2.0, seed).map_err(e)?;
        check(ds.stratum_counts() == [200, 100, 200], format!("seed {seed}: strata {:?}", ds.stratum_counts()))?;
        let again = stratify(ds.clone(), 0.4, 0.4).map_err(e)?;
        check(again.stratum_counts() == [200, 100, 200], "re-stratification changed counts")?;
    }
    check(worst <= 1e-9, format!("probability mass off by {worst:.3e}"))?;
    Ok(format!("81 sequences sum to 1 within {worst:.1e}; strata 200/100/200"))
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let mut results: Vec<(usize, Outcome)> = thread::scope(|s| {
        let independent: Vec<(usize, fn() -> Outcome)> = vec![
            (1, criterion_1),
            (2, criterion_2),
            (3, criterion_3),
            (4, criterion_4),
            (5, criterion_5),
            (6, criterion_6),
            (10, criterion_10),
            (11, criterion_11),
        ];
        let handles: Vec<_> = independent.into_iter().map(|(i, f)| (i, s.spawn(f))).collect();
        let toy = toy_runs();
        let mut out = Vec::new();
        match toy {
            Ok((runs, secs)) => {
                let mut trajectories: Vec<Vec<SpectrumReport>> = Vec::new();
                for r in &runs {
                    trajectories.push(r.spectra_single.clone());
                    trajectories.push(r.spectra_looped.clone());
                }
                out.push((7, criterion_7(&trajectories)));
                out.push((8, criterion_8(&runs, secs)));
                out.push((9, criterion_9(&runs)));
            }
            Err(err) => {
                for i in [7, 8, 9] {
                    out.push((i, Err(format!("toy training failed: {err}"))));
                }
            }
        }
        for (i, h) in handles {
            out.push((i, h.join().unwrap_or_else(|_| Err("panicked".into()))));
        }
        out
    });
    results.sort_by_key(|r| r.0);
    let mut failed = Vec::new();
    for (i, r) in &results {
        match r {
            Ok(msg) => println!("criterion {i:>2}: PASS  {msg}"),
            Err(msg) => {
                println!("criterion {i:>2}: FAIL  {msg}");
                failed.push(*i);
            }
        }
    }
    println!("acceptance finished in {:.0}s", start.elapsed().as_secs_f64());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
