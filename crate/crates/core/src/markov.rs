//! Synthetic Markov language: transition models, power-weighted sampling,
//! information content and difficulty strata.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, LabError, Result};

/// Exhaustive enumeration is used while `V^L` stays at or below this.
pub const ENUMERATION_CAP: u128 = 1_000_000;
/// Lower clip applied to Dirichlet draws before renormalisation.
pub const ROW_FLOOR: f64 = 1e-4;

pub const DEFAULT_N: usize = 500;
pub const DEFAULT_LEN: usize = 4;
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_VOCAB: usize = 3;
pub const DEFAULT_MATRICES: usize = 3;
pub const DEFAULT_TEST_N: usize = 5000;
pub const DEFAULT_TEST_LENGTHS: [usize; 4] = [8, 11, 14, 17];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub vocab_size: usize,
    pub seed: u64,
    pub initial: Vec<f64>,
    /// `transitions[m][i][j] = P(next = j | prev = i)` for matrix `m`.
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl TransitionModel {
    /// Checks stochasticity and shape.
    pub fn validate(&self) -> Result<()> {
        let v = self.vocab_size;
        if v < 2 {
            return param_err(format!("vocab_size {v} < 2"));
        }
        if self.transitions.is_empty() {
            return param_err("no transition matrices");
        }
        check_distribution(&self.initial, v, "initial")?;
        for (m, mat) in self.transitions.iter().enumerate() {
            if mat.len() != v {
                return param_err(format!("transition {m} has {} rows", mat.len()));
            }
            for (i, row) in mat.iter().enumerate() {
                check_distribution(row, v, &format!("transition {m} row {i}"))?;
            }
        }
        Ok(())
    }

    pub fn num_matrices(&self) -> usize {
        self.transitions.len()
    }

    /// Matrix used to produce `x_t` from `x_{t-1}` (`t ≥ 1`).
    pub fn matrix_index(&self, t: usize) -> usize {
        debug_assert!(t >= 1);
        (t - 1) % self.transitions.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

fn check_distribution(p: &[f64], v: usize, what: &str) -> Result<()> {
    if p.len() != v {
        return param_err(format!("{what}: length {} != {v}", p.len()));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return param_err(format!("{what}: negative or non-finite entry"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return param_err(format!("{what}: sums to {s}"));
    }
    Ok(())
}

/// Rows are symmetric Dirichlet(1) draws clipped below at [`ROW_FLOOR`];
/// the initial distribution is uniform.
pub fn build_transition_model(seed: u64, vocab_size: usize, num_matrices: usize) -> Result<TransitionModel> {
    if vocab_size < 2 {
        return param_err(format!("vocab_size must be at least 2, got {vocab_size}"));
    }
    if num_matrices < 1 {
        return param_err("num_matrices must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transitions = (0..num_matrices)
        .map(|_| (0..vocab_size).map(|_| dirichlet_row(&mut rng, vocab_size)).collect())
        .collect();
    let model = TransitionModel {
        vocab_size,
        seed,
        initial: normalized(vec![1.0; vocab_size]),
        transitions,
    };
    model.validate()?;
    Ok(model)
}

fn dirichlet_row(rng: &mut impl Rng, v: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..v).map(|_| Exp1.sample(rng)).collect();
    let row = normalized(raw);
    normalized(row.into_iter().map(|x| x.max(ROW_FLOOR)).collect())
}

/// Divides by the sum, then folds the rounding residue into the largest entry
/// so the row sums to one as closely as floating point allows.
fn normalized(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    for x in &mut p {
        *x /= s;
    }
    let resid = 1.0 - p.iter().sum::<f64>();
    if let Some(k) = (0..p.len()).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap_or(Ordering::Equal)) {
        p[k] += resid;
    }
    p
}

pub fn sequence_probability(model: &TransitionModel, tokens: &[usize]) -> Result<f64> {
    let Some(&first) = tokens.first() else {
        return param_err("empty token sequence");
    };
    check_tokens(tokens, model.vocab_size)?;
    let mut p = model.initial[first];
    for t in 1..tokens.len() {
        p *= model.transitions[model.matrix_index(t)][tokens[t - 1]][tokens[t]];
    }
    Ok(p)
}

fn check_tokens(tokens: &[usize], v: usize) -> Result<()> {
    match tokens.iter().find(|&&x| x >= v) {
        Some(&bad) => param_err(format!("token id {bad} out of range for vocabulary {v}")),
        None => Ok(()),
    }
}

/// `-ln p`, in nats.
pub fn information_content(probability: f64) -> Result<f64> {
    if !(probability > 0.0) || probability > 1.0 + 1e-12 {
        return Err(LabError::Domain(format!("probability {probability} outside (0, 1]")));
    }
    Ok((-probability.ln()).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stratum {
    Low,
    Mid,
    High,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Low => "low",
            Stratum::Mid => "mid",
            Stratum::High => "high",
        })
    }
}

impl FromStr for Stratum {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Stratum::Low),
            "mid" => Ok(Stratum::Mid),
            "high" => Ok(Stratum::High),
            other => param_err(format!("unknown stratum '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub probability: f64,
    pub ic: f64,
    pub stratum: Stratum,
}

impl Sample {
    fn new(model: &TransitionModel, tokens: Vec<usize>) -> Result<Self> {
        let probability = sequence_probability(model, &tokens)?;
        let ic = information_content(probability)?;
        Ok(Self { tokens, probability, ic, stratum: Stratum::Mid })
    }

    /// Model input: every token but the last.
    pub fn input(&self) -> &[usize] {
        &self.tokens[..self.tokens.len() - 1]
    }

    /// Prediction target: the last token.
    pub fn target(&self) -> usize {
        self.tokens[self.tokens.len() - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub source_model: TransitionModel,
    pub length: usize,
    pub sampling_power: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn stratum_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &self.samples {
            c[s.stratum as usize] += 1;
        }
        c
    }

    pub fn max_ic(&self) -> f64 {
        self.samples.iter().map(|s| s.ic).fold(0.0, f64::max)
    }

    pub fn mean_ic(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.ic).sum::<f64>() / self.samples.len() as f64
    }

    /// Copy containing the samples at `indices`, thresholds unchanged.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset { samples: indices.iter().map(|&i| self.samples[i].clone()).collect(), ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            samples: Vec::new(),
            source_model: self.source_model.clone(),
            length: self.length,
            sampling_power: self.sampling_power,
            low_threshold: self.low_threshold,
            high_threshold: self.high_threshold,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tokens,probability,ic,stratum\n");
        for s in &self.samples {
            let toks: Vec<String> = s.tokens.iter().map(usize::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                toks.join("-"),
                crate::io::fmt_num(s.probability),
                crate::io::fmt_num(s.ic),
                s.stratum
            ));
        }
        out
    }

    /// Rebuilds a dataset from its CSV export and the model that generated it.
    /// Probabilities and IC are recomputed from the model, strata are read back.
    pub fn from_csv(csv: &str, model: &TransitionModel, sampling_power: f64) -> Result<Dataset> {
        let mut lines = csv.lines();
        match lines.next() {
            Some("tokens,probability,ic,stratum") => {}
            other => return param_err(format!("unexpected dataset header {other:?}")),
        }
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return param_err(format!("dataset line {}: expected 4 fields", lineno + 2));
            }
            let tokens = fields[0]
                .split('-')
                .map(|t| t.parse::<usize>().map_err(|e| LabError::Parameter(format!("token '{t}': {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let mut s = Sample::new(model, tokens)?;
            s.stratum = fields[3].parse()?;
            samples.push(s);
        }
        let length = samples.first().map_or(0, |s| s.tokens.len());
        if samples.iter().any(|s| s.tokens.len() != length) {
            return param_err("dataset rows have differing lengths");
        }
        let (low_threshold, high_threshold) = thresholds_from_strata(&samples);
        Ok(Dataset { samples, source_model: model.clone(), length, sampling_power, low_threshold, high_threshold })
    }
}

fn thresholds_from_strata(samples: &[Sample]) -> (f64, f64) {
    let low = samples.iter().filter(|s| s.stratum == Stratum::Low).map(|s| s.ic).fold(f64::NEG_INFINITY, f64::max);
    let high = samples.iter().filter(|s| s.stratum == Stratum::High).map(|s| s.ic).fold(f64::INFINITY, f64::min);
    let low = if low.is_finite() { low } else { 0.0 };
    let high = if high.is_finite() { high } else { low };
    (low, high.max(low))
}

/// Number of length-`len` sequences over `v` tokens, or `None` on overflow.
pub fn sequence_count(v: usize, len: usize) -> Option<u128> {
    (v as u128).checked_pow(u32::try_from(len).ok()?)
}

/// All `V^L` sequences in lexicographic order.
pub fn enumerate_sequences(v: usize, len: usize) -> Result<Vec<Vec<usize>>> {
    let count = sequence_count(v, len).unwrap_or(u128::MAX);
    if count > ENUMERATION_CAP {
        return Err(LabError::Capacity(count, ENUMERATION_CAP));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut cur = vec![0usize; len];
    for _ in 0..count {
        out.push(cur.clone());
        for pos in (0..len).rev() {
            cur[pos] += 1;
            if cur[pos] < v {
                break;
            }
            cur[pos] = 0;
        }
    }
    Ok(out)
}

/// Draws `n` sequences with replacement, weight ∝ `P(X)^α`, over all `V^L`
/// candidates, then stratifies with 0.4/0.4 fractions.
pub fn sample_dataset(model: &TransitionModel, n: usize, len: usize, alpha: f64, seed: u64) -> Result<Dataset> {
    validate_sampling(model, n, len, alpha)?;
    let candidates = enumerate_sequences(model.vocab_size, len)?;
    let probs = candidates
        .iter()
        .map(|c| sequence_probability(model, c))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = probs.iter().map(|&p| p.powf(alpha)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| LabError::Parameter(format!("sampling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| Sample::new(model, candidates[dist.sample(&mut rng)].clone()))
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset {
        samples,
        source_model: model.clone(),
        length: len,
        sampling_power: alpha,
        low_threshold: 0.0,
        high_threshold: 0.0,
    };
    stratify(ds, 0.4, 0.4)
}

fn validate_sampling(model: &TransitionModel, n: usize, len: usize, alpha: f64) -> Result<()> {
    model.validate()?;
    if n == 0 {
        return param_err("sample count must be positive");
    }
    if len == 0 {
        return param_err("sequence length must be positive");
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return param_err(format!("sampling power {alpha} must be finite and non-negative"));
    }
    Ok(())
}

fn cmp_samples(a: &Sample, b: &Sample) -> Ordering {
    a.ic.partial_cmp(&b.ic).unwrap_or(Ordering::Equal).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Canonically sorts by (IC, tokens) and labels the lowest `low_frac` Low,
/// the highest `high_frac` High and the rest Mid.
pub fn stratify(mut ds: Dataset, low_frac: f64, high_frac: f64) -> Result<Dataset> {
    if ds.samples.is_empty() {
        return param_err("cannot stratify an empty dataset");
    }
    if !(low_frac > 0.0 && high_frac > 0.0 && low_frac + high_frac <= 1.0 + 1e-12) {
        return param_err(format!("invalid strata fractions {low_frac}/{high_frac}"));
    }
    ds.samples.sort_by(cmp_samples);
    let n = ds.samples.len();
    let n_low = ((low_frac * n as f64) + 1e-9).floor() as usize;
    let n_high = (((high_frac * n as f64) + 1e-9).floor() as usize).min(n - n_low);
    for (i, s) in ds.samples.iter_mut().enumerate() {
        s.stratum = if i < n_low {
            Stratum::Low
        } else if i >= n - n_high {
            Stratum::High
        } else {
            Stratum::Mid
        };
    }
    ds.low_threshold = if n_low > 0 { ds.samples[n_low - 1].ic } else { ds.samples[0].ic };
    ds.high_threshold = if n_high > 0 { ds.samples[n - n_high].ic } else { ds.samples[n - 1].ic };
    Ok(ds)
}

/// Test set at length `len_test` under the same cyclic dynamics. Falls back to
/// ancestral proposals plus self-normalised `P^(α-1)` resampling when the
/// sequence space exceeds [`ENUMERATION_CAP`].
pub fn make_length_gen_testset(
    model: &TransitionModel,
    len_test: usize,
    n_test: usize,
    alpha: f64,
    seed: u64,
) -> Result<Dataset> {
    validate_sampling(model, n_test, len_test, alpha)?;
    let fits = sequence_count(model.vocab_size, len_test).is_some_and(|c| c <= ENUMERATION_CAP);
    if fits {
        return sample_dataset(model, n_test, len_test, alpha, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proposals = (20 * n_test).max(100_000);
    let mut pool = Vec::with_capacity(proposals);
    let mut log_w = Vec::with_capacity(proposals);
    for _ in 0..proposals {
        let toks = ancestral_sample(model, len_test, &mut rng);
        let p = sequence_probability(model, &toks)?;
        log_w.push((alpha - 1.0) * p.ln());
        pool.push(toks);
    }
    let max_lw = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|&lw| (lw - max_lw).exp()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| LabError::Parameter(format!("importance weights: {e}")))?;
    let samples = (0..n_test)
        .map(|_| Sample::new(model, pool[dist.sample(&mut rng)].clone()))
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset {
        samples,
        source_model: model.clone(),
        length: len_test,
        sampling_power: alpha,
        low_threshold: 0.0,
        high_threshold: 0.0,
    };
    stratify(ds, 0.4, 0.4)
}

fn ancestral_sample(model: &TransitionModel, len: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut toks = Vec::with_capacity(len);
    toks.push(draw_categorical(&model.initial, rng));
    for t in 1..len {
        let row = &model.transitions[model.matrix_index(t)][toks[t - 1]];
        toks.push(draw_categorical(row, rng));
    }
    toks
}

fn draw_categorical(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Fraction of samples whose IC does not exceed `max_ic`.
pub fn simple_fraction(ds: &Dataset, max_ic: f64) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    ds.samples.iter().filter(|s| s.ic <= max_ic).count() as f64 / ds.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity_model(v: usize) -> TransitionModel {
        let eye: Vec<Vec<f64>> = (0..v).map(|i| (0..v).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        TransitionModel { vocab_size: v, seed: 0, initial: vec![1.0 / v as f64; v], transitions: vec![eye; 3] }
    }

    #[test]
    fn default_model_is_uniform_start_and_stochastic() {
        let m = build_transition_model(0, 3, 3).unwrap();
        for &p in &m.initial {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        for mat in &m.transitions {
            for row in mat {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                assert!(row.iter().all(|&x| x > 0.0));
            }
        }
        assert_eq!(m, build_transition_model(0, 3, 3).unwrap());
        assert_ne!(m, build_transition_model(1, 3, 3).unwrap());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(build_transition_model(0, 1, 3).is_err());
        assert!(build_transition_model(0, 3, 0).is_err());
    }

    #[test]
    fn probability_edge_cases() {
        let m = build_transition_model(0, 3, 3).unwrap();
        assert!((sequence_probability(&m, &[2]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(sequence_probability(&m, &[]).is_err());
        assert!(sequence_probability(&m, &[0, 3]).is_err());
        let id = identity_model(3);
        assert!((sequence_probability(&id, &[1, 1, 1, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one_over_all_sequences() {
        let m = build_transition_model(0, 3, 3).unwrap();
        let seqs = enumerate_sequences(3, 4).unwrap();
        assert_eq!(seqs.len(), 81);
        let total: f64 = seqs.iter().map(|s| sequence_probability(&m, s).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cyclic_indexing() {
        let m = build_transition_model(0, 3, 3).unwrap();
        assert_eq!(m.matrix_index(1), 0);
        assert_eq!(m.matrix_index(3), 2);
        assert_eq!(m.matrix_index(7), 0);
        // Hand product for a length-8 chain.
        let toks = [0, 1, 2, 0, 1, 2, 0, 1];
        let mut p = m.initial[0];
        for t in 1..8 {
            p *= m.transitions[(t - 1) % 3][toks[t - 1]][toks[t]];
        }
        assert!((sequence_probability(&m, &toks).unwrap() - p).abs() < 1e-18);
    }

    #[test]
    fn information_content_values() {
        assert_eq!(information_content(1.0).unwrap(), 0.0);
        assert!((information_content((-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(information_content(0.0), Err(LabError::Domain(_))));
        assert!(information_content(-0.5).is_err());
    }

    #[test]
    fn stratify_counts_at_default_size() {
        let m = build_transition_model(0, 3, 3).unwrap();
        let ds = sample_dataset(&m, 500, 4, 2.0, 0).unwrap();
        assert_eq!(ds.stratum_counts(), [200, 100, 200]);
        assert!(ds.low_threshold <= ds.high_threshold);
        for s in &ds.samples {
            assert!((s.ic + s.probability.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn stratify_ties_follow_token_order() {
        let id = identity_model(3);
        let samples: Vec<Sample> = [[2, 2], [0, 0], [1, 1], [0, 0], [2, 2]]
            .iter()
            .map(|t| Sample::new(&id, t.to_vec()).unwrap())
            .collect();
        let ds = Dataset {
            samples,
            source_model: id,
            length: 2,
            sampling_power: 2.0,
            low_threshold: 0.0,
            high_threshold: 0.0,
        };
        let ds = stratify(ds, 0.4, 0.4).unwrap();
        assert_eq!(ds.samples[0].tokens, vec![0, 0]);
        assert_eq!(ds.samples[1].tokens, vec![0, 0]);
        assert_eq!(ds.samples[0].stratum, Stratum::Low);
        assert_eq!(ds.samples[1].stratum, Stratum::Low);
        assert_eq!(ds.samples[2].stratum, Stratum::Mid);
    }

    #[test]
    fn stratify_rejects_bad_input() {
        let m = build_transition_model(0, 3, 3).unwrap();
        let ds = sample_dataset(&m, 10, 4, 2.0, 0).unwrap();
        assert!(stratify(ds.clone(), 0.7, 0.4).is_err());
        assert!(stratify(ds.subset(&[]), 0.4, 0.4).is_err());
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let m = build_transition_model(0, 3, 3).unwrap();
        assert!(matches!(sample_dataset(&m, 10, 13, 2.0, 0), Err(LabError::Capacity(..))));
        // The test-set path falls back to importance resampling instead.
        let ds = make_length_gen_testset(&m, 14, 200, 2.0, 0).unwrap();
        assert_eq!(ds.len(), 200);
        assert!(ds.samples.iter().all(|s| s.tokens.len() == 14));
    }

    #[test]
    fn csv_round_trip() {
        let m = build_transition_model(3, 3, 3).unwrap();
        let ds = sample_dataset(&m, 50, 4, 2.0, 9).unwrap();
        let back = Dataset::from_csv(&ds.to_csv(), &m, 2.0).unwrap();
        assert_eq!(back.samples, ds.samples);
        assert_eq!(back.low_threshold, ds.low_threshold);
        assert_eq!(back.high_threshold, ds.high_threshold);
        let json = m.to_json().unwrap();
        assert_eq!(TransitionModel::from_json(&json).unwrap(), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn any_model_normalises(seed in any::<u64>(), v in 2usize..6, mats in 1usize..4, len in 1usize..5) {
            let m = build_transition_model(seed, v, mats).unwrap();
            let total: f64 = enumerate_sequences(v, len).unwrap().iter()
                .map(|s| sequence_probability(&m, s).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn ic_strictly_decreasing_in_probability(a in 1e-12f64..1.0, b in 1e-12f64..1.0) {
            prop_assume!(a < b);
            prop_assert!(information_content(a).unwrap() > information_content(b).unwrap());
        }

        #[test]
        fn stratify_is_idempotent_and_order_free(seed in any::<u64>(), shift in 0usize..60) {
            let m = build_transition_model(seed, 3, 3).unwrap();
            let ds = sample_dataset(&m, 60, 4, 2.0, seed).unwrap();
            let again = stratify(ds.clone(), 0.4, 0.4).unwrap();
            prop_assert_eq!(&again, &ds);
            let mut rotated = ds.clone();
            rotated.samples.rotate_left(shift);
            rotated.samples.reverse();
            prop_assert_eq!(stratify(rotated, 0.4, 0.4).unwrap(), ds);
        }

        #[test]
        fn sampling_is_reproducible(seed in any::<u64>()) {
            let m = build_transition_model(seed, 3, 3).unwrap();
            prop_assert_eq!(
                sample_dataset(&m, 40, 4, 2.0, seed).unwrap(),
                sample_dataset(&m, 40, 4, 2.0, seed).unwrap()
            );
        }
    }
}
