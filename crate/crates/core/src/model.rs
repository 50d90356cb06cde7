//! Linear-attention toy models: Single, Looped and Deep variants, the
//! cross-entropy objective and exact reverse-mode gradients.
//!
//! One attention step with weights `(W_K, W_Q, W_V)` maps `(E, z)` to
//! `(E + M E, z + M z)` where `M = W_V E Eᵀ W_Kᵀ W_Q`. Single applies it once
//! and leaves `E` alone; Looped repeats one shared block `T` times; Deep uses a
//! distinct block per step. Logits are `W_h z_T`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, LabError, Result};
use crate::linalg::{norm, Matrix};
use crate::markov::Sample;
use crate::scalar::Scalar;

pub const DEFAULT_DIM: usize = 8;
pub const DEFAULT_LOOPS: usize = 3;
pub const DEFAULT_INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    Single,
    Looped(usize),
    Deep(usize),
}

impl Arch {
    /// Number of attention applications.
    pub fn steps(self) -> usize {
        match self {
            Arch::Single => 1,
            Arch::Looped(t) | Arch::Deep(t) => t,
        }
    }

    /// Number of distinct weight blocks.
    pub fn layer_count(self) -> usize {
        match self {
            Arch::Single | Arch::Looped(_) => 1,
            Arch::Deep(l) => l,
        }
    }

    pub fn updates_embeddings(self) -> bool {
        !matches!(self, Arch::Single)
    }

    fn layer_for_step(self, step: usize) -> usize {
        match self {
            Arch::Deep(_) => step,
            _ => 0,
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Arch::Looped(0) => param_err("loop count T must be at least 1"),
            Arch::Deep(0) => param_err("deep model needs at least one layer"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arch::Single => f.write_str("single"),
            Arch::Looped(t) => write!(f, "looped:{t}"),
            Arch::Deep(l) => write!(f, "deep:{l}"),
        }
    }
}

impl FromStr for Arch {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, count) = match lower.split_once(':') {
            Some((n, c)) => {
                let c = c.parse::<usize>().map_err(|e| LabError::Parameter(format!("arch count '{c}': {e}")))?;
                (n.to_owned(), Some(c))
            }
            None => (lower.clone(), None),
        };
        let arch = match (name.as_str(), count) {
            ("single", None) => Arch::Single,
            ("looped", c) => Arch::Looped(c.unwrap_or(DEFAULT_LOOPS)),
            ("deep", c) => Arch::Deep(c.unwrap_or(DEFAULT_LOOPS)),
            _ => return param_err(format!("unknown architecture '{s}'")),
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Fixed token embedding with unit-norm columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMap<T> {
    pub vocab_size: usize,
    pub dim: usize,
    pub seed: u64,
    /// Adds a fixed sinusoidal position code to each column of `E₀`.
    pub positional: bool,
    pub matrix: Matrix<T>,
}

impl<T: Scalar> EmbeddingMap<T> {
    pub fn new(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 || dim == 0 {
            return param_err("embedding needs positive vocabulary and dimension");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols = Vec::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            let mut c: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut c {
                *x /= n;
            }
            cols.push(c.into_iter().map(T::lit).collect::<Vec<T>>());
        }
        let matrix = Matrix::from_columns(&cols)?;
        Ok(Self { vocab_size, dim, seed, positional: false, matrix })
    }

    pub fn with_positional(mut self, on: bool) -> Self {
        self.positional = on;
        self
    }

    /// Embedding matrix `E₀` (d×n) and the query state `z₀` (its last column).
    pub fn embed(&self, tokens: &[usize]) -> Result<(Matrix<T>, Vec<T>)> {
        if tokens.is_empty() {
            return param_err("cannot embed an empty sequence");
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.vocab_size) {
            return param_err(format!("token id {bad} out of range for vocabulary {}", self.vocab_size));
        }
        let d = self.dim;
        let e = Matrix::from_fn(d, tokens.len(), |i, j| {
            let base = self.matrix[(i, tokens[j])];
            if self.positional {
                base + T::lit(sinusoid(j, i, d))
            } else {
                base
            }
        });
        let z = e.column(tokens.len() - 1);
        Ok((e, z))
    }
}

fn sinusoid(pos: usize, k: usize, d: usize) -> f64 {
    let pair = (k / 2) * 2;
    let freq = 1.0 / 10000f64.powf(pair as f64 / d as f64);
    let angle = pos as f64 * freq;
    if k % 2 == 0 {
        angle.sin()
    } else {
        angle.cos()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttnBlock<T> {
    pub w_k: Matrix<T>,
    pub w_q: Matrix<T>,
    pub w_v: Matrix<T>,
}

impl<T: Scalar> AttnBlock<T> {
    pub fn zeros(d: usize) -> Self {
        Self { w_k: Matrix::zeros(d, d), w_q: Matrix::zeros(d, d), w_v: Matrix::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { w_k: Matrix::identity(d), w_q: Matrix::identity(d), w_v: Matrix::identity(d) }
    }

    pub fn dim(&self) -> usize {
        self.w_k.rows()
    }

    /// `M = W_V E Eᵀ W_Kᵀ W_Q`.
    pub fn mixing(&self, e: &Matrix<T>) -> Matrix<T> {
        let g = e.matmul_t(e);
        self.w_v.matmul(&g).matmul(&self.w_k.t_matmul(&self.w_q))
    }
}

/// Weights for any architecture: one block for Single/Looped, one per layer for Deep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub layers: Vec<AttnBlock<T>>,
    pub w_h: Matrix<T>,
}

/// Weight block selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Wk,
    Wq,
    Wv,
    Wh,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Wk => "w_k",
            Block::Wq => "w_q",
            Block::Wv => "w_v",
            Block::Wh => "w_h",
        })
    }
}

impl FromStr for Block {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "").as_str() {
            "wk" => Ok(Block::Wk),
            "wq" => Ok(Block::Wq),
            "wv" => Ok(Block::Wv),
            "wh" => Ok(Block::Wh),
            _ => param_err(format!("unknown weight block '{s}'")),
        }
    }
}

impl<T: Scalar> Params<T> {
    pub fn zeros(d: usize, vocab: usize, layers: usize) -> Self {
        Self { layers: (0..layers).map(|_| AttnBlock::zeros(d)).collect(), w_h: Matrix::zeros(vocab, d) }
    }

    /// I.i.d. Gaussian entries with standard deviation `std`.
    pub fn gaussian(d: usize, vocab: usize, layers: usize, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: usize, c: usize| {
            Matrix::from_fn(r, c, |_, _| T::lit(std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)))
        };
        let layers = (0..layers)
            .map(|_| {
                let w_k = draw(d, d);
                let w_q = draw(d, d);
                let w_v = draw(d, d);
                AttnBlock { w_k, w_q, w_v }
            })
            .collect();
        let w_h = draw(vocab, d);
        Self { layers, w_h }
    }

    pub fn for_arch(arch: Arch, d: usize, vocab: usize, std: f64, seed: u64) -> Self {
        Self::gaussian(d, vocab, arch.layer_count(), std, seed)
    }

    pub fn dim(&self) -> usize {
        self.w_h.cols()
    }

    pub fn vocab(&self) -> usize {
        self.w_h.rows()
    }

    pub fn check(&self, arch: Arch) -> Result<()> {
        arch.validate()?;
        if self.layers.len() != arch.layer_count() {
            return Err(LabError::Shape(format!(
                "{} weight blocks for architecture {arch}",
                self.layers.len()
            )));
        }
        let d = self.dim();
        for (i, b) in self.layers.iter().enumerate() {
            for m in [&b.w_k, &b.w_q, &b.w_v] {
                if m.shape() != (d, d) {
                    return Err(LabError::Shape(format!("layer {i}: block is {:?}, expected {d}x{d}", m.shape())));
                }
            }
        }
        if !self.is_finite() {
            return Err(LabError::NonFinite("parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.w_h.is_finite() && self.layers.iter().all(|b| b.w_k.is_finite() && b.w_q.is_finite() && b.w_v.is_finite())
    }

    pub fn block(&self, layer: usize, which: Block) -> &Matrix<T> {
        match which {
            Block::Wk => &self.layers[layer].w_k,
            Block::Wq => &self.layers[layer].w_q,
            Block::Wv => &self.layers[layer].w_v,
            Block::Wh => &self.w_h,
        }
    }

    pub fn block_mut(&mut self, layer: usize, which: Block) -> &mut Matrix<T> {
        match which {
            Block::Wk => &mut self.layers[layer].w_k,
            Block::Wq => &mut self.layers[layer].w_q,
            Block::Wv => &mut self.layers[layer].w_v,
            Block::Wh => &mut self.w_h,
        }
    }

    /// All entries, layer blocks in `w_k, w_q, w_v` order followed by `w_h`.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for b in &self.layers {
            out.extend_from_slice(b.w_k.as_slice());
            out.extend_from_slice(b.w_q.as_slice());
            out.extend_from_slice(b.w_v.as_slice());
        }
        out.extend_from_slice(self.w_h.as_slice());
        out
    }

    pub fn num_entries(&self) -> usize {
        let d = self.dim();
        self.layers.len() * 3 * d * d + self.w_h.rows() * d
    }

    /// Inverse of [`Params::flatten`] using `self` as the shape template.
    pub fn unflatten_like(&self, flat: &[T]) -> Result<Self> {
        if flat.len() != self.num_entries() {
            return Err(LabError::Shape(format!("{} values for {} parameters", flat.len(), self.num_entries())));
        }
        let mut out = self.clone();
        let mut off = 0;
        let mut fill = |m: &mut Matrix<T>| {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        };
        for b in &mut out.layers {
            fill(&mut b.w_k);
            fill(&mut b.w_q);
            fill(&mut b.w_v);
        }
        fill(&mut out.w_h);
        Ok(out)
    }

    /// Euclidean norm over every block.
    pub fn global_norm(&self) -> T {
        norm(&self.flatten())
    }

    pub fn add_scaled(&mut self, other: &Self, s: T) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w_k.add_assign_scaled(&b.w_k, s);
            a.w_q.add_assign_scaled(&b.w_q, s);
            a.w_v.add_assign_scaled(&b.w_v, s);
        }
        self.w_h.add_assign_scaled(&other.w_h, s);
    }

    pub fn scale_in_place(&mut self, s: T) {
        let scaled = self.unflatten_like(&self.flatten().into_iter().map(|x| x * s).collect::<Vec<_>>());
        *self = scaled.expect("same shape");
    }

    /// Frobenius inner product over every block.
    pub fn dot(&self, other: &Self) -> T {
        crate::linalg::dot(&self.flatten(), &other.flatten())
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let c = |m: &Matrix<T>| {
            Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|x| U::lit(x.to_f64_lossy())).collect())
                .expect("same shape")
        };
        Params {
            layers: self.layers.iter().map(|b| AttnBlock { w_k: c(&b.w_k), w_q: c(&b.w_q), w_v: c(&b.w_v) }).collect(),
            w_h: c(&self.w_h),
        }
    }
}

/// Anything with an input sequence and a next-token target.
pub trait Labeled {
    fn input(&self) -> &[usize];
    fn target(&self) -> usize;
}

impl Labeled for Sample {
    fn input(&self) -> &[usize] {
        Sample::input(self)
    }
    fn target(&self) -> usize {
        Sample::target(self)
    }
}

impl Labeled for (Vec<usize>, usize) {
    fn input(&self) -> &[usize] {
        &self.0
    }
    fn target(&self) -> usize {
        self.1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    /// `z₀ … z_T`.
    pub states: Vec<Vec<T>>,
    /// `E₀ … E_T`; every entry equals `E₀` for Single.
    pub embeddings: Vec<Matrix<T>>,
    pub logits: Vec<T>,
    pub probabilities: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn final_state(&self) -> &[T] {
        self.states.last().expect("trace has states")
    }

    /// Prediction with ties broken toward the smallest token id.
    pub fn argmax(&self) -> usize {
        argmax(&self.logits)
    }
}

pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let ex: Vec<T> = logits.iter().map(|&x| (x - m).exp()).collect();
    let s: T = ex.iter().copied().sum();
    ex.into_iter().map(|x| x / s).collect()
}

/// `W_V E Eᵀ W_Kᵀ W_Q z`, evaluated right to left.
pub fn attention<T: Scalar>(block: &AttnBlock<T>, e: &Matrix<T>, z: &[T]) -> Result<Vec<T>> {
    let d = block.dim();
    if e.rows() != d || z.len() != d {
        return Err(LabError::Shape(format!("attention: E is {:?}, z has {}, d = {d}", e.shape(), z.len())));
    }
    let b = block.w_q.matvec(z);
    let k = block.w_k.t_matvec(&b);
    let s = e.t_matvec(&k);
    let ez = e.matvec(&s);
    Ok(block.w_v.matvec(&ez))
}

pub fn forward<T: Scalar>(params: &Params<T>, emap: &EmbeddingMap<T>, tokens: &[usize], arch: Arch) -> Result<ForwardTrace<T>> {
    params.check(arch)?;
    if params.dim() != emap.dim {
        return Err(LabError::Shape(format!("params dim {} vs embedding dim {}", params.dim(), emap.dim)));
    }
    let (e0, z0) = emap.embed(tokens)?;
    let mut states = vec![z0];
    let mut embeddings = vec![e0];
    for step in 0..arch.steps() {
        let block = &params.layers[arch.layer_for_step(step)];
        let e = embeddings.last().expect("nonempty");
        let z = states.last().expect("nonempty");
        let m = block.mixing(e);
        let mut z_next = m.matvec(z);
        for (a, &b) in z_next.iter_mut().zip(z) {
            *a += b;
        }
        let e_next = if arch.updates_embeddings() { e + &m.matmul(e) } else { e.clone() };
        states.push(z_next);
        embeddings.push(e_next);
    }
    let logits = params.w_h.matvec(states.last().expect("nonempty"));
    let probabilities = softmax(&logits);
    Ok(ForwardTrace { states, embeddings, logits, probabilities })
}

pub fn forward_single<T: Scalar>(params: &Params<T>, emap: &EmbeddingMap<T>, tokens: &[usize]) -> Result<ForwardTrace<T>> {
    forward(params, emap, tokens, Arch::Single)
}

pub fn forward_looped<T: Scalar>(
    params: &Params<T>,
    emap: &EmbeddingMap<T>,
    tokens: &[usize],
    loops: usize,
) -> Result<ForwardTrace<T>> {
    if loops == 0 {
        return param_err("loop count T must be at least 1");
    }
    forward(params, emap, tokens, Arch::Looped(loops))
}

pub fn forward_deep<T: Scalar>(params: &Params<T>, emap: &EmbeddingMap<T>, tokens: &[usize]) -> Result<ForwardTrace<T>> {
    if params.layers.is_empty() {
        return param_err("deep model needs at least one layer");
    }
    forward(params, emap, tokens, Arch::Deep(params.layers.len()))
}

/// `-ln softmax(ŷ)_y`, computed from logits for stability.
pub fn cross_entropy<T: Scalar>(trace: &ForwardTrace<T>, y: usize) -> Result<T> {
    if y >= trace.logits.len() {
        return param_err(format!("target {y} out of range for {} classes", trace.logits.len()));
    }
    let m = trace.logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + trace.logits.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
    Ok((lse - trace.logits[y]).max(T::zero()))
}

/// Mean cross-entropy over the batch.
pub fn batch_loss<T: Scalar, S: Labeled>(params: &Params<T>, emap: &EmbeddingMap<T>, batch: &[S], arch: Arch) -> Result<T> {
    if batch.is_empty() {
        return param_err("empty batch");
    }
    let mut total = T::zero();
    for s in batch {
        total += cross_entropy(&forward(params, emap, s.input(), arch)?, s.target())?;
    }
    Ok(total / T::count(batch.len()))
}

/// Exact gradient of the mean cross-entropy by reverse-mode differentiation of
/// the full recursion, including the dependence of `E_t` and `z_t` on the weights.
/// Returns `(loss, gradient)`.
pub fn loss_and_grad<T: Scalar, S: Labeled>(
    params: &Params<T>,
    emap: &EmbeddingMap<T>,
    batch: &[S],
    arch: Arch,
) -> Result<(T, Params<T>)> {
    params.check(arch)?;
    if batch.is_empty() {
        return param_err("empty batch");
    }
    let d = params.dim();
    let layers = params.layers.len();
    // K' = W_Kᵀ W_Q per layer; the W_K and W_Q gradients follow from dK' at the end.
    let kprime: Vec<Matrix<T>> = params.layers.iter().map(|b| b.w_k.t_matmul(&b.w_q)).collect();
    let mut d_kprime = vec![Matrix::zeros(d, d); layers];
    let mut grad = Params::zeros(d, params.vocab(), layers);
    let mut total = T::zero();

    for s in batch {
        let (e0, z0) = emap.embed(s.input())?;
        let y = s.target();
        if y >= params.vocab() {
            return param_err(format!("target {y} out of range"));
        }
        // Forward, keeping per-step caches.
        struct StepCache<T> {
            e: Matrix<T>,
            z: Vec<T>,
            g: Matrix<T>,
            vg: Matrix<T>,
            m: Matrix<T>,
        }
        let mut caches: Vec<StepCache<T>> = Vec::with_capacity(arch.steps());
        let mut e = e0;
        let mut z = z0;
        for step in 0..arch.steps() {
            let l = arch.layer_for_step(step);
            let g = e.matmul_t(&e);
            let vg = params.layers[l].w_v.matmul(&g);
            let m = vg.matmul(&kprime[l]);
            let mut z_next = m.matvec(&z);
            for (a, &b) in z_next.iter_mut().zip(&z) {
                *a += b;
            }
            let e_next = if arch.updates_embeddings() && step + 1 < arch.steps() { &e + &m.matmul(&e) } else { e.clone() };
            caches.push(StepCache { e, z, g, vg, m });
            e = e_next;
            z = z_next;
        }
        let logits = params.w_h.matvec(&z);
        let probs = softmax(&logits);
        let mx = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = mx + logits.iter().map(|&x| (x - mx).exp()).sum::<T>().ln();
        total += (lse - logits[y]).max(T::zero());

        let mut gvec = probs;
        gvec[y] -= T::one();
        grad.w_h.add_assign_scaled(&Matrix::outer(&gvec, &z), T::one());
        let mut dz = params.w_h.t_matvec(&gvec);
        let mut de: Option<Matrix<T>> = None;

        for step in (0..arch.steps()).rev() {
            let l = arch.layer_for_step(step);
            let c = &caches[step];
            let mut dm = Matrix::outer(&dz, &c.z);
            if let Some(de_next) = &de {
                dm.add_assign_scaled(&de_next.matmul_t(&c.e), T::one());
            }
            let gk = c.g.matmul(&kprime[l]);
            grad.layers[l].w_v.add_assign_scaled(&dm.matmul_t(&gk), T::one());
            d_kprime[l].add_assign_scaled(&c.vg.t_matmul(&dm), T::one());
            if step == 0 {
                break;
            }
            let mut dz_prev = c.m.t_matvec(&dz);
            for (a, &b) in dz_prev.iter_mut().zip(&dz) {
                *a += b;
            }
            // E_{step} feeds the previous step only through the looped E update.
            let dg = params.layers[l].w_v.t_matmul(&dm).matmul_t(&kprime[l]);
            let dg_sym = &dg + &dg.transpose();
            let mut de_prev = dg_sym.matmul(&c.e);
            if let Some(de_next) = &de {
                de_prev.add_assign_scaled(de_next, T::one());
                de_prev.add_assign_scaled(&c.m.t_matmul(de_next), T::one());
            }
            dz = dz_prev;
            de = Some(de_prev);
        }
    }

    for (l, dk) in d_kprime.iter().enumerate() {
        let b = &params.layers[l];
        grad.layers[l].w_q = b.w_k.matmul(dk);
        grad.layers[l].w_k = b.w_q.matmul_t(dk);
    }
    let inv_n = T::one() / T::count(batch.len());
    grad.scale_in_place(inv_n);
    Ok((total * inv_n, grad))
}

/// Gradient only; see [`loss_and_grad`].
pub fn grad_full<T: Scalar, S: Labeled>(params: &Params<T>, emap: &EmbeddingMap<T>, batch: &[S], arch: Arch) -> Result<Params<T>> {
    Ok(loss_and_grad(params, emap, batch, arch)?.1)
}

/// Checkpoint payload: weights, architecture and the embedding that goes with them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub arch: Arch,
    pub epoch: usize,
    pub embedding_seed: u64,
    pub positional: bool,
    pub params: Params<T>,
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> Checkpoint<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.params.check(c.arch)?;
        Ok(c)
    }
}
