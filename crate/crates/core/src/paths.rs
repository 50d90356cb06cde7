//! Direct-path gradients (intermediate states held constant) and the
//! preconditioner relating the Looped gradient to the Single one.
//!
//! With `u = W_hᵀ(softmax(ŷ) − e_y)`, `A_t = W_V E_t E_tᵀ`, `b_t = W_Q z_t`
//! and `Ã_t = A_t W_Kᵀ`, the per-sample direct-path gradients are
//! `Σ_t b_t uᵀ A_t` for `W_K` and `Σ_t Ã_tᵀ u z_tᵀ` for `W_Q`, which are the
//! column-major reshapes of `Σ_t (A_tᵀ ⊗ b_t) u` and `Σ_t (z_t ⊗ Ã_tᵀ) u`.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::linalg::{norm, sub_vec, Matrix};
use crate::model::{forward, Arch, EmbeddingMap, ForwardTrace, Labeled, Params};
use crate::scalar::Scalar;

/// Blocks that have a direct-path form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectBlock {
    Wk,
    Wq,
}

/// Per-step quantities entering the direct-path formulas for one sample.
#[derive(Clone, Debug)]
pub struct PathTerms<T> {
    /// `A_{t-1}` for `t = 1..T`.
    pub a: Vec<Matrix<T>>,
    /// `b_{t-1}`.
    pub b: Vec<Vec<T>>,
    /// `Ã_{t-1}`.
    pub a_tilde: Vec<Matrix<T>>,
    /// `z_{t-1}`.
    pub z: Vec<Vec<T>>,
    /// Error vector `W_hᵀ(softmax(ŷ) − e_y)`.
    pub u: Vec<T>,
}

fn check_arch(arch: Arch) -> Result<()> {
    match arch {
        Arch::Single | Arch::Looped(_) => arch.validate(),
        Arch::Deep(_) => param_err("direct-path gradients are defined for Single and Looped only"),
    }
}

pub fn error_vector<T: Scalar>(params: &Params<T>, trace: &ForwardTrace<T>, y: usize) -> Vec<T> {
    let mut g = trace.probabilities.clone();
    g[y] -= T::one();
    params.w_h.t_matvec(&g)
}

pub fn path_terms<T: Scalar>(
    params: &Params<T>,
    emap: &EmbeddingMap<T>,
    tokens: &[usize],
    y: usize,
    arch: Arch,
) -> Result<PathTerms<T>> {
    check_arch(arch)?;
    if y >= params.vocab() {
        return param_err(format!("target {y} out of range"));
    }
    let trace = forward(params, emap, tokens, arch)?;
    let blk = &params.layers[0];
    let steps = arch.steps();
    let mut terms = PathTerms {
        a: Vec::with_capacity(steps),
        b: Vec::with_capacity(steps),
        a_tilde: Vec::with_capacity(steps),
        z: Vec::with_capacity(steps),
        u: error_vector(params, &trace, y),
    };
    for t in 0..steps {
        let e = &trace.embeddings[t];
        let a = blk.w_v.matmul(&e.matmul_t(e));
        terms.b.push(blk.w_q.matvec(&trace.states[t]));
        terms.a_tilde.push(a.matmul_t(&blk.w_k));
        terms.a.push(a);
        terms.z.push(trace.states[t].clone());
    }
    Ok(terms)
}

impl<T: Scalar> PathTerms<T> {
    /// Direct-path gradient of this sample for `block`, using error vector `u`.
    pub fn gradient_with(&self, block: DirectBlock, u: &[T]) -> Matrix<T> {
        let d = u.len();
        let mut g = Matrix::zeros(d, d);
        for t in 0..self.a.len() {
            match block {
                DirectBlock::Wk => {
                    let ua = self.a[t].t_matvec(u);
                    g.add_assign_scaled(&Matrix::outer(&self.b[t], &ua), T::one());
                }
                DirectBlock::Wq => {
                    let au = self.a_tilde[t].t_matvec(u);
                    g.add_assign_scaled(&Matrix::outer(&au, &self.z[t]), T::one());
                }
            }
        }
        g
    }

    pub fn gradient(&self, block: DirectBlock) -> Matrix<T> {
        self.gradient_with(block, &self.u)
    }

    /// Kronecker factor of step `t` (0-based): `A_tᵀ ⊗ b_t` or `z_t ⊗ Ã_tᵀ`, shape d²×d.
    pub fn factor(&self, block: DirectBlock, t: usize) -> Matrix<T> {
        match block {
            DirectBlock::Wk => {
                let b = Matrix::from_columns(std::slice::from_ref(&self.b[t])).expect("column");
                self.a[t].transpose().kron(&b)
            }
            DirectBlock::Wq => {
                let z = Matrix::from_columns(std::slice::from_ref(&self.z[t])).expect("column");
                z.kron(&self.a_tilde[t].transpose())
            }
        }
    }
}

/// Batch-mean direct-path gradient, each model using its own logits.
pub fn grad_direct_path<T: Scalar, S: Labeled>(
    params: &Params<T>,
    emap: &EmbeddingMap<T>,
    batch: &[S],
    arch: Arch,
    block: DirectBlock,
) -> Result<Matrix<T>> {
    check_arch(arch)?;
    if batch.is_empty() {
        return param_err("empty batch");
    }
    let d = params.dim();
    let mut g = Matrix::zeros(d, d);
    for s in batch {
        let terms = path_terms(params, emap, s.input(), s.target(), arch)?;
        g.add_assign_scaled(&terms.gradient(block), T::one());
    }
    Ok(g.scale(T::one() / T::count(batch.len())))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    pub b_norm: f64,
    pub rank_a: usize,
    pub rank_ok: bool,
    /// Residual of the identity for this sample with its own preconditioner
    /// and the Looped error vector shared by both models.
    pub residual_wk: f64,
    pub residual_wq: f64,
}

#[derive(Clone, Debug)]
pub struct PreconditionerReport<T> {
    pub p_wk: Matrix<T>,
    pub p_wq: Matrix<T>,
    pub samples: Vec<SampleDiagnostics>,
    /// `‖vec ∇L₂ − P vec ∇L₁‖` with batch-mean gradients and averaged `P`,
    /// both gradients built from the Looped error vectors.
    pub batch_residual_wk: f64,
    pub batch_residual_wq: f64,
    /// Same, but `∇L₁` uses the Single model's own logits.
    pub own_logits_residual_wk: f64,
    pub own_logits_residual_wq: f64,
}

impl<T> PreconditionerReport<T> {
    pub fn all_rank_ok(&self) -> bool {
        self.samples.iter().all(|s| s.rank_ok)
    }

    pub fn max_sample_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.residual_wk.max(s.residual_wq)).fold(0.0, f64::max)
    }
}

/// `P = I + mean(P₂ P₁⁺)` for `W_K` and `W_Q`, plus residual diagnostics.
pub fn preconditioner<T: Scalar, S: Labeled>(
    params: &Params<T>,
    emap: &EmbeddingMap<T>,
    batch: &[S],
    loops: usize,
) -> Result<PreconditionerReport<T>> {
    if loops == 0 {
        return param_err("loop count T must be at least 1");
    }
    if batch.is_empty() {
        return param_err("empty batch");
    }
    let d = params.dim();
    let dd = d * d;
    let inv_n = T::one() / T::count(batch.len());
    let mut p_wk = Matrix::zeros(dd, dd);
    let mut p_wq = Matrix::zeros(dd, dd);
    let mut g2 = [vec![T::zero(); dd], vec![T::zero(); dd]];
    let mut g1_shared = [vec![T::zero(); dd], vec![T::zero(); dd]];
    let mut g1_own = [vec![T::zero(); dd], vec![T::zero(); dd]];
    let mut samples = Vec::with_capacity(batch.len());
    let blocks = [DirectBlock::Wk, DirectBlock::Wq];

    for s in batch {
        let looped = path_terms(params, emap, s.input(), s.target(), Arch::Looped(loops))?;
        let single = path_terms(params, emap, s.input(), s.target(), Arch::Single)?;
        let rank_a = looped.a[0].rank()?;
        let b_norm = norm(&looped.b[0]).to_f64_lossy();
        let rank_ok = b_norm > 1e-12 && rank_a == d;
        let mut residuals = [0.0; 2];
        for (k, &blk) in blocks.iter().enumerate() {
            let p1 = looped.factor(blk, 0);
            let mut p2 = Matrix::zeros(dd, d);
            for t in 1..loops {
                p2.add_assign_scaled(&looped.factor(blk, t), T::one());
            }
            let mut p = p2.matmul(&p1.pinv()?);
            for i in 0..dd {
                p[(i, i)] += T::one();
            }
            let v2 = looped.gradient(blk).vec();
            let v1 = single.gradient_with(blk, &looped.u).vec();
            residuals[k] = norm(&sub_vec(&v2, &p.matvec(&v1))).to_f64_lossy();
            let target = if k == 0 { &mut p_wk } else { &mut p_wq };
            target.add_assign_scaled(&p, inv_n);
            crate::linalg::axpy(&mut g2[k], inv_n, &v2);
            crate::linalg::axpy(&mut g1_shared[k], inv_n, &v1);
            crate::linalg::axpy(&mut g1_own[k], inv_n, &single.gradient(blk).vec());
        }
        samples.push(SampleDiagnostics { b_norm, rank_a, rank_ok, residual_wk: residuals[0], residual_wq: residuals[1] });
    }
    let resid = |p: &Matrix<T>, g2: &[T], g1: &[T]| norm(&sub_vec(g2, &p.matvec(g1))).to_f64_lossy();
    Ok(PreconditionerReport {
        batch_residual_wk: resid(&p_wk, &g2[0], &g1_shared[0]),
        batch_residual_wq: resid(&p_wq, &g2[1], &g1_shared[1]),
        own_logits_residual_wk: resid(&p_wk, &g2[0], &g1_own[0]),
        own_logits_residual_wq: resid(&p_wq, &g2[1], &g1_own[1]),
        p_wk,
        p_wq,
        samples,
    })
}
