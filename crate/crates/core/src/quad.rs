//! Gradient descent on the structured quadratic river-valley loss
//!
//! `L(θ_V, θ_R) = ½ θ_Vᵀ H θ_V − h_Rᵀ θ_R + θ_Rᵀ H_RV θ_V`
//!
//! and on a time-varying extension whose valley Hessian stays above a fixed
//! lower bound `H^B`. The cumulative force `C_K = η Σ_{k<K} H_RV θ_{V,k}` is
//! the push the valley coordinates exert on the river coordinates.

use num_traits::{Num, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, LabError, Result};
use crate::io::{fmt_num, CsvBuilder};
use crate::linalg::{gaussian_matrix, gaussian_vector, norm, random_orthogonal, Matrix, SymmetricEigen};
use crate::scalar::Scalar;

/// Parameter norm beyond which a simulation is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Valley eigenvalues with magnitude below this are treated as singular.
pub const SINGULAR_EIG: f64 = 1e-10;
/// Relative increment of the unforced force below which capacity counts as reached.
pub const CAPACITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadLandscape<T> {
    pub h_valley: Matrix<T>,
    /// `d_R × d_V`.
    pub h_rv: Matrix<T>,
    pub h_r: Vec<T>,
    pub theta_v0: Vec<T>,
    pub theta_r0: Vec<T>,
    pub eta: T,
}

impl<T: Scalar> QuadLandscape<T> {
    pub fn d_v(&self) -> usize {
        self.h_valley.rows()
    }

    pub fn d_r(&self) -> usize {
        self.h_r.len()
    }

    /// Shapes, symmetry and the step-size gate `η < 1/λ_max`.
    pub fn validate(&self) -> Result<()> {
        let (dv, dr) = (self.d_v(), self.d_r());
        if !self.h_valley.is_square() || dv == 0 {
            return Err(LabError::Shape("valley Hessian must be square and non-empty".into()));
        }
        if self.h_rv.shape() != (dr, dv) {
            return Err(LabError::Shape(format!("coupling is {:?}, expected {dr}x{dv}", self.h_rv.shape())));
        }
        if self.theta_v0.len() != dv || self.theta_r0.len() != dr {
            return Err(LabError::Shape("initial parameter lengths".into()));
        }
        let asym = (&self.h_valley - &self.h_valley.transpose()).max_abs();
        if asym > T::lit(1e-12) * self.h_valley.max_abs().max(T::one()) {
            return param_err("valley Hessian is not symmetric");
        }
        if self.eta < T::zero() {
            return param_err("step size must be non-negative");
        }
        let top = SymmetricEigen::new(&self.h_valley)?.values[0];
        if top > T::zero() && self.eta * top >= T::one() {
            return param_err(format!(
                "step size {} violates eta < 1/lambda_max = {}",
                self.eta,
                T::one() / top
            ));
        }
        Ok(())
    }

    /// Operator norm of the coupling.
    pub fn h_bar(&self) -> Result<T> {
        self.h_rv.operator_norm()
    }

    pub fn alpha_bar(&self) -> T {
        norm(&self.theta_v0)
    }
}

pub fn quad_loss<T: Scalar>(l: &QuadLandscape<T>, theta_v: &[T], theta_r: &[T]) -> Result<T> {
    if theta_v.len() != l.d_v() || theta_r.len() != l.d_r() {
        return Err(LabError::Shape("parameter lengths".into()));
    }
    let hv = l.h_valley.matvec(theta_v);
    let cv = l.h_rv.matvec(theta_v);
    Ok(T::lit(0.5) * crate::linalg::dot(theta_v, &hv) - crate::linalg::dot(&l.h_r, theta_r) + crate::linalg::dot(theta_r, &cv))
}

/// `(∂L/∂θ_V, ∂L/∂θ_R) = (H θ_V + H_RVᵀ θ_R, H_RV θ_V − h_R)`.
pub fn quad_grad<T: Scalar>(l: &QuadLandscape<T>, theta_v: &[T], theta_r: &[T]) -> (Vec<T>, Vec<T>) {
    let mut gv = l.h_valley.matvec(theta_v);
    for (g, c) in gv.iter_mut().zip(l.h_rv.t_matvec(theta_r)) {
        *g += c;
    }
    let gr = l.h_rv.matvec(theta_v).into_iter().zip(&l.h_r).map(|(a, &b)| a - b).collect();
    (gv, gr)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    /// `θ_{V,0} … θ_{V,K}`.
    pub theta_v: Vec<Vec<T>>,
    pub theta_r: Vec<Vec<T>>,
    pub losses: Vec<T>,
    /// `C_0 = 0, …, C_K`.
    pub force: Vec<Vec<T>>,
    /// Unforced closed form `Ĉ_0 … Ĉ_K`.
    pub closed_form: Vec<Vec<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn steps(&self) -> usize {
        self.losses.len() - 1
    }
}

/// Exact iteration of both GD updates for `k` steps.
pub fn simulate<T: Scalar>(l: &QuadLandscape<T>, k_steps: usize) -> Result<Trajectory<T>> {
    l.validate()?;
    if k_steps == 0 {
        return param_err("K must be at least 1");
    }
    let unforced = UnforcedForce::new(l)?;
    let mut tv = l.theta_v0.clone();
    let mut trr = l.theta_r0.clone();
    let mut force = vec![T::zero(); l.d_r()];
    let mut out = Trajectory {
        theta_v: vec![tv.clone()],
        theta_r: vec![trr.clone()],
        losses: vec![quad_loss(l, &tv, &trr)?],
        force: vec![force.clone()],
        closed_form: vec![unforced.at(0)],
    };
    for k in 1..=k_steps {
        let push = l.h_rv.matvec(&tv);
        crate::linalg::axpy(&mut force, l.eta, &push);
        let (gv, gr) = quad_grad(l, &tv, &trr);
        crate::linalg::axpy(&mut tv, -l.eta, &gv);
        crate::linalg::axpy(&mut trr, -l.eta, &gr);
        let size = norm(&tv).max(norm(&trr)).to_f64_lossy();
        if !(size <= DIVERGENCE_NORM) {
            return Err(LabError::Divergence { step: k, norm: size });
        }
        out.losses.push(quad_loss(l, &tv, &trr)?);
        out.theta_v.push(tv.clone());
        out.theta_r.push(trr.clone());
        out.force.push(force.clone());
        out.closed_form.push(unforced.at(k));
    }
    Ok(out)
}

/// Spectral form of the unforced force `Ĉ_K = η Σ_{k<K} H_RV Φᵏ θ_{V,0}`, `Φ = I − ηH`.
#[derive(Clone, Debug)]
pub struct UnforcedForce<T> {
    /// `(v_iᵀθ_{V,0}) H_RV v_i` per eigenpair.
    coeffs: Vec<Vec<T>>,
    lambdas: Vec<T>,
    eta: T,
}

impl<T: Scalar> UnforcedForce<T> {
    pub fn new(l: &QuadLandscape<T>) -> Result<Self> {
        let eig = SymmetricEigen::new(&l.h_valley)?;
        let coeffs = (0..eig.values.len())
            .map(|i| {
                let v = eig.vectors.column(i);
                let proj = crate::linalg::dot(&v, &l.theta_v0);
                l.h_rv.matvec(&v).into_iter().map(|x| x * proj).collect()
            })
            .collect();
        Ok(Self { coeffs, lambdas: eig.values, eta: l.eta })
    }

    /// `Σ_i (v_iᵀθ₀/λ_i) H_RV v_i (1 − ρ_iᴷ)`, with the `Kη` limit for singular directions.
    pub fn at(&self, k: usize) -> Vec<T> {
        let dr = self.coeffs.first().map_or(0, Vec::len);
        let mut out = vec![T::zero(); dr];
        let kk = i32::try_from(k).unwrap_or(i32::MAX);
        for (c, &lam) in self.coeffs.iter().zip(&self.lambdas) {
            let w = if lam.abs() < T::lit(SINGULAR_EIG) {
                T::count(k) * self.eta
            } else {
                let rho = T::one() - self.eta * lam;
                (T::one() - rho.powi(kk)) / lam
            };
            crate::linalg::axpy(&mut out, w, c);
        }
        out
    }
}

pub fn unforced_closed_form<T: Scalar>(l: &QuadLandscape<T>, k: usize) -> Result<Vec<T>> {
    Ok(UnforcedForce::new(l)?.at(k))
}

/// Direct summation of `η Σ_{k<K} H_RV Φᵏ θ_{V,0}`.
pub fn unforced_iterated<T: Scalar>(l: &QuadLandscape<T>, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); l.d_r()];
    let mut x = l.theta_v0.clone();
    for _ in 0..k {
        crate::linalg::axpy(&mut out, l.eta, &l.h_rv.matvec(&x));
        let hx = l.h_valley.matvec(&x);
        crate::linalg::axpy(&mut x, -l.eta, &hx);
    }
    out
}

/// `(Σ_{|λ|≤τ} 1/|λ|, Σ_{|λ|>τ} 1/|λ|)` in any signed number type, so the
/// split can be evaluated exactly over the rationals.
pub fn inverse_sum_split<N: Num + Signed + PartialOrd + Clone>(eigs: &[N], tau: &N) -> (N, N) {
    let mut dom = N::zero();
    let mut res = N::zero();
    for l in eigs {
        let a = l.abs();
        let inv = N::one() / a.clone();
        if a <= *tau {
            dom = dom + inv;
        } else {
            res = res + inv;
        }
    }
    (dom, res)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub total: f64,
    pub dominant: f64,
    pub residual: f64,
    pub h_bar: f64,
    pub alpha_bar: f64,
    /// Some valley eigenvalue is singular; `total` is infinite.
    pub singular: bool,
}

/// `√d_V · h̄ · ᾱ · Σ 1/|λ_i|`, split at `|λ_i| ≤ τ`.
pub fn capacity_from_spectrum(eigs: &[f64], h_bar: f64, alpha_bar: f64, tau: f64) -> Capacity {
    let singular = eigs.iter().any(|l| l.abs() < SINGULAR_EIG);
    let scale = (eigs.len() as f64).sqrt() * h_bar * alpha_bar;
    if singular {
        return Capacity { total: f64::INFINITY, dominant: f64::INFINITY, residual: f64::NAN, h_bar, alpha_bar, singular };
    }
    let (dom, res) = inverse_sum_split(eigs, &tau);
    Capacity { total: scale * (dom + res), dominant: scale * dom, residual: scale * res, h_bar, alpha_bar, singular }
}

pub fn capacity_bound<T: Scalar>(l: &QuadLandscape<T>, tau: f64) -> Result<Capacity> {
    let eigs: Vec<f64> = SymmetricEigen::new(&l.h_valley)?.values.iter().map(|x| x.to_f64_lossy()).collect();
    Ok(capacity_from_spectrum(&eigs, l.h_bar()?.to_f64_lossy(), l.alpha_bar().to_f64_lossy(), tau))
}

/// How the coupling matrix is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingMode {
    /// Gaussian, rescaled to operator norm `h̄`.
    Random,
    /// `H_RV = −h̄ ĥ_R uᵀ` with `u` the direction of `θ_{V,0}`, so the valley push
    /// points along the river descent direction.
    Aligned,
}

/// Serialisable instance description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub d_v: usize,
    pub d_r: usize,
    /// Valley eigenvalues; `H = Q diag(λ) Qᵀ` with a seeded random orthogonal `Q`.
    pub valley_spectrum: Vec<f64>,
    pub coupling_norm: f64,
    pub river_gradient: Vec<f64>,
    pub eta: f64,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub init_norm: f64,
    #[serde(default = "default_mode")]
    pub coupling: CouplingMode,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_mode() -> CouplingMode {
    CouplingMode::Random
}

impl InstanceSpec {
    pub fn build<T: Scalar>(&self) -> Result<QuadLandscape<T>> {
        if self.valley_spectrum.len() != self.d_v || self.river_gradient.len() != self.d_r {
            return Err(LabError::Shape("instance spec lengths disagree with d_v / d_r".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let q = random_orthogonal::<T>(self.d_v, &mut rng);
        let lam: Vec<T> = self.valley_spectrum.iter().map(|&x| T::lit(x)).collect();
        let h_valley = q.matmul(&Matrix::diag(&lam)).matmul_t(&q).symmetrized();
        let theta_v0 = scaled_direction(gaussian_vector(self.d_v, &mut rng), T::lit(self.init_norm));
        let h_r: Vec<T> = self.river_gradient.iter().map(|&x| T::lit(x)).collect();
        let h_rv = build_coupling(self.coupling, self.coupling_norm, &h_r, &theta_v0, &mut rng)?;
        let l = QuadLandscape { h_valley, h_rv, theta_r0: vec![T::zero(); self.d_r], h_r, theta_v0, eta: T::lit(self.eta) };
        l.validate()?;
        Ok(l)
    }

    /// Random instance for bound sweeps: `d_V ∈ [2,16]`, `d_R ∈ [1,4]`,
    /// eigenvalues `U[0.01, 2]`, coupling norm `U[1e-3, 0.01]`,
    /// `η = 0.9/λ_max`. The joint Hessian is indefinite, so GD with larger
    /// couplings diverges within 10⁴ steps on some draws.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_v = rng.random_range(2..=16);
        let d_r = rng.random_range(1..=4);
        let valley_spectrum: Vec<f64> = (0..d_v).map(|_| rng.random_range(0.01..2.0)).collect();
        let top = valley_spectrum.iter().copied().fold(0.0, f64::max);
        Self {
            d_v,
            d_r,
            coupling_norm: rng.random_range(1e-3..0.01),
            river_gradient: (0..d_r).map(|_| rng.random_range(-1.0..1.0)).collect(),
            eta: 0.9 / top,
            init_norm: rng.random_range(0.5..2.0),
            coupling: CouplingMode::Random,
            seed: rng.random(),
            valley_spectrum,
        }
    }
}

fn scaled_direction<T: Scalar>(v: Vec<T>, len: T) -> Vec<T> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n * len).collect()
}

fn build_coupling<T: Scalar>(mode: CouplingMode, h_bar: f64, h_r: &[T], theta_v0: &[T], rng: &mut impl Rng) -> Result<Matrix<T>> {
    let (dr, dv) = (h_r.len(), theta_v0.len());
    if h_bar == 0.0 {
        return Ok(Matrix::zeros(dr, dv));
    }
    match mode {
        CouplingMode::Random => {
            let g = gaussian_matrix::<T>(dr, dv, rng);
            let n = g.operator_norm()?;
            Ok(g.scale(T::lit(h_bar) / n))
        }
        CouplingMode::Aligned => {
            if norm(h_r) == T::zero() {
                return param_err("aligned coupling needs a non-zero river gradient");
            }
            let hr = scaled_direction(h_r.to_vec(), T::one());
            let u = scaled_direction(theta_v0.to_vec(), T::one());
            Ok(Matrix::outer(&hr, &u).scale(-T::lit(h_bar)))
        }
    }
}

/// Trajectory export: `k,loss,force_norm,closed_form_norm,bound`.
pub fn trajectory_csv<T: Scalar>(traj: &Trajectory<T>, bound: f64, stride: usize) -> String {
    let mut b = CsvBuilder::new(&["k", "loss", "force_norm", "closed_form_norm", "bound"]);
    let stride = stride.max(1);
    let last = traj.steps();
    for k in (0..=last).filter(|k| k % stride == 0 || *k == last) {
        b.row([
            k.to_string(),
            fmt_num(traj.losses[k].to_f64_lossy()),
            fmt_num(norm(&traj.force[k]).to_f64_lossy()),
            fmt_num(norm(&traj.closed_form[k]).to_f64_lossy()),
            fmt_num(bound),
        ]);
    }
    b.finish()
}

/// Outcome of a bound check over every `K ≤ k_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub capacity: f64,
    pub max_closed_form_norm: f64,
    pub max_force_norm: f64,
    /// `‖Ĉ_K‖ ≤ 𝒞` for all checked `K`.
    pub holds: bool,
    pub singular: bool,
}

/// Evaluates `‖Ĉ_K‖` for every `K ≤ k_max` against the capacity.
pub fn check_capacity_bound<T: Scalar>(l: &QuadLandscape<T>, k_max: usize, tau: f64) -> Result<BoundCheck> {
    let cap = capacity_bound(l, tau)?;
    let uf = UnforcedForce::new(l)?;
    let mut max_cf = 0.0f64;
    for k in 0..=k_max {
        max_cf = max_cf.max(norm(&uf.at(k)).to_f64_lossy());
    }
    let max_force = match simulate(l, k_max) {
        Ok(t) => t.force.iter().map(|c| norm(c).to_f64_lossy()).fold(0.0, f64::max),
        Err(LabError::Divergence { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(BoundCheck {
        capacity: cap.total,
        max_closed_form_norm: max_cf,
        max_force_norm: max_force,
        holds: cap.singular || max_cf <= cap.total,
        singular: cap.singular,
    })
}

/// Builds a landscape pair that differs only in valley spectrum: shared
/// orthogonal basis, initial point, river gradient and coupling norm.
/// The spectra must satisfy the dominance condition at `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub spectrum_single: Vec<f64>,
    pub spectrum_looped: Vec<f64>,
    pub tau: f64,
    pub coupling_norm: f64,
    pub init_norm: f64,
    pub d_r: usize,
    pub eta: f64,
    pub seed: u64,
    pub coupling: CouplingMode,
}

impl PairSpec {
    /// Single `{0.2, 0.3, 1.0, 1.2, 1.5, 2.0}` vs Looped `{0.05, 0.1, 0.15, 0.2, 1.0, 1.5}`.
    pub fn reference(seed: u64, coupling_norm: f64) -> Self {
        Self {
            spectrum_single: vec![0.2, 0.3, 1.0, 1.2, 1.5, 2.0],
            spectrum_looped: vec![0.05, 0.1, 0.15, 0.2, 1.0, 1.5],
            tau: 0.5,
            coupling_norm,
            init_norm: 1.0,
            d_r: 3,
            eta: 0.1,
            seed,
            coupling: CouplingMode::Aligned,
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<(QuadLandscape<T>, QuadLandscape<T>)> {
        let a1 = crate::hessian::dominance_check(&self.spectrum_single, &self.spectrum_looped, self.tau)?;
        if !(a1.m2 > a1.m1 && a1.dominance) {
            return param_err(format!(
                "spectra do not satisfy dominance at tau = {}: m1 = {}, m2 = {}, dominance = {}",
                self.tau, a1.m1, a1.m2, a1.dominance
            ));
        }
        let dv = self.spectrum_single.len();
        if self.spectrum_looped.len() != dv {
            return Err(LabError::Shape("paired spectra must have equal length".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let q = random_orthogonal::<T>(dv, &mut rng);
        let theta_v0 = scaled_direction(gaussian_vector(dv, &mut rng), T::lit(self.init_norm));
        let h_r: Vec<T> = gaussian_vector(self.d_r, &mut rng);
        let h_rv = build_coupling(self.coupling, self.coupling_norm, &h_r, &theta_v0, &mut rng)?;
        let make = |spec: &[f64]| {
            let lam: Vec<T> = spec.iter().map(|&x| T::lit(x)).collect();
            let l = QuadLandscape {
                h_valley: q.matmul(&Matrix::diag(&lam)).matmul_t(&q).symmetrized(),
                h_rv: h_rv.clone(),
                h_r: h_r.clone(),
                theta_v0: theta_v0.clone(),
                theta_r0: vec![T::zero(); self.d_r],
                eta: T::lit(self.eta),
            };
            l.validate().map(|_| l)
        };
        Ok((make(&self.spectrum_single)?, make(&self.spectrum_looped)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub capacity_single: Capacity,
    pub capacity_looped: Capacity,
    pub force_norm_single: f64,
    pub force_norm_looped: f64,
    pub loss_single: f64,
    pub loss_looped: f64,
    pub k: usize,
    pub capacity_reached: bool,
}

impl ComparisonReport {
    pub fn dominant_ratio(&self) -> f64 {
        self.capacity_looped.dominant / self.capacity_single.dominant
    }

    pub fn capacity_ratio(&self) -> f64 {
        self.capacity_looped.total / self.capacity_single.total
    }
}

/// Smallest `K ≤ k_max` at which `‖Ĉ_K − Ĉ_{K−1}‖ ≤ tol·‖Ĉ_K‖`.
pub fn capacity_horizon<T: Scalar>(l: &QuadLandscape<T>, k_max: usize) -> Result<Option<usize>> {
    let uf = UnforcedForce::new(l)?;
    let mut prev = uf.at(0);
    for k in 1..=k_max {
        let cur = uf.at(k);
        let inc = norm(&crate::linalg::sub_vec(&cur, &prev)).to_f64_lossy();
        let size = norm(&cur).to_f64_lossy();
        if size > 0.0 && inc <= CAPACITY_TOL * size {
            return Ok(Some(k));
        }
        prev = cur;
    }
    Ok(None)
}

/// Runs both landscapes to a common horizon where both have reached capacity
/// (or `k_max`), then compares losses and force magnitudes.
pub fn compare_models<T: Scalar>(single: &QuadLandscape<T>, looped: &QuadLandscape<T>, k_max: usize, tau: f64) -> Result<ComparisonReport> {
    if single.theta_r0 != looped.theta_r0 || single.h_r != looped.h_r {
        return param_err("compared landscapes must share the river gradient and river initialisation");
    }
    let same_init = (norm(&single.theta_v0) - norm(&looped.theta_v0)).abs().to_f64_lossy() <= 1e-12;
    let same_coupling = (single.h_bar()? - looped.h_bar()?).abs().to_f64_lossy() <= 1e-12;
    if !same_init || !same_coupling {
        return param_err("compared landscapes must share the initial valley norm and coupling norm");
    }
    let h1 = capacity_horizon(single, k_max)?;
    let h2 = capacity_horizon(looped, k_max)?;
    let (k, reached) = match (h1, h2) {
        (Some(a), Some(b)) => (a.max(b), true),
        _ => (k_max, false),
    };
    if !reached {
        log::warn!("capacity not reached within {k_max} steps");
    }
    let t1 = simulate(single, k)?;
    let t2 = simulate(looped, k)?;
    Ok(ComparisonReport {
        capacity_single: capacity_bound(single, tau)?,
        capacity_looped: capacity_bound(looped, tau)?,
        force_norm_single: norm(&t1.force[k]).to_f64_lossy(),
        force_norm_looped: norm(&t2.force[k]).to_f64_lossy(),
        loss_single: t1.losses[k].to_f64_lossy(),
        loss_looped: t2.losses[k].to_f64_lossy(),
        k,
        capacity_reached: reached,
    })
}

/// Step-indexed landscape whose valley Hessian never drops below `lower_bound`.
pub trait LandscapeFamily<T: Scalar> {
    fn valley_hessian(&self, k: usize) -> Matrix<T>;
    fn coupling(&self, k: usize) -> Matrix<T>;
    fn river_gradient(&self, k: usize) -> Vec<T>;
    fn lower_bound(&self) -> &Matrix<T>;
    /// Uniform bound on `‖H_RV(k)‖`.
    fn coupling_bound(&self) -> T;
}

/// Scalar schedule with values in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    Constant(f64),
    /// `lo + (hi − lo)(1 + sin(2πk/period))/2`.
    Periodic { lo: f64, hi: f64, period: usize },
}

impl Schedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            Schedule::Constant(s) => s,
            Schedule::Periodic { lo, hi, period } => {
                let phase = 2.0 * std::f64::consts::PI * k as f64 / period.max(1) as f64;
                lo + (hi - lo) * 0.5 * (1.0 + phase.sin())
            }
        }
    }

    fn in_unit_range(&self) -> bool {
        match *self {
            Schedule::Constant(s) => (0.0..=1.0).contains(&s),
            Schedule::Periodic { lo, hi, .. } => (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi),
        }
    }
}

/// `H(k) = H^B + s(k) P` with `P ⪰ 0`; `H_RV(k) = c(k) H_RV`; constant `h_R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFamily<T> {
    pub h_b: Matrix<T>,
    pub p: Matrix<T>,
    pub s: Schedule,
    pub h_rv: Matrix<T>,
    pub c: Schedule,
    pub h_r: Vec<T>,
}

impl<T: Scalar> AffineFamily<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.s.in_unit_range() || !self.c.in_unit_range() {
            return param_err("schedules must stay within [0, 1]");
        }
        let pmin = *SymmetricEigen::new(&self.p)?.values.last().unwrap_or(&T::zero());
        if pmin < T::lit(-1e-12) {
            return param_err("perturbation P must be positive semidefinite");
        }
        Ok(())
    }
}

impl<T: Scalar> LandscapeFamily<T> for AffineFamily<T> {
    fn valley_hessian(&self, k: usize) -> Matrix<T> {
        let mut h = self.h_b.clone();
        h.add_assign_scaled(&self.p, T::lit(self.s.at(k)));
        h
    }

    fn coupling(&self, k: usize) -> Matrix<T> {
        self.h_rv.scale(T::lit(self.c.at(k)))
    }

    fn river_gradient(&self, _k: usize) -> Vec<T> {
        self.h_r.clone()
    }

    fn lower_bound(&self) -> &Matrix<T> {
        &self.h_b
    }

    fn coupling_bound(&self) -> T {
        self.h_rv.operator_norm().unwrap_or(T::infinity())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralOutcome<T> {
    pub trajectory: Trajectory<T>,
    /// `√d_V · h̄_gen · ᾱ · Σ 1/|λ_i^B|`.
    pub capacity_gen: f64,
    /// Largest `‖Ĉ_{K,gen}‖` over the run (unforced product form).
    pub max_unforced_norm: f64,
    pub max_force_norm: f64,
    pub bound_holds: bool,
}

/// GD with time-varying matrices. Checks `H(k) ⪰ H^B` and `η λ_max(H(k)) < 1` at
/// every step; the unforced force `η Σ_k H_RV(k) Π_{j<k}(I − ηH(j)) θ_{V,0}` is
/// tracked alongside the forced one and compared against `𝒞_gen`.
pub fn simulate_general<T: Scalar, F: LandscapeFamily<T>>(
    family: &F,
    theta_v0: &[T],
    theta_r0: &[T],
    eta: T,
    k_steps: usize,
) -> Result<GeneralOutcome<T>> {
    if k_steps == 0 {
        return param_err("K must be at least 1");
    }
    let hb = family.lower_bound();
    let dv = hb.rows();
    if theta_v0.len() != dv {
        return Err(LabError::Shape("initial valley parameter length".into()));
    }
    let hb_eigs: Vec<f64> = SymmetricEigen::new(hb)?.values.iter().map(|x| x.to_f64_lossy()).collect();
    let cap = capacity_from_spectrum(&hb_eigs, family.coupling_bound().to_f64_lossy(), norm(theta_v0).to_f64_lossy(), f64::INFINITY);
    let snapshot = |k: usize| QuadLandscape {
        h_valley: family.valley_hessian(k),
        h_rv: family.coupling(k),
        h_r: family.river_gradient(k),
        theta_v0: theta_v0.to_vec(),
        theta_r0: theta_r0.to_vec(),
        eta,
    };
    let mut tv = theta_v0.to_vec();
    let mut trr = theta_r0.to_vec();
    let mut unforced_state = theta_v0.to_vec();
    let first = snapshot(0);
    let mut force = vec![T::zero(); first.d_r()];
    let mut unforced = vec![T::zero(); first.d_r()];
    let mut traj = Trajectory {
        theta_v: vec![tv.clone()],
        theta_r: vec![trr.clone()],
        losses: vec![quad_loss(&first, &tv, &trr)?],
        force: vec![force.clone()],
        closed_form: vec![unforced.clone()],
    };
    let mut max_unforced = 0.0f64;
    let mut max_force = 0.0f64;
    for k in 0..k_steps {
        let l = snapshot(k);
        let gap = SymmetricEigen::new(&(&l.h_valley - hb))?;
        if *gap.values.last().expect("non-empty") < T::lit(-1e-12) {
            return Err(LabError::Precondition { step: k, reason: "valley Hessian below the lower bound".into() });
        }
        let top = SymmetricEigen::new(&l.h_valley)?.values[0];
        if eta * top >= T::one() {
            return Err(LabError::Precondition { step: k, reason: "step size exceeds 1/lambda_max".into() });
        }
        crate::linalg::axpy(&mut force, eta, &l.h_rv.matvec(&tv));
        crate::linalg::axpy(&mut unforced, eta, &l.h_rv.matvec(&unforced_state));
        let hu = l.h_valley.matvec(&unforced_state);
        crate::linalg::axpy(&mut unforced_state, -eta, &hu);
        let (gv, gr) = quad_grad(&l, &tv, &trr);
        crate::linalg::axpy(&mut tv, -eta, &gv);
        crate::linalg::axpy(&mut trr, -eta, &gr);
        let size = norm(&tv).max(norm(&trr)).to_f64_lossy();
        if !(size <= DIVERGENCE_NORM) {
            return Err(LabError::Divergence { step: k + 1, norm: size });
        }
        max_unforced = max_unforced.max(norm(&unforced).to_f64_lossy());
        max_force = max_force.max(norm(&force).to_f64_lossy());
        traj.losses.push(quad_loss(&snapshot(k + 1), &tv, &trr)?);
        traj.theta_v.push(tv.clone());
        traj.theta_r.push(trr.clone());
        traj.force.push(force.clone());
        traj.closed_form.push(unforced.clone());
    }
    Ok(GeneralOutcome {
        trajectory: traj,
        capacity_gen: cap.total,
        max_unforced_norm: max_unforced,
        max_force_norm: max_force,
        bound_holds: cap.singular || max_unforced <= cap.total,
    })
}

/// Random affine-family instance: `H^B` from `U[0.05, 1]` eigenvalues, a random
/// PSD `P` of spectral norm ≤ 0.5, coupling norm `U[1e-3, 0.01]`,
/// `η = 0.9/λ_max(H^B + P)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralSpec {
    pub d_v: usize,
    pub d_r: usize,
    pub s: Schedule,
    pub c: Schedule,
    pub coupling_norm: f64,
    pub seed: u64,
}

impl GeneralSpec {
    pub fn random(seed: u64, s: Schedule) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            d_v: rng.random_range(2..=12),
            d_r: rng.random_range(1..=4),
            s,
            c: Schedule::Periodic { lo: 0.5, hi: 1.0, period: rng.random_range(5..50) },
            coupling_norm: rng.random_range(1e-3..0.01),
            seed: rng.random(),
        }
    }

    /// Family, initial valley point, step size.
    pub fn build<T: Scalar>(&self) -> Result<(AffineFamily<T>, Vec<T>, T)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let q = random_orthogonal::<T>(self.d_v, &mut rng);
        let lam: Vec<T> = (0..self.d_v).map(|_| T::lit(rng.random_range(0.05..1.0))).collect();
        let h_b = q.matmul(&Matrix::diag(&lam)).matmul_t(&q).symmetrized();
        let g = gaussian_matrix::<T>(self.d_v, self.d_v, &mut rng);
        let p = g.matmul_t(&g);
        let p = p.scale(T::lit(0.5) / p.operator_norm()?).symmetrized();
        let theta_v0 = scaled_direction(gaussian_vector(self.d_v, &mut rng), T::one());
        let h_r = gaussian_vector(self.d_r, &mut rng);
        let h_rv = build_coupling(CouplingMode::Random, self.coupling_norm, &h_r, &theta_v0, &mut rng)?;
        let top = SymmetricEigen::new(&(&h_b + &p))?.values[0];
        let eta = T::lit(0.9) / top;
        let fam = AffineFamily { h_b, p, s: self.s, h_rv, c: self.c, h_r };
        fam.validate()?;
        Ok((fam, theta_v0, eta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn diag_instance() -> QuadLandscape<f64> {
        QuadLandscape {
            h_valley: Matrix::diag(&[0.5, 2.0]),
            h_rv: Matrix::from_rows(&[vec![0.3, -0.1]]).unwrap(),
            h_r: vec![0.7],
            theta_v0: vec![1.0, -2.0],
            theta_r0: vec![0.25],
            eta: 0.2,
        }
    }

    #[test]
    fn loss_basics() {
        let l = diag_instance();
        assert_eq!(quad_loss(&l, &[0.0, 0.0], &[0.0]).unwrap(), 0.0);
        let mut pure = l.clone();
        pure.h_rv = Matrix::zeros(1, 2);
        pure.h_r = vec![0.0];
        assert!((quad_loss(&pure, &[1.0, 1.0], &[3.0]).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let l = diag_instance();
        let (tv, tr) = (vec![0.4, -0.3], vec![1.1]);
        let (gv, gr) = quad_grad(&l, &tv, &tr);
        let h = 1e-6;
        for i in 0..2 {
            let mut p = tv.clone();
            let mut m = tv.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (quad_loss(&l, &p, &tr).unwrap() - quad_loss(&l, &m, &tr).unwrap()) / (2.0 * h);
            assert!((fd - gv[i]).abs() < 1e-9);
        }
        let fd = (quad_loss(&l, &tv, &[1.1 + h]).unwrap() - quad_loss(&l, &tv, &[1.1 - h]).unwrap()) / (2.0 * h);
        assert!((fd - gr[0]).abs() < 1e-9);
    }

    #[test]
    fn hand_iterated_three_steps() {
        let l = diag_instance();
        let t = simulate(&l, 3).unwrap();
        let (mut v, mut r) = ([1.0f64, -2.0], 0.25f64);
        let mut c = 0.0;
        for _ in 0..3 {
            c += 0.2 * (0.3 * v[0] - 0.1 * v[1]);
            let nv = [v[0] - 0.2 * (0.5 * v[0] + 0.3 * r), v[1] - 0.2 * (2.0 * v[1] - 0.1 * r)];
            r -= 0.2 * (0.3 * v[0] - 0.1 * v[1] - 0.7);
            v = nv;
        }
        assert!((t.theta_v[3][0] - v[0]).abs() < 1e-12);
        assert!((t.theta_v[3][1] - v[1]).abs() < 1e-12);
        assert!((t.theta_r[3][0] - r).abs() < 1e-12);
        assert!((t.force[3][0] - c).abs() < 1e-12);
    }

    #[test]
    fn decoupled_river_drifts_linearly() {
        let mut l = diag_instance();
        l.h_rv = Matrix::zeros(1, 2);
        let t = simulate(&l, 50).unwrap();
        for k in 1..=50 {
            assert!((t.theta_r[k][0] - (0.25 + k as f64 * 0.2 * 0.7)).abs() < 1e-12);
            // Valley part shrinks, river part drops by η‖h_R‖² per step.
            let river = |j: usize| -0.7 * t.theta_r[j][0];
            assert!((river(k) - river(k - 1) + 0.2 * 0.49).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_step_freezes() {
        let mut l = diag_instance();
        l.eta = 0.0;
        let t = simulate(&l, 5).unwrap();
        assert!(t.theta_v.iter().all(|v| v == &l.theta_v0));
        assert!(t.theta_r.iter().all(|v| v == &l.theta_r0));
    }

    #[test]
    fn step_gate_rejects_large_eta() {
        let mut l = diag_instance();
        l.eta = 0.5;
        assert!(simulate(&l, 1).is_err());
    }

    #[test]
    fn closed_form_limits() {
        let l = diag_instance();
        assert_eq!(unforced_closed_form(&l, 0).unwrap(), vec![0.0]);
        // K → ∞: Σ (v_iᵀθ₀/λ_i) H_RV v_i = H_RV H⁻¹ θ₀.
        let lim = 0.3 * 1.0 / 0.5 + (-0.1) * (-2.0) / 2.0;
        assert!((unforced_closed_form(&l, 100_000).unwrap()[0] - lim).abs() < 1e-12);
    }

    #[test]
    fn singular_direction_uses_linear_limit() {
        let mut l = diag_instance();
        l.h_valley = Matrix::diag(&[0.0, 2.0]);
        let k = 40;
        let cf = unforced_closed_form(&l, k).unwrap();
        let it = unforced_iterated(&l, k);
        assert!((cf[0] - it[0]).abs() < 1e-12);
        assert!(capacity_bound(&l, 0.5).unwrap().singular);
    }

    #[test]
    fn capacity_unit_case_and_exact_dominant_ratio() {
        let c = capacity_from_spectrum(&[1.0], 1.0, 1.0, 0.5);
        assert_eq!(c.total, 1.0);
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let tau = r(1, 2);
        let (s_dom, _) = inverse_sum_split(&[r(1, 5), r(3, 10)], &tau);
        let (l_dom, _) = inverse_sum_split(&[r(1, 20), r(1, 10), r(3, 20), r(1, 5)], &tau);
        assert_eq!(s_dom, r(25, 3));
        assert_eq!(l_dom, r(125, 3));
        assert_eq!(l_dom / s_dom, r(5, 1));
    }

    #[test]
    fn identical_landscapes_compare_equal() {
        let (a, _) = PairSpec::reference(0, 0.05).build::<f64>().unwrap();
        let rep = compare_models(&a, &a, 20_000, 0.5).unwrap();
        assert_eq!(rep.loss_single, rep.loss_looped);
        assert_eq!(rep.force_norm_single, rep.force_norm_looped);
    }

    #[test]
    fn pair_builder_rejects_non_dominant_spectra() {
        let mut p = PairSpec::reference(0, 0.05);
        std::mem::swap(&mut p.spectrum_single, &mut p.spectrum_looped);
        assert!(p.build::<f64>().is_err());
    }

    #[test]
    fn constant_family_reproduces_quadratic_simulator() {
        let spec = GeneralSpec { s: Schedule::Constant(0.0), c: Schedule::Constant(1.0), ..GeneralSpec::random(4, Schedule::Constant(0.0)) };
        let (fam, tv0, eta) = spec.build::<f64>().unwrap();
        let l = QuadLandscape {
            h_valley: fam.h_b.clone(),
            h_rv: fam.h_rv.clone(),
            h_r: fam.h_r.clone(),
            theta_v0: tv0.clone(),
            theta_r0: vec![0.0; fam.h_r.len()],
            eta,
        };
        let q = simulate(&l, 300).unwrap();
        let g = simulate_general(&fam, &tv0, &l.theta_r0, eta, 300).unwrap();
        for k in 0..=300 {
            for (a, b) in q.theta_v[k].iter().zip(&g.trajectory.theta_v[k]) {
                assert!((a - b).abs() <= 1e-12);
            }
            for (a, b) in q.force[k].iter().zip(&g.trajectory.force[k]) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn loewner_violation_is_reported_with_step() {
        let (mut fam, tv0, eta) = GeneralSpec::random(2, Schedule::Constant(0.5)).build::<f64>().unwrap();
        fam.p = fam.p.scale(-1.0);
        let err = simulate_general(&fam, &tv0, &vec![0.0; fam.h_r.len()], eta, 10).unwrap_err();
        assert!(matches!(err, LabError::Precondition { step: 0, .. }), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn running_sum_identity(seed in any::<u64>()) {
            let l = InstanceSpec::random(seed).build::<f64>().unwrap();
            let t = simulate(&l, 200).unwrap();
            for k in 1..=200 {
                let inc = l.h_rv.matvec(&t.theta_v[k - 1]);
                for ((a, b), c) in t.force[k].iter().zip(&t.force[k - 1]).zip(&inc) {
                    prop_assert!((a - b - l.eta * c).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }

        #[test]
        fn closed_form_matches_iteration(seed in any::<u64>(), k in 0usize..3000) {
            let l = InstanceSpec::random(seed).build::<f64>().unwrap();
            let cf = unforced_closed_form(&l, k).unwrap();
            let it = unforced_iterated(&l, k);
            let scale = norm(&it).max(1e-300);
            prop_assert!(norm(&crate::linalg::sub_vec(&cf, &it)) <= 1e-10 * scale.max(1e-3));
        }
    }
}
