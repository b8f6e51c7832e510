//! Estimators for the trace-regression model.
//!
//! * [`solve_convex`]: monotone accelerated proximal gradient (MFISTA with
//!   restart) on `(1/n)‖y − 𝔛(B)‖² + λ‖B‖_*`.
//! * [`solve_factored`]: alternating ridge solves on
//!   `(1/n)‖y − 𝔛(UVᵀ)‖² + (λ/2)(‖U‖_F² + ‖V‖_F²)`.
//! * [`solve_noiseless`]: minimum nuclear norm interpolation, approximated by
//!   a warm-started λ ladder.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::{dot, prox_nuclear, svd, Mat};
use crate::rng;
use crate::sampling::{spikiness_norm, Dataset, EnsembleSpec, Measurement};

/// How the proximal-gradient step is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    /// `1/L` with `L` from power iteration on `b ↦ (2/n)𝔛*(𝔛(b))`, halved
    /// whenever the sufficient-decrease test fails.
    Lipschitz,
    Fixed(f64),
    Backtracking { beta: f64, init: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub rel_obj_tol: f64,
    pub step_mode: StepMode,
    /// Upper bound on the factor width (factored solver only).
    pub rank_cap: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iters: 5000, rel_obj_tol: 1e-8, step_mode: StepMode::Lipschitz, rank_cap: None }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return arg_err("max_iters must be positive");
        }
        if !(self.rel_obj_tol > 0.0 && self.rel_obj_tol < 1.0) {
            return arg_err(format!("rel_obj_tol must lie in (0, 1), got {}", self.rel_obj_tol));
        }
        match self.step_mode {
            StepMode::Fixed(s) if !(s > 0.0 && s.is_finite()) => arg_err(format!("fixed step must be positive, got {s}")),
            StepMode::Backtracking { beta, init } if !(beta > 0.0 && beta < 1.0) || !(init > 0.0 && init.is_finite()) => {
                arg_err(format!("backtracking needs beta in (0, 1) and a positive initial step, got {beta}, {init}"))
            }
            _ => match self.rank_cap {
                Some(0) => arg_err("rank_cap must be positive"),
                _ => Ok(()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Convex,
    Factored,
    Noiseless,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Convex => "convex",
            Method::Factored => "factored",
            Method::Noiseless => "noiseless",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub b_hat: Mat,
    pub lambda: f64,
    /// Convex objective at `b_hat`.
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    pub method: Method,
    /// `‖y − 𝔛(b_hat)‖₂ / ‖y‖₂`, reported by the noiseless solver.
    pub constraint_residual: Option<f64>,
    /// `(U, V)` with `b_hat = UVᵀ`, reported by the factored solver.
    pub factors: Option<(Mat, Mat)>,
}

fn residual_sq(y: &[f64], fit: &[f64]) -> f64 {
    y.iter().zip(fit).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `(1/n)‖y − 𝔛(b)‖² + λ‖b‖_*`.
pub fn objective(ds: &Dataset, lambda: f64, b: &Mat) -> Result<f64> {
    if !(lambda >= 0.0) {
        return arg_err(format!("λ must be non-negative, got {lambda}"));
    }
    let fit = ds.apply(b)?;
    let penalty = if lambda > 0.0 { lambda * b.nuclear() } else { 0.0 };
    Ok(residual_sq(&ds.y, &fit) / ds.n() as f64 + penalty)
}

/// `(2/n)·𝔛*(𝔛(b) − y)`, the gradient of the data-fit term.
pub fn smooth_gradient(ds: &Dataset, b: &Mat) -> Result<Mat> {
    let fit = ds.apply(b)?;
    let scale = 2.0 / ds.n() as f64;
    let w: Vec<f64> = fit.iter().zip(&ds.y).map(|(f, y)| scale * (f - y)).collect();
    ds.adjoint(&w)
}

/// Smallest λ at which zero minimizes the convex objective,
/// `(2/n)‖𝔛*(y)‖_op`.
pub fn lambda_max(ds: &Dataset) -> f64 {
    let a = ds.adjoint(&ds.y).expect("dataset is internally consistent");
    2.0 * a.operator() / ds.n() as f64
}

/// Power-iteration estimate of the Lipschitz constant of the smooth gradient.
pub fn lipschitz_estimate(ds: &Dataset, iters: usize) -> f64 {
    let (d_r, d_c) = ds.shape();
    let mut r = rng::stream(0x6c69_7073, 0);
    let mut v = Mat::from_fn(d_r, d_c, |_, _| StandardNormal.sample(&mut r));
    v.scale_mut(1.0 / v.frobenius());
    let scale = 2.0 / ds.n() as f64;
    let mut est = 0.0;
    for _ in 0..iters {
        let mut w = ds.apply(&v).expect("shape checked");
        w.iter_mut().for_each(|x| *x *= scale);
        let av = ds.adjoint(&w).expect("shape checked");
        let nrm = av.frobenius();
        if nrm == 0.0 {
            return 0.0;
        }
        est = nrm;
        v = av.scaled(1.0 / nrm);
    }
    est
}

/// Fixed-point residual `‖b − prox(b − s∇f(b), λs)‖_F` of the proximal
/// gradient map.
pub fn prox_residual(ds: &Dataset, lambda: f64, b: &Mat, step: f64) -> Result<f64> {
    let g = smooth_gradient(ds, b)?;
    let mut fwd = b.clone();
    fwd.axpy(-step, &g);
    let (p, _) = prox_nuclear(&fwd, lambda * step)?;
    Ok((b - &p).frobenius())
}

pub fn solve_convex(ds: &Dataset, lambda: f64, cfg: &SolverConfig) -> Result<Estimate> {
    solve_convex_from(ds, lambda, cfg, None)
}

/// [`solve_convex`] started at `init` instead of zero.
pub fn solve_convex_from(ds: &Dataset, lambda: f64, cfg: &SolverConfig, init: Option<&Mat>) -> Result<Estimate> {
    cfg.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return arg_err(format!("λ must be positive, got {lambda}"));
    }
    let (d_r, d_c) = ds.shape();
    let x0 = match init {
        Some(m) if m.shape() != (d_r, d_c) => {
            return dim_err(format!("warm start {:?} does not match {:?}", m.shape(), (d_r, d_c)))
        }
        Some(m) => m.clone(),
        None => Mat::zeros(d_r, d_c),
    };
    let (mut step, beta, check) = match cfg.step_mode {
        StepMode::Fixed(s) => (s, 1.0, false),
        StepMode::Backtracking { beta, init } => (init, beta, true),
        StepMode::Lipschitz => {
            let l = lipschitz_estimate(ds, 20);
            (if l > 0.0 { 1.0 / l } else { 1.0 }, 0.5, true)
        }
    };

    let n = ds.n() as f64;
    let smooth = |fit: &[f64]| residual_sq(&ds.y, fit) / n;

    let mut x = x0;
    let mut ax = ds.apply(&x)?;
    let mut f_x = smooth(&ax) + lambda * x.nuclear();
    let mut yk = x.clone();
    let mut ay = ax.clone();
    let mut t = 1.0f64;
    let mut converged = f_x == 0.0;
    let mut iters = 0;

    while !converged && iters < cfg.max_iters {
        iters += 1;
        let f_y = smooth(&ay);
        let w: Vec<f64> = ay.iter().zip(&ds.y).map(|(a, b)| 2.0 * (a - b) / n).collect();
        let grad = ds.adjoint(&w)?;
        let (z, az, f_z) = loop {
            let mut fwd = yk.clone();
            fwd.axpy(-step, &grad);
            let (z, z_nuc) = prox_nuclear(&fwd, lambda * step)?;
            let az = ds.apply(&z)?;
            let f_smooth = smooth(&az);
            if check {
                let diff = &z - &yk;
                let bound = f_y + dot(grad.as_slice(), diff.as_slice()) + diff.frobenius_sq() / (2.0 * step);
                if f_smooth > bound + 1e-12 * (1.0 + f_y.abs()) && step > 1e-300 {
                    step *= beta;
                    continue;
                }
            }
            break (z, az, f_smooth + lambda * z_nuc);
        };
        if !f_z.is_finite() {
            return Err(Error::Numeric(format!("objective diverged at iteration {iters}")));
        }
        if f_z <= f_x {
            let decrease = (f_x - f_z) / f_x.max(f64::MIN_POSITIVE);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            // z is accepted, so x_k = z and the extrapolation reduces to the FISTA form
            yk = z.clone();
            yk.scale_mut(1.0 + mom);
            yk.axpy(-mom, &x);
            ay = az.iter().zip(&ax).map(|(a, b)| (1.0 + mom) * a - mom * b).collect();
            x = z;
            ax = az;
            f_x = f_z;
            t = t_next;
            converged = decrease < cfg.rel_obj_tol || f_x == 0.0;
        } else {
            // reject and restart the momentum from the incumbent
            t = 1.0;
            yk = x.clone();
            ay = ax.clone();
        }
    }
    Ok(Estimate {
        objective: objective(ds, lambda, &x)?,
        b_hat: x,
        lambda,
        iters,
        converged,
        method: Method::Convex,
        constraint_residual: None,
        factors: None,
    })
}

/// Sparse feature vector `(index, value)` of one measurement against a factor.
fn push_features(m: &Measurement, other: &Mat, transpose: bool, out: &mut Vec<(usize, f64)>) {
    // ⟨UVᵀ, X⟩ = ⟨U, XV⟩ = ⟨V, XᵀU⟩; features are XV (or XᵀU) flattened row-major
    out.clear();
    let r = other.cols();
    match m {
        Measurement::Entry { row, col, scale } => {
            let (target, source) = if transpose { (*col, *row) } else { (*row, *col) };
            for k in 0..r {
                out.push((target * r + k, scale * other[(source, k)]));
            }
        }
        Measurement::RowVector { row, vec } => {
            if transpose {
                // XᵀU = vec · U[row,:]
                for (j, &vj) in vec.iter().enumerate() {
                    for k in 0..r {
                        out.push((j * r + k, vj * other[(*row, k)]));
                    }
                }
            } else {
                let proj = other.tr_mul_vec(vec);
                for (k, p) in proj.into_iter().enumerate() {
                    out.push((row * r + k, p));
                }
            }
        }
        Measurement::Dense(x) => {
            let prod = if transpose { x.transpose().matmul(other) } else { x.matmul(other) }.expect("shapes agree");
            out.extend(prod.as_slice().iter().copied().enumerate());
        }
        Measurement::RankOne { u, v } => {
            let (left, right) = if transpose { (v, u) } else { (u, v) };
            let proj = other.tr_mul_vec(right);
            for (i, &li) in left.iter().enumerate() {
                for (k, &p) in proj.iter().enumerate() {
                    out.push((i * r + k, li * p));
                }
            }
        }
    }
}

/// Exact minimizer over one factor with the other held fixed.
fn ridge_step(ds: &Dataset, other: &Mat, transpose: bool, lambda: f64) -> Result<Mat> {
    let rows = if transpose { ds.spec.d_c } else { ds.spec.d_r };
    let r = other.cols();
    let p = rows * r;
    let n = ds.n() as f64;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut feats = Vec::new();
    for (m, &y) in ds.measurements.iter().zip(&ds.y) {
        push_features(m, other, transpose, &mut feats);
        for &(a, fa) in &feats {
            if fa == 0.0 {
                continue;
            }
            rhs[a] += fa * y;
            for &(b, fb) in &feats {
                gram[(a, b)] += fa * fb;
            }
        }
    }
    gram /= n;
    rhs /= n;
    for i in 0..p {
        gram[(i, i)] += 0.5 * lambda;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("normal equations are not positive definite".into()))?;
    let sol = chol.solve(&rhs);
    let out = Mat::new(rows, r, sol.iter().copied().collect())
        .map_err(|_| Error::Numeric("non-finite factor in ridge step".into()))?;
    Ok(out)
}

/// `(1/n)‖y − 𝔛(UVᵀ)‖² + (λ/2)(‖U‖_F² + ‖V‖_F²)`.
pub fn factored_objective(ds: &Dataset, lambda: f64, u: &Mat, v: &Mat) -> Result<f64> {
    let b = u.matmul(&v.transpose())?;
    let fit = ds.apply(&b)?;
    Ok(residual_sq(&ds.y, &fit) / ds.n() as f64 + 0.5 * lambda * (u.frobenius_sq() + v.frobenius_sq()))
}

fn balanced_factors(m: &Mat, r: usize) -> (Mat, Mat) {
    let f = svd(m);
    let (d_r, d_c) = m.shape();
    let mut u = Mat::zeros(d_r, r);
    let mut v = Mat::zeros(d_c, r);
    for k in 0..r.min(f.singulars.len()) {
        let s = f.singulars[k].sqrt();
        for i in 0..d_r {
            u[(i, k)] = f.left[(i, k)] * s;
        }
        for j in 0..d_c {
            v[(j, k)] = f.right[(j, k)] * s;
        }
    }
    (u, v)
}

/// Objective values after each sweep, for monotonicity checks.
pub type SweepTrace = Vec<f64>;

pub fn solve_factored(ds: &Dataset, lambda: f64, r: usize, cfg: &SolverConfig) -> Result<Estimate> {
    solve_factored_traced(ds, lambda, r, cfg, None).map(|(e, _)| e)
}

/// [`solve_factored`] with an optional warm start, also returning the
/// objective after every sweep.
pub fn solve_factored_traced(
    ds: &Dataset,
    lambda: f64,
    r: usize,
    cfg: &SolverConfig,
    init: Option<&Mat>,
) -> Result<(Estimate, SweepTrace)> {
    cfg.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return arg_err(format!("λ must be positive, got {lambda}"));
    }
    let (d_r, d_c) = ds.shape();
    if r == 0 || r > d_r.min(d_c) {
        return arg_err(format!("rank {r} out of range for {d_r}x{d_c}"));
    }
    let r = cfg.rank_cap.map_or(r, |cap| r.min(cap));
    let start = match init {
        Some(m) if m.shape() != (d_r, d_c) => return dim_err("warm start has the wrong shape"),
        Some(m) => m.clone(),
        None => ds.adjoint(&ds.y)?.scaled(1.0 / ds.n() as f64),
    };
    let (mut u, mut v) = balanced_factors(&start, r);
    let mut f = factored_objective(ds, lambda, &u, &v)?;
    let mut trace = vec![f];
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iters {
        iters += 1;
        u = ridge_step(ds, &v, false, lambda)?;
        v = ridge_step(ds, &u, true, lambda)?;
        let f_new = factored_objective(ds, lambda, &u, &v)?;
        trace.push(f_new);
        let decrease = (f - f_new) / f.max(f64::MIN_POSITIVE);
        f = f_new;
        if decrease < cfg.rel_obj_tol {
            converged = true;
            break;
        }
    }
    let b_hat = u.matmul(&v.transpose())?;
    let est = Estimate {
        objective: objective(ds, lambda, &b_hat)?,
        b_hat,
        lambda,
        iters,
        converged,
        method: Method::Factored,
        constraint_residual: None,
        factors: Some((u, v)),
    };
    Ok((est, trace))
}

/// Ratio between consecutive rungs of the noiseless λ ladder.
pub const LADDER_FACTOR: f64 = 5.0;
pub const LADDER_RUNGS: u32 = 8;
/// Largest relative constraint residual accepted by [`solve_noiseless`].
pub const NOISELESS_RESIDUAL_TOL: f64 = 1e-3;

/// Approximate `min ‖B‖_* s.t. 𝔛(B) = y` by warm-started convex solves at
/// `λ_max/5, λ_max/25, …, λ_max/5⁸`.
pub fn solve_noiseless(ds: &Dataset, cfg: &SolverConfig) -> Result<Estimate> {
    cfg.validate()?;
    let (d_r, d_c) = ds.shape();
    let lmax = lambda_max(ds);
    let y_norm = dot(&ds.y, &ds.y).sqrt();
    if lmax == 0.0 || y_norm == 0.0 {
        return Ok(Estimate {
            b_hat: Mat::zeros(d_r, d_c),
            lambda: 0.0,
            objective: 0.0,
            iters: 0,
            converged: true,
            method: Method::Noiseless,
            constraint_residual: Some(0.0),
            factors: None,
        });
    }
    let mut b = Mat::zeros(d_r, d_c);
    let mut iters = 0;
    let mut lambda = lmax;
    for _ in 0..LADDER_RUNGS {
        lambda /= LADDER_FACTOR;
        let est = solve_convex_from(ds, lambda, cfg, Some(&b))?;
        iters += est.iters;
        b = est.b_hat;
    }
    let fit = ds.apply(&b)?;
    let residual = residual_sq(&ds.y, &fit).sqrt() / y_norm;
    Ok(Estimate {
        objective: objective(ds, lambda, &b)?,
        b_hat: b,
        lambda,
        iters,
        converged: residual <= NOISELESS_RESIDUAL_TOL,
        method: Method::Noiseless,
        constraint_residual: Some(residual),
        factors: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Goodness {
    pub loss_ok: bool,
    pub spikiness_ok: bool,
}

impl Goodness {
    pub fn holds(&self) -> bool {
        self.loss_ok && self.spikiness_ok
    }
}

/// A-posteriori check of `L(B̂) ≤ L(B★)` and `𝔑(B̂) ≤ b★`.
pub fn check_goodness(
    est: &Estimate,
    b_star: &Mat,
    ds: &Dataset,
    b_star_bound: f64,
    spec: &EnsembleSpec,
) -> Result<Goodness> {
    if !est.b_hat.same_shape(b_star) {
        return dim_err("estimate and B★ differ in shape");
    }
    let at_hat = objective(ds, est.lambda, &est.b_hat)?;
    let at_star = objective(ds, est.lambda, b_star)?;
    Ok(Goodness {
        loss_ok: at_hat <= at_star + 1e-9 * (1.0 + at_star.abs()),
        spikiness_ok: spikiness_norm(spec, &est.b_hat) <= b_star_bound * (1.0 + 1e-6),
    })
}

/// A solver usable along a regularization path.
pub trait Estimator: Sync {
    fn fit(&self, ds: &Dataset, lambda: f64, warm: Option<&Mat>) -> Result<Estimate>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConvexEstimator {
    pub cfg: SolverConfig,
}

impl Estimator for ConvexEstimator {
    fn fit(&self, ds: &Dataset, lambda: f64, warm: Option<&Mat>) -> Result<Estimate> {
        solve_convex_from(ds, lambda, &self.cfg, warm)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FactoredEstimator {
    pub cfg: SolverConfig,
    pub rank: usize,
}

impl Estimator for FactoredEstimator {
    fn fit(&self, ds: &Dataset, lambda: f64, warm: Option<&Mat>) -> Result<Estimate> {
        // a zero warm start would pin both factors at zero
        let warm = warm.filter(|m| m.frobenius() > 0.0);
        solve_factored_traced(ds, lambda, self.rank, &self.cfg, warm).map(|(e, _)| e)
    }
}
