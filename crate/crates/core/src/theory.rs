//! Numerical side of the error analysis: λ₀ calibration, Rademacher sketches,
//! Orlicz norms, truncation levels, Bernstein-type bounds, error-bound
//! right-hand sides, restricted strong convexity probes and exact-recovery
//! sample sizes.
//!
//! Absolute constants with no known value (`C`, `C′`, `C₇`, …) are explicit
//! arguments. Callers that pass 1 should label the output [`UNCALIBRATED`].

use rayon::prelude::*;

use crate::error::{arg_err, Error, Result};
use crate::linalg::Mat;
use crate::rng::{self, Stream};
use crate::sampling::{
    ensemble_constants, generate_ground_truth, sample_measurement, spikiness_norm, Dataset, EnsembleKind,
    EnsembleSpec, XiMode,
};
use crate::stats;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Label attached to outputs computed with placeholder constants.
pub const UNCALIBRATED: &str = "uncalibrated";

/// `η = 72r`.
pub fn eta_for_rank(r: usize) -> f64 {
    72.0 * r as f64
}

fn gauss(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

/// `‖(1/n) Σ w_i X_i‖_op` for fresh measurements, weights drawn by `weight`.
fn weighted_sum_op(spec: &EnsembleSpec, n: usize, rng: &mut Stream, mut weight: impl FnMut(&mut Stream) -> f64) -> f64 {
    let mut acc = Mat::zeros(spec.d_r, spec.d_c);
    for _ in 0..n {
        let x = sample_measurement(spec, rng);
        let w = weight(rng);
        x.add_scaled_to(&mut acc, w);
    }
    acc.operator() / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub multiplier: f64,
    pub reps: usize,
    pub quantile: f64,
    pub lambda0: f64,
    /// Unscaled draws of `‖Σ‖_op`.
    pub samples: Vec<f64>,
}

/// Rank (1-based, from the top) of the upper `quantile` point among `reps`
/// draws: `⌈(1 − quantile)·reps⌉`, at least 1.
pub fn quantile_rank(reps: usize, quantile: f64) -> usize {
    let raw = (1.0 - quantile) * reps as f64;
    ((raw - 1e-9).ceil() as usize).clamp(1, reps)
}

/// λ₀ as an upper quantile of `multiplier·‖Σ‖_op`, `Σ = (1/n) Σ ε_i X_i`.
///
/// Replicate `j` draws from sub-stream `j` of `seed`, so the result does not
/// depend on thread scheduling.
pub fn calibrate_lambda0(
    spec: &EnsembleSpec,
    n: usize,
    sigma: f64,
    multiplier: f64,
    reps: usize,
    quantile: f64,
    seed: u64,
) -> Result<CalibrationReport> {
    if reps < 10 {
        return arg_err(format!("at least 10 replicates are needed, got {reps}"));
    }
    if n == 0 || !(sigma >= 0.0) || !(multiplier > 0.0) || !(quantile > 0.0 && quantile < 1.0) {
        return arg_err("calibration needs n ≥ 1, σ ≥ 0, a positive multiplier and a quantile in (0, 1)");
    }
    let samples: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::substream(seed, &[j]);
            weighted_sum_op(spec, n, &mut g, |g| sigma * gauss(g))
        })
        .collect();
    let scaled: Vec<f64> = samples.iter().map(|s| multiplier * s).collect();
    let lambda0 = stats::kth_largest(&scaled, quantile_rank(reps, quantile));
    Ok(CalibrationReport { multiplier, reps, quantile, lambda0, samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RademacherSketch {
    pub reps: usize,
    pub mean_op_norm: f64,
    /// Draws of `‖Σ_R‖_op`, `Σ_R = (1/n) Σ ζ_i X_i`.
    pub draws: Vec<f64>,
}

/// Monte Carlo estimate of `E‖Σ_R‖_op`.
pub fn rademacher_sketch(spec: &EnsembleSpec, n: usize, reps: usize, seed: u64) -> Result<RademacherSketch> {
    if reps == 0 || n == 0 {
        return arg_err("rademacher_sketch needs n ≥ 1 and reps ≥ 1");
    }
    let draws: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::substream(seed, &[j]);
            weighted_sum_op(spec, n, &mut g, |g| if g.random::<bool>() { 1.0 } else { -1.0 })
        })
        .collect();
    Ok(RademacherSketch { reps, mean_op_norm: stats::mean(&draws), draws })
}

/// Monte Carlo ψ_p Orlicz norm of `⟨X, b⟩`, `X ~ Π`.
///
/// One sample is drawn up front and reused at every bisection step, which
/// makes the criterion monotone in `t`. Bisection runs 64 steps in `log t`
/// over `[1e-6, 1e3]·‖b‖_F`. `b = 0` returns 0.
pub fn estimate_orlicz(spec: &EnsembleSpec, b: &Mat, p: u32, samples: usize, rng: &mut Stream) -> Result<f64> {
    if p != 1 && p != 2 {
        return arg_err(format!("p must be 1 or 2, got {p}"));
    }
    if samples == 0 {
        return arg_err("need at least one sample");
    }
    let scale = b.frobenius();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let z: Vec<f64> = (0..samples).map(|_| sample_measurement(spec, rng).inner(b).abs()).collect();
    let criterion = |t: f64| -> f64 {
        let vals: Vec<f64> = z.iter().map(|&v| (v / t).powi(p as i32).exp()).collect();
        stats::mean(&vals) - 1.0
    };
    let (mut lo, mut hi) = ((1e-6 * scale).ln(), (1e3 * scale).ln());
    if criterion(hi.exp()) > 1.0 {
        return Err(Error::Range("Orlicz criterion not met inside the bracket".into()));
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if criterion(mid.exp()) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

/// `E exp(η Z²)` for `Z ~ N(0, σ²)`: `1/√((1 − 2σ²η)₊)`, infinite at and past
/// the boundary.
pub fn gaussian_square_mgf(sigma: f64, eta: f64) -> f64 {
    let base = 1.0 - 2.0 * sigma * sigma * eta;
    if base <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / base.sqrt()
    }
}

/// ψ₂ norm of `N(0, σ²)`, `√(8/3)·σ`.
pub fn gaussian_psi2(sigma: f64) -> f64 {
    (8.0f64 / 3.0).sqrt() * sigma.abs()
}

/// Truncation level `c_{σ,p} = ν·max{5, [10·log(2ν²/σ²)]^{1/p}}`.
///
/// When `2ν² < σ²` the logarithm is negative and the first branch is used.
pub fn truncation_constant(nu: f64, sigma: f64, p: u32) -> Result<f64> {
    if !(sigma > 0.0) || !(nu > 0.0) {
        return arg_err(format!("ν and σ must be positive, got ν = {nu}, σ = {sigma}"));
    }
    if p != 1 && p != 2 {
        return arg_err(format!("p must be 1 or 2, got {p}"));
    }
    let log_term = 10.0 * (2.0 * nu * nu / (sigma * sigma)).ln();
    let second = if log_term > 0.0 { log_term.powf(1.0 / p as f64) } else { 0.0 };
    Ok(nu * second.max(5.0))
}

/// `√max(‖E XXᵀ‖_op, ‖E XᵀX‖_op)` for a single measurement.
pub fn sigma_z(spec: &EnsembleSpec) -> f64 {
    match spec.kind {
        EnsembleKind::MatrixCompletion { xi_mode: XiMode::Plain } => (1.0 / spec.d_r.min(spec.d_c) as f64).sqrt(),
        _ => (spec.d_r.max(spec.d_c) as f64).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinBound {
    pub value: f64,
    /// Set when `δ ≤ σ_Z`, where the logarithmic factor is not positive.
    pub clamped: bool,
}

/// Tail bound on `‖Σ‖_op`:
/// `C·max{σ_Z√((t + log d)/n), δ·ℓ·(t + log d)/n}`, `d = d_r + d_c`, with
/// `ℓ = max{log(δ/σ_Z), 1}`.
pub fn bernstein_bound(
    sigma_z: f64,
    delta: f64,
    n: usize,
    d_r: usize,
    d_c: usize,
    t: f64,
    c: f64,
) -> Result<BernsteinBound> {
    if !(sigma_z > 0.0 && delta > 0.0 && t >= 0.0 && c > 0.0) || n == 0 || d_r + d_c < 2 {
        return arg_err("bernstein_bound needs positive σ_Z, δ, C, n and t ≥ 0");
    }
    let logd = ((d_r + d_c) as f64).ln();
    let nf = n as f64;
    let clamped = delta <= sigma_z;
    let ell = (delta / sigma_z).ln().max(1.0);
    let gauss_part = sigma_z * ((t + logd) / nf).sqrt();
    let exp_part = delta * ell * (t + logd) / nf;
    Ok(BernsteinBound { value: c * gauss_part.max(exp_part), clamped })
}

/// Expectation form `C′σ_Z√(2e·log d / n)`, `d = d_r + d_c`.
pub fn bernstein_expectation(sigma_z: f64, n: usize, d_r: usize, d_c: usize, c_prime: f64) -> f64 {
    let logd = ((d_r + d_c) as f64).ln();
    c_prime * sigma_z * (2.0 * std::f64::consts::E * logd / n as f64).sqrt()
}

/// Inputs to the three error-bound right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorBound {
    /// `(100λ²r/(3α²) + 8b★²β/α) ∨ 4b★²ν`
    Deterministic { lambda: f64, r: f64, alpha: f64, beta: f64, b_star: f64, nu: f64 },
    /// `C′λ²r/γ_min²`
    Probabilistic { c_prime: f64, lambda: f64, r: f64, gamma_min: f64 },
    /// `C₇(σ² ∨ b★²)·ρdr/n`
    Application { c7: f64, sigma: f64, b_star: f64, rho: f64, d: f64, r: f64, n: f64 },
}

pub fn error_bound_rhs(bound: &ErrorBound) -> Result<f64> {
    match *bound {
        ErrorBound::Deterministic { lambda, r, alpha, beta, b_star, nu } => {
            if !(alpha > 0.0) {
                return arg_err(format!("α must be positive, got {alpha}"));
            }
            let b2 = b_star * b_star;
            let first = 100.0 * lambda * lambda * r / (3.0 * alpha * alpha) + 8.0 * b2 * beta / alpha;
            Ok(first.max(4.0 * b2 * nu))
        }
        ErrorBound::Probabilistic { c_prime, lambda, r, gamma_min } => {
            if !(gamma_min > 0.0) {
                return arg_err(format!("γ_min must be positive, got {gamma_min}"));
            }
            Ok(c_prime * lambda * lambda * r / (gamma_min * gamma_min))
        }
        ErrorBound::Application { c7, sigma, b_star, rho, d, r, n } => {
            if !(n > 0.0) {
                return arg_err("n must be positive");
            }
            Ok(c7 * (sigma * sigma).max(b_star * b_star) * rho * d * r / n)
        }
    }
}

/// `ν = λ₀²·r / (γ_min²·b★²)`.
pub fn nu_from_lambda(lambda0: f64, r: usize, gamma_min: f64, b_star: f64) -> f64 {
    lambda0 * lambda0 * r as f64 / (gamma_min * gamma_min * b_star * b_star)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RscProbeReport {
    pub nu: f64,
    pub eta: f64,
    pub trials: usize,
    /// Smallest `(1/n)‖𝔛(A)‖² − (γ_min/4)‖A‖_F² + β_emp` seen.
    pub min_margin: f64,
    pub violation_count: usize,
    pub beta_emp: f64,
    /// Candidates drawn, accepted or not.
    pub attempts: usize,
}

/// Draw from `C(ν, η) = {𝔑(A) = 1, ‖A‖_F² ≥ ν, ‖A‖_* ≤ √η‖A‖_F}` by
/// rank-`⌊η/72⌋ ∨ 1` Gaussian products rescaled to unit 𝔑. Returns the
/// matrix and the number of attempts used.
pub fn sample_constraint_set(
    spec: &EnsembleSpec,
    nu: f64,
    eta: f64,
    max_attempts: usize,
    rng: &mut Stream,
) -> Result<(Mat, usize)> {
    let k = ((eta / 72.0).floor() as usize).max(1).min(spec.d_r.min(spec.d_c));
    for attempt in 1..=max_attempts {
        let mut a = generate_ground_truth(spec.d_r, spec.d_c, k, rng)?;
        let s = spikiness_norm(spec, &a);
        if s == 0.0 {
            continue;
        }
        a.scale_mut(1.0 / s);
        let fro = a.frobenius();
        if fro * fro >= nu && a.nuclear() <= eta.sqrt() * fro {
            return Ok((a, attempt));
        }
    }
    Err(Error::Sampling(format!("no draw from C(ν = {nu:e}, η = {eta}) in {max_attempts} attempts")))
}

/// Empirical restricted strong convexity check on `ds` over `C(ν, η)`.
///
/// `β_emp = 93·η·𝔠²/γ_min · (E‖Σ_R‖_op)²` with the expectation from a
/// Rademacher sketch of `sketch_reps` draws at the same `n`.
pub fn rsc_probe(ds: &Dataset, nu: f64, eta: f64, trials: usize, sketch_reps: usize, seed: u64) -> Result<RscProbeReport> {
    if trials == 0 {
        return arg_err("trials must be at least 1");
    }
    let spec = ds.spec;
    let consts = ensemble_constants(&spec);
    let sketch = rademacher_sketch(&spec, ds.n(), sketch_reps.max(1), rng::child_seed(seed, &[1]))?;
    let beta_emp = 93.0 * eta * consts.frak_c.powi(2) / consts.gamma_min * sketch.mean_op_norm.powi(2);
    let mut g = rng::substream(seed, &[2]);
    let mut budget = 100 * trials;
    let mut attempts = 0;
    let mut min_margin = f64::INFINITY;
    let mut violation_count = 0;
    for _ in 0..trials {
        let (a, used) = sample_constraint_set(&spec, nu, eta, budget, &mut g)?;
        budget -= used;
        attempts += used;
        let m = rsc_margin(ds, &a, consts.gamma_min, beta_emp)?;
        min_margin = min_margin.min(m);
        if m < 0.0 {
            violation_count += 1;
        }
    }
    Ok(RscProbeReport { nu, eta, trials, min_margin, violation_count, beta_emp, attempts })
}

/// `(1/n)‖𝔛(A)‖² − (γ_min/4)‖A‖_F² + β`.
pub fn rsc_margin(ds: &Dataset, a: &Mat, gamma_min: f64, beta: f64) -> Result<f64> {
    let fit = ds.apply(a)?;
    let quad = fit.iter().map(|v| v * v).sum::<f64>() / ds.n() as f64;
    Ok(quad - 0.25 * gamma_min * a.frobenius_sq() + beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryThreshold {
    pub nu0: f64,
    pub eta: f64,
    /// Right-hand side `γ_min²ν₀/(800𝔠²η)` that `E‖Σ_R‖²` must fall under.
    pub target: f64,
    /// Observed log-log slope of `E‖Σ_R‖_op` between the two sketches;
    /// diagnostic only, the model fixes it at −1/2.
    pub slope: f64,
    /// Fitted `√n·E‖Σ_R‖_op` (geometric mean over the two sketches).
    pub scale: f64,
    pub n_min: f64,
}

/// Smallest `n` with `E‖Σ_R‖_op² ≤ γ_min²ν₀/(800𝔠²η)`, `η = 72r`, under the
/// model `E‖Σ_R‖_op ≈ scale/√n` with `scale` fitted from sketches at `n0`
/// and `4·n0`.
pub fn exact_recovery_threshold(
    spec: &EnsembleSpec,
    r: usize,
    n0: usize,
    sketch_reps: usize,
    seed: u64,
) -> Result<RecoveryThreshold> {
    if r == 0 {
        return arg_err("r must be at least 1");
    }
    if n0 == 0 {
        return arg_err("n0 must be at least 1");
    }
    let c = ensemble_constants(spec);
    let eta = eta_for_rank(r);
    let target = c.gamma_min.powi(2) * c.nu0 / (800.0 * c.frak_c.powi(2) * eta);
    let ns = [n0, 4 * n0];
    let means: Vec<f64> = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| rademacher_sketch(spec, n, sketch_reps, rng::child_seed(seed, &[i as u64])).map(|s| s.mean_op_norm))
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let slope = stats::slope(&lx, &ly);
    let scale = lx.iter().zip(&ly).map(|(x, y)| y + 0.5 * x).sum::<f64>() / 2.0;
    let scale = scale.exp();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Numeric(format!("degenerate sketch scale {scale}")));
    }
    // scale²/n ≤ target
    let n_min = (scale * scale / target).ceil();
    Ok(RecoveryThreshold { nu0: c.nu0, eta, target, slope, scale, n_min })
}
