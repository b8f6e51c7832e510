//! K-fold cross-validation over a geometric λ path.
//!
//! `Ê(λ)` is stored per observation, i.e. the sum of squared out-of-fold
//! residuals divided by `n`. The argmin is unaffected.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::Mat;
use crate::rng::Stream;
use crate::sampling::Dataset;
use crate::solvers::{lambda_max, Estimate, Estimator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold label of each observation.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn from_assignments(k: usize, assignments: Vec<usize>) -> Result<Self> {
        if k < 2 {
            return arg_err("at least two folds are needed");
        }
        let plan = Self { k, assignments };
        if plan.assignments.iter().any(|&a| a >= k) {
            return arg_err("fold label out of range");
        }
        if plan.sizes().contains(&0) {
            return arg_err("every fold must be non-empty");
        }
        Ok(plan)
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }

    /// Indices in fold `k`, ascending.
    pub fn held_out(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] == k).collect()
    }

    /// Indices outside fold `k`, ascending.
    pub fn training(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] != k).collect()
    }
}

/// Random permutation of `0..n` cut into `k` blocks whose sizes differ by at
/// most one.
pub fn make_folds(n: usize, k: usize, rng: &mut Stream) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return arg_err(format!("need 2 ≤ k ≤ n, got k = {k}, n = {n}"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut assignments = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &perm[pos..pos + size] {
            assignments[i] = fold;
        }
        pos += size;
    }
    FoldPlan::from_assignments(k, assignments)
}

/// `λ_max, λ_max/2, …` down to the first value `≤ lambda_min`.
pub fn halving_grid(lambda_max: f64, lambda_min: f64) -> Result<Vec<f64>> {
    if !(lambda_min > 0.0) {
        return arg_err(format!("lambda_min must be positive, got {lambda_min}"));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return arg_err("λ_max is zero, so the grid is empty");
    }
    let mut grid = vec![lambda_max];
    while *grid.last().unwrap() > lambda_min {
        grid.push(grid.last().unwrap() / 2.0);
    }
    Ok(grid)
}

/// Halving grid starting from the zero-solution threshold of `ds`.
pub fn lambda_grid(ds: &Dataset, lambda_min: f64) -> Result<Vec<f64>> {
    halving_grid(lambda_max(ds), lambda_min)
}

fn check_plan(ds: &Dataset, plan: &FoldPlan) -> Result<()> {
    if plan.n() != ds.n() {
        return dim_err(format!("plan covers {} observations, dataset has {}", plan.n(), ds.n()));
    }
    Ok(())
}

fn held_out_sq_error(ds: &Dataset, held: &[usize], b: &Mat) -> f64 {
    held.iter()
        .map(|&i| {
            let r = ds.y[i] - ds.measurements[i].inner(b);
            r * r
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPoint {
    /// Out-of-fold squared error divided by `n`.
    pub e_hat: f64,
    /// Whether every fold solve converged.
    pub converged: bool,
    pub fold_estimates: Vec<Estimate>,
}

/// `Ê(λ)` for a single λ, each fold solved from scratch.
pub fn cv_error(ds: &Dataset, plan: &FoldPlan, lambda: f64, solver: &dyn Estimator) -> Result<CvPoint> {
    check_plan(ds, plan)?;
    let fits = (0..plan.k)
        .into_par_iter()
        .map(|k| {
            let train = ds.subset(&plan.training(k));
            let est = solver.fit(&train, lambda, None)?;
            Ok((held_out_sq_error(ds, &plan.held_out(k), &est.b_hat), est))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = fits.iter().map(|(e, _)| e).sum();
    let converged = fits.iter().all(|(_, est)| est.converged);
    Ok(CvPoint {
        e_hat: total / ds.n() as f64,
        converged,
        fold_estimates: fits.into_iter().map(|(_, est)| est).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    /// `Ê(λ)/n` per grid point.
    pub e_hat: Vec<f64>,
    pub lambda_cv: f64,
    pub index_cv: usize,
    /// `Σ_k (n_k/n) B̂_{−k}(λ̂_cv)`.
    pub b_cv: Mat,
    /// Indexed `[fold][grid point]`.
    pub per_fold_estimates: Vec<Vec<Estimate>>,
    /// Whether every solve behind `b_cv` converged.
    pub converged: bool,
}

/// Index of the smallest value, preferring the earliest on ties.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] <= v => {}
            _ if v.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Weighted fold average `Σ_k (n_k/n) B_k`.
pub fn fold_average(plan: &FoldPlan, mats: &[&Mat]) -> Result<Mat> {
    if mats.len() != plan.k {
        return dim_err("one matrix per fold is required");
    }
    let n = plan.n() as f64;
    let mut out = Mat::zeros(mats[0].rows(), mats[0].cols());
    for (m, size) in mats.iter().zip(plan.sizes()) {
        out.axpy(size as f64 / n, m);
    }
    Ok(out)
}

/// Cross-validated λ over a decreasing grid, each fold warm-started along
/// the path.
pub fn cv_select(ds: &Dataset, plan: &FoldPlan, grid: &[f64], solver: &dyn Estimator) -> Result<CvResult> {
    if grid.is_empty() {
        return arg_err("the λ grid is empty");
    }
    check_plan(ds, plan)?;
    let paths = (0..plan.k)
        .into_par_iter()
        .map(|k| {
            let train = ds.subset(&plan.training(k));
            let held = plan.held_out(k);
            let mut warm: Option<Mat> = None;
            let mut errs = Vec::with_capacity(grid.len());
            let mut ests = Vec::with_capacity(grid.len());
            for &lambda in grid {
                let est = solver.fit(&train, lambda, warm.as_ref())?;
                errs.push(held_out_sq_error(ds, &held, &est.b_hat));
                warm = Some(est.b_hat.clone());
                ests.push(est);
            }
            Ok((errs, ests))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = ds.n() as f64;
    let e_hat: Vec<f64> = (0..grid.len()).map(|j| paths.iter().map(|(e, _)| e[j]).sum::<f64>() / n).collect();
    // grid is decreasing, so the first minimizer is the largest λ
    let index_cv = argmin_first(&e_hat).ok_or_else(|| Error::Numeric("Ê is NaN on the whole grid".into()))?;
    let per_fold_estimates: Vec<Vec<Estimate>> = paths.into_iter().map(|(_, e)| e).collect();
    let chosen: Vec<&Mat> = per_fold_estimates.iter().map(|f| &f[index_cv].b_hat).collect();
    let b_cv = fold_average(plan, &chosen)?;
    let converged = per_fold_estimates.iter().all(|f| f[index_cv].converged);
    Ok(CvResult {
        lambda_grid: grid.to_vec(),
        e_hat,
        lambda_cv: grid[index_cv],
        index_cv,
        b_cv,
        per_fold_estimates,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_inner;
    use crate::rng;
    use crate::sampling::{generate_dataset, generate_ground_truth, EnsembleSpec, XiMode};
    use crate::solvers::{solve_convex, ConvexEstimator, SolverConfig};
    use proptest::prelude::*;

    fn mc_instance(d: usize, r: usize, n: usize, sigma: f64, seed: u64) -> (Mat, Dataset) {
        let spec = EnsembleSpec::matrix_completion(d, XiMode::Gaussian).unwrap();
        let mut g = rng::stream(seed, 100);
        let b = generate_ground_truth(d, d, r, &mut g).unwrap();
        (b.clone(), generate_dataset(&spec, &b, n, sigma, seed).unwrap())
    }

    #[test]
    fn fold_sizes() {
        let mut g = rng::stream(1, 0);
        assert_eq!(make_folds(10, 5, &mut g).unwrap().sizes(), vec![2; 5]);
        let mut s = make_folds(11, 5, &mut g).unwrap().sizes();
        s.sort_unstable();
        assert_eq!(s, vec![2, 2, 2, 2, 3]);
        assert!(make_folds(3, 4, &mut g).is_err());
        assert!(make_folds(3, 1, &mut g).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..300, k_raw in 2usize..20, seed in any::<u64>()) {
            let k = k_raw.min(n);
            let plan = make_folds(n, k, &mut rng::stream(seed, 0)).unwrap();
            let mut seen = vec![false; n];
            for f in 0..k {
                let held = plan.held_out(f);
                prop_assert!(held.len() as f64 >= n as f64 / (2.0 * k as f64));
                for i in held {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn halving_examples() {
        assert_eq!(halving_grid(8.0, 1.0).unwrap(), vec![8.0, 4.0, 2.0, 1.0]);
        assert_eq!(halving_grid(8.0, 0.9).unwrap(), vec![8.0, 4.0, 2.0, 1.0, 0.5]);
        assert!(halving_grid(0.0, 1.0).is_err());
        assert!(halving_grid(8.0, 0.0).is_err());
    }

    #[test]
    fn grid_starts_at_zero_threshold() {
        let (_, ds) = mc_instance(8, 2, 200, 0.5, 2);
        let grid = lambda_grid(&ds, 0.01 * lambda_max(&ds)).unwrap();
        let cfg = SolverConfig::default();
        assert!(solve_convex(&ds, grid[0], &cfg).unwrap().b_hat.frobenius() < 1e-8);
        assert!(solve_convex(&ds, grid[0] * 1.01, &cfg).unwrap().b_hat.frobenius() < 1e-8);
        assert!(solve_convex(&ds, grid[1], &cfg).unwrap().b_hat.frobenius() > 1e-3);
    }

    #[test]
    fn zero_signal_has_zero_error_at_lambda_max() {
        let spec = EnsembleSpec::matrix_completion(4, XiMode::Gaussian).unwrap();
        let b = Mat::zeros(4, 4);
        let ds = generate_dataset(&spec, &b, 20, 0.0, 3).unwrap();
        let plan = make_folds(20, 4, &mut rng::stream(3, 1)).unwrap();
        let point = cv_error(&ds, &plan, 1.0, &ConvexEstimator::default()).unwrap();
        assert_eq!(point.e_hat, 0.0);
        assert!(lambda_grid(&ds, 0.1).is_err());
    }

    #[test]
    fn two_fold_oracle() {
        let (_, ds) = mc_instance(3, 1, 12, 0.3, 4);
        let plan = make_folds(12, 2, &mut rng::stream(4, 1)).unwrap();
        let lambda = 0.2 * lambda_max(&ds);
        let cfg = SolverConfig::default();
        let got = cv_error(&ds, &plan, lambda, &ConvexEstimator { cfg }).unwrap();
        let mut total = 0.0;
        for fold in 0..2 {
            let mut train_m = Vec::new();
            let mut train_y = Vec::new();
            for i in 0..12 {
                if plan.assignments[i] != fold {
                    train_m.push(ds.measurements[i].clone());
                    train_y.push(ds.y[i]);
                }
            }
            let train = Dataset::from_parts(ds.spec, train_m, train_y, 0.3, 0).unwrap();
            let b = solve_convex(&train, lambda, &cfg).unwrap().b_hat;
            for i in 0..12 {
                if plan.assignments[i] == fold {
                    let x = ds.measurements[i].densify(3, 3);
                    total += (ds.y[i] - trace_inner(&x, &b).unwrap()).powi(2);
                }
            }
        }
        assert!((got.e_hat - total / 12.0).abs() < 1e-10);
    }

    #[test]
    fn relabelling_folds_changes_nothing() {
        let (_, ds) = mc_instance(5, 1, 40, 0.3, 5);
        let plan = make_folds(40, 4, &mut rng::stream(5, 1)).unwrap();
        let relabel = FoldPlan::from_assignments(4, plan.assignments.iter().map(|a| 3 - a).collect()).unwrap();
        let lambda = 0.1 * lambda_max(&ds);
        let a = cv_error(&ds, &plan, lambda, &ConvexEstimator::default()).unwrap().e_hat;
        let b = cv_error(&ds, &relabel, lambda, &ConvexEstimator::default()).unwrap().e_hat;
        assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn e_hat_at_lambda_max_is_held_out_energy() {
        let (_, ds) = mc_instance(6, 1, 60, 0.5, 6);
        let plan = make_folds(60, 3, &mut rng::stream(6, 1)).unwrap();
        let big = 1e6 * lambda_max(&ds);
        let res = cv_select(&ds, &plan, &[big], &ConvexEstimator::default()).unwrap();
        let energy: f64 = ds.y.iter().map(|y| y * y).sum::<f64>() / 60.0;
        assert!((res.e_hat[0] - energy).abs() < 1e-12 * energy);
        assert!(res.e_hat.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn single_lambda_is_weighted_average() {
        let (_, ds) = mc_instance(6, 1, 61, 0.5, 7);
        let plan = make_folds(61, 4, &mut rng::stream(7, 1)).unwrap();
        let lambda = 0.1 * lambda_max(&ds);
        let res = cv_select(&ds, &plan, &[lambda], &ConvexEstimator::default()).unwrap();
        let weights: f64 = plan.sizes().iter().map(|&s| s as f64 / 61.0).sum();
        assert!((weights - 1.0).abs() < 1e-15);
        let probe = Mat::from_fn(6, 6, |i, j| (i as f64 + 1.0) * (j as f64 - 2.5));
        let f = |m: &Mat| trace_inner(&probe, m).unwrap();
        let expect: f64 =
            (0..4).map(|k| plan.sizes()[k] as f64 / 61.0 * f(&res.per_fold_estimates[k][0].b_hat)).sum();
        assert!((f(&res.b_cv) - expect).abs() < 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn ties_go_to_largest_lambda() {
        assert_eq!(argmin_first(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin_first(&[f64::NAN, 2.0]), Some(1));
        assert_eq!(argmin_first(&[]), None);
        // zero data gives Ê ≡ 0, so the first grid point wins
        let spec = EnsembleSpec::matrix_completion(4, XiMode::Gaussian).unwrap();
        let ds = generate_dataset(&spec, &Mat::zeros(4, 4), 20, 0.0, 8).unwrap();
        let plan = make_folds(20, 2, &mut rng::stream(8, 1)).unwrap();
        let res = cv_select(&ds, &plan, &[4.0, 2.0, 1.0], &ConvexEstimator::default()).unwrap();
        assert_eq!(res.lambda_cv, 4.0);
    }

    #[test]
    fn selection_attains_minimum_and_warm_start_is_harmless() {
        let (_, ds) = mc_instance(10, 2, 400, 0.5, 9);
        let plan = make_folds(400, 5, &mut rng::stream(9, 1)).unwrap();
        let grid = lambda_grid(&ds, 0.01 * lambda_max(&ds)).unwrap();
        let cfg = SolverConfig { rel_obj_tol: 1e-12, ..Default::default() };
        let est = ConvexEstimator { cfg };
        let res = cv_select(&ds, &plan, &grid, &est).unwrap();
        let min = res.e_hat.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(res.e_hat[res.index_cv], min);
        for (j, &lambda) in grid.iter().enumerate() {
            let cold = cv_error(&ds, &plan, lambda, &est).unwrap().e_hat;
            assert!((cold - res.e_hat[j]).abs() < 1e-5 * cold, "λ index {j}: {cold} vs {}", res.e_hat[j]);
        }
        assert!(cv_select(&ds, &plan, &[], &est).is_err());
    }

    #[test]
    fn parallel_runs_are_reproducible() {
        let (_, ds) = mc_instance(8, 2, 200, 0.5, 10);
        let plan = make_folds(200, 5, &mut rng::stream(10, 1)).unwrap();
        let grid = lambda_grid(&ds, 0.05 * lambda_max(&ds)).unwrap();
        let a = cv_select(&ds, &plan, &grid, &ConvexEstimator::default()).unwrap();
        let b = cv_select(&ds, &plan, &grid, &ConvexEstimator::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generalization_probe() {
        // ‖B̂_cv − B★‖²_{L²(Π)} ≤ Ê(λ̂) − σ̄² + t fails rarely, t = 0.5·(σ² ∨ b★²)
        let spec = EnsembleSpec::matrix_completion(6, XiMode::Gaussian).unwrap();
        let sigma = 1.0;
        let mut failures = 0;
        for rep in 0..50u64 {
            let mut g = rng::stream(11, rep);
            let b = generate_ground_truth(6, 6, 1, &mut g).unwrap();
            let ds = generate_dataset(&spec, &b, 300, sigma, 5000 + rep).unwrap();
            let plan = make_folds(300, 5, &mut rng::stream(5000 + rep, 1)).unwrap();
            let grid = lambda_grid(&ds, 0.01 * lambda_max(&ds)).unwrap();
            let res = cv_select(&ds, &plan, &grid, &ConvexEstimator::default()).unwrap();
            let fit = ds.apply(&b).unwrap();
            let sigma_bar_sq = ds.y.iter().zip(&fit).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / 300.0;
            let b_star_sq = crate::sampling::spikiness_norm(&spec, &b).powi(2);
            let t = 0.5 * (sigma * sigma).max(b_star_sq);
            let lhs = (&res.b_cv - &b).frobenius_sq();
            if lhs > res.e_hat[res.index_cv] - sigma_bar_sq + t {
                failures += 1;
            }
        }
        assert!(failures < 10, "{failures} of 50 failed");
    }
}
