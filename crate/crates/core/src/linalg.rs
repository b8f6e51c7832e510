//! Dense matrices, norms, SVD and the nuclear-norm proximal map.
//!
//! [`Mat`] stores entries row-major. Heavy factorizations go through
//! `nalgebra`, whose SVD is single-threaded and deterministic for identical
//! input bits.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;

use crate::error::{arg_err, dim_err, Result};

/// Relative cutoff below which singular values count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

/// A dense real matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Mat {
    /// Build from row-major entries. Entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return arg_err(format!("matrix dimensions must be positive, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return dim_err(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return arg_err("matrix entries must be finite");
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(d: usize) -> Self {
        Self::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Square diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Self::from_fn(d, d, |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return dim_err("ragged rows");
        }
        Self::new(r, c, rows.concat())
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    /// Single basis matrix `e_i e_jᵀ`.
    pub fn basis(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m[(i, j)] = 1.0;
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Mat) -> bool {
        self.shape() == other.shape()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return dim_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in o_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a vector `v` of length `cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v` for a vector `v` of length `rows`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &Mat) {
        assert!(self.same_shape(other), "shape mismatch in axpy");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| alpha * v).collect() }
    }

    pub fn scale_mut(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Sum of singular values.
    pub fn nuclear(&self) -> f64 {
        singular_values(self).iter().sum()
    }

    /// Largest singular value.
    pub fn operator(&self) -> f64 {
        singular_values(self).first().copied().unwrap_or(0.0)
    }

    /// `L_{p,q}` norm: ℓ^p over each row, then ℓ^q over the row norms.
    /// `q = f64::INFINITY` gives the maximum row norm.
    pub fn lpq(&self, p: f64, q: f64) -> f64 {
        let row_norms = (0..self.rows).map(|i| {
            let r = self.row(i);
            if p.is_infinite() {
                r.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            } else {
                r.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
            }
        });
        if q.is_infinite() {
            row_norms.fold(0.0_f64, f64::max)
        } else {
            row_norms.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
        }
    }

    /// Largest row ℓ² norm, `‖·‖_{2,∞}`.
    pub fn max_row_norm(&self) -> f64 {
        self.lpq(2.0, f64::INFINITY)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Mat {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&Mat> for Mat {
    fn add_assign(&mut self, rhs: &Mat) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&Mat> for Mat {
    fn sub_assign(&mut self, rhs: &Mat) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &Mat {
    type Output = Mat;
    fn mul(self, rhs: f64) -> Mat {
        self.scaled(rhs)
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scaled(-1.0)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trace inner product `tr(a bᵀ)`.
pub fn trace_inner(a: &Mat, b: &Mat) -> Result<f64> {
    if !a.same_shape(b) {
        return dim_err(format!("trace inner product of {:?} and {:?}", a.shape(), b.shape()));
    }
    Ok(dot(a.as_slice(), b.as_slice()))
}

/// Matrix norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    Frobenius,
    Nuclear,
    Operator,
    LInf,
    /// `L_{p,q}`; `q` may be infinite.
    Lpq { p: f64, q: f64 },
}

pub fn norm(m: &Mat, kind: NormKind) -> Result<f64> {
    Ok(match kind {
        NormKind::Frobenius => m.frobenius(),
        NormKind::Nuclear => m.nuclear(),
        NormKind::Operator => m.operator(),
        NormKind::LInf => m.linf(),
        NormKind::Lpq { p, q } => {
            if !(p >= 1.0 && q >= 1.0) {
                return arg_err(format!("L_pq norm needs p, q >= 1, got p={p}, q={q}"));
            }
            m.lpq(p, q)
        }
    })
}

/// Thin singular value decomposition `m = left · diag(singulars) · rightᵀ`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `rows × k`, orthonormal columns.
    pub left: Mat,
    /// Non-increasing, non-negative, length `k = min(rows, cols)`.
    pub singulars: Vec<f64>,
    /// `cols × k`, orthonormal columns.
    pub right: Mat,
}

impl SvdFactors {
    /// Number of singular values above `RANK_CUTOFF · σ₁`.
    pub fn numerical_rank(&self) -> usize {
        numerical_rank_of(&self.singulars)
    }

    /// Rebuild `left · diag(values) · rightᵀ` using the first `values.len()` pairs.
    pub fn compose(&self, values: &[f64]) -> Mat {
        let (r, c) = (self.left.rows(), self.right.rows());
        let mut out = Mat::zeros(r, c);
        for (k, &s) in values.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for i in 0..r {
                let li = self.left[(i, k)] * s;
                if li == 0.0 {
                    continue;
                }
                let row = out.row_mut(i);
                for (j, o) in row.iter_mut().enumerate() {
                    *o += li * self.right[(j, k)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Mat {
        self.compose(&self.singulars)
    }
}

pub(crate) fn numerical_rank_of(singulars: &[f64]) -> usize {
    let top = singulars.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    singulars.iter().filter(|&&s| s > RANK_CUTOFF * top).count()
}

pub fn svd(m: &Mat) -> SvdFactors {
    let dm = m.to_nalgebra();
    let k = m.rows().min(m.cols());
    let decomposition = dm.svd(true, true);
    let u = decomposition.u.expect("left singular vectors requested");
    let v_t = decomposition.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..k).collect();
    let raw = decomposition.singular_values;
    // nalgebra already returns descending values; keep the order explicit.
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    let singulars = order.iter().map(|&i| raw[i].max(0.0)).collect();
    let left = Mat::from_fn(m.rows(), k, |i, j| u[(i, order[j])]);
    let right = Mat::from_fn(m.cols(), k, |i, j| v_t[(order[j], i)]);
    SvdFactors { left, singulars, right }
}

/// Singular values only, non-increasing.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.to_nalgebra().singular_values().iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn numerical_rank(m: &Mat) -> usize {
    numerical_rank_of(&singular_values(m))
}

/// Proximal map of `tau · ‖·‖_*`: singular value soft-thresholding.
pub fn soft_threshold(m: &Mat, tau: f64) -> Result<Mat> {
    Ok(prox_nuclear(m, tau)?.0)
}

/// Soft-thresholding that also returns the nuclear norm of the result.
pub fn prox_nuclear(m: &Mat, tau: f64) -> Result<(Mat, f64)> {
    if !(tau >= 0.0) {
        return arg_err(format!("threshold must be non-negative, got {tau}"));
    }
    let f = svd(m);
    let shrunk: Vec<f64> = f.singulars.iter().map(|s| (s - tau).max(0.0)).collect();
    let keep = shrunk.iter().take_while(|&&s| s > 0.0).count();
    let nuclear = shrunk[..keep].iter().sum();
    Ok((f.compose(&shrunk[..keep]), nuclear))
}

/// Orthonormal bases of the row and column singular subspaces of `b`.
fn singular_subspaces(b: &Mat) -> (Mat, Mat, usize) {
    let f = svd(b);
    let r = f.numerical_rank();
    let left = Mat::from_fn(b.rows(), r.max(1), |i, j| if j < r { f.left[(i, j)] } else { 0.0 });
    let right = Mat::from_fn(b.cols(), r.max(1), |i, j| if j < r { f.right[(i, j)] } else { 0.0 });
    (left, right, r)
}

/// `P_{S_r^⊥(b)} · a · P_{S_c^⊥(b)}`.
pub fn project_perp(b: &Mat, a: &Mat) -> Result<Mat> {
    if !b.same_shape(a) {
        return dim_err(format!("projection of {:?} onto subspaces of {:?}", a.shape(), b.shape()));
    }
    let (u, v, r) = singular_subspaces(b);
    if r == 0 {
        return Ok(a.clone());
    }
    // (I - U Uᵀ) a
    let ut_a = u.transpose().matmul(a)?;
    let mut left_proj = a.clone();
    left_proj -= &u.matmul(&ut_a)?;
    // · (I - V Vᵀ)
    let av = left_proj.matmul(&v)?;
    let mut out = left_proj;
    out -= &av.matmul(&v.transpose())?;
    Ok(out)
}

/// `a − project_perp(b, a)`; has rank at most `2·rank(b)`.
pub fn project_parallel(b: &Mat, a: &Mat) -> Result<Mat> {
    let perp = project_perp(b, a)?;
    Ok(a - &perp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut r = rng::stream(seed, 0);
        Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
    }

    fn random_low_rank(d: usize, rank: usize, seed: u64) -> Mat {
        let l = random_mat(d, rank, seed);
        let r = random_mat(d, rank, seed + 1000);
        l.matmul(&r.transpose()).unwrap()
    }

    #[test]
    fn inner_product_basics() {
        let i3 = Mat::identity(3);
        assert_eq!(trace_inner(&i3, &i3).unwrap(), 3.0);
        let b = random_mat(3, 4, 1);
        let e = Mat::basis(3, 4, 1, 2);
        assert_eq!(trace_inner(&e, &b).unwrap(), b[(1, 2)]);
        assert!(matches!(
            trace_inner(&Mat::zeros(2, 2), &Mat::zeros(2, 3)),
            Err(crate::Error::Dimension(_))
        ));
    }

    #[test]
    fn inner_product_matches_double_loop() {
        let a = random_mat(4, 3, 2);
        let b = random_mat(4, 3, 3);
        let mut oracle = 0.0;
        for i in 0..4 {
            for j in 0..3 {
                oracle += a[(i, j)] * b[(i, j)];
            }
        }
        assert!((trace_inner(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn inner_product_symmetric_bilinear() {
        for seed in 0..10 {
            let a = random_mat(5, 4, 10 + seed);
            let b = random_mat(5, 4, 30 + seed);
            let c = random_mat(5, 4, 50 + seed);
            let (s, t) = (0.3 + seed as f64, -1.7);
            let ab = trace_inner(&a, &b).unwrap();
            assert!((ab - trace_inner(&b, &a).unwrap()).abs() < 1e-12);
            let mut comb = a.scaled(s);
            comb.axpy(t, &c);
            let lhs = trace_inner(&comb, &b).unwrap();
            let rhs = s * ab + t * trace_inner(&c, &b).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn simple_norms() {
        assert!((Mat::identity(6).nuclear() - 6.0).abs() < 1e-12);
        assert!((Mat::diag(&[3.0, 1.0]).operator() - 3.0).abs() < 1e-12);
        let m = Mat::from_rows(&[&[3.0, -4.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(m.linf(), 4.0);
        assert_eq!(m.max_row_norm(), 5.0);
        assert!((m.lpq(2.0, 2.0) - m.frobenius()).abs() < 1e-12);
        assert!((m.lpq(1.0, 1.0) - 8.0).abs() < 1e-12);
        assert!(norm(&m, NormKind::Lpq { p: 0.5, q: 1.0 }).is_err());
        assert_eq!(norm(&m, NormKind::Lpq { p: 2.0, q: f64::INFINITY }).unwrap(), 5.0);
    }

    #[test]
    fn nuclear_norm_matches_gram_eigenvalues() {
        let m = random_mat(5, 5, 4);
        let gram = m.transpose().matmul(&m).unwrap().to_nalgebra();
        let eig = gram.symmetric_eigen();
        let oracle: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
        assert!((m.nuclear() - oracle).abs() < 1e-9 * oracle);
    }

    #[test]
    fn svd_edge_cases() {
        let z = svd(&Mat::zeros(3, 2));
        assert!(z.singulars.iter().all(|&s| s == 0.0));
        let d = svd(&Mat::diag(&[2.0, 1.0]));
        assert!((d.singulars[0] - 2.0).abs() < 1e-14 && (d.singulars[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs_and_is_orthonormal() {
        for (r, c) in [(8, 6), (6, 8), (7, 7)] {
            let m = random_mat(r, c, 5 + r as u64);
            let f = svd(&m);
            let resid = (&f.reconstruct() - &m).frobenius() / m.frobenius();
            assert!(resid < 1e-9, "residual {resid}");
            let k = r.min(c);
            let ltl = f.left.transpose().matmul(&f.left).unwrap();
            let rtr = f.right.transpose().matmul(&f.right).unwrap();
            assert!((&ltl - &Mat::identity(k)).linf() < 1e-10);
            assert!((&rtr - &Mat::identity(k)).linf() < 1e-10);
            assert!(f.singulars.windows(2).all(|w| w[0] >= w[1]));
            assert!(f.singulars.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn svd_is_deterministic() {
        let m = random_mat(9, 7, 6);
        let a = svd(&m);
        let b = svd(&m);
        assert_eq!(a.left, b.left);
        assert_eq!(a.singulars, b.singulars);
        assert_eq!(a.right, b.right);
    }

    #[test]
    fn soft_threshold_cases() {
        let m = random_mat(5, 4, 7);
        let same = soft_threshold(&m, 0.0).unwrap();
        assert!((&same - &m).linf() < 1e-10);
        let shrunk = soft_threshold(&Mat::diag(&[3.0, 1.0]), 1.0).unwrap();
        assert!((&shrunk - &Mat::diag(&[2.0, 0.0])).linf() < 1e-12);
        assert!(matches!(soft_threshold(&m, -0.1), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn soft_threshold_is_locally_optimal() {
        let m = random_mat(6, 6, 8);
        let tau = 0.5;
        let x = soft_threshold(&m, tau).unwrap();
        let obj = |z: &Mat| 0.5 * (z - &m).frobenius_sq() + tau * z.nuclear();
        let base = obj(&x);
        let mut r = rng::stream(9, 1);
        for _ in 0..100 {
            let mut p = Mat::from_fn(6, 6, |_, _| StandardNormal.sample(&mut r));
            p.scale_mut(1e-3 / p.frobenius());
            assert!(obj(&(&x + &p)) >= base - 1e-12);
        }
    }

    #[test]
    fn soft_threshold_is_nonexpansive() {
        for seed in 0..20 {
            let a = random_mat(5, 6, 100 + seed);
            let b = random_mat(5, 6, 200 + seed);
            let pa = soft_threshold(&a, 0.7).unwrap();
            let pb = soft_threshold(&b, 0.7).unwrap();
            assert!((&pa - &pb).frobenius() <= (&a - &b).frobenius() + 1e-12);
        }
    }

    #[test]
    fn prox_reports_nuclear_norm() {
        let m = random_mat(6, 5, 11);
        let (x, nuc) = prox_nuclear(&m, 0.4).unwrap();
        assert!((x.nuclear() - nuc).abs() < 1e-9);
    }

    #[test]
    fn duality_of_operator_and_nuclear() {
        for seed in 0..10 {
            let a = random_mat(6, 5, 300 + seed);
            let b = random_mat(6, 5, 400 + seed);
            let lhs = trace_inner(&a, &b).unwrap();
            assert!(lhs <= a.operator() * b.nuclear() + 1e-10);
            let f = svd(&a);
            let top = Mat::outer(&f.left.column(0), &f.right.column(0));
            let attained = trace_inner(&a, &top).unwrap();
            assert!((attained - a.operator() * top.nuclear()).abs() < 1e-10 * (1.0 + attained));
        }
    }

    #[test]
    fn projections_full_rank_and_zero() {
        let b = random_mat(5, 5, 12);
        let a = random_mat(5, 5, 13);
        assert!((&project_parallel(&b, &a).unwrap() - &a).linf() < 1e-10);
        assert!(project_perp(&b, &a).unwrap().linf() < 1e-10);
        let zero = Mat::zeros(5, 5);
        assert_eq!(project_perp(&zero, &a).unwrap(), a);
        assert!(project_perp(&Mat::zeros(5, 4), &a).is_err());
    }

    #[test]
    fn projection_decomposition_and_rank() {
        let b = random_low_rank(8, 2, 14);
        let a = random_mat(8, 8, 15);
        let par = project_parallel(&b, &a).unwrap();
        let perp = project_perp(&b, &a).unwrap();
        assert!(numerical_rank(&par) <= 4);
        assert!((&(&par + &perp) - &a).linf() < 1e-10);
    }

    #[test]
    fn perp_projection_adds_nuclear_norms() {
        for seed in 0..10 {
            let b = random_low_rank(7, 2, 500 + seed);
            let a = random_mat(7, 7, 600 + seed);
            let perp = project_perp(&b, &a).unwrap();
            let lhs = (&b + &perp).nuclear();
            let rhs = b.nuclear() + perp.nuclear();
            assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs));
        }
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(Mat::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Mat::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Mat::new(0, 2, vec![]).is_err());
    }
}
