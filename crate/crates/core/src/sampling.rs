//! Measurement ensembles, the sampling operator and its adjoint, and data
//! generation under the linear model `y = 𝔛(B★) + ε`.
//!
//! Measurements are stored in structure-exploiting encodings and the operator
//! is always applied through them; [`Measurement::densify`] exists for
//! cross-checks only.
//!
//! For rectangular problems the matrix-completion scale is `d = √(d_r·d_c)`
//! and the multi-task feature variance is `d_r`, which keeps
//! `‖B‖_{L²(Π)} = ‖B‖_F` in both cases.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::{dot, Mat};
use crate::rng::{self, Stream};

/// Distribution of the scale `ξ` in matrix-completion measurements `ξ·e_r e_cᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum XiMode {
    /// `ξ = d` almost surely.
    Deterministic,
    /// `ξ ~ N(0, d²)`.
    #[default]
    Gaussian,
    /// `ξ = 1`: plain entry observations `y = B★_{rc} + ε`.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    MatrixCompletion { xi_mode: XiMode },
    MultiTask,
    GaussianEnsemble,
    FactoredMeasurement,
}

/// A measurement distribution Π over `d_r × d_c` matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub d_r: usize,
    pub d_c: usize,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, d_r: usize, d_c: usize) -> Result<Self> {
        if d_r == 0 || d_c == 0 {
            return arg_err("ensemble dimensions must be positive");
        }
        Ok(Self { kind, d_r, d_c })
    }

    pub fn square(kind: EnsembleKind, d: usize) -> Result<Self> {
        Self::new(kind, d, d)
    }

    pub fn matrix_completion(d: usize, xi_mode: XiMode) -> Result<Self> {
        Self::square(EnsembleKind::MatrixCompletion { xi_mode }, d)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d_r, self.d_c)
    }

    /// `√(d_r·d_c)`, the matrix-completion scale.
    fn mc_scale(&self) -> f64 {
        ((self.d_r * self.d_c) as f64).sqrt()
    }

    /// Short stable tag used in file headers and on the command line.
    pub fn tag(&self) -> &'static str {
        match self.kind {
            EnsembleKind::MatrixCompletion { xi_mode: XiMode::Gaussian } => "mc-gaussian",
            EnsembleKind::MatrixCompletion { xi_mode: XiMode::Deterministic } => "mc-deterministic",
            EnsembleKind::MatrixCompletion { xi_mode: XiMode::Plain } => "mc-plain",
            EnsembleKind::MultiTask => "multitask",
            EnsembleKind::GaussianEnsemble => "gaussian",
            EnsembleKind::FactoredMeasurement => "factored",
        }
    }

    pub fn kind_from_tag(tag: &str) -> Result<EnsembleKind> {
        Ok(match tag {
            "mc" | "mc-gaussian" => EnsembleKind::MatrixCompletion { xi_mode: XiMode::Gaussian },
            "mc-deterministic" => EnsembleKind::MatrixCompletion { xi_mode: XiMode::Deterministic },
            "mc-plain" => EnsembleKind::MatrixCompletion { xi_mode: XiMode::Plain },
            "multitask" => EnsembleKind::MultiTask,
            "gaussian" => EnsembleKind::GaussianEnsemble,
            "factored" => EnsembleKind::FactoredMeasurement,
            other => return arg_err(format!("unknown ensemble tag '{other}'")),
        })
    }
}

/// One measurement matrix `X_i` in structured form.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    /// `scale · e_row e_colᵀ`
    Entry { row: usize, col: usize, scale: f64 },
    /// `e_row · vecᵀ`
    RowVector { row: usize, vec: Vec<f64> },
    Dense(Mat),
    /// `u vᵀ`
    RankOne { u: Vec<f64>, v: Vec<f64> },
}

impl Measurement {
    /// `⟨b, X⟩` via the structured encoding.
    #[inline]
    pub fn inner(&self, b: &Mat) -> f64 {
        match self {
            Measurement::Entry { row, col, scale } => scale * b[(*row, *col)],
            Measurement::RowVector { row, vec } => dot(b.row(*row), vec),
            Measurement::Dense(x) => dot(x.as_slice(), b.as_slice()),
            Measurement::RankOne { u, v } => {
                let mut acc = 0.0;
                for (i, &ui) in u.iter().enumerate() {
                    if ui != 0.0 {
                        acc += ui * dot(b.row(i), v);
                    }
                }
                acc
            }
        }
    }

    /// `out += w · X`.
    #[inline]
    pub fn add_scaled_to(&self, out: &mut Mat, w: f64) {
        match self {
            Measurement::Entry { row, col, scale } => out[(*row, *col)] += w * scale,
            Measurement::RowVector { row, vec } => {
                for (o, &v) in out.row_mut(*row).iter_mut().zip(vec) {
                    *o += w * v;
                }
            }
            Measurement::Dense(x) => out.axpy(w, x),
            Measurement::RankOne { u, v } => {
                for (i, &ui) in u.iter().enumerate() {
                    let s = w * ui;
                    for (o, &vj) in out.row_mut(i).iter_mut().zip(v) {
                        *o += s * vj;
                    }
                }
            }
        }
    }

    pub fn densify(&self, d_r: usize, d_c: usize) -> Mat {
        let mut m = Mat::zeros(d_r, d_c);
        self.add_scaled_to(&mut m, 1.0);
        m
    }

    /// Whether the encoding is consistent with a `d_r × d_c` matrix.
    pub fn fits(&self, d_r: usize, d_c: usize) -> bool {
        match self {
            Measurement::Entry { row, col, scale } => *row < d_r && *col < d_c && scale.is_finite(),
            Measurement::RowVector { row, vec } => {
                *row < d_r && vec.len() == d_c && vec.iter().all(|v| v.is_finite())
            }
            Measurement::Dense(x) => x.shape() == (d_r, d_c),
            Measurement::RankOne { u, v } => {
                u.len() == d_r && v.len() == d_c && u.iter().chain(v).all(|x| x.is_finite())
            }
        }
    }
}

fn check_fits(ms: &[Measurement], d_r: usize, d_c: usize) -> Result<()> {
    match ms.iter().position(|m| !m.fits(d_r, d_c)) {
        Some(i) => dim_err(format!("measurement {i} does not fit a {d_r}x{d_c} matrix")),
        None => Ok(()),
    }
}

/// `[𝔛(b)]_i = ⟨b, X_i⟩`.
pub fn apply_operator(ms: &[Measurement], b: &Mat) -> Result<Vec<f64>> {
    check_fits(ms, b.rows(), b.cols())?;
    Ok(ms.iter().map(|m| m.inner(b)).collect())
}

/// `𝔛*(w) = Σ w_i X_i`.
pub fn adjoint_apply(ms: &[Measurement], w: &[f64], shape: (usize, usize)) -> Result<Mat> {
    if ms.len() != w.len() {
        return dim_err(format!("{} weights for {} measurements", w.len(), ms.len()));
    }
    check_fits(ms, shape.0, shape.1)?;
    let mut out = Mat::zeros(shape.0, shape.1);
    for (m, &wi) in ms.iter().zip(w) {
        if wi != 0.0 {
            m.add_scaled_to(&mut out, wi);
        }
    }
    Ok(out)
}

#[inline]
fn gauss(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_vec(len: usize, sd: f64, rng: &mut Stream) -> Vec<f64> {
    (0..len).map(|_| sd * gauss(rng)).collect()
}

/// Draw one measurement from Π.
pub fn sample_measurement(spec: &EnsembleSpec, rng: &mut Stream) -> Measurement {
    let (d_r, d_c) = spec.shape();
    match spec.kind {
        EnsembleKind::MatrixCompletion { xi_mode } => {
            let row = rng.random_range(0..d_r);
            let col = rng.random_range(0..d_c);
            let scale = match xi_mode {
                XiMode::Deterministic => spec.mc_scale(),
                XiMode::Gaussian => spec.mc_scale() * gauss(rng),
                XiMode::Plain => 1.0,
            };
            Measurement::Entry { row, col, scale }
        }
        EnsembleKind::MultiTask => {
            let row = rng.random_range(0..d_r);
            Measurement::RowVector { row, vec: normal_vec(d_c, (d_r as f64).sqrt(), rng) }
        }
        EnsembleKind::GaussianEnsemble => {
            Measurement::Dense(Mat::new(d_r, d_c, normal_vec(d_r * d_c, 1.0, rng)).expect("finite draws"))
        }
        EnsembleKind::FactoredMeasurement => {
            let u = normal_vec(d_r, 1.0, rng);
            let v = normal_vec(d_c, 1.0, rng);
            Measurement::RankOne { u, v }
        }
    }
}

/// `B★ = B_L B_Rᵀ` with i.i.d. standard normal factors of width `r`.
pub fn generate_ground_truth(d_r: usize, d_c: usize, r: usize, rng: &mut Stream) -> Result<Mat> {
    if r == 0 || r > d_r.min(d_c) {
        return arg_err(format!("rank {r} out of range for a {d_r}x{d_c} matrix"));
    }
    let left = Mat::new(d_r, r, normal_vec(d_r * r, 1.0, rng))?;
    let right = Mat::new(d_c, r, normal_vec(d_c * r, 1.0, rng))?;
    left.matmul(&right.transpose())
}

/// Observations from the linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: EnsembleSpec,
    pub measurements: Vec<Measurement>,
    pub y: Vec<f64>,
    /// Noise level used at generation.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Dataset {
    /// Assemble a dataset from parts, validating shapes.
    pub fn from_parts(
        spec: EnsembleSpec,
        measurements: Vec<Measurement>,
        y: Vec<f64>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if measurements.is_empty() {
            return arg_err("a dataset needs at least one observation");
        }
        if measurements.len() != y.len() {
            return dim_err(format!("{} measurements but {} responses", measurements.len(), y.len()));
        }
        check_fits(&measurements, spec.d_r, spec.d_c)?;
        if y.iter().any(|v| !v.is_finite()) {
            return arg_err("responses must be finite");
        }
        Ok(Self { spec, measurements, y, noise_sigma, seed })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.spec.shape()
    }

    pub fn apply(&self, b: &Mat) -> Result<Vec<f64>> {
        if b.shape() != self.shape() {
            return dim_err(format!("matrix {:?} does not match dataset {:?}", b.shape(), self.shape()));
        }
        Ok(self.measurements.iter().map(|m| m.inner(b)).collect())
    }

    pub fn adjoint(&self, w: &[f64]) -> Result<Mat> {
        if w.len() != self.n() {
            return dim_err(format!("{} weights for {} observations", w.len(), self.n()));
        }
        let mut out = Mat::zeros(self.spec.d_r, self.spec.d_c);
        for (m, &wi) in self.measurements.iter().zip(w) {
            if wi != 0.0 {
                m.add_scaled_to(&mut out, wi);
            }
        }
        Ok(out)
    }

    /// Observations at the given indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            spec: self.spec,
            measurements: indices.iter().map(|&i| self.measurements[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }

    /// Write the line-oriented text record.
    ///
    /// ```text
    /// tracereg-dataset 1
    /// kind <tag>
    /// dims <d_r> <d_c>
    /// n <n>
    /// seed <seed>
    /// sigma <sigma>
    /// E <y> <row> <col> <scale>
    /// R <y> <row> <v_1> … <v_dc>
    /// D <y> <x_11> … <x_{d_r d_c}>     (row-major)
    /// U <y> <u_1> … <u_dr> <v_1> … <v_dc>
    /// ```
    /// Reals use Rust's shortest round-trip formatting.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "tracereg-dataset 1")?;
        writeln!(w, "kind {}", self.spec.tag())?;
        writeln!(w, "dims {} {}", self.spec.d_r, self.spec.d_c)?;
        writeln!(w, "n {}", self.n())?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "sigma {:e}", self.noise_sigma)?;
        let join = |vals: &[f64]| vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        for (m, y) in self.measurements.iter().zip(&self.y) {
            match m {
                Measurement::Entry { row, col, scale } => writeln!(w, "E {y:e} {row} {col} {scale:e}")?,
                Measurement::RowVector { row, vec } => writeln!(w, "R {y:e} {row} {}", join(vec))?,
                Measurement::Dense(x) => writeln!(w, "D {y:e} {}", join(x.as_slice()))?,
                Measurement::RankOne { u, v } => writeln!(w, "U {y:e} {} {}", join(u), join(v))?,
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Dataset> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(Error::Format(format!("reading {what}: {e}"))),
                None => Err(Error::Format(format!("unexpected end of input before {what}"))),
            }
        };
        if next("header")?.trim() != "tracereg-dataset 1" {
            return Err(Error::Format("missing 'tracereg-dataset 1' header".into()));
        }
        let kind = EnsembleSpec::kind_from_tag(&field(&next("kind")?, "kind")?)?;
        let dims = field(&next("dims")?, "dims")?;
        let mut dims_it = dims.split_whitespace().map(parse_usize);
        let d_r = dims_it.next().ok_or_else(|| Error::Format("dims".into()))??;
        let d_c = dims_it.next().ok_or_else(|| Error::Format("dims".into()))??;
        let n = parse_usize(&field(&next("n")?, "n")?)?;
        let seed: u64 = field(&next("seed")?, "seed")?
            .parse()
            .map_err(|e| Error::Format(format!("seed: {e}")))?;
        let sigma = parse_f64(&field(&next("sigma")?, "sigma")?)?;
        let spec = EnsembleSpec::new(kind, d_r, d_c)?;
        let mut measurements = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let line = next(&format!("observation {i}"))?;
            let mut tok = line.split_whitespace();
            let tag = tok.next().ok_or_else(|| Error::Format(format!("empty observation line {i}")))?;
            let yi = parse_f64(tok.next().ok_or_else(|| Error::Format(format!("observation {i} lacks y")))?)?;
            let rest: Vec<&str> = tok.collect();
            let reals = |s: &[&str]| s.iter().map(|t| parse_f64(t)).collect::<Result<Vec<f64>>>();
            let m = match (tag, rest.len()) {
                ("E", 3) => Measurement::Entry {
                    row: parse_usize(rest[0])?,
                    col: parse_usize(rest[1])?,
                    scale: parse_f64(rest[2])?,
                },
                ("R", len) if len == 1 + d_c => {
                    Measurement::RowVector { row: parse_usize(rest[0])?, vec: reals(&rest[1..])? }
                }
                ("D", len) if len == d_r * d_c => Measurement::Dense(Mat::new(d_r, d_c, reals(&rest)?)?),
                ("U", len) if len == d_r + d_c => {
                    Measurement::RankOne { u: reals(&rest[..d_r])?, v: reals(&rest[d_r..])? }
                }
                _ => return Err(Error::Format(format!("bad observation line {i}: tag '{tag}'"))),
            };
            measurements.push(m);
            y.push(yi);
        }
        Dataset::from_parts(spec, measurements, y, sigma, seed)
    }
}

fn field(line: &str, key: &str) -> Result<String> {
    let mut parts = line.splitn(2, ' ');
    match (parts.next(), parts.next()) {
        (Some(k), Some(v)) if k == key => Ok(v.trim().to_string()),
        _ => Err(Error::Format(format!("expected '{key} …', found '{line}'"))),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|e| Error::Format(format!("'{s}': {e}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|e| Error::Format(format!("'{s}': {e}")))
}

/// Draw `n` observations `y_i = ⟨B★, X_i⟩ + ε_i`, `ε_i ~ N(0, σ²)`.
///
/// Everything is drawn from stream 0 of `seed`, so the seed alone fixes the
/// dataset.
pub fn generate_dataset(spec: &EnsembleSpec, b_star: &Mat, n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return arg_err("n must be at least 1");
    }
    if !(sigma >= 0.0) {
        return arg_err(format!("noise level must be non-negative, got {sigma}"));
    }
    if b_star.shape() != spec.shape() {
        return dim_err(format!("B★ is {:?} but the ensemble is {:?}", b_star.shape(), spec.shape()));
    }
    let mut rng = rng::stream(seed, 0);
    let mut measurements = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let m = sample_measurement(spec, &mut rng);
        let noise = if sigma > 0.0 { sigma * gauss(&mut rng) } else { 0.0 };
        y.push(m.inner(b_star) + noise);
        measurements.push(m);
    }
    Ok(Dataset { spec: *spec, measurements, y, noise_sigma: sigma, seed })
}

/// Closed-form `‖b‖_{L²(Π)} = √E⟨b, X⟩²`.
pub fn l2pi_norm(spec: &EnsembleSpec, b: &Mat) -> f64 {
    match spec.kind {
        EnsembleKind::MatrixCompletion { xi_mode: XiMode::Plain } => b.frobenius() / spec.mc_scale(),
        _ => b.frobenius(),
    }
}

/// The spikiness norm 𝔑 attached to each ensemble.
pub fn spikiness_norm(spec: &EnsembleSpec, b: &Mat) -> f64 {
    match spec.kind {
        EnsembleKind::MatrixCompletion { xi_mode: XiMode::Plain } => 2.0 * b.linf(),
        EnsembleKind::MatrixCompletion { .. } => 2.0 * spec.mc_scale() * b.linf(),
        EnsembleKind::MultiTask => 2.0 * (spec.d_r as f64).sqrt() * b.max_row_norm(),
        EnsembleKind::GaussianEnsemble => 2.0 * b.frobenius(),
        EnsembleKind::FactoredMeasurement => 8.0 / std::f64::consts::LN_2.sqrt() * b.frobenius(),
    }
}

/// Orlicz exponent that 𝔑 dominates for each ensemble.
pub fn orlicz_exponent(spec: &EnsembleSpec) -> u32 {
    match spec.kind {
        EnsembleKind::FactoredMeasurement => 1,
        _ => 2,
    }
}

/// Per-ensemble constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConstants {
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Truncation level 𝔠.
    pub frak_c: f64,
    /// `inf ‖B‖_F² / 𝔑(B)²`.
    pub nu0: f64,
}

pub fn ensemble_constants(spec: &EnsembleSpec) -> EnsembleConstants {
    let area = (spec.d_r * spec.d_c) as f64;
    let (gamma, frak_c, nu0) = match spec.kind {
        EnsembleKind::MatrixCompletion { xi_mode: XiMode::Plain } => (1.0 / area, 9.0, 0.25),
        // 𝔑 = 2d‖·‖_∞ and ‖B‖_F ≥ ‖B‖_∞, tight at a single entry
        EnsembleKind::MatrixCompletion { .. } => (1.0, 9.0, 1.0 / (4.0 * area)),
        EnsembleKind::MultiTask => (1.0, 9.0, 1.0 / (4.0 * spec.d_r as f64)),
        EnsembleKind::GaussianEnsemble => (1.0, 9.0, 0.1),
        EnsembleKind::FactoredMeasurement => (1.0, 53.0, 0.1),
    };
    EnsembleConstants { gamma_min: gamma, gamma_max: gamma, frak_c, nu0 }
}
