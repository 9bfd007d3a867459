//! Gaussian-process conditioning: Matérn kernels, Gram assembly, Cholesky
//! posterior and log marginal likelihood.
//!
//! Constant means with a flat (improper uniform) prior are integrated out by
//! generalized least squares, so the posterior mean and covariance are the
//! universal-kriging ones and the likelihood is the restricted one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::models::Point;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Matérn regularity `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularity {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl Regularity {
    /// Matérn correlation at scaled distance `r = d/ρ ≥ 0`.
    pub fn correlation(self, r: f64) -> f64 {
        match self {
            Regularity::Half => (-r).exp(),
            Regularity::ThreeHalves => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            Regularity::FiveHalves => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

/// `σ² Π_j M_ν(|u_j − u'_j| / ρ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaternKernel {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    pub regularity: Regularity,
}

impl MaternKernel {
    pub fn new(variance: f64, lengthscales: Vec<f64>, regularity: Regularity) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::Invalid(format!("kernel variance must be > 0, got {variance}")));
        }
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::Invalid(format!("lengthscales must be > 0, got {lengthscales:?}")));
        }
        Ok(Self {
            variance,
            lengthscales,
            regularity,
        })
    }

    /// Same lengthscale along each of `dim` coordinates.
    pub fn isotropic(variance: f64, lengthscale: f64, regularity: Regularity, dim: usize) -> Result<Self> {
        Self::new(variance, vec![lengthscale; dim], regularity)
    }

    /// `σ² M_ν(d/ρ)` for a one-dimensional distance, using the first lengthscale.
    pub fn eval_distance(&self, d: f64) -> f64 {
        self.variance * self.regularity.correlation(d.abs() / self.lengthscales[0])
    }

    pub fn correlation(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| self.regularity.correlation((a - b).abs() / l))
            .product()
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        self.variance * self.correlation(u, v)
    }
}

/// Mean coefficients: known values, or unknown with a flat prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanSpec {
    Known(Vec<f64>),
    Unknown,
}

/// Prior over `ξ`: a covariance function plus a linear mean `h(x)ᵀβ`.
pub trait PriorModel: Send + Sync {
    fn covariance(&self, x: &Point, y: &Point) -> Result<f64>;
    fn mean_basis(&self, x: &Point) -> Result<Vec<f64>>;
    fn mean_spec(&self) -> &MeanSpec;
    /// Number of mean regression functions.
    fn mean_basis_len(&self) -> usize;

    fn prior_mean(&self, x: &Point) -> Result<f64> {
        Ok(match self.mean_spec() {
            MeanSpec::Known(beta) => self.mean_basis(x)?.iter().zip(beta).map(|(h, b)| h * b).sum(),
            MeanSpec::Unknown => 0.0,
        })
    }
}

/// Jitter escalation: `start · mean(diag K)`, ×10 per attempt, capped at `max · mean(diag K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub start: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            start: 1e-10,
            max: 1e-4,
        }
    }
}

/// Cholesky factorisation of `a + jitter·I` with escalating jitter.
/// Returns the lower factor and the absolute jitter that was added.
pub(crate) fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    scale: f64,
    policy: JitterPolicy,
) -> Option<(DMatrix<f64>, f64)> {
    let n = a.nrows();
    let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
    let mut rel = policy.start;
    loop {
        let jitter = rel * scale;
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Some((c.unpack(), jitter));
        }
        rel *= 10.0;
        if rel > policy.max * (1.0 + 1e-9) {
            return None;
        }
    }
}

fn solve_lower(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    if l.nrows() > 0 {
        assert!(l.solve_lower_triangular_mut(b));
    }
}

/// Conditioned GP: exposes `m_n` and `k_n`. Immutable after [`PosteriorState::fit`].
#[derive(Debug, Clone)]
pub struct PosteriorState<M> {
    model: M,
    points: Vec<Point>,
    responses: Vec<f64>,
    noise: Vec<f64>,
    /// Lower Cholesky factor of `K + diag(noise) + jitter·I`.
    chol: DMatrix<f64>,
    jitter: f64,
    beta: DVector<f64>,
    /// `L⁻¹H` and the Cholesky factor of `HᵀK⁻¹H`, present for unknown means.
    gls: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// `K⁻¹(z − Hβ)`.
    alpha: DVector<f64>,
    /// `L⁻¹(z − Hβ)`.
    whitened: DVector<f64>,
}

/// Whitened cross-covariances of a set of query points against the training set.
#[derive(Debug, Clone)]
pub struct Projection {
    pub points: Vec<Point>,
    /// Posterior mean at each point.
    pub mean: Vec<f64>,
    /// `L⁻¹ K(X, ·)`, shape `n × m`.
    w: DMatrix<f64>,
    /// `L_Q⁻¹ (H(·)ᵀ − FᵀW)`, shape `p × m`, unknown-mean case only.
    g: Option<DMatrix<f64>>,
}

impl Projection {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reduction of the prior covariance between query `i` of `self` and query `j` of `other`:
    /// `k(a, b) − k_n(a, b)`.
    pub fn reduction(&self, i: usize, other: &Projection, j: usize) -> f64 {
        let mut r = self.w.column(i).dot(&other.w.column(j));
        if let (Some(ga), Some(gb)) = (&self.g, &other.g) {
            r -= ga.column(i).dot(&gb.column(j));
        }
        r
    }

    /// All reductions `k(a_i, b_j) − k_n(a_i, b_j)` as a `len × other.len` matrix.
    pub fn reductions(&self, other: &Projection) -> DMatrix<f64> {
        let mut r = self.w.tr_mul(&other.w);
        if let (Some(ga), Some(gb)) = (&self.g, &other.g) {
            r -= ga.tr_mul(gb);
        }
        r
    }

    /// The projection restricted to the given query indices.
    pub fn select(&self, idx: &[usize]) -> Projection {
        Projection {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            mean: idx.iter().map(|&i| self.mean[i]).collect(),
            w: self.w.select_columns(idx),
            g: self.g.as_ref().map(|g| g.select_columns(idx)),
        }
    }
}

impl<M: PriorModel> PosteriorState<M> {
    pub fn fit(model: M, points: Vec<Point>, responses: Vec<f64>, noise: Vec<f64>) -> Result<Self> {
        Self::fit_with(model, points, responses, noise, JitterPolicy::default())
    }

    pub fn fit_with(
        model: M,
        points: Vec<Point>,
        responses: Vec<f64>,
        noise: Vec<f64>,
        policy: JitterPolicy,
    ) -> Result<Self> {
        let n = points.len();
        if responses.len() != n || noise.len() != n {
            return Err(Error::Invalid(format!(
                "{} points, {} responses and {} noise variances",
                n,
                responses.len(),
                noise.len()
            )));
        }
        if let Some(v) = noise.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Invalid(format!("negative noise variance {v}")));
        }

        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let c = model.covariance(&points[i], &points[j])?;
                gram[(i, j)] = c;
                gram[(j, i)] = c;
            }
        }
        let mean_diag = if n > 0 { gram.diagonal().mean() } else { 1.0 };
        let min_diag = if n > 0 { gram.diagonal().min() } else { 1.0 };
        for i in 0..n {
            gram[(i, i)] += noise[i];
        }
        let (chol, jitter) = cholesky_with_jitter(&gram, mean_diag, policy).ok_or(Error::CholeskyFailure {
            size: n,
            jitter: policy.max * mean_diag,
            mean_diag,
            min_diag,
        })?;

        let z = DVector::from_column_slice(&responses);
        let basis = basis_matrix(&model, &points)?;
        let p = basis.ncols();

        let (beta, gls) = match model.mean_spec() {
            MeanSpec::Known(b) => {
                if b.len() != p {
                    return Err(Error::Invalid(format!("expected {p} mean coefficients, got {}", b.len())));
                }
                (DVector::from_column_slice(b), None)
            }
            MeanSpec::Unknown => {
                if n < p {
                    return Err(Error::RankDeficientMean(n));
                }
                let mut f = basis.clone();
                solve_lower(&chol, &mut f);
                let mut zw = DMatrix::from_column_slice(n, 1, z.as_slice());
                solve_lower(&chol, &mut zw);
                let q = f.transpose() * &f;
                let q_scale = q.diagonal().mean();
                let lq = q
                    .clone()
                    .cholesky()
                    .map(|c| c.unpack())
                    .filter(|l| {
                        let d = l.diagonal();
                        d.min() > 1e-7 * d.max()
                    })
                    .or_else(|| {
                        cholesky_with_jitter(&q, q_scale, JitterPolicy { start: 1e-12, max: 1e-8 }).map(|r| r.0)
                    })
                    .ok_or(Error::RankDeficientMean(n))?;
                let rhs = f.transpose() * zw;
                let mut tmp = rhs;
                solve_lower(&lq, &mut tmp);
                assert!(lq.tr_solve_lower_triangular_mut(&mut tmp));
                (DVector::from_column_slice(tmp.as_slice()), Some((f, lq)))
            }
        };

        let resid = &z - &basis * &beta;
        let mut whitened = DMatrix::from_column_slice(n, 1, resid.as_slice());
        solve_lower(&chol, &mut whitened);
        let mut alpha = whitened.clone();
        if n > 0 {
            assert!(chol.tr_solve_lower_triangular_mut(&mut alpha));
        }

        Ok(Self {
            model,
            points,
            responses,
            noise,
            chol,
            jitter,
            beta,
            gls,
            alpha: DVector::from_column_slice(alpha.as_slice()),
            whitened: DVector::from_column_slice(whitened.as_slice()),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Mean coefficients (given, or their GLS estimate).
    pub fn beta(&self) -> &[f64] {
        self.beta.as_slice()
    }

    /// Whiten a set of query points against the training set.
    pub fn project(&self, pts: &[Point]) -> Result<Projection> {
        let n = self.len();
        let m = pts.len();
        let mut kx = DMatrix::zeros(n, m);
        for (j, q) in pts.iter().enumerate() {
            for (i, x) in self.points.iter().enumerate() {
                kx[(i, j)] = self.model.covariance(x, q)?;
            }
        }
        let hq = basis_matrix(&self.model, pts)?;
        let mut mean = &hq * &self.beta;
        if n > 0 {
            mean += kx.transpose() * &self.alpha;
        }
        let mut w = kx;
        solve_lower(&self.chol, &mut w);
        let g = match &self.gls {
            Some((f, lq)) => {
                let mut g = hq.transpose() - f.transpose() * &w;
                solve_lower(lq, &mut g);
                Some(g)
            }
            None => None,
        };
        Ok(Projection {
            points: pts.to_vec(),
            mean: mean.iter().copied().collect(),
            w,
            g,
        })
    }

    /// `k_n(a_i, b_j)` from two projections.
    pub fn cov_between(&self, a: &Projection, i: usize, b: &Projection, j: usize) -> Result<f64> {
        Ok(self.model.covariance(&a.points[i], &b.points[j])? - a.reduction(i, b, j))
    }

    /// Posterior means and variances at a set of points.
    pub fn predict(&self, pts: &[Point]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.project(pts)?;
        let var = (0..pts.len())
            .map(|i| self.cov_between(&p, i, &p, i).map(|v| v.max(0.0)))
            .collect::<Result<Vec<_>>>()?;
        Ok((p.mean, var))
    }

    /// Posterior covariance matrix `k_n(A, B)`.
    pub fn cov_matrix(&self, a: &[Point], b: &[Point]) -> Result<DMatrix<f64>> {
        let pa = self.project(a)?;
        let pb = self.project(b)?;
        let mut out = DMatrix::zeros(a.len(), b.len());
        for i in 0..a.len() {
            for j in 0..b.len() {
                out[(i, j)] = self.cov_between(&pa, i, &pb, j)?;
            }
        }
        Ok(out)
    }

    /// `(m_n(q1), k_n(q1, q2))`.
    pub fn posterior_mean_cov(&self, q1: &Point, q2: &Point) -> Result<(f64, f64)> {
        let p = self.project(&[q1.clone(), q2.clone()])?;
        let mut c = self.cov_between(&p, 0, &p, 1)?;
        if q1 == q2 {
            c = c.max(0.0);
        }
        Ok((p.mean[0], c))
    }

    /// Log marginal likelihood of the responses. With unknown means this is the
    /// restricted likelihood (means integrated against a flat prior).
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let quad = self.whitened.norm_squared();
        let logdet: f64 = self.chol.diagonal().iter().map(|d| d.ln()).sum();
        match &self.gls {
            None => -0.5 * quad - logdet - 0.5 * n * LN_2PI,
            Some((_, lq)) => {
                let p = lq.nrows() as f64;
                let logdet_q: f64 = lq.diagonal().iter().map(|d| d.ln()).sum();
                -0.5 * quad - logdet - logdet_q - 0.5 * (n - p) * LN_2PI
            }
        }
    }

    /// Refit with extra observations appended.
    pub fn with_observations(&self, pts: &[Point], z: &[f64], noise: &[f64]) -> Result<Self>
    where
        M: Clone,
    {
        let mut p = self.points.clone();
        p.extend_from_slice(pts);
        let mut r = self.responses.clone();
        r.extend_from_slice(z);
        let mut l = self.noise.clone();
        l.extend_from_slice(noise);
        Self::fit(self.model.clone(), p, r, l)
    }
}

fn basis_matrix<M: PriorModel>(model: &M, pts: &[Point]) -> Result<DMatrix<f64>> {
    let rows = pts.iter().map(|x| model.mean_basis(x)).collect::<Result<Vec<_>>>()?;
    let p = model.mean_basis_len();
    if let Some(r) = rows.iter().find(|r| r.len() != p) {
        return Err(Error::Invalid(format!("mean basis has {} entries, expected {p}", r.len())));
    }
    Ok(DMatrix::from_fn(pts.len(), p, |i, j| rows[i][j]))
}
