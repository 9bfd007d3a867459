//! Hyperparameter priors, log-posterior, adaptive Metropolis sampling and MAP plug-in.

use std::io::Write;
use std::path::Path;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gp::{MaternKernel, MeanSpec, PosteriorState, PriorModel, Regularity};
use crate::models::{AdditiveModel, ArModel, NoiseModel, Point};
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Map between a parameter's natural value and the scale it is sampled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    /// Sampled-scale value, or `None` outside the support.
    pub fn forward(self, natural: f64) -> Option<f64> {
        match self {
            Self::Identity => natural.is_finite().then_some(natural),
            Self::Log => (natural > 0.0 && natural.is_finite()).then(|| natural.ln()),
        }
    }

    pub fn inverse(self, sampled: f64) -> f64 {
        match self {
            Self::Identity => sampled,
            Self::Log => sampled.exp(),
        }
    }
}

/// Marginal prior density on the sampled scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    /// Improper uniform.
    Flat,
    Normal { mean: f64, sd: f64 },
}

impl Prior {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !mean.is_finite() {
            return Err(Error::Invalid(format!("normal prior needs sd > 0, got {sd}")));
        }
        Ok(Self::Normal { mean, sd })
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Self::Flat => 0.0,
            Self::Normal { mean, sd } => {
                let t = (x - mean) / sd;
                -0.5 * t * t - sd.ln() - LN_SQRT_2PI
            }
        }
    }
}

/// One hyperparameter: its transform, marginal prior and initial (or fixed) natural value.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub transform: Transform,
    pub prior: Prior,
    pub init: f64,
    pub fixed: bool,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, transform: Transform, prior: Prior, init: f64) -> Self {
        Self {
            name: name.into(),
            transform,
            prior,
            init,
            fixed: false,
        }
    }

    pub fn fixed(mut self) -> Self {
        self.fixed = true;
        self
    }
}

/// Joint Gaussian prior over a group of sampled-scale parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct JointNormal {
    pub indices: Vec<usize>,
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl JointNormal {
    pub fn new(indices: Vec<usize>, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = indices.len();
        if mean.len() != k || cov.nrows() != k || cov.ncols() != k {
            return Err(Error::Invalid("joint prior dimensions differ".into()));
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Invalid("joint prior covariance is not positive definite".into()))?
            .unpack();
        let log_det_half: f64 = chol.diagonal().iter().map(|d| d.ln()).sum();
        Ok(Self {
            indices,
            mean: DVector::from_vec(mean),
            chol,
            log_norm: -log_det_half - k as f64 * LN_SQRT_2PI,
        })
    }

    pub fn log_density(&self, sampled: &[f64]) -> f64 {
        let mut r = DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| sampled[i])) - &self.mean;
        if !self.chol.solve_lower_triangular_mut(&mut r) {
            return f64::NEG_INFINITY;
        }
        self.log_norm - 0.5 * r.norm_squared()
    }
}

/// A parametric family of multi-fidelity priors and noise models.
pub trait ModelFamily: Send + Sync {
    type Model: PriorModel + Clone + Send + Sync;

    fn specs(&self) -> &[ParamSpec];

    fn joint_priors(&self) -> &[JointNormal] {
        &[]
    }

    /// Builds the prior and noise model from natural parameter values (one per spec).
    fn build(&self, natural: &[f64]) -> Result<(Self::Model, NoiseModel)>;
}

fn matern(variance: f64, rates: &[f64], regularity: Regularity) -> Result<MaternKernel> {
    MaternKernel::new(variance, rates.iter().map(|a| 1.0 / a).collect(), regularity)
}

/// Autoregressive family: per level a variance and inverse lengthscales, plus the
/// regression coefficients; constant means with flat priors.
#[derive(Debug, Clone)]
pub struct ArFamily {
    levels: Vec<f64>,
    dim: usize,
    regularity: Regularity,
    specs: Vec<ParamSpec>,
}

impl ArFamily {
    /// Weakly informative defaults: `log σ² ~ N(2 log 0.2, log(100)²)`,
    /// `log a ~ N(log 2, log(10)²)`, `ρ ~ N(1, 2²)`.
    pub fn new(levels: Vec<f64>, dim: usize, regularity: Regularity) -> Result<Self> {
        if levels.is_empty() || dim == 0 {
            return Err(Error::Invalid("AR family needs levels and a dimension".into()));
        }
        let mut specs = Vec::new();
        for s in 0..levels.len() {
            specs.push(ParamSpec::new(
                format!("sigma2_{}", s + 1),
                Transform::Log,
                Prior::normal(2.0 * 0.2f64.ln(), 100f64.ln())?,
                1.0,
            ));
            for d in 0..dim {
                specs.push(ParamSpec::new(
                    format!("a_{}_{}", s + 1, d + 1),
                    Transform::Log,
                    Prior::normal(2f64.ln(), 10f64.ln())?,
                    2.0,
                ));
            }
        }
        for s in 0..levels.len() - 1 {
            specs.push(ParamSpec::new(
                format!("rho_{}", s + 1),
                Transform::Identity,
                Prior::normal(1.0, 2.0)?,
                1.0,
            ));
        }
        Ok(Self {
            levels,
            dim,
            regularity,
            specs,
        })
    }

    pub fn specs_mut(&mut self) -> &mut [ParamSpec] {
        &mut self.specs
    }
}

impl ModelFamily for ArFamily {
    type Model = ArModel;

    fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    fn build(&self, p: &[f64]) -> Result<(ArModel, NoiseModel)> {
        let s_n = self.levels.len();
        let per = 1 + self.dim;
        let kernels = (0..s_n)
            .map(|s| matern(p[s * per], &p[s * per + 1..(s + 1) * per], self.regularity))
            .collect::<Result<Vec<_>>>()?;
        let rho = p[s_n * per..].to_vec();
        let model = ArModel::new(self.levels.clone(), kernels, MeanSpec::Unknown, rho)?;
        Ok((model, NoiseModel::zero(self.levels.clone())))
    }
}

/// Additive family: base variance and inverse lengthscales, error inverse
/// lengthscales, amplitude `G`, exponent `L`, and one noise variance per level.
#[derive(Debug, Clone)]
pub struct AdditiveFamily {
    levels: Vec<f64>,
    dim: usize,
    regularity: Regularity,
    specs: Vec<ParamSpec>,
    joint: Vec<JointNormal>,
    mean: MeanSpec,
}

/// Scale and location hints for the additive family's default priors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditivePriorHints {
    /// Width of the input box per dimension.
    pub widths: Vec<f64>,
    /// Empirical variance of the initial responses.
    pub response_var: f64,
    /// Correlation length of `log λ` over `log δ`.
    pub noise_corr_length: f64,
}

impl AdditiveFamily {
    /// Log-normal priors centred on data-scale heuristics: `σ₀²` at the response
    /// variance, lengthscales at half the box width, `G` at 1, `L` at 1 and
    /// `λ(δ)` at a tenth of the response variance, jointly Gaussian over levels
    /// (a common offset plus an exponentially correlated deviation in `log δ`).
    pub fn new(levels: Vec<f64>, regularity: Regularity, hints: &AdditivePriorHints) -> Result<Self> {
        let dim = hints.widths.len();
        if levels.is_empty() || dim == 0 || !(hints.response_var > 0.0) || !(hints.noise_corr_length > 0.0) {
            return Err(Error::Invalid("invalid additive family configuration".into()));
        }
        let wide = 10f64.ln();
        let v = hints.response_var;
        let mut specs = vec![ParamSpec::new("sigma2", Transform::Log, Prior::normal(v.ln(), wide)?, v)];
        for (d, w) in hints.widths.iter().enumerate() {
            specs.push(ParamSpec::new(
                format!("a0_{}", d + 1),
                Transform::Log,
                Prior::normal((2.0 / w).ln(), wide)?,
                2.0 / w,
            ));
        }
        for (d, w) in hints.widths.iter().enumerate() {
            specs.push(ParamSpec::new(
                format!("aeps_{}", d + 1),
                Transform::Log,
                Prior::normal((2.0 / w).ln(), wide)?,
                2.0 / w,
            ));
        }
        specs.push(ParamSpec::new("G", Transform::Log, Prior::normal(0.0, wide)?, 1.0));
        specs.push(ParamSpec::new("L", Transform::Log, Prior::normal(0.0, 2f64.ln())?, 1.0));
        let first_noise = specs.len();
        for s in 0..levels.len() {
            specs.push(ParamSpec::new(format!("lambda_{}", s + 1), Transform::Log, Prior::Flat, v / 10.0));
        }
        let k = levels.len();
        let offset = 100f64.ln();
        let cov = DMatrix::from_fn(k, k, |i, j| {
            offset * offset + wide * wide * (-(levels[i].ln() - levels[j].ln()).abs() / hints.noise_corr_length).exp()
        });
        let joint = vec![JointNormal::new(
            (first_noise..first_noise + k).collect(),
            vec![(v / 10.0).ln(); k],
            cov,
        )?];
        Ok(Self {
            levels,
            dim,
            regularity,
            specs,
            joint,
            mean: MeanSpec::Unknown,
        })
    }

    /// Every parameter fixed at the given natural values (known-model use).
    pub fn with_fixed_values(mut self, values: &[f64]) -> Result<Self> {
        if values.len() != self.specs.len() {
            return Err(Error::Invalid("one value per parameter is required".into()));
        }
        for (s, v) in self.specs.iter_mut().zip(values) {
            s.init = *v;
            s.fixed = true;
        }
        Ok(self)
    }

    pub fn with_mean(mut self, mean: MeanSpec) -> Self {
        self.mean = mean;
        self
    }

    pub fn specs_mut(&mut self) -> &mut [ParamSpec] {
        &mut self.specs
    }

    /// Position of the noise variance of level `s` in the parameter vector.
    pub fn noise_index(&self, s: usize) -> usize {
        3 + 2 * self.dim + s
    }
}

impl ModelFamily for AdditiveFamily {
    type Model = AdditiveModel;

    fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    fn joint_priors(&self) -> &[JointNormal] {
        &self.joint
    }

    fn build(&self, p: &[f64]) -> Result<(AdditiveModel, NoiseModel)> {
        let d = self.dim;
        let base = matern(p[0], &p[1..1 + d], self.regularity)?;
        let error = matern(1.0, &p[1 + d..1 + 2 * d], self.regularity)?;
        let model = AdditiveModel::new(base, error, p[1 + 2 * d], p[2 + 2 * d], self.mean.clone())?;
        let noise = NoiseModel::new(self.levels.clone(), p[3 + 2 * d..].to_vec())?;
        Ok((model, noise))
    }
}

/// A fully known model: no hyperparameters to infer.
#[derive(Debug, Clone)]
pub struct KnownModel<M> {
    pub model: M,
    pub noise: NoiseModel,
}

impl<M: PriorModel + Clone + Send + Sync> ModelFamily for KnownModel<M> {
    type Model = M;

    fn specs(&self) -> &[ParamSpec] {
        &[]
    }

    fn build(&self, _: &[f64]) -> Result<(M, NoiseModel)> {
        Ok((self.model.clone(), self.noise.clone()))
    }
}

/// Log-posterior of the free hyperparameters (sampled scale) given data.
pub struct LogPosterior<'a, F: ModelFamily> {
    family: &'a F,
    points: &'a [Point],
    responses: &'a [f64],
    free: Vec<usize>,
}

impl<'a, F: ModelFamily> LogPosterior<'a, F> {
    pub fn new(family: &'a F, points: &'a [Point], responses: &'a [f64]) -> Result<Self> {
        if points.len() != responses.len() {
            return Err(Error::Invalid("points and responses differ in length".into()));
        }
        let free = (0..family.specs().len()).filter(|&i| !family.specs()[i].fixed).collect();
        Ok(Self {
            family,
            points,
            responses,
            free,
        })
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free.iter().map(|&i| self.family.specs()[i].name.clone()).collect()
    }

    /// Sampled-scale initial values of the free parameters.
    pub fn init_free(&self) -> Result<Vec<f64>> {
        self.free
            .iter()
            .map(|&i| {
                let s = &self.family.specs()[i];
                s.transform
                    .forward(s.init)
                    .ok_or_else(|| Error::Invalid(format!("initial {} = {} outside support", s.name, s.init)))
            })
            .collect()
    }

    /// Full sampled-scale vector from the free coordinates.
    fn full_sampled(&self, free: &[f64]) -> Option<Vec<f64>> {
        let specs = self.family.specs();
        let mut full = Vec::with_capacity(specs.len());
        let mut k = 0;
        for (i, s) in specs.iter().enumerate() {
            if self.free.get(k) == Some(&i) {
                full.push(free[k]);
                k += 1;
            } else {
                full.push(s.transform.forward(s.init)?);
            }
        }
        Some(full)
    }

    /// Natural parameter values (one per spec) from the free coordinates.
    pub fn natural(&self, free: &[f64]) -> Vec<f64> {
        let specs = self.family.specs();
        let mut k = 0;
        specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if self.free.get(k) == Some(&i) {
                    k += 1;
                    s.transform.inverse(free[k - 1])
                } else {
                    s.init
                }
            })
            .collect()
    }

    fn log_prior(&self, full: &[f64]) -> f64 {
        let marg: f64 = self
            .family
            .specs()
            .iter()
            .zip(full)
            .filter(|(s, _)| !s.fixed)
            .map(|(s, x)| s.prior.log_density(*x))
            .sum();
        let joint: f64 = self.family.joint_priors().iter().map(|j| j.log_density(full)).sum();
        marg + joint
    }

    /// Posterior state and noise model at the given free coordinates.
    pub fn fit(&self, free: &[f64]) -> Result<(PosteriorState<F::Model>, NoiseModel)> {
        let (model, noise) = self.family.build(&self.natural(free))?;
        let nv = self.points.iter().map(|p| noise.at(p)).collect::<Result<Vec<_>>>()?;
        let state = PosteriorState::fit(model, self.points.to_vec(), self.responses.to_vec(), nv)?;
        Ok((state, noise))
    }

    /// Log-posterior density (up to a constant) on the sampled scale; `−∞` when invalid.
    pub fn eval(&self, free: &[f64]) -> f64 {
        if free.len() != self.free.len() || free.iter().any(|x| !x.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let Some(full) = self.full_sampled(free) else {
            return f64::NEG_INFINITY;
        };
        let lp = self.log_prior(&full);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.fit(free) {
            Ok((s, _)) => {
                let v = s.log_marginal_likelihood() + lp;
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Log-posterior at natural values of the free parameters; `−∞` outside support.
    pub fn eval_natural(&self, natural_free: &[f64]) -> f64 {
        let specs = self.family.specs();
        let sampled: Option<Vec<f64>> = self
            .free
            .iter()
            .zip(natural_free)
            .map(|(&i, &v)| specs[i].transform.forward(v))
            .collect();
        sampled.map_or(f64::NEG_INFINITY, |s| self.eval(&s))
    }
}

/// Tuning of the adaptive Metropolis sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOptions {
    /// Iterations before the empirical covariance is used.
    pub warmup: usize,
    /// Proposal standard deviation per coordinate before adaptation.
    pub initial_sd: f64,
    /// Covariance floor `ε·I`.
    pub epsilon: f64,
    /// Recompute the proposal factor every this many iterations.
    pub refresh: usize,
}

impl Default for MhOptions {
    fn default() -> Self {
        Self {
            warmup: 200,
            initial_sd: 0.1,
            epsilon: 1e-8,
            refresh: 20,
        }
    }
}

/// Samples of an MCMC run; row 0 is the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    pub proposal_cov: DMatrix<f64>,
    pub accepted: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        let moves = self.samples.len().saturating_sub(1);
        if moves == 0 {
            0.0
        } else {
            self.accepted as f64 / moves as f64
        }
    }

    /// Index of the highest log-posterior sample (first on ties).
    pub fn best(&self) -> usize {
        let mut b = 0;
        for (i, v) in self.log_post.iter().enumerate() {
            if *v > self.log_post[b] {
                b = i;
            }
        }
        b
    }

    /// CSV with columns `iteration, log_post, <names>`.
    pub fn write_csv(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "iteration,log_post,{}", names.join(",")).map_err(|e| Error::io(path, e))?;
        for (i, (s, lp)) in self.samples.iter().zip(&self.log_post).enumerate() {
            let vals: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{i},{lp},{}", vals.join(",")).map_err(|e| Error::io(path, e))?;
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Adaptive Metropolis (Haario et al.) with proposal `(2.38²/d)(Σ̂ + εI)` after warm-up.
pub fn adaptive_mh<L>(log_post: L, init: &[f64], n_iter: usize, seed: u64, opts: MhOptions) -> Result<Chain>
where
    L: Fn(&[f64]) -> f64,
{
    let d = init.len();
    let lp0 = log_post(init);
    if !lp0.is_finite() {
        return Err(Error::InitInvalid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 2.38 * 2.38 / d.max(1) as f64;
    let mut cov = DMatrix::identity(d, d) * (opts.initial_sd * opts.initial_sd);
    let mut factor = cov.clone().cholesky().map(|c| c.unpack()).ok_or(Error::InitInvalid)?;

    let mut samples = Vec::with_capacity(n_iter + 1);
    let mut trace = Vec::with_capacity(n_iter + 1);
    samples.push(init.to_vec());
    trace.push(lp0);
    let mut x = DVector::from_column_slice(init);
    let mut lp = lp0;
    let mut mean = x.clone();
    let mut m2 = DMatrix::zeros(d, d);
    let mut count = 1usize;
    let mut accepted = 0;

    for t in 1..=n_iter {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prop = &x + &factor * z;
        let lp_prop = log_post(prop.as_slice());
        let log_u: f64 = rng.gen::<f64>().ln();
        if lp_prop.is_finite() && log_u < lp_prop - lp {
            x = prop;
            lp = lp_prop;
            accepted += 1;
        }
        samples.push(x.as_slice().to_vec());
        trace.push(lp);

        // Welford update of the empirical mean and covariance
        count += 1;
        let delta = &x - &mean;
        mean += &delta / count as f64;
        let delta2 = &x - &mean;
        m2 += &delta * delta2.transpose();

        if t >= opts.warmup && t % opts.refresh.max(1) == 0 {
            let emp = &m2 / (count - 1) as f64;
            let c = (emp + DMatrix::identity(d, d) * opts.epsilon) * scale;
            if let Some(ch) = c.clone().cholesky() {
                factor = ch.unpack();
                cov = c;
            }
        }
    }
    Ok(Chain {
        samples,
        log_post: trace,
        proposal_cov: cov,
        accepted,
    })
}

struct NegLogPost<'a, L> {
    f: &'a L,
}

impl<L: Fn(&[f64]) -> f64> CostFunction for NegLogPost<'_, L> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let v = (self.f)(p);
        Ok(if v.is_finite() { -v } else { f64::INFINITY })
    }
}

/// Derivative-free local maximization (Nelder–Mead) from the chain's best sample.
/// The result is never worse than that sample.
pub fn map_estimate<L>(chain: &Chain, log_post: L, max_iters: u64) -> Result<(Vec<f64>, f64)>
where
    L: Fn(&[f64]) -> f64,
{
    if chain.is_empty() {
        return Err(Error::Invalid("empty chain".into()));
    }
    let b = chain.best();
    let start = chain.samples[b].clone();
    let start_val = log_post(&start);
    let d = start.len();
    if d == 0 || max_iters == 0 {
        return Ok((start, start_val));
    }
    let mut simplex = vec![start.clone()];
    for i in 0..d {
        let step = chain.proposal_cov[(i, i)].sqrt().clamp(1e-3, 1.0);
        let mut v = start.clone();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-15)
        .map_err(|e| Error::Invalid(format!("optimizer setup: {e}")))?;
    let res = Executor::new(NegLogPost { f: &log_post }, solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::Invalid(format!("optimizer: {e}")))?;
    let state = res.state();
    match state.get_best_param() {
        Some(p) if -state.get_best_cost() > start_val => Ok((p.clone(), -state.get_best_cost())),
        _ => Ok((start, start_val)),
    }
}
