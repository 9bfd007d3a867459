//! Test problems: the Forrester pair, a random damped oscillator and a sampled-GP toy.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gp::{cholesky_with_jitter, JitterPolicy, MaternKernel, MeanSpec, PriorModel, Regularity};
use crate::models::{level_index, AdditiveModel, Point};
use crate::{Error, Result};

/// Low-fidelity Forrester function.
pub fn forrester_lf(u: f64) -> f64 {
    0.5 * forrester_shape(u) + 10.0 * (u - 0.5)
}

/// High-fidelity Forrester function.
pub fn forrester_hf(u: f64) -> f64 {
    forrester_shape(u) + 10.0
}

fn forrester_shape(u: f64) -> f64 {
    (6.0 * u - 2.0).powi(2) * (12.0 * u - 4.0).sin()
}

/// Evaluation cost as a function of the fidelity parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    Table { levels: Vec<f64>, costs: Vec<f64> },
    /// `C(δ) = a/δ + b`.
    Affine { a: f64, b: f64 },
}

impl CostModel {
    pub fn table(levels: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        if levels.len() != costs.len() || levels.is_empty() {
            return Err(Error::Invalid("cost table needs one cost per level".into()));
        }
        if costs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Invalid("costs must be positive".into()));
        }
        Ok(Self::Table { levels, costs })
    }

    pub fn affine(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b >= 0.0) {
            return Err(Error::Invalid(format!("affine cost needs a > 0, b >= 0, got {a}, {b}")));
        }
        Ok(Self::Affine { a, b })
    }

    pub fn cost(&self, delta: f64) -> Result<f64> {
        match self {
            Self::Table { levels, costs } => Ok(costs[level_index(levels, delta)?]),
            Self::Affine { a, b } => {
                if !(delta > 0.0) {
                    return Err(Error::UnknownLevel(delta));
                }
                Ok(a / delta + b)
            }
        }
    }
}

pub fn cost_eval(cm: &CostModel, delta: f64) -> Result<f64> {
    cm.cost(delta)
}

/// Random damped harmonic oscillator driven by white noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorConfig {
    pub omega0: f64,
    pub zeta: f64,
    pub delta: f64,
    pub t_end: f64,
    /// Spectral intensity of the driving noise.
    pub s: f64,
    pub z_crit: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            zeta: 0.1,
            delta: 0.01,
            t_end: 30.0,
            s: 1.0,
            z_crit: -3.0,
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0) || !(self.zeta >= 0.0) || !(self.delta > 0.0) || !(self.delta <= self.t_end) || !(self.s >= 0.0) {
            return Err(Error::Invalid(format!("invalid oscillator configuration {self:?}")));
        }
        Ok(())
    }

    /// Number of steps `⌊t_end/δ⌋`, robust to representation error in `δ`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.delta + 1e-9).floor() as usize
    }
}

/// `exp(M)` for a real 2×2 matrix, from the characteristic roots.
pub fn expm2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let s = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = s * s - det;
    // exp(M) = c0·I + c1·(M − sI)
    let (c0, c1) = if disc > 0.0 {
        let q = disc.sqrt();
        if q < 1e-8 {
            let e = s.exp();
            (e * (1.0 + 0.5 * disc), e * (1.0 + disc / 6.0))
        } else {
            let (ep, em) = ((s + q).exp(), (s - q).exp());
            (0.5 * (ep + em), 0.5 * (ep - em) / q)
        }
    } else if disc < 0.0 {
        let w = (-disc).sqrt();
        let e = s.exp();
        if w < 1e-8 {
            (e * (1.0 + 0.5 * disc), e * (1.0 + disc / 6.0))
        } else {
            (e * w.cos(), e * w.sin() / w)
        }
    } else {
        let e = s.exp();
        (e, e)
    };
    [
        [c0 + c1 * (m[0][0] - s), c1 * m[0][1]],
        [c1 * m[1][0], c0 + c1 * (m[1][1] - s)],
    ]
}

/// Propagator `exp(Aδ)` of the oscillator.
pub fn oscillator_flow(omega0: f64, zeta: f64, delta: f64) -> [[f64; 2]; 2] {
    expm2([
        [0.0, delta],
        [-omega0 * omega0 * delta, -2.0 * zeta * omega0 * delta],
    ])
}

/// Exponential Euler path from `start`; returns the states after each of the `K` steps.
pub fn exp_euler_from(cfg: &OscillatorConfig, start: (f64, f64), seed: u64) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let f = oscillator_flow(cfg.omega0, cfg.zeta, cfg.delta);
    let kick = (2.0 * std::f64::consts::PI * cfg.s * cfg.delta).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut v) = start;
    let k = cfg.n_steps();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let u: f64 = rng.sample(StandardNormal);
        let vv = v + kick * u;
        let nx = f[0][0] * x + f[0][1] * vv;
        let nv = f[1][0] * x + f[1][1] * vv;
        x = nx;
        v = nv;
        out.push((x, v));
    }
    Ok(out)
}

/// Exponential Euler path started at rest.
pub fn exp_euler_trajectory(cfg: &OscillatorConfig, seed: u64) -> Result<Vec<(f64, f64)>> {
    exp_euler_from(cfg, (0.0, 0.0), seed)
}

/// `max_k log|X_k|`, ignoring steps where `X_k = 0`.
pub fn oscillator_response(cfg: &OscillatorConfig, seed: u64) -> Result<f64> {
    let best = exp_euler_trajectory(cfg, seed)?
        .iter()
        .map(|s| s.0.abs())
        .filter(|x| *x > 0.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(Error::AllZeroTrajectory);
    }
    Ok(best.ln())
}

/// Additive-model parameters of the sampled-GP toy problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub sigma0: f64,
    pub amplitude: f64,
    pub exponent: f64,
    pub rho0: f64,
    pub rho_eps: f64,
    pub noise_var: f64,
    pub levels: Vec<f64>,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            amplitude: 4.0,
            exponent: 2.0,
            rho0: 0.3,
            rho_eps: 0.1,
            noise_var: 0.16,
            levels: vec![1.0, 0.5, 0.2, 0.1],
        }
    }
}

impl ToyParams {
    pub fn model(&self) -> Result<AdditiveModel> {
        let var = self.sigma0 * self.sigma0;
        AdditiveModel::new(
            MaternKernel::isotropic(var, self.rho0, Regularity::FiveHalves, 1)?,
            MaternKernel::isotropic(var, self.rho_eps, Regularity::FiveHalves, 1)?,
            self.amplitude,
            self.exponent,
            MeanSpec::Known(vec![0.0]),
        )
    }
}

/// Draws paths of the toy GP on a regular grid over `[−0.5, 0.5]` at each level.
pub struct ToyGpSampler {
    grid: Vec<f64>,
    levels: Vec<f64>,
    chol: DMatrix<f64>,
    noise_sd: f64,
}

impl ToyGpSampler {
    /// `levels` may include `0` for the limit process `ξ₀`.
    pub fn new(params: &ToyParams, levels: Vec<f64>, grid_size: usize) -> Result<Self> {
        if grid_size < 2 || levels.is_empty() {
            return Err(Error::Invalid("toy sampler needs >= 2 grid points and a level".into()));
        }
        let model = params.model()?;
        let grid: Vec<f64> = (0..grid_size)
            .map(|i| -0.5 + i as f64 / (grid_size - 1) as f64)
            .collect();
        let pts: Vec<Point> = levels
            .iter()
            .flat_map(|&d| grid.iter().map(move |&u| Point::scalar(u, d)))
            .collect();
        let n = pts.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let c = model.covariance(&pts[i], &pts[j])?;
                k[(i, j)] = c;
                k[(j, i)] = c;
            }
        }
        let scale = k.diagonal().mean();
        let (chol, jitter) = cholesky_with_jitter(&k, scale, JitterPolicy::default()).ok_or(Error::CholeskyFailure {
            size: n,
            jitter: JitterPolicy::default().max * scale,
            mean_diag: scale,
            min_diag: k.diagonal().min(),
        })?;
        tracing::debug!(jitter, n, "toy sampler factorized");
        Ok(Self {
            grid,
            levels,
            chol,
            noise_sd: params.noise_var.sqrt(),
        })
    }

    pub fn sample(&self, seed: u64) -> ToyPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.chol.nrows();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = &self.chol * z;
        let m = self.grid.len();
        ToyPath {
            grid: self.grid.clone(),
            levels: self.levels.clone(),
            values: (0..self.levels.len())
                .map(|s| v.rows(s * m, m).iter().copied().collect())
                .collect(),
            noise_sd: self.noise_sd,
        }
    }
}

/// One sampled path of the toy GP, linearly interpolated between grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPath {
    grid: Vec<f64>,
    levels: Vec<f64>,
    values: Vec<Vec<f64>>,
    noise_sd: f64,
}

impl ToyPath {
    pub fn value(&self, x: &Point) -> Result<f64> {
        let s = level_index(&self.levels, x.delta)?;
        let u = x.u[0];
        let (lo, hi) = (self.grid[0], *self.grid.last().unwrap());
        if !(lo..=hi).contains(&u) {
            return Err(Error::Invalid(format!("toy input {u} outside [{lo}, {hi}]")));
        }
        let h = (hi - lo) / (self.grid.len() - 1) as f64;
        let i = (((u - lo) / h).floor() as usize).min(self.grid.len() - 2);
        let t = (u - self.grid[i]) / h;
        Ok((1.0 - t) * self.values[s][i] + t * self.values[s][i + 1])
    }

    /// Noisy observation of the path at `x`.
    pub fn observe<R: Rng>(&self, x: &Point, rng: &mut R) -> Result<f64> {
        Ok(self.value(x)? + self.noise_sd * rng.sample::<f64, _>(StandardNormal))
    }
}
