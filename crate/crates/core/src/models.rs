//! Multi-fidelity prior structures over `X = U × T` and the level-keyed noise model.
//!
//! Two families are provided. [`ArModel`] is the Kennedy–O'Hagan
//! autoregressive chain `ξ_s = ρ_{s-1} ξ_{s-1} + η_s` over a finite level set,
//! whose covariance is expanded in closed form. [`AdditiveModel`] is the
//! Brownian-type decomposition `ξ(u, δ) = ξ₀(u) + ε(u, δ)` with
//! `cov ε = min(δ, δ')^L k_ε(u, u')`, defined for continuous `δ ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::gp::{MaternKernel, MeanSpec, PriorModel};
use crate::{Error, Result};

/// Relative tolerance used when matching a fidelity value against a level table.
const LEVEL_RTOL: f64 = 1e-9;

/// Input location `(u, δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub u: Vec<f64>,
    pub delta: f64,
}

impl Point {
    pub fn new(u: Vec<f64>, delta: f64) -> Self {
        Self { u, delta }
    }

    pub fn scalar(u: f64, delta: f64) -> Self {
        Self { u: vec![u], delta }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Lexicographic order on `(u₁, …, u_d, δ)`, used for tie-breaking.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        for (a, b) in self.u.iter().zip(&other.u) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        self.delta.total_cmp(&other.delta)
    }
}

/// Ordered observations and their accumulated cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<Point>,
    pub responses: Vec<f64>,
    pub cost: f64,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: Point, z: f64, cost: f64) {
        self.points.push(x);
        self.responses.push(z);
        self.cost += cost;
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Index of `delta` in `levels`, matched up to a small relative tolerance.
pub fn level_index(levels: &[f64], delta: f64) -> Result<usize> {
    levels
        .iter()
        .position(|&l| (l - delta).abs() <= LEVEL_RTOL * l.abs().max(delta.abs()).max(1e-300))
        .ok_or(Error::UnknownLevel(delta))
}

/// Autoregressive multi-fidelity model over a finite, ordered level set.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    /// `δ₁ … δ_S`, lowest fidelity first.
    pub levels: Vec<f64>,
    /// One independent kernel per level (`η_s`).
    pub kernels: Vec<MaternKernel>,
    /// Constant means `m_s` of `η_s`, or unknown with a flat prior.
    pub means: MeanSpec,
    /// Regression coefficients `ρ_1 … ρ_{S-1}`.
    pub rho: Vec<f64>,
}

impl ArModel {
    pub fn new(levels: Vec<f64>, kernels: Vec<MaternKernel>, means: MeanSpec, rho: Vec<f64>) -> Result<Self> {
        let s = levels.len();
        if s < 2 {
            return Err(Error::Invalid("autoregressive model needs at least two levels".into()));
        }
        if kernels.len() != s || rho.len() != s - 1 {
            return Err(Error::Invalid(format!(
                "autoregressive model with {s} levels needs {s} kernels and {} coefficients",
                s - 1
            )));
        }
        if let MeanSpec::Known(m) = &means {
            if m.len() != s {
                return Err(Error::Invalid(format!("expected {s} level means, got {}", m.len())));
            }
        }
        Ok(Self {
            levels,
            kernels,
            means,
            rho,
        })
    }

    fn level(&self, x: &Point) -> Result<usize> {
        level_index(&self.levels, x.delta)
    }

    /// `Π_{j=i..s-1} ρ_j` with 0-based level indices (`i ≤ s`).
    fn rho_product(&self, i: usize, s: usize) -> f64 {
        self.rho[i..s].iter().product()
    }

    /// Prior covariance between `ξ(x)` and `ξ(x')`.
    pub fn cov(&self, x: &Point, y: &Point) -> Result<f64> {
        let (s, t) = (self.level(x)?, self.level(y)?);
        let lo = s.min(t);
        Ok((0..=lo)
            .map(|i| self.rho_product(i, s) * self.rho_product(i, t) * self.kernels[i].eval(&x.u, &y.u))
            .sum())
    }

    /// Prior mean, `Σ_i (Π_{j=i..s-1} ρ_j) m_i`; zero when the means are unknown.
    pub fn mean(&self, x: &Point) -> Result<f64> {
        let basis = self.basis(x)?;
        Ok(match &self.means {
            MeanSpec::Known(m) => basis.iter().zip(m).map(|(h, m)| h * m).sum(),
            MeanSpec::Unknown => 0.0,
        })
    }

    fn basis(&self, x: &Point) -> Result<Vec<f64>> {
        let s = self.level(x)?;
        Ok((0..self.levels.len())
            .map(|i| if i <= s { self.rho_product(i, s) } else { 0.0 })
            .collect())
    }
}

/// Covariance over the fidelity axis for the numerical-error term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FidelityCovariance {
    /// `r(δ, δ') = min(δ, δ')^L`.
    Brownian { exponent: f64 },
}

impl FidelityCovariance {
    pub fn eval(&self, d1: f64, d2: f64) -> f64 {
        match *self {
            FidelityCovariance::Brownian { exponent } => d1.min(d2).max(0.0).powf(exponent),
        }
    }
}

/// Additive model `ξ(u, δ) = ξ₀(u) + ε(u, δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveModel {
    /// Stationary kernel of `ξ₀` (carries σ₀²).
    pub base: MaternKernel,
    /// Correlation of the error term over `U`; its variance field is ignored.
    pub error: MaternKernel,
    /// Error amplitude `G`, relative to σ₀².
    pub amplitude: f64,
    pub fidelity: FidelityCovariance,
    pub mean: MeanSpec,
}

impl AdditiveModel {
    pub fn new(
        base: MaternKernel,
        error: MaternKernel,
        amplitude: f64,
        exponent: f64,
        mean: MeanSpec,
    ) -> Result<Self> {
        if amplitude < 0.0 || !amplitude.is_finite() {
            return Err(Error::Invalid(format!("error amplitude must be >= 0, got {amplitude}")));
        }
        if exponent <= 0.0 || !exponent.is_finite() {
            return Err(Error::Invalid(format!("Brownian exponent must be > 0, got {exponent}")));
        }
        if let MeanSpec::Known(m) = &mean {
            if m.len() != 1 {
                return Err(Error::Invalid("additive model has a single constant mean".into()));
            }
        }
        Ok(Self {
            base,
            error,
            amplitude,
            fidelity: FidelityCovariance::Brownian { exponent },
            mean,
        })
    }

    pub fn cov(&self, x: &Point, y: &Point) -> f64 {
        let base = self.base.eval(&x.u, &y.u);
        let r = self.fidelity.eval(x.delta, y.delta);
        if r == 0.0 || self.amplitude == 0.0 {
            return base;
        }
        base + self.base.variance * self.amplitude * r * self.error.correlation(&x.u, &y.u)
    }

    pub fn mean_value(&self) -> f64 {
        match &self.mean {
            MeanSpec::Known(m) => m[0],
            MeanSpec::Unknown => 0.0,
        }
    }
}

/// Either multi-fidelity prior.
#[derive(Debug, Clone, PartialEq)]
pub enum MfModel {
    Ar(ArModel),
    Additive(AdditiveModel),
}

impl PriorModel for ArModel {
    fn covariance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.cov(x, y)
    }

    fn mean_basis(&self, x: &Point) -> Result<Vec<f64>> {
        self.basis(x)
    }

    fn mean_spec(&self) -> &MeanSpec {
        &self.means
    }

    fn mean_basis_len(&self) -> usize {
        self.levels.len()
    }
}

impl PriorModel for AdditiveModel {
    fn covariance(&self, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.cov(x, y))
    }

    fn mean_basis(&self, _x: &Point) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }

    fn mean_spec(&self) -> &MeanSpec {
        &self.mean
    }

    fn mean_basis_len(&self) -> usize {
        1
    }
}

impl PriorModel for MfModel {
    fn covariance(&self, x: &Point, y: &Point) -> Result<f64> {
        match self {
            MfModel::Ar(m) => m.covariance(x, y),
            MfModel::Additive(m) => m.covariance(x, y),
        }
    }

    fn mean_basis(&self, x: &Point) -> Result<Vec<f64>> {
        match self {
            MfModel::Ar(m) => m.mean_basis(x),
            MfModel::Additive(m) => m.mean_basis(x),
        }
    }

    fn mean_spec(&self) -> &MeanSpec {
        match self {
            MfModel::Ar(m) => m.mean_spec(),
            MfModel::Additive(m) => m.mean_spec(),
        }
    }

    fn mean_basis_len(&self) -> usize {
        match self {
            MfModel::Ar(m) => m.mean_basis_len(),
            MfModel::Additive(m) => m.mean_basis_len(),
        }
    }
}

/// Observation-noise variance `λ(δ)`, keyed by fidelity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    levels: Vec<f64>,
    variances: Vec<f64>,
}

impl NoiseModel {
    pub fn new(levels: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if levels.len() != variances.len() {
            return Err(Error::Invalid("noise levels and variances differ in length".into()));
        }
        if let Some(v) = variances.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid(format!("noise variance must be finite and >= 0, got {v}")));
        }
        Ok(Self { levels, variances })
    }

    /// Same variance at every listed level.
    pub fn constant(levels: Vec<f64>, variance: f64) -> Result<Self> {
        let n = levels.len();
        Self::new(levels, vec![variance; n])
    }

    /// Deterministic simulator.
    pub fn zero(levels: Vec<f64>) -> Self {
        let n = levels.len();
        Self {
            levels,
            variances: vec![0.0; n],
        }
    }

    pub fn at(&self, x: &Point) -> Result<f64> {
        self.at_level(x.delta)
    }

    pub fn at_level(&self, delta: f64) -> Result<f64> {
        Ok(self.variances[level_index(&self.levels, delta)?])
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Regularity;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k(var: f64, ls: f64) -> MaternKernel {
        MaternKernel::isotropic(var, ls, Regularity::FiveHalves, 1).unwrap()
    }

    fn two_level(rho: f64) -> ArModel {
        ArModel::new(
            vec![1.0, 2.0],
            vec![k(1.0, 0.3), k(1.0, 0.2)],
            MeanSpec::Known(vec![1.0, 3.0]),
            vec![rho],
        )
        .unwrap()
    }

    fn toy() -> AdditiveModel {
        AdditiveModel::new(
            k(1.0, 0.3),
            k(1.0, 0.1),
            4.0,
            2.0,
            MeanSpec::Known(vec![0.0]),
        )
        .unwrap()
    }

    #[test]
    fn ar_two_level_covariances() {
        let m = two_level(2.0);
        let (u, v) = (0.2, 0.45);
        let cross = m.cov(&Point::scalar(u, 1.0), &Point::scalar(v, 2.0)).unwrap();
        assert!((cross - 2.0 * k(1.0, 0.3).eval(&[u], &[v])).abs() < 1e-15);
        let var2 = m.cov(&Point::scalar(u, 2.0), &Point::scalar(u, 2.0)).unwrap();
        assert!((var2 - 5.0).abs() < 1e-15);
        let var1 = m.cov(&Point::scalar(u, 1.0), &Point::scalar(u, 1.0)).unwrap();
        assert_eq!(var1, 1.0);
    }

    #[test]
    fn ar_means() {
        let m = two_level(2.0);
        assert_eq!(m.mean(&Point::scalar(0.1, 1.0)).unwrap(), 1.0);
        assert_eq!(m.mean(&Point::scalar(0.1, 2.0)).unwrap(), 5.0);
        let z = ArModel::new(
            vec![1.0, 2.0, 3.0],
            vec![k(1.0, 0.3); 3],
            MeanSpec::Known(vec![0.0; 3]),
            vec![0.7, -1.2],
        )
        .unwrap();
        for d in [1.0, 2.0, 3.0] {
            assert_eq!(z.mean(&Point::scalar(0.4, d)).unwrap(), 0.0);
        }
    }

    #[test]
    fn ar_unknown_level() {
        let m = two_level(2.0);
        assert!(matches!(
            m.cov(&Point::scalar(0.0, 1.5), &Point::scalar(0.0, 1.0)),
            Err(Error::UnknownLevel(_))
        ));
        assert!(matches!(m.mean(&Point::scalar(0.0, 7.0)), Err(Error::UnknownLevel(_))));
    }

    #[test]
    fn ar_zero_rho_decouples_levels() {
        let m = ArModel::new(
            vec![1.0, 2.0, 3.0],
            vec![k(1.0, 0.3), k(2.0, 0.2), k(0.5, 0.4)],
            MeanSpec::Unknown,
            vec![0.0, 0.0],
        )
        .unwrap();
        for (a, b) in [(1.0, 2.0), (2.0, 3.0), (1.0, 3.0)] {
            let c = m.cov(&Point::scalar(0.3, a), &Point::scalar(0.3, b)).unwrap();
            assert_eq!(c, 0.0);
        }
    }

    #[test]
    fn additive_values() {
        let m = toy();
        let x = Point::scalar(0.1, 1.0);
        assert!((m.cov(&x, &x) - 5.0).abs() < 1e-15);
        let x0 = Point::scalar(0.1, 0.0);
        assert_eq!(m.cov(&x0, &x0), 1.0);
    }

    #[test]
    fn additive_monotonicity() {
        let m = toy();
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let c = m.cov(&Point::scalar(0.0, 0.5), &Point::scalar(i as f64 * 0.02, 0.7));
            assert!(c <= prev + 1e-15);
            prev = c;
        }
        let mut prev = -1.0;
        for i in 0..50 {
            let d = i as f64 * 0.02;
            let c = m.cov(&Point::scalar(0.0, d), &Point::scalar(0.05, d + 0.1));
            assert!(c >= prev - 1e-15);
            prev = c;
        }
    }

    #[test]
    fn noise_lookup() {
        let det = NoiseModel::zero(vec![1.0, 2.0]);
        assert_eq!(det.at(&Point::scalar(0.3, 2.0)).unwrap(), 0.0);
        let toy = NoiseModel::constant(vec![1.0, 0.5, 0.2, 0.1], 0.4f64.powi(2)).unwrap();
        assert!((toy.at_level(0.2).unwrap() - 0.16).abs() < 1e-16);
        let two = NoiseModel::new(vec![1.0, 2.0], vec![0.2, 0.05]).unwrap();
        assert_eq!(two.at_level(2.0).unwrap(), 0.05);
        assert!(matches!(two.at_level(3.0), Err(Error::UnknownLevel(_))));
        assert!(NoiseModel::new(vec![1.0], vec![-0.1]).is_err());
    }

    fn min_eig_ratio(points: &[Point], f: impl Fn(&Point, &Point) -> f64) -> f64 {
        let n = points.len();
        let g = DMatrix::from_fn(n, n, |i, j| f(&points[i], &points[j]));
        assert!((&g - g.transpose()).abs().max() < 1e-14);
        let e = SymmetricEigen::new(g).eigenvalues;
        e.min() / e.max()
    }

    #[test]
    fn gram_matrices_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let levels = [1.0, 0.5, 0.2, 0.1];
        for _ in 0..10 {
            let n = rng.gen_range(2..=50);
            let pts: Vec<Point> = (0..n)
                .map(|_| Point::scalar(rng.gen_range(-0.5..0.5), levels[rng.gen_range(0..4)]))
                .collect();
            let m = toy();
            assert!(min_eig_ratio(&pts, |a, b| m.cov(a, b)) >= -1e-8);
            let ar = ArModel::new(
                levels.to_vec(),
                vec![k(1.0, 0.3), k(0.4, 0.2), k(0.3, 0.15), k(0.2, 0.1)],
                MeanSpec::Unknown,
                vec![1.3, -0.7, 0.9],
            )
            .unwrap();
            assert!(min_eig_ratio(&pts, |a, b| ar.cov(a, b).unwrap()) >= -1e-8);
        }
    }

    proptest! {
        #[test]
        fn additive_is_symmetric(u in -0.5f64..0.5, v in -0.5f64..0.5, d in 0.0f64..1.0, e in 0.0f64..1.0) {
            let m = toy();
            let (x, y) = (Point::scalar(u, d), Point::scalar(v, e));
            prop_assert_eq!(m.cov(&x, &y), m.cov(&y, &x));
        }
    }
}
