//! End-to-end sequential-design experiments: configuration, runs, error metrics and exports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{CriterionField, CriterionRecord, IntegrationNodes, SurEvaluator};
use crate::design::{argmax_first, local_refine, maximin_improve, nlhs, GridSpec, Optimum};
use crate::gp::{MeanSpec, PriorModel, Regularity};
use crate::inference::{
    adaptive_mh, map_estimate, AdditiveFamily, AdditivePriorHints, ArFamily, KnownModel, LogPosterior, MhOptions,
    ModelFamily,
};
use crate::models::{level_index, NoiseModel, Point};
use crate::testbeds::{
    forrester_hf, forrester_lf, oscillator_response, CostModel, OscillatorConfig, ToyGpSampler, ToyParams, ToyPath,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestbedKind {
    Forrester,
    Oscillator,
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Ar,
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Table,
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeLayout {
    Grid,
    Random,
}

/// Sequential strategy: which levels may be sampled and how many points per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strategy {
    /// Restrict sampling to one level (`sur-fixed`), or choose by rate over all levels.
    pub fixed_level: Option<f64>,
    pub batch: usize,
}

impl Strategy {
    pub fn sur_fixed(delta: f64) -> Self {
        Self {
            fixed_level: Some(delta),
            batch: 1,
        }
    }

    pub fn mrsur() -> Self {
        Self {
            fixed_level: None,
            batch: 1,
        }
    }

    pub fn mrsur_batch(q: usize) -> Self {
        Self {
            fixed_level: None,
            batch: q,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.fixed_level, self.batch) {
            (Some(d), 1) => write!(f, "sur-fixed:{d}"),
            (Some(d), q) => write!(f, "sur-batch:{d}:{q}"),
            (None, 1) => write!(f, "mrsur"),
            (None, q) => write!(f, "mrsur-batch:{q}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts `mrsur`, `mrsur-batch:q`, `sur-fixed:δ`, `sur-batch:δ:q`
    /// (parentheses are accepted in place of the colon).
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace(['(', ','], ":").replace(')', "");
        let parts: Vec<&str> = norm.split(':').map(str::trim).collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| Error::Config(format!("bad number '{t}' in strategy '{s}'")));
        let int = |t: &str| match t.parse::<usize>() {
            Ok(q) if q >= 1 => Ok(q),
            _ => Err(Error::Config(format!("bad batch size '{t}' in strategy '{s}'"))),
        };
        match parts.as_slice() {
            ["mrsur"] => Ok(Self::mrsur()),
            ["mrsur-batch", q] => Ok(Self::mrsur_batch(int(q)?)),
            ["sur-fixed", d] => Ok(Self::sur_fixed(num(d)?)),
            ["sur-batch", d, q] => Ok(Self {
                fixed_level: Some(num(d)?),
                batch: int(q)?,
            }),
            _ => Err(Error::Config(format!("unknown strategy '{s}'"))),
        }
    }
}

/// Flat experiment configuration; every field has a testbed-specific default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub testbed: TestbedKind,
    pub family: FamilyKind,
    /// Fidelity levels, lowest fidelity first.
    pub levels: Vec<f64>,
    pub cost_model: CostKind,
    /// Per-level costs (table form).
    pub costs: Vec<f64>,
    /// `C(δ) = cost_a/δ + cost_b` (affine form).
    pub cost_a: f64,
    pub cost_b: f64,
    /// Nested initial design size per level (trailing levels may be 0).
    pub init_sizes: Vec<usize>,
    pub strategy: String,
    /// Total budget including the initial design.
    pub budget: f64,
    pub reps: usize,
    pub seed: u64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub z_crit: f64,
    /// Fidelity at which the quantity of interest is defined.
    pub delta_ref: f64,
    pub n_nodes: usize,
    pub node_layout: NodeLayout,
    /// Error-metric grid resolution per dimension.
    pub error_grid: Vec<usize>,
    /// Candidate grid resolution per dimension.
    pub grid_points: Vec<usize>,
    pub local_halvings: usize,
    /// Maximin iterations per initial design point.
    pub maximin_iters: usize,
    pub mcmc_initial: usize,
    pub mcmc_update: usize,
    /// Re-sample hyperparameters once this many points were added since the last draw (0: never).
    pub mcmc_every: usize,
    pub map_iters: u64,
    /// Nodes with smaller uncertainty contribution are skipped in candidate evaluations.
    pub prune_tol: f64,
    /// Keep the criterion field every this many iterations (0: never).
    pub pareto_every: usize,
    pub oscillator_s: f64,
    pub t_end: f64,
    /// Monte-Carlo draws per node for the oscillator reference.
    pub reference_draws: usize,
    pub reference_seed: u64,
    /// Correlation length of the log-variance prior over `log δ`.
    pub noise_corr_length: f64,
    pub toy_noise: f64,
    pub toy_grid: usize,
    pub out_dir: String,
}

impl ExperimentConfig {
    pub fn forrester() -> Self {
        Self {
            testbed: TestbedKind::Forrester,
            family: FamilyKind::Ar,
            levels: vec![1.0, 2.0],
            cost_model: CostKind::Table,
            costs: vec![0.25, 1.0],
            cost_a: 1.0,
            cost_b: 0.0,
            init_sizes: vec![6, 3],
            strategy: "mrsur".into(),
            budget: 13.5,
            reps: 20,
            seed: 1,
            lo: vec![0.0],
            hi: vec![1.0],
            z_crit: 10.0,
            delta_ref: 2.0,
            n_nodes: 500,
            node_layout: NodeLayout::Grid,
            error_grid: vec![1000],
            grid_points: vec![101],
            local_halvings: 20,
            maximin_iters: 100,
            mcmc_initial: 10_000,
            mcmc_update: 2_000,
            mcmc_every: 1,
            map_iters: 500,
            prune_tol: 1e-12,
            pareto_every: 0,
            oscillator_s: 1.0,
            t_end: 30.0,
            reference_draws: 0,
            reference_seed: 0,
            noise_corr_length: 2.0,
            toy_noise: 0.16,
            toy_grid: 201,
            out_dir: "results/forrester".into(),
        }
    }

    pub fn oscillator() -> Self {
        Self {
            testbed: TestbedKind::Oscillator,
            family: FamilyKind::Additive,
            levels: vec![1.0, 0.5, 1.0 / 3.0, 0.25, 0.2, 1.0 / 6.0, 0.1, 0.05, 0.02, 0.01],
            cost_model: CostKind::Affine,
            costs: vec![],
            cost_a: 0.0098,
            cost_b: 0.0208,
            init_sizes: vec![180, 60, 20, 10, 5],
            strategy: "mrsur".into(),
            budget: 20.0,
            reps: 8,
            seed: 1,
            lo: vec![1.0, 0.01],
            hi: vec![20.0, 0.5],
            z_crit: -3.0,
            delta_ref: 0.01,
            n_nodes: 1000,
            node_layout: NodeLayout::Random,
            error_grid: vec![20, 20],
            grid_points: vec![11, 11],
            local_halvings: 8,
            maximin_iters: 100,
            mcmc_initial: 4_000,
            mcmc_update: 1_000,
            mcmc_every: 10,
            map_iters: 300,
            prune_tol: 1e-9,
            pareto_every: 0,
            oscillator_s: 0.01,
            t_end: 30.0,
            reference_draws: 400,
            reference_seed: 20_240,
            noise_corr_length: 2.0,
            toy_noise: 0.16,
            toy_grid: 201,
            out_dir: "results/oscillator".into(),
        }
    }

    pub fn toy() -> Self {
        Self {
            testbed: TestbedKind::Toy,
            family: FamilyKind::Additive,
            levels: vec![1.0, 0.5, 0.2, 0.1],
            cost_model: CostKind::Affine,
            costs: vec![],
            cost_a: 1.0,
            cost_b: 0.0,
            init_sizes: vec![12, 6, 6, 3],
            strategy: "mrsur".into(),
            budget: 124.0,
            reps: 1,
            seed: 1,
            lo: vec![-0.5],
            hi: vec![0.5],
            z_crit: 0.0,
            delta_ref: 0.0,
            n_nodes: 500,
            node_layout: NodeLayout::Grid,
            error_grid: vec![1000],
            grid_points: vec![101],
            local_halvings: 20,
            maximin_iters: 100,
            mcmc_initial: 0,
            mcmc_update: 0,
            mcmc_every: 0,
            map_iters: 0,
            prune_tol: 0.0,
            pareto_every: 1,
            oscillator_s: 1.0,
            t_end: 30.0,
            reference_draws: 0,
            reference_seed: 0,
            noise_corr_length: 2.0,
            toy_noise: 0.16,
            toy_grid: 201,
            out_dir: "results/toy".into(),
        }
    }

    pub fn preset(kind: TestbedKind) -> Self {
        match kind {
            TestbedKind::Forrester => Self::forrester(),
            TestbedKind::Oscillator => Self::oscillator(),
            TestbedKind::Toy => Self::toy(),
        }
    }

    /// Parses a flat TOML document; keys not given take the testbed preset's values.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let kind: TestbedKind = match user.get("testbed") {
            Some(v) => v.clone().try_into().map_err(|e| Error::Config(format!("testbed: {e}")))?,
            None => return Err(Error::Config("missing key 'testbed'".into())),
        };
        let mut merged = toml::Table::try_from(Self::preset(kind)).map_err(|e| Error::Config(format!("{e}")))?;
        for (k, v) in user {
            merged.insert(k, v);
        }
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("{e}")))
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy.parse()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        match self.cost_model {
            CostKind::Table => CostModel::table(self.levels.clone(), self.costs.clone()),
            CostKind::Affine => CostModel::affine(self.cost_a, self.cost_b),
        }
    }

    /// Cost of the nested initial design (each point is evaluated at every level it belongs to).
    pub fn initial_cost(&self) -> Result<f64> {
        let cm = self.cost_model()?;
        let mut c = 0.0;
        for (n, d) in self.init_sizes.iter().zip(&self.levels) {
            c += *n as f64 * cm.cost(*d)?;
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.levels.is_empty() || self.init_sizes.len() > self.levels.len() {
            return bad("need levels, and at most one initial size per level");
        }
        if self.lo.len() != self.hi.len() || self.lo.is_empty() || self.lo.iter().zip(&self.hi).any(|(a, b)| !(a < b)) {
            return bad("lo/hi must describe a nonempty box");
        }
        if self.grid_points.len() != self.dim() || self.error_grid.len() != self.dim() {
            return bad("grid_points and error_grid need one entry per dimension");
        }
        if self.reps == 0 {
            return bad("reps must be >= 1");
        }
        if self.n_nodes == 0 {
            return bad("n_nodes must be >= 1");
        }
        let nonzero = self.init_sizes.iter().take_while(|&&n| n > 0).count();
        if nonzero == 0 || self.init_sizes[nonzero..].iter().any(|&n| n > 0) {
            return bad("init_sizes must be positive on a leading run of levels");
        }
        let strategy = self.strategy()?;
        if let Some(d) = strategy.fixed_level {
            level_index(&self.levels, d).map_err(|_| Error::Config(format!("strategy level {d} is not a level")))?;
        }
        if self.family == FamilyKind::Ar && self.testbed != TestbedKind::Forrester {
            return bad("the AR family is only wired for the forrester testbed");
        }
        let cm = self.cost_model()?;
        for d in &self.levels {
            cm.cost(*d)?;
        }
        let init = self.initial_cost()?;
        if self.budget < init {
            return Err(Error::Config(format!("budget {} is below the initial design cost {init}", self.budget)));
        }
        Ok(())
    }

    /// Seed of repetition `r`.
    pub fn run_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, 1_000 + r as u64)
    }
}

/// Independent stream seed from a base seed and a stream id.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.gen()
}

/// `√(Σ w_i (p_i − t_i)²)`.
pub fn error_metric(estimate: &[f64], truth: &[f64], weights: &[f64]) -> f64 {
    estimate
        .iter()
        .zip(truth)
        .zip(weights)
        .map(|((p, t), w)| w * (p - t) * (p - t))
        .sum::<f64>()
        .sqrt()
}

/// Intervals of `[lo, hi]` where `f > z`, bracketing sign changes on an `n`-point grid
/// and bisecting each root to machine precision.
pub fn exceedance_intervals<F: Fn(f64) -> f64>(f: F, z: f64, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let g = |u: f64| f(u) - z;
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut roots = vec![];
    for w in xs.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        if (g(a) > 0.0) != (g(b) > 0.0) {
            let above_a = g(a) > 0.0;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if (g(m) > 0.0) == above_a {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    let mut out = vec![];
    let mut start = if g(lo) > 0.0 { Some(lo) } else { None };
    for r in roots {
        match start.take() {
            Some(s) => out.push((s, r)),
            None => start = Some(r),
        }
    }
    if let Some(s) = start {
        out.push((s, hi));
    }
    out
}

/// Median, with the mean of the two middle values for even counts.
fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per cost value, the median over runs of the error at the last iteration with `c_n ≤ cost`.
/// Runs without such an iteration are left out; the value is NaN if none remain.
pub fn aggregate_median(curves: &[Vec<(f64, f64)>], cost_grid: &[f64]) -> Vec<(f64, f64)> {
    cost_grid
        .iter()
        .map(|&c| {
            let mut vals: Vec<f64> = curves
                .iter()
                .filter_map(|curve| curve.iter().take_while(|(cn, _)| *cn <= c).last().map(|p| p.1))
                .collect();
            (c, median(&mut vals))
        })
        .collect()
}

/// Sorted distinct cost values of all curves.
pub fn cost_grid(curves: &[Vec<(f64, f64)>]) -> Vec<f64> {
    let mut all: Vec<f64> = curves.iter().flat_map(|c| c.iter().map(|p| p.0)).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// One row of a run: the state after `iteration` sequential steps.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    pub iteration: usize,
    /// Points evaluated at this step (empty for the initial state).
    pub points: Vec<Point>,
    pub cost: f64,
    pub h: f64,
    pub error: f64,
}

/// Trace of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rep: usize,
    pub seed: u64,
    pub strategy: String,
    pub initial_cost: f64,
    pub rows: Vec<IterationRow>,
    /// Sequential evaluations per level (same order as the config levels).
    pub level_counts: Vec<usize>,
    pub fields: Vec<(usize, CriterionField)>,
    /// Wall-clock seconds per row; kept out of the exported files.
    pub wall_secs: Vec<f64>,
}

impl RunRecord {
    /// `(c_n, error)` pairs.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.cost, r.error)).collect()
    }

    pub fn final_cost(&self) -> f64 {
        self.rows.last().map_or(self.initial_cost, |r| r.cost)
    }

    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.error)
    }

    /// Error at the last iteration with `c_n ≤ cost`.
    pub fn error_at(&self, cost: f64) -> Option<f64> {
        self.rows.iter().take_while(|r| r.cost <= cost).last().map(|r| r.error)
    }
}

/// Experiment-wide data shared by all repetitions and strategies.
pub struct Context {
    pub error_nodes: IntegrationNodes,
    /// Truth on the error nodes, when it does not depend on the repetition.
    pub truth: Option<Arc<Vec<f64>>>,
    toy: Option<Arc<ToyGpSampler>>,
}

fn grid_nodes(lo: &[f64], hi: &[f64], n: &[usize], delta: f64) -> Result<IntegrationNodes> {
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for d in 0..lo.len() {
        let h = (hi[d] - lo[d]) / n[d] as f64;
        pts = pts
            .into_iter()
            .flat_map(|p| {
                (0..n[d]).map(move |i| {
                    let mut q = p.clone();
                    q.push(lo[d] + (i as f64 + 0.5) * h);
                    q
                })
            })
            .collect();
    }
    IntegrationNodes::uniform(pts.into_iter().map(|u| Point::new(u, delta)).collect())
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let error_nodes = grid_nodes(&cfg.lo, &cfg.hi, &cfg.error_grid, cfg.delta_ref)?;
        let (truth, toy) = match cfg.testbed {
            TestbedKind::Forrester => {
                let t = error_nodes
                    .nodes
                    .iter()
                    .map(|p| if forrester_hf(p.u[0]) > cfg.z_crit { 1.0 } else { 0.0 })
                    .collect();
                (Some(Arc::new(t)), None)
            }
            TestbedKind::Oscillator => (Some(Arc::new(oscillator_reference(cfg, &error_nodes.nodes)?)), None),
            TestbedKind::Toy => {
                let mut levels = cfg.levels.clone();
                levels.push(cfg.delta_ref);
                let params = ToyParams {
                    noise_var: cfg.toy_noise,
                    levels: cfg.levels.clone(),
                    ..ToyParams::default()
                };
                (None, Some(Arc::new(ToyGpSampler::new(&params, levels, cfg.toy_grid)?)))
            }
        };
        Ok(Self { error_nodes, truth, toy })
    }
}

/// Monte-Carlo estimate of `P(Z(u, δ_ref) > z_crit)` at each node.
pub fn oscillator_reference(cfg: &ExperimentConfig, nodes: &[Point]) -> Result<Vec<f64>> {
    let m = cfg.reference_draws.max(1);
    nodes
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let osc = OscillatorConfig {
                omega0: p.u[0],
                zeta: p.u[1],
                delta: cfg.delta_ref,
                t_end: cfg.t_end,
                s: cfg.oscillator_s,
                z_crit: cfg.z_crit,
            };
            let mut hits = 0usize;
            for k in 0..m {
                let seed = derive_seed(cfg.reference_seed, (i * m + k) as u64);
                if oscillator_response(&osc, seed)? > cfg.z_crit {
                    hits += 1;
                }
            }
            Ok(hits as f64 / m as f64)
        })
        .collect()
}

/// The simulator seen by one repetition.
enum Problem {
    Forrester,
    Oscillator { s: f64, t_end: f64, z_crit: f64 },
    Toy(ToyPath),
}

impl Problem {
    fn simulate(&self, x: &Point, rng: &mut ChaCha8Rng) -> Result<f64> {
        match self {
            Self::Forrester => {
                if x.delta == 1.0 {
                    Ok(forrester_lf(x.u[0]))
                } else if x.delta == 2.0 {
                    Ok(forrester_hf(x.u[0]))
                } else {
                    Err(Error::UnknownLevel(x.delta))
                }
            }
            Self::Oscillator { s, t_end, z_crit } => {
                let cfg = OscillatorConfig {
                    omega0: x.u[0],
                    zeta: x.u[1],
                    delta: x.delta,
                    t_end: *t_end,
                    s: *s,
                    z_crit: *z_crit,
                };
                oscillator_response(&cfg, rng.gen())
            }
            Self::Toy(path) => path.observe(x, rng),
        }
    }
}

/// Everything a repetition needs before the sequential loop starts.
struct RunSetup {
    seed: u64,
    problem: Problem,
    truth: Arc<Vec<f64>>,
    points: Vec<Point>,
    responses: Vec<f64>,
    cost: f64,
    mu: IntegrationNodes,
    sim_rng: ChaCha8Rng,
}

fn setup_run(cfg: &ExperimentConfig, ctx: &Context, rep: usize) -> Result<RunSetup> {
    let seed = cfg.run_seed(rep);
    let (problem, truth) = match cfg.testbed {
        TestbedKind::Forrester => (Problem::Forrester, ctx.truth.clone().expect("forrester truth")),
        TestbedKind::Oscillator => (
            Problem::Oscillator {
                s: cfg.oscillator_s,
                t_end: cfg.t_end,
                z_crit: cfg.z_crit,
            },
            ctx.truth.clone().expect("oscillator reference"),
        ),
        TestbedKind::Toy => {
            let path = ctx.toy.as_ref().expect("toy sampler").sample(derive_seed(seed, 5));
            let t = ctx
                .error_nodes
                .nodes
                .iter()
                .map(|p| Ok(if path.value(p)? > cfg.z_crit { 1.0 } else { 0.0 }))
                .collect::<Result<Vec<f64>>>()?;
            (Problem::Toy(path), Arc::new(t))
        }
    };

    let sizes: Vec<usize> = cfg.init_sizes.iter().copied().filter(|&n| n > 0).collect();
    let design = nlhs(&sizes, cfg.dim(), derive_seed(seed, 1))?;
    let total: usize = sizes[0];
    let design = maximin_improve(&design, cfg.maximin_iters * total, derive_seed(seed, 2));
    let points = design.to_points(&cfg.levels[..sizes.len()], &cfg.lo, &cfg.hi)?;
    let cm = cfg.cost_model()?;
    let mut sim_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let mut responses = Vec::with_capacity(points.len());
    let mut cost = 0.0;
    for p in &points {
        responses.push(problem.simulate(p, &mut sim_rng)?);
        cost += cm.cost(p.delta)?;
    }
    let mu = match cfg.node_layout {
        NodeLayout::Grid => {
            let per_dim = (cfg.n_nodes as f64).powf(1.0 / cfg.dim() as f64).round().max(1.0) as usize;
            grid_nodes(&cfg.lo, &cfg.hi, &vec![per_dim; cfg.dim()], cfg.delta_ref)?
        }
        NodeLayout::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4));
            IntegrationNodes::monte_carlo(&cfg.lo, &cfg.hi, cfg.n_nodes, cfg.delta_ref, &mut rng)?
        }
    };
    Ok(RunSetup {
        seed,
        problem,
        truth,
        points,
        responses,
        cost,
        mu,
        sim_rng,
    })
}

fn sample_variance(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let m = z.iter().sum::<f64>() / n;
    (z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).max(1e-12)
}

/// Runs every repetition of the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let ctx = Context::new(cfg)?;
    run_experiment_in(cfg, &ctx)
}

/// Runs every repetition against a prepared context (shareable across strategies).
pub fn run_experiment_in(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    (0..cfg.reps).into_par_iter().map(|r| run_single(cfg, ctx, r)).collect()
}

/// Consumer of the model family configured for a repetition.
trait FamilyVisitor {
    type Out;
    fn visit<F: ModelFamily>(self, family: F) -> Result<Self::Out>
    where
        F::Model: PriorModel + Sync;
}

fn dispatch_family<V: FamilyVisitor>(cfg: &ExperimentConfig, responses: &[f64], v: V) -> Result<V::Out> {
    match (cfg.testbed, cfg.family) {
        (TestbedKind::Toy, _) => {
            let params = ToyParams {
                noise_var: cfg.toy_noise,
                ..ToyParams::default()
            };
            let mut model = params.model()?;
            model.mean = MeanSpec::Unknown;
            let mut levels = cfg.levels.clone();
            let mut vars = vec![cfg.toy_noise; levels.len()];
            levels.push(cfg.delta_ref);
            vars.push(0.0);
            v.visit(KnownModel {
                model,
                noise: NoiseModel::new(levels, vars)?,
            })
        }
        (TestbedKind::Forrester, FamilyKind::Ar) => {
            v.visit(ArFamily::new(cfg.levels.clone(), cfg.dim(), Regularity::FiveHalves)?)
        }
        (_, FamilyKind::Additive) => {
            let hints = AdditivePriorHints {
                widths: cfg.lo.iter().zip(&cfg.hi).map(|(a, b)| b - a).collect(),
                response_var: sample_variance(responses),
                noise_corr_length: cfg.noise_corr_length,
            };
            v.visit(AdditiveFamily::new(cfg.levels.clone(), Regularity::FiveHalves, &hints)?)
        }
        (_, FamilyKind::Ar) => Err(Error::Config("the AR family is only wired for the forrester testbed".into())),
    }
}

struct LoopVisitor<'a> {
    cfg: &'a ExperimentConfig,
    ctx: &'a Context,
    rep: usize,
    setup: RunSetup,
}

impl FamilyVisitor for LoopVisitor<'_> {
    type Out = RunRecord;
    fn visit<F: ModelFamily>(self, family: F) -> Result<RunRecord>
    where
        F::Model: PriorModel + Sync,
    {
        sequential_loop(self.cfg, self.ctx, self.rep, self.setup, family)
    }
}

/// Runs one repetition.
pub fn run_single(cfg: &ExperimentConfig, ctx: &Context, rep: usize) -> Result<RunRecord> {
    let setup = setup_run(cfg, ctx, rep)?;
    let responses = setup.responses.clone();
    dispatch_family(cfg, &responses, LoopVisitor { cfg, ctx, rep, setup })
}

/// Hyperparameters at the MAP of a fresh adaptive-MH chain started at `init`;
/// `init` is kept when the chain cannot start there.
fn refresh_hyper<F: ModelFamily>(lp: &LogPosterior<F>, init: &[f64], n_iter: usize, seed: u64, map_iters: u64) -> Result<Vec<f64>> {
    if lp.n_free() == 0 || n_iter == 0 {
        return Ok(init.to_vec());
    }
    let opts = MhOptions {
        warmup: (n_iter / 5).clamp(50, 1000),
        ..MhOptions::default()
    };
    match adaptive_mh(|t| lp.eval(t), init, n_iter, seed, opts) {
        Ok(chain) => Ok(map_estimate(&chain, |t| lp.eval(t), map_iters)?.0),
        Err(Error::InitInvalid) => {
            tracing::warn!("hyperparameter chain could not start; keeping previous values");
            Ok(init.to_vec())
        }
        Err(e) => Err(e),
    }
}

fn sequential_loop<F: ModelFamily>(
    cfg: &ExperimentConfig,
    ctx: &Context,
    rep: usize,
    setup: RunSetup,
    family: F,
) -> Result<RunRecord> {
    let strategy = cfg.strategy()?;
    let cm = cfg.cost_model()?;
    let grid = GridSpec::new(cfg.lo.clone(), cfg.hi.clone(), cfg.grid_points.clone(), cfg.levels.clone())?;
    let RunSetup {
        seed,
        problem,
        truth,
        mut points,
        mut responses,
        mut cost,
        mu,
        mut sim_rng,
    } = setup;
    let initial_cost = cost;

    let lp = LogPosterior::new(&family, &points, &responses)?;
    let mut theta = refresh_hyper(&lp, &lp.init_free()?, cfg.mcmc_initial, derive_seed(seed, 10), cfg.map_iters)?;

    let mut rows = Vec::new();
    let mut wall = Vec::new();
    let mut fields = Vec::new();
    let mut level_counts = vec![0usize; cfg.levels.len()];
    let mut last_points: Vec<Point> = vec![];
    let mut iteration = 0usize;
    let mut since_refresh = 0usize;
    loop {
        let t0 = Instant::now();
        let mut step = || -> Result<Option<(Vec<Point>, Option<CriterionField>)>> {
            let lp = LogPosterior::new(&family, &points, &responses)?;
            if cfg.mcmc_every > 0 && since_refresh >= cfg.mcmc_every {
                since_refresh = 0;
                theta = refresh_hyper(&lp, &theta, cfg.mcmc_update, derive_seed(seed, 100 + iteration as u64), cfg.map_iters)?;
            }
            let (state, noise) = lp.fit(&theta)?;
            let probs = SurEvaluator::new(&state, &noise, cfg.z_crit, &ctx.error_nodes)?.node_probabilities();
            let error = error_metric(&probs, &truth, &ctx.error_nodes.weights);
            let ev = SurEvaluator::new(&state, &noise, cfg.z_crit, &mu)?.with_pruning(cfg.prune_tol);
            rows.push(IterationRow {
                iteration,
                points: std::mem::take(&mut last_points),
                cost,
                h: ev.h(),
                error,
            });
            tracing::info!(rep, iteration, cost, h = ev.h(), error, "state");

            let q = strategy.batch;
            let mut affordable = vec![];
            for &d in &cfg.levels {
                if strategy.fixed_level.is_none_or(|f| level_index(&[f], d).is_ok()) && cost + q as f64 * cm.cost(d)? <= cfg.budget {
                    affordable.push(d);
                }
            }
            if affordable.is_empty() {
                return Ok(None);
            }
            let (batch, field) = if q == 1 {
                select_single(&ev, &grid, &affordable, &cm, cfg.local_halvings)?
            } else {
                select_batch(&ev, &grid, &affordable, &cm, q, cfg.local_halvings)?
            };
            Ok(Some((batch, Some(field))))
        };
        let outcome = step().map_err(|e| e.at_iteration(iteration))?;
        wall.push(t0.elapsed().as_secs_f64());
        let Some((batch, field)) = outcome else { break };
        if let Some(f) = field {
            if cfg.pareto_every > 0 && iteration.is_multiple_of(cfg.pareto_every) {
                fields.push((iteration, f));
            }
        }
        for p in &batch {
            let z = problem.simulate(p, &mut sim_rng).map_err(|e| e.at_iteration(iteration))?;
            points.push(p.clone());
            responses.push(z);
            cost += cm.cost(p.delta)?;
            level_counts[level_index(&cfg.levels, p.delta)?] += 1;
        }
        since_refresh += batch.len();
        last_points = batch;
        iteration += 1;
    }
    Ok(RunRecord {
        rep,
        seed,
        strategy: strategy.to_string(),
        initial_cost,
        rows,
        level_counts,
        fields,
        wall_secs: wall,
    })
}

fn grid_at(grid: &GridSpec, delta: f64) -> Vec<Point> {
    grid.locations().into_iter().map(|u| Point::new(u, delta)).collect()
}

/// Single-point selection: rate over the grid at the affordable levels, then
/// local refinement at the chosen level.
fn select_single<M: PriorModel + Sync>(
    ev: &SurEvaluator<'_, M>,
    grid: &GridSpec,
    levels: &[f64],
    cm: &CostModel,
    halvings: usize,
) -> Result<(Vec<Point>, CriterionField)> {
    let cands: Vec<Vec<Point>> = levels
        .iter()
        .flat_map(|&d| grid_at(grid, d).into_iter().map(|p| vec![p]))
        .collect();
    let values = ev.evaluate_all(&cands)?;
    let records = cands
        .into_iter()
        .zip(values)
        .map(|(pts, v)| {
            Ok(CriterionRecord {
                cost: cm.cost(pts[0].delta)?,
                points: pts,
                j: v.j,
                g: v.g,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let field = CriterionField::from_records(ev.h(), records)?;
    let best = field.selected_record();
    let c = best.cost;
    let start = Optimum {
        point: best.points[0].clone(),
        value: best.rate(),
    };
    let refined = local_refine(
        |p| Ok(ev.evaluate(std::slice::from_ref(p))?.g / c),
        start,
        &grid.spacing(),
        &grid.lo,
        &grid.hi,
        halvings,
    )?;
    Ok((vec![refined.point], field))
}

/// Batch selection at a common level: greedy conditional grid search for each
/// level, joint coordinate refinement, then the best rate across levels.
fn select_batch<M: PriorModel + Sync>(
    ev: &SurEvaluator<'_, M>,
    grid: &GridSpec,
    levels: &[f64],
    cm: &CostModel,
    q: usize,
    halvings: usize,
) -> Result<(Vec<Point>, CriterionField)> {
    let mut records = Vec::with_capacity(levels.len());
    for &d in levels {
        let locs = grid_at(grid, d);
        let mut batch: Vec<Point> = Vec::with_capacity(q);
        for _ in 0..q {
            let cands: Vec<Vec<Point>> = locs
                .iter()
                .map(|p| {
                    let mut b = batch.clone();
                    b.push(p.clone());
                    b
                })
                .collect();
            let g: Vec<f64> = ev.evaluate_all(&cands)?.iter().map(|v| v.g).collect();
            let i = argmax_first(&g).ok_or(Error::EmptyCandidates)?;
            batch.push(locs[i].clone());
        }
        let batch = refine_batch(ev, batch, &grid.spacing(), &grid.lo, &grid.hi, halvings)?;
        let v = ev.evaluate(&batch)?;
        records.push(CriterionRecord {
            points: batch,
            cost: cm.cost(d)?,
            j: v.j,
            g: v.g,
        });
    }
    let field = CriterionField::from_records(ev.h(), records)?;
    Ok((field.selected_record().points.clone(), field))
}

/// Coordinate search over all coordinates of a batch, maximizing `G_n`.
fn refine_batch<M: PriorModel>(
    ev: &SurEvaluator<'_, M>,
    mut batch: Vec<Point>,
    steps: &[f64],
    lo: &[f64],
    hi: &[f64],
    halvings: usize,
) -> Result<Vec<Point>> {
    let mut best = ev.evaluate(&batch)?.g;
    let mut step = steps.to_vec();
    for _ in 0..=halvings {
        let mut improved = true;
        let mut passes = 0;
        while improved && passes < 20 {
            improved = false;
            passes += 1;
            for l in 0..batch.len() {
                for d in 0..step.len() {
                    for sign in [1.0, -1.0] {
                        let old = batch[l].u[d];
                        let new = (old + sign * step[d]).clamp(lo[d], hi[d]);
                        if new == old {
                            continue;
                        }
                        batch[l].u[d] = new;
                        let g = ev.evaluate(&batch)?.g;
                        if g > best {
                            best = g;
                            improved = true;
                        } else {
                            batch[l].u[d] = old;
                        }
                    }
                }
            }
        }
        step.iter_mut().for_each(|s| *s *= 0.5);
    }
    Ok(batch)
}

struct FieldVisitor<'a> {
    cfg: &'a ExperimentConfig,
    setup: RunSetup,
}

impl FamilyVisitor for FieldVisitor<'_> {
    type Out = CriterionField;
    fn visit<F: ModelFamily>(self, family: F) -> Result<CriterionField>
    where
        F::Model: PriorModel + Sync,
    {
        let cfg = self.cfg;
        let setup = self.setup;
        let cm = cfg.cost_model()?;
        let grid = GridSpec::new(cfg.lo.clone(), cfg.hi.clone(), cfg.grid_points.clone(), cfg.levels.clone())?;
        let lp = LogPosterior::new(&family, &setup.points, &setup.responses)?;
        let theta = refresh_hyper(&lp, &lp.init_free()?, cfg.mcmc_initial, derive_seed(setup.seed, 10), cfg.map_iters)?;
        let (state, noise) = lp.fit(&theta)?;
        let ev = SurEvaluator::new(&state, &noise, cfg.z_crit, &setup.mu)?;
        let levels = match cfg.strategy()?.fixed_level {
            Some(d) => vec![d],
            None => cfg.levels.clone(),
        };
        Ok(select_single(&ev, &grid, &levels, &cm, 0)?.1)
    }
}

/// Criterion field over the candidate grid for the initial state of repetition `rep`.
pub fn initial_field(cfg: &ExperimentConfig, rep: usize) -> Result<CriterionField> {
    let ctx = Context::new(cfg)?;
    let setup = setup_run(cfg, &ctx, rep)?;
    let responses = setup.responses.clone();
    dispatch_family(cfg, &responses, FieldVisitor { cfg, setup })
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

/// Writes runs.csv, median.csv, selections.csv, the kept criterion fields and config.echo.
pub fn export_results(records: &[RunRecord], cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_runs_csv(records, cfg.dim(), &dir.join("runs.csv"))?;
    let curves: Vec<Vec<(f64, f64)>> = records.iter().map(RunRecord::curve).collect();
    write_median_csv(&curves, &dir.join("median.csv"))?;
    write_selections_csv(records, &cfg.levels, &dir.join("selections.csv"))?;
    for r in records {
        for (k, f) in &r.fields {
            let name = if records.len() == 1 {
                format!("pareto_iter_{k}.csv")
            } else {
                format!("pareto_run_{}_iter_{k}.csv", r.rep)
            };
            f.write_csv(&dir.join(name))?;
        }
    }
    let mut echo = cfg.to_toml_string()?;
    echo.push_str("\n# repetition seeds\n");
    for r in 0..cfg.reps {
        echo.push_str(&format!("# run {r}: {}\n", cfg.run_seed(r)));
    }
    let p = dir.join("config.echo");
    std::fs::write(&p, echo).map_err(|e| Error::io(&p, e))
}

pub fn write_runs_csv(records: &[RunRecord], dim: usize, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["strategy", "run", "iteration", "point", "delta"].map(String::from).to_vec();
    header.extend((1..=dim).map(|i| format!("u{i}")));
    header.extend(["cost", "h", "error"].map(String::from));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in records {
        for row in &r.rows {
            let tail = [fmt_f(row.cost), fmt_f(row.h), fmt_f(row.error)];
            let head = [r.strategy.clone(), r.rep.to_string(), row.iteration.to_string()];
            if row.points.is_empty() {
                let mut rec: Vec<String> = head.to_vec();
                rec.extend(std::iter::repeat_n(String::new(), 2 + dim));
                rec.extend(tail.iter().cloned());
                w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
            }
            for (k, p) in row.points.iter().enumerate() {
                let mut rec: Vec<String> = head.to_vec();
                rec.push(k.to_string());
                rec.push(fmt_f(p.delta));
                rec.extend(p.u.iter().map(|u| fmt_f(*u)));
                rec.extend(tail.iter().cloned());
                w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `(run → [(c_n, error)])` back from a runs.csv file.
pub fn read_run_curves(path: &Path) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut rd = csv::ReaderBuilder::new().from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = rd.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Invalid(format!("{} has no '{name}' column", path.display())))
    };
    let (ri, ii, ci, ei) = (col("run")?, col("iteration")?, col("cost")?, col("error")?);
    let mut runs: BTreeMap<usize, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Invalid(format!("bad number '{}' in {}", &rec[i], path.display())))
        };
        let run = parse(ri)? as usize;
        let it = parse(ii)? as usize;
        let entry = runs.entry(run).or_default();
        if entry.last().is_none_or(|l| l.0 != it) {
            entry.push((it, parse(ci)?, parse(ei)?));
        }
    }
    Ok(runs.into_values().map(|v| v.into_iter().map(|(_, c, e)| (c, e)).collect()).collect())
}

pub fn write_median_csv(curves: &[Vec<(f64, f64)>], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["cost", "median_error"]).map_err(|e| Error::csv(path, e))?;
    for (c, m) in aggregate_median(curves, &cost_grid(curves)) {
        w.write_record([fmt_f(c), fmt_f(m)]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_selections_csv(records: &[RunRecord], levels: &[f64], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["run".to_string(), "initial_cost".to_string()];
    header.extend(levels.iter().map(|d| format!("n_{d}")));
    header.push("final_cost".into());
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in records {
        let mut rec = vec![r.rep.to_string(), fmt_f(r.initial_cost)];
        rec.extend(r.level_counts.iter().map(|c| c.to_string()));
        rec.push(fmt_f(r.final_cost()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Output directory, relative paths resolved against the working directory.
pub fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(&cfg.out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_parsing() {
        assert_eq!("mrsur".parse::<Strategy>().unwrap(), Strategy::mrsur());
        assert_eq!("mrsur-batch:5".parse::<Strategy>().unwrap(), Strategy::mrsur_batch(5));
        assert_eq!("mrsur-batch(5)".parse::<Strategy>().unwrap(), Strategy::mrsur_batch(5));
        assert_eq!("sur-fixed(0.01)".parse::<Strategy>().unwrap(), Strategy::sur_fixed(0.01));
        assert_eq!("sur-batch:2:3".parse::<Strategy>().unwrap().batch, 3);
        assert!("mrsur-batch:0".parse::<Strategy>().is_err());
        assert!("greedy".parse::<Strategy>().is_err());
        for s in ["mrsur", "mrsur-batch:4", "sur-fixed:0.5", "sur-batch:2:3"] {
            assert_eq!(s.parse::<Strategy>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn config_overlay_and_validation() {
        let c = ExperimentConfig::from_toml_str("testbed = \"forrester\"\nreps = 3\n").unwrap();
        assert_eq!(c.reps, 3);
        assert_eq!(c.budget, 13.5);
        assert!(ExperimentConfig::from_toml_str("reps = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("testbed = \"forrester\"\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("testbed = \"forrester\"\nbudget = 4.0").is_err());
        assert!(ExperimentConfig::from_toml_str("testbed = \"forrester\"\nreps = 0").is_err());
        let round = ExperimentConfig::from_toml_str(&ExperimentConfig::oscillator().to_toml_string().unwrap()).unwrap();
        assert_eq!(round, ExperimentConfig::oscillator());
    }

    #[test]
    fn initial_costs() {
        assert_eq!(ExperimentConfig::forrester().initial_cost().unwrap(), 4.5);
        let osc = ExperimentConfig::oscillator().initial_cost().unwrap();
        assert!((osc - 9.88).abs() < 0.01, "{osc}");
    }

    #[test]
    fn metric_examples() {
        let w = vec![0.25; 4];
        let t = vec![0.0, 1.0, 1.0, 0.0];
        assert_eq!(error_metric(&t, &t, &w), 0.0);
        assert!((error_metric(&[0.5; 4], &t, &w) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn median_examples() {
        let a = vec![(1.0, 3.0), (2.0, 2.0), (4.0, 1.0)];
        let grid = [1.0, 1.5, 2.0, 3.0, 4.0];
        assert_eq!(
            aggregate_median(std::slice::from_ref(&a), &grid),
            vec![(1.0, 3.0), (1.5, 3.0), (2.0, 2.0), (3.0, 2.0), (4.0, 1.0)]
        );
        assert_eq!(aggregate_median(&[a.clone(), a.clone()], &grid), aggregate_median(&[a], &grid));
        let runs = vec![vec![(0.0, 1.0)], vec![(0.0, 2.0)], vec![(0.0, 9.0)]];
        assert!(aggregate_median(&runs, &[0.0, 5.0]).iter().all(|p| p.1 == 2.0));
        assert!(aggregate_median(&runs, &[-1.0])[0].1.is_nan());
    }

    #[test]
    fn exceedance_intervals_simple() {
        let iv = exceedance_intervals(|u| u.sin(), 0.0, -1.0, 7.0, 1000);
        assert_eq!(iv.len(), 2);
        assert!((iv[0].0 - 0.0).abs() < 1e-12 && (iv[0].1 - std::f64::consts::PI).abs() < 1e-12);
        assert!((iv[1].0 - 2.0 * std::f64::consts::PI).abs() < 1e-12 && iv[1].1 == 7.0);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(1, 7), derive_seed(1, 7));
    }
}
