//! Excursion-probability uncertainty and the closed-form (batch) SUR criterion.
//!
//! For `α(x) = Φ((ξ(x) − z)/√λ(x))`, with `v_n = k_n(x,x) + λ(x)`,
//! `a_n = (m_n − z)/√v_n` and `r_n = k_n(x,x)/v_n`:
//!
//! ```text
//! H_n    = ∫ Φ₂(a_n, a_n; r_n) − Φ(a_n)²            dμ
//! J_n(x̲) = ∫ Φ₂(a_n, a_n; r_n) − Φ₂(a_n, a_n; r̃_n)  dμ
//! G_n(x̲) = ∫ Φ₂(a_n, a_n; r̃_n) − Φ(a_n)²            dμ
//! ```
//!
//! where `r̃_n = k_n(x̲,x)ᵀ K_n(x̲,x̲)⁻¹ k_n(x̲,x) / v_n(x)` and
//! `K_n(x̲,x̲) = k_n(x̲,x̲) + diag λ(x̲)`.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::gp::{cholesky_with_jitter, JitterPolicy, PosteriorState, PriorModel, Projection};
use crate::models::{NoiseModel, Point};
use crate::special::{bvn_cdf, normal_cdf, BvnQuery};
use crate::{Error, Result};

/// Weighted nodes representing the integration measure `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationNodes {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl IntegrationNodes {
    pub fn new(nodes: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::Invalid("nodes and weights differ in length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Invalid("weights must be >= 0 with a positive sum".into()));
        }
        if nodes.iter().any(|p| !p.delta.is_finite() || p.u.iter().any(|u| !u.is_finite())) {
            return Err(Error::Invalid("integration nodes must be finite".into()));
        }
        Ok(Self { nodes, weights })
    }

    /// Equal weights `1/N` on the given nodes.
    pub fn uniform(nodes: Vec<Point>) -> Result<Self> {
        let n = nodes.len();
        Self::new(nodes, vec![1.0 / n as f64; n])
    }

    /// Regular 1-D grid of `n` cell midpoints on `[lo, hi]` at fidelity `delta`.
    pub fn grid_1d(lo: f64, hi: f64, n: usize, delta: f64) -> Result<Self> {
        let h = (hi - lo) / n as f64;
        Self::uniform((0..n).map(|i| Point::scalar(lo + (i as f64 + 0.5) * h, delta)).collect())
    }

    /// I.i.d. uniform nodes in the box `[lo, hi]` at fidelity `delta`.
    pub fn monte_carlo<R: Rng>(lo: &[f64], hi: &[f64], n: usize, delta: f64, rng: &mut R) -> Result<Self> {
        let nodes = (0..n)
            .map(|_| {
                Point::new(
                    lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect(),
                    delta,
                )
            })
            .collect();
        Self::uniform(nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `q ≥ 1` candidate points evaluated together, and their cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBatch {
    pub points: Vec<Point>,
    pub cost: f64,
}

impl CandidateBatch {
    pub fn new(points: Vec<Point>, cost: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("a batch needs at least one point".into()));
        }
        if !(cost > 0.0) {
            return Err(Error::Invalid(format!("batch cost must be > 0, got {cost}")));
        }
        Ok(Self { points, cost })
    }

    pub fn single(point: Point, cost: f64) -> Result<Self> {
        Self::new(vec![point], cost)
    }
}

/// Per-node quantities that do not depend on the candidate.
#[derive(Debug, Clone, Copy)]
struct NodeTerm {
    a: f64,
    v: f64,
    r: f64,
    phi2_r: f64,
    phi_sq: f64,
    /// Contribution to `H_n` before weighting.
    h: f64,
    active: bool,
}

impl NodeTerm {
    fn new(mean: f64, kxx: f64, lambda: f64, z_crit: f64) -> Self {
        let kxx = kxx.max(0.0);
        let v = kxx + lambda;
        if !(v > 0.0) {
            // Resolved deterministic node: α(x) is known, no uncertainty left.
            let p = if mean > z_crit { 1.0 } else { 0.0 };
            return Self {
                a: if mean > z_crit { f64::INFINITY } else { f64::NEG_INFINITY },
                v: 0.0,
                r: 1.0,
                phi2_r: p,
                phi_sq: p,
                h: 0.0,
                active: false,
            };
        }
        let a = (mean - z_crit) / v.sqrt();
        let r = (kxx / v).clamp(0.0, 1.0);
        let phi2_r = bvn_cdf(BvnQuery::new(a, a, r));
        let phi = normal_cdf(a);
        let phi_sq = phi * phi;
        Self {
            a,
            v,
            r,
            phi2_r,
            phi_sq,
            h: (phi2_r - phi_sq).max(0.0),
            active: true,
        }
    }
}

/// Criterion values for one candidate batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchValue {
    pub j: f64,
    pub g: f64,
}

/// Precomputes the node-side quantities of `H_n`, `J_n`, `G_n` for one posterior.
pub struct SurEvaluator<'a, M> {
    state: &'a PosteriorState<M>,
    noise: &'a NoiseModel,
    weights: Vec<f64>,
    terms: Vec<NodeTerm>,
    h: f64,
    /// Node projection, kept to rebuild the evaluated subset.
    nodes: Projection,
    /// Nodes that enter candidate evaluations, and their projection.
    evaluated: Vec<usize>,
    evaluated_nodes: Projection,
    /// `J_n` contribution of the nodes left out of `evaluated`.
    j_skipped: f64,
}

impl<'a, M: PriorModel> SurEvaluator<'a, M> {
    pub fn new(state: &'a PosteriorState<M>, noise: &'a NoiseModel, z_crit: f64, mu: &IntegrationNodes) -> Result<Self> {
        let nodes = state.project(&mu.nodes)?;
        let mut terms = Vec::with_capacity(mu.len());
        for (i, x) in mu.nodes.iter().enumerate() {
            let kxx = state.cov_between(&nodes, i, &nodes, i)?;
            terms.push(NodeTerm::new(nodes.mean[i], kxx, noise.at(x)?, z_crit));
        }
        let h = terms.iter().zip(&mu.weights).map(|(t, w)| w * t.h).sum();
        let mut ev = Self {
            state,
            noise,
            weights: mu.weights.clone(),
            terms,
            h,
            evaluated_nodes: nodes.select(&[]),
            nodes,
            evaluated: vec![],
            j_skipped: 0.0,
        };
        ev.select_nodes(0.0);
        Ok(ev)
    }

    fn select_nodes(&mut self, prune: f64) {
        self.evaluated.clear();
        self.j_skipped = 0.0;
        for (i, t) in self.terms.iter().enumerate() {
            if !t.active {
                continue;
            }
            if t.h < prune {
                self.j_skipped += self.weights[i] * t.h;
            } else {
                self.evaluated.push(i);
            }
        }
        self.evaluated_nodes = self.nodes.select(&self.evaluated);
    }

    /// Skip nodes with `H_n` integrand below `tol` when evaluating candidates.
    /// The absolute error on `J_n` and `G_n` is bounded by `tol · Σw`.
    pub fn with_pruning(mut self, tol: f64) -> Self {
        self.select_nodes(tol.max(0.0));
        self
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of nodes entering candidate evaluations.
    pub fn n_evaluated(&self) -> usize {
        self.evaluated.len()
    }

    /// Posterior-mean excursion probabilities `Φ(a_n)` at the nodes.
    pub fn node_probabilities(&self) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| if t.active { normal_cdf(t.a) } else { t.phi_sq })
            .collect()
    }

    /// `(J_n, G_n)` for a batch of points evaluated together.
    pub fn evaluate(&self, batch: &[Point]) -> Result<BatchValue> {
        let q = batch.len();
        if q == 0 {
            return Err(Error::Invalid("empty batch".into()));
        }
        let proj = self.state.project(batch)?;
        let mut kb = DMatrix::zeros(q, q);
        for l in 0..q {
            for m in 0..=l {
                let c = self.state.cov_between(&proj, l, &proj, m)?;
                kb[(l, m)] = c;
                kb[(m, l)] = c;
            }
            kb[(l, l)] = candidate_variance(self.state.model(), &batch[l], kb[(l, l)], self.noise.at(&batch[l])?)?;
        }
        let chol = match kb.clone().cholesky() {
            Some(c) => c.unpack(),
            None => {
                let scale = kb.diagonal().mean();
                cholesky_with_jitter(&kb, scale, JitterPolicy::default())
                    .ok_or(Error::SingularBatch(q))?
                    .0
            }
        };

        // k_n(x̲, nodes), whitened by the batch factor
        let mut cross = -proj.reductions(&self.evaluated_nodes);
        for (k, x) in self.evaluated_nodes.points.iter().enumerate() {
            for l in 0..q {
                cross[(l, k)] += self.state.model().covariance(&batch[l], x)?;
            }
        }
        if q == 1 {
            let d = chol[(0, 0)];
            if d > 0.0 {
                cross /= d;
            } else {
                cross.fill(0.0);
            }
        } else if !chol.solve_lower_triangular_mut(&mut cross) {
            return Err(Error::SingularBatch(q));
        }

        let mut j = self.j_skipped;
        let mut g = 0.0;
        for (k, &i) in self.evaluated.iter().enumerate() {
            let t = &self.terms[i];
            let w = self.weights[i];
            let nu = cross.column(k).norm_squared();
            let r_tilde = (nu / t.v).clamp(0.0, t.r);
            let p2 = bvn_cdf(BvnQuery::new(t.a, t.a, r_tilde));
            j += w * (t.phi2_r - p2);
            g += w * (p2 - t.phi_sq);
        }
        Ok(BatchValue { j, g })
    }

    /// Evaluates many batches; order of the output matches the input.
    pub fn evaluate_all(&self, batches: &[Vec<Point>]) -> Result<Vec<BatchValue>>
    where
        M: Sync,
    {
        batches.par_iter().map(|b| self.evaluate(b)).collect()
    }
}

/// Floor on the predictive variance of noise-free candidates, relative to the
/// prior variance, so that round-off in `k_n` at already-observed points cannot
/// produce a spurious gain.
pub const NOISE_FREE_FLOOR: f64 = 1e-10;

/// `k_n(x,x) + λ(x)`, floored when `λ(x) = 0`.
fn candidate_variance<M: PriorModel>(model: &M, x: &Point, kn: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(kn.max(NOISE_FREE_FLOOR * model.covariance(x, x)?));
    }
    Ok(kn.max(0.0) + lambda)
}

/// Posterior mean of `α(x)`, i.e. `Φ(a_n(x))`.
pub fn excursion_prob<M: PriorModel>(state: &PosteriorState<M>, noise: &NoiseModel, z_crit: f64, x: &Point) -> Result<f64> {
    let (m, k) = state.posterior_mean_cov(x, x)?;
    let v = k.max(0.0) + noise.at(x)?;
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(v));
    }
    Ok(normal_cdf((m - z_crit) / v.sqrt()))
}

/// `H_n`, the integrated posterior variance of `α`.
pub fn uncertainty_h<M: PriorModel>(
    state: &PosteriorState<M>,
    noise: &NoiseModel,
    z_crit: f64,
    mu: &IntegrationNodes,
) -> Result<f64> {
    Ok(SurEvaluator::new(state, noise, z_crit, mu)?.h())
}

/// Expected `H_{n+q}` after observing the batch.
pub fn sur_j<M: PriorModel>(
    state: &PosteriorState<M>,
    noise: &NoiseModel,
    z_crit: f64,
    batch: &CandidateBatch,
    mu: &IntegrationNodes,
) -> Result<f64> {
    Ok(SurEvaluator::new(state, noise, z_crit, mu)?.evaluate(&batch.points)?.j)
}

/// Expected uncertainty reduction `H_n − J_n`.
pub fn gain_g<M: PriorModel>(
    state: &PosteriorState<M>,
    noise: &NoiseModel,
    z_crit: f64,
    batch: &CandidateBatch,
    mu: &IntegrationNodes,
) -> Result<f64> {
    Ok(SurEvaluator::new(state, noise, z_crit, mu)?.evaluate(&batch.points)?.g)
}

/// Single-point criterion written directly from the pairwise posterior covariance:
/// `Σ w [Φ₂(a, a; r) − Φ₂(a, a; k_n(x, x')² / (v_n(x) v_n(x')))]`.
pub fn sur_j_single<M: PriorModel>(
    state: &PosteriorState<M>,
    noise: &NoiseModel,
    z_crit: f64,
    x: &Point,
    mu: &IntegrationNodes,
) -> Result<f64> {
    let (_, kxx) = state.posterior_mean_cov(x, x)?;
    let vx = candidate_variance(state.model(), x, kxx, noise.at(x)?)?;
    let mut j = 0.0;
    for (node, w) in mu.nodes.iter().zip(&mu.weights) {
        let (m, knode) = state.posterior_mean_cov(node, node)?;
        let t = NodeTerm::new(m, knode, noise.at(node)?, z_crit);
        if !t.active {
            continue;
        }
        let (_, c) = state.posterior_mean_cov(x, node)?;
        let r_tilde = if vx > 0.0 { (c * c / (vx * t.v)).clamp(0.0, t.r) } else { 0.0 };
        j += w * (t.phi2_r - bvn_cdf(BvnQuery::new(t.a, t.a, r_tilde)));
    }
    Ok(j)
}

/// One evaluated candidate (a point, or a batch at a common level).
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionRecord {
    pub points: Vec<Point>,
    pub cost: f64,
    pub j: f64,
    pub g: f64,
}

impl CriterionRecord {
    pub fn rate(&self) -> f64 {
        self.g / self.cost
    }
}

/// Evaluated candidates with their `(C, J)` Pareto front and the MR-SUR choice.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionField {
    pub h: f64,
    pub records: Vec<CriterionRecord>,
    pub pareto: Vec<usize>,
    pub selected: usize,
}

impl CriterionField {
    pub fn from_records(h: f64, records: Vec<CriterionRecord>) -> Result<Self> {
        let selected = mrsur_select(&records)?;
        let cj: Vec<(f64, f64)> = records.iter().map(|r| (r.cost, r.j)).collect();
        let pareto = pareto_front(&cj);
        Ok(Self {
            h,
            records,
            pareto,
            selected,
        })
    }

    pub fn selected_record(&self) -> &CriterionRecord {
        &self.records[self.selected]
    }

    /// CSV with one row per point (batch members share `index`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let dim = self.records.first().and_then(|r| r.points.first()).map_or(0, |p| p.dim());
        let mut header = vec!["index".to_string()];
        header.extend((1..=dim).map(|i| format!("u{i}")));
        header.extend(["delta", "cost", "J", "G", "rate", "on_pareto", "selected"].map(String::from));
        writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        let mut on_front = vec![false; self.records.len()];
        for &i in &self.pareto {
            on_front[i] = true;
        }
        for (i, r) in self.records.iter().enumerate() {
            for p in &r.points {
                let mut row = vec![i.to_string()];
                row.extend(p.u.iter().map(|u| format!("{u}")));
                row.push(format!("{}", p.delta));
                row.push(format!("{}", r.cost));
                row.push(format!("{}", r.j));
                row.push(format!("{}", r.g));
                row.push(format!("{}", r.rate()));
                row.push(u8::from(on_front[i]).to_string());
                row.push(u8::from(i == self.selected).to_string());
                writeln!(out, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Ranking used for selection: higher rate, then lower cost, then lower `J`,
/// then lexicographic order of the points.
fn selection_order(a: &CriterionRecord, b: &CriterionRecord) -> Ordering {
    b.rate()
        .total_cmp(&a.rate())
        .then(a.cost.total_cmp(&b.cost))
        .then(a.j.total_cmp(&b.j))
        .then_with(|| {
            for (p, q) in a.points.iter().zip(&b.points) {
                match p.lex_cmp(q) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            a.points.len().cmp(&b.points.len())
        })
}

/// Index of the MR-SUR choice `argmax G/C`.
pub fn mrsur_select(records: &[CriterionRecord]) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if let Some(r) = records.iter().find(|r| !(r.cost > 0.0)) {
        return Err(Error::Invalid(format!("candidate cost must be > 0, got {}", r.cost)));
    }
    let mut best = 0;
    for i in 1..records.len() {
        if selection_order(&records[i], &records[best]) == Ordering::Less {
            best = i;
        }
    }
    Ok(best)
}

/// Indices of the non-dominated `(C, J)` pairs, sorted by cost.
pub fn pareto_front(records: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&i, &j| {
        records[i]
            .0
            .total_cmp(&records[j].0)
            .then(records[i].1.total_cmp(&records[j].1))
            .then(i.cmp(&j))
    });
    let mut front = Vec::new();
    let mut best_lower = f64::INFINITY;
    let mut k = 0;
    while k < order.len() {
        let c = records[order[k]].0;
        let group_min = records[order[k]].1;
        let mut end = k;
        while end < order.len() && records[order[end]].0 == c {
            let idx = order[end];
            if records[idx].1 == group_min && group_min < best_lower {
                front.push(idx);
            }
            end += 1;
        }
        best_lower = best_lower.min(group_min);
        k = end;
    }
    front
}
