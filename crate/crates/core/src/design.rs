//! Nested Latin hypercube designs and the grid + local criterion optimizer.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::models::Point;
use crate::{Error, Result};

/// Exponent of the `φ_p` space-filling criterion used by [`maximin_improve`].
const PHI_P: i32 = 10;

/// A nested design in `[0,1]^d`: level 0 is the largest set, each next level a subset.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedDesign {
    sizes: Vec<usize>,
    dim: usize,
    points: Vec<Vec<f64>>,
    /// Highest level index each point belongs to; it belongs to all levels `0..=top`.
    top: Vec<usize>,
}

impl NestedDesign {
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_levels(&self) -> usize {
        self.sizes.len()
    }

    /// Points of level `s` in `[0,1]^d`, highest-level members first.
    pub fn level(&self, s: usize) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .zip(&self.top)
            .filter(|(_, t)| **t >= s)
            .map(|(p, _)| p.clone())
            .collect()
    }

    pub fn levels(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_levels()).map(|s| self.level(s)).collect()
    }

    /// Level `s` mapped affinely onto the box `[lo, hi]`.
    pub fn level_in_box(&self, s: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
        self.level(s).into_iter().map(|p| to_box(&p, lo, hi)).collect()
    }

    /// All design points as `(u, δ)` pairs; `deltas[s]` is the fidelity of level `s`.
    pub fn to_points(&self, deltas: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<Point>> {
        if deltas.len() != self.n_levels() || lo.len() != self.dim || hi.len() != self.dim {
            return Err(Error::Invalid("design levels or box do not match".into()));
        }
        Ok((0..self.n_levels())
            .flat_map(|s| self.level_in_box(s, lo, hi).into_iter().map(move |u| Point::new(u, deltas[s])))
            .collect())
    }

    /// CSV with columns `level, delta, u1..ud`.
    pub fn write_csv(&self, path: &Path, deltas: &[f64], lo: &[f64], hi: &[f64]) -> Result<()> {
        if deltas.len() != self.n_levels() {
            return Err(Error::Invalid("one delta per level is required".into()));
        }
        let mut out = Vec::new();
        let mut header = vec!["level".to_string(), "delta".to_string()];
        header.extend((1..=self.dim).map(|i| format!("u{i}")));
        writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        for (s, delta) in deltas.iter().enumerate() {
            for p in self.level_in_box(s, lo, hi) {
                let mut row = vec![(s + 1).to_string(), format!("{delta}")];
                row.extend(p.iter().map(|u| format!("{u}")));
                writeln!(out, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn to_box(p: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    p.iter().zip(lo.iter().zip(hi)).map(|(t, (a, b))| a + t * (b - a)).collect()
}

fn validate_sizes(sizes: &[usize], dim: usize) -> Result<()> {
    if sizes.is_empty() || dim == 0 {
        return Err(Error::InvalidSizes("need at least one level and dimension".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidSizes(format!("{sizes:?}: sizes must be positive")));
    }
    for w in sizes.windows(2) {
        if w[1] > w[0] || w[0] % w[1] != 0 {
            return Err(Error::InvalidSizes(format!(
                "{sizes:?}: each size must be a multiple of the next one"
            )));
        }
    }
    Ok(())
}

/// Uniform draw in cell `cell` of an `n`-cell partition of `[0,1)`, whose cell
/// index is also exact at every finer level in `finer`.
fn draw_in_cell<R: Rng>(rng: &mut R, cell: usize, n: usize, finer: &[usize]) -> f64 {
    loop {
        let u = (cell as f64 + rng.gen::<f64>()) / n as f64;
        let ok = u < 1.0
            && finer
                .iter()
                .all(|&m| ((u * m as f64).floor() as usize) / (m / n) == cell);
        if ok {
            return u;
        }
    }
}

/// Nested Latin hypercube sample with sizes `n₁ ≥ n₂ ≥ …`, each a multiple of the next.
///
/// The smallest level is drawn first; each lower level adds points in the
/// strata its existing points leave empty, so every level is an exact LHS.
pub fn nlhs(sizes: &[usize], dim: usize, seed: u64) -> Result<NestedDesign> {
    validate_sizes(sizes, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s_max = sizes.len() - 1;
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(sizes[0]);
    let mut top: Vec<usize> = Vec::with_capacity(sizes[0]);
    for s in (0..=s_max).rev() {
        let n = sizes[s];
        let existing = points.len();
        let added = n - existing;
        let mut coords = vec![vec![0.0; dim]; added];
        for d in 0..dim {
            let mut occupied = vec![false; n];
            for p in &points {
                occupied[(p[d] * n as f64).floor() as usize] = true;
            }
            let mut free: Vec<usize> = (0..n).filter(|&c| !occupied[c]).collect();
            debug_assert_eq!(free.len(), added);
            free.shuffle(&mut rng);
            for (c, cell) in coords.iter_mut().zip(free) {
                c[d] = draw_in_cell(&mut rng, cell, n, &sizes[..s]);
            }
        }
        for c in coords {
            points.push(c);
            top.push(s);
        }
    }
    Ok(NestedDesign {
        sizes: sizes.to_vec(),
        dim,
        points,
        top,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum pairwise distance of a point set (`∞` for fewer than two points).
pub fn min_distance(points: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            m = m.min(dist(&points[i], &points[j]));
        }
    }
    m
}

/// Greedy maximin improvement preserving nesting and per-level stratification.
///
/// Moves either swap one coordinate between two points that belong to the same
/// levels, or redraw one coordinate inside its finest stratum. A move is kept
/// when no distance it creates falls below the input's minimum distance at the
/// levels concerned and the summed `φ_p` criterion decreases.
pub fn maximin_improve(design: &NestedDesign, iters: usize, seed: u64) -> NestedDesign {
    let mut out = design.clone();
    let n = out.points.len();
    if iters == 0 || n < 2 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_fine = out.sizes[0];
    let n_levels = out.n_levels();
    let floors: Vec<f64> = (0..n_levels).map(|s| min_distance(&out.level(s))).collect();
    // A pair (i, j) is in levels 0..=min(top_i, top_j); it must stay above the
    // largest of their input minimum distances.
    let pair_floor = |ti: usize, tj: usize| floors[..=ti.min(tj)].iter().cloned().fold(0.0, f64::max);
    let groups: Vec<Vec<usize>> = (0..n_levels)
        .map(|s| (0..n).filter(|&i| out.top[i] == s).collect())
        .collect();

    for _ in 0..iters {
        let d = rng.gen_range(0..out.dim);
        let i = rng.gen_range(0..n);
        let g = &groups[out.top[i]];
        let partner = if g.len() > 1 && rng.gen_bool(0.5) {
            let mut j = g[rng.gen_range(0..g.len())];
            while j == i {
                j = g[rng.gen_range(0..g.len())];
            }
            Some(j)
        } else {
            None
        };
        let mut moved = vec![(i, out.points[i][d])];
        let new_i;
        let mut new_j = None;
        match partner {
            Some(j) => {
                new_i = out.points[j][d];
                new_j = Some((j, out.points[i][d]));
                moved.push((j, out.points[j][d]));
            }
            None => {
                let cell = (out.points[i][d] * n_fine as f64).floor() as usize;
                new_i = draw_in_cell(&mut rng, cell, n_fine, &[]);
            }
        }

        let affected: Vec<usize> = moved.iter().map(|m| m.0).collect();
        let contrib = |pts: &Vec<Vec<f64>>, top: &Vec<usize>| -> (f64, bool) {
            let mut phi = 0.0;
            let mut ok = true;
            for &a in &affected {
                for b in 0..n {
                    if b == a || (affected.contains(&b) && b < a) {
                        continue;
                    }
                    let shared = top[a].min(top[b]) + 1;
                    let dd = dist(&pts[a], &pts[b]);
                    if dd < pair_floor(top[a], top[b]) {
                        ok = false;
                    }
                    phi += shared as f64 * dd.max(1e-300).powi(-PHI_P);
                }
            }
            (phi, ok)
        };
        let (before, _) = contrib(&out.points, &out.top);
        out.points[i][d] = new_i;
        if let Some((j, v)) = new_j {
            out.points[j][d] = v;
        }
        let (after, ok) = contrib(&out.points, &out.top);
        if !(ok && after < before) {
            for (k, v) in moved {
                out.points[k][d] = v;
            }
        }
    }
    out
}

/// Whether each level's points all appear (bitwise) in the previous level.
pub fn is_nested(levels: &[Vec<Vec<f64>>]) -> bool {
    levels.windows(2).all(|w| {
        w[1].iter()
            .all(|p| w[0].iter().any(|q| p.len() == q.len() && p.iter().zip(q).all(|(a, b)| a.to_bits() == b.to_bits())))
    })
}

/// Whether `points` hit each of the `n = points.len()` strata of `[lo, hi]` exactly once in every coordinate.
pub fn is_lhs(points: &[Vec<f64>], lo: &[f64], hi: &[f64]) -> bool {
    let n = points.len();
    (0..lo.len()).all(|d| {
        let mut seen = vec![false; n];
        points.iter().all(|p| {
            let t = (p[d] - lo[d]) / (hi[d] - lo[d]);
            if !(0.0..1.0).contains(&t) {
                return false;
            }
            let c = (t * n as f64).floor() as usize;
            !std::mem::replace(&mut seen[c], true)
        })
    })
}

/// Regular candidate grid over a box, replicated at each fidelity level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points_per_dim: Vec<usize>,
    pub levels: Vec<f64>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points_per_dim: Vec<usize>, levels: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != points_per_dim.len() || lo.is_empty() {
            return Err(Error::Invalid("grid box and resolution dimensions differ".into()));
        }
        if points_per_dim.contains(&0) || levels.is_empty() {
            return Err(Error::Invalid("grid must be nonempty".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Invalid("grid box must have lo < hi".into()));
        }
        Ok(Self {
            lo,
            hi,
            points_per_dim,
            levels,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Grid spacing per dimension (the full width for single-point axes).
    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|d| {
                let n = self.points_per_dim[d];
                if n > 1 {
                    (self.hi[d] - self.lo[d]) / (n - 1) as f64
                } else {
                    self.hi[d] - self.lo[d]
                }
            })
            .collect()
    }

    /// Grid locations in `U`, lexicographic with the first coordinate slowest.
    pub fn locations(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|d| {
                let n = self.points_per_dim[d];
                if n == 1 {
                    vec![0.5 * (self.lo[d] + self.hi[d])]
                } else {
                    (0..n)
                        .map(|i| self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (n - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let mut out = vec![vec![]];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }

    /// All candidate points, level-major.
    pub fn points(&self) -> Vec<Point> {
        let locs = self.locations();
        self.levels
            .iter()
            .flat_map(|&d| locs.iter().map(move |u| Point::new(u.clone(), d)))
            .collect()
    }
}

/// Result of a maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub point: Point,
    pub value: f64,
}

/// Index of the first maximal value (NaN never wins).
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Coordinate search over `u` at fixed `δ`, from `start` with per-dimension
/// initial steps, halving the steps `halvings` times. Never returns a worse point.
pub fn local_refine<F>(
    mut objective: F,
    start: Optimum,
    steps: &[f64],
    lo: &[f64],
    hi: &[f64],
    halvings: usize,
) -> Result<Optimum>
where
    F: FnMut(&Point) -> Result<f64>,
{
    let mut best = start;
    let mut step = steps.to_vec();
    for _ in 0..=halvings {
        let mut improved = true;
        let mut passes = 0;
        while improved && passes < 50 {
            improved = false;
            passes += 1;
            for d in 0..step.len() {
                for sign in [1.0, -1.0] {
                    let mut u = best.point.u.clone();
                    u[d] = (u[d] + sign * step[d]).clamp(lo[d], hi[d]);
                    if u[d] == best.point.u[d] {
                        continue;
                    }
                    let cand = Point::new(u, best.point.delta);
                    let v = objective(&cand)?;
                    if v > best.value {
                        best = Optimum { point: cand, value: v };
                        improved = true;
                    }
                }
            }
        }
        step.iter_mut().for_each(|s| *s *= 0.5);
    }
    Ok(best)
}

/// Exhaustive grid search followed by local refinement of the best grid point.
/// Ties on the grid go to the first point in grid order.
pub fn optimize_criterion<F>(mut objective: F, grid: &GridSpec, halvings: Option<usize>) -> Result<Optimum>
where
    F: FnMut(&Point) -> Result<f64>,
{
    let pts = grid.points();
    let values = pts.iter().map(&mut objective).collect::<Result<Vec<f64>>>()?;
    let i = argmax_first(&values).ok_or(Error::EmptyCandidates)?;
    let start = Optimum {
        point: pts[i].clone(),
        value: values[i],
    };
    match halvings {
        None => Ok(start),
        Some(h) => local_refine(objective, start, &grid.spacing(), &grid.lo, &grid.hi, h),
    }
}
