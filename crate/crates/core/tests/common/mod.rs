#![allow(dead_code)]

use mrsur_core::criteria::IntegrationNodes;
use mrsur_core::gp::{MaternKernel, MeanSpec, PosteriorState, Regularity};
use mrsur_core::models::{AdditiveModel, NoiseModel, Point};
use mrsur_core::special::normal_cdf;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Prints one PASS/FAIL line and passes the verdict through.
pub fn report(id: u32, name: &str, ok: bool, detail: &str) -> bool {
    println!("{} criterion {id}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
    ok
}

const GL10: [(f64, f64); 5] = [
    (0.2955242247147529, 0.1488743389816312),
    (0.2692667193099963, 0.4333953941292472),
    (0.219086362515982, 0.6794095682990244),
    (0.1494513491505806, 0.8650633666889845),
    (0.0666713443086881, 0.9739065285171717),
];

fn gl10(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    h * GL10.iter().map(|&(w, x)| w * (f(c - h * x) + f(c + h * x))).sum::<f64>()
}

fn adaptive(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, whole: f64, depth: u32) -> f64 {
    let mid = 0.5 * (lo + hi);
    let (l, r) = (gl10(f, lo, mid), gl10(f, mid, hi));
    if depth == 0 || (l + r - whole).abs() <= 1e-17 {
        l + r
    } else {
        adaptive(f, lo, mid, l, depth - 1) + adaptive(f, mid, hi, r, depth - 1)
    }
}

/// `Φ₂(a, b; ρ) = Φ(a)Φ(b) + ∫₀^ρ φ₂(a, b; r) dr`, by adaptive Gauss–Legendre.
pub fn bvn_plackett(a: f64, b: f64, rho: f64) -> f64 {
    let dens = |r: f64| {
        let s = 1.0 - r * r;
        (-(a * a - 2.0 * r * a * b + b * b) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s.sqrt())
    };
    let whole = gl10(&dens, 0.0, rho);
    normal_cdf(a) * normal_cdf(b) + adaptive(&dens, 0.0, rho, whole, 40)
}

pub const LEVELS: [f64; 4] = [1.0, 0.5, 0.2, 0.1];

/// One-dimensional additive model on `[-0.5, 0.5]` with random hyperparameters and
/// an unknown constant mean.
pub fn random_additive(rng: &mut ChaCha8Rng) -> AdditiveModel {
    let base = MaternKernel::isotropic(rng.gen_range(0.5..2.0), rng.gen_range(0.1..0.5), Regularity::FiveHalves, 1).unwrap();
    let err = MaternKernel::isotropic(1.0, rng.gen_range(0.05..0.3), Regularity::FiveHalves, 1).unwrap();
    AdditiveModel::new(base, err, rng.gen_range(0.5..5.0), rng.gen_range(1.0..3.0), MeanSpec::Unknown).unwrap()
}

/// Random additive-model posterior: `n` noisy observations on random levels, plus a
/// noise-free reference level `δ = 0` for the quantity of interest.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, lambda: f64) -> (PosteriorState<AdditiveModel>, NoiseModel) {
    let model = random_additive(rng);
    let pts: Vec<Point> = (0..n)
        .map(|_| Point::scalar(rng.gen_range(-0.5..0.5), LEVELS[rng.gen_range(0..LEVELS.len())]))
        .collect();
    let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut lv = LEVELS.to_vec();
    let mut vars = vec![lambda; lv.len()];
    lv.push(0.0);
    vars.push(0.0);
    let noise = NoiseModel::new(lv, vars).unwrap();
    let nv = pts.iter().map(|p| noise.at(p).unwrap()).collect();
    (PosteriorState::fit(model, pts, z, nv).unwrap(), noise)
}

pub fn qoi_nodes(n: usize) -> IntegrationNodes {
    IntegrationNodes::grid_1d(-0.5, 0.5, n, 0.0).unwrap()
}

pub fn random_candidate(rng: &mut ChaCha8Rng) -> Point {
    Point::scalar(rng.gen_range(-0.5..0.5), LEVELS[rng.gen_range(0..LEVELS.len())])
}
