use mrsur_core::models::Point;
use mrsur_core::testbeds::{oscillator_response, OscillatorConfig, ToyGpSampler, ToyParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn oscillator_noise_scale_only_shifts_the_response() {
    // linear dynamics from rest: scaling the forcing scales the path, so the
    // log-displacement maximum moves by ½ log S (forcing amplitude ∝ √S) and its
    // variance does not change
    let base = OscillatorConfig {
        omega0: 3.0,
        zeta: 0.05,
        ..Default::default()
    };
    let small = OscillatorConfig { s: 0.01, ..base };
    let (mut a, mut b) = (vec![], vec![]);
    for seed in 0..500 {
        let z1 = oscillator_response(&base, seed).unwrap();
        let z2 = oscillator_response(&small, seed).unwrap();
        assert!((z2 - z1 - 0.5 * 0.01f64.ln()).abs() < 1e-9, "seed {seed}");
        a.push(z1);
        b.push(z2);
    }
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    assert!((var(&a) - var(&b)).abs() < 1e-8);
}

#[test]
fn oscillator_response_variance_shrinks_with_step() {
    let spread = |delta: f64| {
        let cfg = OscillatorConfig {
            omega0: 3.0,
            zeta: 0.05,
            delta,
            s: 0.01,
            ..Default::default()
        };
        let z: Vec<f64> = (0..400).map(|k| oscillator_response(&cfg, 1000 + k).unwrap()).collect();
        let m = z.iter().sum::<f64>() / z.len() as f64;
        (z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (z.len() - 1) as f64).sqrt()
    };
    let (coarse, fine) = (spread(1.0), spread(0.01));
    assert!(coarse > fine, "{coarse} vs {fine}");
}

#[test]
fn toy_paths_have_the_model_covariance() {
    let params = ToyParams::default();
    let sampler = ToyGpSampler::new(&params, vec![1.0, 0.5, 0.0], 51).unwrap();
    let n = 3000;
    let at = |d: f64| Point::scalar(0.1, d);
    let mut s = [[0.0; 3]; 3];
    let mut mean = [0.0; 3];
    let mut noisy = vec![];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..n {
        let p = sampler.sample(seed);
        let v = [p.value(&at(1.0)).unwrap(), p.value(&at(0.5)).unwrap(), p.value(&at(0.0)).unwrap()];
        for i in 0..3 {
            mean[i] += v[i] / n as f64;
            for j in 0..3 {
                s[i][j] += v[i] * v[j] / n as f64;
            }
        }
        noisy.push(p.observe(&at(1.0), &mut rng).unwrap());
    }
    let cov = |i: usize, j: usize| s[i][j] - mean[i] * mean[j];
    // σ₀²(1 + G min(δ, δ')^L) on the error part; ξ₀ has variance σ₀²
    let expected: [[f64; 3]; 3] = [[5.0, 2.0, 1.0], [2.0, 2.0, 1.0], [1.0, 1.0, 1.0]];
    for i in 0..3 {
        for j in 0..3 {
            let se = ((expected[i][i] * expected[j][j] + expected[i][j].powi(2)) / n as f64).sqrt();
            assert!((cov(i, j) - expected[i][j]).abs() < 4.0 * se, "cov({i},{j}) = {}", cov(i, j));
        }
    }
    let m = noisy.iter().sum::<f64>() / n as f64;
    let v = noisy.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((v - 5.16).abs() < 4.0 * 5.16 * (2.0 / n as f64).sqrt(), "{v}");
}
