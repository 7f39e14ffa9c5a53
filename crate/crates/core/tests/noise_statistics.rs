use pam_core::kernels::riesz_cell_integral;
use pam_core::noise::{
    cell_covariance, covariance_row, wrap_offset, CholeskySampler, CirculantSampler, NoiseGrid, SymMatrix,
};
use pam_core::rng::{Domain, StreamKey};
use pam_core::stats::normal_cdf;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SAMPLES: usize = 100_000;
const BETA: f64 = 0.5;

fn grid() -> NoiseGrid {
    NoiseGrid::new(1, 64, 0.1, 1e-3).unwrap()
}

/// Largest `|Ĉ_jk − dt C_jk|` in units of the Gaussian standard error of `Ĉ_jk`.
fn max_covariance_z(samples: &[Vec<f64>], target: &SymMatrix, dt: f64) -> f64 {
    let n = target.dim();
    let mut acc = vec![0.0; n * n];
    for x in samples {
        for j in 0..n {
            let xj = x[j];
            let row = &mut acc[j * n..(j + 1) * n];
            for (a, &xk) in row.iter_mut().zip(x) {
                *a += xj * xk;
            }
        }
    }
    let m = samples.len() as f64;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in j..n {
            let c = dt * target.get(j, k);
            let se = ((dt * target.get(j, j) * dt * target.get(k, k) + c * c) / m).sqrt();
            worst = worst.max((acc[j * n + k] / m - c).abs() / se);
        }
    }
    worst
}

#[test]
fn circulant_row_is_the_wrapped_cell_integral() {
    for (n, h) in [(64, 0.1), (128, 0.05), (512, 0.05)] {
        for beta in [0.25, 0.5, 0.75] {
            let g = NoiseGrid::new(1, n, h, 1e-3).unwrap();
            let row = covariance_row(&g, beta).unwrap();
            for (k, v) in row.iter().enumerate() {
                let exact = riesz_cell_integral(wrap_offset(k, n) as f64 * h, h, beta).unwrap();
                assert!((v - exact).abs() <= 1e-10 * exact.abs().max(1e-300));
            }
        }
    }
}

#[test]
fn cholesky_samples_match_the_cell_covariance() {
    let g = grid();
    let c = cell_covariance(&g, BETA).unwrap();
    let chol = CholeskySampler::new(&c).unwrap();
    let samples: Vec<Vec<f64>> = (0..SAMPLES)
        .map(|i| chol.sample(g.dt, StreamKey::new(3, Domain::Test, i as u64, 0)).values)
        .collect();
    let z = max_covariance_z(&samples, &c, g.dt);
    assert!(z <= 5.0, "max z-score {z}");
}

#[test]
fn circulant_samples_match_the_cell_covariance() {
    let g = grid();
    let c = cell_covariance(&g, BETA).unwrap();
    let s = CirculantSampler::new(&g, BETA).unwrap();
    assert_eq!(s.clamped(), 0);
    let mut ws = s.workspace().unwrap();
    let samples: Vec<Vec<f64>> = (0..SAMPLES)
        .map(|i| s.sample(&mut ws, StreamKey::noise(4, i as u64, 0)).values)
        .collect();
    let z = max_covariance_z(&samples, &c, g.dt);
    assert!(z <= 5.0, "max z-score {z}");
}

#[test]
fn whitened_circulant_samples_pass_chi_square() {
    let g = grid();
    let n = g.n_cells;
    let chol = CholeskySampler::new(&cell_covariance(&g, BETA).unwrap()).unwrap();
    let s = CirculantSampler::new(&g, BETA).unwrap();
    let mut ws = s.workspace().unwrap();

    // Pooled components against N(0,1) and squared norms against χ²_n, both in equiprobable bins.
    const BINS: usize = 20;
    let norm_law = ChiSquared::new(n as f64).unwrap();
    let mut comp = [0u64; BINS];
    let mut norms = [0u64; BINS];
    for i in 0..SAMPLES {
        let x = s.sample(&mut ws, StreamKey::noise(5, i as u64, 0)).values;
        let w = chol.whiten(&x, g.dt).unwrap();
        for &v in &w {
            comp[((normal_cdf(v) * BINS as f64) as usize).min(BINS - 1)] += 1;
        }
        let q: f64 = w.iter().map(|v| v * v).sum();
        norms[((norm_law.cdf(q) * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let reference = ChiSquared::new((BINS - 1) as f64).unwrap();
    for counts in [&comp[..], &norms[..]] {
        let total: u64 = counts.iter().sum();
        let e = total as f64 / BINS as f64;
        let stat: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        let p = 1.0 - reference.cdf(stat);
        assert!(p > 1e-3, "chi-square {stat}, p = {p}");
    }
}

#[test]
fn consecutive_steps_are_uncorrelated() {
    let g = grid();
    let n = g.n_cells;
    let s = CirculantSampler::new(&g, BETA).unwrap();
    let c = cell_covariance(&g, BETA).unwrap();
    let mut ws = s.workspace().unwrap();
    let mut prev = s.sample(&mut ws, StreamKey::noise(6, 0, 0)).values;
    let mut acc = vec![0.0; n * n];
    for step in 1..=SAMPLES as u64 {
        let next = s.sample(&mut ws, StreamKey::noise(6, 0, step)).values;
        for j in 0..n {
            for k in 0..n {
                acc[j * n + k] += prev[j] * next[k];
            }
        }
        prev = next;
    }
    let m = SAMPLES as f64;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            let se = g.dt * (c.get(j, j) * c.get(k, k) / m).sqrt();
            worst = worst.max((acc[j * n + k] / m).abs() / se);
        }
    }
    assert!(worst <= 5.0, "max lag-1 z-score {worst}");
}

#[test]
fn both_samplers_share_a_law_on_the_periodized_covariance() {
    // Per-entry comparison of the two empirical covariances.
    let g = grid();
    let n = g.n_cells;
    let c = cell_covariance(&g, BETA).unwrap();
    let chol = CholeskySampler::new(&c).unwrap();
    let s = CirculantSampler::new(&g, BETA).unwrap();
    let mut ws = s.workspace().unwrap();
    let m = 20_000;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    for i in 0..m {
        let x = chol.sample(g.dt, StreamKey::new(7, Domain::Test, i, 0)).values;
        let y = s.sample(&mut ws, StreamKey::noise(7, i, 0)).values;
        for j in 0..n {
            for k in 0..n {
                a[j * n + k] += x[j] * x[k];
                b[j * n + k] += y[j] * y[k];
            }
        }
    }
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in j..n {
            let cjk = g.dt * c.get(j, k);
            let var = (g.dt * c.get(j, j) * g.dt * c.get(k, k) + cjk * cjk) / m as f64;
            worst = worst.max((a[j * n + k] - b[j * n + k]).abs() / m as f64 / (2.0 * var).sqrt());
        }
    }
    assert!(worst <= 5.0, "max two-sampler z-score {worst}");
}

#[test]
fn vanishing_exponent_gives_constant_covariance() {
    let g = grid();
    let beta = 1e-12;
    let s = CirculantSampler::new(&g, beta).unwrap();
    let row = covariance_row(&g, beta).unwrap();
    for v in &row {
        assert!((v - g.h * g.h).abs() < 1e-12);
    }
    // the kernel becomes the constant 1: a single mode with eigenvalue h²·n
    let top = s.eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((top - g.h * g.h * g.n_cells as f64).abs() < 1e-9);
}
