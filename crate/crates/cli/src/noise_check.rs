//! Empirical covariance of sampled increments against the exact cell covariance.

use pam_core::noise::{cell_covariance, CholeskySampler, CirculantSampler, NoiseGrid, SymMatrix};
use pam_core::rng::{Domain, StreamKey};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// Largest tolerated deviation, in standard errors.
pub const MAX_Z: f64 = 5.0;

const CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerFidelity {
    pub sampler: String,
    pub max_z: f64,
    pub worst_entry: (usize, usize),
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCheckReport {
    pub n_cells: usize,
    pub h: f64,
    pub dt: f64,
    pub beta: f64,
    pub samples: usize,
    pub samplers: Vec<SamplerFidelity>,
    /// Largest gap between the two empirical covariances, in standard errors of the difference.
    pub agreement_z: f64,
    pub agreement_passed: bool,
}

impl NoiseCheckReport {
    pub fn passed(&self) -> bool {
        self.agreement_passed && self.samplers.iter().all(|s| s.passed)
    }
}

/// Sum of outer products, accumulated over fixed chunks and reduced in chunk order.
fn second_moments<S>(
    n: usize,
    samples: usize,
    init: impl Fn() -> S + Sync,
    draw: impl Fn(&mut S, usize) -> Vec<f64> + Sync,
) -> Vec<f64> {
    let chunks: Vec<Vec<f64>> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n * n];
            let mut state = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let x = draw(&mut state, i);
                for j in 0..n {
                    let row = &mut acc[j * n..(j + 1) * n];
                    for (a, &xk) in row.iter_mut().zip(&x) {
                        *a += x[j] * xk;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n * n];
    for acc in chunks {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    let m = samples as f64;
    total.iter_mut().for_each(|t| *t /= m);
    total
}

/// Gaussian standard error of one empirical second moment `Ĉ_jk`.
fn entry_stderr(target: &SymMatrix, dt: f64, j: usize, k: usize, m: f64) -> f64 {
    let c = dt * target.get(j, k);
    ((dt * target.get(j, j) * dt * target.get(k, k) + c * c) / m).sqrt()
}

fn fidelity(name: &str, emp: &[f64], target: &SymMatrix, dt: f64, m: f64) -> SamplerFidelity {
    let n = target.dim();
    let mut worst = (0.0, (0, 0));
    for j in 0..n {
        for k in j..n {
            let z = (emp[j * n + k] - dt * target.get(j, k)).abs() / entry_stderr(target, dt, j, k, m);
            if z > worst.0 {
                worst = (z, (j, k));
            }
        }
    }
    SamplerFidelity {
        sampler: name.into(),
        max_z: worst.0,
        worst_entry: worst.1,
        passed: worst.0 <= MAX_Z,
    }
}

pub fn noise_check(grid: &NoiseGrid, beta: f64, samples: usize, seed: u64) -> CliResult<NoiseCheckReport> {
    let n = grid.total_cells();
    let c = cell_covariance(grid, beta)?;
    let chol = CholeskySampler::new(&c)?;
    let circ = CirculantSampler::new(grid, beta)?;
    let dt = grid.dt;
    let m = samples as f64;

    let chol_emp = second_moments(
        n,
        samples,
        || (),
        |_, i| chol.sample(dt, StreamKey::new(seed, Domain::Test, i as u64, 0)).values,
    );
    circ.workspace()?;
    let circ_emp = second_moments(
        n,
        samples,
        || circ.workspace().expect("workspace creation succeeded above"),
        |ws, i| circ.sample(ws, StreamKey::noise(seed, i as u64, 0)).values,
    );

    let mut agreement: f64 = 0.0;
    for j in 0..n {
        for k in j..n {
            let se = std::f64::consts::SQRT_2 * entry_stderr(&c, dt, j, k, m);
            agreement = agreement.max((chol_emp[j * n + k] - circ_emp[j * n + k]).abs() / se);
        }
    }
    Ok(NoiseCheckReport {
        n_cells: grid.n_cells,
        h: grid.h,
        dt,
        beta,
        samples,
        samplers: vec![
            fidelity("cholesky", &chol_emp, &c, dt, m),
            fidelity("circulant", &circ_emp, &c, dt, m),
        ],
        agreement_z: agreement,
        agreement_passed: agreement <= MAX_Z,
    })
}

pub fn run_noise_check(cfg: &ExperimentConfig) -> CliResult<NoiseCheckReport> {
    let (grid, beta) = cfg.noise_check_grid()?;
    noise_check(&grid, beta, cfg.noise_check.samples, cfg.seed)
}
