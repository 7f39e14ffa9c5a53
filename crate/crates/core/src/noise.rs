//! Gaussian noise increments on a periodic cell grid.
//!
//! Cell `j` of an axis with `n` cells covers `[−L + jh, −L + (j+1)h]`, where
//! `L = nh/2`. In two dimensions values are stored row-major, index `i·n + j`
//! for axis-0 cell `i` and axis-1 cell `j`. The increment over one step has
//! covariance `dt · C` with `C` the cell-pair Riesz integral, periodized by
//! taking the shortest wrap offset along each axis.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::GridFft;
use crate::kernels::{check_exponent, riesz_cell_integral, riesz_cell_integral_2d};
use crate::rng::StreamKey;

/// Relative size below which negative circulant eigenvalues are treated as round-off.
pub const EIGEN_CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseGrid {
    pub d: usize,
    /// Cells per dimension.
    pub n_cells: usize,
    pub h: f64,
    pub dt: f64,
}

impl NoiseGrid {
    pub fn new(d: usize, n_cells: usize, h: f64, dt: f64) -> Result<Self> {
        let g = Self { d, n_cells, h, dt };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d == 1 || self.d == 2) {
            return Err(Error::Domain(format!("dimension {} unsupported", self.d)));
        }
        if self.n_cells < 2 || !self.n_cells.is_power_of_two() {
            return Err(Error::Domain(format!(
                "cells per dimension must be a power of two >= 2, got {}",
                self.n_cells
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Domain(format!("cell width must be positive, got {}", self.h)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// `L`, so that the torus is `[−L, L]^d`.
    pub fn half_width(&self) -> f64 {
        0.5 * self.n_cells as f64 * self.h
    }

    pub fn total_cells(&self) -> usize {
        self.n_cells.pow(self.d as u32)
    }

    /// Center of cell `j` along one axis.
    pub fn cell_center(&self, j: usize) -> f64 {
        -self.half_width() + (j as f64 + 0.5) * self.h
    }
}

/// One step of noise: `W((tₙ, tₙ₊₁] × cell)` for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub values: Vec<f64>,
}

/// Shortest periodic distance, in cells, for offset `m` on an axis of `n` cells.
pub fn wrap_offset(m: usize, n: usize) -> usize {
    let m = m % n;
    m.min(n - m)
}

/// First row of the periodized cell covariance: entry `k` pairs cell 0 with cell `k`.
pub fn covariance_row(grid: &NoiseGrid, beta: f64) -> Result<Vec<f64>> {
    grid.validate()?;
    check_exponent(grid.d, beta)?;
    let n = grid.n_cells;
    let half = n / 2;
    match grid.d {
        1 => {
            let table = (0..=half)
                .map(|m| riesz_cell_integral(m as f64 * grid.h, grid.h, beta))
                .collect::<Result<Vec<_>>>()?;
            Ok((0..n).map(|k| table[wrap_offset(k, n)]).collect())
        }
        _ => {
            let mut table = vec![0.0; (half + 1) * (half + 1)];
            for a in 0..=half {
                for b in a..=half {
                    let v = riesz_cell_integral_2d([a as i64, b as i64], grid.h, beta)?;
                    table[a * (half + 1) + b] = v;
                    table[b * (half + 1) + a] = v;
                }
            }
            let mut row = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    row[i * n + j] = table[wrap_offset(i, n) * (half + 1) + wrap_offset(j, n)];
                }
            }
            Ok(row)
        }
    }
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Adds `eps` to the diagonal; `eps` may not exceed `1e−12 · trace`.
    pub fn add_jitter(&mut self, eps: f64) -> Result<()> {
        let cap = 1e-12 * self.trace();
        if !(eps >= 0.0 && eps <= cap) {
            return Err(Error::Config(format!("jitter {eps} outside [0, {cap}]")));
        }
        for i in 0..self.n {
            self.data[i * self.n + i] += eps;
        }
        Ok(())
    }
}

/// `C_{jk} = ∫_{cell_j}∫_{cell_k} |x − y|^{−β}`, periodized, as a dense matrix.
pub fn cell_covariance(grid: &NoiseGrid, beta: f64) -> Result<SymMatrix> {
    let row = covariance_row(grid, beta)?;
    let n = grid.n_cells;
    let total = grid.total_cells();
    Ok(match grid.d {
        1 => SymMatrix::from_fn(total, |i, j| row[(j + n - i) % n]),
        _ => SymMatrix::from_fn(total, |p, q| {
            let (pi, pj) = (p / n, p % n);
            let (qi, qj) = (q / n, q % n);
            row[((qi + n - pi) % n) * n + (qj + n - pj) % n]
        }),
    })
}

fn standard_normals(key: StreamKey, out: &mut [f64]) {
    let mut rng = key.rng();
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

/// Exact sampler through a dense Cholesky factor.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    n: usize,
    lower: Vec<f64>,
}

impl CholeskySampler {
    /// Factors `C = L Lᵀ`. Zero pivots (semidefinite directions) are accepted;
    /// negative ones fail, reporting the most negative pivot met.
    pub fn new(c: &SymMatrix) -> Result<Self> {
        let n = c.dim();
        let scale = (0..n).map(|i| c.get(i, i).abs()).fold(0.0, f64::max);
        let floor = 1e-14 * scale;
        let mut lower = vec![0.0; n * n];
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..n {
            let mut pivot = c.get(j, j);
            for k in 0..j {
                pivot -= lower[j * n + k] * lower[j * n + k];
            }
            if pivot < -floor || !pivot.is_finite() {
                if worst.is_none_or(|(_, w)| pivot < w || !pivot.is_finite()) {
                    worst = Some((j, pivot));
                }
                continue;
            }
            if pivot <= floor {
                continue;
            }
            let diag = pivot.sqrt();
            lower[j * n + j] = diag;
            for i in (j + 1)..n {
                let mut s = c.get(i, j);
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k];
                }
                lower[i * n + j] = s / diag;
            }
        }
        if let Some((index, pivot)) = worst {
            return Err(Error::NotPositiveDefinite { index, pivot });
        }
        Ok(Self { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn sample(&self, dt: f64, key: StreamKey) -> NoiseIncrement {
        let mut z = vec![0.0; self.n];
        if dt == 0.0 {
            return NoiseIncrement { values: z };
        }
        standard_normals(key, &mut z);
        let s = dt.sqrt();
        let values = (0..self.n)
            .map(|i| {
                let row = &self.lower[i * self.n..i * self.n + i + 1];
                s * row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>()
            })
            .collect();
        NoiseIncrement { values }
    }

    /// Solves `L w = x / √dt`; fails on a singular factor.
    pub fn whiten(&self, x: &[f64], dt: f64) -> Result<Vec<f64>> {
        let n = self.n;
        let s = dt.sqrt();
        let mut w = vec![0.0; n];
        for i in 0..n {
            let diag = self.lower[i * n + i];
            if diag == 0.0 {
                return Err(Error::Degenerate(format!("zero pivot at {i}")));
            }
            let mut v = x[i] / s;
            for k in 0..i {
                v -= self.lower[i * n + k] * w[k];
            }
            w[i] = v / diag;
        }
        Ok(w)
    }
}

/// FFT sampler for the periodized covariance.
#[derive(Debug, Clone)]
pub struct CirculantSampler {
    grid: NoiseGrid,
    /// `√(dt · λ_k / N)` per Fourier mode.
    amplitude: Vec<f64>,
    eigenvalues: Vec<f64>,
    clamped: usize,
}

/// Scratch space for [`CirculantSampler::sample_into`]; one per worker.
#[derive(Debug, Clone)]
pub struct NoiseWorkspace {
    fft: GridFft,
    spectrum: Vec<Complex64>,
    normals: Vec<f64>,
}

impl CirculantSampler {
    pub fn new(grid: &NoiseGrid, beta: f64) -> Result<Self> {
        let row = covariance_row(grid, beta)?;
        let total = row.len();
        let mut fft = GridFft::new(grid.d, grid.n_cells)?;
        let mut buf: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.forward(&mut buf);
        let eigenvalues: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let max = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (index, min) = eigenvalues
            .iter()
            .cloned()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        let threshold = -EIGEN_CLAMP_TOL * max;
        if !(min >= threshold) {
            return Err(Error::NegativeEigenvalue {
                index,
                value: min,
                threshold,
            });
        }
        let clamped = eigenvalues.iter().filter(|&&v| v < 0.0).count();
        if clamped > 0 {
            log::warn!("clamped {clamped} slightly negative circulant eigenvalues (min {min:e})");
        }
        let amplitude = eigenvalues
            .iter()
            .map(|&v| (grid.dt * v.max(0.0) / total as f64).sqrt())
            .collect();
        Ok(Self {
            grid: *grid,
            amplitude,
            eigenvalues,
            clamped,
        })
    }

    pub fn grid(&self) -> &NoiseGrid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of eigenvalues set to zero because of round-off.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn workspace(&self) -> Result<NoiseWorkspace> {
        let total = self.grid.total_cells();
        Ok(NoiseWorkspace {
            fft: GridFft::new(self.grid.d, self.grid.n_cells)?,
            spectrum: vec![Complex64::default(); total],
            normals: vec![0.0; 2 * total],
        })
    }

    /// Real part of `FFT(a ⊙ z)` with `z` complex standard normal: covariance `dt · C`.
    pub fn sample_into(&self, ws: &mut NoiseWorkspace, key: StreamKey, out: &mut [f64]) {
        assert_eq!(out.len(), self.amplitude.len(), "output does not match grid");
        standard_normals(key, &mut ws.normals);
        for (k, (c, a)) in ws.spectrum.iter_mut().zip(&self.amplitude).enumerate() {
            *c = Complex64::new(a * ws.normals[2 * k], a * ws.normals[2 * k + 1]);
        }
        ws.fft.forward(&mut ws.spectrum);
        for (o, c) in out.iter_mut().zip(&ws.spectrum) {
            *o = c.re;
        }
    }

    pub fn sample(&self, ws: &mut NoiseWorkspace, key: StreamKey) -> NoiseIncrement {
        let mut values = vec![0.0; self.amplitude.len()];
        self.sample_into(ws, key, &mut values);
        NoiseIncrement { values }
    }
}

/// Sums blocks of `factor^d` fine cells into one coarse cell.
pub fn coarsen_cells(fine: &[f64], d: usize, n_fine: usize, factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || !n_fine.is_multiple_of(factor) || fine.len() != n_fine.pow(d as u32) {
        return Err(Error::Domain(format!(
            "cannot coarsen {} values on {n_fine}^{d} cells by {factor}",
            fine.len()
        )));
    }
    let nc = n_fine / factor;
    match d {
        1 => Ok(fine.chunks_exact(factor).map(|c| c.iter().sum()).collect()),
        2 => {
            let mut out = vec![0.0; nc * nc];
            for i in 0..n_fine {
                for j in 0..n_fine {
                    out[(i / factor) * nc + j / factor] += fine[i * n_fine + j];
                }
            }
            Ok(out)
        }
        _ => Err(Error::Domain(format!("dimension {d} unsupported"))),
    }
}
