//! Semi-implicit Euler scheme on the periodic grid:
//!
//! ```text
//! uⁿ⁺¹ = (I − (dt/2) Δ_h)⁻¹ (uⁿ + uⁿ ⊙ dWⁿ / h^d)
//! ```
//!
//! The noise multiplies the left endpoint `uⁿ` (Itô). The implicit diffusion
//! solve is diagonal in Fourier space.

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex64;

use crate::dump::{write_dump, DumpHeader, FIELD_MAGIC};
use crate::error::{Error, Result};
use crate::fft::GridFft;
use crate::kernels::ModelParams;
use crate::noise::{CirculantSampler, NoiseGrid, NoiseWorkspace};
use crate::rng::StreamKey;

/// Required clearance between the largest box and the torus edge, in units of `√t`.
pub const MARGIN_SQRT_T: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub grid: NoiseGrid,
    pub nt: usize,
    /// `L − R_max`.
    pub margin: f64,
    /// Replace negative values by zero after each step. Taints every report.
    pub clamp_at_zero: bool,
    /// Run the diffusion without noise.
    pub zero_noise: bool,
}

impl SolverConfig {
    /// Derives `nt = t/dt` and checks the margin and the `dt ≤ h` envelope.
    pub fn new(params: &ModelParams, grid: NoiseGrid, r_max: f64) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        if grid.d != params.d {
            return Err(Error::Config(format!(
                "grid dimension {} differs from model dimension {}",
                grid.d, params.d
            )));
        }
        let steps = params.t / grid.dt;
        let nt = steps.round() as usize;
        if nt == 0 || (steps - nt as f64).abs() > 1e-9 * steps {
            return Err(Error::Config(format!(
                "t = {} is not a whole number of steps dt = {}",
                params.t, grid.dt
            )));
        }
        if grid.dt > grid.h {
            return Err(Error::Config(format!(
                "dt = {} exceeds the stability envelope dt <= h = {}",
                grid.dt, grid.h
            )));
        }
        let margin = grid.half_width() - r_max;
        let needed = MARGIN_SQRT_T * params.t.sqrt();
        if margin < needed {
            return Err(Error::Config(format!(
                "margin L - R_max = {margin} is below {needed} (6 sqrt t)"
            )));
        }
        log::debug!("solver: nt = {nt}, dt = {} <= h = {}, margin {margin}", grid.dt, grid.h);
        Ok(Self {
            grid,
            nt,
            margin,
            clamp_at_zero: false,
            zero_noise: false,
        })
    }
}

/// `u(tₙ, ·)` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub step: usize,
}

impl Field {
    pub fn ones(cells: usize) -> Self {
        Self {
            values: vec![1.0; cells],
            step: 0,
        }
    }

    pub fn dump<W: Write>(&self, w: W, grid: &NoiseGrid) -> Result<()> {
        let header = DumpHeader {
            magic: FIELD_MAGIC,
            d: grid.d as u32,
            n_cells: grid.n_cells as u32,
            dt: grid.dt,
            index: self.step as u64,
        };
        write_dump(w, &header, &self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    pub fraction_nonnegative: f64,
    pub min_value: f64,
    pub cells: usize,
}

pub fn positivity_report(values: &[f64]) -> PositivityReport {
    let nonneg = values.iter().filter(|&&v| v >= 0.0).count();
    PositivityReport {
        fraction_nonnegative: if values.is_empty() {
            1.0
        } else {
            nonneg as f64 / values.len() as f64
        },
        min_value: values.iter().cloned().fold(f64::INFINITY, f64::min),
        cells: values.len(),
    }
}

/// Result of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub field: Field,
    /// Cell values reset to zero by the clamp flag, summed over steps.
    pub clamped_cells: usize,
}

#[derive(Debug, Clone)]
pub struct Solver {
    config: SolverConfig,
    sampler: CirculantSampler,
    /// `1 / (1 + (dt/2) Σ_axes (4/h²) sin²(π k / n))` per Fourier mode.
    multiplier: Vec<f64>,
}

/// Per-worker buffers.
#[derive(Debug, Clone)]
pub struct SolverWorkspace {
    fft: GridFft,
    spectrum: Vec<Complex64>,
    noise: NoiseWorkspace,
    dw: Vec<f64>,
}

impl Solver {
    pub fn new(params: &ModelParams, config: SolverConfig) -> Result<Self> {
        let grid = config.grid;
        let sampler = CirculantSampler::new(&grid, params.beta)?;
        let n = grid.n_cells;
        let axis: Vec<f64> = (0..n)
            .map(|k| 4.0 / (grid.h * grid.h) * (PI * k as f64 / n as f64).sin().powi(2))
            .collect();
        let multiplier = match grid.d {
            1 => axis.iter().map(|s| 1.0 / (1.0 + 0.5 * grid.dt * s)).collect(),
            _ => (0..n * n)
                .map(|p| 1.0 / (1.0 + 0.5 * grid.dt * (axis[p / n] + axis[p % n])))
                .collect(),
        };
        Ok(Self {
            config,
            sampler,
            multiplier,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn sampler(&self) -> &CirculantSampler {
        &self.sampler
    }

    pub fn workspace(&self) -> Result<SolverWorkspace> {
        let grid = &self.config.grid;
        Ok(SolverWorkspace {
            fft: GridFft::new(grid.d, grid.n_cells)?,
            spectrum: vec![Complex64::default(); grid.total_cells()],
            noise: self.sampler.workspace()?,
            dw: vec![0.0; grid.total_cells()],
        })
    }

    /// Advances `field` by one step with the given increment; returns the number of clamped cells.
    pub fn step(&self, ws: &mut SolverWorkspace, field: &mut Field, dw: &[f64]) -> Result<usize> {
        let grid = &self.config.grid;
        let inv_vol = 1.0 / grid.h.powi(grid.d as i32);
        for ((c, &u), &w) in ws.spectrum.iter_mut().zip(&field.values).zip(dw) {
            *c = Complex64::new(u + u * w * inv_vol, 0.0);
        }
        ws.fft.forward(&mut ws.spectrum);
        for (c, m) in ws.spectrum.iter_mut().zip(&self.multiplier) {
            *c *= m;
        }
        ws.fft.inverse(&mut ws.spectrum);
        let scale = 1.0 / ws.spectrum.len() as f64;
        let mut clamped = 0;
        for (cell, (v, c)) in field.values.iter_mut().zip(&ws.spectrum).enumerate() {
            let u = c.re * scale;
            if !u.is_finite() {
                return Err(Error::NonFinite {
                    step: field.step + 1,
                    cell,
                });
            }
            *v = if self.config.clamp_at_zero && u < 0.0 {
                clamped += 1;
                0.0
            } else {
                u
            };
        }
        field.step += 1;
        Ok(clamped)
    }

    /// Runs all steps from `u₀ ≡ 1`, drawing step `n` from the stream `(seed, replica, n)`.
    pub fn solve(&self, ws: &mut SolverWorkspace, master_seed: u64, replica: u64) -> Result<Solution> {
        let zero = self.config.zero_noise;
        self.solve_with(ws, |sampler, noise, step, dw| {
            if zero {
                dw.fill(0.0);
            } else {
                sampler.sample_into(noise, StreamKey::noise(master_seed, replica, step as u64), dw);
            }
        })
    }

    /// Runs all steps with increments supplied by `fill(sampler, noise_ws, step, dw)`.
    pub fn solve_with<F>(&self, ws: &mut SolverWorkspace, mut fill: F) -> Result<Solution>
    where
        F: FnMut(&CirculantSampler, &mut NoiseWorkspace, usize, &mut [f64]),
    {
        let mut field = Field::ones(self.config.grid.total_cells());
        let mut clamped_cells = 0;
        let mut dw = std::mem::take(&mut ws.dw);
        let mut result = Ok(());
        for step in 0..self.config.nt {
            fill(&self.sampler, &mut ws.noise, step, &mut dw);
            match self.step(ws, &mut field, &dw) {
                Ok(c) => clamped_cells += c,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        ws.dw = dw;
        result.map(|_| Solution { field, clamped_cells })
    }
}
