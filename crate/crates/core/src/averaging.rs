//! Spatial integrals over `Q_R = [−R, R]^d`, the normalized statistic
//! `F_{R,t} = (∫_{Q_R} u − (2R)^d) / σ`, and deterministic variance references.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::kernels::{check_exponent, kbeta};
use crate::noise::NoiseGrid;
use crate::spectral::{fourier_prefactor, sinc_riesz_integral, RadialWeight};

/// Cells of one axis lying in `[−R, R]`. `R` must be a positive multiple of `h` below `L`.
pub fn box_cells(grid: &NoiseGrid, r: f64) -> Result<Range<usize>> {
    let cells = r / grid.h;
    let whole = cells.round();
    if !(r > 0.0) || (cells - whole).abs() > 1e-9 * cells.max(1.0) {
        return Err(Error::Config(format!(
            "R = {r} is not a positive multiple of h = {}",
            grid.h
        )));
    }
    let half = grid.n_cells / 2;
    let k = whole as usize;
    if k >= half {
        return Err(Error::Config(format!(
            "R = {r} does not fit inside the torus half-width {}",
            grid.half_width()
        )));
    }
    Ok(half - k..half + k)
}

/// Midpoint rule `h^d Σ_{cells ⊂ Q_R} u`.
pub fn spatial_integral(values: &[f64], grid: &NoiseGrid, r: f64) -> Result<f64> {
    if values.len() != grid.total_cells() {
        return Err(Error::Config(format!(
            "field has {} values, grid has {} cells",
            values.len(),
            grid.total_cells()
        )));
    }
    let span = box_cells(grid, r)?;
    let n = grid.n_cells;
    let sum: f64 = match grid.d {
        1 => values[span].iter().sum(),
        _ => span
            .clone()
            .map(|i| values[i * n + span.start..i * n + span.end].iter().sum::<f64>())
            .sum(),
    };
    Ok(sum * grid.h.powi(grid.d as i32))
}

/// Which standard deviation normalizes `F_{R,t}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SigmaMode {
    /// Unbiased sample standard deviation of the replicas.
    Empirical,
    /// `√Σ₁(R, t)`, the first-chaos variance.
    Chaos1,
    /// `√(k_β t R^{2d−β})`.
    Limit,
}

impl SigmaMode {
    pub fn name(&self) -> &'static str {
        match self {
            SigmaMode::Empirical => "empirical",
            SigmaMode::Chaos1 => "chaos1",
            SigmaMode::Limit => "limit",
        }
    }
}

impl std::str::FromStr for SigmaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(SigmaMode::Empirical),
            "chaos1" => Ok(SigmaMode::Chaos1),
            "limit" => Ok(SigmaMode::Limit),
            _ => Err(Error::Config(format!("unknown sigma mode {s:?}"))),
        }
    }
}

/// Replica values of `∫_{Q_R} u(t, x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageSamples {
    pub r: f64,
    pub d: usize,
    pub beta: f64,
    pub t: f64,
    pub raw: Vec<f64>,
}

impl AverageSamples {
    pub fn new(r: f64, d: usize, beta: f64, t: f64, raw: Vec<f64>) -> Result<Self> {
        check_exponent(d, beta)?;
        if raw.len() < 2 {
            return Err(Error::Degenerate(format!("{} replicas, need at least 2", raw.len())));
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("replica {i} has a non-finite integral")));
        }
        Ok(Self { r, d, beta, t, raw })
    }

    /// `(2R)^d`, the mean of the integral.
    pub fn box_volume(&self) -> f64 {
        (2.0 * self.r).powi(self.d as i32)
    }

    pub fn mean(&self) -> f64 {
        self.raw.iter().sum::<f64>() / self.raw.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (self.raw.len() - 1) as f64
    }

    /// Large-sample standard error of the sample variance, `√((m₄ − s⁴)/n)`.
    pub fn variance_stderr(&self) -> f64 {
        let n = self.raw.len() as f64;
        let m = self.mean();
        let m4 = self.raw.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
        let s2 = self.variance();
        ((m4 - s2 * s2).max(0.0) / n).sqrt()
    }
}

/// Normalized replicas together with the denominator used.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub mode: SigmaMode,
    pub sigma: f64,
    pub values: Vec<f64>,
}

pub fn center_and_scale(samples: &AverageSamples, mode: SigmaMode) -> Result<Scaled> {
    let sigma = match mode {
        SigmaMode::Empirical => samples.variance().sqrt(),
        SigmaMode::Chaos1 => chaos1_variance(samples.r, samples.t, samples.d, samples.beta)?.sqrt(),
        SigmaMode::Limit => variance_limit(samples.r, samples.t, samples.d, samples.beta)?.sqrt(),
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Degenerate(format!(
            "{} standard deviation is {sigma}",
            mode.name()
        )));
    }
    let center = samples.box_volume();
    let values = samples.raw.iter().map(|v| (v - center) / sigma).collect();
    Ok(Scaled { mode, sigma, values })
}

/// First-chaos variance `Σ₁(R, t) = (2π)^{−d} c_{d,β} 4^d t R^{2d−β} J_d[w(t|η|²/R²)]`
/// with `w(x) = (1 − e^{−x})/x`.
pub fn chaos1_variance(r: f64, t: f64, d: usize, beta: f64) -> Result<f64> {
    check_exponent(d, beta)?;
    if !(r > 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!(
            "chaos1 variance needs R > 0, t >= 0 (R={r}, t={t})"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let j = sinc_riesz_integral(d, beta, RadialWeight::Damped { a: t / (r * r) })?;
    Ok(fourier_prefactor(d, beta)? * t * r.powf(2.0 * d as f64 - beta) * j)
}

/// `k_β t R^{2d−β}`.
pub fn variance_limit(r: f64, t: f64, d: usize, beta: f64) -> Result<f64> {
    if !(r > 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!(
            "variance limit needs R > 0, t >= 0 (R={r}, t={t})"
        )));
    }
    Ok(kbeta(d, beta)?.value * t * r.powf(2.0 * d as f64 - beta))
}
