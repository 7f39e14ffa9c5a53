//! Heat kernel, Riesz-kernel cell integrals, the variance constant `k_β`, and
//! the Fourier constant of `|x|^{-β}`.
//!
//! Fourier convention used throughout the crate: `f̂(ξ) = ∫ f(x) e^{-i x·ξ} dx`,
//! inverse carrying `(2π)^{-d}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::qmc::{Estimate, RqmcPlan};
use crate::quadrature::{integrate_power_singular, Adaptive, GaussLegendre};

/// Dimension, Riesz exponent and time horizon. The initial condition is always `u₀ ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    pub beta: f64,
    pub t: f64,
}

impl ModelParams {
    pub fn new(d: usize, beta: f64, t: f64) -> Result<Self> {
        let p = Self { d, beta, t };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.d, self.beta)?;
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::Domain(format!("time horizon must be positive, got {}", self.t)));
        }
        Ok(())
    }
}

/// `0 < β < min(2, d)` with `d ∈ {1, 2}`.
pub fn check_exponent(d: usize, beta: f64) -> Result<()> {
    if !(d == 1 || d == 2) {
        return Err(Error::Domain(format!("dimension {d} unsupported (1 or 2)")));
    }
    let upper = (d as f64).min(2.0);
    if !(beta > 0.0 && beta < upper) {
        return Err(Error::Domain(format!("beta = {beta} outside (0, {upper}) for d = {d}")));
    }
    Ok(())
}

/// Gaussian heat kernel `p_τ(x) = (2πτ)^{-d/2} exp(-|x|²/2τ)`; `d = x.len()`.
pub fn heat_kernel(tau: f64, x: &[f64]) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs tau > 0, got {tau}")));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let d = x.len() as f64;
    Ok((2.0 * PI * tau).powf(-0.5 * d) * (-0.5 * r2 / tau).exp())
}

/// Antiderivative pair used by the one-dimensional cell integral.
fn g_cell(u: f64, beta: f64) -> f64 {
    u.powf(2.0 - beta) / ((1.0 - beta) * (2.0 - beta))
}

/// Offsets at or beyond this many cells use the Taylor series of the second difference.
const SERIES_FROM_CELLS: f64 = 8.0;

/// Exact `∫₀^h ∫₀^h |x − y + a|^{-β} dx dy` in one dimension, for `a = m·h`, `m ≥ 0`.
pub fn riesz_cell_integral(a: f64, h: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!(
            "one-dimensional cell integral needs 0 < beta < 1, got {beta}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("cell width must be positive, got {h}")));
    }
    let m = a / h;
    if !(m >= 0.0) || (m - m.round()).abs() > 1e-9 * m.max(1.0) {
        return Err(Error::Domain(format!(
            "offset {a} is not a nonnegative multiple of the cell width {h}"
        )));
    }
    let m = m.round();
    if m == 0.0 {
        return Ok(2.0 * g_cell(h, beta));
    }
    if m < SERIES_FROM_CELLS {
        return Ok(g_cell(a + h, beta) - 2.0 * g_cell(a, beta) + g_cell(a - h, beta));
    }
    // G(a+h) − 2G(a) + G(a−h) = 2 Σ_k h^{2k} G^{(2k)}(a) / (2k)!, with G'' = u^{-β}.
    let x = (h / a) * (h / a);
    let mut term = h * h * a.powf(-beta);
    let mut sum = term;
    let mut k = 1.0;
    while term.abs() > 1e-18 * sum.abs() {
        term *= x * (beta + 2.0 * k - 2.0) * (beta + 2.0 * k - 1.0) / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
        sum += term;
        k += 1.0;
    }
    Ok(sum)
}

/// Splits `[lo, hi]` into nonnegative segments with the sign picked up by `v^p` under `v → −v`.
fn signed_segments(lo: f64, hi: f64, p: u32) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(2);
    if lo < 0.0 {
        let sign = if p % 2 == 1 { -1.0 } else { 1.0 };
        out.push((sign, (-hi).max(0.0), -lo));
    }
    if hi > 0.0 {
        out.push((1.0, lo.max(0.0), hi));
    }
    out
}

/// `∫₀^X ∫₀^Y v₁^p v₂^q |v|^{-β} dv` by polar coordinates with exact radial integrals.
fn corner_moment(p: u32, q: u32, x: f64, y: f64, beta: f64) -> f64 {
    if x <= 0.0 || y <= 0.0 {
        return 0.0;
    }
    let e = (p + q) as f64 + 2.0 - beta;
    let split = y.atan2(x);
    let rule = Adaptive::with_tol(1e-300, 1e-14);
    let lower = rule
        .integrate(
            |th| {
                let (s, c) = th.sin_cos();
                c.powi(p as i32) * s.powi(q as i32) * (x / c).powf(e)
            },
            0.0,
            split,
        )
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
    let upper = rule
        .integrate(
            |th| {
                let (s, c) = th.sin_cos();
                c.powi(p as i32) * s.powi(q as i32) * (y / s).powf(e)
            },
            split,
            0.5 * PI,
        )
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
    (lower + upper) / e
}

/// `∫_{[x0,x1]×[y0,y1]} v₁^p v₂^q |v|^{-β} dv`, exact up to the angular quadrature.
fn rect_moment(p: u32, q: u32, xr: (f64, f64), yr: (f64, f64), beta: f64) -> f64 {
    let mut total = 0.0;
    for (sx, x0, x1) in signed_segments(xr.0, xr.1, p) {
        for (sy, y0, y1) in signed_segments(yr.0, yr.1, q) {
            let f = |x, y| corner_moment(p, q, x, y, beta);
            total += sx * sy * (f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0));
        }
    }
    total
}

/// Cells at least this far apart (Chebyshev distance) use tensor Gauss–Legendre.
const TENSOR_FROM_CELLS: i64 = 3;

/// `∫_{cell}∫_{cell + m·h} |x − y|^{-β} dx dy` for square cells of side `h` in two dimensions.
///
/// Near cells are integrated exactly in polar coordinates around the kernel
/// singularity; far cells use a tensor Gauss–Legendre rule on the four
/// quadrants of the triangle-weight support.
pub fn riesz_cell_integral_2d(m: [i64; 2], h: f64, beta: f64) -> Result<f64> {
    check_exponent(2, beta)?;
    if !(h > 0.0) {
        return Err(Error::Domain(format!("cell width must be positive, got {h}")));
    }
    let a = [m[0] as f64 * h, m[1] as f64 * h];
    let far = m[0].abs().max(m[1].abs()) >= TENSOR_FROM_CELLS;
    let mut total = 0.0;
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            total += if far {
                quadrant_tensor(a, h, beta, s1, s2)
            } else {
                quadrant_exact(a, h, beta, s1, s2)
            };
        }
    }
    Ok(total)
}

fn quadrant_exact(a: [f64; 2], h: f64, beta: f64, s1: f64, s2: f64) -> f64 {
    let range = |aj: f64, s: f64| {
        let (lo, hi) = if s > 0.0 { (0.0, h) } else { (-h, 0.0) };
        (aj + lo, aj + hi)
    };
    let (xr, yr) = (range(a[0], s1), range(a[1], s2));
    let c1 = h + s1 * a[0];
    let c2 = h + s2 * a[1];
    c1 * c2 * rect_moment(0, 0, xr, yr, beta)
        - c1 * s2 * rect_moment(0, 1, xr, yr, beta)
        - s1 * c2 * rect_moment(1, 0, xr, yr, beta)
        + s1 * s2 * rect_moment(1, 1, xr, yr, beta)
}

fn quadrant_tensor(a: [f64; 2], h: f64, beta: f64, s1: f64, s2: f64) -> f64 {
    let rule = GaussLegendre::new(24);
    let mut total = 0.0;
    for (u, wu) in rule.mapped(0.0, h) {
        for (v, wv) in rule.mapped(0.0, h) {
            let r1 = s1 * u + a[0];
            let r2 = s2 * v + a[1];
            total += wu * wv * (h - u) * (h - v) * (r1 * r1 + r2 * r2).powf(-0.5 * beta);
        }
    }
    total
}

/// `k_β = ∫_{Q₁²} |x₁ − x₂|^{-β}`, with a QMC standard error when not exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KBeta {
    pub value: f64,
    pub stderr: f64,
}

pub fn kbeta(d: usize, beta: f64) -> Result<KBeta> {
    check_exponent(d, beta)?;
    match d {
        1 => Ok(KBeta {
            value: kbeta_closed_form(beta)?,
            stderr: 0.0,
        }),
        _ => {
            let est = kbeta_qmc_2d(beta, 16, 16, 0)?;
            Ok(KBeta {
                value: est.mean,
                stderr: est.stderr,
            })
        }
    }
}

/// `2^{3−β} / ((1−β)(2−β))`, valid for `d = 1`.
pub fn kbeta_closed_form(beta: f64) -> Result<f64> {
    check_exponent(1, beta)?;
    Ok(2f64.powf(3.0 - beta) / ((1.0 - beta) * (2.0 - beta)))
}

/// `d = 1` value by quadrature of `2∫₀² (2 − r) r^{-β} dr`.
pub fn kbeta_quadrature_1d(beta: f64) -> Result<f64> {
    check_exponent(1, beta)?;
    let rule = Adaptive::with_tol(1e-15, 1e-14);
    let q = integrate_power_singular(&rule, |r| 2.0 - r, 2.0, beta)?;
    Ok(2.0 * q.value)
}

/// `d = 2` value from the exact polar cell integration (cell width 2, zero offset).
pub fn kbeta_exact_2d(beta: f64) -> Result<f64> {
    riesz_cell_integral_2d([0, 0], 2.0, beta)
}

/// Randomized QMC estimate of `k_β` in `d = 2` with radial importance sampling.
pub fn kbeta_qmc_2d(beta: f64, log2_points: u32, shifts: usize, seed: u64) -> Result<Estimate> {
    check_exponent(2, beta)?;
    let rho_max = 2.0 * 2f64.sqrt();
    let e = 2.0 - beta;
    // density of ρ ∝ ρ^{1−β} on [0, ρ_max], θ uniform
    let weight = 2.0 * PI * rho_max.powf(e) / e;
    let plan = RqmcPlan {
        log2_points,
        shifts,
        seed,
        stream: 0x6b62,
    };
    plan.estimate(2, |u| {
        let rho = rho_max * u[0].powf(1.0 / e);
        let (s, c) = (2.0 * PI * u[1]).sin_cos();
        let (x, y) = (rho * c, rho * s);
        if x.abs() >= 2.0 || y.abs() >= 2.0 {
            0.0
        } else {
            weight * (2.0 - x.abs()) * (2.0 - y.abs())
        }
    })
}

/// `c_{d,β}` with `∫ |x|^{-β} e^{-i x·ξ} dx = c_{d,β} |ξ|^{β−d}`.
pub fn riesz_fourier_constant(d: usize, beta: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let df = d as f64;
    if !(beta > 0.0 && beta < df) {
        return Err(Error::Domain(format!(
            "Fourier constant needs 0 < beta < d, got {beta}"
        )));
    }
    Ok(2f64.powf(df - beta) * PI.powf(0.5 * df) * libm::tgamma(0.5 * (df - beta)) / libm::tgamma(0.5 * beta))
}

/// Inverse transform of `c_{1,β}|ξ|^{β−1}` damped by `e^{-sξ²/2}`, evaluated at `x > 0`.
///
/// Equals `(|·|^{-β} * p_s)(x)`, which tends to `|x|^{-β}` as `s → 0`.
pub fn riesz_smoothed_inverse_1d(beta: f64, x: f64, smoothing: f64) -> Result<f64> {
    let c = riesz_fourier_constant(1, beta)?;
    if !(x > 0.0 && smoothing > 0.0) {
        return Err(Error::Domain("need x > 0 and positive smoothing".into()));
    }
    let rule = Adaptive {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_panels: 40_000,
    };
    let f = |xi: f64| (-0.5 * smoothing * xi * xi).exp() * (x * xi).cos();
    let head = integrate_power_singular(&rule, f, 1.0, 1.0 - beta)?.value;
    let xi_max = (2.0 * 45.0 / smoothing).sqrt();
    let period = PI / x;
    let mut breaks = vec![1.0];
    let mut b = 1.0 + period;
    while b < xi_max {
        breaks.push(b);
        b += period;
    }
    breaks.push(xi_max.max(1.0 + period));
    let tail = rule
        .integrate_with_breaks(|xi| xi.powf(beta - 1.0) * f(xi), &breaks)?
        .value;
    Ok(c / PI * (head + tail))
}

/// `Φ(a) − Φ(b)` for `a ≥ b`, taking the difference in whichever tail keeps precision.
fn normal_mass(a: f64, b: f64) -> f64 {
    let c = |x: f64| 0.5 * libm::erfc(x / std::f64::consts::SQRT_2);
    if b >= 0.0 {
        c(b) - c(a)
    } else if a <= 0.0 {
        c(-a) - c(-b)
    } else {
        1.0 - c(a) - c(-b)
    }
}

/// `Ψ_v(z) = ∫_{−R}^{R} p_v(x − z) dx`, the heat flow of the box indicator; `v = 0` gives the
/// indicator itself with value ½ on the boundary.
pub fn box_heat_mass(v: f64, z: f64, r: f64) -> f64 {
    if v <= 0.0 {
        return match (z.abs() - r).partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Less) => 1.0,
            Some(std::cmp::Ordering::Equal) => 0.5,
            _ => 0.0,
        };
    }
    let (s, z) = (v.sqrt(), z.abs());
    normal_mass((r - z) / s, (-r - z) / s)
}

/// Product of [`box_heat_mass`] over coordinates: the `d`-dimensional box `[−R, R]^d`.
pub fn box_heat_mass_nd(v: f64, z: &[f64], r: f64) -> f64 {
    z.iter().map(|&zi| box_heat_mass(v, zi, r)).product()
}
