//! Fourier-side integrals of the form
//!
//! ```text
//! J_d[g] = ∫_{ℝ^d} ∏_j sinc²(η_j) · g(|η|²) · |η|^{β−d} dη
//! ```
//!
//! which appear after rescaling `ξ = η/R` in the first-chaos variance, the
//! `m`-lemma and the φ-pair lemma. Two independent evaluation routes exist:
//!
//! * `direct_1d`: oscillatory quadrature on the real line (split at `η = 1`,
//!   one panel per half-period of `sin²`, analytic tail);
//! * `subordinated`: writes `|η|^{β−d}` as a Gamma mixture of Gaussians, which
//!   factorizes the product and leaves a smooth one-dimensional integral of
//!   `K(c)^d` with the closed form `K(c) = ∫ sinc²(η) e^{−cη²} dη`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernels::check_exponent;
use crate::quadrature::Adaptive;

/// Radial weight `g` as a function of `|η|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialWeight {
    One,
    /// `e^{−b x}`
    Gauss {
        b: f64,
    },
    /// `(1 − e^{−a x}) / (a x)`
    Damped {
        a: f64,
    },
}

impl RadialWeight {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            RadialWeight::One => 1.0,
            RadialWeight::Gauss { b } => (-b * x).exp(),
            RadialWeight::Damped { a } => one_minus_exp_over(a * x),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadialWeight::One => true,
            RadialWeight::Gauss { b } => b >= 0.0 && b.is_finite(),
            RadialWeight::Damped { a } => a >= 0.0 && a.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid radial weight {self:?}")))
        }
    }
}

/// `(1 − e^{−y}) / y`, with its Taylor series near zero.
pub fn one_minus_exp_over(y: f64) -> f64 {
    if y.abs() < 1e-2 {
        // 1 − y/2 + y²/6 − y³/24 + y⁴/120 − y⁵/720
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 2..=7 {
            term *= -y / k as f64;
            sum += term;
        }
        sum
    } else {
        -(-y).exp_m1() / y
    }
}

#[inline]
fn sinc_sq(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 45.0
    } else {
        let s = x.sin() / x;
        s * s
    }
}

/// `K(c) = ∫_ℝ sinc²(η) e^{−cη²} dη = √(πc)(e^{−1/c} − 1) + π erf(1/√c)`.
pub fn sinc_sq_gauss(c: f64) -> f64 {
    if c <= 0.0 {
        return PI;
    }
    (PI * c).sqrt() * (-1.0 / c).exp_m1() + PI * libm::erf(1.0 / c.sqrt())
}

/// Number of half-periods of `sin²` integrated panel by panel before the analytic tail.
const DIRECT_PERIODS: usize = 1000;

fn rule() -> Adaptive {
    Adaptive {
        abs_tol: 1e-14,
        rel_tol: 1e-11,
        max_panels: 20_000,
    }
}

/// `J_1[g]` by direct oscillatory quadrature.
pub fn direct_1d(beta: f64, weight: RadialWeight) -> Result<f64> {
    check_exponent(1, beta)?;
    weight.validate()?;
    let rule = rule();
    let g = |eta: f64| weight.eval(eta * eta);

    // [0, 1]: η = s^{1/β} absorbs η^{β−1}.
    let head = rule
        .integrate(
            |s| {
                let eta = s.powf(1.0 / beta);
                sinc_sq(eta) * g(eta) / beta
            },
            0.0,
            1.0,
        )?
        .value;

    // [1, T] with one panel per zero spacing of sin².
    let top = DIRECT_PERIODS as f64 * PI;
    let mut breaks = Vec::with_capacity(DIRECT_PERIODS + 1);
    breaks.push(1.0);
    breaks.extend((1..=DIRECT_PERIODS).map(|k| k as f64 * PI));
    let body = rule
        .integrate_with_breaks(|eta| sinc_sq(eta) * g(eta) * eta.powf(beta - 1.0), &breaks)?
        .value;

    // [T, ∞): sin² → ½ on average; the cos 2η part is O(T^{β−4}) because sin 2T = 0.
    let p = 1.0 / (2.0 - beta);
    let tail = 0.5 * top.powf(beta - 2.0) * p * rule.integrate(|u| g(top * u.powf(-p)), 0.0, 1.0)?.value;

    Ok(2.0 * (head + body + tail))
}

/// `∫₀^∞ λ^{s−1} K(λ + b)^d dλ / Γ(s)` with `s = (d − β)/2`; equals `J_d[e^{−b·}]`.
fn subordinated_gauss(d: usize, beta: f64, b: f64) -> Result<f64> {
    let rule = rule();
    let s = 0.5 * (d as f64 - beta);
    let k_pow = |lambda: f64| sinc_sq_gauss(lambda + b).powi(d as i32);
    // [0, 1]: λ = u^{1/s}
    let head = rule.integrate(|u| k_pow(u.powf(1.0 / s)) / s, 0.0, 1.0)?.value;
    // [1, ∞): λ = u^{−2/β}; the integrand tends to a constant because K(c)^d ~ (π/c)^{d/2}.
    let q = 2.0 / beta;
    let tail = rule
        .integrate(
            |u| {
                if u <= 0.0 {
                    return 0.0;
                }
                let lambda = u.powf(-q);
                if !lambda.is_finite() {
                    return 0.0;
                }
                q * u.powf(-q - 1.0) * lambda.powf(s - 1.0) * k_pow(lambda)
            },
            0.0,
            1.0,
        )?
        .value;
    Ok((head + tail) / libm::tgamma(s))
}

/// `J_d[g]` through Gaussian subordination; valid for `d ∈ {1, 2}`.
pub fn subordinated(d: usize, beta: f64, weight: RadialWeight) -> Result<f64> {
    check_exponent(d, beta)?;
    weight.validate()?;
    match weight {
        RadialWeight::One => subordinated_gauss(d, beta, 0.0),
        RadialWeight::Gauss { b } => subordinated_gauss(d, beta, b),
        RadialWeight::Damped { a } => {
            if a == 0.0 {
                return subordinated_gauss(d, beta, 0.0);
            }
            // (1 − e^{−ax})/(ax) = ∫₀¹ e^{−avx} dv
            let mut failure = None;
            let outer = Adaptive {
                abs_tol: 1e-13,
                rel_tol: 1e-10,
                max_panels: 2000,
            };
            let v = outer.integrate(
                |v| match subordinated_gauss(d, beta, a * v) {
                    Ok(x) => x,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                0.0,
                1.0,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(v?.value)
        }
    }
}

/// `J_d[g]`: direct quadrature for `d = 1`, subordination for `d = 2`.
pub fn sinc_riesz_integral(d: usize, beta: f64, weight: RadialWeight) -> Result<f64> {
    match d {
        1 => direct_1d(beta, weight),
        2 => subordinated(2, beta, weight),
        _ => Err(Error::Domain(format!("dimension {d} unsupported"))),
    }
}

/// `(2π)^{−d} c_{d,β} 4^d`: the factor turning `J_d` into a real-space double integral.
pub fn fourier_prefactor(d: usize, beta: f64) -> Result<f64> {
    let c = crate::kernels::riesz_fourier_constant(d, beta)?;
    Ok(c * (4.0 / (2.0 * PI)).powi(d as i32))
}
