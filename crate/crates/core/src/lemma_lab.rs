//! Deterministic checks of the singular-integral bounds behind the
//! normal-approximation rate: bounded ratios, Fourier-side lower bounds and
//! fitted growth exponents in the box size `R`.
//!
//! Box weights are written with `Ψ_v(z) = ∫_{Q_R} p_v(x − z) dx`. The
//! normalizing `σ_{R,t}` is always the limit value `√(k_β t R^{2d−β})`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernels::{box_heat_mass, box_heat_mass_nd, check_exponent, heat_kernel, kbeta};
use crate::qmc::{Estimate, RqmcPlan};
use crate::quadrature::Adaptive;
use crate::spectral::{fourier_prefactor, sinc_riesz_integral, RadialWeight};
use crate::stats::{fit_rate, RateFit};

/// Slack added to every one-sided exponent bound.
pub const EXPONENT_SLACK: f64 = 0.3;
/// Largest relative QMC standard error accepted from an estimate.
pub const MAX_REL_STDERR: f64 = 0.05;
/// Gaussian supports are truncated at this many standard deviations.
const SUPPORT_SDS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lemma {
    HeatRiesz,
    BoxRiesz,
    MScaling,
    EGrowth,
    PhiPair,
    PhiBound,
}

impl Lemma {
    pub const ALL: [Lemma; 6] = [
        Lemma::HeatRiesz,
        Lemma::BoxRiesz,
        Lemma::MScaling,
        Lemma::EGrowth,
        Lemma::PhiPair,
        Lemma::PhiBound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Lemma::HeatRiesz => "heat_riesz",
            Lemma::BoxRiesz => "box_riesz",
            Lemma::MScaling => "m_scaling",
            Lemma::EGrowth => "e_growth",
            Lemma::PhiPair => "phi_pair",
            Lemma::PhiBound => "phi_bound",
        }
    }
}

impl std::str::FromStr for Lemma {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Lemma::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown lemma {s:?}")))
    }
}

/// One evaluated parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaRow {
    pub params: Vec<(&'static str, f64)>,
    pub estimate: f64,
    /// Zero for deterministic quadrature.
    pub stderr: f64,
}

impl LemmaRow {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFit {
    pub label: String,
    pub fit: RateFit,
}

/// A pass/fail comparison of one derived number against its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SubCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl SubCheck {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheckResult {
    pub lemma: Lemma,
    pub rows: Vec<LemmaRow>,
    pub fits: Vec<LabeledFit>,
    pub checks: Vec<SubCheck>,
}

impl LemmaCheckResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `φ_{R,t}(τ, ξ) = Ψ_{t−τ}(ξ) / σ` with the limit normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiWeight {
    pub d: usize,
    pub r: f64,
    pub t: f64,
    pub sigma: f64,
}

impl PhiWeight {
    pub fn limit(d: usize, beta: f64, t: f64, r: f64) -> Result<Self> {
        check_exponent(d, beta)?;
        if !(t > 0.0 && r > 0.0) {
            return Err(Error::Domain(format!("weight needs t > 0 and R > 0 (t={t}, R={r})")));
        }
        let sigma = (kbeta(d, beta)?.value * t * r.powf(2.0 * d as f64 - beta)).sqrt();
        Ok(Self { d, r, t, sigma })
    }

    pub fn eval(&self, tau: f64, xi: &[f64]) -> f64 {
        box_heat_mass_nd(self.t - tau, xi, self.r) / self.sigma
    }
}

fn slope_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    fit_rate(points, None)
}

fn ensure_precision(est: &Estimate) -> Result<()> {
    let rel = est.rel_stderr();
    if !(rel <= MAX_REL_STDERR) {
        return Err(Error::QmcPrecision {
            rel_stderr: rel,
            limit: MAX_REL_STDERR,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Heat-smoothed Riesz potential

/// `∫ p_t(x − y) |y|^{−β} dy` in one dimension.
pub fn heat_riesz_integral(x: f64, t: f64, beta: f64) -> Result<f64> {
    check_exponent(1, beta)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    let x = x.abs();
    let sd = t.sqrt();
    let e = 1.0 - beta;
    let q = 1.0 / e;
    // y = s^{1/(1−β)} on (0, ∞) folds both half-lines onto one.
    let mut ys = vec![0.0, x, x + 10.0 * sd, x + 40.0 * sd];
    if x > 10.0 * sd {
        ys.push(x - 10.0 * sd);
    }
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let breaks: Vec<f64> = ys.iter().map(|y| y.powf(e)).collect();
    let g = |y: f64| heat_kernel(t, &[x - y]).unwrap_or(0.0) + heat_kernel(t, &[x + y]).unwrap_or(0.0);
    let rule = Adaptive::with_tol(1e-300, 1e-11);
    let q_val = rule.integrate_with_breaks(|s| q * g(s.powf(q)), &breaks)?;
    Ok(q_val.value)
}

/// Ratio `∫ p_t(x − y)|y|^{−β}dy / |x|^{−β}` over a time grid, the supremum
/// per `x`, and the scaling identity under `(x, t) → (λx, λ²t)`.
pub fn check_heat_riesz(xs: &[f64], beta: f64, d: usize, ts: &[f64], lambdas: &[f64]) -> Result<LemmaCheckResult> {
    if d != 1 {
        return Err(Error::Domain("heat-Riesz check is implemented for d = 1".into()));
    }
    check_exponent(d, beta)?;
    if xs.contains(&0.0) || ts.is_empty() {
        return Err(Error::Config(
            "heat-Riesz check needs x != 0 and a nonempty t grid".into(),
        ));
    }
    let ratio = |x: f64, t: f64| -> Result<f64> { Ok(heat_riesz_integral(x, t, beta)? * x.abs().powf(beta)) };
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut worst_scaling: f64 = 0.0;
    for &x in xs {
        let mut sup = f64::NEG_INFINITY;
        let mut at = f64::NAN;
        for &t in ts {
            let v = ratio(x, t)?;
            rows.push(LemmaRow {
                params: vec![("x", x), ("t", t)],
                estimate: v,
                stderr: 0.0,
            });
            if v > sup {
                sup = v;
                at = t;
            }
            for &l in lambdas {
                let scaled = ratio(l * x, l * l * t)?;
                worst_scaling = worst_scaling.max((scaled - v).abs() / v);
            }
        }
        rows.push(LemmaRow {
            params: vec![("x", x), ("sup_at_t", at)],
            estimate: sup,
            stderr: 0.0,
        });
        checks.push(SubCheck {
            name: format!("sup ratio finite and >= 1 at x={x}"),
            value: sup,
            threshold: 1.0,
            passed: sup.is_finite() && sup >= 1.0 - 1e-9,
        });
    }
    checks.push(SubCheck::at_most(
        "scaling identity max relative deviation",
        worst_scaling,
        1e-6,
    ));
    Ok(LemmaCheckResult {
        lemma: Lemma::HeatRiesz,
        rows,
        fits: Vec::new(),
        checks,
    })
}

// ---------------------------------------------------------------------------
// Riesz potential of a box

/// Closed form of `∫_{−R}^{R} |x − y|^{−β} dy`.
pub fn box_riesz_1d(r: f64, x: f64, beta: f64) -> Result<f64> {
    check_exponent(1, beta)?;
    let e = 1.0 - beta;
    let x = x.abs();
    Ok(if x <= r {
        ((r - x).powf(e) + (r + x).powf(e)) / e
    } else {
        ((x + r).powf(e) - (x - r).powf(e)) / e
    })
}

/// `∫_{[−R,R]²} |p − y|^{−β} dy` in polar coordinates around `p`.
pub fn box_riesz_2d(r: f64, p: [f64; 2], beta: f64) -> Result<f64> {
    check_exponent(2, beta)?;
    let e = 2.0 - beta;
    // Along direction θ the ray meets the box on [ρ_in, ρ_out].
    let radial = |theta: f64| -> f64 {
        let dir = [theta.cos(), theta.sin()];
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        for k in 0..2 {
            if dir[k].abs() < 1e-300 {
                if p[k].abs() > r {
                    return 0.0;
                }
                continue;
            }
            let a = (-r - p[k]) / dir[k];
            let b = (r - p[k]) / dir[k];
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        if hi <= lo {
            0.0
        } else {
            (hi.powf(e) - lo.powf(e)) / e
        }
    };
    let mut breaks = vec![0.0, 2.0 * PI];
    for cx in [-r, r] {
        for cy in [-r, r] {
            breaks.push((cy - p[1]).atan2(cx - p[0]).rem_euclid(2.0 * PI));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    Ok(Adaptive::with_tol(1e-13, 1e-11)
        .integrate_with_breaks(radial, &breaks)?
        .value)
}

/// Box potential at `x` (shifted along the first axis) for each `R`, with the fitted exponent per `x`.
pub fn check_qr_riesz(rs: &[f64], xs: &[f64], beta: f64, d: usize) -> Result<LemmaCheckResult> {
    check_exponent(d, beta)?;
    if rs.len() < 5 {
        return Err(Error::Config("box-Riesz check needs at least 5 values of R".into()));
    }
    let target = d as f64 - beta;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut checks = Vec::new();
    for &x in xs {
        let mut pts = Vec::new();
        for &r in rs {
            let v = match d {
                1 => box_riesz_1d(r, x, beta)?,
                _ => box_riesz_2d(r, [x, 0.0], beta)?,
            };
            rows.push(LemmaRow {
                params: vec![("R", r), ("x", x)],
                estimate: v,
                stderr: 0.0,
            });
            pts.push((r, v));
        }
        let fit = slope_fit(&pts)?;
        let tol = if x == 0.0 { 1e-6 } else { 0.05 };
        checks.push(SubCheck::at_most(
            format!("|exponent - (d - beta)| at x={x}"),
            (fit.slope - target).abs(),
            tol,
        ));
        fits.push(LabeledFit {
            label: format!("x={x}"),
            fit,
        });
    }
    Ok(LemmaCheckResult {
        lemma: Lemma::BoxRiesz,
        rows,
        fits,
        checks,
    })
}

// ---------------------------------------------------------------------------
// Fourier-side lower bound

/// `J(ε, R) = ∫ (1 − e^{−a|η|²})/(a|η|²) ∏ sinc²(η_j) |η|^{β−d} dη` with `a = ε^α / R²`.
pub fn m_integral(d: usize, beta: f64, alpha: f64, eps: f64, r: f64) -> Result<f64> {
    check_exponent(d, beta)?;
    sinc_riesz_integral(
        d,
        beta,
        RadialWeight::Damped {
            a: eps.powf(alpha) / (r * r),
        },
    )
}

pub fn check_m_scaling(t: f64, alpha: f64, eps: &[f64], rs: &[f64], beta: f64, d: usize) -> Result<LemmaCheckResult> {
    check_exponent(d, beta)?;
    if beta > d as f64 - 0.05 {
        return Err(Error::Domain(format!(
            "beta = {beta} too close to d = {d}: the sinc tail integral diverges"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(t > 0.0) {
        return Err(Error::Config(format!(
            "need 0 < alpha < 1 and t > 0 (alpha={alpha}, t={t})"
        )));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) || rs.iter().any(|&r| !(r >= 1.0)) {
        return Err(Error::Config("need 0 < eps <= 1 and R >= 1".into()));
    }
    let j0 = sinc_riesz_integral(d, beta, RadialWeight::One)?;
    let pre = fourier_prefactor(d, beta)?;
    let k = kbeta(d, beta)?.value;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut rows = vec![LemmaRow {
        params: vec![("a", 0.0)],
        estimate: j0,
        stderr: 0.0,
    }];
    for &e in eps {
        for &r in rs {
            let a = e.powf(alpha) / (r * r);
            let j = m_integral(d, beta, alpha, e, r)?;
            let big_m = r.powf(2.0 * d as f64 - beta) * e.powf(alpha) * j;
            rows.push(LemmaRow {
                params: vec![
                    ("eps", e),
                    ("R", r),
                    ("a", a),
                    ("M", big_m),
                    ("sigma2_m", pre * big_m),
                    ("m_limit_sigma", pre * big_m / (k * t * r.powf(2.0 * d as f64 - beta))),
                ],
                estimate: j,
                stderr: 0.0,
            });
            pts.push((a, j));
        }
    }
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut worst_increase: f64 = 0.0;
    for w in pts.windows(2) {
        if w[1].0 > w[0].0 {
            worst_increase = worst_increase.max(w[1].1 - w[0].1);
        }
    }
    let min_j = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_j = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![
        SubCheck::at_least("min J positive", min_j, f64::MIN_POSITIVE),
        SubCheck::at_most("max increase of J along increasing a", worst_increase, 1e-12 * j0),
        SubCheck::at_most("max J / J(0+)", max_j / j0, 1.0 + 1e-10),
        SubCheck::at_least("min J / J(0+)", min_j / j0, 0.5),
    ];
    Ok(LemmaCheckResult {
        lemma: Lemma::MScaling,
        rows,
        fits: Vec::new(),
        checks,
    })
}

// ---------------------------------------------------------------------------
// QMC integrands

/// Draws `x ∈ [a, b]` with density `∝ |x − c|^{−β}` from `u ∈ (0, 1)`; returns `x` and
/// the normalizing mass `∫_a^b |x − c|^{−β} dx`. `β = 0` is uniform.
pub fn riesz_importance(c: f64, a: f64, b: f64, beta: f64, u: f64) -> (f64, f64) {
    let e = 1.0 - beta;
    let h = |x: f64| {
        let d = x - c;
        d.signum() * d.abs().powf(e) / e
    };
    let (ha, hb) = (h(a), h(b));
    let mass = hb - ha;
    let target = ha + u * mass;
    let x = c + target.signum() * (target.abs() * e).powf(1.0 / e);
    (x.clamp(a, b), mass)
}

fn support(r: f64, v: f64) -> f64 {
    r + SUPPORT_SDS * v.sqrt()
}

/// Time and kernel parameters of the four-box integral `E_{R,t}(s₁, s₂, τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EParams {
    pub t: f64,
    pub s1: f64,
    pub s2: f64,
    pub tau: f64,
    /// `0` switches every Riesz factor off.
    pub beta: f64,
}

impl EParams {
    fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.s1
            && 0.0 < self.s2
            && self.s1 < self.tau
            && self.s2 < self.tau
            && self.tau < self.t
            && (0.0..1.0).contains(&self.beta);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "need 0 < s1, s2 < tau < t and 0 <= beta < 1, got {self:?}"
            )))
        }
    }
}

/// `E_{R,t}` after the box and semigroup integrations:
/// `∫ Ψ_v(θ)Ψ_v(θ')Ψ_{A₁}(q₁)Ψ_{A₂}(q₂) |θ−θ'|^{−β}|θ−q₁|^{−β}|θ'−q₂|^{−β}`
/// with `v = t − τ`, `A_i = t + τ − 2s_i`, by RQMC with exact Riesz importance sampling.
pub fn e_integral(p: &EParams, r: f64, plan: &RqmcPlan) -> Result<Estimate> {
    p.validate()?;
    let v = p.t - p.tau;
    let a1 = p.t + p.tau - 2.0 * p.s1;
    let a2 = p.t + p.tau - 2.0 * p.s2;
    let (w, w1, w2) = (support(r, v), support(r, a1), support(r, a2));
    let beta = p.beta;
    plan.estimate(4, |u| {
        let theta = -w + 2.0 * w * u[0];
        let (theta2, z0) = riesz_importance(theta, -w, w, beta, u[1]);
        let (q1, z1) = riesz_importance(theta, -w1, w1, beta, u[2]);
        let (q2, z2) = riesz_importance(theta2, -w2, w2, beta, u[3]);
        2.0 * w
            * box_heat_mass(v, theta, r)
            * z0
            * box_heat_mass(v, theta2, r)
            * z1
            * box_heat_mass(a1, q1, r)
            * z2
            * box_heat_mass(a2, q2, r)
    })
}

pub fn check_e_growth(p: &EParams, rs: &[f64], plan: &RqmcPlan) -> Result<LemmaCheckResult> {
    check_exponent(1, p.beta)?;
    let mut rows = Vec::new();
    let mut pts = Vec::new();
    let mut worst_rel: f64 = 0.0;
    for (k, &r) in rs.iter().enumerate() {
        let est = e_integral(
            p,
            r,
            &RqmcPlan {
                stream: plan.stream + k as u64,
                ..*plan
            },
        )?;
        ensure_precision(&est)?;
        worst_rel = worst_rel.max(est.rel_stderr());
        rows.push(LemmaRow {
            params: vec![("R", r), ("t", p.t), ("s1", p.s1), ("s2", p.s2), ("tau", p.tau)],
            estimate: est.mean,
            stderr: est.stderr,
        });
        pts.push((r, est.mean));
    }
    let fit = slope_fit(&pts)?;
    let bound = 4.0 - 3.0 * p.beta;
    let checks = vec![
        SubCheck::at_most("fitted exponent", fit.slope, bound + EXPONENT_SLACK),
        SubCheck::at_most("max relative QMC stderr", worst_rel, MAX_REL_STDERR),
    ];
    Ok(LemmaCheckResult {
        lemma: Lemma::EGrowth,
        rows,
        fits: vec![LabeledFit { label: "E".into(), fit }],
        checks,
    })
}

/// `Φ^{(i)}(τ, ξ)`: a time simplex `0 < r < s < τ` and four spatial variables,
/// `∫ φ(s,ỹ) φ(r,z̃) k_i |z − z̃|^{−β} |y − ỹ|^{−β}` with
/// `k_1 = p_{s−r}(ỹ − z) p_{τ−s}(ξ − y)` and `k_2 = p_{τ−s}(ξ − y) p_{s−r}(y − z)`.
pub fn phi_integral(i: u8, t: f64, tau: f64, xi: f64, beta: f64, r: f64, plan: &RqmcPlan) -> Result<Estimate> {
    if !(i == 1 || i == 2) {
        return Err(Error::Domain(format!("index i must be 1 or 2, got {i}")));
    }
    if !(0.0 < tau && tau < t) {
        return Err(Error::Domain(format!("need 0 < tau < t, got tau={tau}, t={t}")));
    }
    let w = PhiWeight::limit(1, beta, t, r)?;
    let inv_s2 = 1.0 / (w.sigma * w.sigma);
    let simplex = 0.5 * tau * tau;
    plan.estimate(6, |u| {
        let s = tau * u[0].sqrt();
        let rr = s * u[1];
        let radius = (-2.0 * u[2].ln()).sqrt();
        let (sn, cs) = (2.0 * PI * u[3]).sin_cos();
        let (g1, g2) = (radius * cs, radius * sn);
        let y = xi + (tau - s).sqrt() * g1;
        let ws = support(r, t - s);
        let (yt, z1) = riesz_importance(y, -ws, ws, beta, u[4]);
        let anchor = if i == 1 { yt } else { y };
        let z = anchor + (s - rr).sqrt() * g2;
        let wr = support(r, t - rr);
        let (zt, z2) = riesz_importance(z, -wr, wr, beta, u[5]);
        simplex * inv_s2 * z1 * box_heat_mass(t - s, yt, r) * z2 * box_heat_mass(t - rr, zt, r)
    })
}

pub fn check_phi_i_bound(
    t: f64,
    tau: f64,
    xis: &[f64],
    beta: f64,
    rs: &[f64],
    i: u8,
    plan: &RqmcPlan,
) -> Result<LemmaCheckResult> {
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut checks = Vec::new();
    for (a, &xi) in xis.iter().enumerate() {
        let mut pts = Vec::new();
        for (b, &r) in rs.iter().enumerate() {
            let stream = plan.stream + ((i as u64) << 16) + ((a as u64) << 8) + b as u64;
            let est = phi_integral(i, t, tau, xi, beta, r, &RqmcPlan { stream, ..*plan })?;
            ensure_precision(&est)?;
            rows.push(LemmaRow {
                params: vec![("i", i as f64), ("xi", xi), ("R", r), ("t", t), ("tau", tau)],
                estimate: est.mean,
                stderr: est.stderr,
            });
            pts.push((r, est.mean));
        }
        let fit = slope_fit(&pts)?;
        checks.push(SubCheck::at_most(
            format!("fitted exponent i={i} xi={xi}"),
            fit.slope,
            -beta + EXPONENT_SLACK,
        ));
        fits.push(LabeledFit {
            label: format!("i={i} xi={xi}"),
            fit,
        });
    }
    Ok(LemmaCheckResult {
        lemma: Lemma::PhiBound,
        rows,
        fits,
        checks,
    })
}

// ---------------------------------------------------------------------------
// Pair of box weights

/// `∫∫ φ(s, y) φ(r, z) |y − z|^{−β} = J_d[e^{−b|η|²}] / (J_d[1] · t)`, `b = (2t − s − r)/(2R²)`.
pub fn phi_pair_value(d: usize, beta: f64, t: f64, r: f64, s: f64, rr: f64, j0: f64) -> Result<f64> {
    if !(0.0..=t).contains(&s) || !(0.0..=t).contains(&rr) {
        return Err(Error::Domain(format!("need s, r in [0, t], got s={s}, r={rr}")));
    }
    let b = (2.0 * t - s - rr) / (2.0 * r * r);
    Ok(sinc_riesz_integral(d, beta, RadialWeight::Gauss { b })? / (j0 * t))
}

pub fn check_varphi_pair(t: f64, beta: f64, d: usize, rs: &[f64], grid: &[f64]) -> Result<LemmaCheckResult> {
    check_exponent(d, beta)?;
    let j0 = sinc_riesz_integral(d, beta, RadialWeight::One)?;
    let mut rows = Vec::new();
    let mut asym: f64 = 0.0;
    let mut sups = Vec::new();
    let mut spread: f64 = 1.0;
    let values: Vec<Vec<Vec<f64>>> = rs
        .iter()
        .map(|&r| {
            grid.iter()
                .map(|&s| grid.iter().map(|&q| phi_pair_value(d, beta, t, r, s, q, j0)).collect())
                .collect()
        })
        .map(|v: Vec<Result<Vec<f64>>>| v.into_iter().collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    for (k, &r) in rs.iter().enumerate() {
        let mut sup: f64 = 0.0;
        for (a, &s) in grid.iter().enumerate() {
            for (b, &q) in grid.iter().enumerate() {
                let v = values[k][a][b];
                asym = asym.max((v - values[k][b][a]).abs() / v);
                sup = sup.max(v);
                rows.push(LemmaRow {
                    params: vec![("R", r), ("s", s), ("r", q)],
                    estimate: v,
                    stderr: 0.0,
                });
            }
        }
        sups.push(sup);
    }
    for a in 0..grid.len() {
        for b in 0..grid.len() {
            let across: Vec<f64> = (0..rs.len()).map(|k| values[k][a][b]).collect();
            let hi = across.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = across.iter().cloned().fold(f64::INFINITY, f64::min);
            spread = spread.max(hi / lo);
        }
    }
    let sup_hi = sups.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sup_lo = sups.iter().cloned().fold(f64::INFINITY, f64::min);
    let checks = vec![
        SubCheck::at_most("max/min over R of the grid supremum", sup_hi / sup_lo, 3.0),
        SubCheck::at_most("max/min over R at fixed (s, r)", spread, 3.0),
        SubCheck::at_most("max relative asymmetry in (s, r)", asym, 1e-10),
    ];
    Ok(LemmaCheckResult {
        lemma: Lemma::PhiPair,
        rows,
        fits: Vec::new(),
        checks,
    })
}

// ---------------------------------------------------------------------------
// Suite

/// Parameters of every check, with the defaults used by the command-line tool.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaSuite {
    pub beta: f64,
    pub seed: u64,
    pub heat_xs: Vec<f64>,
    pub heat_ts: Vec<f64>,
    pub heat_lambdas: Vec<f64>,
    pub box_rs: Vec<f64>,
    pub box_xs: Vec<f64>,
    pub m_t: f64,
    pub m_alpha: f64,
    pub m_eps: Vec<f64>,
    pub m_rs: Vec<f64>,
    pub e_params: EParams,
    pub e_rs: Vec<f64>,
    pub e_log2_points: u32,
    pub pair_t: f64,
    pub pair_rs: Vec<f64>,
    pub pair_grid: Vec<f64>,
    pub phi_t: f64,
    pub phi_tau: f64,
    pub phi_xis: Vec<f64>,
    pub phi_rs: Vec<f64>,
    pub phi_log2_points: u32,
    pub shifts: usize,
}

impl LemmaSuite {
    pub fn with_beta(beta: f64, seed: u64) -> Self {
        let heat_ts = (0..=24).map(|k| 10f64.powf(-4.0 + k as f64 / 4.0)).collect();
        Self {
            beta,
            seed,
            heat_xs: vec![0.5, 1.0, 2.0, 4.0],
            heat_ts,
            heat_lambdas: vec![0.5, 2.0, 3.0],
            box_rs: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            box_xs: vec![0.0, 0.5],
            m_t: 0.25,
            m_alpha: 0.8,
            m_eps: vec![1e-3, 1e-2, 1e-1, 1.0],
            m_rs: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            e_params: EParams {
                t: 0.25,
                s1: 0.05,
                s2: 0.075,
                tau: 0.125,
                beta,
            },
            e_rs: vec![1.0, 2.0, 4.0, 8.0],
            e_log2_points: 17,
            pair_t: 0.25,
            pair_rs: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            pair_grid: vec![0.0, 0.0625, 0.125, 0.1875, 0.25],
            phi_t: 0.25,
            phi_tau: 0.125,
            phi_xis: vec![0.0, 0.5],
            phi_rs: vec![1.0, 2.0, 4.0, 8.0],
            phi_log2_points: 16,
            shifts: 16,
        }
    }

    fn plan(&self, log2_points: u32, stream: u64) -> RqmcPlan {
        RqmcPlan {
            log2_points,
            shifts: self.shifts,
            seed: self.seed,
            stream,
        }
    }

    /// Runs one check; `PhiBound` yields one result per index `i`.
    pub fn run(&self, lemma: Lemma) -> Result<Vec<LemmaCheckResult>> {
        let b = self.beta;
        Ok(match lemma {
            Lemma::HeatRiesz => vec![check_heat_riesz(
                &self.heat_xs,
                b,
                1,
                &self.heat_ts,
                &self.heat_lambdas,
            )?],
            Lemma::BoxRiesz => vec![check_qr_riesz(&self.box_rs, &self.box_xs, b, 1)?],
            Lemma::MScaling => vec![check_m_scaling(self.m_t, self.m_alpha, &self.m_eps, &self.m_rs, b, 1)?],
            Lemma::EGrowth => vec![check_e_growth(
                &EParams {
                    beta: b,
                    ..self.e_params
                },
                &self.e_rs,
                &self.plan(self.e_log2_points, 0xE0_0000),
            )?],
            Lemma::PhiPair => vec![check_varphi_pair(self.pair_t, b, 1, &self.pair_rs, &self.pair_grid)?],
            Lemma::PhiBound => [1u8, 2]
                .iter()
                .map(|&i| {
                    check_phi_i_bound(
                        self.phi_t,
                        self.phi_tau,
                        &self.phi_xis,
                        b,
                        &self.phi_rs,
                        i,
                        &self.plan(self.phi_log2_points, 0xF0_0000),
                    )
                })
                .collect::<Result<_>>()?,
        })
    }
}
