//! Monte Carlo runs: one field per replica, nested box integrals, distances to N(0, 1).

use pam_core::averaging::{
    center_and_scale, chaos1_variance, spatial_integral, variance_limit, AverageSamples, Scaled, SigmaMode,
};
use pam_core::solver::{positivity_report, Solver, SolverConfig};
use pam_core::stats::{
    bandwidth_sensitivity, distance_entry, fit_rate, weights_from_intervals, BandwidthRow, BootstrapPlan,
    DistanceEntry, Interval, RateFit,
};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Per-replica output: one integral per box size plus positivity counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaOutcome {
    pub integrals: Vec<f64>,
    pub negative_cells: usize,
    pub min_value: f64,
    pub clamped_cells: usize,
}

/// Runs every replica of `cfg` on the current rayon pool; results are in replica order.
pub fn run_replicas(cfg: &ExperimentConfig) -> CliResult<Vec<ReplicaOutcome>> {
    cfg.validate_simulation()?;
    let params = cfg.params()?;
    let grid = cfg.noise_grid()?;
    let mut sc = SolverConfig::new(&params, grid, cfg.r_max())?;
    sc.zero_noise = cfg.simulation.zero_noise;
    sc.clamp_at_zero = cfg.simulation.clamp_at_zero;
    let solver = Solver::new(&params, sc)?;
    let rs = &cfg.simulation.r_values;
    let seed = cfg.seed;
    let results: Vec<CliResult<ReplicaOutcome>> = (0..cfg.simulation.replicas as u64)
        .into_par_iter()
        .map_init(
            || solver.workspace(),
            |ws, replica| {
                let ws = ws.as_mut().map_err(|e| CliError::Numerical(e.clone()))?;
                let fail = |source| CliError::Replica { replica, source };
                let sol = solver.solve(ws, seed, replica).map_err(fail)?;
                let integrals = rs
                    .iter()
                    .map(|&r| spatial_integral(&sol.field.values, &grid, r))
                    .collect::<pam_core::Result<Vec<_>>>()
                    .map_err(fail)?;
                let pos = positivity_report(&sol.field.values);
                Ok(ReplicaOutcome {
                    integrals,
                    negative_cells: pos.cells - (pos.fraction_nonnegative * pos.cells as f64).round() as usize,
                    min_value: pos.min_value,
                    clamped_cells: sol.clamped_cells,
                })
            },
        )
        .collect();
    // the lowest failing replica is reported, independent of scheduling
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSummary {
    pub samples: AverageSamples,
    pub chaos1_variance: f64,
    pub limit_variance: f64,
    /// `None` for degenerate runs.
    pub scaled: Option<Scaled>,
    pub distances: Option<DistanceEntry>,
}

impl BoxSummary {
    pub fn r(&self) -> f64 {
        self.samples.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivitySummary {
    pub cells_per_replica: usize,
    pub replicas: usize,
    pub negative_cells: usize,
    pub fraction_nonnegative: f64,
    pub min_value: f64,
    pub clamped_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricFit {
    pub metric: &'static str,
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub sigma_mode: SigmaMode,
    pub boxes: Vec<BoxSummary>,
    pub positivity: PositivitySummary,
    pub fits: Vec<MetricFit>,
    pub bandwidth: Vec<BandwidthRow>,
    /// Set when the samples carry no spread (zero-noise runs).
    pub degenerate: Option<String>,
    pub checks: Vec<Check>,
}

impl SimulationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn metric_intervals(boxes: &[BoxSummary], metric: &str) -> Option<Vec<(f64, f64, Interval)>> {
    boxes
        .iter()
        .map(|b| {
            let d = b.distances.as_ref()?;
            Some(match metric {
                "kolmogorov" => (b.r(), d.kolmogorov, d.kolmogorov_ci),
                "tv" => (b.r(), d.tv, d.tv_ci),
                _ => (b.r(), d.sup.value, d.sup_ci),
            })
        })
        .collect()
}

/// Weighted log-log slope of a distance against `R`; `None` with fewer than three positive points.
pub fn fit_metric(boxes: &[BoxSummary], metric: &'static str) -> Option<MetricFit> {
    let rows = metric_intervals(boxes, metric)?;
    if rows.len() < 3 || rows.iter().any(|r| !(r.1 > 0.0)) {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let ivs: Vec<Interval> = rows.iter().map(|r| r.2).collect();
    let w = weights_from_intervals(&ivs);
    let fit = fit_rate(&pts, w.as_deref()).ok()?;
    Some(MetricFit { metric, fit })
}

/// Whether consecutive values never increase beyond overlapping confidence intervals.
pub fn non_increasing_up_to_ci(rows: &[(f64, f64, Interval)]) -> bool {
    rows.windows(2).all(|w| w[1].1 <= w[0].1 || w[1].2.overlaps(&w[0].2))
}

/// Summary statistics, distances and checks from replicas in replica order.
pub fn summarize_outcomes(cfg: &ExperimentConfig, outcomes: &[ReplicaOutcome]) -> CliResult<SimulationReport> {
    let m = &cfg.model;
    let mode: SigmaMode = cfg.simulation.sigma_mode.into();
    let mut boxes = Vec::new();
    let mut degenerate = None;
    for (k, &r) in cfg.simulation.r_values.iter().enumerate() {
        let raw: Vec<f64> = outcomes.iter().map(|o| o.integrals[k]).collect();
        let samples = AverageSamples::new(r, m.d, m.beta, m.t, raw)?;
        let spread = samples.variance();
        let (scaled, distances) = if cfg.simulation.zero_noise || !(spread > 0.0) {
            degenerate = Some(format!(
                "all {} integrals at R = {r} are equal; distances are undefined",
                samples.raw.len()
            ));
            (None, None)
        } else {
            let scaled = center_and_scale(&samples, mode)?;
            let plan = BootstrapPlan {
                resamples: cfg.estimators.bootstrap,
                seed: cfg.seed,
                stream: k as u64,
            };
            let d = distance_entry(r, &scaled.values, cfg.estimators.bandwidth, &plan)?;
            (Some(scaled), Some(d))
        };
        boxes.push(BoxSummary {
            chaos1_variance: chaos1_variance(r, m.t, m.d, m.beta)?,
            limit_variance: variance_limit(r, m.t, m.d, m.beta)?,
            samples,
            scaled,
            distances,
        });
    }
    let cells = cfg.noise_grid()?.total_cells();
    let negative: usize = outcomes.iter().map(|o| o.negative_cells).sum();
    let positivity = PositivitySummary {
        cells_per_replica: cells,
        replicas: outcomes.len(),
        negative_cells: negative,
        fraction_nonnegative: 1.0 - negative as f64 / (cells * outcomes.len()) as f64,
        min_value: outcomes.iter().map(|o| o.min_value).fold(f64::INFINITY, f64::min),
        clamped_cells: outcomes.iter().map(|o| o.clamped_cells).sum(),
    };
    let fits: Vec<MetricFit> = ["kolmogorov", "tv", "sup"]
        .into_iter()
        .filter_map(|name| fit_metric(&boxes, name))
        .collect();
    let bandwidth = match boxes.last().and_then(|b| b.scaled.as_ref()) {
        Some(s) => bandwidth_sensitivity(&s.values, &cfg.estimators.bandwidth_factors)?,
        None => Vec::new(),
    };
    let mut report = SimulationReport {
        sigma_mode: mode,
        boxes,
        positivity,
        fits,
        bandwidth,
        degenerate,
        checks: Vec::new(),
    };
    report.checks = default_checks(cfg, &report);
    Ok(report)
}

/// Checks evaluated by `simulate --check`.
fn default_checks(cfg: &ExperimentConfig, rep: &SimulationReport) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(Check {
        name: "positivity fraction".into(),
        value: rep.positivity.fraction_nonnegative,
        bound: ">= 0.999".into(),
        passed: rep.positivity.fraction_nonnegative >= 0.999,
    });
    if rep.degenerate.is_some() {
        return out;
    }
    for b in &rep.boxes {
        let ratio = b.samples.variance() / b.chaos1_variance;
        out.push(Check {
            name: format!("Var / chaos1 at R={}", b.r()),
            value: ratio,
            bound: "within 15% of 1".into(),
            passed: (ratio - 1.0).abs() <= 0.15,
        });
    }
    if let Some(last) = rep.boxes.last().and_then(|b| b.distances.as_ref()) {
        out.push(Check {
            name: format!("Kolmogorov at R={}", last.r),
            value: last.kolmogorov,
            bound: "<= 0.05".into(),
            passed: last.kolmogorov <= 0.05,
        });
        out.push(Check {
            name: format!("KDE sup distance at R={}", last.r),
            value: last.sup.value,
            bound: "<= 0.05".into(),
            passed: last.sup.value <= 0.05,
        });
    }
    if let Some(tv) = rep.fits.iter().find(|f| f.metric == "tv") {
        let lo = -cfg.model.beta - 0.3;
        out.push(Check {
            name: "TV log-log slope".into(),
            value: tv.fit.slope,
            bound: format!("in [{lo}, 0)"),
            passed: tv.fit.slope < 0.0 && tv.fit.slope >= lo,
        });
    }
    out
}

pub fn run_simulate(cfg: &ExperimentConfig) -> CliResult<SimulationReport> {
    let outcomes = run_replicas(cfg)?;
    summarize_outcomes(cfg, &outcomes)
}
