//! Subcommand bodies. Each returns the process exit code on success.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pam_core::kernels::kbeta;
use pam_core::stats::{fit_rate, weights_from_intervals, Interval};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, EXIT_CHECK, EXIT_OK};
use crate::lemmas::run_lemmas;
use crate::noise_check::run_noise_check;
use crate::output::{self, DistanceRow, LemmasJson, Manifest, SimulationJson};
use crate::simulate::{run_replicas, summarize_outcomes};

pub const NOISE_CHECK: &str = "noise_check.json";
pub const RATE_FITS: &str = "rate_fits.json";
pub const REPORT_MD: &str = "report.md";

#[derive(Debug, Parser)]
#[command(
    name = "pamlab",
    version,
    about = "Monte Carlo and quadrature laboratory for the parabolic Anderson model"
)]
pub struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Exit with code 4 when an acceptance check fails.
    #[arg(long, global = true)]
    pub check: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run replicas and write samples, distances and rate fits.
    Simulate,
    /// Run the analytic and quasi-Monte Carlo lemma checks.
    Lemmas,
    /// Print k_beta, the Riesz energy of the unit box.
    Kbeta(KbetaArgs),
    /// Compare sampled noise covariances with the exact cell covariance.
    NoiseCheck,
    /// Refit distance rates from an existing distances.csv.
    FitRate,
    /// Render report.md from the files in the output directory.
    Report,
}

#[derive(Debug, Args)]
pub struct KbetaArgs {
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long)]
    pub beta: f64,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Lemmas => "lemmas",
            Command::Kbeta(_) => "kbeta",
            Command::NoiseCheck => "noise-check",
            Command::FitRate => "fit-rate",
            Command::Report => "report",
        }
    }
}

pub fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Dispatches a parsed command line on the current rayon pool.
pub fn run(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Kbeta(a) => kbeta_cmd(a),
        Command::FitRate => fit_rate_cmd(&cli.out, cli.check),
        Command::Report => report_cmd(&cli.out),
        cmd => {
            let cfg = load_config(cli)?;
            match cmd {
                Command::Simulate => simulate_cmd(&cfg, &cli.out, cli.check),
                Command::Lemmas => lemmas_cmd(&cfg, &cli.out, cli.check),
                _ => noise_check_cmd(&cfg, &cli.out, cli.check),
            }
        }
    }
}

fn verdict(passed: bool, check: bool) -> i32 {
    if check && !passed {
        EXIT_CHECK
    } else {
        EXIT_OK
    }
}

fn status(passed: bool) -> &'static str {
    if passed {
        "ok"
    } else {
        "check_failed"
    }
}

fn seconds(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

pub fn kbeta_cmd(a: &KbetaArgs) -> CliResult<i32> {
    let k = kbeta(a.d, a.beta)?;
    if k.stderr > 0.0 {
        println!("{:.7} +- {:.1e}", k.value, k.stderr);
    } else {
        println!("{:.7}", k.value);
    }
    Ok(EXIT_OK)
}

pub fn simulate_cmd(cfg: &ExperimentConfig, out: &Path, check: bool) -> CliResult<i32> {
    cfg.validate_simulation()?;
    output::ensure_dir(out)?;
    let mut manifest = Manifest::new("simulate", cfg);
    for r in &cfg.simulation.r_values {
        manifest
            .replica_counts
            .insert(output::r_label(*r), cfg.simulation.replicas);
    }
    manifest.write(out)?;

    let start = Instant::now();
    let outcomes = run_replicas(cfg)?;
    manifest.wall_times.insert("replicas".into(), seconds(start));
    let start = Instant::now();
    let rep = summarize_outcomes(cfg, &outcomes)?;
    output::write_simulation(out, &rep)?;
    manifest.wall_times.insert("summary".into(), seconds(start));

    for b in &rep.boxes {
        match &b.distances {
            Some(d) => log::info!(
                "R = {}: Var = {:.5e} (chaos1 {:.5e}), Kolmogorov {:.4}, TV {:.4}, sup {:.4}",
                b.r(),
                b.samples.variance(),
                b.chaos1_variance,
                d.kolmogorov,
                d.tv,
                d.sup.value
            ),
            None => log::info!("R = {}: degenerate samples", b.r()),
        }
    }
    if let Some(msg) = &rep.degenerate {
        log::warn!("{msg}");
    }
    if rep.positivity.clamped_cells > 0 {
        log::warn!(
            "{} cells were clamped at zero; this run is exploratory",
            rep.positivity.clamped_cells
        );
    }
    let passed = rep.passed();
    manifest.status = status(passed).into();
    manifest.write(out)?;
    print_checks(
        rep.checks
            .iter()
            .map(|c| (c.name.as_str(), c.value, c.bound.as_str(), c.passed)),
    );
    Ok(verdict(passed, check))
}

fn print_checks<'a>(checks: impl Iterator<Item = (&'a str, f64, &'a str, bool)>) {
    for (name, value, bound, passed) in checks {
        println!("{} {name}: {value:.6} ({bound})", if passed { "PASS" } else { "FAIL" });
    }
}

pub fn lemmas_cmd(cfg: &ExperimentConfig, out: &Path, check: bool) -> CliResult<i32> {
    cfg.validate_lemmas()?;
    output::ensure_dir(out)?;
    let mut manifest = Manifest::new("lemmas", cfg);
    manifest.write(out)?;
    let start = Instant::now();
    let results = run_lemmas(cfg)?;
    manifest.wall_times.insert("lemmas".into(), seconds(start));
    output::write_lemmas(out, cfg.lemma_beta(), &results)?;
    let passed = results.iter().all(|r| r.passed());
    for r in &results {
        println!("{} {}", if r.passed() { "PASS" } else { "FAIL" }, r.lemma.name());
        for c in &r.checks {
            println!(
                "    {} {}: {} vs {}",
                if c.passed { "ok" } else { "x " },
                c.name,
                output::fmt_num(c.value),
                output::fmt_num(c.threshold)
            );
        }
    }
    manifest.status = status(passed).into();
    manifest.write(out)?;
    Ok(verdict(passed, check))
}

pub fn noise_check_cmd(cfg: &ExperimentConfig, out: &Path, check: bool) -> CliResult<i32> {
    cfg.noise_check_grid()?;
    output::ensure_dir(out)?;
    let mut manifest = Manifest::new("noise-check", cfg);
    manifest.write(out)?;
    let start = Instant::now();
    let rep = run_noise_check(cfg)?;
    manifest.wall_times.insert("noise_check".into(), seconds(start));
    output::write_json(&out.join(NOISE_CHECK), &rep)?;
    for s in &rep.samplers {
        println!(
            "{} {} max covariance error {:.3} standard errors",
            if s.passed { "PASS" } else { "FAIL" },
            s.sampler,
            s.max_z
        );
    }
    println!(
        "{} sampler agreement {:.3} standard errors",
        if rep.agreement_passed { "PASS" } else { "FAIL" },
        rep.agreement_z
    );
    manifest.status = status(rep.passed()).into();
    manifest.write(out)?;
    Ok(verdict(rep.passed(), check))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitRow {
    pub metric: String,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub points: usize,
    pub weighted: bool,
}

type MetricPoints = (Vec<(f64, f64)>, Vec<Interval>);

fn metric_points(rows: &[DistanceRow], metric: &str) -> Option<MetricPoints> {
    rows.iter()
        .map(|r| {
            let (v, lo, hi) = match metric {
                "kolmogorov" => (r.kolmogorov?, r.kolmogorov_lo?, r.kolmogorov_hi?),
                "tv" => (r.tv?, r.tv_lo?, r.tv_hi?),
                _ => (r.sup?, r.sup_lo?, r.sup_hi?),
            };
            Some(((r.r, v), Interval { lo, hi }))
        })
        .collect::<Option<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

/// Log-log fits of each distance in `distances.csv`, weighted by the bootstrap intervals when usable.
pub fn refit(rows: &[DistanceRow]) -> CliResult<Vec<RefitRow>> {
    let mut out = Vec::new();
    for metric in ["kolmogorov", "tv", "sup"] {
        let Some((pts, ivs)) = metric_points(rows, metric) else {
            continue;
        };
        if pts.len() < 3 {
            continue;
        }
        let w = weights_from_intervals(&ivs);
        let fit = fit_rate(&pts, w.as_deref())?;
        out.push(RefitRow {
            metric: metric.into(),
            slope: fit.slope,
            slope_stderr: fit.stderr,
            intercept: fit.intercept,
            points: fit.points,
            weighted: w.is_some(),
        });
    }
    Ok(out)
}

pub fn fit_rate_cmd(out: &Path, check: bool) -> CliResult<i32> {
    let rows: Vec<DistanceRow> = output::read_csv(&out.join(output::DISTANCES))?;
    let fits = refit(&rows)?;
    if fits.is_empty() {
        return Err(CliError::Input {
            path: out.join(output::DISTANCES).display().to_string(),
            message: "need at least three non-degenerate rows to fit a rate".into(),
        });
    }
    output::write_json(&out.join(RATE_FITS), &fits)?;
    for f in &fits {
        println!(
            "{}: slope {:.4} +- {:.4} over {} points",
            f.metric, f.slope, f.slope_stderr, f.points
        );
    }
    // the TV slope must be negative and no steeper than -beta - 0.3
    let mut passed = true;
    if let Some(tv) = fits.iter().find(|f| f.metric == "tv") {
        let beta = read_beta(out).unwrap_or(0.5);
        passed = tv.slope < 0.0 && tv.slope >= -beta - 0.3;
        println!(
            "{} TV slope in [{}, 0)",
            if passed { "PASS" } else { "FAIL" },
            -beta - 0.3
        );
    }
    Ok(verdict(passed, check))
}

fn read_beta(out: &Path) -> Option<f64> {
    let m: Manifest = output::read_json(&out.join(output::MANIFEST)).ok()?;
    m.config.get("model")?.get("beta")?.as_f64()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

/// Markdown summary of whatever result files are present in `out`.
pub fn render_report(out: &Path) -> CliResult<String> {
    let mut md = String::from("# pamlab report\n\n");
    let manifest_path = out.join(output::MANIFEST);
    if manifest_path.exists() {
        let m: Manifest = output::read_json(&manifest_path)?;
        let _ = writeln!(
            md,
            "Last command: `{}` (status {}), seed {}, config hash `{}`, version {}.\n",
            m.command, m.status, m.master_seed, m.config_hash, m.version
        );
    }
    let mut found = false;
    let dist_path = out.join(output::DISTANCES);
    if dist_path.exists() {
        found = true;
        let rows: Vec<DistanceRow> = output::read_csv(&dist_path)?;
        md.push_str("## Box integrals\n\n");
        md.push_str("| R | n | sigma mode | Var | Var stderr | chaos1 Var | limit Var | Kolmogorov | TV | sup |\n");
        md.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {:.5e} | {:.2e} | {:.5e} | {:.5e} | {} | {} | {} |",
                r.r,
                r.n,
                r.sigma_mode,
                r.variance,
                r.variance_stderr,
                r.chaos1_variance,
                r.limit_variance,
                fmt_opt(r.kolmogorov),
                fmt_opt(r.tv),
                fmt_opt(r.sup)
            );
        }
        md.push('\n');
    }
    let rep_path = out.join(output::REPORT);
    if rep_path.exists() {
        let rep: SimulationJson = output::read_json(&rep_path)?;
        if let Some(msg) = &rep.degenerate {
            let _ = writeln!(md, "Degenerate run: {msg}.\n");
        }
        if !rep.fits.is_empty() {
            md.push_str("## Rate fits\n\n| metric | slope | stderr | points |\n|---|---|---|---|\n");
            for f in &rep.fits {
                let _ = writeln!(
                    md,
                    "| {} | {:.4} | {:.4} | {} |",
                    f.metric, f.slope, f.slope_stderr, f.points
                );
            }
            md.push('\n');
        }
        md.push_str("## Checks\n\n");
        for c in &rep.checks {
            let _ = writeln!(
                md,
                "- {} {}: {:.6} ({})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.bound
            );
        }
        let _ = writeln!(md, "\nNote: {}.\n", rep.note);
    }
    let lemma_path = out.join(output::LEMMAS);
    if lemma_path.exists() {
        found = true;
        let l: LemmasJson = output::read_json(&lemma_path)?;
        let _ = writeln!(md, "## Lemma checks (beta = {})\n", l.beta);
        for r in &l.results {
            let _ = writeln!(
                md,
                "- {} {} ({} rows, `{}`)",
                if r.passed { "PASS" } else { "FAIL" },
                r.lemma,
                r.rows,
                r.table
            );
            for c in &r.checks {
                let _ = writeln!(md, "    - {}: {:.6} vs {}", c.name, c.value, c.bound);
            }
        }
        md.push('\n');
    }
    let noise_path = out.join(NOISE_CHECK);
    if noise_path.exists() {
        found = true;
        let n: crate::noise_check::NoiseCheckReport = output::read_json(&noise_path)?;
        let _ = writeln!(
            md,
            "## Noise covariance\n\n{} cells, h = {}, beta = {}, {} samples.\n",
            n.n_cells, n.h, n.beta, n.samples
        );
        for s in &n.samplers {
            let _ = writeln!(md, "- {}: max error {:.3} standard errors", s.sampler, s.max_z);
        }
        let _ = writeln!(md, "- sampler agreement: {:.3} standard errors\n", n.agreement_z);
    }
    if !found {
        return Err(CliError::Input {
            path: out.display().to_string(),
            message: "no result files to report on".into(),
        });
    }
    Ok(md)
}

pub fn report_cmd(out: &Path) -> CliResult<i32> {
    let md = render_report(out)?;
    let path = out.join(REPORT_MD);
    std::fs::write(&path, md).map_err(|e| CliError::io(&path, e))?;
    println!("{}", path.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(r: f64, k: f64) -> DistanceRow {
        DistanceRow {
            r,
            n: 100,
            status: "ok".into(),
            sigma_mode: "empirical".into(),
            sigma: Some(1.0),
            mean: 0.0,
            variance: 1.0,
            variance_stderr: 0.1,
            chaos1_variance: 1.0,
            limit_variance: 1.0,
            kolmogorov: Some(k),
            kolmogorov_lo: Some(0.8 * k),
            kolmogorov_hi: Some(1.25 * k),
            tv: Some(2.0 * k),
            tv_lo: Some(1.6 * k),
            tv_hi: Some(2.5 * k),
            sup: None,
            sup_lo: None,
            sup_hi: None,
            sup_argmax: None,
            bandwidth: Some(0.3),
        }
    }

    #[test]
    fn refit_recovers_power_laws_and_skips_missing_metrics() {
        let rows: Vec<DistanceRow> = [2.0, 4.0, 8.0f64]
            .iter()
            .map(|&r| row(r, 0.3 * r.powf(-0.25)))
            .collect();
        let fits = refit(&rows).unwrap();
        assert_eq!(
            fits.iter().map(|f| f.metric.as_str()).collect::<Vec<_>>(),
            ["kolmogorov", "tv"]
        );
        for f in &fits {
            assert!((f.slope + 0.25).abs() < 1e-12);
            assert!(f.weighted);
        }
        assert!(refit(&rows[..2]).unwrap().is_empty());
    }
}
