//! CSV and JSON report files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pam_core::lemma_lab::LemmaCheckResult;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::simulate::SimulationReport;

pub const MANIFEST: &str = "manifest.json";
pub const DISTANCES: &str = "distances.csv";
pub const BANDWIDTH: &str = "bandwidth.csv";
pub const REPORT: &str = "report.json";
pub const LEMMAS: &str = "lemmas.json";

/// `R` as it appears in file names and tables.
pub fn r_label(r: f64) -> String {
    format!("{r}")
}

/// Plain decimal for moderate magnitudes, scientific otherwise.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || (1e-3..1e6).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:.3e}")
    }
}

pub fn samples_file(r: f64) -> String {
    format!("samples_R{}.csv", r_label(r))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| CliError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    /// Replicas per box size, keyed by `R`.
    pub replica_counts: BTreeMap<String, usize>,
    /// Seconds per phase. The only field that varies between identical runs.
    pub wall_times: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            tool: "pamlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            status: "running".into(),
            config_hash: cfg.hash(),
            master_seed: cfg.seed,
            config: serde_json::to_value(cfg).expect("config is always serializable"),
            replica_counts: BTreeMap::new(),
            wall_times: BTreeMap::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST);
        write_json(&path, self)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub replica_id: u64,
    pub raw_integral: f64,
    #[serde(rename = "F_value")]
    pub f_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    #[serde(rename = "R")]
    pub r: f64,
    pub n: usize,
    pub status: String,
    pub sigma_mode: String,
    pub sigma: Option<f64>,
    pub mean: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    pub chaos1_variance: f64,
    pub limit_variance: f64,
    pub kolmogorov: Option<f64>,
    pub kolmogorov_lo: Option<f64>,
    pub kolmogorov_hi: Option<f64>,
    pub tv: Option<f64>,
    pub tv_lo: Option<f64>,
    pub tv_hi: Option<f64>,
    pub sup: Option<f64>,
    pub sup_lo: Option<f64>,
    pub sup_hi: Option<f64>,
    pub sup_argmax: Option<f64>,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthCsvRow {
    #[serde(rename = "R")]
    pub r: f64,
    pub factor: f64,
    pub bandwidth: f64,
    pub sup: f64,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJson {
    pub metric: String,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub points: usize,
    pub weighting: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckJson {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationJson {
    pub sigma_mode: String,
    pub degenerate: Option<String>,
    pub positivity: BTreeMap<String, f64>,
    pub fits: Vec<FitJson>,
    pub checks: Vec<CheckJson>,
    pub note: String,
}

pub fn distance_rows(rep: &SimulationReport) -> Vec<DistanceRow> {
    rep.boxes
        .iter()
        .map(|b| {
            let d = b.distances.as_ref();
            DistanceRow {
                r: b.r(),
                n: b.samples.raw.len(),
                status: if d.is_some() { "ok" } else { "degenerate" }.into(),
                sigma_mode: rep.sigma_mode.name().into(),
                sigma: b.scaled.as_ref().map(|s| s.sigma),
                mean: b.samples.mean(),
                variance: b.samples.variance(),
                variance_stderr: b.samples.variance_stderr(),
                chaos1_variance: b.chaos1_variance,
                limit_variance: b.limit_variance,
                kolmogorov: d.map(|d| d.kolmogorov),
                kolmogorov_lo: d.map(|d| d.kolmogorov_ci.lo),
                kolmogorov_hi: d.map(|d| d.kolmogorov_ci.hi),
                tv: d.map(|d| d.tv),
                tv_lo: d.map(|d| d.tv_ci.lo),
                tv_hi: d.map(|d| d.tv_ci.hi),
                sup: d.map(|d| d.sup.value),
                sup_lo: d.map(|d| d.sup_ci.lo),
                sup_hi: d.map(|d| d.sup_ci.hi),
                sup_argmax: d.map(|d| d.sup.argmax),
                bandwidth: d.map(|d| d.bandwidth),
            }
        })
        .collect()
}

/// Writes samples, distances, bandwidth table and the JSON summary; returns the files written.
pub fn write_simulation(dir: &Path, rep: &SimulationReport) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for b in &rep.boxes {
        let rows: Vec<SampleRow> = b
            .samples
            .raw
            .iter()
            .enumerate()
            .map(|(i, &raw)| SampleRow {
                replica_id: i as u64,
                raw_integral: raw,
                f_value: b.scaled.as_ref().map(|s| s.values[i]),
            })
            .collect();
        let path = dir.join(samples_file(b.r()));
        write_csv(&path, &rows)?;
        written.push(path);
    }
    let path = dir.join(DISTANCES);
    write_csv(&path, &distance_rows(rep))?;
    written.push(path);

    let r_last = rep.boxes.last().map(|b| b.r()).unwrap_or(0.0);
    let bw: Vec<BandwidthCsvRow> = rep
        .bandwidth
        .iter()
        .map(|b| BandwidthCsvRow {
            r: r_last,
            factor: b.factor,
            bandwidth: b.bandwidth,
            sup: b.sup,
            tv: b.tv,
        })
        .collect();
    let path = dir.join(BANDWIDTH);
    write_csv(&path, &bw)?;
    written.push(path);

    let p = &rep.positivity;
    let positivity = BTreeMap::from([
        ("cells_per_replica".to_string(), p.cells_per_replica as f64),
        ("replicas".to_string(), p.replicas as f64),
        ("negative_cells".to_string(), p.negative_cells as f64),
        ("fraction_nonnegative".to_string(), p.fraction_nonnegative),
        ("min_value".to_string(), p.min_value),
        ("clamped_cells".to_string(), p.clamped_cells as f64),
    ]);
    let json = SimulationJson {
        sigma_mode: rep.sigma_mode.name().into(),
        degenerate: rep.degenerate.clone(),
        positivity,
        fits: rep
            .fits
            .iter()
            .map(|f| FitJson {
                metric: f.metric.into(),
                slope: f.fit.slope,
                slope_stderr: f.fit.stderr,
                intercept: f.fit.intercept,
                points: f.fit.points,
                weighting: "inverse squared bootstrap log-width".into(),
            })
            .collect(),
        checks: rep
            .checks
            .iter()
            .map(|c| CheckJson {
                name: c.name.clone(),
                value: c.value,
                bound: c.bound.clone(),
                passed: c.passed,
            })
            .collect(),
        note: "one field per replica serves every R, so per-R samples are positively correlated".into(),
    };
    let path = dir.join(REPORT);
    write_json(&path, &json)?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaJson {
    pub lemma: String,
    pub passed: bool,
    pub checks: Vec<CheckJson>,
    pub fits: Vec<FitJson>,
    pub rows: usize,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmasJson {
    pub beta: f64,
    pub all_passed: bool,
    pub results: Vec<LemmaJson>,
}

fn lemma_table_name(res: &LemmaCheckResult, index: usize, total: usize) -> String {
    if total > 1 {
        format!("lemma_{}_{}.csv", res.lemma.name(), index + 1)
    } else {
        format!("lemma_{}.csv", res.lemma.name())
    }
}

/// Long-format table: every parameter becomes a column, missing ones stay empty.
fn write_lemma_table(path: &Path, res: &LemmaCheckResult) -> CliResult<()> {
    let mut columns: Vec<&str> = Vec::new();
    for row in &res.rows {
        for (k, _) in &row.params {
            if !columns.contains(k) {
                columns.push(k);
            }
        }
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<&str> = columns.clone();
    header.extend(["estimate", "stderr"]);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for row in &res.rows {
        let mut rec: Vec<String> = columns
            .iter()
            .map(|c| row.param(c).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        rec.push(row.estimate.to_string());
        rec.push(row.stderr.to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_lemmas(dir: &Path, beta: f64, results: &[LemmaCheckResult]) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut out = Vec::new();
    for (i, res) in results.iter().enumerate() {
        let same = results.iter().filter(|r| r.lemma == res.lemma).count();
        let index = results[..i].iter().filter(|r| r.lemma == res.lemma).count();
        let table = lemma_table_name(res, index, same);
        let path = dir.join(&table);
        write_lemma_table(&path, res)?;
        written.push(path);
        out.push(LemmaJson {
            lemma: res.lemma.name().into(),
            passed: res.passed(),
            checks: res
                .checks
                .iter()
                .map(|c| CheckJson {
                    name: c.name.clone(),
                    value: c.value,
                    bound: fmt_num(c.threshold),
                    passed: c.passed,
                })
                .collect(),
            fits: res
                .fits
                .iter()
                .map(|f| FitJson {
                    metric: f.label.clone(),
                    slope: f.fit.slope,
                    slope_stderr: f.fit.stderr,
                    intercept: f.fit.intercept,
                    points: f.fit.points,
                    weighting: "unweighted".into(),
                })
                .collect(),
            rows: res.rows.len(),
            table,
        });
    }
    let json = LemmasJson {
        beta,
        all_passed: out.iter().all(|r| r.passed),
        results: out,
    };
    let path = dir.join(LEMMAS);
    write_json(&path, &json)?;
    written.push(path);
    Ok(written)
}
