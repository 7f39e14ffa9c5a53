//! Experiment configuration file (TOML, versioned, unknown keys rejected).

use std::path::Path;

use pam_core::averaging::{box_cells, SigmaMode};
use pam_core::kernels::{check_exponent, ModelParams};
use pam_core::lemma_lab::Lemma;
use pam_core::noise::NoiseGrid;
use pam_core::solver::MARGIN_SQRT_T;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
/// Fewest replicas accepted when distances to the normal law are estimated.
pub const MIN_DISTANCE_REPLICAS: usize = 100;
/// Practical upper limit on β for the lemma suite in one dimension.
pub const LEMMA_BETA_MAX: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub lemmas: LemmaSection,
    #[serde(default)]
    pub noise_check: NoiseCheckSection,
}

fn default_seed() -> u64 {
    20_240_601
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub beta: f64,
    pub t: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d: 1,
            beta: 0.5,
            t: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub h: f64,
    pub dt: f64,
    /// `L − R_max`; the torus is then rounded up to a power-of-two cell count.
    pub margin: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            h: 0.05,
            dt: 1e-3,
            margin: 4.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaChoice {
    Empirical,
    Chaos1,
    Limit,
}

impl From<SigmaChoice> for SigmaMode {
    fn from(c: SigmaChoice) -> Self {
        match c {
            SigmaChoice::Empirical => SigmaMode::Empirical,
            SigmaChoice::Chaos1 => SigmaMode::Chaos1,
            SigmaChoice::Limit => SigmaMode::Limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub r_values: Vec<f64>,
    pub replicas: usize,
    pub sigma_mode: SigmaChoice,
    /// Debug mode: diffusion only, every integral equals `(2R)^d`.
    pub zero_noise: bool,
    pub clamp_at_zero: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            r_values: vec![2.0, 4.0, 8.0],
            replicas: 2000,
            sigma_mode: SigmaChoice::Empirical,
            zero_noise: false,
            clamp_at_zero: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// Fixed KDE bandwidth; the rule of thumb is used when absent.
    pub bandwidth: Option<f64>,
    pub bootstrap: usize,
    pub bandwidth_factors: Vec<f64>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            bandwidth: None,
            bootstrap: 200,
            bandwidth_factors: vec![0.5, 0.75, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaSection {
    pub select: Vec<String>,
    /// Defaults to the model exponent.
    pub beta: Option<f64>,
    pub e_log2_points: u32,
    pub phi_log2_points: u32,
    pub shifts: usize,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self {
            select: Lemma::ALL.iter().map(|l| l.name().to_string()).collect(),
            beta: None,
            e_log2_points: 17,
            phi_log2_points: 16,
            shifts: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseCheckSection {
    pub n_cells: usize,
    pub h: f64,
    pub samples: usize,
    /// Defaults to the model exponent.
    pub beta: Option<f64>,
}

impl Default for NoiseCheckSection {
    fn default() -> Self {
        Self {
            n_cells: 64,
            h: 0.1,
            samples: 100_000,
            beta: None,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: default_seed(),
            model: ModelSection::default(),
            grid: GridSection::default(),
            simulation: SimulationSection::default(),
            estimators: EstimatorSection::default(),
            lemmas: LemmaSection::default(),
            noise_check: NoiseCheckSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Canonical serialization. JSON rather than TOML so that seeds above `i64::MAX` survive.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn params(&self) -> CliResult<ModelParams> {
        Ok(ModelParams::new(self.model.d, self.model.beta, self.model.t)?)
    }

    pub fn r_max(&self) -> f64 {
        self.simulation.r_values.iter().cloned().fold(0.0, f64::max)
    }

    /// Smallest power-of-two torus with `L ≥ R_max + margin`.
    pub fn noise_grid(&self) -> CliResult<NoiseGrid> {
        let g = &self.grid;
        if !(g.h > 0.0 && g.h.is_finite() && g.margin.is_finite()) {
            return Err(CliError::Config(format!(
                "grid.h = {} must be positive and finite",
                g.h
            )));
        }
        let want = 2.0 * (self.r_max() + g.margin) / g.h;
        let cells = (want - 1e-9).ceil().max(2.0) as usize;
        Ok(NoiseGrid::new(self.model.d, cells.next_power_of_two(), g.h, g.dt)?)
    }

    pub fn validate_simulation(&self) -> CliResult<()> {
        self.params()?;
        let s = &self.simulation;
        if s.r_values.is_empty() {
            return Err(CliError::Config("simulation.r_values is empty".into()));
        }
        if s.r_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config(
                "simulation.r_values must be strictly increasing".into(),
            ));
        }
        let needed = MARGIN_SQRT_T * self.model.t.sqrt();
        if !(self.grid.margin >= needed) {
            return Err(CliError::Config(format!(
                "grid.margin = {} is below 6 sqrt(t) = {needed}",
                self.grid.margin
            )));
        }
        let grid = self.noise_grid()?;
        for &r in &s.r_values {
            box_cells(&grid, r)?;
        }
        let floor = if s.zero_noise { 2 } else { MIN_DISTANCE_REPLICAS };
        if s.replicas < floor {
            return Err(CliError::Config(format!(
                "simulation.replicas = {} is below {floor}",
                s.replicas
            )));
        }
        let e = &self.estimators;
        if let Some(b) = e.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return Err(CliError::Config(format!("estimators.bandwidth = {b} must be positive")));
            }
        }
        if e.bootstrap < 20 {
            return Err(CliError::Config("estimators.bootstrap must be at least 20".into()));
        }
        if e.bandwidth_factors.iter().any(|f| !(*f > 0.0)) {
            return Err(CliError::Config("estimators.bandwidth_factors must be positive".into()));
        }
        Ok(())
    }

    pub fn lemma_beta(&self) -> f64 {
        self.lemmas.beta.unwrap_or(self.model.beta)
    }

    /// Parsed lemma selection in canonical order; rejects an empty or unknown selection.
    pub fn lemma_selection(&self) -> CliResult<Vec<Lemma>> {
        if self.lemmas.select.is_empty() {
            return Err(CliError::Config("lemmas.select is empty".into()));
        }
        let mut out = Vec::new();
        for name in &self.lemmas.select {
            let l: Lemma = name.parse()?;
            if !out.contains(&l) {
                out.push(l);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn validate_lemmas(&self) -> CliResult<Vec<Lemma>> {
        let beta = self.lemma_beta();
        check_exponent(1, beta)?;
        if beta > LEMMA_BETA_MAX {
            return Err(CliError::Config(format!(
                "lemma beta = {beta} exceeds the practical limit {LEMMA_BETA_MAX}"
            )));
        }
        let l = &self.lemmas;
        if l.shifts < 2 || l.e_log2_points > 24 || l.phi_log2_points > 24 {
            return Err(CliError::Config(
                "lemma QMC needs shifts >= 2 and log2 points <= 24".into(),
            ));
        }
        self.lemma_selection()
    }

    pub fn noise_check_grid(&self) -> CliResult<(NoiseGrid, f64)> {
        let n = &self.noise_check;
        if n.samples < 1000 {
            return Err(CliError::Config("noise_check.samples must be at least 1000".into()));
        }
        let beta = n.beta.unwrap_or(self.model.beta);
        check_exponent(1, beta)?;
        Ok((NoiseGrid::new(1, n.n_cells, n.h, self.grid.dt)?, beta))
    }
}
