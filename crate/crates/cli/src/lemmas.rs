use pam_core::lemma_lab::{Lemma, LemmaCheckResult, LemmaSuite};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliResult;

pub fn suite(cfg: &ExperimentConfig) -> LemmaSuite {
    let mut s = LemmaSuite::with_beta(cfg.lemma_beta(), cfg.seed);
    s.e_log2_points = cfg.lemmas.e_log2_points;
    s.phi_log2_points = cfg.lemmas.phi_log2_points;
    s.shifts = cfg.lemmas.shifts;
    s
}

/// Runs the selected checks in parallel; results keep the canonical lemma order.
pub fn run_lemmas(cfg: &ExperimentConfig) -> CliResult<Vec<LemmaCheckResult>> {
    let selection: Vec<Lemma> = cfg.validate_lemmas()?;
    let s = suite(cfg);
    let per_lemma: Vec<CliResult<Vec<LemmaCheckResult>>> =
        selection.par_iter().map(|&l| s.run(l).map_err(Into::into)).collect();
    let mut out = Vec::new();
    for r in per_lemma {
        out.extend(r?);
    }
    Ok(out)
}
