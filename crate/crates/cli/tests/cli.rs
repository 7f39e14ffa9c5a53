use std::path::Path;
use std::process::{Command, Output};

use pam_cli::output::{DistanceRow, SampleRow};

fn pamlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pamlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, format!("schema_version = 1\n{body}")).unwrap();
    p.display().to_string()
}

fn read_csv<T: for<'de> serde::Deserialize<'de>>(p: &Path) -> Vec<T> {
    csv::Reader::from_path(p)
        .unwrap()
        .deserialize()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn kbeta_prints_the_closed_form() {
    let o = pamlab(&["kbeta", "--d", "1", "--beta", "0.5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "7.5424723");
}

#[test]
fn kbeta_rejects_the_endpoint() {
    let o = pamlab(&["kbeta", "--d", "1", "--beta", "0"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let cases = [
        "[simulation]\nreplicas = 2000\nbogus = 1\n",
        "[lemmas]\nselect = []\n",
        "[lemmas]\nselect = [\"no_such_check\"]\n",
        "[lemmas]\nbeta = 0.95\n",
        "[simulation]\nr_values = [4.0, 2.0]\n",
        "[simulation]\nreplicas = 50\n",
    ];
    for (i, body) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), body);
        let cmd = if body.contains("lemmas") { "lemmas" } else { "simulate" };
        let o = pamlab(&["--config", &cfg, "--out", out, cmd]);
        assert_eq!(code(&o), 2, "case {i}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let wrong_version = tmp.path().join("v2.toml");
    std::fs::write(&wrong_version, "schema_version = 2\n").unwrap();
    let o = pamlab(&["--config", wrong_version.to_str().unwrap(), "--out", out, "simulate"]);
    assert_eq!(code(&o), 2);
    let o = pamlab(&["--config", "/nonexistent/cfg.toml", "simulate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_noise_run_is_degenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[simulation]\nreplicas = 4\nzero_noise = true\n");
    let out = tmp.path().join("out");
    let o = pamlab(&["--config", &cfg, "--out", out.to_str().unwrap(), "--check", "simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for r in [2.0, 4.0, 8.0_f64] {
        let rows: Vec<SampleRow> = read_csv(&out.join(format!("samples_R{r}.csv")));
        assert_eq!(rows.len(), 4);
        for row in rows {
            assert!((row.raw_integral - 2.0 * r).abs() < 1e-9 * r);
            assert_eq!(row.f_value, None);
        }
    }
    let d: Vec<DistanceRow> = read_csv(&out.join("distances.csv"));
    assert!(d.iter().all(|r| r.status == "degenerate" && r.kolmogorov.is_none()));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["degenerate"].is_string());
}

#[test]
fn simulate_then_refit_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 5\n[simulation]\nreplicas = 120\n[estimators]\nbootstrap = 30\n",
    );
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = pamlab(&["--config", &cfg, "--out", out_s, "simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 5);
    assert_eq!(manifest["replica_counts"]["8"], 120);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_times"]["replicas"].as_f64().unwrap() >= 0.0);

    let header = std::fs::read_to_string(out.join("samples_R4.csv")).unwrap();
    assert!(header.starts_with("replica_id,raw_integral,F_value\n"));
    let d: Vec<DistanceRow> = read_csv(&out.join("distances.csv"));
    assert_eq!(d.iter().map(|r| r.r).collect::<Vec<_>>(), vec![2.0, 4.0, 8.0]);
    assert!(d.iter().all(|r| r.sigma_mode == "empirical" && r.kolmogorov.is_some()));

    let o = pamlab(&["--out", out_s, "fit-rate"]);
    assert_eq!(code(&o), 0);
    let fits: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("rate_fits.json")).unwrap()).unwrap();
    assert_eq!(fits.as_array().unwrap().len(), 3);

    let o = pamlab(&["--out", out_s, "report"]);
    assert_eq!(code(&o), 0);
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("## Box integrals") && md.contains("## Checks"));

    // 120 replicas cannot meet the distance bounds
    let o = pamlab(&["--config", &cfg, "--out", out_s, "--check", "simulate"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn seed_flag_changes_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[simulation]\nreplicas = 100\n[estimators]\nbootstrap = 20\n",
    );
    let mut first = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        let o = pamlab(&[
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
            "simulate",
        ]);
        assert_eq!(code(&o), 0);
        first.push(std::fs::read(out.join("samples_R2.csv")).unwrap());
    }
    assert_ne!(first[0], first[1]);
}

#[test]
fn fit_rate_and_report_need_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&pamlab(&["--out", out, "fit-rate"])), 2);
    assert_eq!(code(&pamlab(&["--out", out, "report"])), 2);
    std::fs::write(tmp.path().join("distances.csv"), "R,n\nnot,a number\n").unwrap();
    assert_eq!(code(&pamlab(&["--out", out, "fit-rate"])), 2);
}

#[test]
fn lemmas_and_noise_check_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[lemmas]\nselect = [\"box_riesz\", \"phi_pair\"]\n[noise_check]\nsamples = 20000\n",
    );
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = pamlab(&["--config", &cfg, "--out", out_s, "--check", "lemmas"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let l: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("lemmas.json")).unwrap()).unwrap();
    assert_eq!(l["all_passed"], true);
    assert_eq!(l["results"].as_array().unwrap().len(), 2);
    let table = std::fs::read_to_string(out.join("lemma_box_riesz.csv")).unwrap();
    assert!(table.lines().next().unwrap().ends_with("estimate,stderr"));

    let o = pamlab(&["--config", &cfg, "--out", out_s, "--check", "noise-check"]);
    assert_eq!(code(&o), 0);
    let n: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("noise_check.json")).unwrap()).unwrap();
    assert_eq!(n["samplers"].as_array().unwrap().len(), 2);
    let o = pamlab(&["--out", out_s, "report"]);
    assert_eq!(code(&o), 0);
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("## Lemma checks") && md.contains("## Noise covariance"));
}
