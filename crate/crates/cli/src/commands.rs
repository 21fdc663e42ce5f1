use std::path::{Path, PathBuf};

use log::{info, warn};
use phonation::dataset::{self, FeatureSet, FeatureTable, Group, Target};
use phonation::ml::{self, EvalConfig, Task};
use phonation::synth::{self, CohortSpec};
use phonation::{matrix, mps, stats};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

const FEATURES_CSV: &str = "features.csv";
const MPS_DIR: &str = "mps";

/// File name for a subject id: anything outside `[A-Za-z0-9._-]` becomes `_`.
fn file_stem(subject_id: &str) -> String {
    let s: String = subject_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    if s.chars().all(|c| c == '.') {
        format!("_{s}")
    } else {
        s
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes `run.json`: tool version, command, seed, configuration and its
/// hash, inputs and the produced files.
fn write_run(
    out: &Path,
    command: &str,
    seed: u64,
    config: &impl Serialize,
    inputs: serde_json::Value,
    outputs: &[String],
) -> Result<(), CliError> {
    let config_json = serde_json::to_string(config)?;
    let hash: String = Sha256::digest(config_json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let mut outputs = outputs.to_vec();
    outputs.sort();
    let run = serde_json::json!({
        "tool": "phonation",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config_hash": hash,
        "config": serde_json::from_str::<serde_json::Value>(&config_json)?,
        "inputs": inputs,
        "outputs": outputs,
    });
    write_json(&out.join("run.json"), &run)
}

pub fn extract(manifest: &Path, config: Option<&Path>, out: &Path, with_mps: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let rows = dataset::read_manifest(manifest).map_err(CliError::usage)?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    info!("extracting {} recordings", rows.len());
    let batch = dataset::extract_manifest(&rows, base, &cfg.extraction, with_mps.then_some(&cfg.mps));
    std::fs::create_dir_all(out)?;
    let mut outputs = vec![FEATURES_CSV.to_string(), "issues.csv".to_string()];
    batch.table.write_phonatory_csv(out.join(FEATURES_CSV))?;
    if with_mps {
        std::fs::create_dir_all(out.join(MPS_DIR))?;
        for (row, m) in batch.table.rows.iter().zip(&batch.mps) {
            if let Some(m) = m {
                let name = format!("{MPS_DIR}/{}.bin", file_stem(&row.subject_id));
                matrix::write_mps(out.join(&name), m, serde_json::json!({ "subject_id": row.subject_id }))?;
                outputs.push(name);
            }
        }
    }
    let mut w = csv::Writer::from_path(out.join("issues.csv"))?;
    w.write_record(["subject_id", "path", "stage", "reason"])?;
    for issue in &batch.issues {
        warn!("{} ({}): {} failed: {}", issue.subject_id, issue.path, issue.stage, issue.reason);
        w.write_record([&issue.subject_id, &issue.path, &issue.stage, &issue.reason])?;
    }
    w.flush()?;
    write_run(
        out,
        "extract",
        cfg.seed,
        &cfg,
        serde_json::json!({ "manifest": manifest, "mps": with_mps }),
        &outputs,
    )?;
    if batch.table.is_empty() && !rows.is_empty() {
        return Err(CliError::data("no recording could be processed"));
    }
    info!("{} rows extracted, {} issues", batch.table.len(), batch.issues.len());
    Ok(())
}

/// Reads the feature table written by `extract`, attaching MPS vectors
/// where present.
fn load_features(dir: &Path) -> Result<FeatureTable, CliError> {
    let csv = dir.join(FEATURES_CSV);
    if !csv.is_file() {
        return Err(CliError::usage(format!("{} not found; run `extract` first", csv.display())));
    }
    let mut table = FeatureTable::read_phonatory_csv(&csv)?;
    for row in &mut table.rows {
        let path = dir.join(MPS_DIR).join(format!("{}.bin", file_stem(&row.subject_id)));
        if path.is_file() {
            let m = matrix::read_mps(&path)?;
            row.mps = Some(mps::mps_feature_vector(&m));
        }
    }
    Ok(table)
}

pub fn stats(features: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.stats.seed = cfg.seed;
    let table = load_features(features)?;
    let present = Group::ALL
        .iter()
        .filter(|g| table.rows.iter().any(|r| r.group == **g))
        .count();
    if present < 2 {
        return Err(CliError::data("statistics need at least two groups"));
    }
    std::fs::create_dir_all(out)?;
    let report = stats::run_phonatory_protocol(&table, &cfg.stats);
    report.write_csv(out.join("stats.csv"))?;
    report.write_json(out.join("stats.json"))?;
    let mut outputs = vec!["stats.csv".to_string(), "stats.json".to_string()];
    if table.rows.iter().any(|r| r.mps.is_some()) {
        match stats::run_mps_protocol_table(&table, cfg.stats.alpha) {
            Ok(r) => {
                r.write(out.join("mps_stats"))?;
                outputs.extend(
                    ["h.bin", "h.json", "p_raw.bin", "p_raw.json", "p_fdr.bin", "p_fdr.json", "mps_summary.json"]
                        .map(|f| format!("mps_stats/{f}")),
                );
                info!(
                    "MPS bins significant: {:.1}% after FDR ({:.1}% uncorrected)",
                    100.0 * r.fraction_adjusted,
                    100.0 * r.fraction_raw
                );
            }
            Err(e) => warn!("MPS statistics skipped: {e}"),
        }
    }
    write_run(out, "stats", cfg.seed, &cfg, serde_json::json!({ "features": features }), &outputs)
}

#[derive(Debug, Clone)]
pub struct ModelRun {
    pub features: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub feature_sets: Vec<FeatureSet>,
    pub repeats: Option<usize>,
    pub test_frac: Option<f64>,
}

pub fn model(run: &ModelRun, target: Option<Target>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(run.config.as_deref())?;
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(r) = run.repeats {
        cfg.evaluation.repeats = r;
    }
    if let Some(f) = run.test_frac {
        cfg.evaluation.test_frac = f;
    }
    if !run.feature_sets.is_empty() {
        cfg.evaluation.feature_sets = run.feature_sets.clone();
    }
    cfg.validate()?;
    let table = load_features(&run.features)?;
    let task = match target {
        None => Task::Classify,
        Some(t) => {
            let missing: Vec<&str> = table
                .rows
                .iter()
                .filter(|r| r.group.is_carrier() && r.score(t).is_none())
                .map(|r| r.subject_id.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(CliError::data(format!(
                    "gene carriers without a {t} score: {}",
                    missing.join(", ")
                )));
            }
            Task::Regress(t)
        }
    };
    let eval = EvalConfig {
        repeats: cfg.evaluation.repeats,
        test_frac: cfg.evaluation.test_frac,
        seed: cfg.seed,
    };
    std::fs::create_dir_all(&run.out)?;
    let mut reports = Vec::new();
    let mut outputs = vec!["summary.csv".to_string()];
    for &set in &cfg.evaluation.feature_sets {
        let usable = match task {
            Task::Classify => table.design_matrix(set).x.len(),
            Task::Regress(_) => table.carriers().design_matrix(set).x.len(),
        };
        if usable < 4 {
            warn!("feature set {set} skipped: {usable} usable subjects");
            continue;
        }
        info!("{set}: {} repeats on {usable} subjects", eval.repeats);
        let report = ml::repeated_learning_testing(&table, task, set, &cfg.model, &eval)?;
        let dir = run.out.join(set.key());
        std::fs::create_dir_all(&dir)?;
        let mut files = vec!["eval.json", "coefficients.csv", "weights.bin", "weights.json"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        report.write_json(dir.join("eval.json"))?;
        report.coefficient_report()?.write_csv(dir.join("coefficients.csv"))?;
        report.write_coefficients(dir.join("weights.bin"))?;
        if report.confusion.is_some() {
            report.write_confusion(dir.join("confusion.bin"))?;
            files.extend(["confusion.bin".into(), "confusion.json".into()]);
        }
        if let Some(maps) = ml::mps_weight_maps(&report) {
            for (label, m) in report.row_labels().iter().zip(&maps) {
                let name = format!("weight_map_{label}.bin");
                let meta = serde_json::json!({ "row": label, "feature_set": set, "seed": cfg.seed });
                matrix::write_mps(dir.join(&name), m, meta)?;
                files.push(name.clone());
                files.push(name.replace(".bin", ".json"));
            }
        }
        outputs.extend(files.into_iter().map(|f| format!("{}/{f}", set.key())));
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(CliError::data("no feature set had enough usable subjects"));
    }
    ml::write_summary_csv(&reports, run.out.join("summary.csv"))?;
    let command = match task {
        Task::Classify => "classify".to_string(),
        Task::Regress(t) => format!("regress {t}"),
    };
    write_run(&run.out, &command, cfg.seed, &cfg, serde_json::json!({ "features": run.features }), &outputs)
}

#[derive(Debug, Clone, Copy)]
pub enum Preset {
    Study,
    Null,
}

pub fn synth(spec: Option<&Path>, preset: Preset, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut cohort = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read spec {}: {e}", path.display())))?;
            let parsed = if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str::<CohortSpec>(&text).map_err(|e| e.to_string())
            } else {
                toml::from_str::<CohortSpec>(&text).map_err(|e| e.to_string())
            };
            parsed.map_err(|e| CliError::usage(format!("invalid spec {}:\n{e}", path.display())))?
        }
        None => match preset {
            Preset::Study => CohortSpec::study_scale(0),
            Preset::Null => CohortSpec::null(0, [24, 16, 45]),
        },
    };
    if let Some(s) = seed {
        cohort.seed = s;
    }
    cohort.validate().map_err(CliError::usage)?;
    let subjects = synth::synth_cohort(&cohort, out)?;
    info!("wrote {} synthetic subjects to {}", subjects.len(), out.display());
    let mut outputs = vec!["manifest.csv".to_string(), "cohort.json".to_string()];
    for s in &subjects {
        outputs.push(format!("wav/{}.wav", s.subject_id));
        outputs.push(format!("truth/{}.json", s.subject_id));
    }
    write_run(out, "synth", cohort.seed, &cohort, serde_json::json!({ "spec": spec }), &outputs)
}

pub fn config_init(out: Option<&Path>) -> Result<(), CliError> {
    let text = RunConfig::default().to_toml();
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn config_check(path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(Some(path))?;
    println!("ok {}", cfg.hash());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("H001"), "H001");
        assert_eq!(file_stem("a/b c"), "a_b_c");
        assert_eq!(file_stem(".."), "_..");
    }
}
