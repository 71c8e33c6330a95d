//! Machine-readable and human-readable report emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facegen::Region;
use crate::harness::ablation::{AblationSection, CellOutcome, InputMode, LossMode};
use crate::harness::config::HarnessConfig;
use crate::harness::domain_gap::DomainGapSection;
use crate::harness::weights_cmp::WeightsSection;
use crate::nets::TrainMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub crate_version: String,
    pub schema_fingerprint: String,
    pub config_hash: String,
}

impl BuildInfo {
    pub fn current(config: &HarnessConfig, schema_fingerprint: &str) -> BuildInfo {
        BuildInfo {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_fingerprint: schema_fingerprint.to_string(),
            config_hash: config.hash(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub ablation: Option<AblationSection>,
    pub weights: Option<WeightsSection>,
    pub domain_gap: Option<DomainGapSection>,
    pub config: HarnessConfig,
    pub build: BuildInfo,
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn cell_text(outcome: &CellOutcome) -> (String, String, String) {
    match outcome {
        CellOutcome::Ok(m) => (
            fmt4(m.inaccuracy_vs_baseline),
            fmt4(m.mean_l1),
            fmt4(m.accuracy),
        ),
        CellOutcome::Failed { .. } => {
            ("FAILED".to_string(), "FAILED".to_string(), "FAILED".to_string())
        }
    }
}

fn ablation_markdown(section: &AblationSection) -> String {
    let mut md = String::from("## Ablation: loss x input x training mode\n\n");
    md.push_str("Inaccuracy is mean L1 relative to the mean-predictor baseline; smaller is better.\n\n");
    md.push_str("| Region | Loss | Input | Inaccuracy (frozen trunk) | Inaccuracy (full training) | L1 (frozen) | L1 (full) | Acc (frozen) | Acc (full) |\n");
    md.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for region in Region::ALL {
        for (loss, input) in [
            (LossMode::Complete, InputMode::FullFrame),
            (LossMode::Local, InputMode::FullFrame),
            (LossMode::Local, InputMode::Crop),
        ] {
            let fe = section.cell(region, loss, input, TrainMode::FrozenTrunk);
            let ft = section.cell(region, loss, input, TrainMode::FullTraining);
            let (fe_in, fe_l1, fe_acc) = fe
                .map(|r| cell_text(&r.outcome))
                .unwrap_or(("-".into(), "-".into(), "-".into()));
            let (ft_in, ft_l1, ft_acc) = ft
                .map(|r| cell_text(&r.outcome))
                .unwrap_or(("-".into(), "-".into(), "-".into()));
            md.push_str(&format!(
                "| {region} | {loss} | {input} | {fe_in} | {ft_in} | {fe_l1} | {ft_l1} | {fe_acc} | {ft_acc} |\n"
            ));
        }
    }
    md.push_str("\nBaseline mean L1 per region: ");
    let parts: Vec<String> = Region::ALL
        .iter()
        .map(|r| format!("{r} {}", fmt4(section.baseline_l1[r])))
        .collect();
    md.push_str(&parts.join(", "));
    md.push_str("\n\n");
    md
}

fn weights_markdown(section: &WeightsSection) -> String {
    let mut md = String::from("## Ensemble weights: constants vs fitted\n\n");
    md.push_str("| Weights | Train sq. err (shared dims) | Eval mean L1 | Eval accuracy | Fitted - this (sq. err) | Fitted - this (eval L1) |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    for row in &section.rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            row.label,
            fmt4(row.train_sq_err),
            fmt4(row.eval_mean_l1),
            fmt4(row.eval_accuracy),
            fmt4(row.delta_train_sq_err),
            fmt4(row.delta_eval_mean_l1),
        ));
    }
    md.push('\n');
    md
}

fn domain_gap_markdown(section: &DomainGapSection) -> String {
    let mut md = format!(
        "## Domain gap: style `{}`\n\n| Condition | Overall L1 | Eyes L1 | Nose L1 | Mouth L1 | Accuracy |\n|---|---|---|---|---|---|\n",
        section.style_name
    );
    for row in &section.rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            row.condition,
            fmt4(row.overall_l1),
            fmt4(row.per_region_l1[&Region::Eyes]),
            fmt4(row.per_region_l1[&Region::Nose]),
            fmt4(row.per_region_l1[&Region::Mouth]),
            fmt4(row.accuracy),
        ));
    }
    md.push_str(&format!(
        "\nAdaptation gain (styled - adapted, overall L1): {}\n\n",
        fmt4(section.adaptation_gain_overall)
    ));
    md
}

pub fn render_markdown(report: &Report) -> String {
    let mut md = String::from("# F2P evaluation report\n\n");
    md.push_str(&format!(
        "crate {} | schema {} | config {}\n\n",
        report.build.crate_version,
        &report.build.schema_fingerprint[..12.min(report.build.schema_fingerprint.len())],
        &report.build.config_hash[..12.min(report.build.config_hash.len())],
    ));
    if let Some(section) = &report.ablation {
        md.push_str(&ablation_markdown(section));
    }
    if let Some(section) = &report.weights {
        md.push_str(&weights_markdown(section));
    }
    if let Some(section) = &report.domain_gap {
        md.push_str(&domain_gap_markdown(section));
    }
    md
}

/// Write report.json and report.md into a directory.
pub fn emit_report(report: &Report, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join("report.json");
    let md_path = dir.join("report.md");
    let json = serde_json::to_string_pretty(report)?;
    fs::write(&json_path, &json).map_err(|e| Error::io(&json_path, e))?;
    fs::write(&md_path, render_markdown(report)).map_err(|e| Error::io(&md_path, e))?;
    Ok((json_path, md_path))
}

/// Persist one section as JSON so `report` can assemble them later.
pub fn save_section<T: Serialize>(section: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let json = serde_json::to_string_pretty(section)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_section<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::facegen::default_schema;
    use crate::harness::ablation::{AblationRow, CellMetrics};

    fn tiny_report() -> Report {
        let rows = vec![
            AblationRow {
                region: Region::Nose,
                loss: LossMode::Local,
                input: InputMode::Crop,
                mode: TrainMode::FullTraining,
                run_id: "local_nose_crop_full_training".to_string(),
                outcome: CellOutcome::Ok(CellMetrics {
                    mean_l1: 0.1234,
                    accuracy: 0.9,
                    inaccuracy_vs_baseline: -0.0743,
                }),
            },
            AblationRow {
                region: Region::Eyes,
                loss: LossMode::Complete,
                input: InputMode::FullFrame,
                mode: TrainMode::FrozenTrunk,
                run_id: "aggregate_frozen_trunk".to_string(),
                outcome: CellOutcome::Failed { error: "boom".to_string() },
            },
        ];
        let mut baseline_l1 = BTreeMap::new();
        for region in Region::ALL {
            baseline_l1.insert(region, 0.5);
        }
        let config = HarnessConfig::default();
        let schema = default_schema();
        let build = BuildInfo::current(&config, &schema.fingerprint());
        Report {
            ablation: Some(AblationSection { rows, baseline_l1, checkpoints: BTreeMap::new() }),
            weights: None,
            domain_gap: None,
            config,
            build,
        }
    }

    #[test]
    fn report_json_roundtrips() {
        let report = tiny_report();
        let json = serde_json::to_string(&report).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn failed_cells_render_as_failed_not_numbers() {
        let report = tiny_report();
        let md = render_markdown(&report);
        assert!(md.contains("FAILED"));
        assert!(md.contains("-0.0743"));
        let eyes_line = md
            .lines()
            .find(|l| l.starts_with("| eyes | complete"))
            .unwrap();
        assert!(eyes_line.contains("FAILED"));
    }

    #[test]
    fn markdown_rows_match_report_rows() {
        let report = tiny_report();
        let md = render_markdown(&report);
        // 3 regions x 3 combos rendered as 9 table rows regardless of fill.
        let body_rows = md
            .lines()
            .filter(|l| l.starts_with("| ") && !l.starts_with("| Region") && !l.starts_with("|---"))
            .count();
        assert_eq!(body_rows, 9);
    }
}
