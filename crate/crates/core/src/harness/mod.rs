//! Baselines, metrics, the ablation matrix, weights comparison, domain-gap
//! evaluation, and report emission.

mod ablation;
mod baseline;
mod config;
mod data;
mod domain_gap;
mod metrics;
mod report;
mod weights_cmp;

pub use ablation::{
    run_ablation, AblationRow, AblationSection, CellMetrics, CellOutcome, InputMode, LossMode,
};
pub use baseline::{baseline, inaccuracy_vs_baseline, BaselinePredictor};
pub use config::{effective_workers, HarnessConfig, OutputLayout, WORKERS_ENV};
pub use data::{load_tensors, split_samples, DatasetTensors, InputKind, SplitTensors};
pub use domain_gap::{
    domain_gap_eval, fit_adapter_for_style, style_seed_for, DomainGapRow, DomainGapSection,
};
pub use metrics::{
    accuracy_full, continuous_l1_full, predict_block, region_accuracy_packed, region_l1_full,
    region_l1_packed,
};
pub use report::{
    emit_report, load_section, render_markdown, save_section, BuildInfo, Report,
};
pub use weights_cmp::{compare_weights, WeightsRow, WeightsSection};
