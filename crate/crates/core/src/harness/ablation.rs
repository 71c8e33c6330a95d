//! The three-binary-factor ablation matrix: target partitioning (complete
//! vs local loss), input (full frame vs semantic crop), and transfer mode
//! (frozen trunk vs full training). Full-training runs warm-start from the
//! frozen-trunk checkpoint of the same chain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datagen::Split;
use crate::error::Result;
use crate::facegen::Region;
use crate::harness::baseline::{baseline, inaccuracy_vs_baseline, BaselinePredictor};
use crate::harness::config::{HarnessConfig, OutputLayout};
use crate::harness::data::{split_samples, DatasetTensors, InputKind};
use crate::harness::metrics::{predict_block, region_accuracy_packed, region_l1_packed};
use crate::nets::{
    default_aggregate_spec, default_local_spec, load_checkpoint, save_checkpoint, train,
    PredictorModel, Scope, SliceMap, TrainData, TrainMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Complete,
    Local,
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::Complete => "complete",
            LossMode::Local => "local",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    FullFrame,
    Crop,
}

impl std::fmt::Display for InputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputMode::FullFrame => "full_frame",
            InputMode::Crop => "crop",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub mean_l1: f64,
    pub accuracy: f64,
    pub inaccuracy_vs_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok(CellMetrics),
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub region: Region,
    pub loss: LossMode,
    pub input: InputMode,
    pub mode: TrainMode,
    pub run_id: String,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSection {
    pub rows: Vec<AblationRow>,
    /// Baseline mean L1 per region on the evaluation split.
    pub baseline_l1: BTreeMap<Region, f64>,
    /// run id -> checkpoint path, relative to the output root.
    pub checkpoints: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy)]
enum Chain {
    Aggregate,
    LocalFrame(Region),
    LocalCrop(Region),
}

impl Chain {
    fn all() -> Vec<Chain> {
        let mut chains = vec![Chain::Aggregate];
        for region in Region::ALL {
            chains.push(Chain::LocalFrame(region));
        }
        for region in Region::ALL {
            chains.push(Chain::LocalCrop(region));
        }
        chains
    }

    fn name(&self) -> String {
        match self {
            Chain::Aggregate => "aggregate".to_string(),
            Chain::LocalFrame(r) => format!("local_{r}_fullframe"),
            Chain::LocalCrop(r) => format!("local_{r}_crop"),
        }
    }

    fn run_id(&self, mode: TrainMode) -> String {
        format!("{}_{}", self.name(), mode)
    }

    fn input(&self) -> InputKind {
        match self {
            Chain::Aggregate | Chain::LocalFrame(_) => InputKind::FullFrame,
            Chain::LocalCrop(r) => InputKind::Crop(*r),
        }
    }

    fn input_mode(&self) -> InputMode {
        match self {
            Chain::Aggregate | Chain::LocalFrame(_) => InputMode::FullFrame,
            Chain::LocalCrop(_) => InputMode::Crop,
        }
    }

    fn loss_mode(&self) -> LossMode {
        match self {
            Chain::Aggregate => LossMode::Complete,
            _ => LossMode::Local,
        }
    }

    fn scope(&self) -> Scope {
        match self {
            Chain::Aggregate => Scope::Aggregate,
            Chain::LocalFrame(r) | Chain::LocalCrop(r) => Scope::Local(*r),
        }
    }

    fn regions(&self) -> Vec<Region> {
        match self {
            Chain::Aggregate => Region::ALL.to_vec(),
            Chain::LocalFrame(r) | Chain::LocalCrop(r) => vec![*r],
        }
    }
}

struct ChainContext<'a> {
    tensors: &'a DatasetTensors,
    cfg: &'a HarnessConfig,
    out: &'a OutputLayout,
    baseline: &'a BaselinePredictor,
}

fn train_stage(
    ctx: &ChainContext<'_>,
    chain: Chain,
    mode: TrainMode,
    warm_start: Option<&str>,
) -> Result<PredictorModel> {
    let layout = &ctx.tensors.layout;
    let slice_map = match chain.scope() {
        Scope::Aggregate => SliceMap::aggregate(layout),
        Scope::Local(region) => SliceMap::local(layout, region),
    };
    let input = chain.input();
    let mut model = match warm_start {
        Some(run_id) => {
            let mut m = load_checkpoint(
                &ctx.out.checkpoint(run_id),
                Some(&ctx.tensors.fingerprint),
            )?;
            m.mode = mode;
            m
        }
        None => {
            let spec = match chain.scope() {
                Scope::Aggregate => default_aggregate_spec(layout, input.size()),
                Scope::Local(region) => default_local_spec(layout, region, input.size()),
            };
            PredictorModel::init(
                spec,
                chain.scope(),
                mode,
                slice_map.clone(),
                &ctx.tensors.fingerprint,
                ctx.cfg.train.seed,
            )?
        }
    };
    let data = TrainData {
        input_size: input.size(),
        train: split_samples(&ctx.tensors.train, input, &model.slice_map),
        val: split_samples(&ctx.tensors.val, input, &model.slice_map),
    };
    let history = train(&mut model, &data, &ctx.cfg.loss, &ctx.cfg.train)?;
    let run_id = chain.run_id(mode);
    save_checkpoint(&model, &ctx.out.checkpoint(&run_id))?;
    let history_path = ctx.out.history(&run_id);
    std::fs::write(&history_path, history.to_csv())
        .map_err(|e| crate::error::Error::io(&history_path, e))?;
    Ok(model)
}

fn eval_cells(
    ctx: &ChainContext<'_>,
    chain: Chain,
    mode: TrainMode,
    model: &PredictorModel,
) -> Result<Vec<AblationRow>> {
    let input = chain.input();
    let eval = &ctx.tensors.eval;
    let inputs = match input {
        InputKind::FullFrame => &eval.frames,
        InputKind::Crop(region) => &eval.crops[&region],
    };
    let predictions = predict_block(model, inputs, input.size())?;
    let layout = &ctx.tensors.layout;
    let mut rows = Vec::new();
    for region in chain.regions() {
        let mean_l1 = region_l1_packed(model, &predictions, &eval.targets, layout, region)
            .expect("model covers its regions");
        let accuracy = region_accuracy_packed(model, &predictions, &eval.targets, layout, region)
            .expect("model covers its regions");
        let baseline_l1 =
            ctx.baseline
                .region_l1(ctx.tensors, Split::Eval, layout, region);
        rows.push(AblationRow {
            region,
            loss: chain.loss_mode(),
            input: chain.input_mode(),
            mode,
            run_id: chain.run_id(mode),
            outcome: CellOutcome::Ok(CellMetrics {
                mean_l1,
                accuracy,
                inaccuracy_vs_baseline: inaccuracy_vs_baseline(mean_l1, baseline_l1),
            }),
        });
    }
    Ok(rows)
}

fn failed_rows(chain: Chain, mode: TrainMode, error: &str) -> Vec<AblationRow> {
    chain
        .regions()
        .into_iter()
        .map(|region| AblationRow {
            region,
            loss: chain.loss_mode(),
            input: chain.input_mode(),
            mode,
            run_id: chain.run_id(mode),
            outcome: CellOutcome::Failed { error: error.to_string() },
        })
        .collect()
}

/// Train the six populated cells per region with the one shared training
/// setup; cell failures are recorded and the run continues.
pub fn run_ablation(
    tensors: &DatasetTensors,
    cfg: &HarnessConfig,
    out: &OutputLayout,
) -> Result<AblationSection> {
    out.ensure_dirs()?;
    let baseline = baseline(tensors, Split::Eval)?;
    let ctx = ChainContext { tensors, cfg, out, baseline: &baseline };

    let mut rows: Vec<AblationRow> = Vec::new();
    let mut checkpoints = BTreeMap::new();
    for chain in Chain::all() {
        let fe_id = chain.run_id(TrainMode::FrozenTrunk);
        let ft_id = chain.run_id(TrainMode::FullTraining);
        match train_stage(&ctx, chain, TrainMode::FrozenTrunk, None) {
            Ok(fe_model) => {
                checkpoints.insert(
                    fe_id.clone(),
                    format!("models/{fe_id}.ckpt"),
                );
                match eval_cells(&ctx, chain, TrainMode::FrozenTrunk, &fe_model) {
                    Ok(r) => rows.extend(r),
                    Err(e) => rows.extend(failed_rows(chain, TrainMode::FrozenTrunk, &e.to_string())),
                }
                // Fine-tuning continues from the frozen-trunk checkpoint.
                match train_stage(&ctx, chain, TrainMode::FullTraining, Some(&fe_id)) {
                    Ok(ft_model) => {
                        checkpoints.insert(ft_id.clone(), format!("models/{ft_id}.ckpt"));
                        match eval_cells(&ctx, chain, TrainMode::FullTraining, &ft_model) {
                            Ok(r) => rows.extend(r),
                            Err(e) => rows.extend(failed_rows(
                                chain,
                                TrainMode::FullTraining,
                                &e.to_string(),
                            )),
                        }
                    }
                    Err(e) => {
                        log::warn!("ablation cell {ft_id} failed: {e}");
                        rows.extend(failed_rows(chain, TrainMode::FullTraining, &e.to_string()));
                    }
                }
            }
            Err(e) => {
                log::warn!("ablation chain {} failed: {e}", chain.name());
                rows.extend(failed_rows(chain, TrainMode::FrozenTrunk, &e.to_string()));
                rows.extend(failed_rows(chain, TrainMode::FullTraining, &e.to_string()));
            }
        }
    }

    rows.sort_by_key(|r| (r.region, r.loss, r.input, r.mode != TrainMode::FrozenTrunk));
    let baseline_l1 = Region::ALL
        .iter()
        .map(|r| {
            (
                *r,
                baseline.region_l1(tensors, Split::Eval, &tensors.layout, *r),
            )
        })
        .collect();
    Ok(AblationSection { rows, baseline_l1, checkpoints })
}

impl AblationSection {
    /// Look up one cell's outcome.
    pub fn cell(
        &self,
        region: Region,
        loss: LossMode,
        input: InputMode,
        mode: TrainMode,
    ) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.region == region && r.loss == loss && r.input == input && r.mode == mode)
    }
}
