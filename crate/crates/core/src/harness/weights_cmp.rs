//! Fitted ensemble weights against the constant-weight baselines 0.0
//! (aggregate only), 0.5 (equal mix), and 1.0 (locals only).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::{blend_raw, combine, fit_weights, EnsembleWeights, PredictionTable, WeightMode};
use crate::error::Result;
use crate::facegen::TargetLayout;
use crate::harness::metrics::{accuracy_full, continuous_l1_full};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsRow {
    pub label: String,
    /// Fitting objective on the fitting split: mean squared error over the
    /// shared dimensions.
    pub train_sq_err: f64,
    pub eval_mean_l1: f64,
    pub eval_accuracy: f64,
    /// fitted minus this row, per metric; zero for the fitted row itself.
    pub delta_train_sq_err: f64,
    pub delta_eval_mean_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSection {
    pub rows: Vec<WeightsRow>,
}

/// Mean squared error over SharedFit dims, the quantity the fit minimizes.
fn shared_sq_err(table: &PredictionTable, weights: &EnsembleWeights) -> Result<f64> {
    let shared: Vec<usize> = weights
        .dims
        .iter()
        .enumerate()
        .filter(|(_, d)| d.mode == WeightMode::SharedFit)
        .map(|(i, _)| i)
        .collect();
    let mut total = 0.0;
    for row in &table.rows {
        let blended = blend_raw(&row.aggregate, &row.locals, weights)?;
        for d in &shared {
            total += (blended[*d] - row.target[*d]).powi(2);
        }
    }
    Ok(total / (table.rows.len() * shared.len()) as f64)
}

fn eval_metrics(table: &PredictionTable, weights: &EnsembleWeights) -> Result<(f64, f64)> {
    let blended: Result<Vec<Vec<f64>>> = table
        .rows
        .iter()
        .map(|row| combine(&row.aggregate, &row.locals, weights))
        .collect();
    let blended = blended?;
    let targets: Vec<Vec<f64>> = table.rows.iter().map(|r| r.target.clone()).collect();
    Ok((
        continuous_l1_full(&blended, &targets, &table.layout),
        accuracy_full(&blended, &targets, &table.layout),
    ))
}

/// Blending note: the fitted squared error uses raw per-dimension blends
/// (the Eq-style objective); eval metrics run the full combine with one-hot
/// renormalization, i.e. what inference actually produces.
pub fn compare_weights(
    train_table: &PredictionTable,
    eval_table: &PredictionTable,
    _layout: &TargetLayout,
) -> Result<(WeightsSection, EnsembleWeights)> {
    let fitted = fit_weights(train_table)?;
    let mut rows = Vec::new();
    let fitted_train = shared_sq_err(train_table, &fitted)?;
    let (fitted_l1, fitted_acc) = eval_metrics(eval_table, &fitted)?;
    for constant in [0.0, 0.5, 1.0] {
        let weights = EnsembleWeights::constant(&fitted, constant);
        let train_sq = shared_sq_err(train_table, &weights)?;
        let (eval_l1, eval_acc) = eval_metrics(eval_table, &weights)?;
        rows.push(WeightsRow {
            label: format!("constant_{constant:.1}"),
            train_sq_err: train_sq,
            eval_mean_l1: eval_l1,
            eval_accuracy: eval_acc,
            delta_train_sq_err: fitted_train - train_sq,
            delta_eval_mean_l1: fitted_l1 - eval_l1,
        });
    }
    rows.push(WeightsRow {
        label: "fitted".to_string(),
        train_sq_err: fitted_train,
        eval_mean_l1: fitted_l1,
        eval_accuracy: fitted_acc,
        delta_train_sq_err: 0.0,
        delta_eval_mean_l1: 0.0,
    });
    Ok((WeightsSection { rows }, fitted))
}

impl WeightsSection {
    pub fn row(&self, label: &str) -> Option<&WeightsRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn as_map(&self) -> BTreeMap<&str, &WeightsRow> {
        self.rows.iter().map(|r| (r.label.as_str(), r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::ensemble::PredictionRow;
    use crate::facegen::{default_schema, Region, SlotKind};

    /// Synthetic table: locals good on their dims, aggregate mediocre.
    fn synthetic_table(seed: u64, rows: usize) -> PredictionTable {
        let layout = TargetLayout::from_schema(&default_schema());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..rows)
            .map(|i| {
                let mut target = vec![0.0; layout.total_len()];
                for g in &layout.groups {
                    match g.kind {
                        SlotKind::Continuous => {
                            for d in g.range() {
                                target[d] = rng.random_range(-1.0..1.0);
                            }
                        }
                        SlotKind::OneHot => {
                            let k = g.start + rng.random_range(0..g.len);
                            target[k] = 1.0;
                        }
                    }
                }
                let aggregate: Vec<f64> = target
                    .iter()
                    .map(|t| 0.5 * t + 0.2 * rng.random_range(-1.0..1.0))
                    .collect();
                let mut locals = BTreeMap::new();
                for region in Region::ALL {
                    let mut v = Vec::new();
                    for d in layout.continuous_range(region) {
                        v.push(target[d] + 0.05 * rng.random_range(-1.0..1.0));
                    }
                    for d in layout.onehot_range(region) {
                        v.push((target[d] + 0.1 * rng.random_range(0.0..1.0)).max(0.0));
                    }
                    let cont_len = layout.continuous_range(region).len();
                    let sum: f64 = v[cont_len..].iter().sum();
                    for p in &mut v[cont_len..] {
                        *p /= sum;
                    }
                    locals.insert(region, v);
                }
                PredictionRow { id: format!("{i}"), aggregate, locals, target }
            })
            .collect();
        PredictionTable { layout, rows }
    }

    #[test]
    fn fitted_dominates_constants_on_fitting_split() {
        let train = synthetic_table(1, 50);
        let eval = synthetic_table(2, 30);
        let layout = train.layout.clone();
        let (section, _) = compare_weights(&train, &eval, &layout).unwrap();
        assert_eq!(section.rows.len(), 4);
        let fitted = section.row("fitted").unwrap().train_sq_err;
        for constant in ["constant_0.0", "constant_0.5", "constant_1.0"] {
            let row = section.row(constant).unwrap();
            assert!(
                fitted <= row.train_sq_err,
                "fitted {fitted} vs {constant} {}",
                row.train_sq_err
            );
            assert!(row.delta_train_sq_err <= 0.0);
        }
    }
}
