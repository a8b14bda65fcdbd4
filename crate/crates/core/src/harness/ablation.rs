use std::path::Path;

use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::harness::data::Dataset;
use crate::harness::eval::{evaluate_model, PREDICTION_TAG};
use crate::harness::train::run_training_on;
use crate::metrics::MetricRow;
use crate::model::{count_params, FusionMode, NestedConfig, NestedModel};
use crate::rng::derive_seed;

/// Levels 1 to 4 in both fusion modes.
pub fn full_grid() -> Vec<(usize, FusionMode)> {
    (1..=4)
        .flat_map(|n| [FusionMode::Residual, FusionMode::Concat].map(|m| (n, m)))
        .collect()
}

/// Seed of a grid cell. It depends on the level count only, so the two single-level
/// cells (where the mode has no effect) train identically.
pub fn cell_seed(master: u64, levels: usize) -> u64 {
    derive_seed(master, levels as u64)
}

pub fn cell_config(base: &RunConfig, levels: usize, mode: FusionMode, out: &Path) -> RunConfig {
    let mut cfg = base.clone();
    cfg.model = NestedConfig {
        levels,
        fusion_mode: mode,
        ..base.model
    };
    cfg.training.seed = cell_seed(base.training.seed, levels);
    cfg.data.out_dir = out.join(format!("n{levels}_{mode}"));
    cfg
}

/// Called after each cell with its levels, mode and outcome.
pub type CellCallback = dyn FnMut(usize, FusionMode, &Result<Vec<MetricRow>>);

/// Trains and evaluates every cell. Prediction rows of all cells are returned; a cell that
/// fails gets one row with model `failed`, NaN metrics and the fresh-model parameter count.
pub fn run_ablation(
    base: &RunConfig,
    data: &Dataset,
    grid: &[(usize, FusionMode)],
    out: &Path,
    on_cell: &mut CellCallback,
) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for &(levels, mode) in grid {
        let cfg = cell_config(base, levels, mode, out);
        let result = run_training_on(&cfg, data, None, &mut |_| {})
            .and_then(|o| evaluate_model(&o.model, &data.test))
            .map(|r| r.into_iter().filter(|row| row.model == PREDICTION_TAG).collect::<Vec<_>>());
        on_cell(levels, mode, &result);
        match result {
            Ok(r) => rows.extend(r),
            Err(_) => rows.push(MetricRow {
                tag: "-".into(),
                model: "failed".into(),
                levels,
                mode: mode.to_string(),
                psnr_db: f64::NAN,
                ssim: f64::NAN,
                params: NestedModel::<f32>::build(cfg.model, 0).map_or(0, |m| count_params(&m)),
            }),
        }
    }
    rows
}
