use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::harness::data::Pair;
use crate::metrics::{psnr, ssim, MetricRow};
use crate::model::{count_params, predict, NestedModel};

/// Model tag of the rows scoring the raw blurred input.
pub const INPUT_TAG: &str = "input";
pub const PREDICTION_TAG: &str = "prediction";

#[derive(Default)]
struct Acc {
    psnr: f64,
    ssim: f64,
    n: usize,
}

/// Per-tag mean PSNR/SSIM of the predictions and of the raw inputs over `test`.
pub fn evaluate_model(model: &NestedModel<f32>, test: &[Pair]) -> Result<Vec<MetricRow>> {
    if test.is_empty() {
        return Err(Error::Config("test split is empty".into()));
    }
    let mut groups: BTreeMap<(String, &str), Acc> = BTreeMap::new();
    for pair in test {
        let pred = predict(model, &pair.input)?;
        for (which, img) in [(INPUT_TAG, &pair.input), (PREDICTION_TAG, &pred)] {
            let acc = groups.entry((pair.tag.clone(), which)).or_default();
            acc.psnr += psnr(img, &pair.target, 1.0)?;
            acc.ssim += ssim(img, &pair.target, 1.0)?;
            acc.n += 1;
        }
    }
    let cfg = model.config;
    let params = count_params(model);
    Ok(groups
        .into_iter()
        .map(|((tag, which), acc)| MetricRow {
            tag,
            model: which.to_string(),
            levels: cfg.levels,
            mode: cfg.fusion_mode.to_string(),
            psnr_db: acc.psnr / acc.n as f64,
            ssim: acc.ssim / acc.n as f64,
            params: if which == PREDICTION_TAG { params } else { 0 },
        })
        .collect())
}
