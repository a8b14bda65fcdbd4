use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_checkpoint_expecting, save_checkpoint, CheckpointMeta};
use crate::harness::config::RunConfig;
use crate::harness::data::{load_dataset, Dataset, Pair};
use crate::metrics::psnr;
use crate::model::{predict, NestedModel, Trainer};
use crate::rng::{derive_seed, rng_for};
use crate::tensor::Tensor4;

pub const LATEST: &str = "latest.ckpt";
pub const BEST: &str = "best.ckpt";
pub const DIAGNOSTIC: &str = "diagnostic.ckpt";
pub const LOSS_LOG: &str = "loss_log.csv";
const LOG_HEADER: &str = "epoch,train_loss,val_psnr";

/// Stream ids for [`derive_seed`], so model init and shuffling never share randomness.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

pub fn model_seed(run_seed: u64) -> u64 {
    derive_seed(run_seed, STREAM_INIT)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_psnr: f64,
}

fn fmt_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

pub fn format_log(rows: &[LogRow]) -> String {
    let mut s = format!("{LOG_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.epoch, fmt_float(r.train_loss), fmt_float(r.val_psnr));
    }
    s
}

pub fn parse_log(text: &str) -> Result<Vec<LogRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::format(0, "loss log header missing"));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::format(0, format!("bad loss log row {l:?}"));
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(LogRow {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                val_psnr: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub latest: PathBuf,
    pub best: PathBuf,
    pub log: Vec<LogRow>,
    pub model: NestedModel<f32>,
}

/// Mean PSNR of predictions against targets; `NaN` for an empty set.
pub fn mean_psnr(model: &NestedModel<f32>, pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for p in pairs {
        total += psnr(&predict(model, &p.input)?, &p.target, 1.0)?;
    }
    Ok(total / pairs.len() as f64)
}

fn stack(pairs: &[Pair], idx: &[usize]) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
    let xs: Vec<&Tensor4<f32>> = idx.iter().map(|&i| &pairs[i].input).collect();
    let ys: Vec<&Tensor4<f32>> = idx.iter().map(|&i| &pairs[i].target).collect();
    Ok((Tensor4::stack(&xs)?, Tensor4::stack(&ys)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Trains on the manifest named in `cfg`, writing checkpoints and the loss log to
/// `cfg.data.out_dir`. With `resume`, continues after the checkpoint's epoch.
pub fn run_training(cfg: &RunConfig, resume: Option<&Path>, on_epoch: &mut dyn FnMut(&LogRow)) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let data = load_dataset(&cfg.data.manifest, cfg.data.train_count)?;
    run_training_on(cfg, &data, resume, on_epoch)
}

pub fn run_training_on(
    cfg: &RunConfig,
    data: &Dataset,
    resume: Option<&Path>,
    on_epoch: &mut dyn FnMut(&LogRow),
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let out = &cfg.data.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let run = cfg.model_run();
    let seed = cfg.training.seed;

    let (mut trainer, mut best, mut log, first_epoch) = match resume {
        Some(path) => {
            let ck = load_checkpoint_expecting(path, &cfg.model)?;
            let c = ck.meta.config;
            if c.optimizer != cfg.optimizer
                || c.training.seed != seed
                || c.training.batch_size != cfg.training.batch_size
            {
                return Err(Error::Config(format!(
                    "{} was trained with different optimizer, seed or batch settings",
                    path.display()
                )));
            }
            let adam = ck
                .adam
                .ok_or_else(|| Error::Contract(format!("{} has no optimizer state to resume", path.display())))?;
            let log_path = out.join(LOSS_LOG);
            let mut log = match fs::read_to_string(&log_path) {
                Ok(text) => parse_log(&text)?,
                Err(_) => Vec::new(),
            };
            log.retain(|r| r.epoch <= ck.meta.epoch);
            let trainer = Trainer { model: ck.model, adam };
            (trainer, ck.meta.best_val_psnr, log, ck.meta.epoch + 1)
        }
        None => {
            let model = NestedModel::<f32>::build(cfg.model, model_seed(seed))?;
            (Trainer::new(model, cfg.optimizer), f64::NEG_INFINITY, Vec::new(), 1)
        }
    };

    let latest = out.join(LATEST);
    let best_path = out.join(BEST);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in first_epoch..=cfg.training.epochs as u32 {
        order.sort_unstable();
        order.shuffle(&mut rng_for(derive_seed(derive_seed(seed, STREAM_SHUFFLE), epoch as u64)));
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.training.batch_size) {
            let (x, y) = stack(&data.train, idx)?;
            match trainer.train_step(&x, &y) {
                Ok(loss) => total += loss,
                Err(Error::Numeric(msg)) => {
                    let diag = out.join(DIAGNOSTIC);
                    let meta = CheckpointMeta {
                        config: run,
                        epoch: epoch - 1,
                        best_val_psnr: best,
                    };
                    save_checkpoint(&trainer.model, Some(&trainer.adam), &meta, &diag)?;
                    return Err(Error::Numeric(format!(
                        "epoch {epoch}, batch {batches}: {msg}; diagnostic checkpoint written to {}",
                        diag.display()
                    )));
                }
                Err(e) => return Err(e),
            }
            batches += 1;
        }
        let val_psnr = mean_psnr(&trainer.model, &data.test)?;
        let row = LogRow {
            epoch,
            train_loss: total / batches as f64,
            val_psnr,
        };
        // without a usable validation score every epoch counts as the best so far
        let improved = val_psnr > best || best == f64::NEG_INFINITY;
        if val_psnr > best {
            best = val_psnr;
        }
        let meta = CheckpointMeta {
            config: run,
            epoch,
            best_val_psnr: best,
        };
        save_checkpoint(&trainer.model, Some(&trainer.adam), &meta, &latest)?;
        if improved {
            save_checkpoint(&trainer.model, Some(&trainer.adam), &meta, &best_path)?;
        }
        log.push(row);
        write_text(&out.join(LOSS_LOG), &format_log(&log))?;
        on_epoch(&row);
    }
    Ok(TrainingOutcome {
        latest,
        best: best_path,
        log,
        model: trainer.model,
    })
}
