use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nudc::harness::{
    evaluate_model, export_triptych, full_grid, load_checkpoint, load_checkpoint_expecting, load_dataset,
    run_ablation, run_training, Profile, RunConfig,
};
use nudc::io::read_img16;
use nudc::metrics::write_report;
use nudc::sim::{gen_dataset, MANIFEST_NAME};
use nudc::{Error, FusionMode, Result, Tensor4};

#[derive(Parser)]
#[command(name = "nudc", version, about = "Nested multi-level U-Net for microscopy defocus deblurring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; keys it sets override the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to start from: `full` (full-scale protocol) or `desk` (CPU-sized).
    #[arg(long, default_value = "full")]
    profile: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (a file path for `triptych`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sharp/blurred dataset and its manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
        /// Comma-separated defocus distances.
        #[arg(long, value_delimiter = ',')]
        z: Option<Vec<f64>>,
    },
    /// Train a model on a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint written by an earlier run of the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split; writes metrics.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train and score every (levels, fusion mode) cell; writes ablation.csv.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
    },
    /// Write an input | prediction | ground-truth PNG for one pair.
    Triptych {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let base = RunConfig::profile(common.profile.parse::<Profile>()?);
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path, &base)?,
        None => base,
    };
    if let Some(seed) = common.seed {
        cfg.training.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.data.out_dir = out.clone();
    }
    if common.deterministic {
        cfg.training.deterministic = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(common: &Common, what: &str) -> Result<PathBuf> {
    common
        .out
        .clone()
        .ok_or_else(|| Error::Config(format!("{what} needs --out")))
}

fn synth(common: &Common, count: Option<usize>, z: Option<Vec<f64>>) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(c) = count {
        cfg.synth.count = c;
    }
    if let Some(z) = z {
        cfg.synth.z_list = z;
    }
    let out = require_out(common, "synth")?;
    let m = gen_dataset(&cfg.synth, &out, cfg.training.seed)?;
    eprintln!("wrote {} pairs to {}", m.records.len(), out.join(MANIFEST_NAME).display());
    Ok(())
}

fn train(common: &Common, manifest: Option<PathBuf>, epochs: Option<usize>, resume: Option<PathBuf>) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(m) = manifest {
        cfg.data.manifest = m;
    }
    if let Some(e) = epochs {
        cfg.training.epochs = e;
    }
    cfg.validate()?;
    let total = cfg.training.epochs;
    let outcome = run_training(&cfg, resume.as_deref(), &mut |row| {
        eprintln!(
            "epoch {}/{total}  train_loss {:.6}  val_psnr {:.3} dB",
            row.epoch, row.train_loss, row.val_psnr
        );
    })?;
    eprintln!("checkpoints: {} and {}", outcome.latest.display(), outcome.best.display());
    Ok(())
}

fn eval(common: &Common, checkpoint: &Path, manifest: Option<PathBuf>) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(m) = manifest {
        cfg.data.manifest = m;
    }
    let ck = match common.config {
        Some(_) => load_checkpoint_expecting(checkpoint, &cfg.model)?,
        None => load_checkpoint(checkpoint)?,
    };
    let data = load_dataset(&cfg.data.manifest, cfg.data.train_count)?;
    let rows = evaluate_model(&ck.model, &data.test)?;
    let out = require_out(common, "eval")?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let path = out.join("metrics.csv");
    write_report(&rows, &path)?;
    for r in &rows {
        eprintln!("{:<8} {:<10} psnr {:>8.3} dB  ssim {:.4}", r.tag, r.model, r.psnr_db, r.ssim);
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn ablate(
    common: &Common,
    manifest: Option<PathBuf>,
    levels: Option<Vec<usize>>,
    modes: Option<Vec<String>>,
) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(m) = manifest {
        cfg.data.manifest = m;
    }
    let grid = match (levels, modes) {
        (None, None) => full_grid(),
        (levels, modes) => {
            let levels = levels.unwrap_or_else(|| (1..=4).collect());
            let modes = match modes {
                Some(m) => m.iter().map(|s| s.parse()).collect::<Result<Vec<FusionMode>>>()?,
                None => vec![FusionMode::Residual, FusionMode::Concat],
            };
            levels.iter().flat_map(|&n| modes.iter().map(move |&m| (n, m))).collect()
        }
    };
    if grid.is_empty() {
        return Err(Error::Config("ablation grid is empty".into()));
    }
    let out = require_out(common, "ablate")?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let data = load_dataset(&cfg.data.manifest, cfg.data.train_count)?;
    let rows = run_ablation(&cfg, &data, &grid, &out, &mut |n, mode, result| match result {
        Ok(r) => {
            for row in r {
                eprintln!("N={n} {mode:<8} {:<8} psnr {:.3} dB  params {}", row.tag, row.psnr_db, row.params);
            }
        }
        Err(e) => eprintln!("N={n} {mode:<8} failed: {e}"),
    });
    let path = out.join("ablation.csv");
    write_report(&rows, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn triptych(common: &Common, checkpoint: &Path, input: &Path, target: &Path) -> Result<()> {
    let out = require_out(common, "triptych")?;
    let ck = load_checkpoint(checkpoint)?;
    let x: Tensor4<f32> = read_img16(input)?;
    let y: Tensor4<f32> = read_img16(target)?;
    export_triptych(&ck.model, &x, &y, &out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, count, z } => synth(&common, count, z),
        Command::Train {
            common,
            manifest,
            epochs,
            resume,
        } => train(&common, manifest, epochs, resume),
        Command::Eval {
            common,
            checkpoint,
            manifest,
        } => eval(&common, &checkpoint, manifest),
        Command::Ablate {
            common,
            manifest,
            levels,
            modes,
        } => ablate(&common, manifest, levels, modes),
        Command::Triptych {
            common,
            checkpoint,
            input,
            target,
        } => triptych(&common, &checkpoint, &input, &target),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
