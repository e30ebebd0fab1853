use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hcl_core::data::{generate_synthetic, write_corpus, Dataset};
use hcl_core::evalbench::{dim_sweep_bank, encode_views, iou_binned_accuracy, run_protocol, Features, SweepMode};
use hcl_core::pipeline::{
    export_embeddings, train_stage1, train_stage2, write_jsonl, Branch, Checkpoint, TrainConfig,
    TrainOutcome,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "hcl", version, about = "Two-branch contrastive pre-training and offline analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Clone)]
struct WithCheckpoint {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SemanticOnly,
    HalfHalf,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    Semantic,
    Spatial,
    Concat,
}

#[derive(Subcommand)]
enum Command {
    /// Semantic-only warm-up stage.
    PretrainStage1(Common),
    /// Two-branch stage from a stage-1 checkpoint.
    PretrainStage2(WithCheckpoint),
    /// Top-1 retrieval accuracy against a rolling gallery.
    EvalContrastive {
        #[command(flatten)]
        args: WithCheckpoint,
        /// Compress to this length with PCA (semantic-only or half-half).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, value_enum, default_value = "half-half")]
        mode: ModeArg,
    },
    /// Retrieval accuracy binned by view IoU, crop and rescale only.
    AnalyzeIou(WithCheckpoint),
    /// Accuracy against PCA length for semantic-only and half-half features.
    DimSweep {
        #[command(flatten)]
        args: WithCheckpoint,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
    },
    /// Writes one embedding per record in the binary embedding format.
    ExportEmbeddings {
        #[command(flatten)]
        args: WithCheckpoint,
        #[arg(long, value_enum, default_value = "concat")]
        branch: BranchArg,
    },
    /// Writes the synthetic dataset as a raw corpus file.
    GenData(Common),
}

fn load_config(c: &Common) -> Result<TrainConfig> {
    let mut cfg = match &c.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    cfg.apply_overrides(&c.set)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    fs::write(c.out.join("config.txt"), cfg.to_string())?;
    Ok(cfg)
}

/// Training split and evaluation split (the holdout when configured).
fn load_data(cfg: &TrainConfig) -> Result<(Dataset, Dataset)> {
    let full = cfg.dataset_spec()?.load()?;
    let (train, hold) = full.split(cfg.data.holdout)?;
    let eval = hold.unwrap_or_else(|| train.clone());
    Ok((train, eval))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn train(
    c: &Common,
    cfg: &TrainConfig,
    stage: u8,
    run: impl FnOnce(&mut dyn FnMut(&hcl_core::pipeline::MetricsRow) -> hcl_core::Result<()>) -> hcl_core::Result<TrainOutcome>,
) -> Result<()> {
    let metrics_path = c.out.join(format!("metrics_stage{stage}.jsonl"));
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
    let outcome = run(&mut |row| write_jsonl(&mut metrics, row))?;
    metrics.flush()?;
    let ckpt_path = c.out.join(format!("stage{stage}.ckpt"));
    outcome.checkpoint().save(&ckpt_path)?;
    let last = outcome.rows.last();
    write_json(
        &c.out.join(format!("run_stage{stage}.json")),
        &json!({
            "stage": stage,
            "seed": cfg.seed,
            "steps": outcome.rows.len(),
            "final_step": outcome.state.step,
            "final_loss": last.map(|r| r.loss),
            "optimizer_state": if stage == 1 { "fresh" } else { "reset at stage boundary" },
            "queue": { "capacity": cfg.queue_capacity, "dim": outcome.state.queue.dim() },
            "checkpoint": ckpt_path,
            "config": cfg,
        }),
    )?;
    println!(
        "stage {stage}: {} steps, final loss {:.4}, checkpoint {}",
        outcome.rows.len(),
        last.map_or(f64::NAN, |r| r.loss),
        ckpt_path.display()
    );
    Ok(())
}

fn load_query(a: &WithCheckpoint, cfg: &TrainConfig) -> Result<hcl_core::models::Encoder<f32>> {
    let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    Ok(ck.encoders(cfg)?.query)
}

fn modes(m: ModeArg) -> Vec<SweepMode> {
    match m {
        ModeArg::SemanticOnly => vec![SweepMode::SemanticOnly],
        ModeArg::HalfHalf => vec![SweepMode::HalfHalf],
        ModeArg::Both => vec![SweepMode::SemanticOnly, SweepMode::HalfHalf],
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PretrainStage1(c) => {
            let cfg = load_config(&c)?;
            let (train_set, _) = load_data(&cfg)?;
            train(&c, &cfg, 1, |sink| train_stage1(&cfg, &train_set, sink))
        }
        Command::PretrainStage2(a) => {
            let cfg = load_config(&a.common)?;
            let (train_set, _) = load_data(&cfg)?;
            let ck = Checkpoint::load(&a.checkpoint)
                .with_context(|| format!("loading {}", a.checkpoint.display()))?;
            train(&a.common, &cfg, 2, |sink| train_stage2(&cfg, &ck, &train_set, sink))
        }
        Command::EvalContrastive { args, dim, mode } => {
            let cfg = load_config(&args.common)?;
            let (_, eval) = load_data(&cfg)?;
            let enc = load_query(&args, &cfg)?;
            let features = match (dim, mode) {
                (None, _) => Features::Contrastive,
                (Some(d), ModeArg::SemanticOnly) => Features::SemanticPca(d),
                (Some(d), ModeArg::HalfHalf) => Features::HalfHalfPca(d),
                (Some(_), ModeArg::Both) => bail!("--mode both only applies to dim-sweep"),
            };
            let bank = encode_views(&enc, &eval, cfg.eval.gallery, &cfg.aug_config(), cfg.seed)?;
            let out = run_protocol(&bank, features, cfg.eval.renormalize)?;
            let report = json!({
                "seed": cfg.seed,
                "gallery_capacity": cfg.eval.gallery,
                "features": features,
                "renormalize": cfg.eval.renormalize,
                "aug": cfg.aug_config(),
                "queries": out.hits.len(),
                "hits": out.hits.iter().filter(|&&h| h).count(),
                "accuracy": out.accuracy(),
            });
            write_json(&args.common.out.join("eval_contrastive.json"), &report)?;
            println!("top-1 accuracy {:.4} over {} queries", out.accuracy(), out.hits.len());
            Ok(())
        }
        Command::AnalyzeIou(a) => {
            let cfg = load_config(&a.common)?;
            let (_, eval) = load_data(&cfg)?;
            let enc = load_query(&a, &cfg)?;
            let r = iou_binned_accuracy(&enc, &eval, cfg.eval.gallery, cfg.eval.bins, cfg.model.backbone.input_size, cfg.seed)?;
            write_json(&a.common.out.join("iou_report.json"), &r)?;
            println!("spearman {:?}, overall {:.4}", r.spearman, r.overall_accuracy);
            Ok(())
        }
        Command::DimSweep { args, mode } => {
            let cfg = load_config(&args.common)?;
            let (_, eval) = load_data(&cfg)?;
            let enc = load_query(&args, &cfg)?;
            let bank = encode_views(&enc, &eval, cfg.eval.gallery, &cfg.aug_config(), cfg.seed)?;
            let mut reports = Vec::new();
            for m in modes(mode) {
                let r = dim_sweep_bank(&bank, &cfg.eval.dims, m, cfg.eval.renormalize)?;
                for row in &r.rows {
                    println!(
                        "{m:?} dim {} ({}+{}): {:.4}",
                        row.total_dim, row.semantic_dim, row.spatial_dim, row.accuracy
                    );
                }
                reports.push(r);
            }
            write_json(&args.common.out.join("dim_sweep.json"), &reports)?;
            Ok(())
        }
        Command::ExportEmbeddings { args, branch } => {
            let cfg = load_config(&args.common)?;
            let full = cfg.dataset_spec()?.load()?;
            let enc = load_query(&args, &cfg)?;
            let branch = match branch {
                BranchArg::Semantic => Branch::Semantic,
                BranchArg::Spatial => Branch::Spatial,
                BranchArg::Concat => Branch::Concat,
            };
            let path = args.common.out.join("embeddings.hemb");
            let t = export_embeddings(&enc, &full, &path, branch)?;
            println!("{} embeddings ({}+{}) -> {}", t.ids.len(), t.d_sem, t.d_spa, path.display());
            Ok(())
        }
        Command::GenData(c) => {
            let cfg = load_config(&c)?;
            let ds = generate_synthetic(cfg.data.seed, cfg.data.n, cfg.data.size)?;
            let path = c.out.join("corpus.bin");
            write_corpus(&path, &ds)?;
            println!("{} images of {}px -> {}", ds.len(), ds.size(), path.display());
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
