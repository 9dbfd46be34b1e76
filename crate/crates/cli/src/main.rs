use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcfpr_core::pipeline::{self, BatchSummary};
use pcfpr_core::{FeatureSet, FrocReport, PipelineConfig, SamplerMode};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "pcfpr", version, about = "Point-cloud false-positive reduction for CT nodule candidates")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Enable training-time augmentation.
    #[arg(long, global = true, overrides_with = "no_augment")]
    augment: bool,
    /// Disable training-time augmentation.
    #[arg(long, global = true)]
    no_augment: bool,
    #[arg(long, global = true, value_parser = parse_sampler)]
    sampler: Option<SamplerMode>,
    #[arg(long, global = true, value_parser = parse_features)]
    features: Option<FeatureSet>,
}

fn parse_sampler(s: &str) -> Result<SamplerMode, String> {
    s.parse().map_err(|e: pcfpr_core::Error| e.to_string())
}

fn parse_features(s: &str) -> Result<FeatureSet, String> {
    s.parse().map_err(|e: pcfpr_core::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate synthetic phantom scans.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        scans: usize,
    },
    /// Run the detector stub and write labeled train/test manifests.
    Dataset {
        /// Directory produced by `gen`.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Sample one fixed-size cloud per manifest record.
    Sample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Points per cloud.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Image-level augmentation of NVOL volumes.
    Augment {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train a classifier on a sampled cloud directory.
    Train {
        #[arg(long)]
        clouds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "val_truths")]
        val_clouds: Option<PathBuf>,
        #[arg(long, requires = "val_clouds")]
        val_truths: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Add edge-convolution layers in front of the point MLP.
        #[arg(long)]
        edgeconv: bool,
    },
    /// Score clouds and write a FROC report.
    Eval {
        #[arg(long)]
        clouds: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        truths: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// FROC table row from a labeled-candidate CSV.
    Froc {
        input: PathBuf,
        #[arg(long)]
        n_truths: usize,
        #[arg(long)]
        n_scans: Option<usize>,
        /// Also print the column header.
        #[arg(long)]
        header: bool,
    },
    /// Convert NPCD clouds to coloured PLY files.
    ExportPly {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn load_config(g: &Global) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if g.augment {
        cfg.augment = true;
    }
    if g.no_augment {
        cfg.augment = false;
    }
    if let Some(s) = g.sampler {
        cfg.sampler = s;
    }
    if let Some(f) = g.features {
        cfg.features = f;
    }
    Ok(cfg)
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

/// Batch commands succeed only when every item did.
fn batch_result(summary: &BatchSummary) -> anyhow::Result<()> {
    print_json(summary)?;
    if summary.failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow::anyhow!(
            "{} of {} items failed",
            summary.failed.len(),
            summary.failed.len() + summary.processed
        ))
    }
}

fn print_froc(r: &FrocReport, header: bool) {
    if header {
        println!("{}", FrocReport::table_header());
    }
    println!("{}", r.table_row());
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.cmd {
        Cmd::Gen { out, scans } => {
            let idx = pipeline::cmd_gen(&out, scans, &cfg)?;
            print_json(&json!({ "scans": idx.scans.len(), "out": out }))
        }
        Cmd::Dataset { dir, folds } => {
            if let Some(f) = folds {
                cfg.dataset.folds = f;
            }
            print_json(&pipeline::cmd_dataset(&dir, &cfg)?)
        }
        Cmd::Sample { manifest, out, points } => {
            if let Some(m) = points {
                cfg.sampling.m = m;
            }
            let idx = pipeline::cmd_sample(&manifest, &out, &cfg)?;
            batch_result(&idx.summary)
        }
        Cmd::Augment { out, inputs } => batch_result(&pipeline::cmd_augment(&inputs, &out, &cfg)?),
        Cmd::Train {
            clouds,
            out,
            val_clouds,
            val_truths,
            epochs,
            edgeconv,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if edgeconv {
                cfg.train.use_edgeconv = true;
            }
            let val = val_clouds.as_deref().zip(val_truths.as_deref());
            print_json(&pipeline::cmd_train(&clouds, &out, val, &cfg)?)
        }
        Cmd::Eval {
            clouds,
            weights,
            truths,
            out,
        } => {
            let r = pipeline::cmd_eval(&clouds, &weights, &truths, &out, &cfg)?;
            print_froc(&r, true);
            Ok(())
        }
        Cmd::Froc {
            input,
            n_truths,
            n_scans,
            header,
        } => {
            let r = pipeline::cmd_froc(&input, n_scans, n_truths)?;
            print_froc(&r, header);
            Ok(())
        }
        Cmd::ExportPly { out, inputs } => {
            batch_result(&pipeline::cmd_export_ply(&inputs, &out, cfg.jobs)?)
        }
    }
}

fn error_json(e: &anyhow::Error) -> serde_json::Value {
    let kind = e
        .downcast_ref::<pcfpr_core::Error>()
        .map_or("Error", |c| c.kind());
    json!({ "error": kind, "message": format!("{e:#}") })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
