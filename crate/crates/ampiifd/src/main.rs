//! Command-line front end: `ampiifd register <ref> <sen> [options]`.
//!
//! Exit codes: 0 success, 2 no model with sufficient inliers, 3 input
//! error, 4 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ampiifd::error::Error;
use ampiifd::{run_register, PipelineConfig};

#[derive(Parser)]
#[command(name = "ampiifd", version, about = "Multimodal remote-sensing image registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a sensed image onto a reference image.
    Register(RegisterArgs),
}

#[derive(Args)]
struct RegisterArgs {
    /// Reference image path.
    reference: PathBuf,
    /// Sensed image path (warped onto the reference frame).
    sensed: PathBuf,
    /// Ground truth: a transform file or `x_ref y_ref x_sen y_sen` control
    /// points; enables CMR reporting.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Transform model to estimate.
    #[arg(long, value_parser = ["similarity", "affine", "projective"])]
    model: Option<String>,
    /// Output directory for all artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config file of `key = value` lines (command line takes precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    /// RANSAC seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write per-level images, keypoint lists and descriptor dumps.
    #[arg(long)]
    debug_dumps: bool,
    /// Strict mode: disables the ratio test and descriptor clamping.
    #[arg(long)]
    strict_paper: bool,
    /// Extra `key=value` parameter overrides (repeatable), e.g. `-p offset=2.0`.
    #[arg(short = 'p', long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

fn build_config(args: &RegisterArgs) -> ampiifd::Result<PipelineConfig> {
    let mut config = PipelineConfig::default();
    if let Some(path) = &args.config {
        config.apply_file(path)?;
    }
    // Command-line flags override file values.
    for assignment in &args.params {
        let (key, value) = assignment.split_once('=').ok_or_else(|| Error::Config {
            key: assignment.clone(),
            detail: "expected KEY=VALUE".to_string(),
        })?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(model) = &args.model {
        config.set("model", model)?;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.matching.ransac_seed = seed;
    }
    if args.debug_dumps {
        config.debug_dumps = true;
    }
    if args.strict_paper {
        config.apply_strict_paper();
    }
    config.validate()?;
    Ok(config)
}

/// Maps an error (unwrapping stage wrappers) onto the documented exit codes.
fn exit_code_for(err: &Error) -> u8 {
    let mut e = err;
    while let Error::Stage { source, .. } = e {
        e = source;
    }
    match e {
        // No-model outcomes: nothing to match or no consistent consensus.
        Error::NoConsensus | Error::TooFewMatches { .. } | Error::EmptyInput(_) => 2,
        Error::Config { .. } | Error::InvalidParameter { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Register(args) = cli.command;

    let config = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    };

    match run_register(&args.reference, &args.sensed, args.gt.as_deref(), &config) {
        Ok(report) => {
            if report.unreliable {
                eprintln!(
                    "warning: only {} established matches; the model is unreliable",
                    report.n_ransac
                );
            }
            println!(
                "registered: {} keypoints (ref) / {} (sen), {} initial, {} oriented, {} inliers",
                report.n_keypoints_ref,
                report.n_keypoints_sen,
                report.n_initial,
                report.n_oriented,
                report.n_ransac
            );
            if let (Some(nc), Some(cmr)) = (report.n_correct, report.cmr) {
                println!("ground truth: {} correct, CMR {:.4}", nc, cmr);
            }
            if let Some(rmse) = report.rmse_px {
                println!("RMSE {:.4} px", rmse);
            }
            println!("artifacts in {}", config.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
