//! `rrn <verb> --out <dir> [flags]`.
//!
//! Exit codes: 0 success, 1 configuration or other error, 2 certification
//! failure, 3 gradient-check failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Overrides};
use crate::error::Result;
use crate::experiments;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_CERTIFICATION: u8 = 2;
pub const EXIT_GRADCHECK: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "rrn", version, about = "Reversible residual normalization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the graph normalization and every block's Lipschitz bound.
    Certify(CommonArgs),
    /// Sweep contraction target and alpha: round-trip error and brief-training MAE.
    Sensitivity(CommonArgs),
    /// Round-trip error of a fresh stack on random input.
    Roundtrip(CommonArgs),
    /// Train and evaluate per seed; checkpoints, loss curves and metric tables.
    TrainEval(CommonArgs),
    /// Per-node histograms before and after the transform.
    Density(CommonArgs),
    /// Finite-difference gradient checks.
    Gradcheck(CommonArgs),
    /// Write a synthetic dataset as values/distances CSV.
    Generate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Seed; also replaces the seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub contraction: Option<f64>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Maximum fixed-point iterations per block.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Also train the plain backbone and score persistence.
    #[arg(long)]
    pub ablate: bool,
    /// One square weight per block instead of a hidden layer.
    #[arg(long)]
    pub single_weight: bool,
    /// `original` or `latent`.
    #[arg(long)]
    pub loss_space: Option<String>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        Overrides {
            seed: self.seed,
            alpha: self.alpha,
            contraction: self.contraction,
            blocks: self.blocks,
            iters: self.iters,
            ablate: self.ablate,
            single_weight: self.single_weight,
            loss_space: self.loss_space.clone(),
        }
        .apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn execute(command: &Command) -> Result<u8> {
    let (Command::Certify(a)
    | Command::Sensitivity(a)
    | Command::Roundtrip(a)
    | Command::TrainEval(a)
    | Command::Density(a)
    | Command::Gradcheck(a)
    | Command::Generate(a)) = command;
    let cfg = a.resolve()?;
    let out = a.out.as_path();
    std::fs::create_dir_all(out).map_err(crate::error::io_err(out))?;
    let code = match command {
        Command::Certify(_) => {
            let c = experiments::certify(&cfg, out)?;
            println!("graph spectral norm {}", c.graph.spectral_norm);
            for (i, (_, bound)) in c.blocks.iter().enumerate() {
                println!("block {i} bound {bound}");
            }
            if c.certified {
                EXIT_OK
            } else {
                eprintln!("certification failed");
                EXIT_CERTIFICATION
            }
        }
        Command::Sensitivity(_) => {
            for t in experiments::sensitivity(&cfg, out)? {
                println!("wrote sensitivity_{}.csv ({} cells)", t.axis.name(), t.cells.len());
            }
            EXIT_OK
        }
        Command::Roundtrip(_) => {
            let r = experiments::roundtrip(&cfg, out)?;
            for row in &r.rows {
                println!("iterations {:>3}  mean abs error {:e}", row.iterations, row.mean_abs_error);
            }
            if r.passed {
                EXIT_OK
            } else {
                if !r.certified {
                    eprintln!("stack is not certified: bounds {:?}", r.bounds);
                } else {
                    eprintln!("round-trip error above {:e}", cfg.roundtrip.max_error);
                }
                EXIT_CERTIFICATION
            }
        }
        Command::TrainEval(_) => {
            let s = experiments::train_eval(&cfg, out)?;
            let mut seen = Vec::new();
            for r in &s.results {
                if !seen.contains(&r.model) {
                    seen.push(r.model.clone());
                    println!("{}: mean test MAE {}", r.model, s.mean_overall_mae(&r.model));
                }
            }
            EXIT_OK
        }
        Command::Density(_) => {
            let d = experiments::density(&cfg, out)?;
            println!(
                "mean dispersion original {} transformed {}",
                d.original_dispersion, d.transformed_dispersion
            );
            EXIT_OK
        }
        Command::Gradcheck(_) => {
            let rows = experiments::gradcheck(&cfg, out)?;
            for r in &rows {
                println!(
                    "{:<18} {:e} {}",
                    r.name,
                    r.max_relative_error,
                    if r.passed { "ok" } else { "FAIL" }
                );
            }
            if rows.iter().all(|r| r.passed) {
                EXIT_OK
            } else {
                EXIT_GRADCHECK
            }
        }
        Command::Generate(_) => {
            for p in experiments::generate(&cfg, out)? {
                println!("wrote {}", p.display());
            }
            EXIT_OK
        }
    };
    Ok(code)
}

/// Parses `args` (program name first) and runs the verb; returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
