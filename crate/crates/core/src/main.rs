use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gradeseg::cli::{self, ExperimentConfig, Overrides};
use gradeseg::statistics::{format_p, format_ratio, Arm, SubjectSet};

#[derive(Parser)]
#[command(name = "gradeseg", version, about = "Grade-aware tumor segmentation experiments on synthetic phantoms")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Number of cross-validation folds.
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Phantom image size (radii scale with it).
    #[arg(long, global = true)]
    size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the phantom cohort.
    Generate,
    /// Train all regimes on all folds (resumes completed runs).
    Run,
    /// Score checkpoints and write the comparison table and curves.
    Report {
        /// Epoch for the table (default: last).
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Compare two arms on a subject set.
    Compare {
        #[arg(long)]
        variant: Arm,
        #[arg(long, default_value = "baseline")]
        baseline: Arm,
        #[arg(long, default_value = "all")]
        subjects: SubjectSet,
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Write per-epoch better-ratio curves for two arms.
    Curves {
        #[arg(long)]
        variant: Arm,
        #[arg(long, default_value = "baseline")]
        baseline: Arm,
        #[arg(long, default_value = "all")]
        subjects: SubjectSet,
        /// File stem under report/curves/.
        #[arg(long, default_value = "custom")]
        name: String,
    },
}

fn config(common: &Common) -> gradeseg::Result<ExperimentConfig> {
    let base = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    Ok(base.with_overrides(&Overrides {
        output_dir: common.out.clone(),
        seed: common.seed,
        epochs: common.epochs,
        folds: common.folds,
        size: common.size,
    }))
}

fn execute(cli: Cli) -> gradeseg::Result<()> {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Generate => {
            let cohort = cli::cmd_generate(&cfg)?;
            println!("wrote {} subjects to {}", cohort.len(), cfg.cohort_dir().display());
        }
        Command::Run => {
            let manifest = cli::cmd_run(&cfg)?;
            println!("{} runs complete under {}", manifest.records.len(), cfg.output_dir.display());
        }
        Command::Report { epoch } => {
            let out = cli::cmd_report(&cfg, epoch)?;
            print!("{}", out.text);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Compare { variant, baseline, subjects, epoch } => {
            println!("{variant} vs. {baseline} ({subjects})");
            for r in cli::cmd_compare(&cfg, variant, baseline, subjects, epoch)? {
                println!(
                    "{:<6} n={:<4} better={:>5}%  W={:<8} p={}{}",
                    r.region.title(),
                    r.n,
                    format_ratio(r.better_ratio),
                    r.w_statistic,
                    format_p(r.p_value),
                    if r.significant { "  *" } else { "" }
                );
            }
        }
        Command::Curves { variant, baseline, subjects, name } => {
            for f in cli::cmd_curves(&cfg, variant, baseline, subjects, &name)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
