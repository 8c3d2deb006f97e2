//! Argument parsing and dispatch for the `trackrec` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use trackrec_core::Split;

use crate::config::RunConfig;
use crate::error::Result;
use crate::run;

#[derive(Debug, Parser)]
#[command(name = "trackrec", version, about = "Alternating generator/validator training for recommendation chains-of-thought")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (interactions.csv, items.csv, users.json).
    Synth {
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory [default: data/<name>]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distill, run the alternating loop and train the CTR arms.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Parent of the run directory
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Recompute metrics for one split from a run's checkpoints.
    Eval {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Valid)]
        split: SplitArg,
    },
    /// Print the greedy cot of every user as JSON lines.
    ExportCots {
        run_dir: PathBuf,
        /// Iteration to export [default: the last one]
        #[arg(long)]
        iteration: Option<usize>,
        /// Output file [default: standard output]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration; omitted keys take default values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub no_align: bool,
    #[arg(long)]
    pub no_distill: bool,
}

impl Overrides {
    /// The config file (or defaults) with command-line flags applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(t) = self.iterations {
            cfg.iterations = t;
        }
        if self.no_align {
            cfg.align = false;
        }
        if self.no_distill {
            cfg.distill.enabled = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

fn print_rows(rows: &[run::MetricsRow], out: &mut dyn Write) {
    let _ = writeln!(out, "{}", run::METRICS_HEADER.join(","));
    for r in rows {
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.run,
            r.arm,
            r.iteration,
            r.split,
            f(r.auc),
            f(r.acc),
            f(r.logloss),
            f(r.mean_reward),
            f(r.tag_recall),
            f(r.sdpo_loss),
            f(r.rectune_loss)
        );
    }
}

/// Runs one parsed command, writing human output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synth { overrides, out: dir } => {
            let cfg = overrides.resolve()?;
            let dir = dir.unwrap_or_else(|| Path::new("data").join(&cfg.name));
            let data = run::cmd_synth(&cfg, &dir)?;
            let _ = writeln!(
                out,
                "wrote {} users, {} items, {} interactions to {}",
                data.users.len(),
                data.items.len(),
                data.interactions.len(),
                dir.display()
            );
        }
        Command::Train { overrides, out: root } => {
            let cfg = overrides.resolve()?;
            let summary = run::cmd_train(&cfg, &root)?;
            print_rows(&summary.rows, out);
            let _ = writeln!(out, "run directory: {}", summary.dir.display());
        }
        Command::Eval { run_dir, split } => {
            let rows = run::cmd_eval(&run_dir, split.into())?;
            print_rows(&rows, out);
        }
        Command::ExportCots { run_dir, iteration, out: file } => match file {
            Some(path) => {
                let mut f = std::fs::File::create(&path).map_err(crate::error::CliError::io(&path))?;
                let k = run::cmd_export_cots(&run_dir, iteration, &mut f)?;
                let _ = writeln!(out, "wrote iteration {k} cots to {}", path.display());
            }
            None => {
                run::cmd_export_cots(&run_dir, iteration, out)?;
            }
        },
    }
    Ok(())
}
