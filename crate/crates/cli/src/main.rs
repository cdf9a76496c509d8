//! `ltrj`: train small MLPs, transfer their learning trajectories between
//! initializations, and scan the surrounding loss landscape.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 runtime/numeric error.

use clap::{Args, Parser, Subcommand};
use ltrj_cli::commands::{self, EvalSplit, ScanArgs, TransferArgs};
use ltrj_cli::config::{load_config, ExperimentConfig};
use ltrj_cli::{CliError, CliResult};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ltrj", version, about = "Learning-trajectory training and transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key before validation, e.g. --set sgd.seed=7
    /// (values parse as JSON, bare words as strings). Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<ExperimentConfig> {
        load_config(&self.config, &self.sets)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as IDX files.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a fresh seeded initialization and record the trajectory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue training from an existing checkpoint.
    Resume {
        #[command(flatten)]
        config: ConfigArgs,
        /// Starting checkpoint (.ltrj).
        #[arg(long)]
        start: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transfer a recorded trajectory onto a new initial parameter.
    Transfer {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory holding the source trajectory (step_NNNN.ltrj).
        #[arg(long)]
        source: PathBuf,
        /// Checkpoint with the new initial parameter θ₂⁰.
        #[arg(long)]
        target_init: PathBuf,
        /// Actually trained target endpoint (required for method=oracle).
        #[arg(long)]
        trained_target: Option<PathBuf>,
        /// Known ground-truth permutation (JSON); adds a hamming column to
        /// metrics.csv.
        #[arg(long)]
        planted_truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weight-match two checkpoints and print the objective history.
    Align {
        /// Reference parameter (the permutation applies to this one).
        #[arg(long)]
        a: PathBuf,
        /// Target parameter.
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_sweeps: usize,
        #[arg(long, default_value_t = 0)]
        order_seed: u64,
        /// Write the permutation as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "val")]
        split: EvalSplit,
        #[arg(long, default_value_t = 512)]
        batch: usize,
    },
    /// Scan the loss landscape along a line (kind=path) or plane (kind=plane).
    Scan {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        kind: ScanKind,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Third anchor, plane scans only.
        #[arg(long)]
        c: Option<PathBuf>,
        /// Points along the path (kind=path).
        #[arg(long, default_value_t = 25)]
        points: usize,
        /// Grid resolution per axis (kind=plane).
        #[arg(long, default_value_t = 25)]
        grid: usize,
        /// Bounding-box expansion fraction (kind=plane).
        #[arg(long, default_value_t = 0.2)]
        margin: f64,
        #[arg(long, default_value = "val")]
        split: EvalSplit,
        #[arg(long, default_value_t = 512)]
        batch: usize,
        /// Output CSV path (defaults to scan1d.csv / scan2d.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drift diagnostic for a recorded per-step permutation sequence.
    Drift {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target_init: PathBuf,
        /// perms.json from a gmt/fgmt transfer.
        #[arg(long)]
        perms: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ScanKind {
    Path,
    Plane,
}

fn out_dir_of(cfg: &ExperimentConfig, flag: Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.out_dir.clone()).ok_or_else(|| {
        CliError::usage(format!("no output directory: pass --out or set out_dir ({what})"))
    })
}

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = config.load()?;
            commands::cmd_gen_data(&cfg, &out)
        }
        Command::Train { config, out } => {
            let cfg = config.load()?;
            let out = out_dir_of(&cfg, out, "train")?;
            commands::cmd_train(&cfg, &out)
        }
        Command::Resume { config, start, out } => {
            let cfg = config.load()?;
            let out = out_dir_of(&cfg, out, "resume")?;
            commands::cmd_resume(&cfg, &start, &out)
        }
        Command::Transfer {
            config,
            source,
            target_init,
            trained_target,
            planted_truth,
            out,
        } => {
            let cfg = config.load()?;
            let out = out_dir_of(&cfg, out, "transfer")?;
            commands::cmd_transfer(
                &cfg,
                &TransferArgs {
                    source_dir: &source,
                    target_init: &target_init,
                    trained_target: trained_target.as_deref(),
                    planted_truth: planted_truth.as_deref(),
                    out_dir: &out,
                },
            )
        }
        Command::Align {
            a,
            b,
            max_sweeps,
            order_seed,
            out,
        } => commands::cmd_align(&a, &b, max_sweeps, order_seed, out.as_deref()),
        Command::Eval {
            config,
            checkpoint,
            split,
            batch,
        } => {
            let cfg = config.load()?;
            commands::cmd_eval(&cfg, &checkpoint, split, batch)
        }
        Command::Scan {
            config,
            kind,
            a,
            b,
            c,
            points,
            grid,
            margin,
            split,
            batch,
            out,
        } => {
            let cfg = config.load()?;
            let default_name = match kind {
                ScanKind::Path => "scan1d.csv",
                ScanKind::Plane => "scan2d.csv",
            };
            let out = out.unwrap_or_else(|| PathBuf::from(default_name));
            let args = ScanArgs {
                a: &a,
                b: &b,
                c: c.as_deref(),
                points,
                grid,
                margin,
                split,
                batch,
                out: &out,
            };
            match kind {
                ScanKind::Path => commands::cmd_scan_path(&cfg, &args),
                ScanKind::Plane => commands::cmd_scan_plane(&cfg, &args),
            }
        }
        Command::Drift {
            config,
            source,
            target_init,
            perms,
            out,
        } => {
            let cfg = config.load()?;
            let out = out_dir_of(&cfg, out, "drift")?;
            commands::cmd_drift(&cfg, &source, &target_init, &perms, &out)
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
