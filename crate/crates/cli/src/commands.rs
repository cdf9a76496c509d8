//! Subcommand implementations. Every command is deterministic: identical
//! configs and seeds produce byte-identical output files (manifests carry no
//! timestamps).

use crate::ckpt::{read_checkpoint, write_checkpoint};
use crate::config::{ExperimentConfig, SourceKind};
use crate::error::{CliError, CliResult};
use ltrj_core::align::{weight_matching, AlignOptions};
use ltrj_core::data::{write_idx_f32_matrix, write_idx_labels, Dataset};
use ltrj_core::landscape::{
    barrier, drift_diagnostic, evaluate, linear_path_scan, plane_scan,
};
use ltrj_core::optim::{resume_train, train, Trajectory, TrajectoryMeta, TrainError};
use ltrj_core::permsym::{hamming, Permutation};
use ltrj_core::transfer::{
    fgmt, gmt, make_linear_trajectory, naive_transfer, oracle_transfer, LinearTrajectorySpec,
    TransferMethod, TransferOptions, TransferResult,
};
use ltrj_core::Params32;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn step_filename(t: usize) -> String {
    format!("step_{t:04}.ltrj")
}

fn write_trajectory_files(dir: &Path, checkpoints: &[Params32]) -> CliResult<Vec<String>> {
    let mut names = Vec::with_capacity(checkpoints.len());
    for (t, p) in checkpoints.iter().enumerate() {
        let name = step_filename(t);
        write_checkpoint(&dir.join(&name), p)?;
        names.push(name);
    }
    Ok(names)
}

/// Load `step_NNNN.ltrj` files from a directory, sorted by step index.
pub fn load_trajectory_dir(dir: &Path) -> CliResult<Trajectory<f32>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::usage(format!("reading {}: {e}", dir.display())))?;
    let mut steps: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::runtime(e.to_string()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(num) = name
            .strip_prefix("step_")
            .and_then(|s| s.strip_suffix(".ltrj"))
        {
            if let Ok(t) = num.parse::<usize>() {
                steps.push((t, entry.path()));
            }
        }
    }
    if steps.len() < 2 {
        return Err(CliError::usage(format!(
            "{} holds {} checkpoint files, need at least 2",
            dir.display(),
            steps.len()
        )));
    }
    steps.sort_by_key(|(t, _)| *t);
    for (want, (got, _)) in steps.iter().enumerate() {
        if *got != want {
            return Err(CliError::usage(format!(
                "{}: missing step_{want:04}.ltrj",
                dir.display()
            )));
        }
    }
    let checkpoints = steps
        .iter()
        .map(|(_, p)| read_checkpoint(p))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Trajectory::new(checkpoints, TrajectoryMeta::Imported)?)
}

#[derive(Serialize)]
struct TrainManifest<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    arch: &'a [usize],
    checkpoints: Vec<String>,
    meta: &'a TrajectoryMeta,
}

fn run_training(
    cfg: &ExperimentConfig,
    start: &Params32,
    out_dir: &Path,
    command: &str,
) -> CliResult<()> {
    let (train_ds, val_ds) = cfg.load_split()?;
    let outcome = if command == "resume" {
        resume_train(start, &train_ds, &val_ds, &cfg.sgd)
    } else {
        train(start, &train_ds, &val_ds, &cfg.sgd)
    };
    let traj = match outcome {
        Ok(t) => t,
        Err(TrainError::Diverged { epoch, source, .. }) => {
            return Err(CliError::runtime(format!(
                "training diverged at epoch {epoch}: {source}"
            )))
        }
        Err(TrainError::Core(e)) => return Err(e.into()),
    };
    ensure_dir(out_dir)?;
    let names = write_trajectory_files(out_dir, &traj.checkpoints)?;
    write_json(
        &out_dir.join("manifest.json"),
        &TrainManifest {
            command,
            config: cfg,
            arch: cfg.arch.as_slice(),
            checkpoints: names,
            meta: &traj.meta,
        },
    )?;
    if let TrajectoryMeta::Sgd { epoch_stats, .. } = &traj.meta {
        let mut csv = String::from("epoch,lr,train_loss,val_loss,val_acc\n");
        for s in epoch_stats {
            writeln!(
                csv,
                "{},{},{},{},{}",
                s.epoch, s.lr, s.train_loss, s.val_loss, s.val_acc
            )
            .unwrap();
        }
        write_text(&out_dir.join("epochs.csv"), &csv)?;
    }
    println!(
        "wrote {} checkpoints to {}",
        traj.checkpoints.len(),
        out_dir.display()
    );
    Ok(())
}

/// `train`: train from a fresh seeded initialization.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<()> {
    let arch = cfg.architecture()?;
    let start = ltrj_core::optim::init_params::<f32>(&arch, cfg.sgd.seed);
    run_training(cfg, &start, out_dir, "train")
}

/// `resume`: continue training from a checkpoint file.
pub fn cmd_resume(cfg: &ExperimentConfig, start_path: &Path, out_dir: &Path) -> CliResult<()> {
    let start = read_checkpoint(start_path)?;
    if start.arch().dims() != cfg.arch.as_slice() {
        return Err(CliError::usage(format!(
            "checkpoint dims {:?} do not match config arch {:?}",
            start.arch().dims(),
            cfg.arch
        )));
    }
    run_training(cfg, &start, out_dir, "resume")
}

/// `gen-data`: materialize the configured synthetic dataset as IDX files
/// (float32 features plus u8 labels).
pub fn cmd_gen_data(cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<()> {
    use crate::config::DatasetSpec;
    match &cfg.dataset {
        DatasetSpec::Mnist { .. } => Err(CliError::usage(
            "gen-data only applies to synthetic datasets; mnist files are external inputs",
        )),
        DatasetSpec::Blobs { classes, .. } => {
            if *classes > 256 {
                return Err(CliError::usage("gen-data supports at most 256 classes"));
            }
            let (ds, _) = cfg.load_full()?;
            ensure_dir(out_dir)?;
            let features = write_idx_f32_matrix(&ds.inputs, ds.len(), ds.dim)?;
            let labels: Vec<u8> = ds.labels.iter().map(|&y| y as u8).collect();
            std::fs::write(out_dir.join("features.idx"), features)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            std::fs::write(out_dir.join("labels.idx"), write_idx_labels(&labels))
                .map_err(|e| CliError::runtime(e.to_string()))?;
            println!(
                "wrote {} examples ({} features each) to {}",
                ds.len(),
                ds.dim,
                out_dir.display()
            );
            Ok(())
        }
    }
}

pub struct TransferArgs<'a> {
    pub source_dir: &'a Path,
    pub target_init: &'a Path,
    pub trained_target: Option<&'a Path>,
    pub planted_truth: Option<&'a Path>,
    pub out_dir: &'a Path,
}

#[derive(Serialize)]
struct TransferManifest<'a> {
    command: &'a str,
    method: &'a str,
    config: &'a ExperimentConfig,
    steps: usize,
    grad_evals: usize,
    peak_step: Option<usize>,
    checkpoints: Vec<String>,
}

/// `transfer`: synthesize a trajectory for a new initial parameter.
pub fn cmd_transfer(cfg: &ExperimentConfig, args: &TransferArgs<'_>) -> CliResult<()> {
    let loaded = load_trajectory_dir(args.source_dir)?;
    let theta2_0 = read_checkpoint(args.target_init)?;
    if !theta2_0.same_shape(&loaded.checkpoints[0]) {
        return Err(CliError::usage(
            "target init shape does not match the source trajectory",
        ));
    }
    let spec = &cfg.transfer;
    let source = match spec.source_trajectory {
        SourceKind::Linear => make_linear_trajectory(&LinearTrajectorySpec {
            start: loaded.checkpoints[0].clone(),
            end: loaded.checkpoints.last().unwrap().clone(),
            steps: spec.steps,
            schedule: spec.schedule,
        })?,
        SourceKind::Actual => loaded,
    };

    let (train_ds, val_ds) = cfg.load_split()?;
    let align = AlignOptions {
        max_sweeps: spec.max_sweeps,
        layer_order_seed: spec.layer_order_seed,
    };
    let mut result: TransferResult<f32> = match spec.method {
        TransferMethod::Naive => {
            let mut r = naive_transfer(&source, &theta2_0)?;
            r.eval_metrics(&val_ds, spec.eval_batch)?;
            r
        }
        TransferMethod::Oracle => {
            let trained_path = args.trained_target.ok_or_else(|| {
                CliError::usage("method 'oracle' requires --trained-target <checkpoint>")
            })?;
            let trained = read_checkpoint(trained_path)?;
            let mut r = oracle_transfer(&source, &theta2_0, &trained, &align)?;
            r.eval_metrics(&val_ds, spec.eval_batch)?;
            r
        }
        TransferMethod::Gmt | TransferMethod::Fgmt => {
            let opts = TransferOptions {
                align,
                val_data: Some(&val_ds),
                eval_batch: spec.eval_batch,
            };
            if spec.method == TransferMethod::Gmt {
                gmt(
                    &source,
                    &theta2_0,
                    &train_ds,
                    spec.match_batch_size,
                    spec.seed,
                    &opts,
                )?
            } else {
                fgmt(
                    &source,
                    &theta2_0,
                    &train_ds,
                    spec.match_batch_size,
                    spec.seed,
                    &opts,
                )?
            }
        }
    };
    if result.per_step_metrics.is_empty() {
        result.eval_metrics(&val_ds, spec.eval_batch)?;
    }

    let truth: Option<Permutation> = match args.planted_truth {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("reading {}: {e}", p.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?,
            )
        }
        None => None,
    };

    ensure_dir(args.out_dir)?;
    let names = write_trajectory_files(args.out_dir, &result.transferred)?;
    write_json(&args.out_dir.join("perms.json"), &result.perms)?;

    let mut csv = String::from(if truth.is_some() {
        "step,val_loss,val_acc,hamming\n"
    } else {
        "step,val_loss,val_acc\n"
    });
    for m in &result.per_step_metrics {
        match &truth {
            Some(t) if m.step >= 1 => {
                let h = hamming(&result.perms[m.step - 1], t)?;
                writeln!(csv, "{},{},{},{}", m.step, m.val_loss, m.val_acc, h).unwrap();
            }
            Some(_) => writeln!(csv, "{},{},{},", m.step, m.val_loss, m.val_acc).unwrap(),
            None => writeln!(csv, "{},{},{}", m.step, m.val_loss, m.val_acc).unwrap(),
        }
    }
    write_text(&args.out_dir.join("metrics.csv"), &csv)?;

    write_json(
        &args.out_dir.join("manifest.json"),
        &TransferManifest {
            command: "transfer",
            method: result.method.as_str(),
            config: cfg,
            steps: source.steps(),
            grad_evals: result.grad_evals,
            peak_step: result.peak_step,
            checkpoints: names,
        },
    )?;
    println!(
        "transferred {} steps with method {} (peak step {:?})",
        source.steps(),
        result.method.as_str(),
        result.peak_step
    );
    Ok(())
}

/// `align`: weight-match two checkpoints; optionally write the permutation.
pub fn cmd_align(
    a_path: &Path,
    b_path: &Path,
    max_sweeps: usize,
    order_seed: u64,
    out: Option<&Path>,
) -> CliResult<()> {
    let a = read_checkpoint(a_path)?;
    let b = read_checkpoint(b_path)?;
    let opts = AlignOptions {
        max_sweeps,
        layer_order_seed: order_seed,
    };
    let (perm, history) = weight_matching(&a, &b, &opts)?;
    for (i, obj) in history.iter().enumerate() {
        println!("update {i}: objective {obj}");
    }
    if let Some(path) = out {
        write_json(path, &perm)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Val,
    All,
}

impl std::str::FromStr for EvalSplit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(EvalSplit::Train),
            "val" => Ok(EvalSplit::Val),
            "all" => Ok(EvalSplit::All),
            other => Err(format!("unknown split '{other}' (train|val|all)")),
        }
    }
}

fn pick_split(cfg: &ExperimentConfig, split: EvalSplit) -> CliResult<Dataset<f32>> {
    match split {
        EvalSplit::All => Ok(cfg.load_full()?.0),
        EvalSplit::Train => Ok(cfg.load_split()?.0),
        EvalSplit::Val => Ok(cfg.load_split()?.1),
    }
}

/// `eval`: loss and accuracy of one checkpoint on a dataset split.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    ckpt_path: &Path,
    split: EvalSplit,
    batch: usize,
) -> CliResult<()> {
    let params = read_checkpoint(ckpt_path)?;
    let ds = pick_split(cfg, split)?;
    let (loss, acc) = evaluate(&params, &ds, batch)?;
    println!("loss={loss} acc={acc}");
    Ok(())
}

pub struct ScanArgs<'a> {
    pub a: &'a Path,
    pub b: &'a Path,
    pub c: Option<&'a Path>,
    pub points: usize,
    pub grid: usize,
    pub margin: f64,
    pub split: EvalSplit,
    pub batch: usize,
    pub out: &'a Path,
}

/// `scan --kind path`: losses along the line between two checkpoints.
pub fn cmd_scan_path(cfg: &ExperimentConfig, args: &ScanArgs<'_>) -> CliResult<()> {
    let a = read_checkpoint(args.a)?;
    let b = read_checkpoint(args.b)?;
    let ds = pick_split(cfg, args.split)?;
    let scan = linear_path_scan(&a, &b, args.points, &ds, args.batch)?;
    let mut csv = String::from("lambda,loss,acc\n");
    for i in 0..scan.lambdas.len() {
        writeln!(
            csv,
            "{},{},{}",
            scan.lambdas[i], scan.losses[i], scan.accuracies[i]
        )
        .unwrap();
    }
    write_text(args.out, &csv)?;
    println!("barrier={}", barrier(&scan));
    Ok(())
}

/// `scan --kind plane`: losses over the plane through three checkpoints.
pub fn cmd_scan_plane(cfg: &ExperimentConfig, args: &ScanArgs<'_>) -> CliResult<()> {
    let a = read_checkpoint(args.a)?;
    let b = read_checkpoint(args.b)?;
    let c_path = args
        .c
        .ok_or_else(|| CliError::usage("plane scan requires --c <checkpoint>"))?;
    let c = read_checkpoint(c_path)?;
    let ds = pick_split(cfg, args.split)?;
    let scan = plane_scan(&a, &b, &c, args.grid, args.margin, &ds, args.batch)?;
    let mut csv = String::from("x,y,loss,acc\n");
    for i in 0..scan.xs.len() {
        writeln!(
            csv,
            "{},{},{},{}",
            scan.xs[i], scan.ys[i], scan.losses[i], scan.accuracies[i]
        )
        .unwrap();
    }
    write_text(args.out, &csv)?;
    for (i, (x, y)) in scan.anchors.iter().enumerate() {
        println!("anchor{i}: x={x} y={y}");
    }
    Ok(())
}

/// `drift`: pairwise prefix-rebuild distances for a recorded permutation
/// sequence, plus the empirical Lipschitz/residual estimates.
pub fn cmd_drift(
    cfg: &ExperimentConfig,
    source_dir: &Path,
    target_init: &Path,
    perms_path: &Path,
    out_dir: &Path,
) -> CliResult<()> {
    let source = load_trajectory_dir(source_dir)?;
    let theta2_0 = read_checkpoint(target_init)?;
    let text = std::fs::read_to_string(perms_path)
        .map_err(|e| CliError::usage(format!("reading {}: {e}", perms_path.display())))?;
    let perms: Vec<Permutation> = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", perms_path.display())))?;
    let (train_ds, _) = cfg.load_split()?;
    let report = drift_diagnostic(
        &source,
        &theta2_0,
        &perms,
        &train_ds,
        cfg.transfer.match_batch_size,
        cfg.transfer.seed,
    )?;
    ensure_dir(out_dir)?;
    let mut csv = String::from("s,sprime,t,distance\n");
    for r in &report.rows {
        writeln!(csv, "{},{},{},{}", r.s, r.s_prime, r.t, r.distance).unwrap();
    }
    write_text(&out_dir.join("drift.csv"), &csv)?;
    write_json(
        &out_dir.join("drift_summary.json"),
        &serde_json::json!({"k_hat": report.k_hat, "eps_hat": report.eps_hat}),
    )?;
    println!("k_hat={} eps_hat={}", report.k_hat, report.eps_hat);
    Ok(())
}
