//! Cross-module training behavior on synthetic data.

mod common;

use ltrj_core::data::{split_train_val, synth_blobs};
use ltrj_core::landscape::evaluate;
use ltrj_core::nn::Architecture;
use ltrj_core::optim::{init_params, resume_train, train, LrSchedule, SGDConfig, TrajectoryMeta};

fn blobs_cfg(epochs: usize, seed: u64) -> SGDConfig {
    SGDConfig {
        lr: 0.05,
        momentum: 0.9,
        weight_decay: 0.0,
        epochs,
        batch_size: 32,
        schedule: LrSchedule::Cosine,
        seed,
    }
}

#[test]
fn separable_blobs_reach_high_train_accuracy() {
    let ds = synth_blobs::<f32>(3, 60, 8, 0.25, 11).unwrap();
    let (train_ds, val_ds) = split_train_val(&ds, 1).unwrap();
    let arch = Architecture::new(vec![8, 16, 3]).unwrap();
    let p0 = init_params::<f32>(&arch, 0);
    let traj = train(&p0, &train_ds, &val_ds, &blobs_cfg(8, 5)).unwrap();
    let (_, train_acc) = evaluate(traj.end(), &train_ds, 64).unwrap();
    assert!(train_acc >= 0.95, "train accuracy {train_acc} below 0.95");
}

#[test]
fn zero_spread_blobs_hit_perfect_train_accuracy() {
    // every point sits exactly on its class center: linearly separable
    let ds = synth_blobs::<f32>(4, 20, 6, 0.0, 3).unwrap();
    let arch = Architecture::new(vec![6, 8, 4]).unwrap();
    let p0 = init_params::<f32>(&arch, 1);
    let traj = train(&p0, &ds, &ds, &blobs_cfg(10, 2)).unwrap();
    let (_, acc) = evaluate(traj.end(), &ds, 64).unwrap();
    assert_eq!(acc, 1.0, "expected 100% train accuracy, got {acc}");
}

#[test]
fn resuming_converged_parameters_barely_moves_accuracy() {
    let ds = synth_blobs::<f32>(3, 60, 8, 0.25, 13).unwrap();
    let (train_ds, val_ds) = split_train_val(&ds, 2).unwrap();
    let arch = Architecture::new(vec![8, 16, 3]).unwrap();
    let p0 = init_params::<f32>(&arch, 4);
    let traj = train(&p0, &train_ds, &val_ds, &blobs_cfg(12, 6)).unwrap();
    let (_, acc_before) = evaluate(traj.end(), &val_ds, 64).unwrap();

    let small = SGDConfig {
        lr: 1e-3,
        epochs: 2,
        ..blobs_cfg(2, 7)
    };
    let resumed = resume_train(traj.end(), &train_ds, &val_ds, &small).unwrap();
    let (_, acc_after) = evaluate(resumed.end(), &val_ds, 64).unwrap();
    assert!(
        (acc_after - acc_before).abs() < 0.02,
        "val accuracy moved from {acc_before} to {acc_after}"
    );
}

#[test]
fn epoch_stats_are_recorded_and_finite() {
    let ds = synth_blobs::<f32>(3, 40, 5, 0.3, 17).unwrap();
    let (train_ds, val_ds) = split_train_val(&ds, 3).unwrap();
    let arch = Architecture::new(vec![5, 10, 3]).unwrap();
    let p0 = init_params::<f32>(&arch, 8);
    let traj = train(&p0, &train_ds, &val_ds, &blobs_cfg(4, 9)).unwrap();
    match &traj.meta {
        TrajectoryMeta::Sgd { epoch_stats, .. } => {
            assert_eq!(epoch_stats.len(), 4);
            for s in epoch_stats {
                assert!(s.train_loss.is_finite());
                assert!(s.val_loss.is_finite());
                assert!((0.0..=1.0).contains(&s.val_acc));
            }
        }
        other => panic!("unexpected meta {other:?}"),
    }
}
