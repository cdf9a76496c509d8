//! SGD-with-momentum training and trajectory recording.
//!
//! The update follows the PyTorch convention: v′ = μv + (g + λθ), θ′ = θ − αv′,
//! with weight decay added to the gradient before the momentum accumulator.
//! One checkpoint is recorded per epoch, plus the initial parameter, so a run
//! of E epochs yields a trajectory of length E+1. Everything is reproducible
//! from the config seed.

use crate::data::{BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::landscape::evaluate;
use crate::nn::{loss_and_grad, Architecture, Params};
use crate::scalar::Scalar;
use crate::transfer::LambdaSchedule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

/// Learning-rate schedule over epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SGDConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl SGDConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::invalid("lr must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Cosine-annealed step size: α₀·(1 + cos(πt/S))/2 for 0 ≤ t < S.
pub fn cosine_lr(step: usize, total: usize, alpha0: f64) -> f64 {
    debug_assert!(step < total);
    alpha0 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos()) / 2.0
}

/// Per-epoch training statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Where a trajectory came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryMeta {
    Sgd {
        config: SGDConfig,
        epoch_stats: Vec<EpochStats>,
    },
    Linear {
        schedule: LambdaSchedule,
        steps: usize,
    },
    Imported,
}

/// An ordered list of parameter checkpoints (θ⁰,…,θᵀ) plus provenance.
#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub arch: Architecture,
    pub checkpoints: Vec<Params<S>>,
    pub meta: TrajectoryMeta,
}

impl<S: Scalar> Trajectory<S> {
    pub fn new(checkpoints: Vec<Params<S>>, meta: TrajectoryMeta) -> Result<Self> {
        if checkpoints.len() < 2 {
            return Err(Error::invalid(format!(
                "trajectory needs at least 2 checkpoints, got {}",
                checkpoints.len()
            )));
        }
        let arch = checkpoints[0].arch();
        if checkpoints.iter().any(|c| !c.same_shape(&checkpoints[0])) {
            return Err(Error::shape("trajectory checkpoints have differing shapes"));
        }
        Ok(Trajectory {
            arch,
            checkpoints,
            meta,
        })
    }

    /// Number of steps T (checkpoints − 1).
    pub fn steps(&self) -> usize {
        self.checkpoints.len() - 1
    }

    pub fn start(&self) -> &Params<S> {
        &self.checkpoints[0]
    }

    pub fn end(&self) -> &Params<S> {
        self.checkpoints.last().unwrap()
    }
}

/// Training failure; `Diverged` carries the last finite end-of-epoch checkpoint.
#[derive(Debug, ThisError)]
pub enum TrainError<S: Scalar> {
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        source: Error,
        last_good: Box<Params<S>>,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

/// Kaiming fan-in initialization for ReLU nets: Wᵢ ~ N(0, 2/dᵢ₋₁), biases zero.
pub fn init_params<S: Scalar>(arch: &Architecture, seed: u64) -> Params<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut params = Params::zeros(arch);
    for layer in &mut params.layers {
        let std = (2.0 / layer.cols as f64).sqrt();
        for w in layer.weight.iter_mut() {
            let z: f64 = normal.sample(&mut rng);
            *w = S::of_f64(z * std);
        }
    }
    params
}

/// One SGD-with-momentum update, in place.
pub fn sgd_step_in_place<S: Scalar>(
    params: &mut Params<S>,
    grad: &Params<S>,
    velocity: &mut Params<S>,
    lr: f64,
    cfg: &SGDConfig,
) -> Result<()> {
    if !params.same_shape(grad) || !params.same_shape(velocity) {
        return Err(Error::shape("params, grad and velocity shapes differ"));
    }
    let mu = cfg.momentum;
    let wd = cfg.weight_decay;
    for ((pl, gl), vl) in params
        .layers
        .iter_mut()
        .zip(&grad.layers)
        .zip(&mut velocity.layers)
    {
        for ((p, g), v) in pl
            .weight
            .iter_mut()
            .zip(&gl.weight)
            .chain(pl.bias.iter_mut().zip(&gl.bias))
            .zip(vl.weight.iter_mut().chain(vl.bias.iter_mut()))
        {
            let vnew = mu * v.as_f64() + (g.as_f64() + wd * p.as_f64());
            let pnew = p.as_f64() - lr * vnew;
            *v = S::of_f64(vnew);
            *p = S::of_f64(pnew);
        }
    }
    Ok(())
}

/// Functional form of [`sgd_step_in_place`], returning (params′, velocity′).
pub fn sgd_step<S: Scalar>(
    params: &Params<S>,
    grad: &Params<S>,
    velocity: &Params<S>,
    lr: f64,
    cfg: &SGDConfig,
) -> Result<(Params<S>, Params<S>)> {
    let mut p = params.clone();
    let mut v = velocity.clone();
    sgd_step_in_place(&mut p, grad, &mut v, lr, cfg)?;
    Ok((p, v))
}

fn epoch_lr(cfg: &SGDConfig, epoch: usize) -> f64 {
    match cfg.schedule {
        LrSchedule::Constant => cfg.lr,
        LrSchedule::Cosine => cosine_lr(epoch, cfg.epochs, cfg.lr),
    }
}

const EVAL_BATCH: usize = 512;

/// Train for `cfg.epochs` epochs, recording a checkpoint after every epoch.
/// The returned trajectory has length epochs+1 and its first checkpoint is
/// bit-identical to `params0`.
pub fn train<S: Scalar>(
    params0: &Params<S>,
    train_ds: &Dataset<S>,
    val_ds: &Dataset<S>,
    cfg: &SGDConfig,
) -> std::result::Result<Trajectory<S>, TrainError<S>> {
    cfg.validate().map_err(TrainError::Core)?;
    let arch = params0.arch();
    if train_ds.dim != arch.input_dim() || val_ds.dim != arch.input_dim() {
        return Err(TrainError::Core(Error::shape(format!(
            "dataset dim {} != network input dim {}",
            train_ds.dim,
            arch.input_dim()
        ))));
    }
    if train_ds.num_classes > arch.output_dim() {
        return Err(TrainError::Core(Error::shape(format!(
            "{} classes exceed network output dim {}",
            train_ds.num_classes,
            arch.output_dim()
        ))));
    }

    let mut params = params0.clone();
    let mut velocity = Params::zeros(&arch);
    let mut sampler =
        BatchSampler::new(train_ds.len(), cfg.batch_size, cfg.seed).map_err(TrainError::Core)?;
    let mut checkpoints = Vec::with_capacity(cfg.epochs + 1);
    checkpoints.push(params.clone());
    let mut epoch_stats = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = epoch_lr(cfg, epoch);
        let mut loss_sum = 0.0f64;
        let order = sampler.next_epoch().to_vec();
        for idx in order.chunks(cfg.batch_size) {
            let batch = train_ds.gather(idx);
            let step = (|| -> Result<()> {
                let (loss, grad) = loss_and_grad(&params, &batch)?;
                loss_sum += loss * idx.len() as f64;
                sgd_step_in_place(&mut params, &grad, &mut velocity, lr, cfg)?;
                Ok(())
            })();
            if let Err(e) = step {
                let last_good = checkpoints.last().unwrap().clone();
                return Err(TrainError::Diverged {
                    epoch,
                    source: e,
                    last_good: Box::new(last_good),
                });
            }
        }
        let train_loss = loss_sum / train_ds.len() as f64;
        if !train_loss.is_finite() || params.check_finite().is_err() {
            let last_good = checkpoints.last().unwrap().clone();
            return Err(TrainError::Diverged {
                epoch,
                source: Error::NonFinite {
                    layer: 0,
                    context: "epoch mean loss or parameters".into(),
                },
                last_good: Box::new(last_good),
            });
        }
        let (val_loss, val_acc) = evaluate(&params, val_ds, EVAL_BATCH).map_err(TrainError::Core)?;
        epoch_stats.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
            val_acc,
        });
        checkpoints.push(params.clone());
    }

    Ok(Trajectory {
        arch,
        checkpoints,
        meta: TrajectoryMeta::Sgd {
            config: cfg.clone(),
            epoch_stats,
        },
    })
}

/// Continue training from an arbitrary starting parameter (e.g. a transferred
/// one). Identical loop to [`train`]; with the same start, config and seed it
/// reproduces `train` exactly.
pub fn resume_train<S: Scalar>(
    params_start: &Params<S>,
    train_ds: &Dataset<S>,
    val_ds: &Dataset<S>,
    cfg: &SGDConfig,
) -> std::result::Result<Trajectory<S>, TrainError<S>> {
    train(params_start, train_ds, val_ds, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;

    fn scalar_params(v: f32) -> Params<f32> {
        // dims (1,1,1): two weights + two biases, but we only exercise entry 0
        let arch = Architecture::new(vec![1, 1, 1]).unwrap();
        let mut p = Params::zeros(&arch);
        p.layers[0].weight[0] = v;
        p
    }

    fn cfg(lr: f64, mu: f64, wd: f64) -> SGDConfig {
        SGDConfig {
            lr,
            momentum: mu,
            weight_decay: wd,
            epochs: 1,
            batch_size: 1,
            schedule: LrSchedule::Constant,
            seed: 0,
        }
    }

    #[test]
    fn plain_sgd_step() {
        let p = scalar_params(1.0);
        let g = scalar_params(0.5);
        let v = scalar_params(0.0);
        let (p2, _) = sgd_step(&p, &g, &v, 0.1, &cfg(0.1, 0.0, 0.0)).unwrap();
        assert_eq!(p2.layers[0].weight[0], 0.95);
    }

    #[test]
    fn momentum_recurrence_hand_evaluated() {
        // mu=0.9, g=1, lr=0.1, theta=0: step1 v=1, theta=-0.1; step2 v=1.9, theta=-0.29
        let c = cfg(0.1, 0.9, 0.0);
        let g = scalar_params(1.0);
        let mut p = scalar_params(0.0);
        let mut v = scalar_params(0.0);
        sgd_step_in_place(&mut p, &g, &mut v, 0.1, &c).unwrap();
        assert!((p.layers[0].weight[0] - -0.1).abs() < 1e-7);
        assert!((v.layers[0].weight[0] - 1.0).abs() < 1e-7);
        sgd_step_in_place(&mut p, &g, &mut v, 0.1, &c).unwrap();
        assert!((v.layers[0].weight[0] - 1.9).abs() < 1e-7);
        assert!((p.layers[0].weight[0] - -0.29).abs() < 1e-7);
    }

    #[test]
    fn weight_decay_only_decays() {
        let c = cfg(0.1, 0.0, 0.1);
        let g = scalar_params(0.0);
        let mut p = scalar_params(1.0);
        let mut v = scalar_params(0.0);
        sgd_step_in_place(&mut p, &g, &mut v, 0.1, &c).unwrap();
        assert!((p.layers[0].weight[0] - 0.99).abs() < 1e-7);
    }

    #[test]
    fn cosine_lr_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 10, 0.5), 0.5);
        assert!((cosine_lr(5, 10, 0.5) - 0.25).abs() < 1e-15);
        assert!(cosine_lr(9, 10, 0.5) > 0.0);
        assert!(cosine_lr(9, 10, 0.5) < 0.02);
    }

    #[test]
    fn kaiming_init_std_matches_fan_in() {
        let arch = Architecture::new(vec![128, 96, 10]).unwrap();
        let p = init_params::<f32>(&arch, 0);
        for l in &p.layers {
            let want = (2.0 / l.cols as f64).sqrt();
            let mean: f64 = l.weight.iter().map(|w| *w as f64).sum::<f64>() / l.weight.len() as f64;
            let var: f64 = l.weight.iter().map(|w| (*w as f64 - mean).powi(2)).sum::<f64>()
                / l.weight.len() as f64;
            let std = var.sqrt();
            assert!(
                (std - want).abs() / want < 0.2,
                "layer std {std} vs expected {want}"
            );
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn train_validates_epochs_and_records_expected_length() {
        let ds = synth_blobs::<f32>(3, 20, 4, 0.2, 5).unwrap();
        let arch = Architecture::new(vec![4, 8, 3]).unwrap();
        let p0 = init_params::<f32>(&arch, 1);
        let mut c = SGDConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 0,
            batch_size: 16,
            schedule: LrSchedule::Constant,
            seed: 2,
        };
        assert!(train(&p0, &ds, &ds, &c).is_err());
        c.epochs = 1;
        let traj = train(&p0, &ds, &ds, &c).unwrap();
        assert_eq!(traj.checkpoints.len(), 2);
        assert_eq!(traj.checkpoints[0], p0);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let ds = synth_blobs::<f32>(3, 20, 4, 0.3, 6).unwrap();
        let arch = Architecture::new(vec![4, 8, 3]).unwrap();
        let p0 = init_params::<f32>(&arch, 3);
        let c = SGDConfig {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 3,
            batch_size: 16,
            schedule: LrSchedule::Cosine,
            seed: 7,
        };
        let a = train(&p0, &ds, &ds, &c).unwrap();
        let b = train(&p0, &ds, &ds, &c).unwrap();
        assert_eq!(a.checkpoints.len(), b.checkpoints.len());
        for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
            assert_eq!(x, y);
        }
        // resume from checkpoint 0 with the same cfg reproduces train exactly
        let r = resume_train(&p0, &ds, &ds, &c).unwrap();
        for (x, y) in a.checkpoints.iter().zip(&r.checkpoints) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn divergence_carries_last_good_checkpoint() {
        let ds = synth_blobs::<f32>(2, 10, 3, 0.2, 8).unwrap();
        let arch = Architecture::new(vec![3, 4, 2]).unwrap();
        let p0 = init_params::<f32>(&arch, 4);
        let c = SGDConfig {
            lr: 1e12, // guaranteed blow-up
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 5,
            batch_size: 4,
            schedule: LrSchedule::Constant,
            seed: 9,
        };
        match train(&p0, &ds, &ds, &c) {
            Err(TrainError::Diverged { last_good, .. }) => {
                assert!(last_good.check_finite().is_ok());
            }
            other => panic!("expected divergence, got {:?}", other.map(|t| t.steps())),
        }
    }
}
