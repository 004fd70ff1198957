//! Per-task test-time training.
//!
//! Each task gets a freshly initialized model trained only on that task's
//! demonstration pairs. Every iteration encodes nothing new — the pairs are
//! encoded once — and runs, per pair, a rollout of `T ~ U{64..96}` steps,
//! backpropagating the pixel-wise MSE between the final lattice and the
//! encoded target over the eight visible channels. Gradients are summed over
//! pairs, L2-normalized per parameter array, and applied with AdamW at a
//! learning rate of 1e-3 that drops by the configured factor exactly once,
//! at iteration 2000 of 3000.
//!
//! Patch-trained variants alternate full-lattice iterations with iterations
//! whose loss is evaluated on randomly sampled 3×3 patches (the rollout is
//! always full-lattice; only the loss is restricted).
//!
//! All randomness — parameter init, rollout lengths, fire masks, patch
//! positions — flows from one task seed through labeled streams, so training
//! is bit-reproducible for a `(global_seed, task_id)` pair.

use std::io::Write;
use std::time::Instant;

use ndarray::Array3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{encode_grid, CodecError, Palette, VISIBLE_CHANNELS};
use crate::dataset::TaskRecord;
use crate::engine::CellModel;
use crate::engram::VariantSpec;
use crate::real::Real;

/// Floor applied to `ln(loss)` so perfect (or denormal) losses stay finite.
pub const LOG_LOSS_FLOOR: f64 = -30.0;

/// Natural log of a non-negative loss, clamped at [`LOG_LOSS_FLOOR`].
pub fn clamped_log_loss(loss: f64) -> f64 {
    if loss > 0.0 {
        loss.ln().max(LOG_LOSS_FLOOR)
    } else {
        LOG_LOSS_FLOOR
    }
}

/// Hyperparameters of one training run. Serialized into run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Task seed; all random streams derive from it.
    pub seed: u64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Iteration at which the learning rate is multiplied once by
    /// `lr_drop_factor` (no drop when >= `iterations`).
    pub lr_drop_iteration: usize,
    pub lr_drop_factor: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Inclusive range of rollout lengths sampled per pair per iteration.
    pub rollout_steps: (usize, usize),
    pub fire_rate: f64,
    pub alive_masking: bool,
    /// Leading channels the loss is computed on (RGBA + binary code).
    pub loss_channels: usize,
    /// Fraction of iterations that use patch loss (patch-trained variants).
    pub patch_mix: f64,
    /// 3×3 patches sampled per pair on a patch iteration.
    pub patches_per_pair: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 3000,
            learning_rate: 1e-3,
            lr_drop_iteration: 2000,
            lr_drop_factor: 0.34,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rollout_steps: (64, 96),
            fire_rate: crate::engram::DEFAULT_FIRE_RATE,
            alive_masking: true,
            loss_channels: VISIBLE_CHANNELS,
            patch_mix: 0.5,
            patches_per_pair: 16,
        }
    }
}

impl TrainConfig {
    /// Learning rate in effect at an iteration: the base rate, dropped once
    /// by `lr_drop_factor` from `lr_drop_iteration` onward.
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        if iteration >= self.lr_drop_iteration && self.lr_drop_iteration < self.iterations {
            self.learning_rate * self.lr_drop_factor
        } else {
            self.learning_rate
        }
    }

    /// Whether an iteration trains on patches, spreading `patch_mix` of all
    /// iterations evenly across the schedule (0.5 ⇒ every other iteration).
    pub fn is_patch_iteration(&self, iteration: usize) -> bool {
        let next = ((iteration + 1) as f64 * self.patch_mix).floor();
        let curr = (iteration as f64 * self.patch_mix).floor();
        next > curr
    }
}

/// One line of the training log (serialized as JSONL).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    #[serde(rename = "iter")]
    pub iteration: usize,
    /// Mean pixel-wise MSE across pairs this iteration.
    pub loss: f64,
    /// `ln(loss)` clamped at [`LOG_LOSS_FLOOR`].
    pub log_loss: f64,
    #[serde(rename = "lr")]
    pub learning_rate: f64,
    pub wall_ms: f64,
}

/// A trained per-task model plus its training record.
#[derive(Debug, Clone)]
pub struct TrainedModel<F: Real> {
    pub variant: VariantSpec,
    pub seed: u64,
    pub iterations_run: usize,
    pub model: CellModel<F>,
    /// Log-loss of fresh rollouts on the demonstration pairs at the final
    /// parameters.
    pub final_train_log_loss: f64,
    pub log: Vec<IterationLog>,
    pub wall_seconds: f64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("task {task_id} has no demonstration pairs")]
    NoTrainPairs { task_id: String },
    #[error("task {task_id} is size-changing; filter or pad the dataset first")]
    SizeChanging { task_id: String },
    #[error("loss became non-finite ({loss}) at iteration {iteration} of task {task_id}")]
    NonFiniteLoss {
        task_id: String,
        iteration: usize,
        loss: f64,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("failed to write training log")]
    LogWrite(#[from] std::io::Error),
}

/// Derives the per-task seed from the run seed and the task id; stable
/// across platforms and releases (SHA-256 of the little-endian seed followed
/// by the id bytes, first eight digest bytes, little-endian).
pub fn derive_task_seed(global_seed: u64, task_id: &str) -> u64 {
    derive_seed_bytes(global_seed, task_id.as_bytes())
}

/// Labeled sub-stream of a task seed (parameter init, rollouts, …) so the
/// streams never overlap.
pub fn derive_stream_seed(task_seed: u64, label: &str) -> u64 {
    derive_seed_bytes(task_seed, label.as_bytes())
}

fn derive_seed_bytes(seed: u64, payload: &[u8]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(payload);
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Mean squared error over the first `channels` channels plus its gradient
/// with respect to `state` (zero outside the loss channels).
pub fn mse_loss_grad<F: Real>(
    state: &Array3<F>,
    target: &Array3<F>,
    channels: usize,
) -> (f64, Array3<F>) {
    assert_eq!(state.dim(), target.dim(), "lattice shapes must match");
    let (h, w, c) = state.dim();
    assert!(channels <= c);
    let n = (h * w * channels) as f64;
    let mut grad = Array3::zeros(state.dim());
    let mut sum = 0.0;
    for i in 0..h {
        for j in 0..w {
            for k in 0..channels {
                let d = state[[i, j, k]].to_f64() - target[[i, j, k]].to_f64();
                sum += d * d;
                grad[[i, j, k]] = F::from_f64(2.0 * d / n);
            }
        }
    }
    (sum / n, grad)
}

/// Top-left corners for `count` random 3×3 patches inside an `h × w` grid.
pub fn sample_patches<R: Rng>(h: usize, w: usize, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    debug_assert!(h >= 3 && w >= 3);
    (0..count)
        .map(|_| (rng.random_range(0..=h - 3), rng.random_range(0..=w - 3)))
        .collect()
}

/// MSE restricted to the sampled 3×3 patches (overlapping patches count
/// their cells once per patch), plus its gradient.
pub fn patch_loss_grad<F: Real>(
    state: &Array3<F>,
    target: &Array3<F>,
    patches: &[(usize, usize)],
    channels: usize,
) -> (f64, Array3<F>) {
    assert_eq!(state.dim(), target.dim(), "lattice shapes must match");
    assert!(!patches.is_empty());
    let n = (patches.len() * 9 * channels) as f64;
    let mut grad = Array3::zeros(state.dim());
    let mut sum = 0.0;
    for &(pi, pj) in patches {
        for i in pi..pi + 3 {
            for j in pj..pj + 3 {
                for k in 0..channels {
                    let d = state[[i, j, k]].to_f64() - target[[i, j, k]].to_f64();
                    sum += d * d;
                    grad[[i, j, k]] += F::from_f64(2.0 * d / n);
                }
            }
        }
    }
    (sum / n, grad)
}

/// Scales every parameter array's gradient to unit L2 norm (leaves all-zero
/// gradients untouched). Equalizes update magnitudes across layers.
pub fn normalize_gradients<F: Real>(model: &mut CellModel<F>) {
    model.visit_params(&mut |_, _, mut grad| {
        let norm = grad
            .iter()
            .map(|&g| {
                let g = g.to_f64();
                g * g
            })
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            let inv = F::from_f64(1.0 / norm);
            grad.mapv_inplace(|g| g * inv);
        }
    });
}

/// Decoupled-weight-decay Adam over a model's parameter arrays.
///
/// Moment buffers are allocated lazily on the first step, in parameter
/// visitation order.
#[derive(Debug, Clone)]
pub struct AdamW<F: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    t: u32,
    state: Vec<(ndarray::ArrayD<F>, ndarray::ArrayD<F>)>,
}

impl<F: Real> AdamW<F> {
    pub fn new(cfg: &TrainConfig) -> Self {
        AdamW {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            weight_decay: cfg.weight_decay,
            t: 0,
            state: Vec::new(),
        }
    }

    /// Applies one update from the gradients accumulated in the model.
    pub fn step(&mut self, model: &mut CellModel<F>, lr: f64) {
        self.t += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one = F::one();
        let bc1 = F::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let eps = F::from_f64(self.epsilon);
        let lr_f = F::from_f64(lr);
        let wd = F::from_f64(self.weight_decay);
        let mut idx = 0usize;
        let state = &mut self.state;
        model.visit_params(&mut |_, mut value, grad| {
            if state.len() == idx {
                state.push((
                    ndarray::ArrayD::zeros(grad.shape()),
                    ndarray::ArrayD::zeros(grad.shape()),
                ));
            }
            let (m, v) = &mut state[idx];
            ndarray::Zip::from(&mut *m)
                .and(&mut *v)
                .and(&mut value)
                .and(&grad)
                .for_each(|m, v, p, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p = *p - lr_f * (m_hat / (v_hat.sqrt() + eps) + wd * *p);
                });
            idx += 1;
        });
    }
}

/// Trains a fresh model of the given variant on one task's demonstration
/// pairs. `log_sink`, when given, receives one JSON line per iteration.
pub fn train_task<F: Real>(
    task: &TaskRecord,
    variant: &VariantSpec,
    cfg: &TrainConfig,
    palette: &Palette,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<TrainedModel<F>, TrainError> {
    if task.train_pairs.is_empty() {
        return Err(TrainError::NoTrainPairs {
            task_id: task.task_id.clone(),
        });
    }
    if task.size_changing {
        return Err(TrainError::SizeChanging {
            task_id: task.task_id.clone(),
        });
    }

    let started = Instant::now();
    let mut model: CellModel<F> = variant.build(derive_stream_seed(cfg.seed, "init"));
    model.fire_rate = cfg.fire_rate;
    model.alive_masking = cfg.alive_masking;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(cfg.seed, "train"));

    let inputs: Vec<Array3<F>> = task
        .train_pairs
        .iter()
        .map(|p| encode_grid(&p.input, palette))
        .collect::<Result<_, _>>()?;
    let targets: Vec<Array3<F>> = task
        .train_pairs
        .iter()
        .map(|p| encode_grid(&p.output, palette))
        .collect::<Result<_, _>>()?;

    let mut optimizer = AdamW::new(cfg);
    let mut log = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let iter_started = Instant::now();
        let lr = cfg.learning_rate_at(iteration);
        let patch_iter = variant.patch_training && cfg.is_patch_iteration(iteration);

        model.zero_grads();
        let mut loss_sum = 0.0;
        for (x0, target) in inputs.iter().zip(&targets) {
            let steps = rng.random_range(cfg.rollout_steps.0..=cfg.rollout_steps.1);
            let traj = model.rollout_recorded(x0.clone(), steps, &mut rng);
            let (h, w, _) = x0.dim();
            let (loss, dfinal) = if patch_iter && h >= 3 && w >= 3 {
                let patches = sample_patches(h, w, cfg.patches_per_pair, &mut rng);
                patch_loss_grad(traj.final_state(), target, &patches, cfg.loss_channels)
            } else {
                mse_loss_grad(traj.final_state(), target, cfg.loss_channels)
            };
            loss_sum += loss;
            model.backprop(&traj, dfinal);
        }
        let loss = loss_sum / inputs.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                task_id: task.task_id.clone(),
                iteration,
                loss,
            });
        }

        normalize_gradients(&mut model);
        optimizer.step(&mut model, lr);

        let entry = IterationLog {
            iteration,
            loss,
            log_loss: clamped_log_loss(loss),
            learning_rate: lr,
            wall_ms: iter_started.elapsed().as_secs_f64() * 1e3,
        };
        if let Some(sink) = log_sink.as_deref_mut() {
            serde_json::to_writer(&mut *sink, &entry)
                .map_err(|e| TrainError::LogWrite(e.into()))?;
            sink.write_all(b"\n")?;
        }
        log.push(entry);
    }

    // Quality of the final parameters, measured on fresh rollouts.
    let mut final_loss_sum = 0.0;
    for (x0, target) in inputs.iter().zip(&targets) {
        let steps = rng.random_range(cfg.rollout_steps.0..=cfg.rollout_steps.1);
        let out = model.rollout(x0.clone(), steps, &mut rng);
        final_loss_sum += crate::codec::channel_mse(out.view(), target.view(), cfg.loss_channels);
    }
    let final_train_log_loss = clamped_log_loss(final_loss_sum / inputs.len() as f64);

    Ok(TrainedModel {
        variant: variant.clone(),
        seed: cfg.seed,
        iterations_run: cfg.iterations,
        model,
        final_train_log_loss,
        log,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
