//! Zeroth-order on-chip training: SPSA gradient estimates and sign-SGD.
//!
//! Only forward passes are used. Each epoch evaluates the loss once at the
//! current phases and `N` more times at randomly perturbed phases, forms
//! the one-sided SPSA estimate and moves every parameter by `±α`.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::photonic_mesh::{ChipInstance, LayerWeights, NoiseConfig, ParamKind};
use crate::pinn::{residual_loss, sample_collocation_with, validation_mse, FDConfig, PDEProblem};
use crate::tensor_train::{tt_init, TTShape};
use crate::{wrap_phase, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SPSAConfig {
    pub num_perturbations: usize,
    /// Sampling radius `μ` in radians.
    pub radius: f64,
    pub seed: u64,
}

impl Default for SPSAConfig {
    fn default() -> Self {
        Self {
            num_perturbations: 10,
            radius: 0.01,
            seed: 0,
        }
    }
}

impl SPSAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_perturbations == 0 {
            return Err(Error::InvalidConfig("spsa.num_perturbations must be >= 1".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "spsa.radius must be > 0, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

/// Network architecture programmed on the chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetworkSpec {
    /// Two square TT hidden layers of shape `tt` and a dense output row.
    Tonn { tt: TTShape },
    /// Dense `(D+1) → hidden → hidden → 1` network.
    OnnDense { hidden: usize },
}

impl NetworkSpec {
    pub fn validate(&self, prob: &PDEProblem) -> Result<()> {
        match self {
            NetworkSpec::Tonn { tt } => {
                if tt.rows() != tt.cols() {
                    return Err(Error::InvalidConfig(format!(
                        "TT layers must be square, got {}x{}",
                        tt.rows(),
                        tt.cols()
                    )));
                }
                if tt.cols() < prob.dim + 1 {
                    return Err(Error::InvalidConfig(format!(
                        "TT input width {} cannot hold {} inputs",
                        tt.cols(),
                        prob.dim + 1
                    )));
                }
            }
            NetworkSpec::OnnDense { hidden } => {
                if *hidden == 0 {
                    return Err(Error::InvalidConfig("hidden width must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        match self {
            NetworkSpec::Tonn { tt } => tt.rows(),
            NetworkSpec::OnnDense { hidden } => *hidden,
        }
    }

    /// Weight count of the represented network (no biases).
    pub fn weight_count(&self, prob: &PDEProblem) -> usize {
        match self {
            NetworkSpec::Tonn { tt } => 2 * crate::tensor_train::tt_param_count(tt) + tt.rows(),
            NetworkSpec::OnnDense { hidden } => hidden * (prob.dim + 1) + hidden * hidden + hidden,
        }
    }
}

/// Halve (or scale by `factor`) the learning rate every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDecay {
    pub factor: f64,
    pub every: usize,
}

impl Default for StepDecay {
    fn default() -> Self {
        Self {
            factor: 0.5,
            every: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub noise: u64,
    pub train: u64,
    pub validation: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            init: 1,
            noise: 2,
            train: 3,
            validation: 4,
        }
    }
}

fn default_val_every() -> usize {
    50
}

fn default_n_val() -> usize {
    1000
}

fn default_max_retries() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub problem: PDEProblem,
    pub network: NetworkSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub lr_decay: Option<StepDecay>,
    pub spsa: SPSAConfig,
    #[serde(default)]
    pub fd: FDConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_val_every")]
    pub val_every: usize,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
}

impl TrainConfig {
    /// The 20-dimensional run with the 1024-wide TT network.
    pub fn hjb20() -> Self {
        Self {
            problem: PDEProblem::hjb20(),
            network: NetworkSpec::Tonn {
                tt: TTShape::hjb20_1024(),
            },
            epochs: 5000,
            batch_size: 100,
            learning_rate: 1e-3,
            lr_decay: None,
            spsa: SPSAConfig::default(),
            fd: FDConfig::default(),
            noise: NoiseConfig::default(),
            seeds: Seeds::default(),
            val_every: default_val_every(),
            n_val: default_n_val(),
            max_retries: default_max_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate(&self.problem)?;
        self.spsa.validate()?;
        self.fd.validate()?;
        self.noise.validate()?;
        if self.problem.dim == 0 {
            return Err(Error::InvalidConfig("problem.dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if self.val_every == 0 || self.n_val == 0 {
            return Err(Error::InvalidConfig("val_every and n_val must be >= 1".into()));
        }
        if let Some(d) = &self.lr_decay {
            if d.every == 0 || d.factor.is_nan() || d.factor <= 0.0 {
                return Err(Error::InvalidConfig("lr_decay needs every >= 1 and factor > 0".into()));
            }
        }
        Ok(())
    }

    /// Inferences one epoch really spends: base plus `N` perturbed loss evaluations.
    pub fn inferences_per_epoch(&self) -> u64 {
        (self.problem.evals_per_point() * self.batch_size * (self.spsa.num_perturbations + 1)) as u64
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, (1.0 / cols as f64).sqrt()).expect("finite std");
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

/// Initial weights for `spec`, before mapping to phases.
pub fn initial_weights(spec: &NetworkSpec, prob: &PDEProblem, seed: u64) -> Vec<LayerWeights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        NetworkSpec::Tonn { tt } => vec![
            LayerWeights::TensorTrain(tt_init(tt, rng.random())),
            LayerWeights::TensorTrain(tt_init(tt, rng.random())),
            LayerWeights::Dense(gaussian_matrix(1, tt.rows(), &mut rng)),
        ],
        NetworkSpec::OnnDense { hidden } => vec![
            LayerWeights::Dense(gaussian_matrix(*hidden, prob.dim + 1, &mut rng)),
            LayerWeights::Dense(gaussian_matrix(*hidden, *hidden, &mut rng)),
            LayerWeights::Dense(gaussian_matrix(1, *hidden, &mut rng)),
        ],
    }
}

/// The freshly fabricated, randomly programmed chip for a run.
pub fn build_chip(cfg: &TrainConfig) -> Result<ChipInstance> {
    cfg.validate()?;
    let weights = initial_weights(&cfg.network, &cfg.problem, cfg.seeds.init);
    ChipInstance::from_weights(&weights, cfg.noise, cfg.seeds.noise)
}

/// One-sided SPSA: `Σ_i [L(Φ + μξ_i) − L(Φ)] ξ_i / (N μ)` with `ξ_i ~ N(0, I)`.
///
/// Calls `loss_fn` exactly `N` times; the sum runs in sample order.
pub fn spsa_gradient<F, R>(
    loss_fn: &mut F,
    phi: &[f64],
    base_loss: f64,
    cfg: &SPSAConfig,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if !base_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "SPSA base loss".into(),
            value: base_loss,
        });
    }
    let d = phi.len();
    let scale = 1.0 / (cfg.num_perturbations as f64 * cfg.radius);
    let mut grad = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut probe = vec![0.0; d];
    for i in 0..cfg.num_perturbations {
        for ((x, p), &base) in xi.iter_mut().zip(probe.iter_mut()).zip(phi) {
            *x = rng.sample(StandardNormal);
            *p = base + cfg.radius * *x;
        }
        let loss = loss_fn(&probe)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                context: format!("SPSA perturbation {i}"),
                value: loss,
            });
        }
        let w = (loss - base_loss) * scale;
        for (g, &x) in grad.iter_mut().zip(&xi) {
            *g += w * x;
        }
    }
    Ok(grad)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Φ − α·sign(ĝ)` reduced mod 2π; `sign(0) = 0`.
pub fn sign_step(phi: &[f64], g_hat: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if phi.len() != g_hat.len() {
        return Err(Error::DimensionMismatch {
            context: "sign_step",
            expected: phi.len(),
            actual: g_hat.len(),
        });
    }
    Ok(phi
        .iter()
        .zip(g_hat)
        .map(|(&p, &g)| if g == 0.0 { p } else { wrap_phase(p - alpha * sign(g)) })
        .collect())
}

/// Sign step over a chip parameter vector: phases wrap, sigmas clamp at 0.
pub fn sign_step_params(params: &[f64], kinds: &[ParamKind], g_hat: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if params.len() != g_hat.len() || params.len() != kinds.len() {
        return Err(Error::DimensionMismatch {
            context: "sign_step_params",
            expected: params.len(),
            actual: g_hat.len().min(kinds.len()),
        });
    }
    Ok(params
        .iter()
        .zip(kinds)
        .zip(g_hat)
        .map(|((&p, kind), &g)| {
            if g == 0.0 {
                return p;
            }
            let moved = p - alpha * sign(g);
            match kind {
                ParamKind::Phase => wrap_phase(moved),
                ParamKind::Sigma => moved.max(0.0),
            }
        })
        .collect())
}

/// Digital-controller state carried across epochs.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub cum_inferences: u64,
    pub learning_rate: f64,
    batch_rng: ChaCha8Rng,
    spsa_rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            cum_inferences: 0,
            learning_rate: cfg.learning_rate,
            batch_rng: ChaCha8Rng::seed_from_u64(cfg.seeds.train),
            spsa_rng: ChaCha8Rng::seed_from_u64(cfg.spsa.seed),
        }
    }
}

/// Outcome of one SPSA + sign-SGD step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Loss at the phases the epoch started from.
    pub train_loss: f64,
    pub inferences: u64,
}

/// Sample a batch, estimate the gradient from `N + 1` loss evaluations and
/// update the commanded parameters, all devices reprogrammed at once.
///
/// On a non-finite loss the chip is left untouched and the error returned.
pub fn train_epoch(chip: &mut ChipInstance, cfg: &TrainConfig, state: &mut TrainState) -> Result<EpochStats> {
    let prob = &cfg.problem;
    let batch = sample_collocation_with(prob.dim, cfg.batch_size, &cfg.fd, &mut state.batch_rng);
    let params = chip.params();
    let (base_loss, base_count) = residual_loss(&*chip, &batch, &cfg.fd, prob)?;
    if !base_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: format!("epoch {} base loss", state.epoch + 1),
            value: base_loss,
        });
    }
    let mut inferences = base_count;
    let mut loss_fn = |probe: &[f64]| -> Result<f64> {
        let perturbed = chip.with_params(probe)?;
        let (loss, count) = residual_loss(&perturbed, &batch, &cfg.fd, prob)?;
        inferences += count;
        Ok(loss)
    };
    let grad = spsa_gradient(&mut loss_fn, &params, base_loss, &cfg.spsa, &mut state.spsa_rng)?;
    let updated = sign_step_params(&params, &chip.param_kinds(), &grad, state.learning_rate)?;
    chip.set_params(&updated)?;

    state.epoch += 1;
    state.cum_inferences += inferences;
    if let Some(decay) = &cfg.lr_decay {
        if state.epoch.is_multiple_of(decay.every) {
            state.learning_rate *= decay.factor;
        }
    }
    Ok(EpochStats {
        train_loss: base_loss,
        inferences,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Present on logged epochs (every `val_every` and the last one).
    pub val_mse: Option<f64>,
    pub cum_inferences: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub records: Vec<EpochRecord>,
    pub initial_val_mse: f64,
    pub chip: ChipInstance,
}

impl TrainRun {
    pub fn final_val_mse(&self) -> f64 {
        self.records
            .iter()
            .rev()
            .find_map(|r| r.val_mse)
            .unwrap_or(self.initial_val_mse)
    }
}

/// Train from a fresh chip; see [`train_with`].
pub fn train(cfg: &TrainConfig) -> Result<TrainRun> {
    train_with(cfg, |_, _| Ok(()))
}

/// Run all epochs, calling `observer` after each completed one.
///
/// A failed epoch is retried with the next batch and perturbations; more
/// than `max_retries` consecutive failures abort the run.
pub fn train_with<F>(cfg: &TrainConfig, mut observer: F) -> Result<TrainRun>
where
    F: FnMut(&EpochRecord, &ChipInstance) -> Result<()>,
{
    let mut chip = build_chip(cfg)?;
    let initial_val_mse = validation_mse(&chip, &cfg.problem, cfg.n_val, cfg.seeds.validation);
    let mut state = TrainState::new(cfg);
    let mut records = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    let mut failures = 0;
    while state.epoch < cfg.epochs {
        let stats = match train_epoch(&mut chip, cfg, &mut state) {
            Ok(s) => {
                failures = 0;
                s
            }
            Err(e @ Error::NonFiniteLoss { .. }) => {
                failures += 1;
                if failures > cfg.max_retries {
                    return Err(e);
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let epoch = state.epoch;
        let val_mse = (epoch.is_multiple_of(cfg.val_every) || epoch == cfg.epochs)
            .then(|| validation_mse(&chip, &cfg.problem, cfg.n_val, cfg.seeds.validation));
        let record = EpochRecord {
            epoch,
            train_loss: stats.train_loss,
            val_mse,
            cum_inferences: state.cum_inferences,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        observer(&record, &chip)?;
        records.push(record);
    }
    Ok(TrainRun {
        records,
        initial_val_mse,
        chip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            problem: PDEProblem::hjb_toy(2),
            network: NetworkSpec::OnnDense { hidden: 4 },
            epochs,
            batch_size: 10,
            learning_rate: 1e-2,
            lr_decay: None,
            spsa: SPSAConfig {
                num_perturbations: 3,
                radius: 0.01,
                seed: 5,
            },
            fd: FDConfig::default(),
            noise: NoiseConfig::default(),
            seeds: Seeds::default(),
            val_every: 2,
            n_val: 50,
            max_retries: 1,
        }
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = |_: &[f64]| Ok(3.0);
        let g = spsa_gradient(&mut f, &[0.1; 16], 3.0, &SPSAConfig::default(), &mut rng).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spsa_calls_loss_exactly_n_times_and_is_reproducible() {
        let cfg = SPSAConfig {
            num_perturbations: 1,
            ..SPSAConfig::default()
        };
        let mut calls = 0;
        let mut f = |p: &[f64]| {
            calls += 1;
            Ok(p.iter().sum())
        };
        let a = spsa_gradient(&mut f, &[0.0; 8], 0.0, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = spsa_gradient(&mut f, &[0.0; 8], 0.0, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(calls, 2);
        assert_eq!(a, b);
    }

    #[test]
    fn spsa_is_unbiased_on_linear_losses() {
        let d = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let phi = vec![0.0; d];
        let cfg = SPSAConfig {
            radius: 1e-3,
            ..SPSAConfig::default()
        };
        let mut f = |p: &[f64]| Ok(p.iter().zip(&c).map(|(a, b)| a * b).sum());
        let mut mean = vec![0.0; d];
        for _ in 0..2000 {
            let g = spsa_gradient(&mut f, &phi, 0.0, &cfg, &mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v / 2000.0;
            }
        }
        let dot: f64 = mean.iter().zip(&c).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (norm(&mean) * norm(&c)) >= 0.9);
    }

    #[test]
    fn spsa_rejects_non_finite_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = |_: &[f64]| Ok(f64::NAN);
        assert!(matches!(
            spsa_gradient(&mut f, &[0.0; 4], 0.0, &SPSAConfig::default(), &mut rng),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn sign_step_examples() {
        let phi = [1.0, 2.0, 3.0];
        let down = sign_step(&phi, &[0.5, 2.0, 1e-9], 0.01).unwrap();
        for (a, b) in down.iter().zip(phi) {
            assert!((a - (b - 0.01)).abs() < 1e-15);
        }
        assert_eq!(sign_step(&phi, &[0.0; 3], 0.01).unwrap(), phi.to_vec());
        assert!(sign_step(&phi, &[0.0; 2], 0.01).is_err());
        // Wraps below zero.
        let wrapped = sign_step(&[0.005], &[1.0], 0.01).unwrap();
        assert!((wrapped[0] - (std::f64::consts::TAU - 0.005)).abs() < 1e-12);
    }

    #[test]
    fn sign_step_mixed_signs_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi: Vec<f64> = (0..100).map(|_| rng.random_range(0.1..6.0)).collect();
        let g: Vec<f64> = (0..100)
            .map(|i| if i % 7 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let out = sign_step(&phi, &g, 0.05).unwrap();
        for i in 0..100 {
            let expect = if g[i] > 0.0 {
                phi[i] - 0.05
            } else if g[i] < 0.0 {
                phi[i] + 0.05
            } else {
                phi[i]
            };
            assert!((out[i] - expect).abs() < 1e-12);
            assert!((out[i] - phi[i]).abs() <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn sign_step_params_clamps_sigma() {
        let out = sign_step_params(
            &[0.001, 0.001],
            &[ParamKind::Sigma, ParamKind::Phase],
            &[1.0, 1.0],
            0.01,
        )
        .unwrap();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - (std::f64::consts::TAU - 0.009)).abs() < 1e-12);
    }

    #[test]
    fn epoch_counts_inferences() {
        let cfg = toy_config(1);
        let mut chip = build_chip(&cfg).unwrap();
        let mut state = TrainState::new(&cfg);
        let stats = train_epoch(&mut chip, &cfg, &mut state).unwrap();
        assert_eq!(stats.inferences, 6 * 10 * 4);
        assert_eq!(cfg.inferences_per_epoch(), stats.inferences);

        let full = TrainConfig::hjb20();
        assert_eq!(full.inferences_per_epoch(), 46_200);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut cfg = toy_config(1);
        cfg.learning_rate = 0.0;
        let mut chip = build_chip(&cfg).unwrap();
        let before = validation_mse(&chip, &cfg.problem, 100, 9);
        let params = chip.params();
        train_epoch(&mut chip, &cfg, &mut TrainState::new(&cfg)).unwrap();
        assert_eq!(chip.params(), params);
        assert_eq!(validation_mse(&chip, &cfg.problem, 100, 9), before);
    }

    #[test]
    fn update_magnitude_is_bounded_by_alpha() {
        let cfg = toy_config(1);
        let mut chip = build_chip(&cfg).unwrap();
        let before = chip.params();
        train_epoch(&mut chip, &cfg, &mut TrainState::new(&cfg)).unwrap();
        for (a, b) in chip.params().iter().zip(&before) {
            let d = (a - b).abs();
            let wrapped = d.min(std::f64::consts::TAU - d);
            assert!(wrapped <= cfg.learning_rate + 1e-12);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = toy_config(4);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.records.len(), 4);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.val_mse.map(f64::to_bits), y.val_mse.map(f64::to_bits));
            assert_eq!(x.cum_inferences, y.cum_inferences);
        }
        assert_eq!(a.chip, b.chip);
        assert!(a.records.windows(2).all(|w| w[1].cum_inferences > w[0].cum_inferences));
        assert!(a.records[0].val_mse.is_none() && a.records[1].val_mse.is_some());
    }

    #[test]
    fn zero_epochs_returns_initial_chip() {
        let cfg = toy_config(0);
        let run = train(&cfg).unwrap();
        assert!(run.records.is_empty());
        assert_eq!(run.chip, build_chip(&cfg).unwrap());
    }

    #[test]
    fn network_weight_counts() {
        let prob = PDEProblem::hjb20();
        let tonn = NetworkSpec::Tonn {
            tt: TTShape::hjb20_1024(),
        };
        assert_eq!(tonn.weight_count(&prob), 1536);
        assert_eq!(NetworkSpec::OnnDense { hidden: 1024 }.weight_count(&prob), 1_071_104);
    }

    #[test]
    fn learning_rate_decay() {
        let mut cfg = toy_config(4);
        cfg.lr_decay = Some(StepDecay { factor: 0.5, every: 2 });
        let mut chip = build_chip(&cfg).unwrap();
        let mut state = TrainState::new(&cfg);
        for _ in 0..4 {
            train_epoch(&mut chip, &cfg, &mut state).unwrap();
        }
        assert_eq!(state.learning_rate, cfg.learning_rate * 0.25);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = toy_config(1);
        cfg.spsa.num_perturbations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = toy_config(1);
        cfg.network = NetworkSpec::Tonn {
            tt: TTShape::new(vec![2], vec![2], vec![1, 1]).unwrap(),
        };
        assert!(cfg.validate().is_err());
    }
}
