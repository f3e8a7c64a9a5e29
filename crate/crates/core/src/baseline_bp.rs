//! Off-chip baseline: a dense sine MLP trained digitally with exact
//! gradients of the finite-difference loss, then mapped onto noisy meshes.
//!
//! The FD loss is a fixed composition of forward passes, so its parameter
//! gradient is the chain-rule sum of one backward pass per forward. With
//! `u_k = (T − t_k)·f(z_k) + ‖x_k‖₁` and
//! `r = (u_t − u_0)/ε_t + Σ_i (u_{+i} − 2u_0 + u_{−i})/ε² − c‖g‖² − s`,
//! the per-forward coefficients `∂r/∂u_k` are
//! `u_0: −1/ε_t − 2D/ε²`, `u_t: 1/ε_t`, `u_{±i}: 1/ε² ∓ c·g_i/ε`.

use ndarray::{Array1, Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::photonic_mesh::{ChipInstance, LayerWeights, NoiseConfig};
use crate::pinn::{
    fd_derivatives, hjb_residual, residual_loss, sample_collocation_with, validation_mse, CollocationBatch, FDConfig,
    PDEProblem, ScalarNet,
};
use crate::{Error, Result};

const POINTS_PER_TASK: usize = 8;

/// `f(z) = W3·sin(W2·sin(W1·z))` with `z = (x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseMLP {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub w3: Array2<f64>,
}

/// Gradients congruent to the three weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub w3: Array2<f64>,
}

impl ParamGradients {
    fn zeros_like(m: &DenseMLP) -> Self {
        Self {
            w1: Array2::zeros(m.w1.raw_dim()),
            w2: Array2::zeros(m.w2.raw_dim()),
            w3: Array2::zeros(m.w3.raw_dim()),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        self.w1 += &other.w1;
        self.w2 += &other.w2;
        self.w3 += &other.w3;
    }

    fn scale(&mut self, s: f64) {
        self.w1 *= s;
        self.w2 *= s;
        self.w3 *= s;
    }

    pub fn norm(&self) -> f64 {
        [&self.w1, &self.w2, &self.w3]
            .iter()
            .flat_map(|m| m.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, (1.0 / cols as f64).sqrt()).expect("finite std");
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

impl DenseMLP {
    pub fn new(w1: Array2<f64>, w2: Array2<f64>, w3: Array2<f64>) -> Result<Self> {
        let h = w1.nrows();
        if w2.dim() != (h, h) {
            return Err(Error::InvalidShape(format!("W2 must be {h}x{h}, got {:?}", w2.dim())));
        }
        if w3.dim() != (1, h) {
            return Err(Error::InvalidShape(format!("W3 must be 1x{h}, got {:?}", w3.dim())));
        }
        Ok(Self { w1, w2, w3 })
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, input)),
            w2: Array2::zeros((hidden, hidden)),
            w3: Array2::zeros((1, hidden)),
        }
    }

    /// Gaussian weights with variance `1/fan_in`.
    pub fn random(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w1: gaussian(hidden, input, &mut rng),
            w2: gaussian(hidden, hidden, &mut rng),
            w3: gaussian(1, hidden, &mut rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.w2.len() + self.w3.len()
    }

    pub fn layer_weights(&self) -> Vec<LayerWeights> {
        vec![
            LayerWeights::Dense(self.w1.clone()),
            LayerWeights::Dense(self.w2.clone()),
            LayerWeights::Dense(self.w3.clone()),
        ]
    }

    /// Chip programmed with these weights on an instance drawn from `(noise, seed)`.
    pub fn to_chip(&self, noise: NoiseConfig, seed: u64) -> Result<ChipInstance> {
        ChipInstance::from_weights(&self.layer_weights(), noise, seed)
    }

    fn cache(&self, z: &Array1<f64>) -> Cache {
        let a1 = self.w1.dot(z);
        let h1 = a1.mapv(f64::sin);
        let a2 = self.w2.dot(&h1);
        let h2 = a2.mapv(f64::sin);
        let f = self.w3.row(0).dot(&h2);
        Cache { a1, h1, a2, h2, f }
    }

    /// Accumulate `w · ∂f(z)/∂W` into `g`.
    fn backprop(&self, z: &Array1<f64>, c: &Cache, w: f64, g: &mut ParamGradients) {
        g.w3.row_mut(0).scaled_add(w, &c.h2);
        let mut d2 = self.w3.row(0).to_owned() * w;
        Zip::from(&mut d2).and(&c.a2).for_each(|d, &a| *d *= a.cos());
        outer_add(&mut g.w2, &d2, &c.h1);
        let mut d1 = self.w2.t().dot(&d2);
        Zip::from(&mut d1).and(&c.a1).for_each(|d, &a| *d *= a.cos());
        outer_add(&mut g.w1, &d1, z);
    }
}

struct Cache {
    a1: Array1<f64>,
    h1: Array1<f64>,
    a2: Array1<f64>,
    h2: Array1<f64>,
    f: f64,
}

fn outer_add(m: &mut Array2<f64>, u: &Array1<f64>, v: &Array1<f64>) {
    for (mut row, &ui) in m.rows_mut().into_iter().zip(u) {
        if ui != 0.0 {
            row.scaled_add(ui, v);
        }
    }
}

fn assemble(x: &[f64], t: f64, width: usize) -> Array1<f64> {
    let mut z = Array1::zeros(width);
    for (zi, &xi) in z.iter_mut().zip(x) {
        *zi = xi;
    }
    z[x.len()] = t;
    z
}

pub fn dense_forward(mlp: &DenseMLP, x: &[f64], t: f64) -> f64 {
    assert!(
        x.len() < mlp.input_dim(),
        "MLP input width {} cannot hold {} coordinates",
        mlp.input_dim(),
        x.len() + 1
    );
    mlp.cache(&assemble(x, t, mlp.input_dim())).f
}

impl ScalarNet for DenseMLP {
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        dense_forward(self, x, t)
    }
}

/// Residual and gradient contribution of one collocation point.
fn point_gradient(
    mlp: &DenseMLP,
    x: &[f64],
    t: f64,
    cfg: &FDConfig,
    prob: &PDEProblem,
    g: &mut ParamGradients,
) -> Result<f64> {
    let d = x.len();
    let (eps, eps_t) = (cfg.eps_x, cfg.eps_t);
    let width = mlp.input_dim();
    let u_of = |x: &[f64], t: f64| crate::pinn::transformed_forward(mlp, prob, x, t);
    let est = fd_derivatives(&u_of, x, t, cfg)?;
    let r = hjb_residual(&est, prob);

    // (input point, ∂r/∂u) for every forward of the stencil.
    let mut stencil: Vec<(Vec<f64>, f64, f64)> = Vec::with_capacity(2 * d + 2);
    stencil.push((x.to_vec(), t, -1.0 / eps_t - 2.0 * d as f64 / (eps * eps)));
    stencil.push((x.to_vec(), t + eps_t, 1.0 / eps_t));
    for i in 0..d {
        let gi = est.grad_x[i];
        let mut xp = x.to_vec();
        xp[i] += eps;
        stencil.push((xp, t, 1.0 / (eps * eps) - prob.grad_coeff * gi / eps));
        let mut xm = x.to_vec();
        xm[i] -= eps;
        stencil.push((xm, t, 1.0 / (eps * eps) + prob.grad_coeff * gi / eps));
    }
    for (xs, ts, coeff) in &stencil {
        let z = assemble(xs, *ts, width);
        let cache = mlp.cache(&z);
        mlp.backprop(&z, &cache, r * coeff * (prob.horizon - ts), g);
    }
    Ok(r)
}

/// Exact gradient of the mean squared FD residual with respect to the weights.
pub fn loss_param_gradient(
    mlp: &DenseMLP,
    batch: &CollocationBatch,
    cfg: &FDConfig,
    prob: &PDEProblem,
) -> Result<(f64, ParamGradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let partials: Vec<(f64, ParamGradients)> = batch
        .points
        .par_chunks(POINTS_PER_TASK)
        .map(|chunk| {
            let mut g = ParamGradients::zeros_like(mlp);
            let mut sq = 0.0;
            for p in chunk {
                let r = point_gradient(mlp, &p.x, p.t, cfg, prob, &mut g)?;
                sq += r * r;
            }
            Ok((sq, g))
        })
        .collect::<Result<_>>()?;
    let mut total = ParamGradients::zeros_like(mlp);
    let mut sq = 0.0;
    for (s, g) in &partials {
        sq += s;
        total.add_assign(g);
    }
    let n = batch.len() as f64;
    total.scale(2.0 / n);
    Ok((sq / n, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffchipConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default)]
    pub fd: FDConfig,
    pub init_seed: u64,
    pub train_seed: u64,
    /// Train through freshly sampled hardware imperfections each epoch.
    #[serde(default)]
    pub hardware_aware: Option<NoiseConfig>,
}

impl Default for OffchipConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 2000,
            batch_size: 100,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            fd: FDConfig::default(),
            init_seed: 1,
            train_seed: 3,
            hardware_aware: None,
        }
    }
}

impl OffchipConfig {
    pub fn validate(&self) -> Result<()> {
        self.fd.validate()?;
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("hidden and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        if let Some(n) = &self.hardware_aware {
            n.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OffchipStatus {
    Completed,
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone)]
pub struct OffchipRun {
    pub mlp: DenseMLP,
    pub history: Vec<f64>,
    pub status: OffchipStatus,
}

const DIVERGENCE_LOSS: f64 = 1e6;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: ParamGradients,
    v: ParamGradients,
    step: i32,
}

impl Adam {
    fn update(&mut self, mlp: &mut DenseMLP, g: &ParamGradients, cfg: &OffchipConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = cfg.learning_rate;
        let triples = [
            (&mut mlp.w1, &mut self.m.w1, &mut self.v.w1, &g.w1),
            (&mut mlp.w2, &mut self.m.w2, &mut self.v.w2, &g.w2),
            (&mut mlp.w3, &mut self.m.w3, &mut self.v.w3, &g.w3),
        ];
        for (w, m, v, g) in triples {
            Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
    }
}

/// Realized weights of `mlp` on a chip drawn from `(noise, seed)`.
fn realized_mlp(mlp: &DenseMLP, noise: NoiseConfig, seed: u64) -> Result<DenseMLP> {
    let mut ws = mlp.to_chip(noise, seed)?.realized_weights().into_iter();
    let (w1, w2, w3) = (ws.next(), ws.next(), ws.next());
    DenseMLP::new(
        w1.expect("three layers"),
        w2.expect("three layers"),
        w3.expect("three layers"),
    )
}

/// Adam on the FD residual loss. With `hardware_aware` set, each epoch's
/// loss and gradient are taken at the weights a freshly sampled noisy chip
/// realizes and applied to the ideal weights (straight-through).
pub fn offchip_train(mlp: DenseMLP, prob: &PDEProblem, cfg: &OffchipConfig) -> Result<OffchipRun> {
    cfg.validate()?;
    if mlp.input_dim() < prob.dim + 1 {
        return Err(Error::InvalidConfig(format!(
            "MLP input width {} cannot hold {} inputs",
            mlp.input_dim(),
            prob.dim + 1
        )));
    }
    let mut mlp = mlp;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train_seed);
    let mut adam = Adam {
        m: ParamGradients::zeros_like(&mlp),
        v: ParamGradients::zeros_like(&mlp),
        step: 0,
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batch = sample_collocation_with(prob.dim, cfg.batch_size, &cfg.fd, &mut rng);
        let (loss, grad) = match &cfg.hardware_aware {
            Some(noise) => {
                let seed = cfg.train_seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64);
                loss_param_gradient(&realized_mlp(&mlp, *noise, seed)?, &batch, &cfg.fd, prob)?
            }
            None => loss_param_gradient(&mlp, &batch, &cfg.fd, prob)?,
        };
        history.push(loss);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Ok(OffchipRun {
                mlp,
                history,
                status: OffchipStatus::Diverged { epoch, loss },
            });
        }
        adam.update(&mut mlp, &grad, cfg);
    }
    Ok(OffchipRun {
        mlp,
        history,
        status: OffchipStatus::Completed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub clean_mse: f64,
    pub noisy_mse: Vec<f64>,
}

impl Degradation {
    pub fn median_noisy(&self) -> f64 {
        let mut v = self.noisy_mse.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        match n {
            0 => f64::NAN,
            _ if n % 2 == 1 => v[n / 2],
            _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        }
    }
}

/// Map the trained weights onto meshes and compare the noise-free chip with
/// `noise_seeds.len()` independently fabricated noisy ones.
pub fn map_and_degrade(
    mlp: &DenseMLP,
    prob: &PDEProblem,
    noise: &NoiseConfig,
    noise_seeds: &[u64],
    n_val: usize,
    val_seed: u64,
) -> Result<Degradation> {
    let clean = mlp.to_chip(NoiseConfig::NONE, 0)?;
    let clean_mse = validation_mse(&clean, prob, n_val, val_seed);
    let noisy_mse = noise_seeds
        .iter()
        .map(|&s| Ok(validation_mse(&clean.with_noise(*noise, s)?, prob, n_val, val_seed)))
        .collect::<Result<_>>()?;
    Ok(Degradation { clean_mse, noisy_mse })
}

/// FD residual loss of the dense network on `batch`.
pub fn dense_residual_loss(mlp: &DenseMLP, batch: &CollocationBatch, cfg: &FDConfig, prob: &PDEProblem) -> Result<f64> {
    residual_loss(mlp, batch, cfg, prob).map(|(l, _)| l)
}
