//! The HJB benchmark, BP-free loss evaluation and validation.
//!
//! Derivatives of the network with respect to its inputs are estimated by
//! finite differences, so a loss evaluation is a fixed number of plain
//! forward passes: `2D + 2` per collocation point (center, `±ε` along each
//! spatial axis, and one forward step in time).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::photonic_mesh::ChipInstance;
use crate::{Error, Result};

/// A scalar network `f(x, t)`.
pub trait ScalarNet: Sync {
    fn eval(&self, x: &[f64], t: f64) -> f64;
}

impl<F> ScalarNet for F
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        self(x, t)
    }
}

/// Chips consume `(x_1, …, x_D, t)` zero-padded to their input width and
/// report their first output.
impl ScalarNet for ChipInstance {
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        let width = self.input_dim();
        assert!(
            x.len() < width,
            "chip input width {width} cannot hold {} coordinates",
            x.len() + 1
        );
        let mut z = vec![0.0; width];
        z[..x.len()].copy_from_slice(x);
        z[x.len()] = t;
        self.forward(&z).expect("input sized to chip")[0]
    }
}

/// `∂_t u + Δu − c‖∇_x u‖² = s` on `[0,1]^D × [0,T]` with `u(x,T) = ‖x‖₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PDEProblem {
    pub dim: usize,
    pub grad_coeff: f64,
    pub source: f64,
    pub horizon: f64,
}

impl PDEProblem {
    /// The 20-dimensional benchmark.
    pub fn hjb20() -> Self {
        Self {
            dim: 20,
            grad_coeff: 0.05,
            source: -2.0,
            horizon: 1.0,
        }
    }

    /// Lower-dimensional variant whose source keeps `‖x‖₁ + 1 − t` exact.
    pub fn hjb_toy(dim: usize) -> Self {
        let grad_coeff = 0.05;
        Self {
            dim,
            grad_coeff,
            source: -1.0 - grad_coeff * dim as f64,
            horizon: 1.0,
        }
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        l1_norm(x)
    }

    pub fn exact_solution(&self, x: &[f64], t: f64) -> f64 {
        l1_norm(x) + self.horizon - t
    }

    /// Forward evaluations needed per collocation point.
    pub fn evals_per_point(&self) -> usize {
        2 * self.dim + 2
    }
}

fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FDConfig {
    pub eps_x: f64,
    pub eps_t: f64,
}

impl Default for FDConfig {
    fn default() -> Self {
        Self {
            eps_x: 1e-2,
            eps_t: 1e-2,
        }
    }
}

impl FDConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_x > 0.0 && self.eps_x < 0.5 && self.eps_t > 0.0 && self.eps_t < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "finite-difference steps out of range: eps_x={}, eps_t={}",
                self.eps_x, self.eps_t
            )));
        }
        Ok(())
    }

    pub fn check_point(&self, x: &[f64], t: f64) -> Result<()> {
        if let Some((i, v)) = x
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= self.eps_x && v <= 1.0 - self.eps_x))
        {
            return Err(Error::UnsafePoint(format!(
                "x[{i}] = {v} outside [{}, {}]",
                self.eps_x,
                1.0 - self.eps_x
            )));
        }
        if !(t >= 0.0 && t <= 1.0 - self.eps_t) {
            return Err(Error::UnsafePoint(format!("t = {t} outside [0, {}]", 1.0 - self.eps_t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationPoint {
    pub x: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CollocationBatch {
    pub points: Vec<CollocationPoint>,
}

impl CollocationBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    pub u: f64,
    pub du_dt: f64,
    pub grad_x: Vec<f64>,
    pub laplacian: f64,
    /// Distinct evaluations of `u` spent on this estimate.
    pub evaluations: usize,
}

/// `u(x, t) = (T − t)·f(x, t) + ‖x‖₁`, exact at the terminal time.
pub fn transformed_forward<N: ScalarNet + ?Sized>(net: &N, prob: &PDEProblem, x: &[f64], t: f64) -> f64 {
    (prob.horizon - t) * net.eval(x, t) + l1_norm(x)
}

/// Central differences in space, forward difference in time.
pub fn fd_derivatives<U>(u_fn: &U, x: &[f64], t: f64, cfg: &FDConfig) -> Result<DerivativeEstimate>
where
    U: Fn(&[f64], f64) -> f64 + ?Sized,
{
    cfg.check_point(x, t)?;
    let (eps, eps_t) = (cfg.eps_x, cfg.eps_t);
    let u0 = u_fn(x, t);
    let mut evaluations = 1;
    let mut probe = x.to_vec();
    let mut grad_x = Vec::with_capacity(x.len());
    let mut laplacian = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = u_fn(&probe, t);
        probe[i] = x[i] - eps;
        let um = u_fn(&probe, t);
        probe[i] = x[i];
        evaluations += 2;
        grad_x.push((up - um) / (2.0 * eps));
        laplacian += (up - 2.0 * u0 + um) / (eps * eps);
    }
    let ut = u_fn(x, t + eps_t);
    evaluations += 1;
    Ok(DerivativeEstimate {
        u: u0,
        du_dt: (ut - u0) / eps_t,
        grad_x,
        laplacian,
        evaluations,
    })
}

/// `r = ∂_t u + Δu − c‖∇u‖² − s`.
pub fn hjb_residual(d: &DerivativeEstimate, prob: &PDEProblem) -> f64 {
    let grad_sq: f64 = d.grad_x.iter().map(|g| g * g).sum();
    d.du_dt + d.laplacian - prob.grad_coeff * grad_sq - prob.source
}

/// Mean squared residual of an arbitrary `u`, with the evaluation count.
///
/// Per-point work may run in parallel; the reduction is in index order.
pub fn residual_loss_of<U>(u_fn: &U, batch: &CollocationBatch, cfg: &FDConfig, prob: &PDEProblem) -> Result<(f64, u64)>
where
    U: Fn(&[f64], f64) -> f64 + Sync + ?Sized,
{
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let per_point: Vec<(f64, usize)> = batch
        .points
        .par_iter()
        .map(|p| {
            if p.x.len() != prob.dim {
                return Err(Error::DimensionMismatch {
                    context: "collocation point",
                    expected: prob.dim,
                    actual: p.x.len(),
                });
            }
            let d = fd_derivatives(u_fn, &p.x, p.t, cfg)?;
            Ok((hjb_residual(&d, prob), d.evaluations))
        })
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut count = 0u64;
    for (r, n) in per_point {
        sum += r * r;
        count += n as u64;
    }
    Ok((sum / batch.len() as f64, count))
}

/// Residual loss of a network through the terminal-exact transform.
pub fn residual_loss<N: ScalarNet + ?Sized>(
    net: &N,
    batch: &CollocationBatch,
    cfg: &FDConfig,
    prob: &PDEProblem,
) -> Result<(f64, u64)> {
    residual_loss_of(
        &|x: &[f64], t: f64| transformed_forward(net, prob, x, t),
        batch,
        cfg,
        prob,
    )
}

/// Mean squared terminal mismatch `u(x, T) − g(x)` over `xs`.
pub fn initial_loss<U>(u_fn: &U, xs: &[Vec<f64>], prob: &PDEProblem) -> f64
where
    U: Fn(&[f64], f64) -> f64 + ?Sized,
{
    if xs.is_empty() {
        return 0.0;
    }
    let sum: f64 = xs
        .iter()
        .map(|x| (u_fn(x, prob.horizon) - prob.terminal(x)).powi(2))
        .sum();
    sum / xs.len() as f64
}

/// `L = L_r + λ·L_0`.
pub fn total_loss(residual: f64, initial: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        residual
    } else {
        residual + lambda * initial
    }
}

/// Uniform points on the finite-difference-safe domain.
pub fn sample_collocation_with<R: Rng + ?Sized>(dim: usize, n: usize, cfg: &FDConfig, rng: &mut R) -> CollocationBatch {
    let points = (0..n)
        .map(|_| {
            let x = (0..dim)
                .map(|_| rng.random_range(cfg.eps_x..=1.0 - cfg.eps_x))
                .collect();
            let t = rng.random_range(0.0..=1.0 - cfg.eps_t);
            CollocationPoint { x, t }
        })
        .collect();
    CollocationBatch { points }
}

pub fn sample_collocation(dim: usize, n: usize, cfg: &FDConfig, seed: u64) -> CollocationBatch {
    sample_collocation_with(dim, n, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Uniform points on the terminal slice `t = T`.
pub fn sample_terminal(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..=1.0)).collect())
        .collect()
}

/// MSE against the exact solution on `n_val` uniform points of `[0,1]^D × [0,T]`.
pub fn validation_mse<N: ScalarNet + ?Sized>(net: &N, prob: &PDEProblem, n_val: usize, seed: u64) -> f64 {
    validation_mse_of(
        &|x: &[f64], t: f64| transformed_forward(net, prob, x, t),
        prob,
        n_val,
        seed,
    )
}

pub fn validation_mse_of<U>(u_fn: &U, prob: &PDEProblem, n_val: usize, seed: u64) -> f64
where
    U: Fn(&[f64], f64) -> f64 + Sync + ?Sized,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(Vec<f64>, f64)> = (0..n_val.max(1))
        .map(|_| {
            let x = (0..prob.dim).map(|_| rng.random_range(0.0..=1.0)).collect();
            (x, rng.random_range(0.0..=prob.horizon))
        })
        .collect();
    let errs: Vec<f64> = points
        .par_iter()
        .map(|(x, t)| (u_fn(x, *t) - prob.exact_solution(x, *t)).powi(2))
        .collect();
    errs.iter().sum::<f64>() / errs.len() as f64
}
