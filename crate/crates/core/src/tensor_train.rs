//! Tensor-train factorized linear layers.
//!
//! A weight matrix `W` of size `M × N` with `M = ∏ m_k` and `N = ∏ n_k` is
//! folded into a `2L`-way tensor and stored as `L` four-way cores
//! `G_k ∈ R^{r_{k-1} × m_k × n_k × r_k}` with `r_0 = r_L = 1`. Entry
//! `W(i_1..i_L, j_1..j_L)` is the product of the slice matrices
//! `G_1(i_1, j_1) ⋯ G_L(i_L, j_L)`.
//!
//! Unfolding convention: the row index is `((i_1·m_2 + i_2)·m_3 + …)`, i.e.
//! factor 1 varies slowest, and the column index is built the same way over
//! the input factors.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawShape")]
pub struct TTShape {
    out_factors: Vec<usize>,
    in_factors: Vec<usize>,
    ranks: Vec<usize>,
}

#[derive(Deserialize)]
struct RawShape {
    out_factors: Vec<usize>,
    in_factors: Vec<usize>,
    ranks: Vec<usize>,
}

impl TryFrom<RawShape> for TTShape {
    type Error = Error;

    fn try_from(raw: RawShape) -> Result<Self> {
        TTShape::new(raw.out_factors, raw.in_factors, raw.ranks)
    }
}

impl TTShape {
    pub fn new(out_factors: Vec<usize>, in_factors: Vec<usize>, ranks: Vec<usize>) -> Result<Self> {
        let l = out_factors.len();
        if l == 0 {
            return Err(Error::InvalidShape("at least one core is required".into()));
        }
        if in_factors.len() != l {
            return Err(Error::InvalidShape(format!(
                "{} output factors but {} input factors",
                l,
                in_factors.len()
            )));
        }
        if ranks.len() != l + 1 {
            return Err(Error::InvalidShape(format!(
                "expected {} ranks, got {}",
                l + 1,
                ranks.len()
            )));
        }
        if ranks[0] != 1 || ranks[l] != 1 {
            return Err(Error::InvalidShape("boundary ranks must be 1".into()));
        }
        if out_factors.iter().chain(&in_factors).chain(&ranks).any(|&v| v == 0) {
            return Err(Error::InvalidShape("factors and ranks must be positive".into()));
        }
        Ok(Self {
            out_factors,
            in_factors,
            ranks,
        })
    }

    /// The shape used for both hidden layers of the 1024-wide network.
    pub fn hjb20_1024() -> Self {
        Self::new(vec![4, 8, 4, 8], vec![8, 4, 8, 4], vec![1, 2, 1, 2, 1]).expect("static shape is valid")
    }

    pub fn num_cores(&self) -> usize {
        self.out_factors.len()
    }

    pub fn out_factors(&self) -> &[usize] {
        &self.out_factors
    }

    pub fn in_factors(&self) -> &[usize] {
        &self.in_factors
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Dense output dimension `M`.
    pub fn rows(&self) -> usize {
        self.out_factors.iter().product()
    }

    /// Dense input dimension `N`.
    pub fn cols(&self) -> usize {
        self.in_factors.iter().product()
    }

    /// Extent `(r_{k-1}, m_k, n_k, r_k)` of core `k` (0-based).
    pub fn core_dims(&self, k: usize) -> (usize, usize, usize, usize) {
        (
            self.ranks[k],
            self.out_factors[k],
            self.in_factors[k],
            self.ranks[k + 1],
        )
    }

    pub fn core_len(&self, k: usize) -> usize {
        let (a, m, n, b) = self.core_dims(k);
        a * m * n * b
    }
}

/// Number of stored scalars: `Σ_k r_{k-1}·m_k·n_k·r_k`.
pub fn tt_param_count(shape: &TTShape) -> usize {
    (0..shape.num_cores()).map(|k| shape.core_len(k)).sum()
}

/// TT cores, each stored row-major over `[r_{k-1}][m_k][n_k][r_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTCores {
    shape: TTShape,
    cores: Vec<Vec<f64>>,
}

impl TTCores {
    pub fn new(shape: TTShape, cores: Vec<Vec<f64>>) -> Result<Self> {
        if cores.len() != shape.num_cores() {
            return Err(Error::DimensionMismatch {
                context: "TT core count",
                expected: shape.num_cores(),
                actual: cores.len(),
            });
        }
        for (k, core) in cores.iter().enumerate() {
            if core.len() != shape.core_len(k) {
                return Err(Error::DimensionMismatch {
                    context: "TT core length",
                    expected: shape.core_len(k),
                    actual: core.len(),
                });
            }
        }
        Ok(Self { shape, cores })
    }

    pub fn shape(&self) -> &TTShape {
        &self.shape
    }

    pub fn cores(&self) -> &[Vec<f64>] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &[f64] {
        &self.cores[k]
    }

    pub fn stored_len(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }

    #[inline]
    fn at(&self, k: usize, a: usize, i: usize, j: usize, b: usize) -> f64 {
        let (_, m, n, r) = self.shape.core_dims(k);
        self.cores[k][((a * m + i) * n + j) * r + b]
    }

    /// Dense entry `W[row, col]` as a product of slice matrices.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let l = self.shape.num_cores();
        let out_idx = unravel(row, &self.shape.out_factors);
        let in_idx = unravel(col, &self.shape.in_factors);
        // Row vector of length r_k carried across the chain.
        let mut carry = vec![1.0];
        for k in 0..l {
            let (_, _, _, r) = self.shape.core_dims(k);
            let mut next = vec![0.0; r];
            for (a, &c) in carry.iter().enumerate() {
                for (b, slot) in next.iter_mut().enumerate() {
                    *slot += c * self.at(k, a, out_idx[k], in_idx[k], b);
                }
            }
            carry = next;
        }
        carry[0]
    }
}

/// Split a flat index into multi-radix digits, first factor slowest.
pub(crate) fn unravel(mut idx: usize, factors: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; factors.len()];
    for (d, &f) in digits.iter_mut().zip(factors).rev() {
        *d = idx % f;
        idx /= f;
    }
    digits
}

/// Materialize the full `M × N` matrix.
pub fn tt_to_dense(cores: &TTCores) -> Array2<f64> {
    let shape = cores.shape();
    let n = shape.cols();
    // Densify by pushing each unit vector through the contraction.
    let mut dense = Array2::zeros((shape.rows(), n));
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = contract(cores, &e);
        for (i, v) in col.into_iter().enumerate() {
            dense[[i, j]] = v;
        }
        e[j] = 0.0;
    }
    dense
}

/// `W·x` by left-to-right core contraction, never forming `W`.
pub fn tt_matvec(cores: &TTCores, x: &[f64]) -> Result<Vec<f64>> {
    let n = cores.shape().cols();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            context: "tt_matvec input",
            expected: n,
            actual: x.len(),
        });
    }
    Ok(contract(cores, x))
}

pub(crate) fn contract(cores: &TTCores, x: &[f64]) -> Vec<f64> {
    TTOperator::new(cores).apply(x)
}

/// Cores re-laid out for contraction: core `k` becomes a row-major
/// `(m_k·r_k) × (r_{k-1}·n_k)` block.
#[derive(Debug, Clone)]
pub(crate) struct TTOperator {
    shape: TTShape,
    blocks: Vec<Vec<f64>>,
}

impl TTOperator {
    pub(crate) fn new(cores: &TTCores) -> Self {
        let shape = cores.shape().clone();
        let blocks = (0..shape.num_cores())
            .map(|k| {
                let (ra, m, nk, rb) = shape.core_dims(k);
                let core = cores.core(k);
                let width = ra * nk;
                let mut block = vec![0.0; m * rb * width];
                for a in 0..ra {
                    for i in 0..m {
                        for j in 0..nk {
                            for b in 0..rb {
                                block[(i * rb + b) * width + a * nk + j] = core[((a * m + i) * nk + j) * rb + b];
                            }
                        }
                    }
                }
                block
            })
            .collect();
        Self { shape, blocks }
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        // State is laid out as [p][a][j][q]: p over finished output factors,
        // a over the current left rank, j over n_k, q over the remaining inputs.
        let mut state = x.to_vec();
        let mut next = Vec::new();
        let mut p_len = 1;
        let mut q_len: usize = self.shape.cols();
        for (k, block) in self.blocks.iter().enumerate() {
            let (ra, m, nk, rb) = self.shape.core_dims(k);
            q_len /= nk;
            let width = ra * nk;
            let height = m * rb;
            next.clear();
            next.resize(p_len * height * q_len, 0.0);
            for (src, dst) in state
                .chunks_exact(width * q_len)
                .zip(next.chunks_exact_mut(height * q_len))
            {
                if q_len == 1 {
                    for (o, row) in dst.iter_mut().zip(block.chunks_exact(width)) {
                        *o = row.iter().zip(src).map(|(g, v)| g * v).sum();
                    }
                } else {
                    for (out, row) in dst.chunks_exact_mut(q_len).zip(block.chunks_exact(width)) {
                        for (&g, xs) in row.iter().zip(src.chunks_exact(q_len)) {
                            for (o, &v) in out.iter_mut().zip(xs) {
                                *o += g * v;
                            }
                        }
                    }
                }
            }
            std::mem::swap(&mut state, &mut next);
            p_len *= m;
        }
        state
    }
}

/// Gaussian cores scaled so densified entries have variance `1/N`.
///
/// A dense entry is a sum of `∏_{0<k<L} r_k` products of `L` independent
/// core entries, so with a common per-core standard deviation `s` its
/// variance is `∏ r_k · s^{2L}`.
pub fn tt_init(shape: &TTShape, seed: u64) -> TTCores {
    let l = shape.num_cores();
    let inner_paths: usize = shape.ranks()[1..l].iter().product();
    let target = 1.0 / (shape.cols() as f64 * inner_paths as f64);
    let std = target.powf(0.5 / l as f64);
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cores = (0..l)
        .map(|k| (0..shape.core_len(k)).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    TTCores {
        shape: shape.clone(),
        cores,
    }
}
