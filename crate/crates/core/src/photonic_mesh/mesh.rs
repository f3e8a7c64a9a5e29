//! Rectangular (Clements) meshes of real Givens rotators.
//!
//! Every MZI is modeled as a real rotation on two adjacent waveguides
//! `(k, k+1)`. A [`PhaseProgram`] composes to
//! `Q = diag(signs) · R_1(φ_1) · R_2(φ_2) ⋯ R_K(φ_K)` with the factors taken
//! in [`MeshTopology::pair_order`]. The order is the one produced by
//! Clements-style nulling, so the same topology is used for composition and
//! decomposition of any `n × n` orthogonal matrix.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{wrap_phase, Error, Result};

/// Which side a nulling rotation is applied from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// Nulling schedule for an `n × n` matrix: `(side, k, target_row, target_col)`
/// in application order. Rotations act on rows or columns `(k, k+1)`.
fn nulling_schedule(n: usize) -> Vec<(Side, usize, usize, usize)> {
    let mut ops = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n.saturating_sub(1) {
        if i % 2 == 0 {
            for j in 0..=i {
                ops.push((Side::Right, i - j, n - 1 - j, i - j));
            }
        } else {
            for j in 1..=i + 1 {
                let row = n + j - i - 2;
                ops.push((Side::Left, row - 1, row, j - 1));
            }
        }
    }
    ops
}

/// Indices into the nulling schedule, arranged in final product order:
/// left rotations in application order, then right rotations reversed.
fn product_order(schedule: &[(Side, usize, usize, usize)]) -> Vec<usize> {
    let lefts = schedule
        .iter()
        .enumerate()
        .filter(|(_, op)| op.0 == Side::Left)
        .map(|(i, _)| i);
    let rights = schedule
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, op)| op.0 == Side::Right)
        .map(|(i, _)| i);
    lefts.chain(rights).collect()
}

#[derive(Debug, PartialEq, Eq)]
pub struct MeshTopology {
    n: usize,
    /// `(i, j)` with `i = j + 1`: the waveguides each rotator couples.
    pair_order: Vec<(usize, usize)>,
    /// Physical column of each rotator (as-soon-as-possible layering).
    columns: Vec<usize>,
    /// Rotators sharing a column at adjacent positions, `(a, b)` with `a < b`.
    neighbors: Vec<(usize, usize)>,
    /// For each rotator, the nulling step that determines its angle.
    schedule_slot: Vec<usize>,
}

static TOPOLOGIES: OnceLock<Mutex<HashMap<usize, Arc<MeshTopology>>>> = OnceLock::new();

impl MeshTopology {
    /// The rectangular mesh for dimension `n`, shared between all programs.
    pub fn clements(n: usize) -> Arc<Self> {
        let cache = TOPOLOGIES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("topology cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(Self::build(n))).clone()
    }

    fn build(n: usize) -> Self {
        let schedule = nulling_schedule(n);
        let order = product_order(&schedule);
        let pair_order: Vec<(usize, usize)> = order
            .iter()
            .map(|&s| {
                let k = schedule[s].1;
                (k + 1, k)
            })
            .collect();

        let mut depth = vec![0usize; n];
        let mut columns = Vec::with_capacity(pair_order.len());
        for &(i, j) in &pair_order {
            let c = depth[i].max(depth[j]);
            columns.push(c);
            depth[i] = c + 1;
            depth[j] = c + 1;
        }

        let mut by_slot: HashMap<(usize, usize), usize> = HashMap::new();
        for (idx, (&c, &(_, j))) in columns.iter().zip(&pair_order).enumerate() {
            by_slot.insert((c, j), idx);
        }
        let mut neighbors = Vec::new();
        for (idx, (&c, &(_, j))) in columns.iter().zip(&pair_order).enumerate() {
            if let Some(&other) = by_slot.get(&(c, j + 2)) {
                neighbors.push((idx.min(other), idx.max(other)));
            }
        }
        neighbors.sort_unstable();

        Self {
            n,
            pair_order,
            columns,
            neighbors,
            schedule_slot: order,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_rotators(&self) -> usize {
        self.pair_order.len()
    }

    pub fn pair_order(&self) -> &[(usize, usize)] {
        &self.pair_order
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn num_columns(&self) -> usize {
        self.columns.iter().map(|c| c + 1).max().unwrap_or(0)
    }

    pub fn neighbors(&self) -> &[(usize, usize)] {
        &self.neighbors
    }
}

/// Angles plus output signs for one orthogonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProgram {
    topology: Arc<MeshTopology>,
    angles: Vec<f64>,
    diag_signs: Vec<i8>,
}

impl PhaseProgram {
    pub fn new(topology: Arc<MeshTopology>, angles: Vec<f64>, diag_signs: Vec<i8>) -> Result<Self> {
        if angles.len() != topology.num_rotators() {
            return Err(Error::DimensionMismatch {
                context: "phase program angles",
                expected: topology.num_rotators(),
                actual: angles.len(),
            });
        }
        if diag_signs.len() != topology.n() {
            return Err(Error::DimensionMismatch {
                context: "phase program signs",
                expected: topology.n(),
                actual: diag_signs.len(),
            });
        }
        if diag_signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidConfig("diagonal signs must be ±1".into()));
        }
        let angles = angles.into_iter().map(wrap_phase).collect();
        Ok(Self {
            topology,
            angles,
            diag_signs,
        })
    }

    /// All angles zero, all signs `+1`: the identity.
    pub fn identity(n: usize) -> Self {
        let topology = MeshTopology::clements(n);
        let k = topology.num_rotators();
        Self {
            topology,
            angles: vec![0.0; k],
            diag_signs: vec![1; n],
        }
    }

    pub fn n(&self) -> usize {
        self.topology.n()
    }

    pub fn topology(&self) -> &Arc<MeshTopology> {
        &self.topology
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn diag_signs(&self) -> &[i8] {
        &self.diag_signs
    }

    pub(crate) fn set_angles(&mut self, angles: &[f64]) {
        debug_assert_eq!(angles.len(), self.angles.len());
        for (dst, &a) in self.angles.iter_mut().zip(angles) {
            *dst = wrap_phase(a);
        }
    }
}

/// Full `n × n` matrix of a program.
pub fn compose_orthogonal(p: &PhaseProgram) -> Array2<f64> {
    compose_with_angles(p, p.angles())
}

/// Compose using the program's topology and signs but the given angles.
pub(crate) fn compose_with_angles(p: &PhaseProgram, angles: &[f64]) -> Array2<f64> {
    let n = p.n();
    let rows = leading_rows(p, angles, n);
    Array2::from_shape_vec((n, n), rows).expect("n*n buffer")
}

/// First `k` rows of the composed matrix, row-major `k × n`.
///
/// Starts from `E_kᵀ·D` and applies the rotators from the right, so the cost
/// is `O(k)` per rotator.
pub(crate) fn leading_rows(p: &PhaseProgram, angles: &[f64], k: usize) -> Vec<f64> {
    let n = p.n();
    let mut m = vec![0.0; k * n];
    for r in 0..k {
        m[r * n + r] = f64::from(p.diag_signs[r]);
    }
    for (&(i, j), &phi) in p.topology.pair_order.iter().zip(angles) {
        let (s, c) = phi.sin_cos();
        for r in 0..k {
            let row = &mut m[r * n..(r + 1) * n];
            let (a, b) = (row[j], row[i]);
            row[j] = c * a + s * b;
            row[i] = c * b - s * a;
        }
    }
    m
}

/// First `k` columns of the composed matrix, row-major `n × k`.
///
/// Applies the rotators to `E_k` from the left, last factor first.
pub(crate) fn leading_cols(p: &PhaseProgram, angles: &[f64], k: usize) -> Vec<f64> {
    let n = p.n();
    let mut m = vec![0.0; n * k];
    for c in 0..k {
        m[c * k + c] = 1.0;
    }
    for (&(i, j), &phi) in p.topology.pair_order.iter().zip(angles).rev() {
        let (s, c) = phi.sin_cos();
        for col in 0..k {
            let (a, b) = (m[j * k + col], m[i * k + col]);
            m[j * k + col] = c * a - s * b;
            m[i * k + col] = s * a + c * b;
        }
    }
    for (r, &sign) in p.diag_signs.iter().enumerate() {
        if sign < 0 {
            for v in &mut m[r * k..(r + 1) * k] {
                *v = -*v;
            }
        }
    }
    m
}

/// `max |QᵀQ − I|` over all entries.
pub fn orthogonality_defect(q: &Array2<f64>) -> f64 {
    let (rows, cols) = q.dim();
    let mut worst: f64 = 0.0;
    for a in 0..cols {
        for b in a..cols {
            let dot: f64 = (0..rows).map(|r| q[[r, a]] * q[[r, b]]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// Tolerance on `QᵀQ − I` accepted by [`clements_decompose`].
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Recover the program of an orthogonal matrix by Clements nulling.
pub fn clements_decompose(q: &Array2<f64>) -> Result<PhaseProgram> {
    let (rows, cols) = q.dim();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            context: "clements_decompose expects a square matrix",
            expected: rows,
            actual: cols,
        });
    }
    let defect = orthogonality_defect(q);
    if defect.is_nan() || defect > ORTHOGONALITY_TOL {
        return Err(Error::NotOrthogonal { defect });
    }
    let n = rows;
    let topology = MeshTopology::clements(n);
    let schedule = nulling_schedule(n);
    let mut u: Vec<f64> = q.iter().copied().collect();
    let mut thetas = vec![0.0; schedule.len()];

    for (slot, &(side, k, row, col)) in schedule.iter().enumerate() {
        match side {
            Side::Right => {
                // U ← U·R_k(θ) zeroes U[row, k].
                let theta = f64::atan2(-u[row * n + col], u[row * n + col + 1]);
                let (s, c) = theta.sin_cos();
                for r in 0..n {
                    let (a, b) = (u[r * n + k], u[r * n + k + 1]);
                    u[r * n + k] = c * a + s * b;
                    u[r * n + k + 1] = c * b - s * a;
                }
                thetas[slot] = theta;
            }
            Side::Left => {
                // U ← R_k(θ)·U zeroes U[k+1, col].
                let theta = f64::atan2(-u[row * n + col], u[(row - 1) * n + col]);
                let (s, c) = theta.sin_cos();
                for cc in 0..n {
                    let (a, b) = (u[k * n + cc], u[(k + 1) * n + cc]);
                    u[k * n + cc] = c * a - s * b;
                    u[(k + 1) * n + cc] = s * a + c * b;
                }
                thetas[slot] = theta;
            }
        }
    }

    let signs: Vec<i8> = (0..n).map(|i| if u[i * n + i] < 0.0 { -1 } else { 1 }).collect();

    // Q = L_1ᵀ⋯L_mᵀ · D · R_pᵀ⋯R_1ᵀ; pushing D to the front flips a left
    // angle by the product of the two signs it straddles.
    let angles = topology
        .schedule_slot
        .iter()
        .map(|&slot| {
            let (side, k, _, _) = schedule[slot];
            let theta = thetas[slot];
            match side {
                Side::Left => -theta * f64::from(signs[k] * signs[k + 1]),
                Side::Right => -theta,
            }
        })
        .collect();

    PhaseProgram::new(topology, angles, signs)
}

/// Haar-distributed random orthogonal matrix via QR of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..n {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)])
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ProgramRepr {
    pub n: usize,
    pub angles: Vec<f64>,
    pub diag_signs: Vec<i8>,
}

impl Serialize for PhaseProgram {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ProgramRepr {
            n: self.n(),
            angles: self.angles.clone(),
            diag_signs: self.diag_signs.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PhaseProgram {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ProgramRepr::deserialize(deserializer)?;
        PhaseProgram::new(MeshTopology::clements(repr.n), repr.angles, repr.diag_signs)
            .map_err(serde::de::Error::custom)
    }
}
