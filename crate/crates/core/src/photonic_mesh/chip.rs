//! A whole network programmed onto meshes, with frozen hardware noise.

use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::noise::{sample_noise, NoiseConfig, NoiseModel};
use super::svd::{svd_map, SVDLayerProgram};
use crate::tensor_train::{TTCores, TTOperator, TTShape};
use crate::{Error, Result};

/// Weights of one layer before mapping onto hardware.
#[derive(Debug, Clone)]
pub enum LayerWeights {
    Dense(Array2<f64>),
    TensorTrain(TTCores),
}

/// One layer in the phase domain.
///
/// A tensor-train layer stores one SVD program per core; core `k` is viewed
/// as the `(r_{k-1}·n_k) × (m_k·r_k)` matrix `G[(a, j), (i, b)] = G_k[a, i, j, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChipLayer {
    Dense {
        program: SVDLayerProgram,
    },
    TensorTrain {
        shape: TTShape,
        cores: Vec<SVDLayerProgram>,
    },
}

fn core_matrix_dims(shape: &TTShape, k: usize) -> (usize, usize) {
    let (a, m, n, b) = shape.core_dims(k);
    (a * n, m * b)
}

fn core_to_matrix(shape: &TTShape, k: usize, core: &[f64]) -> Array2<f64> {
    let (ra, m, n, rb) = shape.core_dims(k);
    Array2::from_shape_fn((ra * n, m * rb), |(row, col)| {
        let (a, j) = (row / n, row % n);
        let (i, b) = (col / rb, col % rb);
        core[((a * m + i) * n + j) * rb + b]
    })
}

fn matrix_to_core(shape: &TTShape, k: usize, mat: &[f64]) -> Vec<f64> {
    let (ra, m, n, rb) = shape.core_dims(k);
    let cols = m * rb;
    let mut core = vec![0.0; ra * m * n * rb];
    for a in 0..ra {
        for i in 0..m {
            for j in 0..n {
                for b in 0..rb {
                    core[((a * m + i) * n + j) * rb + b] = mat[(a * n + j) * cols + i * rb + b];
                }
            }
        }
    }
    core
}

impl ChipLayer {
    pub fn map(weights: &LayerWeights) -> Result<Self> {
        match weights {
            LayerWeights::Dense(w) => Ok(ChipLayer::Dense { program: svd_map(w)? }),
            LayerWeights::TensorTrain(tt) => {
                let shape = tt.shape().clone();
                let cores = (0..shape.num_cores())
                    .map(|k| svd_map(&core_to_matrix(&shape, k, tt.core(k))))
                    .collect::<Result<_>>()?;
                Ok(ChipLayer::TensorTrain { shape, cores })
            }
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            ChipLayer::Dense { program } => program.rows(),
            ChipLayer::TensorTrain { shape, .. } => shape.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ChipLayer::Dense { program } => program.cols(),
            ChipLayer::TensorTrain { shape, .. } => shape.cols(),
        }
    }

    pub fn programs(&self) -> &[SVDLayerProgram] {
        match self {
            ChipLayer::Dense { program } => std::slice::from_ref(program),
            ChipLayer::TensorTrain { cores, .. } => cores,
        }
    }

    fn programs_mut(&mut self) -> &mut [SVDLayerProgram] {
        match self {
            ChipLayer::Dense { program } => std::slice::from_mut(program),
            ChipLayer::TensorTrain { cores, .. } => cores,
        }
    }

    fn validate(&self) -> Result<()> {
        if let ChipLayer::TensorTrain { shape, cores } = self {
            if cores.len() != shape.num_cores() {
                return Err(Error::DimensionMismatch {
                    context: "TT layer core programs",
                    expected: shape.num_cores(),
                    actual: cores.len(),
                });
            }
            for (k, p) in cores.iter().enumerate() {
                let (r, c) = core_matrix_dims(shape, k);
                if p.rows() != r || p.cols() != c {
                    return Err(Error::InvalidShape(format!(
                        "core {k} program is {}x{}, expected {r}x{c}",
                        p.rows(),
                        p.cols()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Kind of each trainable scalar in [`ChipInstance::params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// An MZI angle, kept in `[0, 2π)`.
    Phase,
    /// A singular value, kept nonnegative.
    Sigma,
}

#[derive(Debug)]
enum CompiledLayer {
    Dense { rows: usize, cols: usize, w: Vec<f64> },
    TensorTrain(TTCores, TTOperator),
}

impl CompiledLayer {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CompiledLayer::Dense { rows, cols, w } => (0..*rows)
                .map(|r| w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
            CompiledLayer::TensorTrain(_, op) => op.apply(x),
        }
    }
}

/// Serialized chip state: programs plus the noise recipe (config and seed).
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChipState {
    layers: Vec<ChipLayer>,
    noise_config: NoiseConfig,
    noise_seed: u64,
}

/// Network of SVD-programmed layers with sine activations between layers.
///
/// The noise model is sampled once from `(noise_config, noise_seed)` and
/// frozen. Noisy layer matrices are composed lazily and cached until the
/// commanded parameters change.
#[derive(Debug, Clone)]
pub struct ChipInstance {
    layers: Vec<ChipLayer>,
    noise_config: NoiseConfig,
    noise_seed: u64,
    noise: Arc<NoiseModel>,
    compiled: OnceLock<Arc<Vec<CompiledLayer>>>,
}

impl PartialEq for ChipInstance {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.noise_config == other.noise_config && self.noise_seed == other.noise_seed
    }
}

impl ChipInstance {
    pub fn new(layers: Vec<ChipLayer>, noise_config: NoiseConfig, noise_seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("a chip needs at least one layer".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::DimensionMismatch {
                    context: "consecutive layer widths",
                    expected: pair[0].rows(),
                    actual: pair[1].cols(),
                });
            }
        }
        let (n_phases, neighbors) = phase_layout(&layers);
        let noise = sample_noise(n_phases, &noise_config, &neighbors, noise_seed)?;
        Ok(Self {
            layers,
            noise_config,
            noise_seed,
            noise: Arc::new(noise),
            compiled: OnceLock::new(),
        })
    }

    /// Map trained or initial weights onto meshes.
    pub fn from_weights(weights: &[LayerWeights], noise_config: NoiseConfig, noise_seed: u64) -> Result<Self> {
        let layers = weights.iter().map(ChipLayer::map).collect::<Result<_>>()?;
        Self::new(layers, noise_config, noise_seed)
    }

    /// Same programs on a different fabricated instance.
    pub fn with_noise(&self, noise_config: NoiseConfig, noise_seed: u64) -> Result<Self> {
        Self::new(self.layers.clone(), noise_config, noise_seed)
    }

    pub fn layers(&self) -> &[ChipLayer] {
        &self.layers
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn noise_config(&self) -> &NoiseConfig {
        &self.noise_config
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }

    fn programs(&self) -> impl Iterator<Item = &SVDLayerProgram> {
        self.layers.iter().flat_map(|l| l.programs().iter())
    }

    pub fn num_phases(&self) -> usize {
        self.programs().map(SVDLayerProgram::num_angles).sum()
    }

    pub fn num_params(&self) -> usize {
        self.programs().map(|p| p.num_angles() + p.rank()).sum()
    }

    /// Trainable vector: per program, `U` angles, `Vᵀ` angles, then `Σ`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for p in self.programs() {
            out.extend_from_slice(p.u.angles());
            out.extend_from_slice(p.v.angles());
            out.extend_from_slice(&p.sigma);
        }
        out
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut out = Vec::with_capacity(self.num_params());
        for p in self.programs() {
            out.extend(std::iter::repeat_n(ParamKind::Phase, p.num_angles()));
            out.extend(std::iter::repeat_n(ParamKind::Sigma, p.rank()));
        }
        out
    }

    /// Commanded phases only, in global phase-shifter order.
    pub fn commanded_phases(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_phases());
        for p in self.programs() {
            out.extend_from_slice(p.u.angles());
            out.extend_from_slice(p.v.angles());
        }
        out
    }

    /// Reprogram every device at once. Angles are wrapped, sigmas clamped at 0.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "chip parameter vector",
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for p in layer.programs_mut() {
                let (nu, nv, k) = (p.u.angles().len(), p.v.angles().len(), p.rank());
                p.u.set_angles(&params[offset..offset + nu]);
                offset += nu;
                p.v.set_angles(&params[offset..offset + nv]);
                offset += nv;
                for (s, &v) in p.sigma.iter_mut().zip(&params[offset..offset + k]) {
                    *s = v.max(0.0);
                }
                offset += k;
            }
        }
        self.compiled = OnceLock::new();
        Ok(())
    }

    /// A copy of this chip programmed with `params`.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let mut chip = self.clone();
        chip.set_params(params)?;
        Ok(chip)
    }

    fn compile(&self, noisy: bool) -> Vec<CompiledLayer> {
        let commanded = self.commanded_phases();
        let phases = if noisy {
            let mut eff = vec![0.0; commanded.len()];
            self.noise.apply_into(&commanded, &mut eff);
            eff
        } else {
            commanded
        };
        let mut offset = 0;
        let mut next = |p: &SVDLayerProgram| {
            let (nu, nv) = (p.u.angles().len(), p.v.angles().len());
            let u = &phases[offset..offset + nu];
            let v = &phases[offset + nu..offset + nu + nv];
            offset += nu + nv;
            p.compose(u, &p.sigma, v)
        };
        self.layers
            .iter()
            .map(|layer| match layer {
                ChipLayer::Dense { program } => CompiledLayer::Dense {
                    rows: program.rows(),
                    cols: program.cols(),
                    w: next(program),
                },
                ChipLayer::TensorTrain { shape, cores } => {
                    let data = cores
                        .iter()
                        .enumerate()
                        .map(|(k, p)| matrix_to_core(shape, k, &next(p)))
                        .collect();
                    let cores = TTCores::new(shape.clone(), data).expect("validated core shapes");
                    let op = TTOperator::new(&cores);
                    CompiledLayer::TensorTrain(cores, op)
                }
            })
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "chip input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Noisy forward pass as the fabricated hardware would compute it.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let compiled = self.compiled.get_or_init(|| Arc::new(self.compile(true)));
        Ok(run(compiled, x))
    }

    /// Forward through the commanded (noise-free) programs.
    pub fn ideal_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(run(&self.compile(false), x))
    }

    /// Dense matrices realized by the noisy hardware, one per layer.
    pub fn realized_weights(&self) -> Vec<Array2<f64>> {
        self.compile(true)
            .into_iter()
            .map(|layer| match layer {
                CompiledLayer::Dense { rows, cols, w } => {
                    Array2::from_shape_vec((rows, cols), w).expect("rows*cols buffer")
                }
                CompiledLayer::TensorTrain(cores, _) => crate::tensor_train::tt_to_dense(&cores),
            })
            .collect()
    }
}

fn run(layers: &[CompiledLayer], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        h = layer.apply(&h);
        if i + 1 < layers.len() {
            for v in &mut h {
                *v = v.sin();
            }
        }
    }
    h
}

/// Total phase-shifter count and global crosstalk neighbor pairs.
fn phase_layout(layers: &[ChipLayer]) -> (usize, Vec<(usize, usize)>) {
    let mut offset = 0;
    let mut neighbors = Vec::new();
    for p in layers.iter().flat_map(|l| l.programs().iter()) {
        for mesh in [&p.u, &p.v] {
            neighbors.extend(
                mesh.topology()
                    .neighbors()
                    .iter()
                    .map(|&(a, b)| (a + offset, b + offset)),
            );
            offset += mesh.angles().len();
        }
    }
    (offset, neighbors)
}

impl Serialize for ChipInstance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ChipState {
            layers: self.layers.clone(),
            noise_config: self.noise_config,
            noise_seed: self.noise_seed,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ChipInstance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let state = ChipState::deserialize(deserializer)?;
        ChipInstance::new(state.layers, state.noise_config, state.noise_seed).map_err(serde::de::Error::custom)
    }
}
