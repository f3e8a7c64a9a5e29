//! Phase-domain model of MZI meshes.
//!
//! Orthogonal matrices are programmed as rectangular meshes of real Givens
//! rotators ([`mesh`]); arbitrary matrices as two meshes around a column of
//! attenuators ([`svd`]). A [`ChipInstance`] strings such layers into a
//! network and evaluates it under a frozen [`NoiseModel`].

pub mod chip;
pub mod mesh;
pub mod noise;
pub mod svd;

pub use chip::{ChipInstance, ChipLayer, LayerWeights, ParamKind};
pub use mesh::{
    clements_decompose, compose_orthogonal, orthogonality_defect, random_orthogonal, MeshTopology, PhaseProgram,
};
pub use noise::{effective_phases, sample_noise, NoiseConfig, NoiseModel};
pub use svd::{svd_map, SVDLayerProgram};
