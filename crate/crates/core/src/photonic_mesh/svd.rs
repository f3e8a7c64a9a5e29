//! Arbitrary matrices as `U·Σ·Vᵀ` with two meshes and an attenuator column.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mesh::{clements_decompose, leading_cols, leading_rows, PhaseProgram};
use crate::{Error, Result};

/// One weight matrix `W (M × N)` in the phase domain.
///
/// `W = U[:, :k] · diag(sigma) · Vᵀ[:k, :]` with `k = min(M, N)`, where `U`
/// is composed from `u` and `Vᵀ` from `v`. Both meshes are full squares;
/// the rectangular shape comes from truncation at `Σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SVDLayerProgram {
    pub u: PhaseProgram,
    pub sigma: Vec<f64>,
    pub v: PhaseProgram,
}

impl SVDLayerProgram {
    pub fn new(u: PhaseProgram, sigma: Vec<f64>, v: PhaseProgram) -> Result<Self> {
        let k = u.n().min(v.n());
        if sigma.len() != k {
            return Err(Error::DimensionMismatch {
                context: "singular value count",
                expected: k,
                actual: sigma.len(),
            });
        }
        if sigma.iter().any(|s| s.is_nan() || *s < 0.0) {
            return Err(Error::InvalidConfig("singular values must be nonnegative".into()));
        }
        Ok(Self { u, sigma, v })
    }

    pub fn rows(&self) -> usize {
        self.u.n()
    }

    pub fn cols(&self) -> usize {
        self.v.n()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Number of programmable angles across both meshes.
    pub fn num_angles(&self) -> usize {
        self.u.angles().len() + self.v.angles().len()
    }

    /// Dense matrix from the commanded angles.
    pub fn to_dense(&self) -> Array2<f64> {
        let w = self.compose(self.u.angles(), &self.sigma, self.v.angles());
        Array2::from_shape_vec((self.rows(), self.cols()), w).expect("M*N buffer")
    }

    /// Row-major dense matrix for arbitrary angle and sigma settings.
    pub(crate) fn compose(&self, u_angles: &[f64], sigma: &[f64], v_angles: &[f64]) -> Vec<f64> {
        let (m, n, k) = (self.rows(), self.cols(), self.rank());
        let u = leading_cols(&self.u, u_angles, k); // m × k
        let vt = leading_rows(&self.v, v_angles, k); // k × n
        let mut w = vec![0.0; m * n];
        for r in 0..m {
            let out = &mut w[r * n..(r + 1) * n];
            for c in 0..k {
                let scale = u[r * k + c] * sigma[c];
                if scale == 0.0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(&vt[c * n..(c + 1) * n]) {
                    *o += scale * v;
                }
            }
        }
        w
    }
}

/// Extend orthonormal columns `(n × k)` to a full orthogonal `n × n` basis.
///
/// The leading `k` columns are kept exactly; the complement comes from the
/// Householder QR of the input.
fn complete_basis(cols: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = cols.shape();
    if k == n {
        return cols.clone();
    }
    let qr = cols.clone().qr();
    let mut full = DMatrix::<f64>::identity(n, n);
    // q_tr_mul yields Qᵀ for the full Householder product.
    qr.q_tr_mul(&mut full);
    let mut full = full.transpose();
    for c in 0..k {
        full.set_column(c, &cols.column(c));
    }
    full
}

/// Phase-domain program reproducing `w` (SVD + Clements nulling).
pub fn svd_map(w: &Array2<f64>) -> Result<SVDLayerProgram> {
    let (m, n) = w.dim();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("matrix has non-finite entries".into()));
    }
    let dm = DMatrix::<f64>::from_fn(m, n, |i, j| w[[i, j]]);
    let svd = dm.svd(true, true);
    let u_thin = svd.u.expect("requested U");
    let vt_thin = svd.v_t.expect("requested Vᵀ");
    let k = m.min(n);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    let u_sorted = DMatrix::<f64>::from_fn(m, k, |r, c| u_thin[(r, order[c])]);
    let v_sorted = DMatrix::<f64>::from_fn(n, k, |r, c| vt_thin[(order[c], r)]);

    let u_full = complete_basis(&u_sorted);
    let v_full = complete_basis(&v_sorted);
    let u_nd = Array2::from_shape_fn((m, m), |(i, j)| u_full[(i, j)]);
    let vt_nd = Array2::from_shape_fn((n, n), |(i, j)| v_full[(j, i)]);

    SVDLayerProgram::new(clements_decompose(&u_nd)?, sigma, clements_decompose(&vt_nd)?)
}
