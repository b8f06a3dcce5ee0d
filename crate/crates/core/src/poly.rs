//! The polynomial feature map `g`, its Jacobian, and the feature data
//! matrix `W`.
//!
//! For a latent vector `ŝ ∈ ℝ^r` and degree `p ≥ 2`,
//!
//! ```text
//! g(ŝ) = [ ŝ^2, ŝ^3, …, ŝ^p ] ∈ ℝ^{(p−1)r}
//! ```
//!
//! with elementwise powers, stacked power-major: first all squares, then
//! all cubes, and so on. Coefficient columns everywhere in this crate
//! follow the same ordering. Features are used unscaled; the ridge
//! parameter absorbs their conditioning.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// Validated polynomial degree (`p ≥ 2`; the map starts at squares).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolyDegree(u32);

impl PolyDegree {
    pub fn new(p: u32) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidConfig(format!(
                "polynomial degree must be at least 2, got {p}"
            )));
        }
        Ok(Self(p))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Feature count `(p−1)·r` for latent dimension `r`.
    pub fn feature_dim(self, r: usize) -> usize {
        (self.0 as usize - 1) * r
    }
}

/// Latent coordinate matrix `Ŝ ∈ ℝ^{r×k}`, one column per sample.
pub type LatentStates = DMatrix<f64>;

/// Feature data matrix `W ∈ ℝ^{(p−1)r×k}` with columns `g(ŝ_j)`.
pub type FeatureMatrix = DMatrix<f64>;

/// Evaluates `g(ŝ)`.
pub fn g(s_hat: DVectorView<f64>, p: PolyDegree) -> DVector<f64> {
    let r = s_hat.len();
    let mut out = DVector::zeros(p.feature_dim(r));
    // Running elementwise power, starting from ŝ² in the first block.
    let mut power: DVector<f64> = s_hat.component_mul(&s_hat);
    for m in 2..=p.get() as usize {
        out.rows_mut((m - 2) * r, r).copy_from(&power);
        if m < p.get() as usize {
            power.component_mul_assign(&s_hat);
        }
    }
    out
}

/// Jacobian of `g` at `ŝ`: block `m−1` is `diag(m·ŝ^{m−1})`.
pub fn g_jacobian(s_hat: DVectorView<f64>, p: PolyDegree) -> DMatrix<f64> {
    let r = s_hat.len();
    let mut out = DMatrix::zeros(p.feature_dim(r), r);
    let mut power = s_hat.clone_owned(); // ŝ^{m−1} for m = 2
    for m in 2..=p.get() as usize {
        for l in 0..r {
            out[((m - 2) * r + l, l)] = m as f64 * power[l];
        }
        if m < p.get() as usize {
            power.component_mul_assign(&s_hat);
        }
    }
    out
}

/// Builds `W` column by column from latent samples.
pub fn build_w(s_hat: &LatentStates, p: PolyDegree) -> FeatureMatrix {
    let r = s_hat.nrows();
    let k = s_hat.ncols();
    let mut w = DMatrix::zeros(p.feature_dim(r), k);
    for j in 0..k {
        w.column_mut(j).copy_from(&g(s_hat.column(j), p));
    }
    w
}

/// Fused product `N · g'(ŝ)` for `N ∈ ℝ^{n×(p−1)r}`, exploiting the
/// block-diagonal Jacobian: column `l` is `Σ_m m·ŝ_l^{m−1} · N_{:,(m−2)r+l}`.
/// Avoids materializing the mostly-zero Jacobian inside solver loops.
pub fn apply_jacobian_left(n_mat: &DMatrix<f64>, s_hat: DVectorView<f64>, p: PolyDegree) -> DMatrix<f64> {
    let r = s_hat.len();
    debug_assert_eq!(n_mat.ncols(), p.feature_dim(r));
    let rows = n_mat.nrows();
    let mut out = DMatrix::zeros(rows, r);
    for l in 0..r {
        let mut power = s_hat[l]; // ŝ_l^{m−1}
        let mut col = out.column_mut(l);
        for m in 2..=p.get() as usize {
            col.axpy(m as f64 * power, &n_mat.column((m - 2) * r + l), 1.0);
            power *= s_hat[l];
        }
    }
    out
}
