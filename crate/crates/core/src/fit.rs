//! Closed-form polynomial-manifold fitting on top of the truncated SVD
//! (the POD-based regression route).
//!
//! With `V` the leading `r` modes, `V̄` the next `q`, and `Ŝ = VᵀS`, the
//! coefficients solve a ridge problem whose normal equations are
//!
//! ```text
//! Ξ (W Wᵀ + γI) = V̄ᵀ (S − V Ŝ) Wᵀ,      W = [g(ŝ_1) … g(ŝ_k)].
//! ```
//!
//! The same solve is reused by the alternating-minimization route with
//! `[V, V̄]` read as the current basis iterate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{FitMethod, ManifoldModel};
use crate::pod::{self, PodBasis};
use crate::poly::{self, LatentStates, PolyDegree};
use crate::snapshot::{CenteringVector, SnapshotMatrix};

/// Solves the regularized normal equations for `Ξ` (q × (p−1)r).
///
/// `γ > 0` makes the system symmetric positive definite; `γ = 0` is
/// accepted only when the feature Gram matrix is invertible, and is
/// refused outright in the rank-deficient regime `k < (p−1)r`.
pub fn coefficient_step(
    s_centered: &SnapshotMatrix,
    v: &DMatrix<f64>,
    v_bar: &DMatrix<f64>,
    s_hat: &LatentStates,
    p: PolyDegree,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let n = s_centered.state_dim();
    let k = s_centered.sample_count();
    let r = v.ncols();
    if v.nrows() != n || v_bar.nrows() != n {
        return Err(Error::dims("coefficient_step bases", n, v.nrows()));
    }
    if s_hat.nrows() != r || s_hat.ncols() != k {
        return Err(Error::dims("coefficient_step latents", r * k, s_hat.nrows() * s_hat.ncols()));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "gamma must be finite and nonnegative, got {gamma}"
        )));
    }
    let d = p.feature_dim(r);
    if gamma == 0.0 && k < d {
        return Err(Error::IllPosed(format!(
            "feature Gram matrix is rank-deficient (k = {k} < {d} features); set gamma > 0"
        )));
    }

    let w = poly::build_w(s_hat, p);
    // Target: V̄ᵀ(S − VŜ); subtracting the linear part explicitly keeps
    // the formula exact for basis iterates whose VᵀV̄ is only
    // numerically zero.
    let residual = s_centered.data() - v * s_hat;
    let target = v_bar.transpose() * residual;

    let mut gram = &w * w.transpose();
    for i in 0..d {
        gram[(i, i)] += gamma;
    }
    // Normal equations transposed: (WWᵀ + γI) Ξᵀ = W targetᵀ.
    let rhs = &w * target.transpose();
    let chol = gram.cholesky().ok_or_else(|| {
        Error::IllPosed(
            "feature normal equations are numerically singular; increase gamma".into(),
        )
    })?;
    Ok(chol.solve(&rhs).transpose())
}

/// Approach 1: POD bases plus closed-form coefficient regression.
///
/// Returns the fitted model and the latent training coordinates
/// `Ŝ = VᵀS`.
pub fn fit_pod_manifold(
    s_centered: &SnapshotMatrix,
    centering: &CenteringVector,
    r: usize,
    q: usize,
    p: PolyDegree,
    gamma: f64,
) -> Result<(ManifoldModel, LatentStates)> {
    let basis = pod::compute_pod(s_centered, r + q)?;
    fit_from_basis(&basis, s_centered, centering, r, q, p, gamma)
}

/// Approach 1 with a precomputed basis (so sweeps over `r` share one
/// SVD). The basis must hold at least `r + q` modes.
pub fn fit_from_basis(
    basis: &PodBasis,
    s_centered: &SnapshotMatrix,
    centering: &CenteringVector,
    r: usize,
    q: usize,
    p: PolyDegree,
    gamma: f64,
) -> Result<(ManifoldModel, LatentStates)> {
    if r == 0 || q == 0 {
        return Err(Error::InvalidConfig(format!(
            "need r >= 1 and q >= 1, got r={r} q={q}"
        )));
    }
    let v = basis.leading(r)?;
    let v_bar = basis.band(r, q)?;
    let s_hat = v.transpose() * s_centered.data();
    let xi = coefficient_step(s_centered, &v, &v_bar, &s_hat, p, gamma)?;
    let model = ManifoldModel::new(
        v,
        v_bar,
        xi,
        p,
        gamma,
        centering.clone(),
        FitMethod::ManifoldPod,
    )?;
    Ok((model, s_hat))
}
