//! Thin SVD of snapshot matrices, POD basis extraction, and
//! linear-subspace error accounting.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly::LatentStates;
use crate::snapshot::SnapshotMatrix;

/// Orthonormal POD modes with the full singular-value spectrum.
#[derive(Debug, Clone)]
pub struct PodBasis {
    /// n×r_max left singular vectors, descending σ order.
    modes: DMatrix<f64>,
    /// All min(n,k) singular values, non-increasing.
    singular_values: DVector<f64>,
}

impl PodBasis {
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn state_dim(&self) -> usize {
        self.modes.nrows()
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    /// Leading `r` modes as an owned matrix.
    pub fn leading(&self, r: usize) -> Result<DMatrix<f64>> {
        if r > self.rank() {
            return Err(Error::RankOutOfRange { r, max: self.rank() });
        }
        Ok(self.modes.columns(0, r).into_owned())
    }

    /// Modes `r..r+q`, the complement block used for the nonlinear term.
    pub fn band(&self, start: usize, count: usize) -> Result<DMatrix<f64>> {
        if start + count > self.rank() {
            return Err(Error::RankOutOfRange {
                r: start + count,
                max: self.rank(),
            });
        }
        Ok(self.modes.columns(start, count).into_owned())
    }
}

/// Leading `r_max` left singular vectors of a centered snapshot matrix.
///
/// Sign convention: each mode is flipped so its largest-magnitude entry
/// is positive, ties broken by lowest index, making outputs reproducible
/// across runs and platforms. Modes with equal singular values keep the
/// decomposition's order after the sign fix.
pub fn compute_pod(s_centered: &SnapshotMatrix, r_max: usize) -> Result<PodBasis> {
    let n = s_centered.state_dim();
    let k = s_centered.sample_count();
    let limit = n.min(k);
    if r_max == 0 || r_max > limit {
        return Err(Error::RankOutOfRange { r: r_max, max: limit });
    }
    let svd = s_centered
        .data()
        .clone()
        .try_svd(true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::IllPosed("SVD did not converge".into()))?;
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    // nalgebra already sorts descending; keep a defensive stable sort.
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("singular values are finite")
    });
    let singular_values = DVector::from_fn(order.len(), |i, _| svd.singular_values[order[i]]);
    let mut modes = DMatrix::zeros(n, r_max);
    for (dst, &src) in order.iter().take(r_max).enumerate() {
        modes.column_mut(dst).copy_from(&u.column(src));
    }
    fix_signs(&mut modes);
    Ok(PodBasis {
        modes,
        singular_values,
    })
}

fn fix_signs(modes: &mut DMatrix<f64>) {
    for mut col in modes.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Discarded energy `Σ_{i>r} σ_i²` of Eq.-(2) type truncation.
pub fn truncation_error(basis: &PodBasis, r: usize) -> Result<f64> {
    let len = basis.singular_values.len();
    if r > len {
        return Err(Error::RankOutOfRange { r, max: len });
    }
    Ok(basis.singular_values.rows(r, len - r).iter().map(|s| s * s).sum())
}

/// Latent coordinates `VᵀS` under the leading `r` modes.
pub fn project(basis: &PodBasis, r: usize, s_centered: &SnapshotMatrix) -> Result<LatentStates> {
    if s_centered.state_dim() != basis.state_dim() {
        return Err(Error::dims(
            "project",
            basis.state_dim(),
            s_centered.state_dim(),
        ));
    }
    let v = basis.leading(r)?;
    Ok(v.transpose() * s_centered.data())
}

/// Smallest `r` whose discarded energy fraction is below `tol²`
/// (relative-energy reading of the projection-error threshold).
pub fn rank_for_tolerance(basis: &PodBasis, tol: f64) -> Result<usize> {
    if tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let total: f64 = basis.singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Ok(0);
    }
    let target = tol * tol * total;
    let mut tail = total;
    for r in 0..=basis.singular_values.len() {
        if tail < target {
            return Ok(r);
        }
        if r < basis.singular_values.len() {
            let s = basis.singular_values[r];
            tail -= s * s;
        }
    }
    Ok(basis.singular_values.len())
}

/// Absolute reading of the same threshold: smallest `r` with
/// `√(Σ_{i>r} σ_i²) < tol`.
pub fn rank_for_absolute_tolerance(basis: &PodBasis, tol: f64) -> Result<usize> {
    if tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut tail: f64 = basis.singular_values.iter().map(|s| s * s).sum();
    for r in 0..=basis.singular_values.len() {
        if tail.sqrt() < tol {
            return Ok(r);
        }
        if r < basis.singular_values.len() {
            let s = basis.singular_values[r];
            tail -= s * s;
        }
    }
    Ok(basis.singular_values.len())
}
