//! Per-sample nonlinear least squares for latent coordinates.
//!
//! Each sample solves `min_ŝ ‖s − V ŝ − N g(ŝ)‖²` with `N = V̄ Ξ` fixed,
//! by Levenberg–Marquardt: damped Gauss–Newton on the analytic Jacobian,
//! accepting only improving steps, so the objective never rises above
//! its value at the initial guess.

use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;

use crate::poly::{self, PolyDegree};

/// Inner-solver knobs. The damping factor grows ×10 on rejected steps
/// and shrinks ×0.1 on accepted ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlsSettings {
    /// Cap on step attempts per sample.
    pub max_iters: usize,
    /// Stop once the objective gradient norm falls below this.
    pub grad_tol: f64,
    /// Initial damping.
    pub lambda_init: f64,
}

impl Default for NlsSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: 1e-10,
            lambda_init: 1e-3,
        }
    }
}

/// Result of one per-sample solve.
#[derive(Debug, Clone)]
pub struct NlsOutcome {
    pub s_hat: DVector<f64>,
    /// `‖s − V ŝ − N g(ŝ)‖²` at the returned iterate.
    pub objective: f64,
    /// Gradient tolerance met (as opposed to hitting the iteration cap).
    pub converged: bool,
    /// Step attempts consumed.
    pub iterations: usize,
    /// Objective was non-finite at the initial guess; the guess is
    /// returned untouched.
    pub flagged: bool,
}

/// The fixed quantities of the latent problem: linear basis `V`, the
/// nonlinear map `N = V̄ Ξ`, and the feature degree.
pub struct LatentProblem<'a> {
    v: &'a DMatrix<f64>,
    n_map: &'a DMatrix<f64>,
    p: PolyDegree,
}

impl<'a> LatentProblem<'a> {
    pub fn new(v: &'a DMatrix<f64>, n_map: &'a DMatrix<f64>, p: PolyDegree) -> Self {
        debug_assert_eq!(n_map.ncols(), p.feature_dim(v.ncols()));
        debug_assert_eq!(n_map.nrows(), v.nrows());
        Self { v, n_map, p }
    }

    fn residual(&self, target: DVectorView<f64>, s_hat: &DVector<f64>) -> DVector<f64> {
        let mut res = target.clone_owned();
        res.gemv(-1.0, self.v, s_hat, 1.0);
        let features = poly::g(s_hat.as_view(), self.p);
        res.gemv(-1.0, self.n_map, &features, 1.0);
        res
    }

    pub fn objective(&self, target: DVectorView<f64>, s_hat: &DVector<f64>) -> f64 {
        self.residual(target, s_hat).norm_squared()
    }

    /// Minimizes the per-sample objective starting from `init`.
    pub fn solve(
        &self,
        target: DVectorView<f64>,
        init: DVectorView<f64>,
        settings: &NlsSettings,
    ) -> NlsOutcome {
        let r = self.v.ncols();
        let mut s_hat = init.clone_owned();
        let mut res = self.residual(target, &s_hat);
        let mut objective = res.norm_squared();
        if !objective.is_finite() {
            return NlsOutcome {
                s_hat,
                objective,
                converged: false,
                iterations: 0,
                flagged: true,
            };
        }
        let mut lambda = settings.lambda_init;
        let mut iterations = 0;
        let mut converged = false;

        // A = V + N·g'(ŝ); residual Jacobian is −A, so Gauss–Newton
        // solves (AᵀA + λI) δ = Aᵀ res and steps ŝ + δ.
        let mut a = self.v + poly::apply_jacobian_left(self.n_map, s_hat.as_view(), self.p);
        while iterations < settings.max_iters {
            let grad = a.transpose() * &res;
            if 2.0 * grad.norm() <= settings.grad_tol {
                converged = true;
                break;
            }
            if lambda > 1e14 {
                break; // damping exhausted; no acceptable step exists
            }
            iterations += 1;
            let mut normal = a.transpose() * &a;
            for i in 0..r {
                normal[(i, i)] += lambda;
            }
            let step = match normal.cholesky() {
                Some(chol) => chol.solve(&grad),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let candidate = &s_hat + &step;
            let cand_res = self.residual(target, &candidate);
            let cand_obj = cand_res.norm_squared();
            if cand_obj.is_finite() && cand_obj <= objective {
                s_hat = candidate;
                res = cand_res;
                objective = cand_obj;
                lambda *= 0.1;
                a = self.v + poly::apply_jacobian_left(self.n_map, s_hat.as_view(), self.p);
            } else {
                lambda *= 10.0;
            }
        }
        NlsOutcome {
            s_hat,
            objective,
            converged,
            iterations,
            flagged: false,
        }
    }

    /// Solves every column of `targets` independently (in parallel),
    /// warm-starting from the matching column of `inits`.
    pub fn solve_batch(
        &self,
        targets: &DMatrix<f64>,
        inits: &DMatrix<f64>,
        settings: &NlsSettings,
    ) -> Vec<NlsOutcome>
    where
        Self: Sync,
    {
        assert_eq!(targets.ncols(), inits.ncols());
        (0..targets.ncols())
            .into_par_iter()
            .map(|j| self.solve(targets.column(j), inits.column(j), settings))
            .collect()
    }
}
