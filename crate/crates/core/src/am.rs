//! Approach 2: alternating minimization over the basis, coefficients,
//! and latent coordinates.
//!
//! Each cycle performs three block updates of the regularized objective
//! `J(Ω, Ξ, Ŝ) = ‖S − Ω[Ŝ; ΞW]‖²_F + γ‖Ξ‖²_F` on centered data:
//!
//! 1. an orthogonal Procrustes solve for the stacked basis `Ω = [V, V̄]`,
//! 2. the same ridge solve for `Ξ` used by the POD-based fit,
//! 3. independent per-sample nonlinear least squares for the columns
//!    of `Ŝ`, warm-started from the previous cycle.
//!
//! Every step minimizes its own block (the third accepts only improving
//! iterates), so the objective is non-increasing within and across
//! cycles. Termination follows the retained information content
//! `e^ℓ = ‖VŜ + V̄ΞW‖²_F / ‖S‖²_F`, stopping once consecutive cycles
//! differ by at most `tol`.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::fit;
use crate::model::{FitMethod, ManifoldModel};
use crate::nls::{LatentProblem, NlsSettings};
use crate::poly::{self, LatentStates, PolyDegree};
use crate::snapshot::SnapshotMatrix;

/// Outer-loop settings: convergence tolerance on consecutive `e^ℓ`
/// values, a cycle cap, and the nested per-sample solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmConfig {
    pub tol: f64,
    pub max_cycles: usize,
    pub nls: NlsSettings,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_cycles: 100,
            nls: NlsSettings::default(),
        }
    }
}

impl AmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.max_cycles == 0 {
            return Err(Error::InvalidConfig("max_cycles must be at least 1".into()));
        }
        Ok(())
    }
}

/// One cycle of the trace: the information content after the cycle and
/// the regularized objective after each of the three steps.
#[derive(Debug, Clone, Copy)]
pub struct CycleRecord {
    /// 1-based cycle index.
    pub cycle: usize,
    /// Retained information content `e^ℓ` after the cycle.
    pub e: f64,
    pub objective_after_procrustes: f64,
    pub objective_after_coefficients: f64,
    /// Objective after the latent step — the cycle's final value.
    pub objective: f64,
    /// The Procrustes product matrix was numerically rank-deficient;
    /// the returned basis is still a minimizer but not unique.
    pub degenerate_procrustes: bool,
    /// Samples whose inner solve hit a non-finite objective and kept
    /// their warm start.
    pub flagged_samples: usize,
}

/// Full optimization history of one `fit_am` run.
///
/// The concatenation `initial_objective, cycles[0].objective_after_*…`
/// is non-increasing up to roundoff slack (`1e-10` relative to the data
/// energy).
#[derive(Debug, Clone)]
pub struct AmTrace {
    /// `e^0` of the initialization.
    pub initial_e: f64,
    /// Objective of the initialization.
    pub initial_objective: f64,
    pub cycles: Vec<CycleRecord>,
    /// Terminated by the `|e^{ℓ+1} − e^ℓ| ≤ tol` test rather than the
    /// cycle cap.
    pub converged: bool,
}

impl AmTrace {
    pub fn cycle_count(&self) -> usize {
        self.cycles.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.cycles
            .last()
            .map_or(self.initial_objective, |c| c.objective)
    }

    /// Any cycle saw a rank-deficient Procrustes product.
    pub fn any_degenerate(&self) -> bool {
        self.cycles.iter().any(|c| c.degenerate_procrustes)
    }
}

/// `cycle,e,objective` — cycle 0 is the initialization, then one row
/// per completed cycle.
pub fn write_trace_csv(trace: &AmTrace, path: &std::path::Path) -> Result<()> {
    crate::snapshot::atomic_write(path, |w| {
        writeln!(w, "cycle,e,objective")?;
        writeln!(
            w,
            "0,{},{}",
            crate::snapshot::fmt_g17(trace.initial_e),
            crate::snapshot::fmt_g17(trace.initial_objective)
        )?;
        for rec in &trace.cycles {
            writeln!(
                w,
                "{},{},{}",
                rec.cycle,
                crate::snapshot::fmt_g17(rec.e),
                crate::snapshot::fmt_g17(rec.objective)
            )?;
        }
        Ok(())
    })
}

/// Aggregate statistics of one batch of per-sample latent solves.
#[derive(Debug, Clone, Copy, Default)]
pub struct LatentStepStats {
    /// Samples returned at their warm start after a non-finite objective.
    pub flagged: usize,
    /// Samples meeting the gradient tolerance (the rest hit the cap).
    pub converged: usize,
    /// Total step attempts across all samples.
    pub iterations: usize,
}

fn split_basis(omega: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if omega.ncols() <= r {
        return Err(Error::dims("stacked basis columns", r + 1, omega.ncols()));
    }
    let q = omega.ncols() - r;
    Ok((omega.columns(0, r).into_owned(), omega.columns(r, q).into_owned()))
}

/// Orthogonal factor `UVᵀ` of a matrix, plus a flag for numerically
/// rank-deficient input (minimizer still valid, uniqueness lost).
fn orthogonal_factor(m: DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if m.norm_squared() == 0.0 {
        return Err(Error::DegenerateProcrustes);
    }
    let svd = m
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::IllPosed("SVD of the Procrustes product did not converge".into()))?;
    let sigma = &svd.singular_values;
    let degenerate = sigma.min() <= 1e-12 * sigma.max();
    let omega = svd.u.expect("requested u") * svd.v_t.expect("requested v_t");
    Ok((omega, degenerate))
}

/// Step 1: the stacked basis `Ω` maximizing `⟨Ω, S[Ŝᵀ, (ΞW)ᵀ]⟩`, i.e.
/// the orthogonal Procrustes solution `U_P V_Pᵀ` from the SVD of the
/// product matrix. The flag reports a rank-deficient product.
pub fn procrustes_step(
    s_centered: &SnapshotMatrix,
    s_hat: &LatentStates,
    xi: &DMatrix<f64>,
    p: PolyDegree,
) -> Result<(DMatrix<f64>, bool)> {
    let n = s_centered.state_dim();
    let k = s_centered.sample_count();
    let r = s_hat.nrows();
    let q = xi.nrows();
    if s_hat.ncols() != k {
        return Err(Error::dims("procrustes latents", k, s_hat.ncols()));
    }
    if xi.ncols() != p.feature_dim(r) {
        return Err(Error::dims("procrustes coefficients", p.feature_dim(r), xi.ncols()));
    }
    if n < r + q {
        return Err(Error::RankOutOfRange { r: r + q, max: n });
    }
    let w = poly::build_w(s_hat, p);
    let xi_w = xi * w;
    let mut m = DMatrix::zeros(n, r + q);
    m.columns_mut(0, r)
        .copy_from(&(s_centered.data() * s_hat.transpose()));
    m.columns_mut(r, q)
        .copy_from(&(s_centered.data() * xi_w.transpose()));
    orthogonal_factor(m)
}

/// Step 2: the ridge solve of the POD-based fit, reading `V` and `V̄`
/// as the first `r` and last `q` columns of `Ω`.
pub fn coefficient_step(
    s_centered: &SnapshotMatrix,
    omega: &DMatrix<f64>,
    s_hat: &LatentStates,
    p: PolyDegree,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let (v, v_bar) = split_basis(omega, s_hat.nrows())?;
    fit::coefficient_step(s_centered, &v, &v_bar, s_hat, p, gamma)
}

/// Step 3: independent per-sample solves for the latent columns,
/// warm-started from `s_hat_init`.
pub fn latent_step(
    s_centered: &SnapshotMatrix,
    omega: &DMatrix<f64>,
    xi: &DMatrix<f64>,
    p: PolyDegree,
    s_hat_init: &LatentStates,
    settings: &NlsSettings,
) -> Result<(LatentStates, LatentStepStats)> {
    let r = s_hat_init.nrows();
    if s_hat_init.ncols() != s_centered.sample_count() {
        return Err(Error::dims(
            "latent warm starts",
            s_centered.sample_count(),
            s_hat_init.ncols(),
        ));
    }
    let (v, v_bar) = split_basis(omega, r)?;
    if xi.nrows() != v_bar.ncols() || xi.ncols() != p.feature_dim(r) {
        return Err(Error::dims(
            "latent-step coefficients",
            v_bar.ncols() * p.feature_dim(r),
            xi.nrows() * xi.ncols(),
        ));
    }
    let n_map = &v_bar * xi;
    let problem = LatentProblem::new(&v, &n_map, p);
    let outcomes = problem.solve_batch(s_centered.data(), s_hat_init, settings);
    let mut latents = DMatrix::zeros(r, s_hat_init.ncols());
    let mut stats = LatentStepStats::default();
    for (j, out) in outcomes.iter().enumerate() {
        latents.column_mut(j).copy_from(&out.s_hat);
        stats.flagged += out.flagged as usize;
        stats.converged += out.converged as usize;
        stats.iterations += out.iterations;
    }
    Ok((latents, stats))
}

/// The regularized objective `‖S − Ω[Ŝ; ΞW]‖² + γ‖Ξ‖²` evaluated from
/// precomputed projections `P = ΩᵀS` (split into its `V` and `V̄`
/// blocks), using `‖S − ΩC‖² = ‖S‖² − 2⟨P, C⟩ + ‖C‖²`.
fn objective_from_projections(
    s_norm2: f64,
    p_top: &DMatrix<f64>,
    p_bot: &DMatrix<f64>,
    s_hat: &LatentStates,
    xi_w: &DMatrix<f64>,
    xi: &DMatrix<f64>,
    gamma: f64,
) -> f64 {
    let cross = p_top.dot(s_hat) + p_bot.dot(xi_w);
    let c_norm2 = s_hat.norm_squared() + xi_w.norm_squared();
    s_norm2 - 2.0 * cross + c_norm2 + gamma * xi.norm_squared()
}

/// Approach 2: alternating minimization, initialized from an Approach 1
/// fit with identical `(r, q, p, γ)`. Returns the refined model, the
/// final latent training coordinates, and the per-cycle trace.
pub fn fit_am(
    s_centered: &SnapshotMatrix,
    r: usize,
    q: usize,
    p: PolyDegree,
    gamma: f64,
    cfg: &AmConfig,
    init: (ManifoldModel, LatentStates),
) -> Result<(ManifoldModel, LatentStates, AmTrace)> {
    cfg.validate()?;
    let (init_model, mut s_hat) = init;
    if init_model.r() != r
        || init_model.q() != q
        || init_model.degree() != p
        || init_model.gamma() != gamma
    {
        return Err(Error::InvalidConfig(
            "initialization was fitted with different (r, q, p, gamma)".into(),
        ));
    }
    let n = s_centered.state_dim();
    let k = s_centered.sample_count();
    if init_model.n() != n || s_hat.nrows() != r || s_hat.ncols() != k {
        return Err(Error::dims("fit_am initialization", n * k, init_model.n() * s_hat.ncols()));
    }
    let s_norm2 = s_centered.data().norm_squared();
    if s_norm2 == 0.0 {
        return Err(Error::IllPosed(
            "training data has zero energy after centering".into(),
        ));
    }
    let slack_scale = s_norm2;

    let mut v = init_model.v().clone();
    let mut v_bar = init_model.v_bar().clone();
    let mut xi = init_model.xi().clone();
    let centering = init_model.centering().clone();

    let mut p_top = v.transpose() * s_centered.data();
    let mut p_bot = v_bar.transpose() * s_centered.data();
    let mut xi_w = &xi * poly::build_w(&s_hat, p);

    let initial_objective =
        objective_from_projections(s_norm2, &p_top, &p_bot, &s_hat, &xi_w, &xi, gamma);
    let initial_e = (s_hat.norm_squared() + xi_w.norm_squared()) / s_norm2;

    let mut trace = AmTrace {
        initial_e,
        initial_objective,
        cycles: Vec::new(),
        converged: false,
    };
    let mut e_prev = initial_e;

    for cycle in 1..=cfg.max_cycles {
        // Step 1: basis.
        let (omega, degenerate) = procrustes_step(s_centered, &s_hat, &xi, p)?;
        (v, v_bar) = split_basis(&omega, r)?;
        p_top = v.transpose() * s_centered.data();
        p_bot = v_bar.transpose() * s_centered.data();
        let objective_after_procrustes =
            objective_from_projections(s_norm2, &p_top, &p_bot, &s_hat, &xi_w, &xi, gamma);

        // Step 2: coefficients.
        xi = fit::coefficient_step(s_centered, &v, &v_bar, &s_hat, p, gamma)?;
        xi_w = &xi * poly::build_w(&s_hat, p);
        let objective_after_coefficients =
            objective_from_projections(s_norm2, &p_top, &p_bot, &s_hat, &xi_w, &xi, gamma);

        // Step 3: latents.
        let n_map = &v_bar * &xi;
        let problem = LatentProblem::new(&v, &n_map, p);
        let outcomes = problem.solve_batch(s_centered.data(), &s_hat, &cfg.nls);
        let mut flagged_samples = 0usize;
        for (j, out) in outcomes.iter().enumerate() {
            s_hat.column_mut(j).copy_from(&out.s_hat);
            flagged_samples += out.flagged as usize;
        }
        xi_w = &xi * poly::build_w(&s_hat, p);
        let objective =
            objective_from_projections(s_norm2, &p_top, &p_bot, &s_hat, &xi_w, &xi, gamma);

        let e = (s_hat.norm_squared() + xi_w.norm_squared()) / s_norm2;
        trace.cycles.push(CycleRecord {
            cycle,
            e,
            objective_after_procrustes,
            objective_after_coefficients,
            objective,
            degenerate_procrustes: degenerate,
            flagged_samples,
        });
        debug_assert!(
            objective <= initial_objective + 1e-10 * slack_scale,
            "objective rose above initialization"
        );
        if (e - e_prev).abs() <= cfg.tol {
            trace.converged = true;
            break;
        }
        e_prev = e;
    }

    let model = ManifoldModel::new(v, v_bar, xi, p, gamma, centering, FitMethod::ManifoldAm)?;
    Ok((model, s_hat, trace))
}

/// Test-time encoder: solves the per-sample problem for one raw state,
/// initialized at the linear projection `Vᵀ(s − centering)`.
pub fn encode_am(
    model: &ManifoldModel,
    s: DVectorView<f64>,
    settings: &NlsSettings,
) -> Result<DVector<f64>> {
    if s.len() != model.n() {
        return Err(Error::dims("encode_am state", model.n(), s.len()));
    }
    let centered = DVector::from(s - model.centering().as_vector());
    let init = model.v().transpose() * &centered;
    let n_map = model.nonlinear_map();
    let problem = LatentProblem::new(model.v(), &n_map, model.degree());
    Ok(problem
        .solve(centered.as_view(), init.as_view(), settings)
        .s_hat)
}

/// Batch test-time encoder for the columns of a raw snapshot matrix.
pub fn encode_am_batch(
    model: &ManifoldModel,
    s: &SnapshotMatrix,
    settings: &NlsSettings,
) -> Result<(LatentStates, LatentStepStats)> {
    if s.state_dim() != model.n() {
        return Err(Error::dims("encode_am_batch states", model.n(), s.state_dim()));
    }
    let mut centered = s.data().clone();
    for mut col in centered.column_iter_mut() {
        col -= model.centering().as_vector();
    }
    let inits = model.v().transpose() * &centered;
    let n_map = model.nonlinear_map();
    let problem = LatentProblem::new(model.v(), &n_map, model.degree());
    let outcomes = problem.solve_batch(&centered, &inits, settings);
    let mut latents = DMatrix::zeros(model.r(), s.sample_count());
    let mut stats = LatentStepStats::default();
    for (j, out) in outcomes.iter().enumerate() {
        latents.column_mut(j).copy_from(&out.s_hat);
        stats.flagged += out.flagged as usize;
        stats.converged += out.converged as usize;
        stats.iterations += out.iterations;
    }
    Ok((latents, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot;
    use rand::prelude::*;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn orthonormal(rng: &mut impl Rng, n: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, cols, |_, _| rng.random_range(-1.0f64..1.0))
            .qr()
            .q()
    }

    fn random_matrix(rng: &mut impl Rng, n: usize, k: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |_, _| rng.random_range(-scale..scale))
    }

    fn snap(data: DMatrix<f64>) -> SnapshotMatrix {
        SnapshotMatrix::new(data).unwrap()
    }

    /// Eq. (13) objective for a candidate stacked basis.
    fn procrustes_objective(
        s: &DMatrix<f64>,
        omega: &DMatrix<f64>,
        s_hat: &LatentStates,
        xi_w: &DMatrix<f64>,
    ) -> f64 {
        let r = s_hat.nrows();
        let q = xi_w.nrows();
        let recon = omega.columns(0, r) * s_hat + omega.columns(r, q) * xi_w;
        (s - recon).norm_squared()
    }

    #[test]
    fn orthogonal_factor_of_identity_is_identity() {
        let (omega, degenerate) = orthogonal_factor(DMatrix::identity(4, 4)).unwrap();
        assert!((omega - DMatrix::<f64>::identity(4, 4)).amax() <= 1e-12);
        assert!(!degenerate);
    }

    #[test]
    fn procrustes_recovers_planted_basis() {
        let mut rng = rng(10);
        let (n, r, q, k) = (12, 2, 3, 20);
        // Degree 3 gives 2r = 4 ≥ q feature rows, so the stacked
        // coefficient matrix [Ŝ; ΞW] can be (and generically is) full
        // rank — the uniqueness condition for recovery.
        let p = PolyDegree::new(3).unwrap();
        let omega0 = orthonormal(&mut rng, n, r + q);
        let s_hat = random_matrix(&mut rng, r, k, 1.0);
        let xi = random_matrix(&mut rng, q, p.feature_dim(r), 1.0);
        let xi_w = &xi * poly::build_w(&s_hat, p);
        let s = snap(omega0.columns(0, r) * &s_hat + omega0.columns(r, q) * &xi_w);
        let (omega, degenerate) = procrustes_step(&s, &s_hat, &xi, p).unwrap();
        assert!(!degenerate);
        assert!((omega - omega0).amax() <= 1e-8);
    }

    #[test]
    fn procrustes_output_is_orthonormal() {
        let mut rng = rng(11);
        for _ in 0..20 {
            let (n, r, q, k) = (9, 2, 2, 15);
            let p = PolyDegree::new(3).unwrap();
            let s = snap(random_matrix(&mut rng, n, k, 2.0));
            let s_hat = random_matrix(&mut rng, r, k, 1.5);
            let xi = random_matrix(&mut rng, q, p.feature_dim(r), 1.0);
            let (omega, _) = procrustes_step(&s, &s_hat, &xi, p).unwrap();
            let gram = omega.transpose() * &omega;
            assert!((gram - DMatrix::<f64>::identity(r + q, r + q)).amax() <= 1e-10);
        }
    }

    #[test]
    fn procrustes_beats_random_candidates() {
        let mut rng = rng(12);
        for _ in 0..50 {
            let (n, r, q, k) = (8, 2, 2, 10);
            let p = PolyDegree::new(2).unwrap();
            let s = snap(random_matrix(&mut rng, n, k, 1.0));
            let s_hat = random_matrix(&mut rng, r, k, 1.0);
            let xi = random_matrix(&mut rng, q, p.feature_dim(r), 1.0);
            let xi_w = &xi * poly::build_w(&s_hat, p);
            let (omega, _) = procrustes_step(&s, &s_hat, &xi, p).unwrap();
            let best = procrustes_objective(s.data(), &omega, &s_hat, &xi_w);
            for _ in 0..200 {
                let candidate = orthonormal(&mut rng, n, r + q);
                let value = procrustes_objective(s.data(), &candidate, &s_hat, &xi_w);
                assert!(best <= value + 1e-10);
            }
        }
    }

    #[test]
    fn procrustes_rejects_zero_product() {
        let mut rng = rng(13);
        let p = PolyDegree::new(2).unwrap();
        let s = snap(random_matrix(&mut rng, 6, 8, 1.0));
        let s_hat = DMatrix::zeros(2, 8);
        let xi = DMatrix::zeros(2, p.feature_dim(2));
        let err = procrustes_step(&s, &s_hat, &xi, p).unwrap_err();
        assert!(matches!(err, Error::DegenerateProcrustes));
    }

    #[test]
    fn procrustes_flags_rank_deficient_product() {
        let mut rng = rng(14);
        let p = PolyDegree::new(2).unwrap();
        let (n, r, q, k) = (7, 2, 1, 9);
        let s = snap(random_matrix(&mut rng, n, k, 1.0));
        let mut s_hat = random_matrix(&mut rng, r, k, 1.0);
        let row = s_hat.row(0).into_owned();
        s_hat.row_mut(1).copy_from(&row); // duplicated latent row
        let xi = DMatrix::zeros(q, p.feature_dim(r)); // zero ΞW column block
        let (omega, degenerate) = procrustes_step(&s, &s_hat, &xi, p).unwrap();
        assert!(degenerate);
        let gram = omega.transpose() * &omega;
        assert!((gram - DMatrix::<f64>::identity(r + q, r + q)).amax() <= 1e-10);
    }

    #[test]
    fn coefficient_step_matches_pod_fit() {
        let mut rng = rng(15);
        let (n, r, q, k) = (10, 2, 3, 30);
        let p = PolyDegree::new(3).unwrap();
        let gamma = 0.5;
        let raw = snap(random_matrix(&mut rng, n, k, 2.0));
        let (s_c, centering) = snapshot::center(&raw);
        let (model, s_hat) =
            fit::fit_pod_manifold(&s_c, &centering, r, q, p, gamma).unwrap();
        let mut omega = DMatrix::zeros(n, r + q);
        omega.columns_mut(0, r).copy_from(model.v());
        omega.columns_mut(r, q).copy_from(model.v_bar());
        let xi = coefficient_step(&s_c, &omega, &s_hat, p, gamma).unwrap();
        assert_eq!(&xi, model.xi());
    }

    #[test]
    fn latent_step_with_zero_xi_is_linear_projection() {
        let mut rng = rng(16);
        let (n, r, q, k) = (11, 3, 2, 14);
        let p = PolyDegree::new(2).unwrap();
        let omega = orthonormal(&mut rng, n, r + q);
        let xi = DMatrix::zeros(q, p.feature_dim(r));
        let s = snap(random_matrix(&mut rng, n, k, 1.0));
        let init = DMatrix::zeros(r, k);
        let (latents, stats) =
            latent_step(&s, &omega, &xi, p, &init, &NlsSettings::default()).unwrap();
        let expected = omega.columns(0, r).transpose() * s.data();
        assert!((latents - expected).amax() <= 1e-9);
        assert_eq!(stats.flagged, 0);
    }

    #[allow(clippy::too_many_arguments)]
    fn centered_random_fit(
        seed: u64,
        n: usize,
        k: usize,
        r: usize,
        q: usize,
        p: PolyDegree,
        gamma: f64,
        cfg: &AmConfig,
    ) -> (ManifoldModel, LatentStates, AmTrace, SnapshotMatrix, f64) {
        let mut rng = rng(seed);
        let raw = snap(random_matrix(&mut rng, n, k, 2.0));
        let (s_c, centering) = snapshot::center(&raw);
        let init = fit::fit_pod_manifold(&s_c, &centering, r, q, p, gamma).unwrap();
        let s_norm2 = s_c.data().norm_squared();
        let (model, latents, trace) =
            fit_am(&s_c, r, q, p, gamma, cfg, init).unwrap();
        (model, latents, trace, s_c, s_norm2)
    }

    #[test]
    fn objective_is_monotone_within_and_across_cycles() {
        let cfg = AmConfig {
            tol: 1e-300, // force the full cycle budget
            max_cycles: 8,
            nls: NlsSettings::default(),
        };
        for seed in 0..10 {
            let p = PolyDegree::new(3).unwrap();
            let (_, _, trace, _, s_norm2) =
                centered_random_fit(20 + seed, 12, 30, 2, 3, p, 0.1, &cfg);
            let slack = 1e-10 * (1.0 + s_norm2);
            let mut prev = trace.initial_objective;
            for rec in &trace.cycles {
                assert!(rec.objective_after_procrustes <= prev + slack, "step 1 rose");
                assert!(
                    rec.objective_after_coefficients <= rec.objective_after_procrustes + slack,
                    "step 2 rose"
                );
                assert!(rec.objective <= rec.objective_after_coefficients + slack, "step 3 rose");
                prev = rec.objective;
            }
            assert_eq!(trace.cycles.len(), 8);
            assert!(trace.final_objective() <= trace.initial_objective + slack);
        }
    }

    #[test]
    fn linear_subspace_data_converges_with_zero_xi() {
        let mut rng = rng(40);
        let (n, r, q, k) = (10, 2, 2, 25);
        let p = PolyDegree::new(2).unwrap();
        let gamma = 1e-6;
        let basis = orthonormal(&mut rng, n, r);
        let coords = random_matrix(&mut rng, r, k, 2.0);
        let raw = snap(&basis * &coords);
        let (s_c, centering) = snapshot::center(&raw);
        let init = fit::fit_pod_manifold(&s_c, &centering, r, q, p, gamma).unwrap();
        let cfg = AmConfig::default();
        let (model, latents, trace) = fit_am(&s_c, r, q, p, gamma, &cfg, init).unwrap();
        assert!(trace.converged);
        // Exact linear data: residual vanishes and the nonlinearity is idle.
        assert!(trace.final_objective() <= 1e-10);
        assert!(model.xi().amax() <= 1e-8);
        let recon = model.v() * &latents;
        assert!((recon - s_c.data()).amax() <= 1e-8);
        // The zero ΞW block makes the Procrustes product rank-deficient.
        assert!(trace.any_degenerate());
    }

    #[test]
    fn improves_on_initialization_for_random_data() {
        let cfg = AmConfig {
            tol: 1e-9,
            max_cycles: 30,
            nls: NlsSettings::default(),
        };
        let p = PolyDegree::new(2).unwrap();
        let (model, _, trace, s_c, _) = centered_random_fit(50, 14, 40, 3, 3, p, 0.05, &cfg);
        assert!(trace.final_objective() <= trace.initial_objective + 1e-12);
        assert_eq!(model.method(), FitMethod::ManifoldAm);
        assert!(model.stiefel_defect() <= 1e-10);
        // e stays within [0, 1] for least-squares fits of centered data.
        for rec in &trace.cycles {
            assert!(rec.e >= 0.0 && rec.e <= 1.0 + 1e-9);
        }
        assert_eq!(s_c.state_dim(), 14);
    }

    #[test]
    fn rejects_mismatched_initialization() {
        let mut rng = rng(60);
        let p = PolyDegree::new(2).unwrap();
        let raw = snap(random_matrix(&mut rng, 10, 20, 1.0));
        let (s_c, centering) = snapshot::center(&raw);
        let init = fit::fit_pod_manifold(&s_c, &centering, 2, 2, p, 0.1).unwrap();
        let err = fit_am(&s_c, 3, 2, p, 0.1, &AmConfig::default(), init).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn encode_am_with_zero_xi_is_linear_projection() {
        let mut rng = rng(70);
        let (n, r, q) = (12, 3, 2);
        let p = PolyDegree::new(2).unwrap();
        let basis = orthonormal(&mut rng, n, r + q);
        let model = ManifoldModel::new(
            basis.columns(0, r).into_owned(),
            basis.columns(r, q).into_owned(),
            DMatrix::zeros(q, p.feature_dim(r)),
            p,
            1.0,
            snapshot::CenteringVector::new(DVector::from_fn(n, |i, _| i as f64 * 0.1)),
            FitMethod::ManifoldAm,
        )
        .unwrap();
        let s = DVector::from_fn(n, |_, _| rng.random_range(-1.0f64..1.0));
        let encoded = encode_am(&model, s.as_view(), &NlsSettings::default()).unwrap();
        let expected =
            model.v().transpose() * (&s - model.centering().as_vector());
        assert!((encoded - expected).norm() <= 1e-9);
    }

    #[test]
    fn encode_am_recovers_decoded_state() {
        let mut rng = rng(71);
        let (n, r, q) = (14, 2, 3);
        let p = PolyDegree::new(3).unwrap();
        let basis = orthonormal(&mut rng, n, r + q);
        let model = ManifoldModel::new(
            basis.columns(0, r).into_owned(),
            basis.columns(r, q).into_owned(),
            random_matrix(&mut rng, q, p.feature_dim(r), 0.3),
            p,
            1.0,
            snapshot::CenteringVector::new(DVector::zeros(n)),
            FitMethod::ManifoldAm,
        )
        .unwrap();
        let s_star = DVector::from_vec(vec![0.7, -0.4]);
        let s = model.decode(s_star.as_view()).unwrap();
        let encoded = encode_am(&model, s.as_view(), &NlsSettings::default()).unwrap();
        let recon = model.decode(encoded.as_view()).unwrap();
        // The encoder must land on a zero-residual optimum (which is
        // s_star itself when the decoder is injective near it).
        assert!((recon - s).norm() <= 1e-6);
    }

    #[test]
    fn encode_batch_never_worse_than_linear_projection() {
        let mut rng = rng(72);
        let (n, r, q, k) = (16, 3, 3, 20);
        let p = PolyDegree::new(2).unwrap();
        let basis = orthonormal(&mut rng, n, r + q);
        let model = ManifoldModel::new(
            basis.columns(0, r).into_owned(),
            basis.columns(r, q).into_owned(),
            random_matrix(&mut rng, q, p.feature_dim(r), 0.5),
            p,
            1.0,
            snapshot::CenteringVector::new(DVector::from_element(n, 0.3)),
            FitMethod::ManifoldAm,
        )
        .unwrap();
        let s = snap(random_matrix(&mut rng, n, k, 1.5));
        let (latents, stats) =
            encode_am_batch(&model, &s, &NlsSettings::default()).unwrap();
        assert_eq!(stats.flagged, 0);
        for j in 0..k {
            let col = s.data().column(j).clone_owned();
            let nls_recon = model.decode(latents.column(j)).unwrap();
            let lin = model.encode_pod(col.as_view()).unwrap();
            let lin_recon = model.decode(lin.as_view()).unwrap();
            let nls_err = (&col - nls_recon).norm_squared();
            let lin_err = (&col - lin_recon).norm_squared();
            assert!(nls_err <= lin_err * (1.0 + 1e-12) + 1e-15);
        }
    }
}
