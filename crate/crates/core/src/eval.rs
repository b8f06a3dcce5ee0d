//! Test-set representation error, the error sweep, and CSV reports.
//!
//! The error of a reconstruction family on `m` held-out parameter sets
//! is `(1/m) Σ_i ‖S(μ_i) − S̃(μ_i)‖²_F / ‖S(μ_i)‖²_F`, computed on raw
//! snapshots: test data are centered with the **training** mean before
//! encoding (anything else would leak test information), and the mean
//! is added back into every reconstruction.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::am::{self, AmConfig};
use crate::error::{Error, Result};
use crate::fit;
use crate::model::ManifoldModel;
use crate::nls::NlsSettings;
use crate::pod::{self, PodBasis};
use crate::poly::PolyDegree;
use crate::snapshot::{self, atomic_write, fmt_g17, CatalogEntry, CenteringVector, DatasetCatalog, SnapshotMatrix};

/// Reconstruction family in a sweep record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Pod,
    ManifoldPod,
    ManifoldAm,
}

impl SweepMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMethod::Pod => "pod",
            SweepMethod::ManifoldPod => "manifold_pod",
            SweepMethod::ManifoldAm => "manifold_am",
        }
    }
}

/// Test-time encoder for manifold models: the bare linear projection
/// (ablation) or the per-sample nonlinear solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Linear,
    Nls,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Linear => "linear",
            EncoderKind::Nls => "nls",
        }
    }
}

/// One cell of the error sweep. `p`, `q`, and `gamma` are zero for the
/// plain POD rows; `am_cycles` is zero unless the method is
/// `manifold_am`. Failed fits keep their cell with `test_error = NaN`
/// and `converged = false`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorSweepRecord {
    pub method: SweepMethod,
    pub r: usize,
    pub p: u32,
    pub q: usize,
    pub gamma: f64,
    pub test_error: f64,
    pub am_cycles: usize,
    pub converged: bool,
}

/// A decode∘encode pipeline mapping raw snapshots to raw reconstructions.
pub trait Reconstructor {
    fn reconstruct(&self, s: &SnapshotMatrix) -> Result<DMatrix<f64>>;
}

/// Linear POD reconstruction `c + V Vᵀ(s − c)`.
pub struct PodReconstructor {
    modes: DMatrix<f64>,
    centering: CenteringVector,
}

impl PodReconstructor {
    pub fn new(modes: DMatrix<f64>, centering: CenteringVector) -> Result<Self> {
        if modes.nrows() != centering.len() {
            return Err(Error::dims("pod reconstructor", centering.len(), modes.nrows()));
        }
        Ok(Self { modes, centering })
    }

    pub fn from_basis(basis: &PodBasis, r: usize, centering: &CenteringVector) -> Result<Self> {
        Self::new(basis.leading(r)?, centering.clone())
    }
}

impl Reconstructor for PodReconstructor {
    fn reconstruct(&self, s: &SnapshotMatrix) -> Result<DMatrix<f64>> {
        if s.state_dim() != self.modes.nrows() {
            return Err(Error::dims("pod reconstruct", self.modes.nrows(), s.state_dim()));
        }
        let mut centered = s.data().clone();
        for mut col in centered.column_iter_mut() {
            col -= self.centering.as_vector();
        }
        let mut out = &self.modes * (self.modes.transpose() * centered);
        for mut col in out.column_iter_mut() {
            col += self.centering.as_vector();
        }
        Ok(out)
    }
}

/// Manifold reconstruction through either encoder.
pub struct ManifoldReconstructor<'a> {
    model: &'a ManifoldModel,
    encoder: EncoderKind,
    nls: NlsSettings,
}

impl<'a> ManifoldReconstructor<'a> {
    pub fn new(model: &'a ManifoldModel, encoder: EncoderKind, nls: NlsSettings) -> Self {
        Self { model, encoder, nls }
    }
}

impl Reconstructor for ManifoldReconstructor<'_> {
    fn reconstruct(&self, s: &SnapshotMatrix) -> Result<DMatrix<f64>> {
        if s.state_dim() != self.model.n() {
            return Err(Error::dims("manifold reconstruct", self.model.n(), s.state_dim()));
        }
        let latents = match self.encoder {
            EncoderKind::Linear => {
                let mut centered = s.data().clone();
                for mut col in centered.column_iter_mut() {
                    col -= self.model.centering().as_vector();
                }
                self.model.v().transpose() * centered
            }
            EncoderKind::Nls => am::encode_am_batch(self.model, s, &self.nls)?.0,
        };
        self.model.decode_batch(&latents)
    }
}

/// Mean relative Frobenius reconstruction error over the test sets.
pub fn representation_error<R: Reconstructor + ?Sized>(
    reconstructor: &R,
    test: &[CatalogEntry],
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut acc = 0.0;
    for entry in test {
        let denom = entry.matrix.data().norm_squared();
        if denom == 0.0 {
            return Err(Error::IllPosed("test snapshot matrix has zero norm".into()));
        }
        let recon = reconstructor.reconstruct(&entry.matrix)?;
        acc += (entry.matrix.data() - recon).norm_squared() / denom;
    }
    Ok(acc / test.len() as f64)
}

/// Sweep layout: which `(r, p)` cells to fit, the constant mode budget
/// `r + q`, the shared regularization, and the outer-loop settings.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub r_list: Vec<usize>,
    pub p_list: Vec<u32>,
    /// Every manifold cell uses `q = total_modes − r`.
    pub total_modes: usize,
    pub gamma: f64,
    pub am: AmConfig,
    /// Test-time encoder for both manifold methods.
    pub encoder: EncoderKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            r_list: (1..=7).map(|i| 2 * i).collect(),
            p_list: vec![2, 3, 4],
            total_modes: 82,
            gamma: 500.0,
            am: AmConfig::default(),
            encoder: EncoderKind::Nls,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_list.is_empty() || self.p_list.is_empty() {
            return Err(Error::InvalidConfig("empty r or p list".into()));
        }
        for &r in &self.r_list {
            if r == 0 || r >= self.total_modes {
                return Err(Error::InvalidConfig(format!(
                    "r must lie in [1, {}), got {r}",
                    self.total_modes
                )));
            }
        }
        for &p in &self.p_list {
            PolyDegree::new(p)?;
        }
        self.am.validate()
    }
}

fn failed_cell(method: SweepMethod, r: usize, p: u32, q: usize, gamma: f64) -> ErrorSweepRecord {
    ErrorSweepRecord {
        method,
        r,
        p,
        q,
        gamma,
        test_error: f64::NAN,
        am_cycles: 0,
        converged: false,
    }
}

/// Fits and evaluates every sweep cell: one `pod` record per `r`, plus
/// one `manifold_pod` and one `manifold_am` record per `(r, p)`. All
/// cells share a single POD basis of `total_modes` modes. Failed fits
/// are kept as flagged records so partial sweeps stay usable.
pub fn run_sweep(catalog: &DatasetCatalog, cfg: &SweepConfig) -> Result<Vec<ErrorSweepRecord>> {
    cfg.validate()?;
    if catalog.test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let stacked = catalog.stacked_train()?;
    let (s_c, centering) = snapshot::center(&stacked);
    let basis = pod::compute_pod(&s_c, cfg.total_modes)?;
    if basis.rank() < cfg.total_modes {
        return Err(Error::RankOutOfRange {
            r: cfg.total_modes,
            max: basis.rank(),
        });
    }

    let mut records = Vec::new();
    for &r in &cfg.r_list {
        let q = cfg.total_modes - r;
        let pod_rec = PodReconstructor::from_basis(&basis, r, &centering)?;
        records.push(ErrorSweepRecord {
            method: SweepMethod::Pod,
            r,
            p: 0,
            q: 0,
            gamma: 0.0,
            test_error: representation_error(&pod_rec, &catalog.test)?,
            am_cycles: 0,
            converged: true,
        });

        for &p_raw in &cfg.p_list {
            let p = PolyDegree::new(p_raw)?;
            let init = match fit::fit_from_basis(&basis, &s_c, &centering, r, q, p, cfg.gamma) {
                Ok(init) => init,
                Err(_) => {
                    records.push(failed_cell(SweepMethod::ManifoldPod, r, p_raw, q, cfg.gamma));
                    records.push(failed_cell(SweepMethod::ManifoldAm, r, p_raw, q, cfg.gamma));
                    continue;
                }
            };
            let mpod_rec = ManifoldReconstructor::new(&init.0, cfg.encoder, cfg.am.nls);
            match representation_error(&mpod_rec, &catalog.test) {
                Ok(err) => records.push(ErrorSweepRecord {
                    method: SweepMethod::ManifoldPod,
                    r,
                    p: p_raw,
                    q,
                    gamma: cfg.gamma,
                    test_error: err,
                    am_cycles: 0,
                    converged: true,
                }),
                Err(_) => {
                    records.push(failed_cell(SweepMethod::ManifoldPod, r, p_raw, q, cfg.gamma))
                }
            }

            match am::fit_am(&s_c, r, q, p, cfg.gamma, &cfg.am, init) {
                Ok((model, _, trace)) => {
                    let am_rec = ManifoldReconstructor::new(&model, cfg.encoder, cfg.am.nls);
                    match representation_error(&am_rec, &catalog.test) {
                        Ok(err) => records.push(ErrorSweepRecord {
                            method: SweepMethod::ManifoldAm,
                            r,
                            p: p_raw,
                            q,
                            gamma: cfg.gamma,
                            test_error: err,
                            am_cycles: trace.cycle_count(),
                            converged: trace.converged,
                        }),
                        Err(_) => records
                            .push(failed_cell(SweepMethod::ManifoldAm, r, p_raw, q, cfg.gamma)),
                    }
                }
                Err(_) => {
                    records.push(failed_cell(SweepMethod::ManifoldAm, r, p_raw, q, cfg.gamma))
                }
            }
        }
    }
    Ok(records)
}

/// `method,r,p,q,gamma,test_error,am_cycles,converged` — one row per record.
pub fn write_sweep_csv(records: &[ErrorSweepRecord], path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "method,r,p,q,gamma,test_error,am_cycles,converged")?;
        for rec in records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                rec.method.as_str(),
                rec.r,
                rec.p,
                rec.q,
                fmt_g17(rec.gamma),
                fmt_g17(rec.test_error),
                rec.am_cycles,
                rec.converged
            )?;
        }
        Ok(())
    })
}

/// Space-time reconstruction field for one test trajectory:
/// `x,t,reference,pod,manifold_pod,manifold_am`, snapshot-major.
pub fn write_field_csv(
    path: &Path,
    x: &[f64],
    t: &[f64],
    reference: &SnapshotMatrix,
    pod: &DMatrix<f64>,
    manifold_pod: &DMatrix<f64>,
    manifold_am: &DMatrix<f64>,
) -> Result<()> {
    let n = reference.state_dim();
    let k = reference.sample_count();
    if x.len() != n || t.len() != k {
        return Err(Error::dims("field axes", n + k, x.len() + t.len()));
    }
    for (name, m) in [("pod", pod), ("manifold_pod", manifold_pod), ("manifold_am", manifold_am)] {
        if m.nrows() != n || m.ncols() != k {
            return Err(Error::dims(name, n * k, m.nrows() * m.ncols()));
        }
    }
    atomic_write(path, |w| {
        writeln!(w, "x,t,reference,pod,manifold_pod,manifold_am")?;
        for j in 0..k {
            for i in 0..n {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    fmt_g17(x[i]),
                    fmt_g17(t[j]),
                    fmt_g17(reference.data()[(i, j)]),
                    fmt_g17(pod[(i, j)]),
                    fmt_g17(manifold_pod[(i, j)]),
                    fmt_g17(manifold_am[(i, j)])
                )?;
            }
        }
        Ok(())
    })
}
