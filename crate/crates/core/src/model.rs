//! Fitted decoder models and their on-disk container format.
//!
//! The container is the matrix format's sibling: magic bytes `PMMC1`, an
//! 8-byte little-endian JSON length, the JSON metadata record, then the
//! model's matrices back to back, each framed exactly like a standalone
//! matrix file.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{self, LatentStates, PolyDegree};
use crate::snapshot::{atomic_write, read_matrix, write_matrix, CenteringVector};

const MODEL_MAGIC: &[u8; 5] = b"PMMC1";

/// Which fitting route produced a manifold model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    ManifoldPod,
    ManifoldAm,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::ManifoldPod => "manifold_pod",
            FitMethod::ManifoldAm => "manifold_am",
        }
    }
}

/// The complete polynomial decoder: `s ≈ c + V ŝ + V̄ Ξ g(ŝ)`.
#[derive(Debug, Clone)]
pub struct ManifoldModel {
    v: DMatrix<f64>,
    v_bar: DMatrix<f64>,
    xi: DMatrix<f64>,
    p: PolyDegree,
    gamma: f64,
    centering: CenteringVector,
    method: FitMethod,
}

impl ManifoldModel {
    /// Assembles and validates a model. The combined basis must satisfy
    /// the orthonormality constraint `[V, V̄]ᵀ[V, V̄] = I` to 1e-10.
    pub fn new(
        v: DMatrix<f64>,
        v_bar: DMatrix<f64>,
        xi: DMatrix<f64>,
        p: PolyDegree,
        gamma: f64,
        centering: CenteringVector,
        method: FitMethod,
    ) -> Result<Self> {
        let n = v.nrows();
        let r = v.ncols();
        let q = v_bar.ncols();
        if v_bar.nrows() != n {
            return Err(Error::dims("model bases", n, v_bar.nrows()));
        }
        if centering.len() != n {
            return Err(Error::dims("model centering", n, centering.len()));
        }
        if xi.nrows() != q || xi.ncols() != p.feature_dim(r) {
            return Err(Error::dims(
                "model coefficients",
                q * p.feature_dim(r),
                xi.nrows() * xi.ncols(),
            ));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        let model = Self {
            v,
            v_bar,
            xi,
            p,
            gamma,
            centering,
            method,
        };
        let defect = model.stiefel_defect();
        if defect.is_nan() || defect > 1e-10 {
            return Err(Error::IllPosed(format!(
                "combined basis violates orthonormality: max defect {defect:.2e}"
            )));
        }
        Ok(model)
    }

    /// Largest entrywise deviation of `[V, V̄]ᵀ[V, V̄]` from the identity.
    pub fn stiefel_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        let blocks: [(&DMatrix<f64>, &DMatrix<f64>, bool); 3] = [
            (&self.v, &self.v, true),
            (&self.v_bar, &self.v_bar, true),
            (&self.v, &self.v_bar, false),
        ];
        for (a, b, diagonal) in blocks {
            let gram = a.transpose() * b;
            for i in 0..gram.nrows() {
                for j in 0..gram.ncols() {
                    let expect = if diagonal && i == j { 1.0 } else { 0.0 };
                    defect = defect.max((gram[(i, j)] - expect).abs());
                }
            }
        }
        defect
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn r(&self) -> usize {
        self.v.ncols()
    }

    pub fn q(&self) -> usize {
        self.v_bar.ncols()
    }

    pub fn degree(&self) -> PolyDegree {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn method(&self) -> FitMethod {
        self.method
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn v_bar(&self) -> &DMatrix<f64> {
        &self.v_bar
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn centering(&self) -> &CenteringVector {
        &self.centering
    }

    /// Precomputed `N = V̄ Ξ`, the nonlinear-term map from features to
    /// states; shape n × (p−1)r.
    pub fn nonlinear_map(&self) -> DMatrix<f64> {
        &self.v_bar * &self.xi
    }

    /// `centering + V ŝ + V̄ Ξ g(ŝ)` — the uncentered reconstruction.
    pub fn decode(&self, s_hat: DVectorView<f64>) -> Result<DVector<f64>> {
        if s_hat.len() != self.r() {
            return Err(Error::dims("decode", self.r(), s_hat.len()));
        }
        let mut out = self.centering.as_vector().clone();
        out.gemv(1.0, &self.v, &s_hat, 1.0);
        let features = poly::g(s_hat, self.p);
        out += &self.v_bar * (&self.xi * features);
        Ok(out)
    }

    /// Column-wise `decode` for a whole latent matrix.
    pub fn decode_batch(&self, latents: &LatentStates) -> Result<DMatrix<f64>> {
        if latents.nrows() != self.r() {
            return Err(Error::dims("decode_batch", self.r(), latents.nrows()));
        }
        let mut out = &self.v * latents;
        out += self.nonlinear_map() * poly::build_w(latents, self.p);
        for mut col in out.column_iter_mut() {
            col += self.centering.as_vector();
        }
        Ok(out)
    }

    /// Linear encoder `Vᵀ(s − centering)`.
    pub fn encode_pod(&self, s: DVectorView<f64>) -> Result<DVector<f64>> {
        if s.len() != self.n() {
            return Err(Error::dims("encode", self.n(), s.len()));
        }
        let centered = s - self.centering.as_vector();
        Ok(self.v.transpose() * centered)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = ModelMeta {
            kind: ModelKind::Manifold,
            method: Some(self.method),
            n: self.n(),
            r: self.r(),
            q: self.q(),
            p: self.p.get(),
            gamma: self.gamma,
        };
        atomic_write(path, |w| {
            write_header(w, &meta)?;
            write_matrix(&self.v, w)?;
            write_matrix(&self.v_bar, w)?;
            write_matrix(&self.xi, w)?;
            write_matrix(&vector_as_matrix(self.centering.as_vector()), w)?;
            Ok(())
        })
    }
}

/// A plain POD model: linear decoder `centering + V Vᵀ(s − centering)`
/// plus the singular-value spectrum it was cut from.
#[derive(Debug, Clone)]
pub struct PodModel {
    pub modes: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub centering: CenteringVector,
}

impl PodModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = ModelMeta {
            kind: ModelKind::Pod,
            method: None,
            n: self.modes.nrows(),
            r: self.modes.ncols(),
            q: 0,
            p: 0,
            gamma: 0.0,
        };
        atomic_write(path, |w| {
            write_header(w, &meta)?;
            write_matrix(&self.modes, w)?;
            write_matrix(&vector_as_matrix(&self.singular_values), w)?;
            write_matrix(&vector_as_matrix(self.centering.as_vector()), w)?;
            Ok(())
        })
    }
}

/// Either model kind, as stored on disk.
#[derive(Debug, Clone)]
pub enum StoredModel {
    Pod(PodModel),
    Manifold(ManifoldModel),
}

impl StoredModel {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut r = BufReader::new(file);
        let meta = read_header(&mut r)?;
        match meta.kind {
            ModelKind::Pod => {
                let modes = read_matrix(&mut r)?;
                let sv = matrix_as_vector(read_matrix(&mut r)?)?;
                let centering = matrix_as_vector(read_matrix(&mut r)?)?;
                if modes.nrows() != meta.n || modes.ncols() != meta.r {
                    return Err(Error::Format("pod container dimensions disagree".into()));
                }
                Ok(StoredModel::Pod(PodModel {
                    modes,
                    singular_values: sv,
                    centering: CenteringVector::new(centering),
                }))
            }
            ModelKind::Manifold => {
                let v = read_matrix(&mut r)?;
                let v_bar = read_matrix(&mut r)?;
                let xi = read_matrix(&mut r)?;
                let centering = matrix_as_vector(read_matrix(&mut r)?)?;
                if v.nrows() != meta.n || v.ncols() != meta.r || v_bar.ncols() != meta.q {
                    return Err(Error::Format(
                        "manifold container dimensions disagree".into(),
                    ));
                }
                let p = PolyDegree::new(meta.p)?;
                let method = meta.method.unwrap_or(FitMethod::ManifoldPod);
                Ok(StoredModel::Manifold(ManifoldModel::new(
                    v,
                    v_bar,
                    xi,
                    p,
                    meta.gamma,
                    CenteringVector::new(centering),
                    method,
                )?))
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelKind {
    Pod,
    Manifold,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    method: Option<FitMethod>,
    n: usize,
    r: usize,
    q: usize,
    p: u32,
    gamma: f64,
}

fn write_header(w: &mut dyn Write, meta: &ModelMeta) -> Result<()> {
    let json = serde_json::to_vec(meta)?;
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_header(r: &mut dyn Read) -> Result<ModelMeta> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for magic".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MODEL_MAGIC
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 20 {
        return Err(Error::Format(format!("metadata length {len} implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::Format("truncated metadata".into()))?;
    Ok(serde_json::from_slice(&json)?)
}

fn vector_as_matrix(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn matrix_as_vector(m: DMatrix<f64>) -> Result<DVector<f64>> {
    if m.ncols() != 1 {
        return Err(Error::Format(format!(
            "expected a single-column matrix, got {} columns",
            m.ncols()
        )));
    }
    Ok(DVector::from_column_slice(m.column(0).as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Small exactly-orthonormal basis pair from identity columns.
    fn toy_model(method: FitMethod) -> ManifoldModel {
        let n = 5;
        let v = DMatrix::from_fn(n, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let v_bar = DMatrix::from_fn(n, 2, |i, j| if i == j + 2 { 1.0 } else { 0.0 });
        let p = PolyDegree::new(3).unwrap();
        // xi: q × (p−1)r = 2 × 4
        let xi = DMatrix::from_row_slice(2, 4, &[0.5, 0.0, 1.0, 0.0, 0.0, -2.0, 0.0, 0.25]);
        let centering = CenteringVector::new(DVector::from_fn(n, |i, _| i as f64));
        ManifoldModel::new(v, v_bar, xi, p, 0.5, centering, method).unwrap()
    }

    #[test]
    fn decode_at_zero_is_centering() {
        let m = toy_model(FitMethod::ManifoldPod);
        let out = m.decode(DVector::zeros(2).as_view()).unwrap();
        assert_eq!(out, *m.centering().as_vector());
    }

    #[test]
    fn zero_xi_reduces_to_linear_decode() {
        let m = toy_model(FitMethod::ManifoldPod);
        let zero_xi = ManifoldModel::new(
            m.v().clone(),
            m.v_bar().clone(),
            DMatrix::zeros(2, 4),
            m.degree(),
            m.gamma(),
            m.centering().clone(),
            m.method(),
        )
        .unwrap();
        let s_hat = DVector::from_vec(vec![1.5, -2.0]);
        let out = zero_xi.decode(s_hat.as_view()).unwrap();
        let linear = m.centering().as_vector() + m.v() * &s_hat;
        assert_eq!(out, linear);
    }

    #[test]
    fn decode_lands_in_basis_span() {
        let m = toy_model(FitMethod::ManifoldAm);
        let s_hat = DVector::from_vec(vec![0.3, 0.8]);
        let delta = m.decode(s_hat.as_view()).unwrap()
            - m.decode(DVector::zeros(2).as_view()).unwrap();
        // Remove the [V, V̄] projection; the remainder must vanish.
        let vp = m.v() * (m.v().transpose() * &delta);
        let vbp = m.v_bar() * (m.v_bar().transpose() * &delta);
        assert!((delta - vp - vbp).norm() <= 1e-10);
    }

    #[test]
    fn encode_inverts_linear_part() {
        let m = toy_model(FitMethod::ManifoldPod);
        // s = centering → 0.
        let zero = m
            .encode_pod(m.centering().as_vector().as_view())
            .unwrap();
        assert!(zero.norm() == 0.0);
        // s = centering + V e1 → e1.
        let s = m.centering().as_vector() + m.v().column(0).into_owned();
        let e1 = m.encode_pod(s.as_view()).unwrap();
        assert!((e1[0] - 1.0).abs() <= 1e-12 && e1[1].abs() <= 1e-12);
        // encode(decode(ŝ)) = ŝ because VᵀV̄ = 0.
        let s_hat = DVector::from_vec(vec![0.7, -0.2]);
        let round = m.encode_pod(m.decode(s_hat.as_view()).unwrap().as_view()).unwrap();
        assert!((round - s_hat).norm() <= 1e-10);
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let n = 4;
        let v = DMatrix::from_fn(n, 2, |i, j| if i == j { 1.1 } else { 0.0 });
        let v_bar = DMatrix::from_fn(n, 1, |i, _| if i == 2 { 1.0 } else { 0.0 });
        let err = ManifoldModel::new(
            v,
            v_bar,
            DMatrix::zeros(1, 2),
            PolyDegree::new(2).unwrap(),
            0.0,
            CenteringVector::new(DVector::zeros(n)),
            FitMethod::ManifoldPod,
        );
        assert!(matches!(err, Err(Error::IllPosed(_))));
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pmmc");
        let m = toy_model(FitMethod::ManifoldAm);
        m.save(&path).unwrap();
        let loaded = match StoredModel::load(&path).unwrap() {
            StoredModel::Manifold(m) => m,
            StoredModel::Pod(_) => panic!("wrong kind"),
        };
        assert_eq!(loaded.method(), FitMethod::ManifoldAm);
        assert_eq!(loaded.degree().get(), 3);
        assert_eq!(loaded.gamma(), 0.5);
        assert!(loaded
            .xi()
            .iter()
            .zip(m.xi().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(loaded
            .centering()
            .as_vector()
            .iter()
            .zip(m.centering().as_vector().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn pod_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pod.pmmc");
        let m = PodModel {
            modes: DMatrix::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.0 }),
            singular_values: DVector::from_vec(vec![3.0, 1.0, 0.5, 0.1]),
            centering: CenteringVector::new(DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])),
        };
        m.save(&path).unwrap();
        match StoredModel::load(&path).unwrap() {
            StoredModel::Pod(p) => {
                assert_eq!(p.modes, m.modes);
                assert_eq!(p.singular_values, m.singular_values);
            }
            StoredModel::Manifold(_) => panic!("wrong kind"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pmmc");
        std::fs::write(&path, b"PMDR1junkjunkjunk").unwrap();
        assert!(matches!(
            StoredModel::load(&path),
            Err(Error::Format(msg)) if msg.contains("bad magic")
        ));
    }
}
