//! Snapshot ingestion, centering, persistence, and the dataset catalog.
//!
//! The binary matrix format is deliberately minimal so it can be parsed
//! from any language: the magic bytes `PMDR1`, the row and column counts
//! as 8-byte little-endian unsigned integers, then the column-major
//! IEEE-754 `f64` payload. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MATRIX_MAGIC: &[u8; 5] = b"PMDR1";

/// A column-per-sample matrix of high-dimensional states.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    /// Parameter value the trajectory was generated at, when known.
    param: Option<f64>,
}

impl SnapshotMatrix {
    /// Wraps a dense matrix, rejecting empty or non-finite data.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("snapshot matrix"));
        }
        Ok(Self { data, param: None })
    }

    pub fn with_param(mut self, mu: f64) -> Self {
        self.param = Some(mu);
        self
    }

    /// State dimension `n` (rows).
    pub fn state_dim(&self) -> usize {
        self.data.nrows()
    }

    /// Sample count `k` (columns).
    pub fn sample_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn param(&self) -> Option<f64> {
        self.param
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Writes the binary format described in the module docs.
    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, |w| self.write_to(w))
    }

    pub fn write_to(&self, w: &mut dyn Write) -> Result<()> {
        write_matrix(&self.data, w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut reader = BufReader::new(file);
        Self::read_from(&mut reader)
    }

    pub fn read_from(r: &mut dyn Read) -> Result<Self> {
        let data = read_matrix(r)?;
        Self::new(data)
    }

    /// CSV export, one column per snapshot, `%.17g` formatting. Intended
    /// for external plotting; the binary format is the fidelity-bearing
    /// one.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, |w| {
            for i in 0..self.data.nrows() {
                let row: Vec<String> = (0..self.data.ncols())
                    .map(|j| fmt_g17(self.data[(i, j)]))
                    .collect();
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        })
    }
}

/// The per-row mean subtracted from a snapshot matrix during centering.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringVector {
    mean: DVector<f64>,
}

impl CenteringVector {
    pub fn new(mean: DVector<f64>) -> Self {
        Self { mean }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.mean
    }
}

/// Subtracts the mean snapshot (average over columns) from every column.
///
/// Row means are accumulated with compensated summation so the centered
/// rows have means at roundoff level even for long sample runs.
pub fn center(s: &SnapshotMatrix) -> (SnapshotMatrix, CenteringVector) {
    let n = s.state_dim();
    let k = s.sample_count();
    let mut mean = DVector::zeros(n);
    for i in 0..n {
        mean[i] = neumaier_sum(s.data.row(i).iter().copied()) / k as f64;
    }
    let mut centered = s.data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let centered = SnapshotMatrix {
        data: centered,
        param: s.param,
    };
    (centered, CenteringVector::new(mean))
}

/// Adds the centering vector back onto every column.
pub fn uncenter(s_c: &SnapshotMatrix, c: &CenteringVector) -> Result<SnapshotMatrix> {
    if s_c.state_dim() != c.len() {
        return Err(Error::dims("uncenter", c.len(), s_c.state_dim()));
    }
    let mut data = s_c.data.clone();
    for mut col in data.column_iter_mut() {
        col += &c.mean;
    }
    Ok(SnapshotMatrix {
        data,
        param: s_c.param,
    })
}

/// Neumaier-compensated summation.
pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn save_matrix(s: &SnapshotMatrix, path: &Path) -> Result<()> {
    s.save(path)
}

pub fn load_matrix(path: &Path) -> Result<SnapshotMatrix> {
    SnapshotMatrix::load(path)
}

pub(crate) fn write_matrix(m: &DMatrix<f64>, w: &mut dyn Write) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    // Column-major is nalgebra's native layout.
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_matrix(r: &mut dyn Read) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for magic".into()))?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MATRIX_MAGIC
        )));
    }
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let n = u64::from_le_bytes(buf);
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let k = u64::from_le_bytes(buf);
    let count = n
        .checked_mul(k)
        .and_then(|c| c.checked_mul(8))
        .filter(|&c| c <= usize::MAX as u64 && c <= (1 << 40))
        .ok_or_else(|| Error::Format(format!("dimensions {n}x{k} overflow")))?;
    let mut payload = vec![0u8; count as usize];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Format("header declares more payload than present".into()))?;
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_vec(n as usize, k as usize, values))
}

/// Writes through a temporary file in the destination directory and
/// renames into place, so readers never observe partial output.
pub fn atomic_write(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `%.17g`-style formatting: 17 significant digits, trailing zeros
/// trimmed, scientific notation outside the fixed-point range. Parsing
/// the result recovers the original bits.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // 16 digits after the point in scientific form = 17 significant.
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("valid exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp:+03}")
    } else {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// One simulated trajectory together with its parameter value.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub mu: f64,
    pub matrix: SnapshotMatrix,
}

/// Train/test split of snapshot datasets plus the seed that drew the
/// test parameters.
#[derive(Debug, Clone)]
pub struct DatasetCatalog {
    pub train: Vec<CatalogEntry>,
    pub test: Vec<CatalogEntry>,
    pub seed: u64,
    pub mu_range: (f64, f64),
    /// Generator configuration echo, carried through to disk for
    /// provenance (grid coordinates, time axis).
    pub generator: Option<serde_json::Value>,
}

impl DatasetCatalog {
    /// All training columns concatenated into one matrix, in catalog
    /// order.
    pub fn stacked_train(&self) -> Result<SnapshotMatrix> {
        if self.train.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let n = self.train[0].matrix.state_dim();
        let k: usize = self.train.iter().map(|e| e.matrix.sample_count()).sum();
        let mut data = DMatrix::zeros(n, k);
        let mut offset = 0;
        for entry in &self.train {
            if entry.matrix.state_dim() != n {
                return Err(Error::dims("stacked_train", n, entry.matrix.state_dim()));
            }
            let w = entry.matrix.sample_count();
            data.view_mut((0, offset), (n, w)).copy_from(entry.matrix.data());
            offset += w;
        }
        SnapshotMatrix::new(data)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogFileEntry {
    mu: f64,
    path: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogFile {
    seed: u64,
    mu_range: (f64, f64),
    train: Vec<CatalogFileEntry>,
    test: Vec<CatalogFileEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<serde_json::Value>,
}

/// Writes every matrix in the binary format plus a JSON index listing
/// parameter values, the seed, and relative matrix paths.
pub fn save_catalog(catalog: &DatasetCatalog, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut file = CatalogFile {
        seed: catalog.seed,
        mu_range: catalog.mu_range,
        train: Vec::new(),
        test: Vec::new(),
        generator: catalog.generator.clone(),
    };
    for (i, entry) in catalog.train.iter().enumerate() {
        let name = format!("train_{i:02}.bin");
        entry.matrix.save(&dir.join(&name))?;
        file.train.push(CatalogFileEntry { mu: entry.mu, path: name });
    }
    for (i, entry) in catalog.test.iter().enumerate() {
        let name = format!("test_{i:02}.bin");
        entry.matrix.save(&dir.join(&name))?;
        file.test.push(CatalogFileEntry { mu: entry.mu, path: name });
    }
    let index = dir.join("catalog.json");
    atomic_write(&index, |w| {
        serde_json::to_writer_pretty(&mut *w, &file)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(index)
}

/// Loads a catalog from its JSON index; matrix paths resolve relative to
/// the index file.
pub fn load_catalog(index: &Path) -> Result<DatasetCatalog> {
    let file: CatalogFile = serde_json::from_reader(BufReader::new(File::open(index)?))?;
    let base = index.parent().unwrap_or_else(|| Path::new("."));
    let load_entries = |entries: &[CatalogFileEntry]| -> Result<Vec<CatalogEntry>> {
        entries
            .iter()
            .map(|e| {
                let matrix = SnapshotMatrix::load(&base.join(&e.path))?.with_param(e.mu);
                Ok(CatalogEntry { mu: e.mu, matrix })
            })
            .collect()
    };
    let catalog = DatasetCatalog {
        train: load_entries(&file.train)?,
        test: load_entries(&file.test)?,
        seed: file.seed,
        mu_range: file.mu_range,
        generator: file.generator,
    };
    let (lo, hi) = catalog.mu_range;
    for entry in &catalog.test {
        if entry.mu < lo || entry.mu > hi {
            return Err(Error::Format(format!(
                "test parameter {} outside declared range [{lo}, {hi}]",
                entry.mu
            )));
        }
    }
    Ok(catalog)
}
