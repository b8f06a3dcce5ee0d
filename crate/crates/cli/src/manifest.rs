//! Run manifests: one JSON record per subcommand invocation, written to
//! `<out>/manifest.json`, listing the effective configuration, inputs,
//! produced artifacts, seeds, and stage timings. Floating-point values
//! are stored as `%.17g` strings so a replay parses the identical bits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};

use polymanifold::snapshot::{atomic_write, fmt_g17};

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: Map<String, Value>,
    inputs: Vec<String>,
    artifacts: Vec<String>,
    seeds: Vec<u64>,
    timings_seconds: BTreeMap<String, String>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    out_dir: PathBuf,
}

impl ManifestBuilder {
    pub fn new(subcommand: &'static str, out_dir: &Path) -> Self {
        Self {
            manifest: RunManifest {
                tool: "polymanifold",
                version: env!("CARGO_PKG_VERSION"),
                subcommand,
                config: Map::new(),
                inputs: Vec::new(),
                artifacts: Vec::new(),
                seeds: Vec::new(),
                timings_seconds: BTreeMap::new(),
            },
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn flag_f64(&mut self, key: &str, x: f64) -> &mut Self {
        self.manifest.config.insert(key.into(), Value::String(fmt_g17(x)));
        self
    }

    pub fn flag_f64_list(&mut self, key: &str, xs: &[f64]) -> &mut Self {
        let list = xs.iter().map(|&x| Value::String(fmt_g17(x))).collect();
        self.manifest.config.insert(key.into(), Value::Array(list));
        self
    }

    pub fn flag_u64(&mut self, key: &str, v: u64) -> &mut Self {
        self.manifest.config.insert(key.into(), Value::from(v));
        self
    }

    pub fn flag_usize_list(&mut self, key: &str, vs: &[usize]) -> &mut Self {
        let list = vs.iter().map(|&v| Value::from(v as u64)).collect();
        self.manifest.config.insert(key.into(), Value::Array(list));
        self
    }

    pub fn flag_str(&mut self, key: &str, s: &str) -> &mut Self {
        self.manifest.config.insert(key.into(), Value::String(s.into()));
        self
    }

    pub fn flag_bool(&mut self, key: &str, b: bool) -> &mut Self {
        self.manifest.config.insert(key.into(), Value::Bool(b));
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.manifest.inputs.push(path.display().to_string());
        self
    }

    /// Records an artifact path, relative to the run directory when it
    /// lives inside it.
    pub fn artifact(&mut self, path: &Path) -> &mut Self {
        let shown = path.strip_prefix(&self.out_dir).unwrap_or(path);
        self.manifest.artifacts.push(shown.display().to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seeds.push(seed);
        self
    }

    /// Runs a stage, recording its wall-clock time under `stage`.
    pub fn time<T>(
        &mut self,
        stage: &str,
        f: impl FnOnce() -> anyhow::Result<T>,
    ) -> anyhow::Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        self.manifest
            .timings_seconds
            .insert(stage.into(), fmt_g17(t0.elapsed().as_secs_f64()));
        Ok(out)
    }

    /// Writes `<out>/manifest.json` and returns its path.
    pub fn write(&self) -> anyhow::Result<PathBuf> {
        let path = self.out_dir.join("manifest.json");
        atomic_write(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, &self.manifest)?;
            writeln!(w)?;
            Ok(())
        })?;
        Ok(path)
    }
}
