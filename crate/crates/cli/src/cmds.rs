//! Subcommand implementations.
//!
//! Configuration precedence for every tunable: built-in default, then
//! the `--config` JSON file, then the explicit flag. Paths (`--out`,
//! `--data`, `--model`) and the structural choices (`--method`, `--r`)
//! are always flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use polymanifold::am::{self, AmConfig};
use polymanifold::eval::{
    self, EncoderKind, ManifoldReconstructor, PodReconstructor, Reconstructor, SweepConfig,
};
use polymanifold::fit;
use polymanifold::kdv::{self, KdvConfig};
use polymanifold::model::{PodModel, StoredModel};
use polymanifold::nls::NlsSettings;
use polymanifold::pod;
use polymanifold::snapshot::{
    self, atomic_write, fmt_g17, DatasetCatalog, SnapshotMatrix,
};

use crate::manifest::ManifestBuilder;

const DEFAULT_TRAIN_MUS: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];
const DEFAULT_N_TEST: usize = 10;
const DEFAULT_MU_RANGE: (f64, f64) = (0.0, 2.0);
const DEFAULT_SEED: u64 = 7;
const DEFAULT_TOTAL_MODES: usize = 82;
const DEFAULT_GAMMA: f64 = 500.0;

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(path: &Option<PathBuf>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

fn prepare_out(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating run directory {}", out.display()))
}

fn load_catalog(path: &Path) -> anyhow::Result<DatasetCatalog> {
    snapshot::load_catalog(path)
        .with_context(|| format!("loading catalog {}", path.display()))
}

/// Centered training stack plus its mean and a basis of `modes` modes.
fn training_basis(
    catalog: &DatasetCatalog,
    modes: usize,
) -> anyhow::Result<(SnapshotMatrix, snapshot::CenteringVector, pod::PodBasis)> {
    let stacked = catalog.stacked_train()?;
    let (s_c, centering) = snapshot::center(&stacked);
    let basis = pod::compute_pod(&s_c, modes)
        .with_context(|| format!("computing {modes} POD modes"))?;
    Ok((s_c, centering, basis))
}

// ---------------------------------------------------------------- generate

#[derive(Args)]
pub struct GenerateArgs {
    /// Run directory; datasets land in `<out>/data/`.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file (defaults < config < flags).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated training parameter values μ.
    #[arg(long, value_delimiter = ',')]
    train_mus: Option<Vec<f64>>,
    /// Number of held-out test trajectories.
    #[arg(long)]
    n_test: Option<usize>,
    /// Test parameter range: LO HI.
    #[arg(long, num_args = 2)]
    mu_range: Option<Vec<f64>>,
    /// Seed for the test parameter draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Advection coefficient.
    #[arg(long)]
    alpha: Option<f64>,
    /// Dispersion coefficient.
    #[arg(long)]
    beta: Option<f64>,
    /// Spatial grid points (power of two).
    #[arg(long)]
    n_grid: Option<usize>,
    /// Final time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Snapshot interval.
    #[arg(long)]
    save_dt: Option<f64>,
    /// Integrator step.
    #[arg(long)]
    inner_dt: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct GenerateFile {
    train_mus: Option<Vec<f64>>,
    n_test: Option<usize>,
    mu_range: Option<(f64, f64)>,
    seed: Option<u64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    n_grid: Option<usize>,
    t_end: Option<f64>,
    save_dt: Option<f64>,
    inner_dt: Option<f64>,
}

pub fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let file: GenerateFile = load_config(&args.config)?;
    let defaults = KdvConfig::default();
    let flag_range = args.mu_range.map(|v| (v[0], v[1]));

    let train_mus = pick(args.train_mus, file.train_mus, DEFAULT_TRAIN_MUS.to_vec());
    let n_test = pick(args.n_test, file.n_test, DEFAULT_N_TEST);
    let mu_range = pick(flag_range, file.mu_range, DEFAULT_MU_RANGE);
    let seed = pick(args.seed, file.seed, DEFAULT_SEED);
    let base = KdvConfig {
        alpha: pick(args.alpha, file.alpha, defaults.alpha),
        beta: pick(args.beta, file.beta, defaults.beta),
        n_grid: pick(args.n_grid, file.n_grid, defaults.n_grid),
        t_end: pick(args.t_end, file.t_end, defaults.t_end),
        save_dt: pick(args.save_dt, file.save_dt, defaults.save_dt),
        inner_dt: pick(args.inner_dt, file.inner_dt, defaults.inner_dt),
        mu: 0.0,
    };

    prepare_out(&args.out)?;
    let mut mb = ManifestBuilder::new("generate", &args.out);
    mb.flag_f64_list("train_mus", &train_mus)
        .flag_u64("n_test", n_test as u64)
        .flag_f64_list("mu_range", &[mu_range.0, mu_range.1])
        .flag_u64("seed", seed)
        .flag_f64("alpha", base.alpha)
        .flag_f64("beta", base.beta)
        .flag_u64("n_grid", base.n_grid as u64)
        .flag_f64("t_end", base.t_end)
        .flag_f64("save_dt", base.save_dt)
        .flag_f64("inner_dt", base.inner_dt)
        .seed(seed);

    let catalog = mb.time("simulate", || {
        Ok(kdv::build_catalog(&base, &train_mus, n_test, mu_range, seed)?)
    })?;
    let data_dir = args.out.join("data");
    let index = mb.time("write", || Ok(snapshot::save_catalog(&catalog, &data_dir)?))?;

    mb.artifact(&index);
    for i in 0..catalog.train.len() {
        mb.artifact(&data_dir.join(format!("train_{i:02}.bin")));
    }
    for i in 0..catalog.test.len() {
        mb.artifact(&data_dir.join(format!("test_{i:02}.bin")));
    }
    let manifest = mb.write()?;

    let per = catalog.train[0].matrix.sample_count();
    println!(
        "generated {} training + {} test trajectories ({}x{} each) -> {}",
        catalog.train.len(),
        catalog.test.len(),
        catalog.train[0].matrix.state_dim(),
        per,
        index.display()
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

// --------------------------------------------------------------------- pod

#[derive(Args)]
pub struct PodArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file (defaults < config < flags).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog index JSON produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Modes to retain in the saved basis.
    #[arg(long)]
    modes: Option<usize>,
    /// Relative projection-error tolerance for the rank report.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct PodFile {
    modes: Option<usize>,
    tol: Option<f64>,
}

pub fn pod(args: PodArgs) -> anyhow::Result<()> {
    let file: PodFile = load_config(&args.config)?;
    let modes = pick(args.modes, file.modes, 120);
    let tol = pick(args.tol, file.tol, 1e-5);

    prepare_out(&args.out)?;
    let mut mb = ManifestBuilder::new("pod", &args.out);
    mb.flag_u64("modes", modes as u64).flag_f64("tol", tol);
    mb.input(&args.data);

    let catalog = mb.time("load", || load_catalog(&args.data))?;
    let (_, centering, basis) = mb.time("svd", || training_basis(&catalog, modes))?;
    let rank = pod::rank_for_tolerance(&basis, tol)?;
    mb.flag_u64("rank_at_tol", rank as u64);

    let model_path = args.out.join("pod.bin");
    let sv_path = args.out.join("singular_values.csv");
    mb.time("write", || {
        let model = PodModel {
            modes: basis.modes().clone(),
            singular_values: basis.singular_values().clone(),
            centering,
        };
        model.save(&model_path)?;
        atomic_write(&sv_path, |w| {
            writeln!(w, "index,sigma")?;
            for (i, s) in basis.singular_values().iter().enumerate() {
                writeln!(w, "{},{}", i + 1, fmt_g17(*s))?;
            }
            Ok(())
        })?;
        Ok(())
    })?;
    mb.artifact(&model_path).artifact(&sv_path);
    let manifest = mb.write()?;

    println!("rank at tolerance {} = {rank}", fmt_g17(tol));
    println!("basis ({} modes): {}", modes, model_path.display());
    println!("manifest: {}", manifest.display());
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pod,
    ManifoldPod,
    ManifoldAm,
}

impl MethodArg {
    fn as_str(self) -> &'static str {
        match self {
            MethodArg::Pod => "pod",
            MethodArg::ManifoldPod => "manifold-pod",
            MethodArg::ManifoldAm => "manifold-am",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Linear,
    Nls,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Linear => EncoderKind::Linear,
            EncoderArg::Nls => EncoderKind::Nls,
        }
    }
}

/// Outer/inner solver knobs shared by `train`, `evaluate`, and `sweep`.
#[derive(Args)]
struct SolverFlags {
    /// Ridge regularization γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Convergence tolerance on consecutive information contents.
    #[arg(long)]
    tol: Option<f64>,
    /// Alternating-minimization cycle cap.
    #[arg(long)]
    max_cycles: Option<usize>,
    /// Per-sample solver iteration cap.
    #[arg(long)]
    nls_max_iters: Option<usize>,
    /// Per-sample solver gradient tolerance.
    #[arg(long)]
    nls_grad_tol: Option<f64>,
    /// Per-sample solver initial damping.
    #[arg(long)]
    nls_lambda_init: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SolverFile {
    gamma: Option<f64>,
    tol: Option<f64>,
    max_cycles: Option<usize>,
    nls_max_iters: Option<usize>,
    nls_grad_tol: Option<f64>,
    nls_lambda_init: Option<f64>,
}

struct SolverParams {
    gamma: f64,
    am: AmConfig,
}

fn resolve_solver(flags: &SolverFlags, file: &SolverFile) -> SolverParams {
    let base = AmConfig::default();
    let nls = NlsSettings {
        max_iters: pick(flags.nls_max_iters, file.nls_max_iters, base.nls.max_iters),
        grad_tol: pick(flags.nls_grad_tol, file.nls_grad_tol, base.nls.grad_tol),
        lambda_init: pick(
            flags.nls_lambda_init,
            file.nls_lambda_init,
            base.nls.lambda_init,
        ),
    };
    SolverParams {
        gamma: pick(flags.gamma, file.gamma, DEFAULT_GAMMA),
        am: AmConfig {
            tol: pick(flags.tol, file.tol, base.tol),
            max_cycles: pick(flags.max_cycles, file.max_cycles, base.max_cycles),
            nls,
        },
    }
}

fn record_solver(mb: &mut ManifestBuilder, params: &SolverParams) {
    mb.flag_f64("gamma", params.gamma)
        .flag_f64("tol", params.am.tol)
        .flag_u64("max_cycles", params.am.max_cycles as u64)
        .flag_u64("nls_max_iters", params.am.nls.max_iters as u64)
        .flag_f64("nls_grad_tol", params.am.nls.grad_tol)
        .flag_f64("nls_lambda_init", params.am.nls.lambda_init);
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file (defaults < config < flags).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog index JSON produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Fitting route.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Latent dimension (≥ 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    r: u64,
    /// Auxiliary mode count; defaults to `total-modes − r`.
    #[arg(long)]
    q: Option<usize>,
    /// Polynomial degree of the feature map.
    #[arg(long)]
    p: Option<u32>,
    /// Mode budget fixing the default `q`.
    #[arg(long)]
    total_modes: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct TrainFile {
    q: Option<usize>,
    p: Option<u32>,
    total_modes: Option<usize>,
    #[serde(flatten)]
    solver: SolverFile,
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let file: TrainFile = load_config(&args.config)?;
    let r = args.r as usize;
    let total_modes = pick(args.total_modes, file.total_modes, DEFAULT_TOTAL_MODES);
    let q = pick(args.q, file.q, total_modes.saturating_sub(r));
    let p_raw = pick(args.p, file.p, 2);
    let params = resolve_solver(&args.solver, &file.solver);

    prepare_out(&args.out)?;
    let mut mb = ManifestBuilder::new("train", &args.out);
    mb.flag_str("method", args.method.as_str())
        .flag_u64("r", r as u64);
    mb.input(&args.data);

    let catalog = mb.time("load", || load_catalog(&args.data))?;
    let model_path = args.out.join("model.bin");

    match args.method {
        MethodArg::Pod => {
            let (_, centering, basis) = mb.time("fit", || training_basis(&catalog, r))?;
            mb.time("write", || {
                Ok(PodModel {
                    modes: basis.modes().clone(),
                    singular_values: basis.singular_values().clone(),
                    centering,
                }
                .save(&model_path)?)
            })?;
            println!("pod basis with r={r}: {}", model_path.display());
        }
        MethodArg::ManifoldPod => {
            mb.flag_u64("q", q as u64)
                .flag_u64("p", p_raw as u64)
                .flag_f64("gamma", params.gamma);
            let p = polymanifold::poly::PolyDegree::new(p_raw)?;
            let (model, _) = mb.time("fit", || {
                let (s_c, centering, basis) = training_basis(&catalog, r + q)?;
                Ok(fit::fit_from_basis(&basis, &s_c, &centering, r, q, p, params.gamma)?)
            })?;
            mb.time("write", || Ok(model.save(&model_path)?))?;
            println!("manifold-pod model (r={r}, q={q}, p={p_raw}): {}", model_path.display());
        }
        MethodArg::ManifoldAm => {
            mb.flag_u64("q", q as u64).flag_u64("p", p_raw as u64);
            record_solver(&mut mb, &params);
            let p = polymanifold::poly::PolyDegree::new(p_raw)?;
            let (model, trace) = mb.time("fit", || {
                let (s_c, centering, basis) = training_basis(&catalog, r + q)?;
                let init = fit::fit_from_basis(&basis, &s_c, &centering, r, q, p, params.gamma)?;
                let (model, _, trace) =
                    am::fit_am(&s_c, r, q, p, params.gamma, &params.am, init)?;
                Ok((model, trace))
            })?;
            let trace_path = args.out.join("trace.csv");
            mb.time("write", || {
                model.save(&model_path)?;
                am::write_trace_csv(&trace, &trace_path)?;
                Ok(())
            })?;
            mb.flag_u64("cycles", trace.cycle_count() as u64)
                .flag_bool("converged", trace.converged)
                .flag_bool("degenerate_procrustes", trace.any_degenerate());
            mb.artifact(&trace_path);
            println!(
                "manifold-am model (r={r}, q={q}, p={p_raw}): {} cycles, converged={}",
                trace.cycle_count(),
                trace.converged
            );
            println!("model: {}", model_path.display());
        }
    }
    mb.artifact(&model_path);
    let manifest = mb.write()?;
    println!("manifest: {}", manifest.display());
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file (defaults < config < flags).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog index JSON produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Model container(s) to evaluate; repeatable.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Test-time encoder for manifold models.
    #[arg(long, value_enum)]
    encoder: Option<EncoderArg>,
    /// Write the space-time field CSV for this test trajectory
    /// (requires one model each of pod, manifold-pod, manifold-am).
    #[arg(long)]
    field_test_index: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct EvaluateFile {
    encoder: Option<String>,
    field_test_index: Option<usize>,
    #[serde(flatten)]
    solver: SolverFile,
}

fn encoder_from_str(s: &str) -> anyhow::Result<EncoderKind> {
    match s {
        "linear" => Ok(EncoderKind::Linear),
        "nls" => Ok(EncoderKind::Nls),
        other => bail!("unknown encoder {other:?} (expected linear or nls)"),
    }
}

struct Loaded {
    path: PathBuf,
    model: StoredModel,
}

fn reconstructor_for<'a>(
    l: &'a Loaded,
    encoder: EncoderKind,
    nls: NlsSettings,
) -> anyhow::Result<Box<dyn Reconstructor + 'a>> {
    Ok(match &l.model {
        StoredModel::Pod(m) => Box::new(PodReconstructor::new(
            m.modes.clone(),
            m.centering.clone(),
        )?),
        StoredModel::Manifold(m) => Box::new(ManifoldReconstructor::new(m, encoder, nls)),
    })
}

pub fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let file: EvaluateFile = load_config(&args.config)?;
    let encoder = match (args.encoder, &file.encoder) {
        (Some(e), _) => e.into(),
        (None, Some(s)) => encoder_from_str(s)?,
        (None, None) => EncoderKind::Nls,
    };
    let field_index = args.field_test_index.or(file.field_test_index);
    let params = resolve_solver(&args.solver, &file.solver);

    prepare_out(&args.out)?;
    let mut mb = ManifestBuilder::new("evaluate", &args.out);
    mb.flag_str("encoder", encoder.as_str());
    mb.flag_f64("nls_grad_tol", params.am.nls.grad_tol)
        .flag_u64("nls_max_iters", params.am.nls.max_iters as u64)
        .flag_f64("nls_lambda_init", params.am.nls.lambda_init);
    mb.input(&args.data);
    for m in &args.models {
        mb.input(m);
    }

    let catalog = mb.time("load", || load_catalog(&args.data))?;
    if catalog.test.is_empty() {
        bail!("catalog has no test trajectories");
    }

    let loaded: Vec<Loaded> = args
        .models
        .iter()
        .map(|path| {
            Ok(Loaded {
                path: path.clone(),
                model: StoredModel::load(path)
                    .with_context(|| format!("loading model {}", path.display()))?,
            })
        })
        .collect::<anyhow::Result<_>>()?;

    let mut rows = Vec::new();
    for l in &loaded {
        let recon = reconstructor_for(l, encoder, params.am.nls)?;
        let error = mb.time(
            &format!("evaluate {}", l.path.display()),
            || Ok(eval::representation_error(recon.as_ref(), &catalog.test)?),
        )?;
        let (kind, method, detail) = match &l.model {
            StoredModel::Pod(m) => ("pod".to_string(), "pod".to_string(), format!("r={}", m.modes.ncols())),
            StoredModel::Manifold(m) => (
                "manifold".to_string(),
                m.method().as_str().to_string(),
                format!("r={}, q={}, p={}", m.r(), m.q(), m.degree().get()),
            ),
        };
        println!("{} [{detail}] test error = {}", method, fmt_g17(error));
        rows.push(serde_json::json!({
            "model": l.path.display().to_string(),
            "kind": kind,
            "method": method,
            "encoder": match l.model { StoredModel::Pod(_) => "linear", StoredModel::Manifold(_) => encoder.as_str() },
            "test_error": fmt_g17(error),
        }));
    }

    let report_path = args.out.join("evaluation.json");
    atomic_write(&report_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &serde_json::json!({ "results": rows }))?;
        writeln!(w)?;
        Ok(())
    })?;
    mb.artifact(&report_path);

    if let Some(index) = field_index {
        let entry = catalog
            .test
            .get(index)
            .with_context(|| format!("test index {index} out of range (have {})", catalog.test.len()))?;
        let find = |want: &str| {
            loaded.iter().find(|l| match &l.model {
                StoredModel::Pod(_) => want == "pod",
                StoredModel::Manifold(m) => m.method().as_str() == want,
            })
        };
        let (pod_m, mpod_m, mam_m) = match (find("pod"), find("manifold_pod"), find("manifold_am")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => bail!("field CSV needs one model each of pod, manifold-pod, manifold-am"),
        };
        let n = entry.matrix.state_dim();
        let k = entry.matrix.sample_count();
        // Space/time axes come from the generator echo when present.
        let (x, t): (Vec<f64>, Vec<f64>) = match catalog
            .generator
            .clone()
            .and_then(|g| serde_json::from_value::<KdvConfig>(g).ok())
        {
            Some(cfg) if cfg.n_grid == n => (
                cfg.grid().iter().copied().collect(),
                (0..k).map(|j| j as f64 * cfg.save_dt).collect(),
            ),
            _ => (
                (0..n).map(|i| i as f64).collect(),
                (0..k).map(|j| j as f64).collect(),
            ),
        };
        let field_path = args.out.join("field.csv");
        mb.time("field", || {
            let nls = params.am.nls;
            let pod_recon = reconstructor_for(pod_m, encoder, nls)?.reconstruct(&entry.matrix)?;
            let mpod_recon = reconstructor_for(mpod_m, encoder, nls)?.reconstruct(&entry.matrix)?;
            let mam_recon = reconstructor_for(mam_m, encoder, nls)?.reconstruct(&entry.matrix)?;
            Ok(eval::write_field_csv(
                &field_path,
                &x,
                &t,
                &entry.matrix,
                &pod_recon,
                &mpod_recon,
                &mam_recon,
            )?)
        })?;
        mb.flag_u64("field_test_index", index as u64);
        mb.artifact(&field_path);
        println!("field: {}", field_path.display());
    }

    let manifest = mb.write()?;
    println!("report: {}", report_path.display());
    println!("manifest: {}", manifest.display());
    Ok(())
}

// ------------------------------------------------------------------- sweep

#[derive(Args)]
pub struct SweepArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file (defaults < config < flags).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog index JSON produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated latent dimensions.
    #[arg(long, value_delimiter = ',')]
    r_list: Option<Vec<usize>>,
    /// Comma-separated polynomial degrees.
    #[arg(long, value_delimiter = ',')]
    p_list: Option<Vec<u32>>,
    /// Constant mode budget: every cell uses q = total-modes − r.
    #[arg(long)]
    total_modes: Option<usize>,
    /// Test-time encoder for manifold models.
    #[arg(long, value_enum)]
    encoder: Option<EncoderArg>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SweepFile {
    r_list: Option<Vec<usize>>,
    p_list: Option<Vec<u32>>,
    total_modes: Option<usize>,
    encoder: Option<String>,
    #[serde(flatten)]
    solver: SolverFile,
}

pub fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let file: SweepFile = load_config(&args.config)?;
    let params = resolve_solver(&args.solver, &file.solver);
    let defaults = SweepConfig::default();
    let encoder = match (args.encoder, &file.encoder) {
        (Some(e), _) => e.into(),
        (None, Some(s)) => encoder_from_str(s)?,
        (None, None) => defaults.encoder,
    };
    let cfg = SweepConfig {
        r_list: pick(args.r_list, file.r_list, defaults.r_list),
        p_list: pick(args.p_list, file.p_list, defaults.p_list),
        total_modes: pick(args.total_modes, file.total_modes, defaults.total_modes),
        gamma: params.gamma,
        am: params.am,
        encoder,
    };

    prepare_out(&args.out)?;
    let mut mb = ManifestBuilder::new("sweep", &args.out);
    mb.flag_usize_list("r_list", &cfg.r_list);
    let p_as_usize: Vec<usize> = cfg.p_list.iter().map(|&p| p as usize).collect();
    mb.flag_usize_list("p_list", &p_as_usize)
        .flag_u64("total_modes", cfg.total_modes as u64)
        .flag_str("encoder", cfg.encoder.as_str());
    record_solver(&mut mb, &params);
    mb.input(&args.data);

    let catalog = mb.time("load", || load_catalog(&args.data))?;
    let records = mb.time("sweep", || Ok(eval::run_sweep(&catalog, &cfg)?))?;

    let csv_path = args.out.join("sweep.csv");
    eval::write_sweep_csv(&records, &csv_path)?;
    mb.artifact(&csv_path);
    let manifest = mb.write()?;

    println!("{:>14} {:>3} {:>2} {:>3} {:>13} {:>7} {:>5}", "method", "r", "p", "q", "test_error", "cycles", "conv");
    for rec in &records {
        println!(
            "{:>14} {:>3} {:>2} {:>3} {:>13.6e} {:>7} {:>5}",
            rec.method.as_str(),
            rec.r,
            rec.p,
            rec.q,
            rec.test_error,
            rec.am_cycles,
            rec.converged
        );
    }
    println!("{} records -> {}", records.len(), csv_path.display());
    println!("manifest: {}", manifest.display());
    Ok(())
}
