//! `cpgsu` command-line front end: synthetic data, decomposition runs with
//! manifests, and evaluation against reference factors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpgsu::io::{load_factors, save_factors, save_tensor, save_trace, Payload};
use cpgsu::{
    align_components, cp_als, outer_solve, outer_solve_rr, support, synthesize, Factors, IterRecord, SolveTrace,
    SolverConfig, Status, SynthSpec, Tensor,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Stable exit codes.
const EXIT_IO: u8 = 2;
const EXIT_USAGE: u8 = 3;
const EXIT_DATA: u8 = 4;

#[derive(Debug)]
enum CliError {
    Io(String),
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

impl From<cpgsu::Error> for CliError {
    fn from(e: cpgsu::Error) -> Self {
        match e {
            cpgsu::Error::Io(_) | cpgsu::Error::Format(_) => CliError::Io(e.to_string()),
            cpgsu::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            cpgsu::Error::ShapeMismatch(_) | cpgsu::Error::ZeroTensor | cpgsu::Error::RankCollapsed => {
                CliError::Data(e.to_string())
            }
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "cpgsu", version, about = "CP decomposition with automatic rank estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic low-rank tensor and its ground-truth factors.
    Synth(SynthArgs),
    /// Decompose a tensor file and write factors, trace and a run manifest.
    Decompose(DecomposeArgs),
    /// Align estimated factors with reference factors and report RMSEP.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Comma-separated dimensions, at least three.
    #[arg(long, value_delimiter = ',', required = true)]
    shape: Vec<usize>,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 1.0)]
    weight_min: f64,
    #[arg(long, default_value_t = 2.0)]
    weight_max: f64,
    /// Relative noise level ‖noise‖/‖signal‖.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a decimal text payload instead of binary.
    #[arg(long)]
    text: bool,
    /// Output directory; receives tensor.cpt and truth.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Variant {
    Gsu,
    GsuRr,
    Als,
}

impl Variant {
    fn name(self) -> &'static str {
        match self {
            Variant::Gsu => "gsu",
            Variant::GsuRr => "gsu-rr",
            Variant::Als => "als",
        }
    }
}

/// Command-line overrides of [`SolverConfig`] fields.
#[derive(Args, Debug, Default)]
struct SolverFlags {
    #[arg(long)]
    rank_init: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stability_window: Option<usize>,
}

impl SolverFlags {
    fn apply(&self, cfg: &mut SolverConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { cfg.$field = v; })*};
        }
        set!(rank_init, epsilon, inner_iters, gamma, lambda_max, lambda_min, kappa, stop_tol, max_outer, seed, stability_window);
    }
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    /// Tensor file to decompose.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "gsu")]
    variant: Variant,
    /// Solver configuration: a TOML file of config fields, or a run
    /// manifest (JSON) whose recorded config is reused.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Run this many consecutive seeds, each in its own `seed-<s>` subdirectory.
    #[arg(long)]
    batch: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    estimated: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Also write regressed last-mode profiles (raw and max-normalized CSV) here.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Serialize)]
struct PruneSummary {
    k: usize,
    kept: Vec<usize>,
    rel_err_before: f64,
    rel_err_after: f64,
}

#[derive(Serialize)]
struct Manifest {
    config: SolverConfig,
    input: PathBuf,
    input_sha256: String,
    variant: Variant,
    seed: u64,
    status: Status,
    iterations: usize,
    rel_err: f64,
    support_size: usize,
    support: Vec<usize>,
    rank: usize,
    wall_time_s: f64,
    prune: Option<PruneSummary>,
    trace: PathBuf,
    factors: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Decompose(a) => cmd_decompose(&a),
        Command::Eval(a) => cmd_eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let spec = SynthSpec {
        shape: a.shape.clone(),
        rank: a.rank,
        weight_range: (a.weight_min, a.weight_max),
        noise_level: a.noise,
        seed: a.seed,
    };
    spec.validate()?;
    if spec.rank_exceeds_dims() {
        eprintln!("warning: rank {} exceeds the smallest dimension of {:?}", spec.rank, spec.shape);
    }
    let syn = synthesize::<f64>(&spec)?;
    create_dir(&a.out)?;
    let payload = if a.text { Payload::Text } else { Payload::Binary };
    let tensor_path = a.out.join("tensor.cpt");
    let truth_path = a.out.join("truth.txt");
    save_tensor(&tensor_path, &syn.tensor, payload)?;
    save_factors(&truth_path, &syn.truth)?;
    println!("tensor: {}", tensor_path.display());
    println!("truth: {}", truth_path.display());
    Ok(())
}

/// Builds the config from defaults, then the config file, then flags.
fn load_config(path: Option<&Path>, flags: &SolverFlags) -> CliResult<SolverConfig> {
    let mut cfg = match path {
        None => SolverConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let bad = |e: &dyn std::fmt::Display| CliError::Data(format!("{}: invalid config: {e}", p.display()));
            if p.extension().is_some_and(|ext| ext == "json") {
                let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
                // a run manifest nests the config; a bare JSON config does not
                if let Some(inner) = value.get_mut("config") {
                    value = inner.take();
                }
                serde_json::from_value(value).map_err(|e| bad(&e))?
            } else {
                toml::from_str(&text).map_err(|e| bad(&e))?
            }
        }
    };
    flags.apply(&mut cfg);
    cfg.validate().map_err(|e| CliError::Data(format!("invalid config: {e}")))?;
    Ok(cfg)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Expresses the ALS error history in the trace layout: no penalty, no
/// extrapolation, and every column counted in the support.
fn als_trace(rel_errs: &[f64], norm_x: f64, fs: &Factors, converged: bool) -> SolveTrace {
    let active = support(fs.last());
    let mut prev = f64::NAN;
    let records = rel_errs
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let objective = 0.5 * (e * norm_x).powi(2);
            let rec = IterRecord {
                k,
                objective,
                prev_objective: prev,
                rel_err: e,
                lambda: 0.0,
                weight: 0.0,
                support_size: active.len(),
                support: active.clone(),
                rank: fs.rank(),
                safeguard_used: false,
                step_sq: f64::NAN,
                feasibility_gap: 0.0,
            };
            prev = objective;
            rec
        })
        .collect();
    SolveTrace { records, status: if converged { Status::Converged } else { Status::MaxIters }, prune: None }
}

fn run_one(
    t: &Tensor,
    input: &Path,
    digest: &str,
    variant: Variant,
    cfg: &SolverConfig,
    out: &Path,
) -> CliResult<Manifest> {
    create_dir(out)?;
    let start = Instant::now();
    let (fs, trace) = match variant {
        Variant::Gsu => outer_solve(t, cfg)?,
        Variant::GsuRr => outer_solve_rr(t, cfg)?,
        Variant::Als => {
            let res = cp_als(t, cfg.rank_init, cfg.max_outer, cfg.stop_tol, cfg.seed)?;
            let trace = als_trace(&res.rel_errs, t.norm(), &res.factors, res.converged);
            (res.factors, trace)
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let trace_path = out.join("trace.csv");
    let factors_path = out.join("factors.txt");
    save_trace(&trace_path, &trace)?;
    save_factors(&factors_path, &fs)?;
    let active = support(fs.last());
    let manifest = Manifest {
        config: cfg.clone(),
        input: input.to_path_buf(),
        input_sha256: digest.to_string(),
        variant,
        seed: cfg.seed,
        status: trace.status,
        iterations: trace.records.len(),
        rel_err: trace.final_rel_err().unwrap_or(f64::NAN),
        support_size: active.len(),
        support: active,
        rank: fs.rank(),
        wall_time_s,
        prune: trace.prune.map(|p| PruneSummary {
            k: p.k,
            kept: p.kept,
            rel_err_before: p.rel_err_before,
            rel_err_after: p.rel_err_after,
        }),
        trace: trace_path,
        factors: factors_path,
    };
    let manifest_path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest)
}

fn cmd_decompose(a: &DecomposeArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref(), &a.solver)?;
    let bytes = fs::read(&a.input).map_err(|e| io_err(&a.input, e))?;
    let digest = sha256_hex(&bytes);
    let t: Tensor =
        cpgsu::io::read_tensor(bytes.as_slice()).map_err(|e| CliError::Io(format!("{}: {e}", a.input.display())))?;

    let jobs: Vec<(SolverConfig, PathBuf)> = match a.batch {
        None => vec![(cfg.clone(), a.out.clone())],
        Some(0) => return Err(CliError::Usage("--batch needs at least one run".into())),
        Some(n) => (0..n as u64)
            .map(|i| {
                let c = SolverConfig { seed: cfg.seed + i, ..cfg.clone() };
                let dir = a.out.join(format!("seed-{}", c.seed));
                (c, dir)
            })
            .collect(),
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let results: Vec<CliResult<Manifest>> = std::thread::scope(|s| {
        let chunks: Vec<_> = jobs.chunks(jobs.len().div_ceil(workers)).collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                let (t, digest) = (&t, &digest);
                s.spawn(move || {
                    chunk
                        .iter()
                        .map(|(c, dir)| run_one(t, &a.input, digest, a.variant, c, dir))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    for r in results {
        let m = r?;
        println!(
            "{} seed {}: status {:?}, {} iterations, RelErr {:.6e}, support {}, {:.3}s",
            a.variant.name(),
            m.seed,
            m.status,
            m.iterations,
            m.rel_err,
            m.support_size,
            m.wall_time_s
        );
    }
    Ok(())
}

fn write_profiles(path: &Path, m: &cpgsu::Mat) -> CliResult<()> {
    let mut text = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let est: Factors = load_factors(&a.estimated)?;
    let reference: Factors = load_factors(&a.reference)?;
    if est.shape() != reference.shape() {
        return Err(CliError::Data(format!(
            "estimated factors have shape {:?} but reference factors have {:?}",
            est.shape(),
            reference.shape()
        )));
    }
    let al = align_components(&est, &reference)?;
    let regressed = al.regressed_profiles(&est);
    let rmsep = match &regressed {
        Some(p) => Some(cpgsu::rmsep(reference.last(), p)?),
        None => None,
    };
    let rmsep_text = rmsep.map_or_else(|| "-".to_string(), |v| format!("{v:e}"));

    println!("matched {} of {} reference components", al.matched_rank(), al.reference_rank);
    for m in &al.matches {
        println!(
            "  reference {} <- estimated {}: similarity {:.6}, scale {:.6}",
            m.reference, m.estimated, m.similarity, m.scale
        );
    }
    match rmsep {
        Some(_) => println!("RMSEP: {rmsep_text}"),
        None => println!("RMSEP: - (components not separated)"),
    }
    println!("matched_rank={}", al.matched_rank());
    println!("reference_rank={}", al.reference_rank);
    println!("rmsep={rmsep_text}");
    for m in &al.matches {
        println!("similarity_{}={:e}", m.reference, m.similarity);
    }

    if let (Some(dir), Some(p)) = (&a.profiles, &regressed) {
        create_dir(dir)?;
        write_profiles(&dir.join("profiles.csv"), p)?;
        write_profiles(&dir.join("profiles_normalized.csv"), &cpgsu::metrics::max_normalized_profiles(p))?;
    }
    Ok(())
}
