use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use super::config::{load_config, resolve_state, RunConfig};
use super::files::{read_dataset, read_json, write_atomic, write_dataset, write_json};
use crate::error::{exit, Error, Result};
use crate::fsmatrix::{DensityMatrixFS, OutputGrid};
use crate::measurement::{build_dataset, DataMode, DetectorModel};
use crate::quadrature::{compare_matrices, oracle_grid, ComparisonMetrics};
use crate::reconstruction::{
    phase_averaged_reconstruct, reconstruct_from_joint, reconstruct_grid, CharFnSource,
    EmpiricalCharFn, QuadratureParams, RegularizationFilter, Taper,
};
use crate::state::{build_state, DensityOperatorFock, StateSpec};

#[derive(Debug, Parser)]
#[command(name = "homotomo", version, about = "Multimode homodyne tomography")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HOMOTOMO_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sum-field dataset.
    Simulate(SimulateArgs),
    /// Reconstruct the field-strength density matrix from a dataset or a known state.
    Reconstruct(ReconstructArgs),
    /// Exact field-strength density matrix of a known state.
    Oracle(OracleArgs),
    /// Compare two density-matrix files.
    Compare(CompareArgs),
    /// Time the sum-field method against the joint-distribution baseline.
    Bench(BenchArgs),
}

#[derive(Debug, Default, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Detector efficiency in (0, 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Samples per setting.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<DataMode>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory written by `simulate`.
    #[arg(long, conflicts_with = "analytic")]
    pub dataset: Option<PathBuf>,
    /// Use the exact characteristic function of a state: vacuum, coherent,
    /// fock, squeezed, a state JSON file, or the config's state when empty.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    pub analytic: Option<String>,
    /// Efficiency to compensate for (defaults to the dataset's).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Radial cutoff of the regularization filter.
    #[arg(long)]
    pub filter_ycut: Option<f64>,
    #[arg(long)]
    pub phase_averaged: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// vacuum, coherent, fock, squeezed, or a state JSON file (defaults to the config's state).
    #[arg(long)]
    pub state: Option<String>,
    /// Use the grid, phases and field scale of an existing result file.
    #[arg(long)]
    pub like: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Largest acceptable L∞ difference.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::INVALID_INPUT } else { exit::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return exit::INVALID_INPUT;
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = &mut std::io::stdout().lock();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out).map(|_| exit::SUCCESS),
        Command::Reconstruct(a) => cmd_reconstruct(a, out).map(|_| exit::SUCCESS),
        Command::Oracle(a) => cmd_oracle(a, out).map(|_| exit::SUCCESS),
        Command::Compare(a) => cmd_compare(a, out).map(|(_, pass)| if pass { exit::SUCCESS } else { exit::TOLERANCE }),
        Command::Bench(a) => cmd_bench(a, out).map(|_| exit::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn config_from(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn override_eta(cfg: &mut RunConfig, eta: Option<f64>) -> Result<()> {
    if let Some(e) = eta {
        cfg.detector = DetectorModel::new(e).map_err(|err| Error::Config {
            key: "--eta".into(),
            message: err.to_string(),
        })?;
    }
    Ok(())
}

fn override_filter(cfg: &mut RunConfig, y_cut: Option<f64>) -> Result<()> {
    if let Some(y) = y_cut {
        let taper = cfg.filter.map_or(Taper::None, |f| f.taper);
        let f = RegularizationFilter { y_cut: y, taper };
        f.validate().map_err(|err| Error::Config {
            key: "--filter-ycut".into(),
            message: err.to_string(),
        })?;
        cfg.filter = Some(f);
    }
    Ok(())
}

fn w(out: &mut dyn Write, s: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(s)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| Error::io("<stdout>", e))
}

/// Generates and writes a dataset; returns the output directory.
pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<PathBuf> {
    let mut cfg = config_from(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.samples {
        cfg.samples = m;
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    override_eta(&mut cfg, args.eta)?;
    cfg.validate()?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.outputs.dataset.clone())
        .unwrap_or_else(|| PathBuf::from("dataset"));

    let state = build_state(&cfg.state)?;
    let control = cfg.control_grid(&state)?;
    let progress = |done: usize, total: usize| {
        if (done * 10) / total != ((done - 1) * 10) / total {
            eprintln!("setting {done}/{total}");
        }
    };
    let m = if cfg.mode == DataMode::Analytic { 0 } else { cfg.samples };
    let ds = build_dataset(
        &state,
        &control,
        m,
        cfg.detector,
        cfg.seed,
        cfg.field_scale,
        cfg.mode,
        Some(&progress),
    )?;
    let manifest = write_dataset(&dir, &ds, Some(&cfg))?;
    let norms = ds.normalizations();
    let (lo, hi) = norms
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    w(out, format_args!("wrote {} ({} settings, mode {:?}, M = {})", dir.display(), manifest.n_settings, ds.mode, ds.samples_per_setting))?;
    w(out, format_args!("normalization per setting: min {lo:.12} max {hi:.12}"))?;
    Ok(dir)
}

fn print_residuals(m: &DensityMatrixFS, out: &mut dyn Write) -> Result<()> {
    let r = &m.residuals;
    w(out, format_args!("hermiticity residual: {:.3e}", r.hermiticity))?;
    if let (Some(im), Some(neg), Some(norm)) = (r.diagonal_imag_max, r.diagonal_negativity, r.diagonal_normalization) {
        w(out, format_args!("diagonal imag max: {im:.3e}"))?;
        w(out, format_args!("diagonal negativity: {neg:.3e}"))?;
        w(out, format_args!("diagonal normalization: {norm:.6}"))?;
    }
    Ok(())
}

fn analytic_spec(cfg: &RunConfig, name: &str) -> Result<StateSpec> {
    if name.is_empty() {
        Ok(cfg.state.clone())
    } else {
        resolve_state(name)
    }
}

/// Output grid and phases for `n` modes: the config's when it matches.
/// `measured` selects the sign-coherent default used for full-layout data.
fn grid_for(
    cfg: &RunConfig,
    n: usize,
    scale: crate::state::FieldScale,
    measured: bool,
) -> Result<(OutputGrid, Vec<f64>)> {
    if measured && cfg.output_grid.is_none() {
        let phases = if n == cfg.n_modes() { cfg.reference_phases() } else { vec![0.0; n] };
        Ok((OutputGrid::default_measured(n, scale), phases))
    } else if n == cfg.n_modes() {
        let mut c = cfg.clone();
        c.field_scale = scale;
        Ok((c.output_grid()?, c.reference_phases()))
    } else if cfg.output_grid.is_some() || cfg.phases.is_some() {
        Err(Error::Config {
            key: "output_grid".into(),
            message: format!("config describes {} modes, the input has {n}", cfg.n_modes()),
        })
    } else {
        Ok((OutputGrid::default_for(n, scale), vec![0.0; n]))
    }
}

pub fn cmd_reconstruct(args: &ReconstructArgs, out: &mut dyn Write) -> Result<DensityMatrixFS> {
    let mut cfg = config_from(args.config.as_deref())?;
    override_filter(&mut cfg, args.filter_ycut)?;
    let path = args
        .out
        .clone()
        .or_else(|| cfg.outputs.result.clone())
        .unwrap_or_else(|| PathBuf::from("reconstruction.json"));

    let result = match (&args.dataset, &args.analytic) {
        (Some(dir), None) => {
            let (ds, manifest) = read_dataset(dir)?;
            cfg.detector = ds.detector;
            override_eta(&mut cfg, args.eta)?;
            let emp = EmpiricalCharFn::from_dataset(&ds, cfg.z_cap)?;
            let source = CharFnSource::Empirical(&emp);
            let scale = ds.field_scale;
            let (grid, phases) = grid_for(&cfg, ds.n_modes, scale, !ds.control.is_relative())?;
            let mut opts = cfg.reconstruct_options(ds.n_modes, scale);
            opts.detector = cfg.detector;
            let mut m = if args.phase_averaged {
                phase_averaged_reconstruct(&source, &grid, &phases, &opts, scale, cfg.averaging())?
            } else {
                reconstruct_grid(&source, &grid, &phases, &opts, scale)?
            };
            m.provenance.seed = Some(ds.seed);
            m.provenance.config_hash = manifest.config_hash.clone();
            m
        }
        (None, Some(name)) => {
            override_eta(&mut cfg, args.eta)?;
            cfg.state = analytic_spec(&cfg, name)?;
            let state = build_state(&cfg.state)?;
            let scale = cfg.field_scale;
            let n = state.n_modes();
            let (grid, phases) = grid_for(&cfg, n, scale, false)?;
            let mut opts = cfg.reconstruct_options(n, scale);
            opts.detector = cfg.detector;
            // A detector below unit efficiency degrades the exact data
            // before the compensation undoes it.
            let source = CharFnSource::Analytic {
                state: &state,
                detector: (cfg.detector.eta() < 1.0).then_some(cfg.detector),
            };
            let mut m = if args.phase_averaged {
                phase_averaged_reconstruct(&source, &grid, &phases, &opts, scale, cfg.averaging())?
            } else {
                reconstruct_grid(&source, &grid, &phases, &opts, scale)?
            };
            m.provenance.config_hash = Some(cfg.hash());
            m.provenance.seed = Some(cfg.seed);
            m
        }
        _ => {
            return Err(Error::invalid(
                "reconstruct needs exactly one of --dataset DIR or --analytic [STATE]",
            ))
        }
    };
    write_json(&path, &result)?;
    w(out, format_args!("wrote {}", path.display()))?;
    print_residuals(&result, out)?;
    if result.provenance.eta < 1.0 {
        if let Some(b) = result.provenance.amplification_bound {
            w(out, format_args!("amplification bound: {b:.6e}"))?;
        }
    }
    if let Some(pa) = &result.provenance.phase_averaged {
        w(out, format_args!("phase averaged over {} points ({:?})", pa.n_points, pa.order))?;
    }
    Ok(result)
}

pub fn cmd_oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<DensityMatrixFS> {
    let mut cfg = config_from(args.config.as_deref())?;
    if let Some(name) = &args.state {
        cfg.state = resolve_state(name)?;
    }
    let path = args
        .out
        .clone()
        .or_else(|| cfg.outputs.result.clone())
        .unwrap_or_else(|| PathBuf::from("oracle.json"));
    let state = build_state(&cfg.state)?;
    let (grid, phases, scale) = match &args.like {
        Some(p) => {
            let r: DensityMatrixFS = read_json(p)?;
            (r.grid, r.phases, r.field_scale)
        }
        None => {
            let (g, ph) = grid_for(&cfg, state.n_modes(), cfg.field_scale, false)?;
            (g, ph, cfg.field_scale)
        }
    };
    let mut m = oracle_grid(&state, &grid, &phases, scale)?;
    m.provenance.config_hash = Some(cfg.hash());
    write_json(&path, &m)?;
    w(out, format_args!("wrote {}", path.display()))?;
    print_residuals(&m, out)?;
    Ok(m)
}

/// Returns the metrics and whether L∞ is within `--tol`.
pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<(ComparisonMetrics, bool)> {
    if !(args.tol.is_finite() && args.tol >= 0.0) {
        return Err(Error::invalid("--tol must be finite and >= 0"));
    }
    let a: DensityMatrixFS = read_json(&args.a)?;
    let b: DensityMatrixFS = read_json(&args.b)?;
    let m = compare_matrices(&a, &b)?;
    let pass = m.linf <= args.tol;
    w(out, format_args!("linf: {:.6e}", m.linf))?;
    w(out, format_args!("l2_rms: {:.6e}", m.l2_rms))?;
    w(out, format_args!("hermiticity residual: {:.3e}", m.hermiticity_residual))?;
    if let Some(n) = m.diagonal_normalization {
        w(out, format_args!("diagonal normalization: {n:.6}"))?;
    }
    w(out, format_args!("{} (tol {:e})", if pass { "PASS" } else { "FAIL" }, args.tol))?;
    if let Some(p) = &args.out {
        write_json(p, &m)?;
    }
    Ok((m, pass))
}

/// One row of the benchmark table.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: &'static str,
    pub n_modes: usize,
    pub n_centers: usize,
    pub n_offsets: usize,
    pub nodes: usize,
    pub wall_seconds: f64,
    pub linf: f64,
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<Vec<BenchRow>> {
    let cfg = config_from(args.config.as_deref())?;
    let path = args
        .out
        .clone()
        .or_else(|| cfg.outputs.bench.clone())
        .unwrap_or_else(|| PathBuf::from("bench.csv"));
    let state = build_state(&cfg.state)?;
    let rows = run_bench(&cfg, &state)?;
    write_atomic(&path, |wr| {
        let mut csv = csv::Writer::from_writer(wr);
        csv.write_record(["method", "n_modes", "n_centers", "n_offsets", "nodes", "wall_seconds", "linf"])?;
        for r in &rows {
            csv.write_record([
                r.method.to_string(),
                r.n_modes.to_string(),
                r.n_centers.to_string(),
                r.n_offsets.to_string(),
                r.nodes.to_string(),
                format!("{:.6}", r.wall_seconds),
                format!("{:.6e}", r.linf),
            ])?;
        }
        csv.flush()
    })?;
    for r in &rows {
        w(out, format_args!(
            "{:<15} N={} centers={} offsets={} nodes={} {:.3}s linf={:.3e}",
            r.method, r.n_modes, r.n_centers, r.n_offsets, r.nodes, r.wall_seconds, r.linf
        ))?;
    }
    w(out, format_args!("wrote {}", path.display()))?;
    Ok(rows)
}

fn run_bench(cfg: &RunConfig, state: &DensityOperatorFock) -> Result<Vec<BenchRow>> {
    let n = state.n_modes();
    let scale = cfg.field_scale;
    let f = scale.get();
    let phases = cfg.reference_phases();
    let mut rows = Vec::new();
    for s in &cfg.bench.sizes {
        let grid = OutputGrid::uniform(n, s.n_centers, 6.0 * f, s.n_offsets, f)?;
        let oracle = oracle_grid(state, &grid, &phases, scale)?;
        let quad = QuadratureParams {
            nodes: s.nodes,
            y_max: cfg.quadrature.map_or(8.0 / f, |q| q.y_max),
        };
        let mut opts = cfg.reconstruct_options(n, scale);
        opts.quadrature = quad;
        opts.filter = None;
        for method in ["sum_field", "joint_baseline"] {
            let mut best = f64::INFINITY;
            let mut linf = 0.0;
            for _ in 0..cfg.bench.repeats {
                let t = Instant::now();
                let m = if method == "sum_field" {
                    reconstruct_grid(&CharFnSource::analytic(state), &grid, &phases, &opts, scale)?
                } else {
                    reconstruct_from_joint(state, &grid, &phases, quad, scale)?
                };
                best = best.min(t.elapsed().as_secs_f64());
                linf = compare_matrices(&m, &oracle)?.linf;
            }
            rows.push(BenchRow {
                method,
                n_modes: n,
                n_centers: s.n_centers,
                n_offsets: s.n_offsets,
                nodes: s.nodes,
                wall_seconds: best,
                linf,
            });
        }
    }
    Ok(rows)
}
