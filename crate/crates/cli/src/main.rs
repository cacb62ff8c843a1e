//! Command line front end: one subcommand per pipeline stage plus the preset studies.

mod artifacts;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use pllg_core::experiments::{self, stage_seed, Bases, EXPERIMENTS};
use pllg_core::io::{fmt_f64, Manifest, Table};
use pllg_core::metrics::{physical_diagnostics, sequence_error};
use pllg_core::noise::sample_parameters;
use pllg_core::pod::{truncation_dimension, Quantity};
use pllg_core::sparse_grid::{build_index_set, SparseGridOp};
use pllg_core::{build_rom_spaces, rom_run_partial, sgrbp_build, Error, ErrorKind, ExperimentConfig, FeVectorField, Result, Variant};

use artifacts::*;

#[derive(Parser, Debug)]
#[command(name = "pllg", version, about = "Reduced order models for the parametric stochastic LLG equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML configuration; keys not given fall back to the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset providing the defaults.
    #[arg(long, default_value = "relax-1d")]
    preset: String,
    /// Override a single key, e.g. `--set mesh.n_div=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root seed (overrides `sampling.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Role {
    Train,
    Test,
}

impl Role {
    fn stage(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Test => "test",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample parameters and run the high-fidelity tangent plane scheme.
    HfSolve {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Which parameter stream to draw from.
        #[arg(long, value_enum, default_value = "train")]
        role: Role,
        /// Number of samples (default: `sampling.n_snapshots` or `sampling.n_test`).
        #[arg(long)]
        count: Option<usize>,
    },
    /// POD of high-fidelity snapshots.
    OfflinePod {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory written by `hf-solve`.
        #[arg(long)]
        snapshots: PathBuf,
        /// Truncation tolerance for all three quantities.
        #[arg(long)]
        eps_sq: Option<f64>,
    },
    /// Reduced online phase on test parameters.
    OnlineRom {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory written by `offline-pod`.
        #[arg(long)]
        bases: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        /// Velocity budget `J` (default: `online.budget`, else the velocity basis size).
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Sparse grid surrogate of the reduced magnetization coefficients.
    SgRbp {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        bases: PathBuf,
        /// Profit threshold (default: `sg.threshold`).
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Errors and physical diagnostics of an approximation against a reference.
    Metrics {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Reference sample directory (usually `hf-solve --role test`).
        #[arg(long)]
        reference: PathBuf,
        /// Approximation sample directory (`online-rom` or `sg-rbp`).
        #[arg(long)]
        approx: PathBuf,
    },
    /// Run a preset study end to end.
    Experiment {
        /// One of relax-1d, relax-nd, sg-conv, switching.
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(preset: &str, config: Option<&Path>, set: &[String], seed: Option<u64>) -> Result<ExperimentConfig> {
    let base = ExperimentConfig::preset(preset)?;
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path, &base, set)?,
        None => ExperimentConfig::parse_with(&base, "", set)?,
    };
    if let Some(s) = seed {
        cfg.sampling.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one stage into `out` and records a manifest whatever the outcome.
fn with_manifest(
    name: &str,
    cfg: &ExperimentConfig,
    config_file: Option<&Path>,
    inputs: &[&Path],
    out: &Path,
    body: impl FnOnce() -> Result<()>,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = Manifest::new(name, &cfg.to_toml());
    if let Some(f) = config_file {
        manifest.add_input(f)?;
    }
    for dir in inputs {
        add_dir_inputs(&mut manifest, dir)?;
    }
    let result = body();
    if result.is_err() {
        manifest.failed_stage = Some(name.into());
    }
    manifest.collect_outputs(out)?;
    manifest.write(out)?;
    result
}

fn hf_solve(cfg: &ExperimentConfig, role: Role, count: Option<usize>, out: &Path) -> Result<()> {
    let problem = cfg.problem()?;
    let tps = cfg.tps_config()?;
    let n = count.unwrap_or(match role {
        Role::Train => cfg.sampling.n_snapshots,
        Role::Test => cfg.sampling.n_test,
    });
    let params = sample_parameters(cfg.param.s, n, stage_seed(cfg.sampling.seed, role.stage()))?;
    write_params(out, &params)?;
    let trajs = experiments::sample_trajectories(&problem, &params, &tps)?;
    for (i, t) in trajs.iter().enumerate() {
        write_trajectory(out, i, t)?;
    }
    Ok(())
}

fn offline_pod(cfg: &ExperimentConfig, snapshots: &Path, eps_sq: Option<f64>, out: &Path) -> Result<()> {
    let problem = cfg.problem()?;
    let n = problem.mesh.n_nodes();
    let count = read_params(snapshots)?.len();
    let trajs = (0..count).map(|i| read_trajectory(snapshots, i, n)).collect::<Result<Vec<_>>>()?;
    let bases = Bases::compute(&trajs, &problem.grams)?;
    experiments::singular_value_table(&bases).write(&out.join(SINGULAR_VALUES))?;
    let mut dims = Table::new(&["quantity", "eps_sq", "dim"]);
    for q in Quantity::ALL {
        let eps = eps_sq.unwrap_or(match q {
            Quantity::Magnetization => cfg.pod.eps_sq.m,
            Quantity::Velocity => cfg.pod.eps_sq.v,
            Quantity::Multiplier => cfg.pod.eps_sq.lambda,
        });
        let full = bases.get(q);
        let j = truncation_dimension(&full.singular_values, eps)?;
        write_basis(out, q, &full.truncate_to(j)?)?;
        dims.push(vec![q.name().into(), fmt_f64(eps), j.to_string()]);
    }
    dims.write(&out.join("dims.csv"))
}

fn test_params(cfg: &ExperimentConfig, count: Option<usize>) -> Result<Vec<pllg_core::ParamVector>> {
    sample_parameters(cfg.param.s, count.unwrap_or(cfg.sampling.n_test), stage_seed(cfg.sampling.seed, "test"))
}

fn online_rom(
    cfg: &ExperimentConfig,
    bases_dir: &Path,
    variant: Option<Variant>,
    budget: Option<usize>,
    count: Option<usize>,
    out: &Path,
) -> Result<()> {
    let problem = cfg.problem()?;
    let bases = read_bases(bases_dir, &problem.grams)?;
    let variant = variant.unwrap_or(cfg.online.variant);
    let budget = budget.or(cfg.online.budget).unwrap_or(bases.v.dim());
    let spaces = build_rom_spaces(&problem.mesh, &problem.grams, &bases.v, &bases.lambda, &bases.m, variant, budget)?;
    let tps = cfg.online_tps_config()?;
    let params = test_params(cfg, count)?;
    write_params(out, &params)?;
    let p = &problem;
    let runs = params
        .par_iter()
        .map(|y| rom_run_partial(&p.mesh, &p.grams, &p.noise, &spaces, &p.m0_h, y, &tps, &cfg.rom_options()))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Table::new(&["sample", "variant", "v_dim", "lambda_dim", "steps", "min_infsup", "failed"]);
    let mut first_failure = None;
    for (i, (traj, err)) in runs.into_iter().enumerate() {
        pllg_core::io::write_fields(&sample_file(out, i, "m"), &traj.full_magnetizations)?;
        summary.push(vec![
            i.to_string(),
            variant.name().into(),
            spaces.v_dim().to_string(),
            spaces.lambda_dim().to_string(),
            (traj.full_magnetizations.len() - 1).to_string(),
            fmt_f64(traj.min_infsup()),
            err.is_some().to_string(),
        ]);
        if first_failure.is_none() {
            first_failure = err;
        }
    }
    summary.write(&out.join("summary.csv"))?;
    first_failure.map_or(Ok(()), Err)
}

fn sg_rbp(cfg: &ExperimentConfig, bases_dir: &Path, threshold: Option<f64>, count: Option<usize>, out: &Path) -> Result<()> {
    let problem = cfg.problem()?;
    let bases = read_bases(bases_dir, &problem.grams)?;
    let eps = threshold.unwrap_or(cfg.sg.threshold);
    let op = SparseGridOp::new(build_index_set(cfg.param.s, eps, cfg.sg.degree, cfg.sg.cap)?, cfg.sg.degree)?;
    let header = std::iter::once("node".to_string()).chain((1..=cfg.param.s).map(|i| format!("y{i}"))).collect();
    let mut grid = Table { header, rows: Vec::new() };
    for (i, y) in op.nodes.iter().enumerate() {
        grid.push(std::iter::once(i.to_string()).chain(y.iter().map(|v| fmt_f64(*v))).collect());
    }
    grid.write(&out.join("grid.csv"))?;
    let p = &problem;
    let sur = sgrbp_build(&p.mesh, &p.grams, &p.noise, &p.m0_h, &cfg.tps_config()?, &bases.m, &op)?;
    let coeffs = faer::Mat::from_fn(sur.n_nodes(), sur.node_coeffs[0].len(), |i, j| sur.node_coeffs[i][j]);
    pllg_core::io::write_matrix(&out.join("node_coefficients.csv"), &coeffs)?;
    let params = test_params(cfg, count)?;
    write_params(out, &params)?;
    for (i, y) in params.iter().enumerate() {
        pllg_core::io::write_fields(&sample_file(out, i, "m"), &sur.eval(y)?)?;
    }
    Ok(())
}

fn metrics(cfg: &ExperimentConfig, reference: &Path, approx: &Path, out: &Path) -> Result<()> {
    let problem = cfg.problem()?;
    let n = problem.mesh.n_nodes();
    let (pr, pa) = (read_params(reference)?, read_params(approx)?);
    if pr != pa {
        return Err(Error::format(approx.join(PARAMS), "parameters differ from the reference"));
    }
    let mut refs = Vec::with_capacity(pr.len());
    let mut apps = Vec::with_capacity(pr.len());
    let mut diag = Table::new(&["sample", "step", "source", "unit_modulus_err", "dirichlet_energy", "avg_mz"]);
    for i in 0..pr.len() {
        let r = read_magnetizations(reference, i, n)?;
        let a = read_magnetizations(approx, i, n)?;
        if a.len() < 2 || (r.len() - 1) % (a.len() - 1) != 0 {
            return Err(Error::format(sample_file(approx, i, "m"), format!("{} states do not divide the reference grid of {}", a.len(), r.len())));
        }
        let stride = (r.len() - 1) / (a.len() - 1);
        let r: Vec<FeVectorField> = r.into_iter().step_by(stride).collect();
        for (source, seq) in [("reference", &r), ("approx", &a)] {
            for (k, m) in seq.iter().enumerate() {
                let d = physical_diagnostics(&problem.mesh, m, &problem.grams)?;
                diag.push(vec![
                    i.to_string(),
                    k.to_string(),
                    source.into(),
                    fmt_f64(d.unit_modulus_err),
                    fmt_f64(d.dirichlet_energy),
                    fmt_f64(d.avg_mz),
                ]);
            }
        }
        refs.push(r);
        apps.push(a);
    }
    diag.write(&out.join("diagnostics.csv"))?;
    let mut summary = Table::new(&["metric", "norm", "samples", "value"]);
    let err = sequence_error(&refs, &apps, &problem.grams)?;
    summary.push(vec!["galerkin_pod".into(), "H1".into(), pr.len().to_string(), fmt_f64(err)]);
    summary.write(&out.join("summary.csv"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::HfSolve { cfg: a, role, count } => {
            let cfg = resolve(&a.preset, a.config.as_deref(), &a.set, a.seed)?;
            with_manifest("hf-solve", &cfg, a.config.as_deref(), &[], &a.out, || hf_solve(&cfg, role, count, &a.out))
        }
        Command::OfflinePod { cfg: a, snapshots, eps_sq } => {
            let cfg = resolve(&a.preset, a.config.as_deref(), &a.set, a.seed)?;
            with_manifest("offline-pod", &cfg, a.config.as_deref(), &[&snapshots], &a.out, || {
                offline_pod(&cfg, &snapshots, eps_sq, &a.out)
            })
        }
        Command::OnlineRom { cfg: a, bases, variant, budget, count } => {
            let cfg = resolve(&a.preset, a.config.as_deref(), &a.set, a.seed)?;
            with_manifest("online-rom", &cfg, a.config.as_deref(), &[&bases], &a.out, || {
                online_rom(&cfg, &bases, variant, budget, count, &a.out)
            })
        }
        Command::SgRbp { cfg: a, bases, threshold, count } => {
            let cfg = resolve(&a.preset, a.config.as_deref(), &a.set, a.seed)?;
            with_manifest("sg-rbp", &cfg, a.config.as_deref(), &[&bases], &a.out, || sg_rbp(&cfg, &bases, threshold, count, &a.out))
        }
        Command::Metrics { cfg: a, reference, approx } => {
            let cfg = resolve(&a.preset, a.config.as_deref(), &a.set, a.seed)?;
            with_manifest("metrics", &cfg, a.config.as_deref(), &[&reference, &approx], &a.out, || {
                metrics(&cfg, &reference, &approx, &a.out)
            })
        }
        Command::Experiment { name, config, set, seed, out } => {
            if !EXPERIMENTS.contains(&name.as_str()) {
                return Err(Error::Config {
                    path: "experiment".into(),
                    message: format!("unknown experiment `{name}` (expected one of {})", EXPERIMENTS.join(", ")),
                });
            }
            let cfg = resolve(&name, config.as_deref(), &set, seed)?;
            let report = experiments::run_experiment(&name, &cfg, &out)?;
            println!("{}", serde_json::to_string(&report).map_err(|e| Error::InvalidArgument(e.to_string()))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}
