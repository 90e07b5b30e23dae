//! Subcommands: simulate, fit, convert and serve.

use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tdsim_core::domain::MaterialParams;
use tdsim_core::fit::{run_pso, BoundsMode, FitProblem};
use tdsim_core::io::{convert_table, export_spectrum, export_trace, load_experiment, ColumnUnits, ValueKind};
use tdsim_core::project::Project;
use tdsim_core::pso::PsoOptions;
use tdsim_core::result::ModelKind;
use tdsim_core::spectrum::mass_balance_residual;
use tdsim_core::Error;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "tdsim", version, about = "Thermal desorption spectroscopy simulator and trap-parameter fitter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run forward simulations and write one CSV spectrum per model.
    Simulate(SimulateArgs),
    /// Fit trap parameters to an experimental spectrum.
    Fit(FitArgs),
    /// Convert a two-column file between units.
    Convert(ConvertArgs),
    /// Start the local HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub project: PathBuf,
    /// Model(s) to run; defaults to the project's selection.
    #[arg(long = "model", value_parser = parse_model)]
    pub models: Vec<ModelKind>,
    /// Output CSV. With several models the model tag is inserted before
    /// the extension.
    #[arg(long, default_value = "spectrum.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub project: PathBuf,
    /// Two-column experimental data file.
    #[arg(long)]
    pub data: PathBuf,
    /// What the second column holds: deltaC or flux.
    #[arg(long, default_value = "deltaC", value_parser = parse_kind)]
    pub col2: ValueKind,
    /// Column units as "<temperature>,<value>", e.g. C,wppm_s.
    #[arg(long, default_value = "K,mol/(m3*s)", value_parser = parse_units)]
    pub units: ColumnUnits,
    #[arg(long, default_value = "global", value_parser = parse_bounds)]
    pub bounds: BoundsMode,
    /// Re-derive C_L0 from the measured content for every candidate.
    #[arg(long = "update-cl0")]
    pub update_cl0: bool,
    /// Forward model; defaults to the project's first numerical model.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 150)]
    pub iters: usize,
    #[arg(long, default_value_t = 400)]
    pub pop: usize,
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    #[arg(long, default_value_t = 20)]
    pub stall: usize,
    /// Fitted project; defaults to <project>.fitted.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Convergence trace CSV; defaults to <project>.trace.csv.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Source units as "<temperature>,<value>".
    #[arg(long, value_parser = parse_units)]
    pub from: ColumnUnits,
    /// Target units as "<temperature>,<value>".
    #[arg(long, value_parser = parse_units)]
    pub to: ColumnUnits,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Project supplying the host density for wt ppm units; bcc iron
    /// otherwise.
    #[arg(long)]
    pub project: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<ValueKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_units(s: &str) -> Result<ColumnUnits, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_bounds(s: &str) -> Result<BoundsMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Convert(a) => convert(&a),
        Command::Serve(a) => serve(&a),
    }
}

/// `spectrum.csv` → `spectrum.oriani.csv`.
fn tagged_path(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let project = Project::load(&args.project)?;
    let models = if args.models.is_empty() {
        project.models.clone()
    } else {
        args.models.clone()
    };
    if models.is_empty() {
        return Err(CliError::Usage("no model selected".into()));
    }
    for &model in &models {
        let forward = project.forward(model);
        let spectrum = if model == ModelKind::Lattice {
            forward.spectrum()?
        } else {
            let fields = forward.fields()?;
            match mass_balance_residual(&fields) {
                Ok(r) => log::info!("{model}: mass-balance residual {r:.3e}"),
                Err(e) => log::info!("{model}: {e}"),
            }
            tdsim_core::spectrum::desorption_rate(&fields)?
        };
        let path = if models.len() == 1 {
            args.out.clone()
        } else {
            tagged_path(&args.out, model.tag())
        };
        export_spectrum(&spectrum, &path, &project.units, &project.material)?;
        log::info!(
            "{model}: peak {:.6e} at {:.2} K -> {}",
            spectrum.peak().1,
            spectrum.peak_temperature(),
            path.display()
        );
    }
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let mut project = Project::load(&args.project)?;
    let experiment = load_experiment(&args.data, args.col2, args.units, &project.material, &project.protocol)?;
    let model = match args.model {
        Some(m) => m,
        None => project
            .models
            .iter()
            .copied()
            .find(|m| *m != ModelKind::Lattice)
            .unwrap_or(ModelKind::Oriani),
    };
    if model == ModelKind::Lattice {
        return Err(CliError::Usage("the lattice model has no trap parameters to fit".into()));
    }
    let problem = FitProblem {
        base: project.forward(model),
        experiment: experiment.clone(),
        bounds_mode: args.bounds,
        update_initial_concentration: args.update_cl0,
    };
    let opts = PsoOptions {
        max_iterations: args.iters,
        population: args.pop,
        tolerance: args.tol,
        stall_window: args.stall,
        seed: args.seed,
        ..PsoOptions::default()
    };
    let result = run_pso(&problem, &opts, |r| {
        log::info!(
            "iter {:>4}  f-count {:>7}  best {:.6e}  mean {:.6e}  stall {}",
            r.iteration,
            r.evaluations,
            r.best,
            r.mean,
            r.stall
        );
        ControlFlow::Continue(())
    })?;
    log::info!("fit finished ({:?}), best f = {:.6e}", result.termination, result.objective);

    let out = args.out.clone().unwrap_or_else(|| sibling(&args.project, "fitted.json"));
    let trace = args.trace.clone().unwrap_or_else(|| sibling(&args.project, "trace.csv"));
    export_trace(&result, &trace)?;
    project.traps = result.traps.clone();
    if let Some(c) = result.initial_concentration {
        project.material.initial_concentration = c;
    }
    project.experiment = Some(experiment);
    project.fit = Some(result);
    project.save(&out)?;
    Ok(())
}

pub fn convert(args: &ConvertArgs) -> Result<(), CliError> {
    let material = match &args.project {
        Some(p) => Project::load(p)?.material,
        None => MaterialParams::bcc_iron(),
    };
    let text = fs::read_to_string(&args.input)
        .map_err(|e| Error::Io(format!("{}: {e}", args.input.display())))?;
    let out = convert_table(&text, args.from, args.to, &material)?;
    match &args.out {
        Some(path) => fs::write(path, out).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => print!("{out}"),
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        log::info!("listening on http://{addr}");
        axum::serve(listener, crate::service::router(crate::service::AppState::start()))
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}
