mod input;
mod output;
mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use phasekit::direct::{survival_csv, TimeGrid};
use phasekit::inverse::{invert_generic_with, invert_thomas_with, invert_unbranched};
use phasekit::rashomon::{discrimination_experiment, enumerate_variants, enumerate_variants_for_moments, ExperimentConfig, RootPolicy, VariantReport};
use phasekit::stochastic::{fit_multiexp, simulate_events, EventTrace, FitConfig};
use phasekit::{phase_type_params, validate, Generator, InvertOptions, ModelId};
use serde::Serialize;

use input::{Phase, PhaseInput};
use output::Run;

#[derive(Parser, Debug)]
#[command(name = "phasekit", version, about = "Phase-type renewal models: forward map, inversion, variants, simulation and fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rates to phase-type parameters (λ, A), optionally with a survival CSV
    Direct {
        #[command(flatten)]
        model: ModelArgs,
        /// Write `t,S,f` rows here
        #[arg(long)]
        survival_csv: Option<PathBuf>,
        /// `linear:T_MAX:POINTS` or `log:T_MIN:T_MAX:POINTS`
        #[arg(long, value_parser = parse_grid)]
        grid: Option<TimeGrid>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Simulate inter-event times; writes a `gap` CSV
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 100_000)]
        n_events: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Maximum-likelihood multi-exponential fit of a gap CSV
    Fit {
        /// Gap CSV (header `gap`)
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 3)]
        components: usize,
        /// Fit config JSON: `{"restarts": .., "max_iter": .., "tol": ..}`
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed of the random starting points (overrides the config)
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// All rate vectors of one model consistent with a phase-type input
    Invert {
        #[arg(long, value_parser = parse_model)]
        model: ModelId,
        #[command(flatten)]
        input: PhaseInput,
        /// Search every stored simple system instead of the generic closed forms
        #[arg(long)]
        thomas: bool,
        /// Values tried for free rates (M3's k3)
        #[arg(long, value_delimiter = ',')]
        k3_grid: Option<Vec<f64>>,
        /// Relative band of the vanishing test
        #[arg(long, default_value_t = phasekit::inverse::DEFAULT_TOL)]
        tol: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Variant models of a phase-type input with lifetimes and occupancies
    Variants {
        #[command(flatten)]
        input: PhaseInput,
        /// Comma-separated models
        #[arg(long, value_delimiter = ',', value_parser = parse_model, default_value = "M2,M4,M8,M9")]
        models: Vec<ModelId>,
        /// Marker table CSV
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Random phase-type inputs: how often the variants can be told apart
    Experiment {
        /// ExperimentConfig JSON; flags override its fields
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        root_policy: Option<Policy>,
        /// Directory for histogram CSVs (one per marker plus `histograms.csv`)
        #[arg(long)]
        hist_dir: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Structural checks of a model and rate vector
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Simulate, fit and enumerate variants, compared with the ground truth
    Pipeline {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1_000_000)]
        n_events: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Fit config JSON
        #[arg(long)]
        fit_config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct ModelArgs {
    /// M2, M3, M4, M8, M9 or chain:N
    #[arg(long, value_parser = parse_model)]
    model: ModelId,
    /// Comma-separated rates k1,..,k_{2N-1}
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rates: Vec<f64>,
}

impl ModelArgs {
    fn generator(&self) -> Result<Generator> {
        Ok(Generator::new(self.model, &self.rates)?)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Policy {
    RealPart,
    Strict,
}

fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse().map_err(|e: phasekit::Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<TimeGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    let count = |x: &str| x.parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    match parts.as_slice() {
        ["linear", t, n] => Ok(TimeGrid::Linear { t_max: num(t)?, points: count(n)? }),
        ["log", a, b, n] => Ok(TimeGrid::Log { t_min: num(a)?, t_max: num(b)?, points: count(n)? }),
        _ => Err("expected linear:T_MAX:POINTS or log:T_MIN:T_MAX:POINTS".into()),
    }
}

/// The input admits no solution; exit status 3.
#[derive(Debug)]
struct NoSolution(String);

impl std::fmt::Display for NoSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "no solution: {}", self.0)
    }
}

impl std::error::Error for NoSolution {}

#[derive(Serialize)]
struct InvertOutput {
    model: ModelId,
    moments: phasekit::SymmetricMoments,
    method: &'static str,
    solutions: Vec<phasekit::InverseSolution>,
}

fn read_json<T: serde::de::DeserializeOwned>(run: &mut Run, path: &Path) -> Result<T> {
    let text = run.read(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn fit_config(run: &mut Run, path: Option<&Path>) -> Result<FitConfig> {
    match path {
        Some(p) => read_json(run, p),
        None => Ok(FitConfig::default()),
    }
}

fn invert(model: ModelId, phase: &Phase, thomas: bool, opts: &InvertOptions) -> Result<InvertOutput> {
    let m = phase.moments();
    let (method, solutions) = match (model, phase) {
        (ModelId::UnbranchedChain(n), Phase::Params(p)) => ("unbranched", vec![invert_unbranched(n, p)?]),
        (ModelId::UnbranchedChain(_), Phase::Moments(_)) => bail!("chains need --lambda/--A or --params"),
        _ if thomas => ("thomas", invert_thomas_with(model, &m, opts)?),
        _ => match invert_generic_with(model, &m, opts) {
            Ok(s) => ("generic", s),
            Err(e) if e.is_no_solution() => ("thomas", invert_thomas_with(model, &m, opts)?),
            Err(e) => return Err(e.into()),
        },
    };
    if solutions.is_empty() {
        return Err(NoSolution(format!("{model} has no real solution")).into());
    }
    Ok(InvertOutput { model, moments: m, method, solutions })
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(";")
}

fn marker_table(r: &VariantReport) -> String {
    let mut out = String::from("model,system,roots,free,valid,residual,rates,T,p\n");
    for v in &r.variants {
        let s = &v.solution;
        let roots = s.branch.roots.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        let free = s.free_params.iter().map(|(n, x)| format!("{n}={x:.16e}")).collect::<Vec<_>>().join(";");
        let (t, p) = v.markers.as_ref().map(|m| (join(&m.t), join(&m.p))).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{:.16e},{},{},{}\n",
            s.model, s.branch.system, roots, free, v.valid, s.residual, join(&s.rates), t, p
        ));
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    let mut run = Run::new();
    match cli.command {
        Command::Direct { model, survival_csv: csv, grid, out } => {
            let p = phase_type_params(&model.generator()?)?;
            if let Some(path) = csv {
                let grid = grid.unwrap_or_else(|| TimeGrid::default_for(&p));
                run.emit(Some(&path), &survival_csv(&p, &grid))?;
            }
            run.emit_json(out.as_deref(), &p)?;
        }
        Command::Simulate { model, n_events, seed, out } => {
            run.seed("simulation", seed);
            let trace = simulate_events(&model.generator()?, n_events, seed)?;
            run.emit(out.as_deref(), &trace.to_csv())?;
        }
        Command::Fit { trace, components, config, seed, out } => {
            let mut cfg = fit_config(&mut run, config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            run.seed("fit", cfg.seed);
            let text = run.read(&trace)?;
            let trace = EventTrace::from_csv(&text, 0)?;
            let fit = fit_multiexp(&trace, components, &cfg)?;
            if !fit.converged {
                eprintln!("warning: optimizer stopped before convergence; best fit returned");
            }
            run.emit_json(out.as_deref(), &fit)?;
        }
        Command::Invert { model, input, thomas, k3_grid, tol, out } => {
            let phase = input.resolve(&mut run)?;
            let mut opts = InvertOptions { tol, ..InvertOptions::default() };
            if let Some(g) = k3_grid {
                opts.free_grid = g;
            }
            let result = invert(model, &phase, thomas, &opts)?;
            run.emit_json(out.as_deref(), &result)?;
        }
        Command::Variants { input, models, table, out } => {
            let report = match input.resolve(&mut run)? {
                Phase::Params(p) => enumerate_variants(&p, &models),
                Phase::Moments(m) => enumerate_variants_for_moments(&m, &models),
            };
            if let Some(path) = table {
                run.emit(Some(&path), &marker_table(&report))?;
            }
            run.emit_json(out.as_deref(), &report)?;
        }
        Command::Experiment { config, samples, seed, root_policy, hist_dir, out } => {
            let mut cfg: ExperimentConfig = match config {
                Some(p) => read_json(&mut run, &p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(n) = samples {
                cfg.n_samples = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = root_policy {
                cfg.root_policy = match p {
                    Policy::RealPart => RootPolicy::RealPart,
                    Policy::Strict => RootPolicy::Strict,
                };
            }
            run.seed("experiment", cfg.seed);
            let report = discrimination_experiment(&cfg);
            if let Some(dir) = hist_dir {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let all = report.histogram_csv();
                for h in &report.histograms {
                    let mut lines = all.lines();
                    let mut text = format!("{}\n", lines.next().unwrap_or_default());
                    for l in lines.filter(|l| l.split(',').next() == Some(h.marker.as_str())) {
                        text.push_str(l);
                        text.push('\n');
                    }
                    run.emit(Some(&dir.join(format!("hist_{}.csv", h.marker))), &text)?;
                }
                run.emit(Some(&dir.join("histograms.csv")), &all)?;
            }
            run.emit_json(out.as_deref(), &report)?;
        }
        Command::Validate { model } => {
            let report = validate(&model.generator()?);
            run.emit_json(None, &report)?;
            if !report.all_ok() {
                bail!("validation failed: {}", report.messages.join("; "));
            }
        }
        Command::Pipeline { model, n_events, seed, fit_config: cfg_path, out } => {
            let cfg = fit_config(&mut run, cfg_path.as_deref())?;
            run.seed("simulation", seed);
            run.seed("fit", cfg.seed);
            let report = pipeline::run(model.model, &model.rates, n_events, seed, &cfg)?;
            run.emit_json(out.as_deref(), &report)?;
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> (u8, &'static str) {
    if e.downcast_ref::<NoSolution>().is_some() {
        return (3, "no_solution");
    }
    match e.downcast_ref::<phasekit::Error>() {
        Some(pe) if pe.is_no_solution() => (3, pe.code()),
        Some(pe) => (2, pe.code()),
        None => (2, "error"),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PHASEKIT_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("PHASEKIT_THREADS=`{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, name) = exit_code(&e);
            eprintln!("error[{name}]: {e:#}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("linear:5:11").unwrap(), TimeGrid::Linear { t_max: 5.0, points: 11 });
        assert_eq!(
            parse_grid("log:0.01:10:4").unwrap(),
            TimeGrid::Log { t_min: 0.01, t_max: 10.0, points: 4 }
        );
        assert!(parse_grid("linear:5").is_err());
    }

    #[test]
    fn exit_codes() {
        let e: anyhow::Error = phasekit::Error::NegativeDiscriminant(-1.0).into();
        assert_eq!(exit_code(&e).0, 3);
        let e: anyhow::Error = phasekit::Error::InvalidParams("x".into()).into();
        assert_eq!(exit_code(&e), (2, "invalid_params"));
        let e: anyhow::Error = NoSolution("x".into()).into();
        assert_eq!(exit_code(&e).0, 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
