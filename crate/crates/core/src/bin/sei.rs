use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sei::harness::{parse_scalar, run_experiment, Experiment, ExperimentConfig, ProblemSpec};
use sei::tableau::{builtin_methods, TableauFile};

/// Structure-preserving exponential integrators: experiments and checks.
#[derive(Parser)]
#[command(name = "sei", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Global error against the exact or numeric reference for each step size.
    Convergence(RunArgs),
    /// Energy drift at a fixed step for increasing final times.
    Energy(RunArgs),
    /// Condition residuals, order checks, round trips and Jacobian symplecticity.
    Verify(RunArgs),
    /// Write full trajectories.
    Run(RunArgs),
    /// Print the built-in methods.
    ListMethods {
        /// Emit the tableaux as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `duffing` (default) or `wind`.
    #[arg(long)]
    problem: Option<String>,
    /// Problem parameter override, e.g. `--param theta=pi/2-1e-4`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Extra tableau JSON files.
    #[arg(long = "tableau")]
    tableaux: Vec<PathBuf>,
    /// Comma-separated step sizes, fractions allowed (`1/8,1/16`).
    #[arg(long, value_delimiter = ',')]
    h_list: Vec<String>,
    #[arg(long)]
    t_end: Option<String>,
    /// Comma-separated final times for the energy experiment.
    #[arg(long, value_delimiter = ',')]
    t_end_list: Vec<String>,
    #[arg(long)]
    fp_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write zero wall times so the output is reproducible.
    #[arg(long)]
    no_timing: bool,
}

fn build_config(experiment: Experiment, args: RunArgs) -> sei::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let cfg: ExperimentConfig = serde_json::from_reader(File::open(path)?)?;
            if cfg.experiment != experiment {
                return Err(sei::Error::Config(format!(
                    "config is for {:?}, not {experiment:?}",
                    cfg.experiment
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(experiment, ProblemSpec::new("duffing")),
    };
    if let Some(label) = args.problem {
        cfg.problem.label = label;
    }
    for kv in &args.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| sei::Error::Config(format!("expected KEY=VALUE, got `{kv}`")))?;
        cfg.problem.params.insert(k.trim().to_string(), parse_scalar(v)?);
    }
    if !args.methods.is_empty() {
        cfg.methods = args.methods;
    }
    cfg.tableau_files.extend(args.tableaux);
    if !args.h_list.is_empty() {
        cfg.h_list = args.h_list.iter().map(|s| parse_scalar(s)).collect::<sei::Result<_>>()?;
    }
    if let Some(t) = &args.t_end {
        cfg.t_end = Some(parse_scalar(t)?);
    }
    if !args.t_end_list.is_empty() {
        cfg.t_end_list = Some(args.t_end_list.iter().map(|s| parse_scalar(s)).collect::<sei::Result<_>>()?);
    }
    if let Some(tol) = args.fp_tol {
        cfg.solver.fp_tol = tol;
    }
    if let Some(n) = args.max_iters {
        cfg.solver.max_iters = n;
    }
    if args.out.is_some() {
        cfg.output_path = args.out;
    }
    if args.no_timing {
        cfg.timing = false;
    }
    Ok(cfg)
}

fn execute(experiment: Experiment, args: RunArgs) -> sei::Result<bool> {
    let cfg = build_config(experiment, args)?;
    let output = run_experiment(&cfg)?;
    match &cfg.output_path {
        Some(path) => output.write_csv(&cfg, BufWriter::new(File::create(path)?))?,
        None => output.write_csv(&cfg, io::stdout().lock())?,
    }
    Ok(output.success())
}

fn list_methods(json: bool) -> sei::Result<()> {
    let methods = builtin_methods();
    let mut out = io::stdout().lock();
    if json {
        let files: Vec<TableauFile> = methods.iter().map(TableauFile::from_method).collect();
        serde_json::to_writer_pretty(&mut out, &files)?;
        writeln!(out)?;
    } else {
        for m in &methods {
            writeln!(out, "{:<10} stages={} order={} kind={:?}", m.name, m.stages(), m.order, m.kind)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convergence(a) => execute(Experiment::Convergence, a),
        Command::Energy(a) => execute(Experiment::Energy, a),
        Command::Verify(a) => execute(Experiment::Verify, a),
        Command::Run(a) => execute(Experiment::Run, a),
        Command::ListMethods { json } => list_methods(json).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}
