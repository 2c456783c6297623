use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand};
use log::{debug, info};

use flockadapt::analysis::summarize;
use flockadapt::audit::audit_csv;
use flockadapt::equilibrium::{predict_for_scenario, PredictionMethod};
use flockadapt::plot::trace_charts;
use flockadapt::scenario_file::{bundled_scenario, load_scenario};
use flockadapt::trace_csv::{read_trace_csv, trace_to_csv_string};
use flockadapt::{run_scenario, Scenario};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] flockadapt::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("audit failed: {0}")]
    Audit(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(_) | CliError::Io { .. } => 2,
            CliError::Audit(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Formation simulator for target-orbiting agents with agent-loss adaptation.
#[derive(Debug, Parser)]
#[command(name = "flockadapt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate scenario files and write traces and summaries.
    Run(RunArgs),
    /// Print the predicted steady state after the scenario's losses.
    Predict {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-check a trace CSV for invariant violations.
    Audit { trace: PathBuf },
    /// Render SVG charts from a trace CSV.
    Plot {
        trace: PathBuf,
        #[arg(short, long = "out", value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario files; bundled scenario names are accepted too.
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    #[arg(short, long = "out", value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args, Clone, Copy)]
struct Overrides {
    /// Step size (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated time (s).
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn apply(self, s: &mut Scenario) -> flockadapt::Result<()> {
        if let Some(dt) = self.dt {
            s.dt = dt;
        }
        if let Some(d) = self.duration {
            s.duration = d;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s.validate()
    }
}

fn load(path: &Path, overrides: Overrides) -> Result<Scenario> {
    let mut s = if !path.exists() && path.components().count() == 1 {
        bundled_scenario(&path.to_string_lossy())?
    } else {
        load_scenario(path)?
    };
    for note in &s.notices {
        eprintln!("{}: {note}", path.display());
    }
    overrides.apply(&mut s)?;
    Ok(s)
}

fn run_one(path: &Path, out: &Path, overrides: Overrides) -> Result<String> {
    let scenario = load(path, overrides)?;
    info!("running {} ({} steps)", scenario.name, scenario.n_steps());
    let trace = run_scenario(&scenario)?;
    let csv_path = out.join(format!("{}.csv", scenario.name));
    fs::write(&csv_path, trace_to_csv_string(&trace)).map_err(io_err(&csv_path))?;
    let summary = summarize(&trace).to_string();
    let summary_path = out.join(format!("{}.summary.txt", scenario.name));
    fs::write(&summary_path, format!("{summary}\n")).map_err(io_err(&summary_path))?;
    debug!("wrote {}", csv_path.display());
    Ok(summary)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let results: Vec<Result<String>> = thread::scope(|scope| {
        let handles: Vec<_> = args
            .scenarios
            .iter()
            .map(|p| scope.spawn(|| run_one(p, &args.out, args.overrides)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario worker panicked"))
            .collect()
    });
    let mut first_err = None;
    for (path, res) in args.scenarios.iter().zip(results) {
        match res {
            Ok(summary) => println!("{summary}\n"),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn cmd_predict(path: &Path, overrides: Overrides) -> Result<()> {
    let scenario = load(path, overrides)?;
    let pred = predict_for_scenario(&scenario)?;
    let (_, _, params) = scenario.final_configuration()?;
    let method = match pred.method {
        PredictionMethod::ClosedForm => "closed form",
        PredictionMethod::Numeric => "numeric",
    };
    println!("scenario: {}", scenario.name);
    println!("method: {method}");
    println!("delta (rad): {:.9}", pred.delta);
    match pred.common_speed_offset(1e-9) {
        Some(off) => {
            println!("speed offset (m/s): {off:.9}");
            if let Some(a) = params.first() {
                println!("steady cruise speed (m/s): {:.9}", a.v_nominal + off);
            }
        }
        None => {
            for (a, off) in params.iter().zip(&pred.speed_offsets) {
                println!("speed offset (m/s): {off:.9} (cruise {:.9})", a.v_nominal + off);
            }
        }
    }
    let shifts: Vec<String> = pred.steady_shifts.iter().map(|v| format!("{v:.9}")).collect();
    println!("steady shifts (rad): [{}]", shifts.join(", "));
    Ok(())
}

fn cmd_audit(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let report = audit_csv(&text)?;
    for c in &report.checks {
        match (&c.skipped, c.passed()) {
            (Some(why), _) => println!("SKIP {}: {why}", c.name),
            (None, true) => println!("PASS {} ({} checked)", c.name, c.checked),
            (None, false) => {
                println!("FAIL {}: {} of {} violated", c.name, c.violation_count, c.checked);
                for v in &c.violations {
                    println!("  {v}");
                }
            }
        }
    }
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(CliError::Audit(names.join("; ")))
    }
}

fn cmd_plot(path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let table = read_trace_csv(&text)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let stem = path.file_stem().map_or("trace".into(), |s| s.to_string_lossy());
    for (name, chart) in trace_charts(&table)? {
        let file = out.join(format!("{stem}_{name}.svg"));
        fs::write(&file, chart.to_svg()).map_err(io_err(&file))?;
        println!("{}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("FLOCKADAPT_LOG")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Predict { scenario, overrides } => cmd_predict(&scenario, overrides),
        Command::Audit { trace } => cmd_audit(&trace),
        Command::Plot { trace, out } => cmd_plot(&trace, &out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
