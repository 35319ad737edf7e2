use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use modfilter::scenario::{emit, load_scenario, run, OutputPaths, RunStatus, ScenarioOverrides};
use modfilter::Error;

/// Run photon-input scenarios through the Fock-state hierarchy and the
/// cascaded-modulator master equation.
#[derive(Parser)]
#[command(name = "modfilter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV table and JSON report.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
    /// Run several scenarios concurrently; each writes into `<out-dir>/<stem>/`.
    Sweep {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
        /// Worker threads (defaults to available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct RunOpts {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Replication tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
}

impl RunOpts {
    fn overrides(&self) -> ScenarioOverrides {
        ScenarioOverrides { dt: self.dt, t_end: self.t_end, tolerance: self.tolerance }
    }
}

const EXIT_IO: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Scenario { .. } | Error::Json(_) => EXIT_PARSE,
        Error::IntegratorInstability { .. } => EXIT_INVARIANT,
        _ => EXIT_IO,
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn run_one(path: &Path, opts: &RunOpts, out_dir: Option<&Path>) -> Result<RunStatus, (u8, String)> {
    let fail = |e: Error| (error_code(&e), format!("{}: {e}", path.display()));
    let base = load_scenario(path).map_err(|e| {
        (if matches!(e, Error::Io(_)) { EXIT_IO } else { EXIT_PARSE }, format!("{}: {e}", path.display()))
    })?;
    let scenario = base.with_overrides(&opts.overrides()).map_err(fail)?;
    let result = run(&scenario).map_err(fail)?;
    let paths = OutputPaths::resolve(&scenario, &stem(path), out_dir);
    emit(&result, &paths).map_err(fail)?;
    let status = result.status();
    eprintln!("{}: {:?} -> {}", path.display(), status, paths.report.display());
    for v in &result.report.audit.violations {
        eprintln!("  invariant violated: {v}");
    }
    if let Some(r) = &result.report.replication {
        eprintln!("  replication max deviation {:e} (tolerance {:e})", r.max_deviation, r.tolerance);
    }
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(_) => {
                eprintln!("{}: ok", scenario.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", scenario.display());
                ExitCode::from(if matches!(e, Error::Io(_)) { EXIT_IO } else { EXIT_PARSE })
            }
        },
        Command::Run { scenario, opts } => match run_one(&scenario, &opts, opts.out_dir.as_deref()) {
            Ok(status) => ExitCode::from(status.exit_code() as u8),
            Err((code, msg)) => {
                eprintln!("{msg}");
                ExitCode::from(code)
            }
        },
        Command::Sweep { scenarios, opts, jobs } => {
            let jobs = jobs.or_else(|| std::thread::available_parallelism().ok().map(|n| n.get())).unwrap_or(1).max(1);
            let root = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            let next = std::sync::atomic::AtomicUsize::new(0);
            let codes = std::sync::Mutex::new(vec![0u8; scenarios.len()]);
            std::thread::scope(|s| {
                for _ in 0..jobs.min(scenarios.len()) {
                    s.spawn(|| loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let Some(path) = scenarios.get(i) else { break };
                        let dir = root.join(stem(path));
                        let code = match run_one(path, &opts, Some(&dir)) {
                            Ok(status) => status.exit_code() as u8,
                            Err((code, msg)) => {
                                eprintln!("{msg}");
                                code
                            }
                        };
                        codes.lock().expect("sweep bookkeeping")[i] = code;
                    });
                }
            });
            let codes = codes.into_inner().expect("sweep bookkeeping");
            ExitCode::from(codes.into_iter().max().unwrap_or(0))
        }
    }
}
