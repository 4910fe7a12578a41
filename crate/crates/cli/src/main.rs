use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rws_cli::config::{parse_config, parse_count_list, ExperimentConfig};
use rws_cli::report::{emit_report, to_json, Format};
use rws_cli::runner::{run_experiment, Command};
use rws_cli::selftest::{run_selftest, DEFAULT_SEED};

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_TOLERANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "rws", version, about = "Extremes of random walks in random sceneries")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated output formats: json, csv, gnuplot.
    #[arg(long, global = true, value_delimiter = ',', default_value = "json,csv,gnuplot")]
    format: Vec<Format>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the estimators listed in the config.
    Simulate(RunArgs),
    /// Exact limit laws only; no simulation.
    Limits(RunArgs),
    /// Clustering, mixing and concentration diagnostics.
    Diagnose(RunArgs),
    /// Convergence study over a grid of horizons.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Horizons, e.g. 1e3,1e4,1e5.
        #[arg(long)]
        n: String,
    },
    /// Acceptance suite; exits 3 when a tolerance fails.
    Selftest {
        #[arg(short, long, default_value = "selftest_out")]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var("RWS_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("RWS_SEED=`{v}` is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, (u8, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| (EXIT_IO, format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    if let Some(seed) = env_seed().map_err(|e| (EXIT_CONFIG, e))? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| (EXIT_CONFIG, format!("thread pool: {e}")))?;
    }
    let (command, args, grid) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a, None),
        Cmd::Limits(a) => (Command::Limits, a, None),
        Cmd::Diagnose(a) => (Command::Diagnose, a, None),
        Cmd::Sweep { run, n } => (Command::Sweep, run, Some(n)),
        Cmd::Selftest { output, seed } => return selftest(&output, seed, &cli.format),
    };
    let mut cfg = load(&args.config)?;
    if let Some(grid) = grid {
        cfg.n = parse_count_list(&grid).map_err(|e| (EXIT_CONFIG, format!("--n: {e}")))?;
        cfg.validate().map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    }
    let dir = args
        .output
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("rws_out"));
    let (report, metrics) = run_experiment(&cfg, command);
    for r in &report.results {
        let status = match (&r.error, r.passed()) {
            (Some(_), _) => "ERROR",
            (None, Some(true)) => "pass",
            (None, Some(false)) => "FAIL",
            (None, None) => "-",
        };
        let n = r.n.map_or(String::new(), |n| format!(" n={n}"));
        match (&r.error, r.value) {
            (Some(e), _) => println!("{:<16}{n} {status}: {e}", r.estimator),
            (None, Some(v)) => println!(
                "{:<16}{n} {status}: {v:.6}{}{}",
                r.estimator,
                r.stderr.map_or(String::new(), |s| format!(" ± {s:.6}")),
                r.comparison
                    .as_ref()
                    .map_or(String::new(), |c| format!(" (reference {:.6})", c.reference)),
            ),
            (None, None) => println!("{:<16}{n} {status}", r.estimator),
        }
    }
    let files = emit_report(&report, Some(&metrics), &dir, &cli.format).map_err(|e| (EXIT_IO, e.to_string()))?;
    eprintln!("wrote {} files to {} in {:.1}s", files.len(), dir.display(), metrics.wall_seconds);
    Ok(())
}

fn selftest(dir: &Path, seed: Option<u64>, formats: &[Format]) -> Result<(), (u8, String)> {
    let seed = match seed {
        Some(s) => s,
        None => env_seed().map_err(|e| (EXIT_CONFIG, e))?.unwrap_or(DEFAULT_SEED),
    };
    let (report, timings) = run_selftest(seed);
    for (c, (_, secs)) in report.criteria.iter().zip(&timings) {
        println!("{}", c.line());
        eprintln!("  criterion {} took {secs:.1}s", c.id);
    }
    if formats.contains(&Format::Json) {
        let io = |p: &Path, e: std::io::Error| (EXIT_IO, format!("{}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let path = dir.join("report.json");
        std::fs::write(&path, to_json(&report)).map_err(|e| io(&path, e))?;
        let path = dir.join("metrics.json");
        let timing: Vec<serde_json::Value> = timings
            .iter()
            .map(|(id, s)| serde_json::json!({ "criterion": id, "seconds": s }))
            .collect();
        std::fs::write(&path, to_json(&timing)).map_err(|e| io(&path, e))?;
    }
    if report.all_pass() {
        Ok(())
    } else {
        Err((EXIT_TOLERANCE, "selftest: at least one criterion failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
