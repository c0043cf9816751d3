use std::path::PathBuf;
use std::process::ExitCode;

use absorb_qd::{parse_config, run_experiment, Kind, QdError, RunOptions};
use clap::Parser;

/// Run an absorbing-boundary experiment from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "absorb-qd", version)]
struct Cli {
    /// evolve, detect, moving, multi, bohm, povm-check or sweep
    kind: String,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to ABSORB_QD_WORKERS, then the CPU count
    #[arg(long)]
    workers: Option<usize>,
}

fn default_workers() -> usize {
    std::env::var("ABSORB_QD_WORKERS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run(cli: Cli) -> Result<i32, QdError> {
    let kind: Kind = cli.kind.parse().map_err(QdError::Usage)?;
    let mut cfg = parse_config(&cli.config)?;
    if cfg.kind != kind {
        return Err(QdError::Usage(format!(
            "subcommand '{}' does not match config kind '{}'",
            kind.as_str(),
            cfg.kind.as_str()
        )));
    }
    let out = match cli.out.or_else(|| cfg.output_dir.take().map(PathBuf::from)) {
        Some(p) => p,
        None => return Err(QdError::Usage("no --out given and config has no output_dir".into())),
    };
    let workers = cli.workers.filter(|&n| n > 0).unwrap_or_else(default_workers);
    let start = std::time::Instant::now();
    let m = run_experiment(&cfg, &out, RunOptions { workers })?;
    let status = serde_json::to_value(m.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    println!("{} {}: {} ({:.2}s)", kind.as_str(), out.display(), status, start.elapsed().as_secs_f64());
    if let Some(f) = &m.failure {
        eprintln!("error in {}: {}", f.stage, f.message);
    }
    for (name, c) in m.checks.iter().filter(|(_, c)| !c.pass) {
        eprintln!("check failed: {name} value={:?} limit={}", c.value, c.limit);
    }
    Ok(m.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("absorb-qd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
