mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::bail;
use clap::Parser;

use config::RunConfig;

/// Ring-modulus estimates, dilatation fields and boundary checks on
/// Riemannian charts.
#[derive(Parser, Debug)]
#[command(name = "ringmod", version, about)]
struct Cli {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Worker threads (all cores when omitted)
    #[arg(long)]
    threads: Option<usize>,

    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,

    /// Run the built-in acceptance suite and exit nonzero on failure
    #[arg(long)]
    check: bool,
}

/// Machine-readable code for the first recognizable cause.
fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ringmod_core::Error>() {
            return e.code();
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return "CONFIG_PARSE";
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "IO";
        }
    }
    "INVALID_CONFIG"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", error_code(&e));
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: &Cli) -> anyhow::Result<ExitCode> {
    if let Some(k) = cli.threads {
        if k == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let threads = rayon::current_num_threads();

    if cli.check {
        let seed = cli.seed.unwrap_or(0);
        let results = ringmod_core::check::run_all(seed);
        for r in &results {
            let status = if r.passed { "PASS" } else { "FAIL" };
            println!("criterion {} {status}: {} ({})", r.id, r.title, r.message);
        }
        run::check_outputs(&results, seed, threads).write(&cli.out, "")?;
        return Ok(if results.iter().all(|r| r.passed) {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        });
    }

    let Some(path) = &cli.config else {
        bail!("either --config or --check is required");
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let outputs = run::run(&cfg, threads)?;
    for f in outputs.write(&cli.out, &cfg.output_prefix)? {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}
