use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hphi4_cli::{run, verify, CliError, Config};

#[derive(Parser)]
#[command(name = "hphi4", version, about = "Spectral Φ⁴ studies")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Re-check every assertion recorded in a summary file.
    Verify { summary: PathBuf },
    #[command(external_subcommand)]
    Study(Vec<String>),
}

#[derive(Parser)]
#[command(name = "hphi4 <study>")]
struct StudyArgs {
    study: String,
    #[arg(long)]
    config: PathBuf,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set")]
    sets: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HPHI4_THREADS") else {
        return Ok(());
    };
    let n: usize =
        v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::config(None, "HPHI4_THREADS", "expected a positive integer")
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(None, "HPHI4_THREADS", &e.to_string()))
}

fn study(argv: Vec<String>) -> Result<(), CliError> {
    let a = StudyArgs::try_parse_from(std::iter::once("hphi4".to_string()).chain(argv))
        .map_err(|e| CliError::config(None, "-", e.to_string().trim()))?;
    let mut cfg = Config::load(&a.config)?;
    for s in &a.sets {
        cfg.set(s)?;
    }
    let summary = run(&a.study, &cfg, &a.out)?;
    for c in &summary.checks {
        println!(
            "{} {} = {:.6e} ({:?} {:.6e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.comparator,
            c.threshold
        );
    }
    let failed = summary.failed();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failed))
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let res = threads().and_then(|()| match args.cmd {
        Cmd::Verify { summary } => verify(&summary).map(|n| println!("{n} checks hold")),
        Cmd::Study(argv) => study(argv),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hphi4: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
