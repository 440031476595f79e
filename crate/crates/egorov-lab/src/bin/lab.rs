//! Thin CLI over the harness drivers: run / sweep / ehrenfest / verify /
//! report. Exit codes: 0 pass, 1 acceptance failure, 2 configuration
//! error, 3 numerical-guard abort.

use clap::{Parser, Subcommand};
use egorov_lab::harness::{
    ehrenfest_scan, emit_report, load_config, run, sweep, verify, ErrorReport,
};
use egorov_lab::LabError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lab", about = "semiclassical Egorov laboratory", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Rayon worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed recorded in the report metadata (experiments are deterministic).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single-shot measurement rows, no fits.
    Run,
    /// Full ħ-sweep with slope fits.
    Sweep,
    /// Remainder at the ħ-dependent Ehrenfest time.
    Ehrenfest,
    /// Property-test battery on the configured model.
    Verify,
    /// Print a human summary of an existing report in --out.
    Report,
}

fn dispatch(cli: &Cli) -> egorov_lab::Result<ErrorReport> {
    let path = cli.config.as_ref().ok_or_else(|| {
        LabError::Config("--config PATH is required for this verb".into())
    })?;
    let mut cfg = load_config(path)?;
    if cfg.seed.is_none() {
        cfg.seed = cli.seed;
    }
    match cli.cmd {
        Cmd::Run => run(&cfg),
        Cmd::Sweep => sweep(&cfg),
        Cmd::Ehrenfest => ehrenfest_scan(&cfg),
        Cmd::Verify => verify(&cfg),
        Cmd::Report => unreachable!(),
    }
}

fn print_summary(report: &ErrorReport) {
    println!("config {}", report.config_hash);
    for f in &report.fits {
        println!(
            "fit {:<28} slope {:+.4}  r2 {:.5}  {}",
            f.name,
            f.slope,
            f.r2,
            if f.pass { "pass" } else { "FAIL" }
        );
    }
    for (k, v) in &report.constants_fitted {
        println!("fitted {k} = {v:.6e}");
    }
    for msg in &report.failures {
        println!("FAILURE: {msg}");
    }
    println!("{} rows, overall: {}", report.rows.len(), if report.passed() { "pass" } else { "FAIL" });
}

fn show_existing(out: &PathBuf) -> egorov_lab::Result<()> {
    let json = std::fs::read_to_string(out.join("summary.json"))?;
    let v: serde_json::Value = serde_json::from_str(&json)?;
    println!("config {}", v["config_hash"].as_str().unwrap_or("?"));
    if let Some(fits) = v["fits"].as_array() {
        for f in fits {
            println!(
                "fit {:<28} slope {:+.4}  r2 {:.5}  {}",
                f["name"].as_str().unwrap_or("?"),
                f["slope"].as_f64().unwrap_or(f64::NAN),
                f["r2"].as_f64().unwrap_or(f64::NAN),
                if f["pass"].as_bool().unwrap_or(false) { "pass" } else { "FAIL" }
            );
        }
    }
    if let Some(fails) = v["failures"].as_array() {
        for msg in fails {
            println!("FAILURE: {}", msg.as_str().unwrap_or("?"));
        }
    }
    let csv = std::fs::read_to_string(out.join("sweep.csv"))?;
    println!("{} rows in sweep.csv", csv.lines().count().saturating_sub(1));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: could not configure {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    if matches!(cli.cmd, Cmd::Report) {
        return match show_existing(&cli.out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }
    match dispatch(&cli) {
        Ok(report) => {
            if let Err(e) = emit_report(&report, &cli.out) {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
            print_summary(&report);
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
