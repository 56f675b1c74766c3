use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use mixloc::fracops::assemble_fractional;
use mixloc::geometry::{build_grid, Domain};
use mixloc_cli::config::{bundled, SCENARIOS};
use mixloc_cli::{output, run_scenario, ScenarioConfig, EXIT_ERROR};

#[derive(Parser)]
#[command(
    name = "mixloc",
    version,
    about = "Pohozaev identity checks for -Δu + a(-Δ)^s u = f(u)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write CSV/JSON reports plus a manifest
    Run {
        /// scenario config (JSON)
        #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
        config: Option<PathBuf>,
        /// bundled scenario name instead of a config file
        #[arg(long)]
        scenario: Option<String>,
        /// output directory
        #[arg(long, default_value = "mixloc-out")]
        out: PathBuf,
        /// worker threads (results do not depend on this)
        #[arg(long)]
        threads: Option<usize>,
        /// replace a check tolerance, NAME=VALUE (repeatable)
        #[arg(long = "tolerance-override", value_name = "NAME=VAL")]
        tolerance_override: Vec<String>,
    },
    /// Print the bundled scenario names
    ListScenarios,
    /// Write the 1D fractional stencil weights as CSV (offset, weight)
    DumpStencil {
        #[arg(long = "N", default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// output file (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_override(item: &str) -> anyhow::Result<(String, f64)> {
    let (name, value) = item
        .split_once('=')
        .with_context(|| format!("tolerance override '{item}' is not NAME=VAL"))?;
    let value: f64 = value
        .trim()
        .parse()
        .with_context(|| format!("tolerance override '{item}' has a non-numeric value"))?;
    Ok((name.trim().to_string(), value))
}

fn run(
    config: Option<PathBuf>,
    scenario: Option<String>,
    out: PathBuf,
    threads: Option<usize>,
    overrides: Vec<String>,
) -> anyhow::Result<i32> {
    if let Some(k) = threads {
        if k == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let text = match (&config, &scenario) {
        (Some(path), _) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(name)) => bundled(name)?.to_string(),
        (None, None) => bail!("give --config or --scenario"),
    };
    let mut cfg = ScenarioConfig::parse(&text)?;
    for item in &overrides {
        let (name, value) = parse_override(item)?;
        cfg.override_tolerance(&name, value)?;
    }
    let outcome = run_scenario(&cfg, &out)?;
    for v in &outcome.result.body.verdicts {
        let value = v.value.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "n/a".into());
        println!(
            "{:<22} N={:<6} {} = {value} (tolerance {:.1e}) {}",
            v.name,
            v.n,
            v.metric,
            v.tolerance,
            if v.passed { "PASS" } else { "FAIL" }
        );
    }
    for s in &outcome.result.body.studies {
        let order = s.study.order.map(|p| format!("{p:.3}")).unwrap_or_else(|| "n/a".into());
        println!("{:<22} order {order} monotone {}", s.name, s.study.monotone);
    }
    println!(
        "reports: {} {}",
        outcome.written.csv.display(),
        outcome.written.json.display()
    );
    Ok(outcome.exit_code)
}

fn dump_stencil(n: usize, s: f64, radius: f64, out: Option<PathBuf>) -> anyhow::Result<()> {
    let grid = Arc::new(build_grid(Domain::interval(radius)?, n)?);
    let op = assemble_fractional(&grid, s)?;
    let weights = op
        .stencil_weights()
        .context("interval operators always carry a stencil")?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["offset", "weight"])?;
    for (k, v) in weights {
        w.write_record([k.to_string(), format!("{v:e}")])?;
    }
    let bytes = w.into_inner()?;
    match out {
        Some(path) => output::write_atomic(&path, &bytes)?,
        None => emit(&bytes),
    }
    Ok(())
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(bytes: &[u8]) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(bytes).and_then(|_| out.flush());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            scenario,
            out,
            threads,
            tolerance_override,
        } => run(config, scenario, out, threads, tolerance_override),
        Command::ListScenarios => {
            let mut listing = String::new();
            for (name, text) in SCENARIOS {
                let description = ScenarioConfig::parse(text).map(|c| c.description).unwrap_or_default();
                listing.push_str(&format!("{name}\t{description}\n"));
            }
            emit(listing.as_bytes());
            Ok(0)
        }
        Command::DumpStencil { n, s, radius, out } => dump_stencil(n, s, radius, out).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
