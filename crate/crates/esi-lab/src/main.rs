//! Command-line front end: scenario files in, verdict reports and plot
//! data out.
//!
//! Every subcommand takes `--scenario <file>` and `--out <dir>`, runs one
//! task, and writes `report.json`, `summary.txt`, and one CSV per numeric
//! table into the output directory. The exit code is the verdict: 0 the
//! claim holds (or the extraction succeeded), 1 it fails, 2 a stochastic
//! check was inconclusive at the configured band, 3 the input was
//! rejected. Reports are deterministic: a fixed scenario and seed produce
//! byte-identical output regardless of worker-thread count (wall-clock
//! time is printed to stdout, never stored). The `ESI_LAB_THREADS`
//! environment variable caps worker threads when the scenario's budget
//! does not pin them.

mod report;
mod run;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::report::{emit_plot_data, render_summary, PlotKind};
use crate::scenario::InputError;

#[derive(Parser)]
#[command(
    name = "esi-lab",
    version,
    about = "Certify, compose, convert, and numerically check exponential stochastic inequalities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check one certificate over a slack grid
    Verify(RunArgs),
    /// Extract tail quantiles and the expectation bound from a certificate
    Bounds(RunArgs),
    /// Combine or chain certificates and re-check the result
    Compose(RunArgs),
    /// Round-trip a certified family through its equivalent forms
    Characterize(RunArgs),
    /// Regularity checks: small-ball, second-moment fit, witness, equivalence suite
    Conditions(RunArgs),
    /// Posterior-average combination with a divergence penalty
    Pacbayes(RunArgs),
    /// Random-weight inequalities and their extracted bounds
    RandomEta(RunArgs),
    /// Stopped sums, maximal inequalities, and conditional claims
    Sequential(RunArgs),
}

impl Command {
    fn task_name(&self) -> &'static str {
        match self {
            Command::Verify(_) => "verify",
            Command::Bounds(_) => "bounds",
            Command::Compose(_) => "compose",
            Command::Characterize(_) => "characterize",
            Command::Conditions(_) => "conditions",
            Command::Pacbayes(_) => "pacbayes",
            Command::RandomEta(_) => "random_eta",
            Command::Sequential(_) => "sequential",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Verify(a)
            | Command::Bounds(a)
            | Command::Compose(a)
            | Command::Characterize(a)
            | Command::Conditions(a)
            | Command::Pacbayes(a)
            | Command::RandomEta(a)
            | Command::Sequential(a) => a,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON, schema_version 1)
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for report.json, summary.txt, and CSV tables
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Monte Carlo sample budget
    #[arg(long)]
    samples: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let task = cli.command.task_name();
    match run(task, cli.command.args()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn run(task: &str, args: &RunArgs) -> Result<i32, InputError> {
    let t0 = Instant::now();
    let content = std::fs::read_to_string(&args.scenario)
        .map_err(|e| InputError(format!("scenario file {}: {e}", args.scenario.display())))?;
    let sc = scenario::parse_scenario(&content, task, args.seed, args.samples)?;
    let report = run::run_task(&sc)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| InputError(format!("output directory {}: {e}", args.out.display())))?;
    let mut written = vec!["report.json".to_owned(), "summary.txt".to_owned()];
    write_out(&args.out.join("report.json"), &report.to_json())?;
    write_out(&args.out.join("summary.txt"), &render_summary(&report))?;
    for kind in PlotKind::ALL {
        if let Ok(csv) = emit_plot_data(&report, kind) {
            let name = format!("{}.csv", kind.name());
            write_out(&args.out.join(&name), &csv)?;
            written.push(name);
        }
    }

    println!("{}", report.headline);
    println!("outcome: {} (exit {})", report.outcome.word(), report.exit_code);
    println!(
        "samples: {} Monte Carlo draws; methods: {}",
        report.sample_count,
        if report.methods.is_empty() { "exact".to_owned() } else { report.methods.join(", ") }
    );
    println!("wrote {}: {}", args.out.display(), written.join(", "));
    println!(
        "wall-clock: {:.3}s (stdout only; the report itself is deterministic)",
        t0.elapsed().as_secs_f64()
    );
    Ok(report.exit_code)
}

fn write_out(path: &std::path::Path, content: &str) -> Result<(), InputError> {
    std::fs::write(path, content).map_err(|e| InputError(format!("writing {}: {e}", path.display())))
}
