use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mongeamp::harness::{run_scenario, selftest, sweep, write_outputs, HarnessError, RunOptions, Scenario, ScenarioResult};

#[derive(Parser, Debug)]
#[command(name = "mongeamp", version, about = "Monge-Ampere perturbation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel cells.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Replace the scenario seeds by this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative mass tolerance of the solver.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario file.
    Run { scenario: PathBuf },
    /// Run every scenario file in a directory.
    Sweep { dir: PathBuf },
    /// Re-emit stored results after checking their invariants.
    Report {
        /// A results.json file or a directory holding one.
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run the built-in consistency checks.
    Selftest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Assertion(String),
    Input(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_invalid_input() {
            Failure::Input(e.to_string())
        } else {
            Failure::Assertion(e.to_string())
        }
    }
}

fn load_scenario(path: &Path, opts: &RunOptions) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let s = Scenario::from_json(&text)?;
    Ok(opts.apply(&s)?)
}

fn load_results(path: &Path) -> Result<ScenarioResult, Failure> {
    let file = if path.is_dir() { path.join("results.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| Failure::Input(format!("{}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", file.display())))
}

fn summarize(r: &ScenarioResult) {
    println!(
        "{}: {} records, {} reports, {} gap rows, {} obstacle rows",
        r.name,
        r.records.len(),
        r.reports.len(),
        r.gaps.len(),
        r.obstacles.len()
    );
    if let Some(f) = &r.fit {
        println!("  rate fit: exponent {:.4}, log correction {}", f.exponent, f.log_correction);
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let opts = RunOptions { seed: cli.seed, mass_tol: cli.tol };
    match &cli.command {
        Command::Run { scenario } => {
            let s = load_scenario(scenario, &opts)?;
            let r = run_scenario(&s)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("results").join(&s.name));
            write_outputs(&r, &dir)?;
            summarize(&r);
            println!("  written to {}", dir.display());
        }
        Command::Sweep { dir } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            for r in sweep(dir, &out, &opts)? {
                summarize(&r);
            }
            println!("written to {}", out.display());
        }
        Command::Report { results, format } => {
            let r = load_results(results)?;
            for sr in &r.reports {
                if let Some(diff) = sr.report.violation() {
                    return Err(Failure::Assertion(format!("{} seed={} y={}: {diff}", r.name, sr.seed, sr.report.y)));
                }
            }
            let files: Vec<(&str, String)> = r
                .files()
                .into_iter()
                .filter(|(name, body)| match format {
                    Format::Csv => name.ends_with(".csv") && body.lines().count() > 1,
                    Format::Json => name.ends_with(".json"),
                })
                .collect();
            match &cli.out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
                    for (name, body) in &files {
                        let p = dir.join(name);
                        fs::write(&p, body).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
                    }
                }
                None => {
                    let bodies: Vec<&str> = files.iter().map(|(_, b)| b.as_str()).collect();
                    print!("{}", bodies.join("\n"));
                }
            }
        }
        Command::Selftest => {
            let cases = selftest();
            let failed = cases.iter().filter(|c| !c.passed).count();
            for c in &cases {
                if c.passed {
                    println!("ok    {}", c.name);
                } else {
                    println!("FAIL  {}: {}", c.name, c.detail);
                }
            }
            if failed > 0 {
                return Err(Failure::Assertion(format!("{failed} of {} checks failed", cases.len())));
            }
            println!("{} checks passed", cases.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
