use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use strongmin::certify::{classify, ClassifyMode, ClassifyOptions, ProblemInstance};
use strongmin::cvxsolvers::{solve_nuclear_affine, SolverConfig};
use strongmin::harness::{
    demo_lrr, demo_minimal, run_experiment, run_fixtures, summary_json, thread_count, to_csv,
    Ensemble, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "strongmin", version, about = "Sharp and strong minima certificates for nuclear-norm minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Certify,
    Experiment,
}

#[derive(Subcommand)]
enum Command {
    /// Classify an instance and print the report as JSON.
    Certify {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "certify")]
        mode: Mode,
        /// Also try blended certificates when the strong test fails.
        #[arg(long)]
        retry: bool,
    },
    /// Solve min ‖X‖_* subject to Φ(X) = M₀ and print the solution.
    Solve { instance: PathBuf },
    /// Gaussian-measurement sweep; writes CSV and a summary JSON.
    Exp1 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Matrix-completion sweep; writes CSV and a summary JSON.
    Exp2 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// r(r+1)/2 measurements suffice for strong recovery.
    DemoMinimal {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Low-rank representation systems have a unique strong solution L†M₀.
    DemoLrr {
        #[arg(long, default_value_t = 2)]
        q: usize,
        #[arg(long, default_value_t = 4)]
        n1: usize,
        #[arg(long, default_value_t = 3)]
        n2: usize,
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the three small fixed instances and print PASS/FAIL lines.
    Fixtures,
}

/// Exit 1: a check ran and failed. Exit 2: input, configuration or I/O error.
enum Failure {
    Check(String),
    Input(String),
}

impl From<strongmin::Error> for Failure {
    fn from(e: strongmin::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn sweep(ensemble: Ensemble, config: &Path, out: Option<PathBuf>, threads: Option<usize>) -> Result<(), Failure> {
    let mut raw = read_json(config)?;
    if let Some(obj) = raw.as_object_mut() {
        obj.entry("ensemble").or_insert(json!(ensemble));
    }
    let mut cfg = ExperimentConfig::from_json(&raw)?;
    if cfg.ensemble != ensemble {
        eprintln!("note: config ensemble overridden by the subcommand");
        cfg.ensemble = ensemble;
    }
    let rows = run_experiment(&cfg, threads.unwrap_or_else(thread_count))?;
    let csv = to_csv(&rows);
    let summary = summary_json(&cfg, &rows);
    let target = out.or_else(|| (!cfg.output_path.is_empty()).then(|| PathBuf::from(&cfg.output_path)));
    match target {
        Some(path) => {
            let io = |e: std::io::Error| Failure::Input(format!("{}: {e}", path.display()));
            fs::write(&path, csv).map_err(io)?;
            let summary_path = path.with_extension("summary.json");
            fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("serializable"))
                .map_err(|e| Failure::Input(format!("{}: {e}", summary_path.display())))?;
            eprintln!("wrote {} rows to {} and {}", rows.len(), path.display(), summary_path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Certify { instance, mode, retry } => {
            let inst = ProblemInstance::from_json(&read_json(&instance)?)?;
            let opts = ClassifyOptions {
                mode: match mode {
                    Mode::Certify => ClassifyMode::Certify,
                    Mode::Experiment => ClassifyMode::Experiment,
                },
                retry,
                ..ClassifyOptions::default()
            };
            print_json(&classify(&inst, &opts)?.to_json());
        }
        Command::Solve { instance } => {
            let inst = ProblemInstance::from_json(&read_json(&instance)?)?;
            let res = solve_nuclear_affine(&inst.op, &inst.m0, &SolverConfig::default())?;
            print_json(&json!({
                "x_opt": res.x_opt.to_rows(),
                "objective": res.objective,
                "lower_bound": res.lower_bound,
                "relative_gap": res.dual_residual,
                "primal_residual": res.primal_residual,
                "iterations": res.iterations,
                "converged": res.converged,
            }));
        }
        Command::Exp1 { config, out, threads } => sweep(Ensemble::Gaussian, &config, out, threads)?,
        Command::Exp2 { config, out, threads } => sweep(Ensemble::Completion, &config, out, threads)?,
        Command::DemoMinimal { n, r, seed } => {
            let d = demo_minimal(n, r, seed)?;
            print_json(&serde_json::to_value(&d).expect("serializable"));
            if !d.passed {
                return Err(Failure::Check(format!(
                    "minimal demo failed: recovered={} strong={} dropped_strict_ri={}",
                    d.recovered, d.strong, d.dropped_strict_ri
                )));
            }
        }
        Command::DemoLrr { q, n1, n2, r, seed } => {
            let d = demo_lrr(q, n1, n2, r, seed)?;
            print_json(&serde_json::to_value(&d).expect("serializable"));
            if !d.passed {
                return Err(Failure::Check(format!(
                    "low-rank representation demo failed: error={:.2e} strong={} oracle_sharp={:?}",
                    d.solution_error, d.strong, d.oracle_sharp
                )));
            }
        }
        Command::Fixtures => {
            let outcomes = run_fixtures()?;
            for f in &outcomes {
                println!("{} {}: {}", if f.passed { "PASS" } else { "FAIL" }, f.name, f.detail);
            }
            let failed = outcomes.iter().filter(|f| !f.passed).count();
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} fixture(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
