use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use morpheus_core::codec::encode_message;
use morpheus_harness::checks::{check_all, CheckReport, LivenessPolicy};
use morpheus_harness::metrics::measure;
use morpheus_harness::scenario::{load_scenario, SWEEP_VIEWS};
use morpheus_harness::sweep::{sweep, table};
use morpheus_harness::{dag, fixtures, HarnessError};
use morpheus_sim::{run, Strategy, Trace};

#[derive(Parser)]
#[command(name = "morpheus", about = "Simulate Morpheus deployments and check their traces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Jsonl,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario, write its trace and metrics, and check it.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run every checker on a stored trace.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Adversarial matrix over committee sizes, strategies and seeds.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "4,7,10")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Write the hand-built ordering DAGs and a corrupted trace.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every check passed.
fn dispatch(cli: Cli) -> Result<bool, HarnessError> {
    match cli.cmd {
        Cmd::Run { config, seed, out, format } => {
            let (mut cfg, paths) = load_scenario(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let trace = run(&cfg)?;
            fs::create_dir_all(&out)?;
            let trace_path = paths.trace.unwrap_or_else(|| out.join("trace.trc"));
            let metrics_path = paths.metrics.unwrap_or_else(|| out.join("metrics.json"));
            ensure_parent(&trace_path)?;
            ensure_parent(&metrics_path)?;
            trace.write_to(std::io::BufWriter::new(fs::File::create(&trace_path)?))?;
            let metrics = measure(&trace);
            fs::write(&metrics_path, serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?;
            let report = check(&trace);
            print_report(&report, format);
            println!("trace: {}\nmetrics: {}", trace_path.display(), metrics_path.display());
            Ok(!report.failed())
        }
        Cmd::Check { trace, format } => {
            let trace = Trace::read_from(BufReader::new(fs::File::open(trace)?))?;
            let report = check(&trace);
            print_report(&report, format);
            Ok(!report.failed())
        }
        Cmd::Sweep { n, seeds, strategies, format } => {
            let strategies = if strategies.is_empty() { Strategy::ALL.to_vec() } else { strategies };
            let results = sweep(&n, &strategies, seeds);
            match format {
                Format::Table => print!("{}", table(&results)),
                Format::Jsonl => {
                    for r in &results {
                        println!("{}", serde_json::to_string(r).expect("serialize"));
                    }
                }
            }
            Ok(results.iter().all(|r| !r.report.failed()))
        }
        Cmd::Fixtures { out } => {
            fs::create_dir_all(&out)?;
            for (name, msgs, log) in dag::fixtures() {
                let mut text = String::new();
                for m in &msgs {
                    text.push_str(&hex::encode(encode_message(m)));
                    text.push('\n');
                }
                let log: Vec<String> = log.iter().map(|(p, s)| format!("{p}:{s}")).collect();
                text.push_str(&format!("# log {}\n", log.join(",")));
                fs::write(out.join(format!("dag-{name}.txt")), text)?;
            }
            let mut cfg = morpheus_harness::scenario::low_throughput(4, 5, 1, 10, 4);
            cfg.horizon += 200;
            let trace = run(&cfg)?;
            let bad = fixtures::inject_conflict(&trace, morpheus_core::ProcessId(2), cfg.horizon - 100);
            trace.write_to(fs::File::create(out.join("clean.trc"))?)?;
            bad.write_to(fs::File::create(out.join("corrupted.trc"))?)?;
            println!("wrote fixtures to {}", out.display());
            Ok(true)
        }
    }
}

fn ensure_parent(p: &Path) -> std::io::Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => fs::create_dir_all(d),
        _ => Ok(()),
    }
}

fn check(trace: &Trace) -> CheckReport {
    check_all(trace, LivenessPolicy::views(SWEEP_VIEWS, trace.config.delta_bound))
}

fn print_report(r: &CheckReport, format: Format) {
    match format {
        Format::Table => {
            for (name, o) in [
                ("consistency", &r.consistency),
                ("liveness", &r.liveness),
                ("qc-unique", &r.qc_uniqueness),
                ("quiescence", &r.quiescence),
                ("tip-bound", &r.tip_bound),
            ] {
                println!("{name:<12} {o}");
            }
        }
        Format::Jsonl => println!("{}", serde_json::to_string(r).expect("serialize")),
    }
}
