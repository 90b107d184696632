use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crqkd::error::Error;
use crqkd::harness::{quantized_sample, run_multiuser_round, MetricsReport};
use crqkd::randomness::randomness_tests;
use crqkd::report::{emit_report, Format};
use crqkd::scenario::{Mode, ScenarioConfig};
use crqkd::timing::{sweep, sweep_csv, TimingConfig};

#[derive(Parser)]
#[command(name = "crqkd", version, about = "Quantum key forwarding over channel-reciprocity keys")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and report its metrics.
    Run(RunArgs),
    /// Delay and key-rate model over a grid of group sizes and disagreement rates.
    Sweep(SweepArgs),
    /// Run a multi-user round and list what each pair received.
    Multiuser(RunArgs),
    /// Frequency, block-frequency and runs tests on a scenario's quantized bits.
    TestRandomness(RandomnessArgs),
}

#[derive(Args)]
struct Common {
    /// Preset name (hall, corridor, office) or path to a scenario file.
    #[arg(long, default_value = "hall")]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["table", "csv", "json"], default_value = "table")]
    format: String,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = ["basic", "parallel", "simplified"])]
    mode: Option<String>,
    /// Group size in bits.
    #[arg(long)]
    lg: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Restrict the grid to one group size.
    #[arg(long)]
    lg: Option<usize>,
    /// Frame format of the timing model.
    #[arg(long, value_parser = ["ht-mixed", "non-ht", "scenario"], default_value = "ht-mixed")]
    timing: String,
}

#[derive(Args)]
struct RandomnessArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 3_400_000)]
    bits: usize,
}

enum Failure {
    Config(String),
    Abort(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            other => Failure::Abort(other.to_string()),
        }
    }
}

fn load(c: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(&c.scenario)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_out(c: &Common, text: &str) -> Result<(), Failure> {
    match &c.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display()))),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn configured(a: &RunArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load(&a.common)?;
    if let Some(m) = &a.mode {
        cfg.mode = m.parse::<Mode>()?;
    }
    if let Some(lg) = a.lg {
        cfg.l_g = lg;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(report: &MetricsReport) -> Result<(), Failure> {
    match &report.aborted {
        Some(reason) => Err(Failure::Abort(reason.clone())),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct PairLine {
    pair_id: u16,
    a_id: String,
    b_id: String,
    requested: usize,
    allocated: usize,
    delivered: usize,
    key_bits: usize,
    unified: bool,
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(a) => {
            let cfg = configured(&a)?;
            let report = run_multiuser_round(&cfg)?.report;
            write_out(&a.common, &emit_report(&report, a.common.format.parse()?))?;
            finish(&report)
        }
        Command::Multiuser(a) => {
            let cfg = configured(&a)?;
            let round = run_multiuser_round(&cfg)?;
            let lines: Vec<PairLine> = round
                .pairs
                .iter()
                .map(|p| PairLine {
                    pair_id: p.pair_id,
                    a_id: p.a_id.clone(),
                    b_id: p.b_id.clone(),
                    requested: p.requested,
                    allocated: p.allocated.len(),
                    delivered: p.delivered.len(),
                    key_bits: p.a_key.len(),
                    unified: p.unified(),
                })
                .collect();
            let format: Format = a.common.format.parse()?;
            let text = match format {
                Format::Json => {
                    let v = serde_json::json!({ "report": round.report, "pairs": lines });
                    serde_json::to_string_pretty(&v).expect("serializable") + "\n"
                }
                _ => {
                    let mut t = emit_report(&round.report, format);
                    t.push_str("\npair_id,a,b,requested,allocated,delivered,key_bits,unified\n");
                    for l in &lines {
                        t.push_str(&format!(
                            "{},{},{},{},{},{},{},{}\n",
                            l.pair_id, l.a_id, l.b_id, l.requested, l.allocated, l.delivered, l.key_bits, l.unified
                        ));
                    }
                    t
                }
            };
            write_out(&a.common, &text)?;
            finish(&round.report)
        }
        Command::Sweep(a) => {
            let timing = match a.timing.as_str() {
                "ht-mixed" => TimingConfig::ht_mixed(),
                "non-ht" => TimingConfig::non_ht(),
                _ => load(&a.common)?.timing,
            };
            let l_gs = match a.lg {
                Some(lg) => vec![lg],
                None => vec![128, 256, 512, 1024, 2048],
            };
            let rows = sweep(&timing, &l_gs, &[0.02, 0.05, 0.08, 0.1, 0.12], 1)?;
            let text = match a.common.format.parse::<Format>()? {
                Format::Json => serde_json::to_string_pretty(&rows).expect("serializable") + "\n",
                Format::Csv => sweep_csv(&rows),
                Format::Table => {
                    let mut t = format!(
                        "{:>6} {:>6} {:>12} {:>12} {:>12} {:>9} {:>9} {:>8}\n",
                        "L_G", "eps", "serial/s", "parallel/s", "simpl/s", "par-red", "simp-red", "growth"
                    );
                    for r in &rows {
                        t.push_str(&format!(
                            "{:>6} {:>6.3} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.2}% {:>8.2}% {:>7.2}%\n",
                            r.l_g,
                            r.epsilon,
                            r.serial_s,
                            r.parallel_s,
                            r.simplified_s,
                            100.0 * r.parallel_reduction,
                            100.0 * r.simplified_reduction,
                            100.0 * r.skr_growth
                        ));
                    }
                    t
                }
            };
            write_out(&a.common, &text)
        }
        Command::TestRandomness(a) => {
            let cfg = load(&a.common)?;
            let bits = quantized_sample(&cfg, a.bits)?;
            let v = randomness_tests(&bits.slice(0..a.bits))?;
            let text = match a.common.format.parse::<Format>()? {
                Format::Json => serde_json::to_string_pretty(&v).expect("serializable") + "\n",
                _ => {
                    let mut t = "test,p_value,passed\n".to_string();
                    for r in &v.tests {
                        t.push_str(&format!("{},{:.6},{}\n", r.name, r.p_value, r.passed));
                    }
                    t
                }
            };
            write_out(&a.common, &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Abort(msg)) => {
            eprintln!("aborted: {msg}");
            ExitCode::from(2)
        }
    }
}
