use std::fs;
use std::net::ToSocketAddrs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dynbo::acquisition::AcqKind;
use dynbo::config::{load_config, CONFIG_ENV};
use dynbo::harness::{
    emit_report, load_sequence, run_baseline_tm, run_dop_benchmark, run_eval, write_report_files, DopBenchConfig,
    EvalReport, ReportFormat, SdbtaTracker,
};
use dynbo::par::Exec;
use dynbo::selftest::run_selftests;
use dynbo::similarity::{ExternalOracle, NccOracle, SimilarityOracle, DEFAULT_TIMEOUT};
use dynbo::tracker::{Sampler, TrackerConfig};

#[derive(Parser)]
#[command(name = "dynbo", version, about = "Bayesian-optimization object tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Ncc,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum Acq {
    Ei,
    Pi,
    Msei,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Track a VOT-format sequence and write IOU reports.
    Track {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long, value_enum, default_value = "ncc")]
        oracle: OracleKind,
        /// `host:port` of a scoring service, or a command (optionally
        /// prefixed with `stdio:`) to spawn and talk to over stdio.
        #[arg(long)]
        endpoint: Option<String>,
        /// Per-request timeout for the external oracle, in seconds.
        #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
        timeout: f64,
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Track a synthetic moving peak and write per-frame errors.
    BenchDop {
        #[arg(long, default_value_t = 50)]
        frames: usize,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum, default_value = "msei")]
        acq: Acq,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        /// Fixed per-frame displacement `vx,vy` in unit coordinates.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        velocity: Option<[f64; 2]>,
        /// Per-frame speed along a seeded direction when no velocity is given.
        #[arg(long, default_value_t = 0.02)]
        speed: f64,
        #[arg(long, default_value_t = 0.1)]
        peak_width: f64,
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive NCC template matching over a sequence.
    BaselineTm {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Score candidates on the calling thread only.
        #[arg(long)]
        serial: bool,
    },
    /// Check the GP against a dense reference solver.
    GpSelftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.parse().map_err(|_| format!("bad number '{a}'"))?,
            b.parse().map_err(|_| format!("bad number '{b}'"))?,
        ]),
        _ => Err(format!("expected 'x,y', got '{s}'")),
    }
}

fn tracker_config(path: Option<&Path>) -> Result<TrackerConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(TrackerConfig::default()),
    }
}

fn external_oracle(endpoint: &str, timeout: Duration) -> Result<ExternalOracle> {
    if let Some(cmd) = endpoint.strip_prefix("stdio:") {
        return spawn(cmd, timeout);
    }
    let looks_like_addr =
        !endpoint.contains(char::is_whitespace) && endpoint.to_socket_addrs().is_ok_and(|mut a| a.next().is_some());
    if looks_like_addr {
        ExternalOracle::connect(endpoint, timeout).with_context(|| format!("connecting to {endpoint}"))
    } else {
        spawn(endpoint, timeout)
    }
}

fn spawn(cmd: &str, timeout: Duration) -> Result<ExternalOracle> {
    let mut words = cmd.split_whitespace().map(str::to_string);
    let program = words.next().context("empty endpoint command")?;
    let args: Vec<String> = words.collect();
    ExternalOracle::spawn(&program, &args, timeout).with_context(|| format!("starting '{cmd}'"))
}

fn write_reports(out: &Path, reports: &[EvalReport], format: Format) -> Result<()> {
    let files = emit_report(reports, format.into())?;
    write_report_files(out, &files).with_context(|| format!("writing to {}", out.display()))?;
    for r in reports {
        println!(
            "{} on {}: mean IOU {:.6}, std {:.6}, {} frames, {} oracle calls, {:.2}s",
            r.tracker,
            r.sequence,
            r.mean_iou,
            r.std_iou,
            r.frames(),
            r.oracle_calls,
            r.wall_time.as_secs_f64()
        );
    }
    Ok(())
}

fn finish(report: &EvalReport) -> Result<()> {
    match &report.incomplete {
        Some(why) => bail!("tracking aborted early ({why}); partial report written"),
        None => Ok(()),
    }
}

fn track_with<O: SimilarityOracle>(
    oracle: O,
    cfg: TrackerConfig,
    seq: &Path,
    out: &Path,
    format: Format,
) -> Result<()> {
    let seq = load_sequence(seq).with_context(|| format!("loading {}", seq.display()))?;
    let report = run_eval(&mut SdbtaTracker::new(oracle, cfg), &seq)?;
    write_reports(out, std::slice::from_ref(&report), format)?;
    finish(&report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track {
            seq,
            oracle,
            endpoint,
            timeout,
            config,
            out,
            seed,
            budget,
            format,
        } => {
            let mut cfg = tracker_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(b) = budget {
                cfg.budget_per_frame = b;
            }
            match oracle {
                OracleKind::Ncc => track_with(NccOracle::new(), cfg, &seq, &out, format),
                OracleKind::External => {
                    let endpoint = endpoint.context("--oracle external needs --endpoint")?;
                    if !(timeout.is_finite() && timeout > 0.0) {
                        bail!("--timeout must be positive");
                    }
                    let oracle = external_oracle(&endpoint, Duration::from_secs_f64(timeout))?;
                    track_with(oracle, cfg, &seq, &out, format)
                }
            }
        }
        Command::BenchDop {
            frames,
            budget,
            acq,
            seed,
            noise_sd,
            velocity,
            speed,
            peak_width,
            config,
            out,
        } => {
            let mut tracker = tracker_config(config.as_deref())?;
            if let Some(b) = budget {
                tracker.budget_per_frame = b;
            }
            match acq {
                Acq::Random => tracker.sampler = Sampler::Random,
                kind => {
                    tracker.sampler = Sampler::Acquisition;
                    tracker.acq.kind = match kind {
                        Acq::Ei => AcqKind::Ei,
                        Acq::Pi => AcqKind::Pi,
                        _ => AcqKind::MsEi,
                    };
                }
            }
            tracker.seed = seed;
            let cfg = DopBenchConfig {
                frames,
                noise_sd,
                seed,
                velocity,
                speed,
                peak_width,
                tracker,
                ..Default::default()
            };
            let run = run_dop_benchmark(&cfg)?;
            fs::create_dir_all(&out)?;
            let path = out.join("dop.csv");
            fs::write(&path, run.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            println!(
                "mean error {:.6} ({:.3} grid cells) over {} frames, {} oracle calls",
                run.mean_error(),
                run.mean_error_cells(),
                run.rows.len(),
                run.oracle_calls
            );
            Ok(())
        }
        Command::BaselineTm {
            seq,
            stride,
            out,
            format,
            serial,
        } => {
            let seq = load_sequence(&seq).with_context(|| format!("loading {}", seq.display()))?;
            let exec = if serial { Exec::Serial } else { Exec::default() };
            let report = run_baseline_tm(&seq, stride, exec)?;
            write_reports(&out, std::slice::from_ref(&report), format)?;
            finish(&report)
        }
        Command::GpSelftest { seed } => {
            let outcomes = run_selftests(seed)?;
            for o in &outcomes {
                println!("{o}");
            }
            if outcomes.iter().all(|o| o.passed()) {
                Ok(())
            } else {
                bail!("GP self-test failed")
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs() {
        assert_eq!(parse_pair("0.01, -0.02"), Ok([0.01, -0.02]));
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("1,x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
