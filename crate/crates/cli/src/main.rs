use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use nandret::harness::experiments::{self, Experiment};
use nandret::harness::trace::{self, GapModel, TraceSpec};
use nandret::{Device, DeviceConfig};

/// NAND flash retention simulator.
#[derive(Debug, Parser)]
#[command(name = "nandret", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one of the canonical experiments and write its CSV.
    Run {
        /// dist-sweep, opt-vs-age, cross-opt-rber, ror-eval or rfr-eval.
        experiment: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "dump_config")]
        out: Option<PathBuf>,
        /// Overrides `channel.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the effective configuration to stdout.
        #[arg(long)]
        dump_config: bool,
        /// Worker threads; output does not depend on this.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Replay a trace and write the per-block retention-age histogram.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Take the histogram at this time instead of the last record.
        #[arg(long)]
        at: Option<f64>,
        /// Also save the final device snapshot here.
        #[arg(long)]
        device: Option<PathBuf>,
    },
    /// Build a device (optionally replaying a trace) and save its snapshot.
    Snapshot {
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Load a snapshot, check it, and print its summary; `--out` re-saves it.
    Restore {
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trace.
    GenTrace {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        blocks: usize,
        #[arg(long, default_value_t = 128)]
        pages: usize,
        #[arg(long, default_value_t = 28.0)]
        span_days: f64,
        #[arg(long, value_enum, default_value_t = Gaps::Uniform)]
        gaps: Gaps,
        /// Mean inter-program gap for `--gaps exponential`.
        #[arg(long, default_value_t = 0.5)]
        mean_gap_days: f64,
        #[arg(long, default_value_t = 0)]
        reads: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Gaps {
    Uniform,
    Exponential,
}

fn load_config(path: Option<&Path>) -> Result<DeviceConfig> {
    match path {
        None => Ok(DeviceConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            Ok(DeviceConfig::parse(&text).with_context(|| format!("in {}", p.display()))?)
        }
    }
}

fn replay_file(device: &mut Device, path: &Path, at: Option<f64>) -> Result<trace::ReplayReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading trace {}", path.display()))?;
    let records = trace::parse_trace(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(trace::replay(device, &records, at)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { experiment, config, out, seed, dump_config, threads } => {
            let exp = Experiment::parse(&experiment)?;
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.channel.seed = s;
            }
            cfg.validate()?;
            if dump_config {
                print!("{}", cfg.dump());
            }
            let Some(out) = out else { return Ok(()) };
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            }
            for p in experiments::run_experiment(exp, &cfg, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Replay { trace, config, out, at, device } => {
            let mut dev = Device::new(load_config(config.as_deref())?)?;
            let rep = replay_file(&mut dev, &trace, at)?;
            rep.write_histogram(fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?)?;
            eprintln!(
                "replayed to day {}: {} programs, {} reads ({} failed, {} skipped), {} retries",
                rep.end_time, rep.programs, rep.reads, rep.failed_reads, rep.skipped_reads, rep.retries
            );
            if let Some(d) = device {
                dev.save(&d)?;
            }
        }
        Command::Snapshot { device, config, trace } => {
            let mut dev = Device::new(load_config(config.as_deref())?)?;
            if let Some(t) = trace {
                replay_file(&mut dev, &t, None)?;
            }
            dev.save(&device)?;
            eprintln!("saved {}", device.display());
        }
        Command::Restore { device, out } => {
            let dev = Device::load(&device).with_context(|| format!("restoring {}", device.display()))?;
            let s = dev.stats();
            let programmed = dev.blocks().iter().filter(|b| b.is_programmed()).count();
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "clock_days,{}", dev.clock())?;
            writeln!(stdout, "blocks,{}", dev.blocks().len())?;
            writeln!(stdout, "programmed_blocks,{programmed}")?;
            writeln!(stdout, "table_entries,{}", dev.table().entries().iter().flatten().count())?;
            writeln!(stdout, "programs,{}", s.programs)?;
            writeln!(stdout, "reads,{}", s.reads)?;
            writeln!(stdout, "skipped_reads,{}", s.skipped_reads)?;
            if let Some(o) = out {
                dev.save(&o)?;
            }
        }
        Command::GenTrace { out, blocks, pages, span_days, gaps, mean_gap_days, reads, seed } => {
            let gaps = match gaps {
                Gaps::Uniform => GapModel::Uniform,
                Gaps::Exponential => GapModel::Exponential { mean_days: mean_gap_days },
            };
            if pages == 0 {
                bail!("--pages must be at least 1");
            }
            let records = trace::generate(&TraceSpec { blocks, pages_per_block: pages, span_days, gaps, reads, seed })?;
            trace::write_trace(&records, fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<nandret::Error>() {
        Some(nandret::Error::ConfigParse { .. } | nandret::Error::TraceParse { .. }) => 2,
        _ => 1,
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
