//! Command-line front end: run / compare / analyze / gen / convert.
//!
//! Exit codes: 0 success, 1 input error, 2 internal invariant failure.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cbp_sim::config::{config_keys_help, RunConfig};
use cbp_sim::engine::{self, EngineError};
use cbp_sim::oracle::{self, AnalysisCache, BreakdownMode};
use cbp_sim::trace::{self, AccessRecord};

#[derive(Parser)]
#[command(
    name = "cbp-sim",
    about = "Two-level cache hierarchy simulator with reuse-distance copy-back prediction",
    after_help = config_keys_help()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration over a trace and write the report CSV.
    Run {
        /// Config file (key = value); defaults used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Native-format trace file.
        #[arg(long)]
        trace: PathBuf,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run two or more configurations on one trace and tabulate the deltas.
    Compare {
        /// Config files; the first is the baseline column.
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Offline reuse-distance analysis: dead-line breakdown and histogram.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Reuse distances above this are dead.
        #[arg(long, default_value_t = oracle::DEFAULT_DEAD_THRESHOLD)]
        dead_threshold: u64,
        /// Which L1 stream to analyze.
        #[arg(long, default_value = "d", value_parser = ["i", "d"])]
        cache: String,
        /// Classify whole blocks instead of individual visits.
        #[arg(long)]
        per_block: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a synthetic trace in the native format.
    Gen {
        /// Config file supplying gen.* keys and the seed.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model overrides, e.g. --model dead_fraction=0.36
        #[arg(long, value_name = "KEY=VALUE")]
        model: Vec<String>,
        /// Number of accesses.
        #[arg(long)]
        len: u64,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a Valgrind Lackey-style trace (I/L/S/M lines) to the native format.
    Convert {
        #[arg(long, value_name = "LACKEY_TRACE")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in config file {}", p.display()))
        }
    }
}

fn load_trace(path: &Path) -> Result<Vec<AccessRecord>> {
    let file =
        File::open(path).with_context(|| format!("cannot open trace file {}", path.display()))?;
    let mut records = Vec::new();
    for rec in trace::parse(BufReader::new(file)) {
        records.push(rec.with_context(|| format!("in trace file {}", path.display()))?);
    }
    Ok(records)
}

fn write_output(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(p) => std::fs::write(p, content)
            .with_context(|| format!("cannot write output file {}", p.display())),
    }
}

fn label_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Run { config, trace, out } => {
            let cfg = load_config(config.as_deref())?;
            let records = load_trace(&trace)?;
            let report = engine::run(records.into_iter().map(Ok), &cfg.sim)?;
            if report.empty_trace {
                eprintln!("warning: empty trace, IPC reported as 0");
            }
            write_output(out.as_deref(), &report.to_csv())
        }
        Command::Compare { config, trace, out } => {
            let records = load_trace(&trace)?;
            let mut configs = Vec::new();
            for path in &config {
                configs.push((label_for(path), load_config(Some(path))?.sim));
            }
            let table = engine::compare(&records, &configs)?;
            write_output(out.as_deref(), &table.to_csv())
        }
        Command::Analyze {
            trace,
            config,
            dead_threshold,
            cache,
            per_block,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let records = load_trace(&trace)?;
            let (geom, which) = match cache.as_str() {
                "i" => (cfg.sim.l1i, AnalysisCache::ICache),
                _ => (cfg.sim.l1d, AnalysisCache::DCache),
            };
            let reuse = oracle::miss_based_reuse(&records, geom, which);
            let mode = if per_block {
                BreakdownMode::PerBlock
            } else {
                BreakdownMode::Visits
            };
            let breakdown = oracle::dead_breakdown(&reuse, dead_threshold, mode)?;
            let mut csv = String::from("metric,value\n");
            csv.push_str(&format!(
                "reused_fraction,{}\n",
                engine::format_sig(breakdown.reused_fraction)
            ));
            csv.push_str(&format!(
                "dead_fraction,{}\n",
                engine::format_sig(breakdown.dead_fraction)
            ));
            csv.push_str(&format!("dead_threshold,{}\n", breakdown.threshold));
            csv.push('\n');
            csv.push_str("distance_bucket,count\n");
            for (bucket, count) in oracle::distance_histogram(&reuse) {
                csv.push_str(&format!("{bucket},{count}\n"));
            }
            write_output(out.as_deref(), &csv)
        }
        Command::Gen {
            config,
            model,
            len,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut gen = cfg.gen;
            if let Some(seed) = seed {
                gen.seed = seed;
            }
            for item in &model {
                let (key, value) = item
                    .split_once('=')
                    .with_context(|| format!("bad --model item {item:?}, expected key=value"))?;
                apply_model_override(&mut gen, key.trim(), value.trim())?;
            }
            let records = trace::generate(&gen, len)?;
            let mut file = File::create(&out)
                .with_context(|| format!("cannot create output file {}", out.display()))?;
            for r in &records {
                writeln!(file, "{}", trace::render(r))?;
            }
            Ok(())
        }
        Command::Convert { input, out } => {
            let file = File::open(&input)
                .with_context(|| format!("cannot open input file {}", input.display()))?;
            let mut writer = File::create(&out)
                .with_context(|| format!("cannot create output file {}", out.display()))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                for r in trace::convert_lackey_line(&line, i + 1)? {
                    writeln!(writer, "{}", trace::render(&r))?;
                }
            }
            Ok(())
        }
    }
}

fn apply_model_override(
    gen: &mut cbp_sim::trace::GeneratorModel,
    key: &str,
    value: &str,
) -> Result<()> {
    match key {
        "num_blocks" => gen.num_blocks = value.parse()?,
        "hot_fraction" => gen.hot_fraction = value.parse()?,
        "hot_weight" => gen.hot_weight = value.parse()?,
        "dead_fraction" => gen.dead_fraction = value.parse()?,
        "write_ratio" => gen.write_ratio = value.parse()?,
        "instr_ratio" => gen.instr_ratio = value.parse()?,
        "seed" => gen.seed = value.parse()?,
        _ => bail!("unknown model key {key:?}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let internal = err
                .downcast_ref::<EngineError>()
                .is_some_and(|e| matches!(e, EngineError::Internal(_)));
            if internal {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
