use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use addnet_core::protocols::extremum::Extreme;
use addnet_core::sim::Duplex;
use addnet_harness::experiment::{run_trial, ProtocolKind, TrialOutcome, TrialSpec};
use addnet_harness::sweep::{self, ExperimentSpec, TrialStats};
use addnet_harness::topology::{gen_topology, TopologySpec};
use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Simulate protocols on additive (XOR) radio networks.
///
/// ADDNET_LOG=off|info|trace sets verbosity; `trace` also records the full
/// per-round transcript of `run`.
#[derive(Parser)]
#[command(name = "addnet", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one protocol once and print the result as JSON.
    Run(RunArgs),
    /// Run an experiment spec (JSON file) and write CSV and JSON summaries.
    Sweep(SweepArgs),
    /// Replay a run twice, compare transcripts, and check it against the oracle.
    Verify(RunArgs),
    /// Generate a topology and write it as JSON.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DuplexArg {
    Full,
    Half,
}

impl From<DuplexArg> for Duplex {
    fn from(d: DuplexArg) -> Duplex {
        match d {
            DuplexArg::Full => Duplex::Full,
            DuplexArg::Half => Duplex::Half,
        }
    }
}

#[derive(Args)]
struct TopoArgs {
    /// clique, path, star, tree, gnp[:P], grid or grid:RxC.
    #[arg(long)]
    topology: String,
    #[arg(long)]
    n: Option<usize>,
}

impl TopoArgs {
    fn spec(&self) -> anyhow::Result<TopologySpec> {
        Ok(TopologySpec::parse(&self.topology, self.n)?)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolKind,
    #[command(flatten)]
    topo: TopoArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Parameter override, e.g. --params bic_c=6 (repeatable).
    #[arg(long = "params", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long, value_enum, default_value = "full")]
    duplex: DuplexArg,
    #[arg(long)]
    max_rounds: Option<u64>,
    /// Extremum radius.
    #[arg(long, default_value_t = 2)]
    radius: u32,
    /// Extremum mode.
    #[arg(long, value_enum, default_value = "max")]
    mode: ModeArg,
    /// Directory for run.json, run.csv and (when tracing) transcript.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Min,
    Max,
}

#[derive(Args)]
struct SweepArgs {
    /// ExperimentSpec as JSON.
    spec: PathBuf,
    /// Overrides the spec's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the spec's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix; overrides the spec's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run trials one at a time.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    topo: TopoArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pairs(raw: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| match s.split_once('=') {
            Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
            None => bail!("--params expects KEY=VALUE, got {s:?}"),
        })
        .collect()
}

impl RunArgs {
    fn trial(&self) -> anyhow::Result<TrialSpec> {
        let mut t = TrialSpec::new(self.protocol, self.topo.spec()?, self.seed);
        t.params = parse_pairs(&self.params)?;
        t.duplex = self.duplex.into();
        t.max_rounds = self.max_rounds;
        t.radius = self.radius;
        t.mode = match self.mode {
            ModeArg::Min => Extreme::Min,
            ModeArg::Max => Extreme::Max,
        };
        Ok(t)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum LogLevel {
    Off,
    Info,
    Trace,
}

fn init_logging() -> anyhow::Result<LogLevel> {
    let level = match std::env::var("ADDNET_LOG").as_deref() {
        Err(_) | Ok("") | Ok("off") => LogLevel::Off,
        Ok("info") => LogLevel::Info,
        Ok("trace") => LogLevel::Trace,
        Ok(other) => bail!("ADDNET_LOG must be off, info or trace, not {other:?}"),
    };
    let filter = match level {
        LogLevel::Off => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Trace => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(filter).init();
    Ok(level)
}

fn run_json(spec: &TrialSpec, out: &TrialOutcome) -> serde_json::Value {
    json!({
        "spec": spec,
        "outcome": out,
    })
}

fn cmd_run(args: &RunArgs, level: LogLevel) -> anyhow::Result<ExitCode> {
    let spec = args.trial()?;
    let tracing = level == LogLevel::Trace;
    let out = run_trial(&spec, tracing)?;
    log::info!(
        "{} on {}: {} rounds, pass = {}",
        spec.protocol,
        out.topology,
        out.meta.rounds,
        out.report.pass
    );
    let text = serde_json::to_string_pretty(&run_json(&spec, &out))?;
    match &args.out {
        None => writeln!(io::stdout().lock(), "{text}")?,
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("run.json"), format!("{text}\n"))?;
            sweep::write_csv(&[TrialStats::from_outcome(&spec, 0, &out)], fs::File::create(dir.join("run.csv"))?)?;
            if let Some(t) = &out.transcript {
                let f = io::BufWriter::new(fs::File::create(dir.join("transcript.jsonl"))?);
                t.write_jsonl(f)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &RunArgs) -> anyhow::Result<ExitCode> {
    let spec = args.trial()?;
    let a = run_trial(&spec, true)?;
    let b = run_trial(&spec, true)?;
    let mut ja = Vec::new();
    let mut jb = Vec::new();
    a.transcript.as_ref().expect("traced").write_jsonl(&mut ja)?;
    b.transcript.as_ref().expect("traced").write_jsonl(&mut jb)?;
    let replay_ok = a.meta.digest == b.meta.digest && ja == jb;
    let ok = replay_ok && a.report.pass;
    writeln!(
        io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(&json!({
            "protocol": spec.protocol,
            "topology": a.topology,
            "seed": spec.seed,
            "digest": a.meta.digest,
            "replay_identical": replay_ok,
            "oracle": a.report,
            "pass": ok,
        }))?
    )?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text).context("parsing the experiment spec")?;
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(o) = &args.out {
        spec.out = Some(o.clone());
    }
    let res = sweep::run_sweep(&spec, !args.serial);
    match &spec.out {
        Some(prefix) => sweep::write_outputs(&res, prefix)?,
        None => {
            let stdout = io::stdout();
            sweep::write_csv(&res.rows, stdout.lock())?;
        }
    }
    eprintln!("{}", serde_json::to_string_pretty(&res.summary)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(args: &GenArgs) -> anyhow::Result<ExitCode> {
    let topo = gen_topology(&args.topo.spec()?, args.seed)?;
    let text = serde_json::to_string_pretty(&topo.to_file())?;
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => {
            let mut o = io::stdout().lock();
            writeln!(o, "{text}")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_file(p: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_logging().and_then(|level| match &cli.cmd {
        Cmd::Run(a) => cmd_run(a, level),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Gen(a) => cmd_gen(a),
    });
    match result {
        Ok(code) => code,
        // A closed pipe (`addnet run ... | head`) is not an error.
        Err(e) if e.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
