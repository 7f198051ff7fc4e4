//! Argument parsing and subcommand dispatch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use redsim_core::analysis::{fairness_required_p, goodput_bound, GoodputModel};
use redsim_core::simkernel::RandomStream;
use redsim_core::RedVariant;

use crate::execute::{execute, run_artifacts, write_artifacts};
use crate::oracle::{self, DEFAULT_PBS, DEFAULT_SIZES, DEFAULT_VARIANTS};
use crate::scenario_file::{parse_scenario, ScenarioFile};
use crate::sweep::{self, DEFAULT_DELAYS_MS};
use crate::VERSION_STRING;

pub const OUTPUT_ENV: &str = "REDSIM_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "redsim-out";

#[derive(Debug, Parser)]
#[command(name = "redsim", about = "Packet-size-aware RED simulator", disable_version_flag = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write metrics, summary and manifest.
    Run(RunArgs),
    /// Run a variant x delay grid and write a combined report.
    Sweep(SweepArgs),
    /// Check the closed-form inter-drop laws against exact and sampled oracles.
    Oracle(OracleArgs),
    /// Evaluate the square-root goodput bound and the MSS fairness condition.
    GoodputModel(GoodputArgs),
    /// Print the tool version.
    Version,
}

#[derive(Debug, Args)]
pub struct OutputArg {
    /// Output directory. Falls back to the scenario's [output] directory,
    /// then to `redsim-out`.
    #[arg(long, short, env = OUTPUT_ENV)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<RedVariant>,
    /// Record the queue trace even if the scenario does not ask for it.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub scenario: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = RedVariant::ALL.to_vec())]
    pub variants: Vec<RedVariant>,
    /// Bottleneck one-way delays in milliseconds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DELAYS_MS.to_vec())]
    pub delays_ms: Vec<u32>,
    /// Base seed; each cell adds a hash of its label.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Run cells one after another on the calling thread.
    #[arg(long)]
    pub serial: bool,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_VARIANTS.to_vec())]
    pub variant: Vec<RedVariant>,
    #[arg(long = "pb", value_delimiter = ',', default_values_t = DEFAULT_PBS.to_vec())]
    pub pbs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES.to_vec())]
    pub sizes: Vec<u32>,
    #[arg(long = "max-packet", default_value_t = 1500)]
    pub max_packet: u32,
    /// Monte-Carlo draws per case; 0 skips the stage.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory for per-case comparison CSVs.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GoodputArgs {
    /// Segment size in bytes.
    #[arg(long, allow_negative_numbers = true)]
    pub mss: Option<f64>,
    /// Round-trip time in seconds.
    #[arg(long, allow_negative_numbers = true)]
    pub rtt: Option<f64>,
    /// Drop probability.
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long = "C", default_value_t = 1.0, allow_negative_numbers = true)]
    pub c: f64,
    /// MSS pair `a:b`; prints the drop probability b needs to match a.
    #[arg(long)]
    pub fair: Option<String>,
    /// Drop probability seen by the first MSS of `--fair`.
    #[arg(long, allow_negative_numbers = true)]
    pub p1: Option<f64>,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_scenario(&text, &stem).map_err(|e| anyhow!("{}:{}: {}", path.display(), e.line, e.message))
}

fn output_dir(flag: &OutputArg, file: &ScenarioFile) -> PathBuf {
    flag.output
        .clone()
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut file = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        file.scenario.seed = seed;
    }
    if let Some(v) = args.variant {
        file.scenario.variant = v;
    }
    if args.trace && file.scenario.trace_interval.is_none() {
        file.scenario.trace_interval = Some(crate::scenario_file::DEFAULT_TRACE_INTERVAL);
    }
    file.scenario.validate()?;
    let dir = output_dir(&args.out, &file);
    let outcome = execute(&file)?;
    let files = run_artifacts(&file, &outcome);
    write_artifacts(&dir, &files).with_context(|| format!("writing to {}", dir.display()))?;
    print!("{}", files.iter().find(|(n, _)| n == crate::execute::SUMMARY_TXT).map_or("", |(_, t)| t));
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut base = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        base.scenario.seed = seed;
    }
    if args.variants.is_empty() || args.delays_ms.is_empty() {
        bail!("the grid needs at least one variant and one delay");
    }
    let dir = output_dir(&args.out, &base);
    let cells = sweep::plan(&base, &args.variants, &args.delays_ms);
    for c in &cells {
        c.scenario.validate().with_context(|| format!("cell {}", c.id))?;
    }
    let outcomes = if args.serial {
        sweep::run_cells(&cells, false)
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
        pool.install(|| sweep::run_cells(&cells, true))
    };
    if outcomes.iter().any(Result::is_err) {
        let files = sweep::partial_artifacts(&cells, &outcomes);
        write_artifacts(&dir, &files)?;
        let failed: Vec<String> = cells
            .iter()
            .zip(&outcomes)
            .filter_map(|(c, o)| o.as_ref().err().map(|e| format!("{}: {e}", c.id)))
            .collect();
        bail!(
            "sweep aborted; partial results in {}: {}",
            dir.join(sweep::PARTIAL_NOTE).display(),
            failed.join("; ")
        );
    }
    let outcomes: Vec<_> = outcomes.into_iter().map(|o| o.expect("checked")).collect();
    let files = sweep::sweep_artifacts(&base, &cells, &outcomes);
    write_artifacts(&dir, &files).with_context(|| format!("writing to {}", dir.display()))?;
    print!("{}", files.iter().find(|(n, _)| n == crate::execute::SUMMARY_TXT).map_or("", |(_, t)| t));
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

/// Returns whether every case passed.
fn cmd_oracle(args: OracleArgs) -> Result<bool> {
    let cases = oracle::cases(&args.variant, &args.pbs, &args.sizes, args.max_packet)?;
    let mut all_ok = true;
    let mut files = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let mut stream = RandomStream::substream(args.seed, i as u64);
        let report = oracle::run_case(case, args.samples, &mut stream)?;
        println!("{}", report.line());
        all_ok &= report.passed();
        files.push((report.csv_name(), report.csv));
    }
    if let Some(dir) = &args.csv {
        write_artifacts(dir, &files).with_context(|| format!("writing to {}", dir.display()))?;
    }
    println!("{}", if all_ok { "all cases within tolerance" } else { "tolerance breached" });
    Ok(all_ok)
}

fn parse_fair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("--fair expects a:b, got {s:?}"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn cmd_goodput(args: GoodputArgs) -> Result<()> {
    let mut did = false;
    match (args.mss, args.rtt, args.p) {
        (Some(mss), Some(rtt), Some(p)) => {
            let bound = goodput_bound(&GoodputModel { c: args.c, mss, rtt, p })?;
            println!("goodput_bound = {bound:.3} bytes/s ({:.6} Mbit/s)", bound * 8.0 / 1e6);
            did = true;
        }
        (None, None, None) => {}
        _ => bail!("--mss, --rtt and --p must be given together"),
    }
    match (&args.fair, args.p1) {
        (Some(pair), Some(p1)) => {
            let (a, b) = parse_fair(pair)?;
            let p2 = fairness_required_p(a, b, p1)?;
            println!("p2 = {p2:.10} (mss {a} -> {b}, p1 = {p1})");
            did = true;
        }
        (None, None) => {}
        _ => bail!("--fair and --p1 must be given together"),
    }
    if !did {
        bail!("nothing to evaluate; pass --mss/--rtt/--p and/or --fair/--p1");
    }
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(a) => cmd_run(a)?,
        Command::Sweep(a) => cmd_sweep(a)?,
        Command::Oracle(a) => {
            if !cmd_oracle(a)? {
                return Ok(ExitCode::from(1));
            }
        }
        Command::GoodputModel(a) => cmd_goodput(a)?,
        Command::Version => println!("{VERSION_STRING}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
