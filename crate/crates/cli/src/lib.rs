//! The `f2fsec` command-line harness.
//!
//! Exit codes: 0 success (a SAT timeout counts as a result), 1 usage or
//! configuration error, 2 data error, 3 internal invariant violation.

pub mod config;
pub mod design;
pub mod error;
pub mod flow;
pub mod report;

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use f2fsec::attack::{NetlistOracle, Oracle};
use f2fsec::netlist::Netlist;
use rayon::prelude::*;

use config::{ConfigText, RunConfig};
use error::{CliError, Result, Stage};
use report::{aggregate, write, RunReport};

#[derive(Debug, Parser)]
#[command(name = "f2fsec", version, about = "Split-manufacturing defenses, attacks and k-security levels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// key=value config file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides one key, e.g. `--set partition.strategy=random`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    pub fn text(&self) -> Result<ConfigText> {
        let mut t = match &self.config {
            Some(p) => ConfigText::load(p)?,
            None => ConfigText::default(),
        };
        for s in &self.set {
            t.set(s)?;
        }
        Ok(t)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition, place and plan F2F ports; write public views and the secret plan.
    Defend {
        #[command(flatten)]
        config: ConfigArgs,
        /// Seeds to run, `a..b` (half open) or `a,b,c`; overrides `seed`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(required = true)]
        benches: Vec<String>,
    },
    /// Attack defended designs and score the result against the secret plan.
    Attack {
        #[command(flatten)]
        config: ConfigArgs,
        /// Shorthand for `--set attack.kind=<KIND>`.
        #[arg(long)]
        kind: Option<String>,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Vulnerability analysis, structure synthesis, wire lifting and k levels.
    Ksec {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(required = true)]
        benches: Vec<String>,
    },
    /// Merge run reports into CSV and JSON tables.
    Report {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Simulate a design: one frame-input bit string per stdin line, one
    /// frame-output bit string per stdout line.
    OracleSim {
        /// Print the input and output names and exit.
        #[arg(long)]
        names: bool,
        bench: String,
    },
}

/// Parses `a..b` or `a,b,c`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || CliError::usage(Stage::Config, format!("bad seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

/// One (benchmark, seed) job and where it writes.
#[derive(Debug, Clone)]
pub struct Job {
    pub bench: String,
    pub config: RunConfig,
    pub dir: PathBuf,
}

/// Expands benchmarks × seeds. A single job writes to `out`; several
/// write to `out/<bench>/s<seed>`.
pub fn plan_jobs(text: &ConfigText, seeds: Option<&str>, out: &Path, benches: &[String]) -> Result<Vec<Job>> {
    let configs: Vec<RunConfig> = match seeds {
        Some(s) => parse_seeds(s)?
            .into_iter()
            .map(|seed| {
                let mut t = text.clone();
                t.set(&format!("seed={seed}"))?;
                RunConfig::from_text(&t)
            })
            .collect::<Result<_>>()?,
        None => vec![RunConfig::from_text(text)?],
    };
    let single = configs.len() * benches.len() == 1;
    let mut jobs = Vec::new();
    for b in benches {
        for c in &configs {
            let tag: String = b.chars().map(|ch| if ch.is_alphanumeric() || ch == '_' || ch == '-' { ch } else { '_' }).collect();
            let dir = if single { out.to_path_buf() } else { out.join(tag).join(format!("s{}", c.seed)) };
            jobs.push(Job { bench: b.clone(), config: c.clone(), dir });
        }
    }
    Ok(jobs)
}

/// Runs jobs in parallel; the first error in job order wins.
fn run_jobs(jobs: &[Job], f: impl Fn(&Job) -> Result<()> + Sync) -> Result<()> {
    let results: Vec<Result<()>> = jobs.par_iter().map(&f).collect();
    results.into_iter().collect()
}

pub fn cmd_defend(job: &Job) -> Result<RunReport> {
    let (label, n) = design::resolve(&job.bench)?;
    let d = flow::defend(&job.config, &label, n)?;
    flow::write_defended(&job.dir, &job.config, &d)?;
    Ok(d.report)
}

pub fn cmd_ksec(job: &Job) -> Result<RunReport> {
    let (label, n) = design::resolve(&job.bench)?;
    let k = flow::ksec(&job.config, &label, n)?;
    flow::write_ksec(&job.dir, &job.config, &k)?;
    Ok(k.report)
}

pub fn cmd_report(runs: &[PathBuf], out: &Path) -> Result<report::Aggregate> {
    let reports: Vec<RunReport> = runs.iter().map(|d| RunReport::load(d)).collect::<Result<_>>()?;
    let agg = aggregate(&reports)?;
    write(&out.join("runs.csv"), &agg.runs_csv)?;
    write(&out.join("summary.csv"), &agg.summary_csv)?;
    write(&out.join("summary.json"), &agg.summary_json)?;
    write(&out.join("distances.csv"), &agg.distances_csv)?;
    Ok(agg)
}

/// Answers bit-string queries against `n`. Whitespace inside a line is
/// ignored; empty lines are skipped.
pub fn oracle_sim(n: &Netlist, input: impl BufRead, mut output: impl Write) -> Result<usize> {
    let mut oracle = NetlistOracle::new(n.clone());
    let width = oracle.input_names().len();
    let mut answered = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CliError::data(Stage::Oracle, e))?;
        let bits: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
        if bits.is_empty() {
            continue;
        }
        if bits.len() != width || bits.iter().any(|c| *c != '0' && *c != '1') {
            return Err(CliError::data(
                Stage::Oracle,
                format!("line {}: expected {width} bits of 0/1, got `{line}`", i + 1),
            ));
        }
        let y = oracle.query(&bits.iter().map(|c| *c == '1').collect::<Vec<_>>());
        let s: String = y.iter().map(|b| if *b { '1' } else { '0' }).collect();
        writeln!(output, "{s}").map_err(|e| CliError::data(Stage::Io, e))?;
        answered += 1;
    }
    output.flush().map_err(|e| CliError::data(Stage::Io, e))?;
    Ok(answered)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Defend { config, seeds, out, benches } => {
            let jobs = plan_jobs(&config.text()?, seeds.as_deref(), &out, &benches)?;
            run_jobs(&jobs, |j| cmd_defend(j).map(|_| ()))
        }
        Command::Ksec { config, seeds, out, benches } => {
            let jobs = plan_jobs(&config.text()?, seeds.as_deref(), &out, &benches)?;
            run_jobs(&jobs, |j| cmd_ksec(j).map(|_| ()))
        }
        Command::Attack { config, kind, runs } => {
            let mut over = config.text()?;
            if let Some(k) = kind {
                over.set(&format!("attack.kind={k}"))?;
            }
            let results: Vec<Result<()>> = runs.par_iter().map(|d| flow::attack_dir(d, &over).map(|_| ())).collect();
            results.into_iter().collect()
        }
        Command::Report { out, runs } => cmd_report(&runs, &out).map(|_| ()),
        Command::OracleSim { names, bench } => {
            let (_, n) = design::resolve(&bench)?;
            if names {
                println!("inputs: {}", n.frame_input_names().join(" "));
                let outs: Vec<String> = n.frame_outputs().into_iter().map(|(s, _)| s).collect();
                println!("outputs: {}", outs.join(" "));
                return Ok(());
            }
            let stdin = std::io::stdin();
            oracle_sim(&n, stdin.lock(), std::io::stdout().lock()).map(|_| ())
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("f2fsec: {e}");
            e.exit_code()
        }
    }
}
