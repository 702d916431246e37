//! The `anodyne` command line.
//!
//! Exit codes: 0 success, 1 usage, config or IO error, 2 a verdict or demo
//! assertion failed, 3 a checked schedule does not satisfy dynaDegree.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anodyne_core::analysis::check_consensus;
use anodyne_core::engine::{run_simulation, Outcome};
use anodyne_core::model::NodeId;
use anodyne_core::scenarios::{
    demo_byz_partition, demo_crash_count, demo_crash_degree, demo_exact_drop_one, DemoParams,
    DemoReport,
};
use anodyne_core::schedule::{check_dyna_degree_with, Exclusion, WindowAlignment};
use anodyne_core::sweep::SweepSummary;
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{env_seed, load_config};
use crate::formats::{
    append_summary, read_schedule, trace_to_jsonl, verdict_to_json, write_file, write_summary,
};
use crate::sweep::{parse_seeds, run_sweep_parallel};
use crate::{Error, Result};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_FAILED: u8 = 2;
pub const EXIT_UNSATISFIED: u8 = 3;

/// Demo names accepted by `anodyne demo`.
pub const DEMOS: [&str; 4] = [
    "crash-degree",
    "crash-count",
    "byz-partition",
    "exact-drop-one",
];

#[derive(Debug, Parser)]
#[command(
    name = "anodyne",
    version,
    about = "Approximate consensus in anonymous dynamic networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write trace.jsonl, verdict.json and summary.csv.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a schedule file against dynaDegree(T, D).
    CheckSchedule {
        schedule: PathBuf,
        /// Window length T.
        #[arg(long = "t", visible_alias = "T")]
        t: u32,
        /// Required distinct in-neighbors D.
        #[arg(long = "d", visible_alias = "D")]
        d: u32,
        /// Check only the disjoint windows starting at 1, T+1, 2T+1, ...
        #[arg(long)]
        aligned: bool,
        /// Nodes exempt from the requirement, e.g. `--exclude 2,5`.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<u32>,
    },
    /// Run a config over many seeds and write summary.csv.
    Sweep {
        config: PathBuf,
        /// `a..b` (inclusive) or `a,b,c`; defaults to the config seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an impossibility demonstration.
    Demo {
        name: String,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        f: Option<u32>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Round budget for runs expected to deadlock.
        #[arg(long)]
        deadlock_rounds: Option<u32>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    input: Option<&'a Path>,
    seeds: Vec<u64>,
    workers: usize,
    elapsed_ms: u128,
}

impl<'a> Meta<'a> {
    fn new(
        command: &'a str,
        input: Option<&'a Path>,
        seeds: Vec<u64>,
        workers: usize,
        start: Instant,
    ) -> Self {
        Meta {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            input,
            seeds,
            workers,
            elapsed_ms: start.elapsed().as_millis(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_file(
            &dir.join("meta.json"),
            (serde_json::to_string_pretty(self)? + "\n").as_bytes(),
        )
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Write {
        path: dir.to_path_buf(),
        source,
    })
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let help = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            let _ = if help {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return if help { EXIT_OK } else { EXIT_ERROR };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<u8> {
    match command {
        Command::Run { config, out: dir } => cmd_run(&config, &dir, out),
        Command::CheckSchedule {
            schedule,
            t,
            d,
            aligned,
            exclude,
        } => cmd_check_schedule(&schedule, t, d, aligned, &exclude, out),
        Command::Sweep {
            config,
            seeds,
            workers,
            out: dir,
        } => cmd_sweep(&config, seeds.as_deref(), workers, &dir, out),
        Command::Demo {
            name,
            n,
            f,
            epsilon,
            seed,
            deadlock_rounds,
            out: dir,
        } => {
            let mut params = DemoParams::default();
            if let Some(e) = epsilon {
                params.epsilon = e;
            }
            if let Some(s) = seed.or(env_seed()?) {
                params.seed = s;
            }
            if let Some(r) = deadlock_rounds {
                params.deadlock_rounds = r;
            }
            cmd_demo(&name, n, f, params, &dir, out)
        }
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::Write {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

pub fn cmd_run(config: &Path, dir: &Path, out: &mut dyn Write) -> Result<u8> {
    let start = Instant::now();
    let loaded = load_config(config, env_seed()?)?;
    let resolved = loaded.scenario.resolve()?;
    let trace = run_simulation(&resolved.config, &resolved.strategy, &resolved.plan)?;
    let verdict = check_consensus(&trace, loaded.fault_model);

    create_dir(dir)?;
    write_file(&dir.join("trace.jsonl"), &trace_to_jsonl(&trace)?)?;
    write_file(
        &dir.join("verdict.json"),
        verdict_to_json(&verdict)?.as_bytes(),
    )?;
    let row = SweepSummary::from_run(&loaded.scenario, &trace, &verdict);
    append_summary(&dir.join("summary.csv"), &[row])?;
    Meta::new("run", Some(config), vec![resolved.config.seed], 1, start).write(dir)?;

    let outcome = match trace.outcome {
        Outcome::Terminated { round } => format!("terminated at round {round}"),
        Outcome::NonTermination { max_rounds } => {
            format!("no termination within {max_rounds} rounds")
        }
    };
    let failed: Vec<&str> = verdict
        .lemma_checks
        .iter()
        .filter(|(_, c)| !c.pass)
        .map(|(k, _)| k.as_str())
        .collect();
    writeln!(
        out,
        "{}: {outcome}; validity {}, agreement {} (range {:?}){}",
        if verdict.passed() { "PASS" } else { "FAIL" },
        verdict.validity,
        verdict.eps_agreement,
        verdict.achieved_range,
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed checks: {}", failed.join(", "))
        }
    )
    .map_err(io_out)?;
    Ok(if verdict.passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

#[derive(Serialize)]
struct ScheduleCheck {
    #[serde(rename = "T")]
    t: u32,
    #[serde(rename = "D")]
    d: u32,
    alignment: &'static str,
    satisfied: bool,
    witness: Option<anodyne_core::schedule::DegreeWitness>,
}

pub fn cmd_check_schedule(
    path: &Path,
    t: u32,
    d: u32,
    aligned: bool,
    exclude: &[u32],
    out: &mut dyn Write,
) -> Result<u8> {
    let sched = read_schedule(path)?;
    let mut excluded = Vec::with_capacity(exclude.len());
    for &v in exclude {
        excluded
            .push(NodeId::try_from(v).map_err(|e| Error::Invalid(format!("--exclude {v}: {e}")))?);
    }
    let alignment = if aligned {
        WindowAlignment::Aligned
    } else {
        WindowAlignment::Sliding
    };
    let report = check_dyna_degree_with(&sched, t, d, &Exclusion::nodes(excluded), alignment)?;
    let json = serde_json::to_string(&ScheduleCheck {
        t,
        d,
        alignment: if aligned { "aligned" } else { "sliding" },
        satisfied: report.satisfied,
        witness: report.witness,
    })?;
    writeln!(out, "{json}").map_err(io_out)?;
    Ok(if report.satisfied {
        EXIT_OK
    } else {
        EXIT_UNSATISFIED
    })
}

pub fn cmd_sweep(
    config: &Path,
    seeds: Option<&str>,
    workers: usize,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<u8> {
    let start = Instant::now();
    let loaded = load_config(config, env_seed()?)?;
    let seeds = match seeds {
        Some(spec) => parse_seeds(spec)?,
        None => vec![loaded.scenario.config.seed],
    };
    let rows = run_sweep_parallel(&loaded.scenario, &seeds, &loaded.overrides, workers)?;
    create_dir(dir)?;
    let mut csv = Vec::new();
    write_summary(&rows, &mut csv, true)?;
    write_file(&dir.join("summary.csv"), &csv)?;
    Meta::new("sweep", Some(config), seeds, workers.max(1), start).write(dir)?;
    let passed = rows.iter().filter(|r| r.passed).count();
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    writeln!(
        out,
        "{} cells: {passed} passed, {} failed, {errors} errors",
        rows.len(),
        rows.len() - passed - errors
    )
    .map_err(io_out)?;
    Ok(if passed == rows.len() {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

/// Runs the named demo with per-demo defaults for `n` and `f`.
pub fn run_demo(
    name: &str,
    n: Option<u32>,
    f: Option<u32>,
    params: DemoParams,
) -> Result<DemoReport> {
    Ok(match name {
        "crash-degree" => demo_crash_degree(n.unwrap_or(6), params)?,
        "crash-count" => demo_crash_count(n.unwrap_or(6), f.unwrap_or(3), params)?,
        "byz-partition" => demo_byz_partition(n.unwrap_or(10), f.unwrap_or(2), params)?,
        "exact-drop-one" => demo_exact_drop_one(n.unwrap_or(4), params)?,
        other => {
            return Err(Error::Invalid(format!(
                "unknown demo `{other}`; available: {}",
                DEMOS.join(", ")
            )))
        }
    })
}

pub fn cmd_demo(
    name: &str,
    n: Option<u32>,
    f: Option<u32>,
    params: DemoParams,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<u8> {
    let report = run_demo(name, n, f, params)?;
    create_dir(dir)?;
    write_file(
        &dir.join(format!("{name}.json")),
        (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
    )?;
    let text = format!("{report}\n");
    write_file(&dir.join(format!("{name}.txt")), text.as_bytes())?;
    out.write_all(text.as_bytes()).map_err(io_out)?;
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}
