//! On-disk formats: schedule files, JSONL traces, verdicts and the summary
//! CSV. Every writer is byte-stable for identical input.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use anodyne_core::analysis::Verdict;
use anodyne_core::engine::{NodeSnapshot, Outcome, RoundRecord, Trace};
use anodyne_core::faults::FaultPlan;
use anodyne_core::model::{EdgeSet, NodeId, Phase, Round, SimConfig};
use anodyne_core::schedule::DynamicSchedule;
use anodyne_core::sweep::SweepSummary;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tag carried by the first line of every trace file.
pub const TRACE_FORMAT: &str = "anodyne-trace/1";
/// First line of every summary CSV.
pub const SUMMARY_VERSION_LINE: &str = "#v1 anodyne summary";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Schedule file: `{"n", "horizon", "rounds": [{"t", "edges": [[src, dst]]}]}`.
/// Rounds not listed have no edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub n: u32,
    pub horizon: u32,
    pub rounds: Vec<ScheduleRound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRound {
    pub t: Round,
    pub edges: Vec<(NodeId, NodeId)>,
}

impl ScheduleFile {
    pub fn from_schedule(sched: &DynamicSchedule) -> Self {
        ScheduleFile {
            n: sched.n(),
            horizon: sched.horizon(),
            rounds: sched
                .rounds()
                .map(|(t, edges)| ScheduleRound {
                    t,
                    edges: edges.iter().collect(),
                })
                .collect(),
        }
    }

    pub fn into_schedule(self) -> Result<DynamicSchedule> {
        let mut rounds = vec![EdgeSet::new(); self.horizon as usize];
        let mut last = 0;
        for r in self.rounds {
            if r.t <= last || r.t > self.horizon {
                return Err(Error::Invalid(format!(
                    "round {} out of order or outside [1, {}]",
                    r.t, self.horizon
                )));
            }
            last = r.t;
            rounds[(r.t - 1) as usize] = EdgeSet::try_from(r.edges)?;
        }
        Ok(DynamicSchedule::new(self.n, rounds)?)
    }
}

pub fn parse_schedule(text: &str, path: &Path) -> Result<DynamicSchedule> {
    let file: ScheduleFile = serde_json::from_str(text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    file.into_schedule()
}

pub fn read_schedule(path: &Path) -> Result<DynamicSchedule> {
    parse_schedule(&read_text(path)?, path)
}

pub fn schedule_to_json(sched: &DynamicSchedule) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScheduleFile::from_schedule(sched))? + "\n")
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLineRef<'a> {
    Header {
        format: &'a str,
        config: &'a SimConfig,
        faults: &'a FaultPlan,
        p_end: Phase,
        initial: &'a [NodeSnapshot],
    },
    Round(&'a RoundRecord),
    End {
        outcome: Outcome,
        output_round: &'a [Option<Round>],
    },
}

#[derive(Deserialize)]
struct HeaderLine {
    format: String,
    config: SimConfig,
    faults: FaultPlan,
    p_end: Phase,
    initial: Vec<NodeSnapshot>,
}

#[derive(Deserialize)]
struct EndLine {
    outcome: Outcome,
    output_round: Vec<Option<Round>>,
}

enum TraceLine {
    Header(HeaderLine),
    Round(RoundRecord),
    End(EndLine),
}

impl TraceLine {
    /// Dispatches on `type` by hand: serde's buffered tagged enums lose
    /// integer map keys such as the node ids of a fault plan.
    fn parse(line: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(line)?;
        let kind = value
            .as_object_mut()
            .and_then(|o| o.remove("type"))
            .and_then(|t| t.as_str().map(str::to_owned))
            .ok_or_else(|| Error::Invalid("malformed trace: line without a type".into()))?;
        Ok(match kind.as_str() {
            "header" => TraceLine::Header(serde_json::from_value(value)?),
            "round" => TraceLine::Round(serde_json::from_value(value)?),
            "end" => TraceLine::End(serde_json::from_value(value)?),
            other => {
                return Err(Error::Invalid(format!(
                    "malformed trace: unknown line type {other}"
                )))
            }
        })
    }
}

/// A header line, one line per round, then an end line.
pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    let mut line = |record: &TraceLineRef<'_>| -> Result<()> {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)?;
        Ok(())
    };
    line(&TraceLineRef::Header {
        format: TRACE_FORMAT,
        config: &trace.config,
        faults: &trace.faults,
        p_end: trace.p_end,
        initial: &trace.initial,
    })?;
    for r in &trace.rounds {
        line(&TraceLineRef::Round(r))?;
    }
    line(&TraceLineRef::End {
        outcome: trace.outcome,
        output_round: &trace.output_round,
    })
}

pub fn trace_to_jsonl(trace: &Trace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    Ok(buf)
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Trace> {
    let malformed = |msg: String| Error::Invalid(format!("malformed trace: {msg}"));
    let mut lines = input.lines();
    let mut next = || -> Result<Option<TraceLine>> {
        match lines.next() {
            None => Ok(None),
            Some(line) => Ok(Some(TraceLine::parse(
                &line.map_err(serde_json::Error::io)?,
            )?)),
        }
    };
    let Some(TraceLine::Header(HeaderLine {
        format,
        config,
        faults,
        p_end,
        initial,
    })) = next()?
    else {
        return Err(malformed("missing header".into()));
    };
    if format != TRACE_FORMAT {
        return Err(malformed(format!("unknown format {format}")));
    }
    let mut rounds = Vec::new();
    loop {
        match next()? {
            Some(TraceLine::Round(r)) => rounds.push(r),
            Some(TraceLine::End(EndLine {
                outcome,
                output_round,
            })) => {
                if next()?.is_some() {
                    return Err(malformed("data after end line".into()));
                }
                return Ok(Trace {
                    config,
                    faults,
                    p_end,
                    initial,
                    rounds,
                    outcome,
                    output_round,
                });
            }
            Some(TraceLine::Header(_)) => return Err(malformed("second header".into())),
            None => return Err(malformed("missing end line".into())),
        }
    }
}

pub fn verdict_to_json(verdict: &Verdict) -> Result<String> {
    Ok(serde_json::to_string_pretty(verdict)? + "\n")
}

/// One CSV row; `None` cells are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub seed: u64,
    pub n: u32,
    pub f: u32,
    #[serde(rename = "T")]
    pub t: Option<u32>,
    #[serde(rename = "D")]
    pub d: Option<u32>,
    pub algorithm: String,
    pub phases: Option<u32>,
    pub rounds: Option<u32>,
    pub final_range: Option<f64>,
    pub validity: Option<bool>,
    pub agreement: Option<bool>,
    pub rate_max: Option<f64>,
    pub error: Option<String>,
}

impl From<&SweepSummary> for SummaryRecord {
    fn from(s: &SweepSummary) -> Self {
        SummaryRecord {
            seed: s.seed,
            n: s.n,
            f: s.f,
            t: s.t,
            d: s.d,
            algorithm: s.algorithm.name().to_string(),
            phases: s.phases,
            rounds: s.rounds,
            final_range: s.final_range,
            validity: s.validity,
            agreement: s.agreement,
            rate_max: s.rate_max,
            error: s.error.clone(),
        }
    }
}

/// Writes rows, preceded by the version line and column header when
/// `with_header` is set.
pub fn write_summary<W: Write>(rows: &[SweepSummary], mut out: W, with_header: bool) -> Result<()> {
    if with_header {
        writeln!(out, "{SUMMARY_VERSION_LINE}").map_err(csv::Error::from)?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(with_header)
        .from_writer(out);
    for row in rows {
        w.serialize(SummaryRecord::from(row))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Appends rows to `path`, creating it with a header if missing or empty.
pub fn append_summary(path: &Path, rows: &[SweepSummary]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })?;
    write_summary(rows, io::BufWriter::new(file), fresh)
}

pub fn read_summary<R: io::Read>(input: R) -> Result<Vec<SummaryRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
