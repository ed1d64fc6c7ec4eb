//! JSON Lines trace files.
//!
//! Line 1 is a header object carrying the time band and a digest of the
//! producing configuration; every following line is one trace entry:
//!
//! ```json
//! {"alpha":3,"t":3,"actor":"time","mode":"optimistic","event":null,
//!  "active":{"h":{"e":1,"run":true,"d":10,"C":3,"crit":"HI","X":2}}}
//! ```
//!
//! Serialisation is field-order and key-order stable, so identical runs
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{derive_outcomes, RunConfig, Trace};
use crate::analysis::CritLevel;
use crate::jobs::{Criticality, EventKind, Job, JobEvent, JobId, JobInfo, State};
use crate::monitors::{Actor, Mode, TraceEntry};
use crate::timebase::{ClockValue, Duration, GroundTime, TimeBand};

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    band: TimeBand,
    config_digest: String,
}

#[derive(Serialize, Deserialize)]
struct EntryLine {
    alpha: u64,
    t: u64,
    #[serde(default)]
    actor: Option<String>,
    mode: String,
    event: Option<EventLine>,
    active: BTreeMap<JobId, JobLine>,
}

#[derive(Serialize, Deserialize)]
struct JobLine {
    e: u64,
    run: bool,
    d: u64,
    #[serde(rename = "C")]
    wcet: u64,
    crit: CritLevel,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    extra: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    kind: EventKind,
    job: JobId,
    at: u64,
    t: u64,
}

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("trace file is empty (expected a header line)")]
    Empty,
    #[error("malformed trace line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hex SHA-256 of the canonical JSON form of a run configuration.
pub fn config_digest(config: &RunConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("run configs always serialize");
    let digest = Sha256::digest(&canonical);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a trace as JSON Lines to any sink.
pub fn write_trace(trace: &Trace, config: &RunConfig, out: &mut impl Write) -> std::io::Result<()> {
    let header = HeaderLine {
        band: trace.band.clone(),
        config_digest: config_digest(config),
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for entry in &trace.entries {
        let line = entry_to_line(entry);
        writeln!(out, "{}", serde_json::to_string(&line).expect("entry serializes"))?;
    }
    Ok(())
}

/// Writes a trace file at `path`, replacing any existing file.
pub fn write_trace_file(trace: &Trace, config: &RunConfig, path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_trace(trace, config, &mut out)?;
    out.flush()
}

/// Reads a JSON Lines trace, rebuilding the event log and outcomes from the
/// per-entry events.
pub fn read_trace(input: impl Read) -> Result<Trace, TraceFileError> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or(TraceFileError::Empty)?;
    let header: HeaderLine = parse_line(1, &header?)?;

    let mut entries = Vec::new();
    for (index, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EntryLine = parse_line(index + 1, &line)?;
        entries.push(entry_from_line(index + 1, parsed)?);
    }
    let events: Vec<JobEvent> = entries.iter().filter_map(|e| e.event.clone()).collect();
    let outcome = derive_outcomes(&entries, &events);
    Ok(Trace {
        band: header.band,
        entries,
        events,
        outcome,
    })
}

/// Reads a trace file from disk.
pub fn read_trace_file(path: &Path) -> Result<Trace, TraceFileError> {
    read_trace(File::open(path)?)
}

fn parse_line<'a, T: Deserialize<'a>>(line: usize, text: &'a str) -> Result<T, TraceFileError> {
    serde_json::from_str(text).map_err(|err| TraceFileError::Malformed {
        line,
        msg: err.to_string(),
    })
}

fn entry_to_line(entry: &TraceEntry) -> EntryLine {
    EntryLine {
        alpha: entry.alpha.quanta(),
        t: entry.state.t.quanta(),
        actor: entry.actor.as_ref().map(actor_to_string),
        mode: entry.mode.as_str().to_string(),
        event: entry.event.as_ref().map(|ev| EventLine {
            kind: ev.kind,
            job: ev.job.clone(),
            at: ev.at.quanta(),
            t: ev.t.quanta(),
        }),
        active: entry
            .state
            .active
            .iter()
            .map(|(id, job)| {
                let (crit, extra) = match job.info.crit {
                    Criticality::Lo => (CritLevel::Lo, None),
                    Criticality::Hi { extra } => (CritLevel::Hi, Some(extra.quanta())),
                };
                (
                    id.clone(),
                    JobLine {
                        e: job.exec.quanta(),
                        run: job.run,
                        d: job.info.deadline.quanta(),
                        wcet: job.info.wcet.quanta(),
                        crit,
                        extra,
                    },
                )
            })
            .collect(),
    }
}

fn entry_from_line(line: usize, parsed: EntryLine) -> Result<TraceEntry, TraceFileError> {
    let malformed = |msg: String| TraceFileError::Malformed { line, msg };
    let mode = match parsed.mode.as_str() {
        "optimistic" => Mode::Optimistic,
        "resilient" => Mode::Resilient,
        other => return Err(malformed(format!("unknown mode `{other}`"))),
    };
    let actor = match parsed.actor.as_deref() {
        None => None,
        Some(text) => Some(parse_actor(text).ok_or_else(|| {
            malformed(format!("unknown actor `{text}`"))
        })?),
    };
    let mut state = State::new(ClockValue::new(parsed.t));
    for (id, job) in parsed.active {
        let crit = match (job.crit, job.extra) {
            (CritLevel::Lo, None) => Criticality::Lo,
            (CritLevel::Lo, Some(_)) => {
                return Err(malformed(format!("lo-crit job `{id}` carries an X field")))
            }
            (CritLevel::Hi, extra) => Criticality::hi(Duration::new(extra.unwrap_or(0))),
        };
        state.active.insert(
            id,
            Job {
                exec: Duration::new(job.e),
                run: job.run,
                info: JobInfo {
                    deadline: ClockValue::new(job.d),
                    wcet: Duration::new(job.wcet),
                    crit,
                },
            },
        );
    }
    Ok(TraceEntry {
        alpha: GroundTime::new(parsed.alpha),
        state,
        actor,
        event: parsed.event.map(|ev| JobEvent {
            kind: ev.kind,
            job: ev.job,
            at: GroundTime::new(ev.at),
            t: ClockValue::new(ev.t),
        }),
        mode,
    })
}

fn actor_to_string(actor: &Actor) -> String {
    match actor {
        Actor::Time => "time".to_string(),
        Actor::Scheduler => "scheduler".to_string(),
        Actor::Arrival => "arrival".to_string(),
        Actor::Job(id) => format!("job({id})"),
    }
}

fn parse_actor(text: &str) -> Option<Actor> {
    match text {
        "time" => Some(Actor::Time),
        "scheduler" => Some(Actor::Scheduler),
        "arrival" => Some(Actor::Arrival),
        _ => {
            let inner = text.strip_prefix("job(")?.strip_suffix(')')?;
            JobId::new(inner).ok().map(Actor::Job)
        }
    }
}
