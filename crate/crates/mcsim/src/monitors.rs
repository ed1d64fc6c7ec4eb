//! Trace checking: state invariants, clock/execution accounting predicates,
//! and per-actor interference conditions, evaluated over recorded runs.
//!
//! Every check is a pure function from a trace to a [`Verdict`]; a verdict
//! passes exactly when its list of [`Finding`]s is empty. Findings cite the
//! trace index and ground time where the named predicate first failed, plus
//! the offending values.
//!
//! Interference checks (`check_rely_*`) quantify over *environment steps*,
//! the transitions between consecutive entries produced by any actor other
//! than the scheduler. They refuse traces without actor labels: when two
//! different actors could have caused the same state change, attribution
//! cannot be reconstructed from the states alone.

use serde::Serialize;
use thiserror::Error;

use crate::jobs::{EventKind, JobEvent, JobId, State};
use crate::sim::Trace;
use crate::timebase::{rho_eq, GroundTime, TimeBand};

/// Operating regime of a run. Transitions are one-way: once resilient,
/// never optimistic again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Mode {
    Optimistic,
    Resilient,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Optimistic => "optimistic",
            Mode::Resilient => "resilient",
        }
    }
}

/// Which process performed the step that produced a trace entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Actor {
    /// Autonomous passage of time.
    Time,
    /// The scheduling policy (run flips, abandonments, mode switches).
    Scheduler,
    /// Workload-driven job arrival.
    Arrival,
    /// The job itself (completion).
    Job(JobId),
}

/// One snapshot in a recorded run: the state after a single actor's step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub alpha: GroundTime,
    pub state: State,
    /// `None` only in externally loaded traces that lack attribution.
    pub actor: Option<Actor>,
    pub event: Option<JobEvent>,
    pub mode: Mode,
}

/// A concrete violation of a named predicate at a specific trace index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    /// Name of the violated predicate, e.g. `inv-State_O` or `guar-JOB(a)`.
    pub predicate: String,
    /// Ground time of the violating entry.
    pub at: GroundTime,
    /// Index into the trace's entry sequence.
    pub index: usize,
    /// Human-readable explanation with the violating values.
    pub detail: String,
}

/// Outcome of a check: passes exactly when no findings were produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub findings: Vec<Finding>,
}

impl Verdict {
    pub fn from_findings(findings: Vec<Finding>) -> Self {
        Verdict {
            pass: findings.is_empty(),
            findings,
        }
    }

    /// Concatenates several verdicts, preserving finding order.
    pub fn merge(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let findings = verdicts
            .into_iter()
            .flat_map(|v| v.findings)
            .collect::<Vec<_>>();
        Verdict::from_findings(findings)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MonitorError {
    /// Interference checks quantify over steps of specific processes;
    /// without labels the steps cannot be attributed.
    #[error("trace entry {index} lacks an actor label; cannot attribute steps")]
    UnlabeledTrace { index: usize },
}

fn signed(q: u64) -> i128 {
    q as i128
}

/// Optimistic state invariant: every active job still has room to receive
/// its full expected budget before its deadline, `C - e <= d - t` in signed
/// arithmetic. A job that has already exceeded its budget makes the left
/// side negative and the clause trivially true.
pub fn inv_state_o(state: &State) -> bool {
    state.active.values().all(|job| {
        signed(job.info.wcet.quanta()) - signed(job.exec.quanta())
            <= signed(job.info.deadline.quanta()) - signed(state.t.quanta())
    })
}

/// Resilient state invariant: every hi-crit job has room for its budget
/// plus its extra allowance, `C + X - e <= d - t`. Lo-crit jobs are
/// ignored.
pub fn inv_state_r(state: &State) -> bool {
    state.active.values().all(|job| {
        !job.info.crit.is_hi()
            || signed(job.info.wcet.quanta()) + signed(job.info.crit.extra().quanta())
                - signed(job.exec.quanta())
                <= signed(job.info.deadline.quanta()) - signed(state.t.quanta())
    })
}

/// Whether the state supports a safe optimistic-to-resilient switch,
/// i.e. the resilient invariant already holds at the switch instant.
///
/// When every hi-crit allowance is zero the resilient clause coincides with
/// the optimistic one, so an optimistic-valid state is always switchable;
/// that implication is asserted here as a self-check.
pub fn check_mode_transition(state: &State) -> bool {
    let safe = inv_state_r(state);
    let zero_extras = state
        .active
        .values()
        .all(|job| job.info.crit.extra() == crate::timebase::Duration::ZERO);
    if zero_extras {
        debug_assert!(!inv_state_o(state) || safe);
    }
    safe
}

/// Checks that every recorded clock reading stays within the band precision
/// of ground truth.
pub fn check_p_t(trace: &Trace, band: &TimeBand) -> Verdict {
    let rho = band.precision;
    let mut findings = Vec::new();
    for (index, entry) in trace.entries.iter().enumerate() {
        if !rho_eq(entry.state.t.quanta(), entry.alpha.quanta(), rho) {
            findings.push(Finding {
                predicate: "P_t".to_string(),
                at: entry.alpha,
                index,
                detail: format!(
                    "clock t={} deviates from ground time alpha={} by more than rho={}",
                    entry.state.t, entry.alpha, rho
                ),
            });
        }
    }
    Verdict::from_findings(findings)
}

/// Checks execution-time accounting against the run flags.
///
/// Over every maximal interval where a job's run flag is continuously true,
/// accrued execution time must grow exactly with ground time (and within
/// `2*rho` when measured through the two endpoint clock reads — each read
/// contributes up to one precision of error). Over every maximal interval
/// with the flag continuously false, accrued time must not change. Accrual
/// across a zero-width step (no time passing) is always a violation.
pub fn check_p_e(trace: &Trace, band: &TimeBand) -> Verdict {
    let rho = signed(band.precision.quanta());
    let mut findings = Vec::new();
    let mut ids: Vec<JobId> = Vec::new();
    for entry in &trace.entries {
        for id in entry.state.active.keys() {
            if !ids.contains(id) {
                ids.push(id.clone());
            }
        }
    }
    ids.sort();

    for id in &ids {
        // Maximal blocks of consecutive entries where the job is present.
        let mut block: Vec<usize> = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (index, entry) in trace.entries.iter().enumerate() {
            if entry.state.active.contains_key(id) {
                if let Some(&last) = block.last() {
                    if last + 1 != index {
                        blocks.push(std::mem::take(&mut block));
                    }
                }
                block.push(index);
            }
        }
        if !block.is_empty() {
            blocks.push(block);
        }

        for block in blocks {
            check_p_e_block(trace, id, &block, rho, &mut findings);
        }
    }
    findings.sort_by_key(|f| f.index);
    Verdict::from_findings(findings)
}

fn check_p_e_block(
    trace: &Trace,
    id: &JobId,
    block: &[usize],
    rho: i128,
    findings: &mut Vec<Finding>,
) {
    let job_at = |index: usize| trace.entries[index].state.active[id];
    let alpha_at = |index: usize| signed(trace.entries[index].alpha.quanta());
    let t_at = |index: usize| signed(trace.entries[index].state.t.quanta());
    let e_at = |index: usize| signed(job_at(index).exec.quanta());

    // Pairwise exact checks on the ground-truth axis.
    for pair in block.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        let de = e_at(j) - e_at(i);
        let da = alpha_at(j) - alpha_at(i);
        let (run_i, run_j) = (job_at(i).run, job_at(j).run);
        if run_i && run_j && de != da {
            findings.push(Finding {
                predicate: "P_e".to_string(),
                at: trace.entries[j].alpha,
                index: j,
                detail: format!(
                    "job {id} running over [{}, {}] but e advanced by {de}, not {da}",
                    trace.entries[i].alpha, trace.entries[j].alpha
                ),
            });
        } else if !run_i && !run_j && de != 0 {
            findings.push(Finding {
                predicate: "P_e".to_string(),
                at: trace.entries[j].alpha,
                index: j,
                detail: format!(
                    "job {id} idle over [{}, {}] but e changed by {de}",
                    trace.entries[i].alpha, trace.entries[j].alpha
                ),
            });
        } else if run_i != run_j && da == 0 && de != 0 {
            findings.push(Finding {
                predicate: "P_e".to_string(),
                at: trace.entries[j].alpha,
                index: j,
                detail: format!("job {id} accrued {de} execution time with no time passing"),
            });
        }
    }

    // Endpoint check per maximal running segment, measured by clock reads.
    let mut seg_start = 0;
    while seg_start < block.len() {
        let running = job_at(block[seg_start]).run;
        let mut seg_end = seg_start;
        while seg_end + 1 < block.len() && job_at(block[seg_end + 1]).run == running {
            seg_end += 1;
        }
        if running {
            let (i, j) = (block[seg_start], block[seg_end]);
            let de = e_at(j) - e_at(i);
            let dt = t_at(j) - t_at(i);
            if (de - dt).abs() > 2 * rho {
                findings.push(Finding {
                    predicate: "P_e".to_string(),
                    at: trace.entries[j].alpha,
                    index: j,
                    detail: format!(
                        "job {id} running: e advanced by {de} but clock reads span {dt} \
                         (tolerance 2*rho = {})",
                        2 * rho
                    ),
                });
            }
        }
        seg_start = seg_end + 1;
    }
}

/// Checks one job's execution-time guarantee under the given mode.
///
/// Optimistic: accrued time never exceeds the expected budget C. Resilient:
/// hi-crit jobs never exceed C plus their extra allowance; lo-crit jobs
/// make no promises. Only the first violation is reported.
pub fn check_guar_job(trace: &Trace, id: &JobId, mode: Mode) -> Verdict {
    let mut findings = Vec::new();
    for (index, entry) in trace.entries.iter().enumerate() {
        let Some(job) = entry.state.active.get(id) else {
            continue;
        };
        let violated = match mode {
            Mode::Optimistic => job.exec > job.info.wcet,
            Mode::Resilient => {
                job.info.crit.is_hi() && job.exec > job.info.wcet + job.info.crit.extra()
            }
        };
        if violated {
            let bound = match mode {
                Mode::Optimistic => job.info.wcet,
                Mode::Resilient => job.info.wcet + job.info.crit.extra(),
            };
            findings.push(Finding {
                predicate: format!("guar-JOB({id})"),
                at: entry.alpha,
                index,
                detail: format!(
                    "job {id} accrued e={} beyond its {} bound {}",
                    job.exec,
                    mode.as_str(),
                    bound
                ),
            });
            break;
        }
    }
    Verdict::from_findings(findings)
}

/// Per-entry-mode guarantee check over every job in the trace: entries in
/// optimistic mode are held to the C bound, entries in resilient mode to
/// C + X for hi-crit jobs. First violation per job and mode.
pub fn check_guar_all(trace: &Trace) -> Verdict {
    let mut findings = Vec::new();
    let mut reported: Vec<(JobId, Mode)> = Vec::new();
    for (index, entry) in trace.entries.iter().enumerate() {
        for (id, job) in &entry.state.active {
            if reported.iter().any(|(r, m)| r == id && *m == entry.mode) {
                continue;
            }
            let (violated, bound) = match entry.mode {
                Mode::Optimistic => (job.exec > job.info.wcet, job.info.wcet),
                Mode::Resilient => {
                    let bound = job.info.wcet + job.info.crit.extra();
                    (job.info.crit.is_hi() && job.exec > bound, bound)
                }
            };
            if violated {
                findings.push(Finding {
                    predicate: format!("guar-JOB({id})"),
                    at: entry.alpha,
                    index,
                    detail: format!(
                        "job {id} accrued e={} beyond its {} bound {}",
                        job.exec,
                        entry.mode.as_str(),
                        bound
                    ),
                });
                reported.push((id.clone(), entry.mode));
            }
        }
    }
    Verdict::from_findings(findings)
}

/// Checks the scheduler's interference assumption over every environment
/// step, under one fixed mode.
///
/// Optimistic: after any step by time, arrival, or a job, every job
/// respects its C bound and surviving jobs keep their run flag and info
/// unchanged. Resilient: hi-crit jobs respect C + X, info stays unchanged,
/// and run flags never drop (environment steps may not take the processor
/// away).
pub fn check_rely_scheduler(trace: &Trace, mode: Mode) -> Result<Verdict, MonitorError> {
    check_rely_steps(trace, |_| mode)
}

/// Like [`check_rely_scheduler`] but holds each environment step to the
/// mode recorded on the trace at that step.
pub fn check_rely_recorded(trace: &Trace) -> Result<Verdict, MonitorError> {
    let modes: Vec<Mode> = trace.entries.iter().map(|e| e.mode).collect();
    check_rely_steps(trace, move |index| modes[index])
}

fn check_rely_steps(
    trace: &Trace,
    mode_at: impl Fn(usize) -> Mode,
) -> Result<Verdict, MonitorError> {
    for (index, entry) in trace.entries.iter().enumerate() {
        if entry.actor.is_none() {
            return Err(MonitorError::UnlabeledTrace { index });
        }
    }
    let mut findings = Vec::new();
    for index in 1..trace.entries.len() {
        let prev = &trace.entries[index - 1];
        let next = &trace.entries[index];
        if next.actor == Some(Actor::Scheduler) {
            continue;
        }
        let mode = mode_at(index);
        let predicate = match mode {
            Mode::Optimistic => "rely-SCHEDULER_O",
            Mode::Resilient => "rely-SCHEDULER_R",
        };
        // e-bound clause over the post-state of the step.
        for (id, job) in &next.state.active {
            let (violated, bound) = match mode {
                Mode::Optimistic => (job.exec > job.info.wcet, job.info.wcet),
                Mode::Resilient => {
                    let bound = job.info.wcet + job.info.crit.extra();
                    (job.info.crit.is_hi() && job.exec > bound, bound)
                }
            };
            if violated {
                findings.push(Finding {
                    predicate: predicate.to_string(),
                    at: next.alpha,
                    index,
                    detail: format!(
                        "e-bound: environment step left job {id} at e={} > {}",
                        job.exec, bound
                    ),
                });
            }
        }
        // Frame clause over jobs present on both sides of the step.
        for (id, before) in &prev.state.active {
            let Some(after) = next.state.active.get(id) else {
                continue;
            };
            if after.info != before.info {
                findings.push(Finding {
                    predicate: predicate.to_string(),
                    at: next.alpha,
                    index,
                    detail: format!("frame: environment step changed info of job {id}"),
                });
            }
            let run_ok = match mode {
                Mode::Optimistic => after.run == before.run,
                Mode::Resilient => after.run || !before.run,
            };
            if !run_ok {
                findings.push(Finding {
                    predicate: predicate.to_string(),
                    at: next.alpha,
                    index,
                    detail: format!(
                        "frame: environment step moved run flag of job {id} from {} to {}",
                        before.run, after.run
                    ),
                });
            }
        }
    }
    Ok(Verdict::from_findings(findings))
}

/// Scans entries recorded in optimistic mode for violations of the
/// optimistic state invariant.
pub fn check_inv_optimistic(trace: &Trace) -> Verdict {
    check_inv_entries(trace, Mode::Optimistic, "inv-State_O", inv_state_o)
}

/// Scans entries recorded in resilient mode for violations of the
/// resilient state invariant.
pub fn check_inv_resilient(trace: &Trace) -> Verdict {
    check_inv_entries(trace, Mode::Resilient, "inv-State_R", inv_state_r)
}

fn check_inv_entries(
    trace: &Trace,
    mode: Mode,
    predicate: &str,
    inv: impl Fn(&State) -> bool,
) -> Verdict {
    let mut findings = Vec::new();
    for (index, entry) in trace.entries.iter().enumerate() {
        if entry.mode == mode && !inv(&entry.state) {
            findings.push(Finding {
                predicate: predicate.to_string(),
                at: entry.alpha,
                index,
                detail: describe_inv_violation(&entry.state, mode),
            });
        }
    }
    Verdict::from_findings(findings)
}

fn describe_inv_violation(state: &State, mode: Mode) -> String {
    for (id, job) in &state.active {
        let need = match mode {
            Mode::Optimistic => signed(job.info.wcet.quanta()) - signed(job.exec.quanta()),
            Mode::Resilient => {
                if !job.info.crit.is_hi() {
                    continue;
                }
                signed(job.info.wcet.quanta()) + signed(job.info.crit.extra().quanta())
                    - signed(job.exec.quanta())
            }
        };
        let room = signed(job.info.deadline.quanta()) - signed(state.t.quanta());
        if need > room {
            return format!(
                "job {id} needs {need} more quanta but only {room} remain before d={} at t={}",
                job.info.deadline, state.t
            );
        }
    }
    "invariant violated".to_string()
}

/// Derived deadline evidence: one finding per job whose deadline was
/// observably missed, at the earliest entry that shows it (either the job
/// is still active past its deadline, or its completion came too late).
/// Abandoned jobs are excluded; abandonment is a deliberate sacrifice, not
/// a miss.
pub fn check_deadlines(trace: &Trace) -> Verdict {
    let mut findings = Vec::new();
    let mut ids: Vec<JobId> = Vec::new();
    for entry in &trace.entries {
        for id in entry.state.active.keys() {
            if !ids.contains(id) {
                ids.push(id.clone());
            }
        }
    }
    ids.sort();

    for id in &ids {
        let abandoned = trace.entries.iter().any(|e| {
            e.event
                .as_ref()
                .is_some_and(|ev| ev.kind == EventKind::Abandonment && &ev.job == id)
        });
        if abandoned {
            continue;
        }
        let mut finding = None;
        for (index, entry) in trace.entries.iter().enumerate() {
            if let Some(job) = entry.state.active.get(id) {
                if entry.state.t > job.info.deadline {
                    finding = Some(Finding {
                        predicate: "deadline".to_string(),
                        at: entry.alpha,
                        index,
                        detail: format!(
                            "job {id} still active at t={} past its deadline {}",
                            entry.state.t, job.info.deadline
                        ),
                    });
                    break;
                }
            }
            if let Some(ev) = &entry.event {
                if ev.kind == EventKind::Completion && &ev.job == id {
                    if let Some(d) = deadline_of(trace, id) {
                        if ev.t > d {
                            finding = Some(Finding {
                                predicate: "deadline".to_string(),
                                at: entry.alpha,
                                index,
                                detail: format!(
                                    "job {id} completed at t={} after its deadline {}",
                                    ev.t, d
                                ),
                            });
                        }
                    }
                    break;
                }
            }
        }
        findings.extend(finding);
    }
    findings.sort_by_key(|f| f.index);
    Verdict::from_findings(findings)
}

fn deadline_of(trace: &Trace, id: &JobId) -> Option<crate::timebase::ClockValue> {
    trace
        .entries
        .iter()
        .find_map(|e| e.state.active.get(id).map(|j| j.info.deadline))
}
