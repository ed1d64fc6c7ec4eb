//! The machine-state data model: active jobs, their static and dynamic
//! records, and the discrete life-cycle transitions (arrival, run-flag
//! control, completion, abandonment).
//!
//! All transitions are pure state-to-state functions. Execution time is
//! deliberately absent from this module's levers: only
//! [`timebase::advance_world`](crate::timebase::advance_world) may change a
//! job's `exec` field.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timebase::{ClockValue, Duration, GroundTime};

/// Identifier of a job, unique within the active map at any instant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(String);

impl JobId {
    pub fn new(name: impl Into<String>) -> Result<Self, JobError> {
        let name = name.into();
        if name.is_empty() {
            return Err(JobError::EmptyId);
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Assurance level of a job. Hi-crit jobs carry an extra execution-time
/// allowance they may consume after overrunning their expected budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criticality {
    Lo,
    Hi { extra: Duration },
}

impl Criticality {
    pub fn hi(extra: Duration) -> Self {
        Criticality::Hi { extra }
    }

    pub fn is_hi(&self) -> bool {
        matches!(self, Criticality::Hi { .. })
    }

    /// Extra allowance; zero for lo-crit jobs.
    pub fn extra(&self) -> Duration {
        match self {
            Criticality::Lo => Duration::ZERO,
            Criticality::Hi { extra } => *extra,
        }
    }
}

/// Static per-job data, immutable for the lifetime of the job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobInfo {
    /// Absolute deadline, fixed at arrival as `t + D`.
    pub deadline: ClockValue,
    /// Expected maximum execution time (the optimistic budget C).
    pub wcet: Duration,
    pub crit: Criticality,
}

/// Dynamic per-job data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    /// Accrued execution time; changes only through the passage of time.
    pub exec: Duration,
    /// Whether the job currently holds the processor.
    pub run: bool,
    pub info: JobInfo,
}

/// The state visible to scheduler and jobs: a clock reading plus the map of
/// jobs that have arrived and neither completed nor been abandoned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub t: ClockValue,
    pub active: BTreeMap<JobId, Job>,
}

impl State {
    pub fn new(t: ClockValue) -> Self {
        Self {
            t,
            active: BTreeMap::new(),
        }
    }

    /// Number of jobs currently holding the processor.
    pub fn running_count(&self) -> usize {
        self.active.values().filter(|j| j.run).count()
    }

    /// A new job enters the active map with zero accrued time, not running,
    /// and an absolute deadline of `t + deadline_rel`.
    pub fn arrive(
        &self,
        id: JobId,
        deadline_rel: Duration,
        wcet: Duration,
        crit: Criticality,
    ) -> Result<State, JobError> {
        if self.active.contains_key(&id) {
            return Err(JobError::DuplicateId(id));
        }
        let mut next = self.clone();
        next.active.insert(
            id,
            Job {
                exec: Duration::ZERO,
                run: false,
                info: JobInfo {
                    deadline: self.t + deadline_rel,
                    wcet,
                    crit,
                },
            },
        );
        Ok(next)
    }

    /// Flips a job's run flag; setting the current value is a no-op.
    pub fn set_run(&self, id: &JobId, flag: bool) -> Result<State, JobError> {
        if !self.active.contains_key(id) {
            return Err(JobError::UnknownId(id.clone()));
        }
        let mut next = self.clone();
        next.active.get_mut(id).unwrap().run = flag;
        Ok(next)
    }

    /// Removes a finished job from the active map.
    pub fn complete(&self, id: &JobId) -> Result<State, JobError> {
        let mut next = self.clone();
        if next.active.remove(id).is_none() {
            return Err(JobError::UnknownId(id.clone()));
        }
        Ok(next)
    }

    /// Removes a lo-crit job without completion. Hi-crit jobs must keep
    /// being served, so abandoning one is a policy bug, not a transition.
    pub fn abandon(&self, id: &JobId) -> Result<State, JobError> {
        let job = self
            .active
            .get(id)
            .ok_or_else(|| JobError::UnknownId(id.clone()))?;
        if job.info.crit.is_hi() {
            return Err(JobError::AbandonHiCrit(id.clone()));
        }
        let mut next = self.clone();
        next.active.remove(id);
        Ok(next)
    }
}

/// Kind of a discrete, actor-attributable change to a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrival,
    Completion,
    Abandonment,
    RunSet,
    RunClear,
}

/// A timestamped job life-cycle event. Carries both the ground time and the
/// clock reading at the event, so deadline satisfaction can be judged the
/// way software would (by clock).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobEvent {
    pub kind: EventKind,
    pub job: JobId,
    pub at: GroundTime,
    pub t: ClockValue,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JobError {
    #[error("job id must be a non-empty string")]
    EmptyId,
    #[error("duplicate job id `{0}`")]
    DuplicateId(JobId),
    #[error("unknown job id `{0}`")]
    UnknownId(JobId),
    #[error("cannot abandon hi-crit job `{0}`")]
    AbandonHiCrit(JobId),
}
