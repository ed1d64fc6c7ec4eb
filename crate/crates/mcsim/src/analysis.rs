//! Offline schedulability analysis.
//!
//! Three oracles of increasing strength, all exact and all restricted to
//! desk-scale instances where exhaustive reasoning is cheap:
//!
//! * [`necessary_condition`] — the capacity check: no time window may be
//!   asked for more execution than it contains. Necessary, not sufficient.
//! * [`exhaustive_feasibility`] — searches every work-conserving preemptive
//!   single-processor schedule (deadline-ordered first, memoised, pruned at
//!   dead states) for one that completes every job's expected budget by its
//!   deadline.
//! * [`scenario_analysis_mc`] — enumerates the boundary demand scenarios
//!   (each hi-crit job at C or C + X, lo-crit at C), simulates each one
//!   under a given policy with a perfect clock, and reports whether the
//!   mixed-criticality guarantee holds: every deadline in the all-C
//!   scenario, every hi-crit deadline in every scenario.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jobs::{Criticality, JobId};
use crate::schedulers::PolicyId;
use crate::sim::{self, DemandModel, Outcome, RunConfig};
use crate::timebase::{DriftSource, Duration, GroundTime, TimeBand};

/// Criticality designation as it appears in workload files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CritLevel {
    #[serde(rename = "LO")]
    Lo,
    #[serde(rename = "HI")]
    Hi,
}

/// One job line of a workload: arrival time plus the static parameters.
/// The relative deadline lives here, not in the job record; it is consumed
/// by the arrival rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: JobId,
    pub arrival: GroundTime,
    pub deadline_rel: Duration,
    pub wcet: Duration,
    /// Extra allowance for hi-crit jobs; forbidden on LO entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wcet_extra: Option<Duration>,
    pub crit: CritLevel,
}

impl JobSpec {
    pub fn criticality(&self) -> Criticality {
        match self.crit {
            CritLevel::Lo => Criticality::Lo,
            CritLevel::Hi => Criticality::hi(self.wcet_extra.unwrap_or(Duration::ZERO)),
        }
    }

    pub fn is_hi(&self) -> bool {
        self.crit == CritLevel::Hi
    }

    /// Conservative demand bound: C for lo-crit, C + X for hi-crit.
    pub fn worst_demand(&self) -> Duration {
        self.wcet + self.criticality().extra()
    }

    /// Absolute deadline on the ground-truth axis (perfect-clock view).
    pub fn abs_deadline(&self) -> u64 {
        self.arrival.quanta() + self.deadline_rel.quanta()
    }
}

/// A complete simulation workload: the time band, the run horizon, the
/// clock model, and the job arrival plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub band: TimeBand,
    pub horizon: Duration,
    /// Default seed for demand realisation when no scenario is given.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "DriftSource::none")]
    pub drift: DriftSource,
    pub jobs: Vec<JobSpec>,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.horizon == Duration::ZERO {
            return Err(WorkloadError::ZeroHorizon);
        }
        if self.drift.bound() > self.band.precision {
            return Err(WorkloadError::DriftExceedsPrecision {
                bound: self.drift.bound(),
                precision: self.band.precision,
            });
        }
        let mut seen = HashSet::new();
        for job in &self.jobs {
            if job.id.as_str().is_empty() {
                return Err(WorkloadError::EmptyId);
            }
            if !seen.insert(job.id.clone()) {
                return Err(WorkloadError::DuplicateId(job.id.clone()));
            }
            if job.wcet == Duration::ZERO {
                return Err(WorkloadError::ZeroWcet(job.id.clone()));
            }
            if job.deadline_rel == Duration::ZERO {
                return Err(WorkloadError::ZeroDeadline(job.id.clone()));
            }
            if job.crit == CritLevel::Lo && job.wcet_extra.is_some() {
                return Err(WorkloadError::ExtraOnLo(job.id.clone()));
            }
            if job.abs_deadline() > self.horizon.quanta() {
                return Err(WorkloadError::DeadlineBeyondHorizon {
                    id: job.id.clone(),
                    deadline: job.abs_deadline(),
                    horizon: self.horizon.quanta(),
                });
            }
        }
        Ok(())
    }

    pub fn job(&self, id: &JobId) -> Option<&JobSpec> {
        self.jobs.iter().find(|j| &j.id == id)
    }

    /// Copy of this workload with a perfect clock, for analysis runs.
    fn with_exact_clock(&self) -> WorkloadSpec {
        WorkloadSpec {
            band: TimeBand::exact(),
            drift: DriftSource::none(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("workload horizon must be at least one quantum")]
    ZeroHorizon,
    #[error("job id must be a non-empty string")]
    EmptyId,
    #[error("duplicate job id `{0}`")]
    DuplicateId(JobId),
    #[error("job `{0}` has a zero expected execution time")]
    ZeroWcet(JobId),
    #[error("job `{0}` has a zero relative deadline")]
    ZeroDeadline(JobId),
    #[error("lo-crit job `{0}` must not carry an extra allowance")]
    ExtraOnLo(JobId),
    #[error("job `{id}` has deadline {deadline} beyond the horizon {horizon}")]
    DeadlineBeyondHorizon { id: JobId, deadline: u64, horizon: u64 },
    #[error("drift bound {bound} exceeds the band precision {precision}")]
    DriftExceedsPrecision { bound: Duration, precision: Duration },
}

/// A fixed demand realisation: how long each job actually executes before
/// completing. Lo-crit demands stay within [1, C], hi-crit within
/// [1, C + X].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub demand: BTreeMap<JobId, Duration>,
}

/// Verdict of the offline analyses, with witnesses for every negative
/// answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeasibilityVerdict {
    /// Every deadline met when all jobs demand exactly C.
    pub optimistic_feasible: bool,
    /// Optimistic feasibility plus: no hi-crit deadline missed in any
    /// boundary demand scenario.
    pub mc_feasible: bool,
    pub witnesses: Vec<InfeasibilityWitness>,
}

/// The demand scenario under which a miss was observed, plus what missed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InfeasibilityWitness {
    pub scenario: Scenario,
    pub detail: String,
}

/// A time window asked for more execution than it contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CapacityWitness {
    pub window_start: u64,
    pub window_end: u64,
    /// Total expected execution of jobs confined to the window.
    pub demand: u64,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(
        "instance exceeds desk-scale bounds for exact analysis \
         ({jobs} jobs, horizon {horizon}; limits are 4 jobs and 64 quanta); \
         use simulation instead"
    )]
    DeskScaleExceeded { jobs: usize, horizon: u64 },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
}

const DESK_MAX_JOBS: usize = 4;
const DESK_MAX_HORIZON: u64 = 64;

fn check_desk_scale(w: &WorkloadSpec) -> Result<(), AnalysisError> {
    if w.jobs.len() > DESK_MAX_JOBS || w.horizon.quanta() > DESK_MAX_HORIZON {
        return Err(AnalysisError::DeskScaleExceeded {
            jobs: w.jobs.len(),
            horizon: w.horizon.quanta(),
        });
    }
    Ok(())
}

/// Finds a window `[a, b]` whose confined jobs (arrival >= a, absolute
/// deadline <= b) demand more than `b - a` of execution, if one exists.
/// Windows are scanned in ascending order, so the witness is deterministic.
pub fn capacity_violation(w: &WorkloadSpec) -> Option<CapacityWitness> {
    let mut starts: Vec<u64> = w.jobs.iter().map(|j| j.arrival.quanta()).collect();
    let mut ends: Vec<u64> = w.jobs.iter().map(|j| j.abs_deadline()).collect();
    starts.sort_unstable();
    starts.dedup();
    ends.sort_unstable();
    ends.dedup();
    for &a in &starts {
        for &b in &ends {
            if b <= a {
                continue;
            }
            let demand: u64 = w
                .jobs
                .iter()
                .filter(|j| j.arrival.quanta() >= a && j.abs_deadline() <= b)
                .map(|j| j.wcet.quanta())
                .sum();
            if demand > b - a {
                return Some(CapacityWitness {
                    window_start: a,
                    window_end: b,
                    demand,
                });
            }
        }
    }
    None
}

/// Necessary capacity condition: true unless some window is overcommitted.
/// Feasible workloads always satisfy it; the converse does not hold.
pub fn necessary_condition(w: &WorkloadSpec) -> bool {
    capacity_violation(w).is_none()
}

/// Exhaustive single-processor feasibility with all demands at exactly C.
///
/// Searches over per-quantum job choices among work-conserving preemptive
/// schedules (idling never helps with independent jobs), exploring the
/// earliest-deadline choice first, memoising failed states, and pruning any
/// state where some job's remaining work no longer fits before its
/// deadline. Instances beyond desk scale are rejected.
pub fn exhaustive_feasibility(w: &WorkloadSpec) -> Result<bool, AnalysisError> {
    w.validate()?;
    check_desk_scale(w)?;
    if w.jobs.is_empty() {
        return Ok(true);
    }

    // Job order fixed by deadline then id so the EDF-first choice is just
    // the first eligible index.
    let mut order: Vec<&JobSpec> = w.jobs.iter().collect();
    order.sort_by_key(|j| (j.abs_deadline(), j.id.clone()));
    let arrivals: Vec<u64> = order.iter().map(|j| j.arrival.quanta()).collect();
    let deadlines: Vec<u64> = order.iter().map(|j| j.abs_deadline()).collect();
    let initial: Vec<u64> = order.iter().map(|j| j.wcet.quanta()).collect();
    let horizon = w.horizon.quanta();

    let mut failed: HashSet<(u64, Vec<u64>)> = HashSet::new();

    fn search(
        q: u64,
        rem: &mut Vec<u64>,
        horizon: u64,
        arrivals: &[u64],
        deadlines: &[u64],
        failed: &mut HashSet<(u64, Vec<u64>)>,
    ) -> bool {
        if rem.iter().all(|&r| r == 0) {
            return true;
        }
        // Dead state: some job cannot fit its remaining work before its
        // deadline even if it gets every quantum from now on.
        for i in 0..rem.len() {
            if rem[i] > 0 && arrivals[i].max(q) + rem[i] > deadlines[i] {
                return false;
            }
        }
        if q >= horizon {
            return false;
        }
        if failed.contains(&(q, rem.clone())) {
            return false;
        }
        let eligible: Vec<usize> = (0..rem.len())
            .filter(|&i| rem[i] > 0 && arrivals[i] <= q)
            .collect();
        let ok = if eligible.is_empty() {
            // Nothing has arrived yet: skip straight to the next arrival.
            let next = (0..rem.len())
                .filter(|&i| rem[i] > 0)
                .map(|i| arrivals[i])
                .min()
                .expect("some job has work left");
            search(next, rem, horizon, arrivals, deadlines, failed)
        } else {
            eligible.into_iter().any(|i| {
                rem[i] -= 1;
                let found = search(q + 1, rem, horizon, arrivals, deadlines, failed);
                rem[i] += 1;
                found
            })
        };
        if !ok {
            failed.insert((q, rem.clone()));
        }
        ok
    }

    let mut rem = initial;
    Ok(search(
        0,
        &mut rem,
        horizon,
        &arrivals,
        &deadlines,
        &mut failed,
    ))
}

/// The boundary demand scenarios of a workload: every combination of each
/// positive-allowance hi-crit job demanding C or C + X, with everything
/// else at C. The first scenario is always all-C. Scenarios are ordered by
/// their overrun bitmask, so enumeration (and witness order) is canonical.
pub fn boundary_scenarios(w: &WorkloadSpec) -> Vec<Scenario> {
    let overrunnable: Vec<&JobSpec> = w
        .jobs
        .iter()
        .filter(|j| j.is_hi() && j.criticality().extra() > Duration::ZERO)
        .collect();
    let mut scenarios = Vec::with_capacity(1 << overrunnable.len());
    for mask in 0u32..(1 << overrunnable.len()) {
        let mut demand = BTreeMap::new();
        for job in &w.jobs {
            demand.insert(job.id.clone(), job.wcet);
        }
        for (bit, job) in overrunnable.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                demand.insert(job.id.clone(), job.worst_demand());
            }
        }
        scenarios.push(Scenario { demand });
    }
    scenarios
}

/// Simulates every boundary demand scenario under `policy` with a perfect
/// clock and aggregates the mixed-criticality verdict: the all-C scenario
/// must meet every deadline, and no scenario may miss a hi-crit deadline.
/// Witnesses list each miss with its scenario.
pub fn scenario_analysis_mc(
    w: &WorkloadSpec,
    policy: PolicyId,
) -> Result<FeasibilityVerdict, AnalysisError> {
    w.validate()?;
    check_desk_scale(w)?;
    let exact = w.with_exact_clock();
    let scenarios = boundary_scenarios(&exact);

    let mut optimistic_feasible = true;
    let mut mc_feasible = true;
    let mut witnesses = Vec::new();

    for (index, scenario) in scenarios.iter().enumerate() {
        let config = RunConfig {
            workload: exact.clone(),
            policy,
            demands: DemandModel::Scenario(scenario.clone()),
            trace_path: None,
        };
        let trace = sim::run(&config)?;
        let all_c = index == 0;
        for (id, outcome) in &trace.outcome {
            if *outcome != Outcome::Missed {
                continue;
            }
            let spec = exact.job(id).expect("outcome only covers workload jobs");
            if all_c {
                optimistic_feasible = false;
                witnesses.push(InfeasibilityWitness {
                    scenario: scenario.clone(),
                    detail: format!("job {id} misses its deadline with every demand at C"),
                });
            } else if spec.is_hi() {
                witnesses.push(InfeasibilityWitness {
                    scenario: scenario.clone(),
                    detail: format!("hi-crit job {id} misses its deadline under overrun"),
                });
            }
            if spec.is_hi() {
                mc_feasible = false;
            }
        }
    }
    // The mixed-criticality guarantee includes the optimistic clause.
    mc_feasible &= optimistic_feasible;
    Ok(FeasibilityVerdict {
        optimistic_feasible,
        mc_feasible,
        witnesses,
    })
}
