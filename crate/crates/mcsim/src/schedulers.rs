//! Pluggable run-time scheduling policies for a single processor.
//!
//! A policy is a pure decision function over the observable state: it may
//! flip run flags, abandon lo-crit jobs, and switch the run mode, but it
//! never touches clocks, accrued execution time, or job info. The policies
//! span the conformance spectrum on purpose:
//!
//! * `edf` — plain earliest-deadline-first; never abandons, never switches
//!   mode. Baseline.
//! * `edf-ab` — EDF until a budget overrun threatens, then switches to
//!   resilient mode, abandons every lo-crit job, and serves the hi-crit
//!   jobs EDF-first.
//! * `cr-edf` — EDF that refuses any choice that would break the resilient
//!   reserve invariant one quantum ahead, keeping enough slack for every
//!   hi-crit job to consume its full extra allowance.
//! * `naive-rr` — deadline-blind round-robin; a deliberately non-conforming
//!   negative control.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::jobs::{Job, JobId, State};
use crate::monitors::Mode;

/// Recognized policy names. Unknown names are rejected at configuration
/// parse, not at decision time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyId {
    Edf,
    CrEdf,
    EdfAb,
    NaiveRr,
}

impl PolicyId {
    pub const ALL: [PolicyId; 4] = [
        PolicyId::Edf,
        PolicyId::CrEdf,
        PolicyId::EdfAb,
        PolicyId::NaiveRr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyId::Edf => "edf",
            PolicyId::CrEdf => "cr-edf",
            PolicyId::EdfAb => "edf-ab",
            PolicyId::NaiveRr => "naive-rr",
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}` (expected edf, cr-edf, edf-ab or naive-rr)"))
    }
}

/// What a policy wants applied to the state: run flags to set and clear,
/// lo-crit jobs to abandon, and the mode to continue in. On one processor
/// the resulting running set never exceeds a single job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub run_set: BTreeSet<JobId>,
    pub stop_set: BTreeSet<JobId>,
    pub abandon_set: BTreeSet<JobId>,
    pub new_mode: Mode,
}

impl Decision {
    /// A decision that changes nothing and keeps the current mode.
    pub fn keep(mode: Mode) -> Self {
        Decision {
            run_set: BTreeSet::new(),
            stop_set: BTreeSet::new(),
            abandon_set: BTreeSet::new(),
            new_mode: mode,
        }
    }
}

/// Mutable per-run policy scratch space, owned by the simulation loop.
/// Only `naive-rr` uses it, for its rotation cursor.
#[derive(Debug, Clone, Default)]
pub struct PolicyCtx {
    rr_last: Option<JobId>,
}

/// Active job ids sorted by absolute deadline, ties broken by id.
pub fn edf_order(active: &BTreeMap<JobId, Job>) -> Vec<JobId> {
    let mut ids: Vec<JobId> = active.keys().cloned().collect();
    // BTreeMap iteration is id-sorted; a stable sort on deadline keeps the
    // lexicographic tie-break.
    ids.sort_by_key(|id| active[id].info.deadline);
    ids
}

/// Ids of active jobs that have strictly exceeded their expected budget.
pub fn detect_overrun(state: &State) -> BTreeSet<JobId> {
    state
        .active
        .iter()
        .filter(|(_, job)| job.exec > job.info.wcet)
        .map(|(id, _)| id.clone())
        .collect()
}

/// Whether the optimistic regime is no longer tenable: some job has
/// overrun its budget, or a hi-crit job has consumed its full budget
/// without completing and will overrun on its next quantum.
fn overrun_imminent(state: &State) -> bool {
    state.active.values().any(|job| {
        job.exec > job.info.wcet || (job.info.crit.is_hi() && job.exec >= job.info.wcet)
    })
}

/// Computes the policy's decision for the current state and mode. Called at
/// every quantum boundary; total (a policy that cannot avoid a violation
/// still decides, and the monitors report the violation).
pub fn decide(policy: PolicyId, state: &State, mode: Mode, ctx: &mut PolicyCtx) -> Decision {
    let decision = match policy {
        PolicyId::Edf => decide_edf(state, mode),
        PolicyId::EdfAb => decide_edf_ab(state, mode),
        PolicyId::CrEdf => decide_cr_edf(state, mode),
        PolicyId::NaiveRr => decide_naive_rr(state, mode, ctx),
    };
    debug_assert!(decision.run_set.is_disjoint(&decision.stop_set));
    debug_assert!(decision.new_mode >= mode, "mode switches are one-way");
    decision
}

fn decide_edf(state: &State, mode: Mode) -> Decision {
    let chosen = edf_order(&state.active).into_iter().next();
    single_runner(state, chosen, BTreeSet::new(), mode)
}

fn decide_edf_ab(state: &State, mode: Mode) -> Decision {
    if mode == Mode::Optimistic && !overrun_imminent(state) {
        return decide_edf(state, mode);
    }
    // Resilient regime: shed every lo-crit job, serve hi-crit EDF-first.
    let abandon_set: BTreeSet<JobId> = state
        .active
        .iter()
        .filter(|(_, job)| !job.info.crit.is_hi())
        .map(|(id, _)| id.clone())
        .collect();
    let remaining: BTreeMap<JobId, Job> = state
        .active
        .iter()
        .filter(|(id, _)| !abandon_set.contains(*id))
        .map(|(id, job)| (id.clone(), *job))
        .collect();
    let chosen = edf_order(&remaining).into_iter().next();
    single_runner(state, chosen, abandon_set, Mode::Resilient)
}

fn decide_cr_edf(state: &State, mode: Mode) -> Decision {
    let new_mode = if mode == Mode::Resilient || overrun_imminent(state) {
        Mode::Resilient
    } else {
        Mode::Optimistic
    };
    let order = edf_order(&state.active);
    let chosen = order
        .iter()
        .find(|id| reserve_safe_to_run(state, id))
        .or_else(|| {
            // No safe choice exists: run the hi-crit job with the least
            // reserve slack (ties by id); the monitors will report whatever
            // cannot be saved.
            state
                .active
                .iter()
                .filter(|(_, job)| job.info.crit.is_hi())
                .min_by_key(|(id, job)| (reserve_slack(job, state), (*id).clone()))
                .map(|(id, _)| id)
        })
        .cloned();
    single_runner(state, chosen, BTreeSet::new(), new_mode)
}

/// Reserve slack of a hi-crit job: `(d - t) - (C + X - e)`. Running the job
/// for one quantum keeps its slack constant; running anything else costs it
/// one.
fn reserve_slack(job: &Job, state: &State) -> i128 {
    (job.info.deadline.quanta() as i128 - state.t.quanta() as i128)
        - (job.info.wcet.quanta() as i128 + job.info.crit.extra().quanta() as i128
            - job.exec.quanta() as i128)
}

/// Whether running `candidate` for one quantum keeps the resilient reserve
/// invariant true at the next boundary.
fn reserve_safe_to_run(state: &State, candidate: &JobId) -> bool {
    state
        .active
        .iter()
        .filter(|(_, job)| job.info.crit.is_hi())
        .all(|(id, job)| {
            let slack = reserve_slack(job, state);
            if id == candidate {
                slack >= 0
            } else {
                slack >= 1
            }
        })
}

fn decide_naive_rr(state: &State, mode: Mode, ctx: &mut PolicyCtx) -> Decision {
    if state.active.is_empty() {
        return Decision::keep(mode);
    }
    let chosen = ctx
        .rr_last
        .as_ref()
        .and_then(|last| state.active.keys().find(|id| *id > last))
        .unwrap_or_else(|| state.active.keys().next().unwrap())
        .clone();
    ctx.rr_last = Some(chosen.clone());
    single_runner(state, Some(chosen), BTreeSet::new(), mode)
}

/// Builds the decision that leaves exactly `chosen` running: stops every
/// other running job that is not being abandoned.
fn single_runner(
    state: &State,
    chosen: Option<JobId>,
    abandon_set: BTreeSet<JobId>,
    new_mode: Mode,
) -> Decision {
    let mut run_set = BTreeSet::new();
    if let Some(c) = &chosen {
        run_set.insert(c.clone());
    }
    let stop_set = state
        .active
        .iter()
        .filter(|(id, job)| job.run && Some(*id) != chosen.as_ref() && !abandon_set.contains(*id))
        .map(|(id, _)| id.clone())
        .collect();
    Decision {
        run_set,
        stop_set,
        abandon_set,
        new_mode,
    }
}
