//! Targeted monitor scenarios: clean runs pass every check, and each kind
//! of injected fault produces the expected finding at the expected place.

use mcsim::analysis::{CritLevel, JobSpec, Scenario, WorkloadSpec};
use mcsim::jobs::JobId;
use mcsim::monitors::{
    check_deadlines, check_guar_all, check_guar_job, check_inv_optimistic, check_inv_resilient,
    check_p_e, check_p_t, check_rely_recorded, check_rely_scheduler, Actor, Mode, MonitorError,
};
use mcsim::schedulers::PolicyId;
use mcsim::sim::{run, DemandModel, RunConfig, Trace};
use mcsim::timebase::{ClockValue, DriftSource, Duration, GroundTime, TimeBand};

fn id(s: &str) -> JobId {
    JobId::new(s).unwrap()
}

fn job(name: &str, arrival: u64, d: u64, c: u64, extra: Option<u64>) -> JobSpec {
    JobSpec {
        id: id(name),
        arrival: GroundTime::new(arrival),
        deadline_rel: Duration::new(d),
        wcet: Duration::new(c),
        wcet_extra: extra.map(Duration::new),
        crit: if extra.is_some() {
            CritLevel::Hi
        } else {
            CritLevel::Lo
        },
    }
}

fn workload(horizon: u64, jobs: Vec<JobSpec>) -> WorkloadSpec {
    WorkloadSpec {
        band: TimeBand::exact(),
        horizon: Duration::new(horizon),
        seed: 0,
        drift: DriftSource::none(),
        jobs,
    }
}

fn scenario(demands: &[(&str, u64)]) -> DemandModel {
    DemandModel::Scenario(Scenario {
        demand: demands
            .iter()
            .map(|(name, d)| (id(name), Duration::new(*d)))
            .collect(),
    })
}

fn run_trace(workload: WorkloadSpec, policy: PolicyId, demands: DemandModel) -> Trace {
    run(&RunConfig {
        workload,
        policy,
        demands,
        trace_path: None,
    })
    .unwrap()
}

/// Two lo/hi jobs, EDF, demands at the budgets: nothing to report.
fn clean_trace() -> Trace {
    run_trace(
        workload(
            16,
            vec![job("a", 0, 9, 4, None), job("b", 1, 12, 3, Some(2))],
        ),
        PolicyId::Edf,
        scenario(&[("a", 4), ("b", 3)]),
    )
}

#[test]
fn clean_run_passes_every_check() {
    let trace = clean_trace();
    let band = trace.band.clone();
    assert!(check_p_t(&trace, &band).pass);
    assert!(check_p_e(&trace, &band).pass);
    assert!(check_inv_optimistic(&trace).pass);
    assert!(check_inv_resilient(&trace).pass);
    assert!(check_guar_all(&trace).pass);
    assert!(check_rely_recorded(&trace).unwrap().pass);
    assert!(check_deadlines(&trace).pass);
}

#[test]
fn mode_switching_run_passes_every_check() {
    let trace = run_trace(
        workload(
            12,
            vec![job("h", 0, 10, 3, Some(2)), job("l", 0, 6, 3, None)],
        ),
        PolicyId::EdfAb,
        scenario(&[("h", 5), ("l", 3)]),
    );
    let band = trace.band.clone();
    assert_eq!(trace.final_mode(), Mode::Resilient);
    assert!(check_p_t(&trace, &band).pass);
    assert!(check_p_e(&trace, &band).pass);
    assert!(check_inv_optimistic(&trace).pass);
    assert!(check_inv_resilient(&trace).pass);
    assert!(check_guar_all(&trace).pass);
    assert!(check_rely_recorded(&trace).unwrap().pass);
    assert!(check_deadlines(&trace).pass);
}

#[test]
fn drifting_run_passes_clock_checks() {
    let mut w = workload(
        40,
        vec![job("a", 0, 20, 6, None), job("b", 3, 24, 4, Some(2))],
    );
    w.band = TimeBand::new("1ms", Duration::new(2));
    w.drift = DriftSource::bounded(1234, Duration::new(2));
    let trace = run_trace(w, PolicyId::Edf, scenario(&[("a", 6), ("b", 4)]));
    let band = trace.band.clone();
    assert!(check_p_t(&trace, &band).pass);
    assert!(check_p_e(&trace, &band).pass);
}

#[test]
fn clock_tampering_is_reported_by_p_t() {
    let mut trace = clean_trace();
    trace.entries[5].state.t = ClockValue::new(trace.entries[5].alpha.quanta() + 3);
    let verdict = check_p_t(&trace, &trace.band.clone());
    assert!(!verdict.pass);
    assert_eq!(verdict.findings.len(), 1);
    assert_eq!(verdict.findings[0].predicate, "P_t");
    assert_eq!(verdict.findings[0].index, 5);
}

#[test]
fn idle_accrual_is_reported_by_p_e() {
    let mut trace = clean_trace();
    // Job b idles while a runs; bump its exec on a time entry.
    let index = trace
        .entries
        .iter()
        .position(|e| {
            e.actor == Some(Actor::Time)
                && e.state.active.get(&id("b")).is_some_and(|j| !j.run)
        })
        .unwrap();
    let job = trace.entries[index]
        .state
        .active
        .get_mut(&id("b"))
        .unwrap();
    job.exec = job.exec + Duration::ONE;
    let verdict = check_p_e(&trace, &trace.band.clone());
    assert!(!verdict.pass);
    assert!(verdict
        .findings
        .iter()
        .any(|f| f.predicate == "P_e" && f.detail.contains("idle")));
}

#[test]
fn running_shortfall_is_reported_by_p_e() {
    let mut trace = clean_trace();
    // Freeze the running job's exec across one time step.
    let index = trace
        .entries
        .iter()
        .position(|e| {
            e.actor == Some(Actor::Time) && e.state.active.get(&id("a")).is_some_and(|j| j.run)
        })
        .unwrap();
    let job = trace.entries[index]
        .state
        .active
        .get_mut(&id("a"))
        .unwrap();
    job.exec = Duration::ZERO;
    let verdict = check_p_e(&trace, &trace.band.clone());
    assert!(!verdict.pass);
    assert!(verdict
        .findings
        .iter()
        .any(|f| f.predicate == "P_e" && f.detail.contains("running")));
}

#[test]
fn forced_overrun_triggers_guar_and_rely_at_the_same_quantum() {
    let mut trace = clean_trace();
    // Push job a beyond its budget on a time step while optimistic.
    let index = trace
        .entries
        .iter()
        .position(|e| {
            e.actor == Some(Actor::Time) && e.state.active.get(&id("a")).is_some_and(|j| j.run)
        })
        .unwrap();
    {
        let job = trace.entries[index]
            .state
            .active
            .get_mut(&id("a"))
            .unwrap();
        job.exec = Duration::new(5); // C = 4
    }
    let quantum = trace.entries[index].alpha;

    let guar = check_guar_job(&trace, &id("a"), Mode::Optimistic);
    assert!(!guar.pass);
    assert_eq!(guar.findings[0].predicate, "guar-JOB(a)");
    assert_eq!(guar.findings[0].at, quantum);

    let rely = check_rely_scheduler(&trace, Mode::Optimistic).unwrap();
    let ebound: Vec<_> = rely
        .findings
        .iter()
        .filter(|f| f.detail.starts_with("e-bound"))
        .collect();
    assert!(!ebound.is_empty());
    assert_eq!(ebound[0].predicate, "rely-SCHEDULER_O");
    assert_eq!(ebound[0].at, quantum);
}

#[test]
fn guarantee_bounds_are_non_strict() {
    let mut trace = clean_trace();
    let index = trace
        .entries
        .iter()
        .rposition(|e| e.state.active.contains_key(&id("b")))
        .unwrap();
    // e = C exactly is still within the optimistic promise.
    trace.entries[index]
        .state
        .active
        .get_mut(&id("b"))
        .unwrap()
        .exec = Duration::new(3);
    assert!(check_guar_job(&trace, &id("b"), Mode::Optimistic).pass);

    // e = C + X exactly is still within the resilient promise; one more is not.
    trace.entries[index]
        .state
        .active
        .get_mut(&id("b"))
        .unwrap()
        .exec = Duration::new(5);
    assert!(check_guar_job(&trace, &id("b"), Mode::Resilient).pass);
    assert!(!check_guar_job(&trace, &id("b"), Mode::Optimistic).pass);

    trace.entries[index]
        .state
        .active
        .get_mut(&id("b"))
        .unwrap()
        .exec = Duration::new(6);
    assert!(!check_guar_job(&trace, &id("b"), Mode::Resilient).pass);
}

#[test]
fn lo_jobs_make_no_resilient_promise() {
    let mut trace = clean_trace();
    let index = trace
        .entries
        .iter()
        .position(|e| e.state.active.contains_key(&id("a")))
        .unwrap();
    trace.entries[index]
        .state
        .active
        .get_mut(&id("a"))
        .unwrap()
        .exec = Duration::new(40);
    assert!(check_guar_job(&trace, &id("a"), Mode::Resilient).pass);
}

#[test]
fn info_mutation_on_an_environment_step_is_a_frame_violation() {
    let mut trace = clean_trace();
    let index = trace
        .entries
        .iter()
        .position(|e| e.actor == Some(Actor::Time) && e.state.active.contains_key(&id("a")))
        .unwrap();
    trace.entries[index]
        .state
        .active
        .get_mut(&id("a"))
        .unwrap()
        .info
        .deadline = ClockValue::new(99);
    let rely = check_rely_scheduler(&trace, Mode::Optimistic).unwrap();
    assert!(rely
        .findings
        .iter()
        .any(|f| f.detail.starts_with("frame") && f.detail.contains("info")));
}

#[test]
fn run_flip_on_an_environment_step_is_a_frame_violation() {
    let mut trace = clean_trace();
    let index = trace
        .entries
        .iter()
        .position(|e| {
            e.actor == Some(Actor::Time) && e.state.active.get(&id("a")).is_some_and(|j| j.run)
        })
        .unwrap();
    trace.entries[index]
        .state
        .active
        .get_mut(&id("a"))
        .unwrap()
        .run = false;

    // Optimistic: any run change by the environment is a violation.
    let optimistic = check_rely_scheduler(&trace, Mode::Optimistic).unwrap();
    assert!(optimistic
        .findings
        .iter()
        .any(|f| f.detail.contains("run flag")));

    // Resilient: dropping a run flag is a violation (non-decreasing).
    let resilient = check_rely_scheduler(&trace, Mode::Resilient).unwrap();
    assert!(resilient
        .findings
        .iter()
        .any(|f| f.predicate == "rely-SCHEDULER_R" && f.detail.contains("run flag")));
}

#[test]
fn unlabeled_traces_are_rejected_by_rely_checks() {
    let mut trace = clean_trace();
    trace.entries[3].actor = None;
    assert_eq!(
        check_rely_scheduler(&trace, Mode::Optimistic),
        Err(MonitorError::UnlabeledTrace { index: 3 })
    );
    assert_eq!(
        check_rely_recorded(&trace),
        Err(MonitorError::UnlabeledTrace { index: 3 })
    );
    // Checks without attribution needs still work.
    assert!(check_p_t(&trace, &trace.band.clone()).pass);
}

#[test]
fn late_completion_is_a_deadline_finding() {
    // Demand beyond what EDF can serve before the deadline.
    let trace = run_trace(
        workload(20, vec![job("a", 0, 4, 3, None), job("b", 0, 5, 3, None)]),
        PolicyId::Edf,
        scenario(&[("a", 3), ("b", 3)]),
    );
    let verdict = check_deadlines(&trace);
    assert!(!verdict.pass);
    assert!(verdict
        .findings
        .iter()
        .any(|f| f.predicate == "deadline" && f.detail.contains('b')));
}

#[test]
fn abandoned_jobs_are_not_deadline_misses() {
    let trace = run_trace(
        workload(
            14,
            vec![job("h", 0, 9, 3, Some(3)), job("l", 0, 12, 4, None)],
        ),
        PolicyId::EdfAb,
        scenario(&[("h", 6), ("l", 4)]),
    );
    use mcsim::sim::Outcome;
    assert_eq!(trace.outcome[&id("l")], Outcome::Abandoned);
    assert!(check_deadlines(&trace).pass);
}

#[test]
fn verdicts_are_deterministic() {
    let t1 = clean_trace();
    let t2 = clean_trace();
    assert_eq!(
        check_guar_all(&t1),
        check_guar_all(&t2)
    );
    assert_eq!(
        check_rely_recorded(&t1).unwrap(),
        check_rely_recorded(&t2).unwrap()
    );
    assert_eq!(
        check_p_e(&t1, &t1.band.clone()),
        check_p_e(&t2, &t2.band.clone())
    );
}
