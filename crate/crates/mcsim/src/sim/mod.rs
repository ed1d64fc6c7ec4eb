//! The deterministic discrete-event simulation loop.
//!
//! Each quantum interleaves four actors in a fixed order: workload-driven
//! arrivals, the scheduling policy, the passage of time (one quantum), and
//! job completions. Every actor step appends one snapshot to the trace, so
//! the recorded run is a step-by-step interleaving in which consecutive
//! entries differ by exactly one actor's change.
//!
//! Demands — how long each job really executes — are realised per run,
//! either fixed by a [`Scenario`] or drawn from a seeded generator within
//! the criticality bounds. The policy never sees them: it relies on the
//! declared budgets only.
//!
//! A run is fully deterministic in its [`RunConfig`]; the same
//! configuration produces a byte-identical trace file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{Scenario, WorkloadError, WorkloadSpec};
use crate::jobs::{EventKind, JobError, JobEvent, JobId};
use crate::monitors::{Actor, Mode, TraceEntry};
use crate::schedulers::{decide, PolicyCtx, PolicyId};
use crate::timebase::{advance_world, ClockValue, Duration, GroundTime, TimeBand, TimeError, World};

mod gen;
pub mod tracefile;

pub use gen::{generate_workloads, GenBounds, GenError};

/// How per-run demands are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandModel {
    /// Fixed demands for every job.
    Scenario(Scenario),
    /// Demands drawn per job from a seeded generator, uniform over
    /// `[1, C]` for lo-crit and `[1, C + X]` for hi-crit.
    Seeded(u64),
}

/// Everything a run depends on. The trace file, when requested, embeds a
/// digest of this configuration (minus the output path).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub workload: WorkloadSpec,
    pub policy: PolicyId,
    pub demands: DemandModel,
    #[serde(skip)]
    pub trace_path: Option<PathBuf>,
}

/// Final classification of one job after a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// Completed with a clock reading no later than its deadline.
    CompletedByDeadline,
    /// Completed too late, or still incomplete when the run ended.
    Missed,
    /// Removed by the scheduler to free capacity.
    Abandoned,
}

/// A recorded run: the sampled state sequence, the discrete event log, and
/// the per-job outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub band: TimeBand,
    pub entries: Vec<TraceEntry>,
    pub events: Vec<JobEvent>,
    pub outcome: BTreeMap<JobId, Outcome>,
}

impl Trace {
    /// Mode at the end of the run; optimistic if the trace is empty.
    pub fn final_mode(&self) -> Mode {
        self.entries.last().map_or(Mode::Optimistic, |e| e.mode)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("scenario fixes a demand for unknown job `{0}`")]
    UnknownScenarioJob(JobId),
    #[error("scenario is missing a demand for job `{0}`")]
    MissingDemand(JobId),
    #[error("scenario demand {demand} for job `{id}` outside [1, {max}]")]
    DemandOutOfBounds { id: JobId, demand: u64, max: u64 },
    #[error(transparent)]
    Job(#[from] JobError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error("policy left more than one job running at alpha={0}")]
    MultipleRunning(GroundTime),
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs one simulation to the workload horizon.
///
/// Per quantum: (1) jobs whose arrival time equals the current ground time
/// enter the active map; (2) the policy decides, and every abandonment and
/// run-flag flip is applied and recorded as its own scheduler step;
/// (3) time advances by one quantum, accruing execution to the running job;
/// (4) any job whose accrued time has reached its demand completes. The
/// trace gains one entry per actor step.
pub fn run(config: &RunConfig) -> Result<Trace, SimError> {
    let w = &config.workload;
    w.validate()?;
    let demands = realize_demands(w, &config.demands)?;

    let mut world = World::new(w.drift);
    let mut mode = Mode::Optimistic;
    let mut ctx = PolicyCtx::default();
    let mut entries: Vec<TraceEntry> = Vec::new();
    let mut events: Vec<JobEvent> = Vec::new();

    for q in 0..w.horizon.quanta() {
        debug_assert_eq!(world.alpha.quanta(), q);

        for job in w.jobs.iter().filter(|j| j.arrival.quanta() == q) {
            world.state = world.state.arrive(
                job.id.clone(),
                job.deadline_rel,
                job.wcet,
                job.criticality(),
            )?;
            push_event(
                &mut entries,
                &mut events,
                &world,
                Actor::Arrival,
                EventKind::Arrival,
                job.id.clone(),
                mode,
            );
        }

        let decision = decide(config.policy, &world.state, mode, &mut ctx);
        mode = decision.new_mode;
        let before = entries.len();
        for id in &decision.abandon_set {
            world.state = world.state.abandon(id)?;
            push_event(
                &mut entries,
                &mut events,
                &world,
                Actor::Scheduler,
                EventKind::Abandonment,
                id.clone(),
                mode,
            );
        }
        for id in &decision.stop_set {
            if world.state.active.get(id).is_some_and(|j| j.run) {
                world.state = world.state.set_run(id, false)?;
                push_event(
                    &mut entries,
                    &mut events,
                    &world,
                    Actor::Scheduler,
                    EventKind::RunClear,
                    id.clone(),
                    mode,
                );
            }
        }
        for id in &decision.run_set {
            if !world.state.active.get(id).is_some_and(|j| j.run) {
                world.state = world.state.set_run(id, true)?;
                push_event(
                    &mut entries,
                    &mut events,
                    &world,
                    Actor::Scheduler,
                    EventKind::RunSet,
                    id.clone(),
                    mode,
                );
            }
        }
        if entries.len() == before {
            // The scheduler still took its step, it just changed nothing.
            entries.push(snapshot(&world, Actor::Scheduler, None, mode));
        }
        if world.state.running_count() > 1 {
            return Err(SimError::MultipleRunning(world.alpha));
        }

        world = advance_world(&world, Duration::ONE, &w.band)?;
        entries.push(snapshot(&world, Actor::Time, None, mode));

        let finished: Vec<JobId> = world
            .state
            .active
            .iter()
            .filter(|(id, job)| job.exec >= demands[*id])
            .map(|(id, _)| id.clone())
            .collect();
        for id in finished {
            world.state = world.state.complete(&id)?;
            push_event(
                &mut entries,
                &mut events,
                &world,
                Actor::Job(id.clone()),
                EventKind::Completion,
                id,
                mode,
            );
        }
    }

    let outcome = derive_outcomes(&entries, &events);
    let trace = Trace {
        band: w.band.clone(),
        entries,
        events,
        outcome,
    };
    if let Some(path) = &config.trace_path {
        tracefile::write_trace_file(&trace, config, path)?;
    }
    Ok(trace)
}

fn snapshot(world: &World, actor: Actor, event: Option<JobEvent>, mode: Mode) -> TraceEntry {
    TraceEntry {
        alpha: world.alpha,
        state: world.state.clone(),
        actor: Some(actor),
        event,
        mode,
    }
}

fn push_event(
    entries: &mut Vec<TraceEntry>,
    events: &mut Vec<JobEvent>,
    world: &World,
    actor: Actor,
    kind: EventKind,
    job: JobId,
    mode: Mode,
) {
    let event = JobEvent {
        kind,
        job,
        at: world.alpha,
        t: world.state.t,
    };
    events.push(event.clone());
    entries.push(snapshot(world, actor, Some(event), mode));
}

fn realize_demands(
    w: &WorkloadSpec,
    model: &DemandModel,
) -> Result<BTreeMap<JobId, Duration>, SimError> {
    let mut demands = BTreeMap::new();
    match model {
        DemandModel::Scenario(scenario) => {
            for id in scenario.demand.keys() {
                if w.job(id).is_none() {
                    return Err(SimError::UnknownScenarioJob(id.clone()));
                }
            }
            for job in &w.jobs {
                let demand = *scenario
                    .demand
                    .get(&job.id)
                    .ok_or_else(|| SimError::MissingDemand(job.id.clone()))?;
                let max = job.worst_demand();
                if demand == Duration::ZERO || demand > max {
                    return Err(SimError::DemandOutOfBounds {
                        id: job.id.clone(),
                        demand: demand.quanta(),
                        max: max.quanta(),
                    });
                }
                demands.insert(job.id.clone(), demand);
            }
        }
        DemandModel::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for job in &w.jobs {
                let max = job.worst_demand().quanta();
                demands.insert(job.id.clone(), Duration::new(rng.gen_range(1..=max)));
            }
        }
    }
    Ok(demands)
}

/// Rebuilds the per-job outcome map from a recorded entry/event sequence.
/// Shared by the simulator and the trace file loader so both agree.
pub(crate) fn derive_outcomes(
    entries: &[TraceEntry],
    events: &[JobEvent],
) -> BTreeMap<JobId, Outcome> {
    let mut outcome: BTreeMap<JobId, Outcome> = BTreeMap::new();
    for entry in entries {
        for id in entry.state.active.keys() {
            outcome.entry(id.clone()).or_insert(Outcome::Missed);
        }
    }
    for event in events {
        match event.kind {
            EventKind::Abandonment => {
                outcome.insert(event.job.clone(), Outcome::Abandoned);
            }
            EventKind::Completion => {
                let met = deadline_in_entries(entries, &event.job)
                    .is_some_and(|deadline| event.t <= deadline);
                let result = if met {
                    Outcome::CompletedByDeadline
                } else {
                    Outcome::Missed
                };
                outcome.insert(event.job.clone(), result);
            }
            _ => {}
        }
    }
    outcome
}

fn deadline_in_entries(entries: &[TraceEntry], id: &JobId) -> Option<ClockValue> {
    entries
        .iter()
        .find_map(|e| e.state.active.get(id).map(|j| j.info.deadline))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{CritLevel, JobSpec};
    use crate::timebase::DriftSource;

    fn id(s: &str) -> JobId {
        JobId::new(s).unwrap()
    }

    fn job_spec(name: &str, arrival: u64, d: u64, c: u64, extra: Option<u64>) -> JobSpec {
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

    fn run_with(
        horizon: u64,
        jobs: Vec<JobSpec>,
        policy: PolicyId,
        demands: DemandModel,
    ) -> Trace {
        run(&RunConfig {
            workload: workload(horizon, jobs),
            policy,
            demands,
            trace_path: None,
        })
        .unwrap()
    }

    #[test]
    fn lone_job_completes_at_its_demand() {
        let trace = run_with(
            8,
            vec![job_spec("a", 0, 5, 3, None)],
            PolicyId::Edf,
            scenario(&[("a", 3)]),
        );
        assert_eq!(trace.outcome[&id("a")], Outcome::CompletedByDeadline);
        let completion = trace
            .events
            .iter()
            .find(|e| e.kind == EventKind::Completion)
            .unwrap();
        assert_eq!(completion.t, ClockValue::new(3));
    }

    #[test]
    fn overrun_switches_mode_and_still_meets_the_hi_deadline() {
        // The lo job finishes first under EDF; the hi job exhausts its
        // budget at t=6 unfinished, the policy switches, and the extra
        // allowance carries it to completion at t=8, within its deadline.
        let trace = run_with(
            12,
            vec![
                job_spec("h", 0, 10, 3, Some(2)),
                job_spec("l", 0, 6, 3, None),
            ],
            PolicyId::EdfAb,
            scenario(&[("h", 5), ("l", 3)]),
        );
        assert_eq!(trace.outcome[&id("l")], Outcome::CompletedByDeadline);
        assert_eq!(trace.outcome[&id("h")], Outcome::CompletedByDeadline);
        assert_eq!(trace.final_mode(), Mode::Resilient);

        let first_resilient = trace
            .entries
            .iter()
            .find(|e| e.mode == Mode::Resilient)
            .unwrap();
        assert_eq!(first_resilient.alpha, GroundTime::new(6));

        let h_completion = trace
            .events
            .iter()
            .find(|e| e.kind == EventKind::Completion && e.job == id("h"))
            .unwrap();
        assert_eq!(h_completion.t, ClockValue::new(8));
    }

    #[test]
    fn round_robin_starves_the_tight_deadline() {
        let trace = run_with(
            32,
            vec![
                job_spec("x", 0, 3, 3, None),
                job_spec("y", 0, 30, 3, None),
            ],
            PolicyId::NaiveRr,
            scenario(&[("x", 3), ("y", 3)]),
        );
        assert_eq!(trace.outcome[&id("x")], Outcome::Missed);
        assert_eq!(trace.outcome[&id("y")], Outcome::CompletedByDeadline);
    }

    #[test]
    fn exec_equals_demand_at_completion() {
        let trace = run_with(
            16,
            vec![
                job_spec("a", 0, 9, 4, None),
                job_spec("b", 1, 12, 3, None),
            ],
            PolicyId::Edf,
            scenario(&[("a", 2), ("b", 3)]),
        );
        for event in trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Completion)
        {
            // The entry recording the completion shows the job already gone;
            // the previous entry still holds its final exec value.
            let idx = trace
                .entries
                .iter()
                .position(|en| en.event.as_ref() == Some(event))
                .unwrap();
            let prev = &trace.entries[idx - 1];
            let expected = match event.job.as_str() {
                "a" => 2,
                _ => 3,
            };
            assert_eq!(
                prev.state.active[&event.job].exec,
                Duration::new(expected)
            );
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let config = RunConfig {
            workload: WorkloadSpec {
                band: TimeBand::new("1ms", Duration::ONE),
                horizon: Duration::new(20),
                seed: 3,
                drift: DriftSource::bounded(11, Duration::ONE),
                jobs: vec![
                    job_spec("a", 0, 9, 4, None),
                    job_spec("b", 2, 12, 3, Some(2)),
                ],
            },
            policy: PolicyId::EdfAb,
            demands: DemandModel::Seeded(7),
            trace_path: None,
        };
        let t1 = run(&config).unwrap();
        let t2 = run(&config).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn scenario_demands_are_validated() {
        let w = workload(8, vec![job_spec("a", 0, 5, 3, None)]);
        let missing = run(&RunConfig {
            workload: w.clone(),
            policy: PolicyId::Edf,
            demands: DemandModel::Scenario(Scenario {
                demand: BTreeMap::new(),
            }),
            trace_path: None,
        });
        assert!(matches!(missing, Err(SimError::MissingDemand(_))));

        let over = run(&RunConfig {
            workload: w,
            policy: PolicyId::Edf,
            demands: scenario(&[("a", 4)]),
            trace_path: None,
        });
        assert!(matches!(over, Err(SimError::DemandOutOfBounds { .. })));
    }

    #[test]
    fn seeded_demands_respect_criticality_bounds() {
        let w = workload(
            40,
            vec![
                job_spec("l", 0, 20, 5, None),
                job_spec("h", 0, 30, 5, Some(3)),
            ],
        );
        for seed in 0..200u64 {
            let demands = realize_demands(&w, &DemandModel::Seeded(seed)).unwrap();
            let dl = demands[&id("l")].quanta();
            let dh = demands[&id("h")].quanta();
            assert!((1..=5).contains(&dl));
            assert!((1..=8).contains(&dh));
        }
    }
}
