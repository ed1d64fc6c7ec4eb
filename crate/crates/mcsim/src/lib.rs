//! Discrete-event simulation and runtime verification of mixed-criticality
//! job scheduling on a single processor.
//!
//! The crate is organised around three concerns:
//!
//! * **Simulation** — [`sim::run`] steps a workload quantum by quantum,
//!   interleaving job arrivals, a pluggable scheduling policy
//!   ([`schedulers`]), the autonomous passage of time ([`timebase`]), and
//!   job completions, recording an actor-labelled [`sim::Trace`].
//! * **Checking** — [`monitors`] evaluates state invariants, clock/execution
//!   accounting predicates, and per-actor interference conditions on recorded
//!   traces, reporting violations as structured [`monitors::Finding`]s.
//! * **Analysis** — [`analysis`] answers offline schedulability questions:
//!   a necessary capacity condition, an exhaustive feasibility search for
//!   desk-scale instances, and criticality-scenario analysis that simulates
//!   every boundary demand combination.
//!
//! Batch evaluation (scenario sweeps, workload corpora) is data-parallel via
//! rayon when the default `parallel` feature is enabled; disabling it yields
//! a purely sequential build with identical results. Individual simulation
//! runs are always single-threaded and deterministic for a given
//! configuration.

pub mod analysis;
pub mod jobs;
pub mod monitors;
pub mod schedulers;
pub mod sim;
pub mod sweep;
pub mod timebase;

pub use analysis::{FeasibilityVerdict, Scenario, WorkloadSpec};
pub use jobs::{Criticality, Job, JobEvent, JobId, JobInfo, State};
pub use monitors::{Finding, Mode, TraceEntry, Verdict};
pub use schedulers::{Decision, PolicyId};
pub use sim::{RunConfig, Trace};
pub use timebase::{ClockValue, DriftSource, Duration, GroundTime, TimeBand, World};
