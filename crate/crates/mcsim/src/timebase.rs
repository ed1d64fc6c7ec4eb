//! Time modelling: dense real time discretised into quanta, drifting
//! hardware clocks bounded by a band precision, and the autonomous
//! passage-of-time step that accrues execution time.
//!
//! Ground-truth time ([`GroundTime`]) is a quantum counter that only the
//! simulation loop advances. Software components never observe it directly:
//! they read a [`ClockValue`] that may deviate from ground truth by at most
//! the band precision. Execution-time accounting ([`advance_world`]) is
//! exact on the ground-truth axis, so all imprecision lives in the clock.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jobs::State;

/// Real time, counted in whole quanta of the band granularity.
///
/// Monotonically non-decreasing over a run; never visible to scheduler or
/// job code.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct GroundTime(u64);

/// What a hardware clock reports; within band precision of [`GroundTime`]
/// on every recorded snapshot.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClockValue(u64);

/// A non-negative span of time in whole quanta.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Duration(u64);

impl GroundTime {
    pub const ZERO: Self = Self(0);

    pub const fn new(quanta: u64) -> Self {
        Self(quanta)
    }

    pub const fn quanta(self) -> u64 {
        self.0
    }
}

impl ClockValue {
    pub const ZERO: Self = Self(0);

    pub const fn new(quanta: u64) -> Self {
        Self(quanta)
    }

    pub const fn quanta(self) -> u64 {
        self.0
    }
}

impl Duration {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    pub const fn new(quanta: u64) -> Self {
        Self(quanta)
    }

    pub const fn quanta(self) -> u64 {
        self.0
    }
}

impl Add<Duration> for GroundTime {
    type Output = GroundTime;

    fn add(self, rhs: Duration) -> GroundTime {
        GroundTime(self.0 + rhs.0)
    }
}

impl Add<Duration> for ClockValue {
    type Output = ClockValue;

    fn add(self, rhs: Duration) -> ClockValue {
        ClockValue(self.0 + rhs.0)
    }
}

impl Add for Duration {
    type Output = Duration;

    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl AddAssign for Duration {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

impl fmt::Display for GroundTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ClockValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Equality up to a precision: `|a - b| <= rho`, on raw quantum counts.
pub fn rho_eq(a: u64, b: u64, rho: Duration) -> bool {
    a.abs_diff(b) <= rho.quanta()
}

/// A time band: the granularity names the unit of one quantum, the
/// precision bounds every duration the band treats as instantaneous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBand {
    /// Human-readable unit of one quantum, e.g. "1ms". Informational only.
    pub granularity_label: String,
    /// Longest duration treated as instantaneous in this band (rho).
    pub precision: Duration,
}

impl TimeBand {
    pub fn new(granularity_label: impl Into<String>, precision: Duration) -> Self {
        Self {
            granularity_label: granularity_label.into(),
            precision,
        }
    }

    /// Band with a perfect clock (precision zero).
    pub fn exact() -> Self {
        Self::new("quantum", Duration::ZERO)
    }
}

impl Default for TimeBand {
    fn default() -> Self {
        Self::exact()
    }
}

/// Model of the gap between the hardware clock and ground-truth time.
///
/// The emitted offset is a pure function of (seed, ground time): drift is
/// re-sampled every quantum and never accumulates, so the clock stays within
/// `bound` of ground truth forever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum DriftSource {
    /// Perfect clock: the offset is always zero.
    None,
    /// Seeded per-quantum offset, uniform over `[-bound, +bound]`.
    /// `bound` must not exceed the band precision.
    BoundedRandom { seed: u64, bound: Duration },
}

impl DriftSource {
    pub fn none() -> Self {
        DriftSource::None
    }

    pub fn bounded(seed: u64, bound: Duration) -> Self {
        DriftSource::BoundedRandom { seed, bound }
    }

    /// Maximum magnitude the offset can take.
    pub fn bound(&self) -> Duration {
        match self {
            DriftSource::None => Duration::ZERO,
            DriftSource::BoundedRandom { bound, .. } => *bound,
        }
    }

    /// Signed clock offset at `alpha`. Deterministic and memoryless.
    pub fn offset_at(&self, alpha: GroundTime) -> i64 {
        match self {
            DriftSource::None => 0,
            DriftSource::BoundedRandom { seed, bound } => {
                let b = bound.quanta();
                if b == 0 {
                    return 0;
                }
                let h = mix64(seed.wrapping_add(alpha.quanta().wrapping_mul(0x9e37_79b9_7f4a_7c15)));
                (h % (2 * b + 1)) as i64 - b as i64
            }
        }
    }

    /// Clock reading at `alpha`: ground truth plus the sampled offset,
    /// clamped so the clock never goes negative.
    pub fn clock_at(&self, alpha: GroundTime) -> ClockValue {
        let t = alpha.quanta() as i128 + self.offset_at(alpha) as i128;
        ClockValue::new(t.max(0) as u64)
    }
}

/// SplitMix64 finalizer; the per-quantum drift hash.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ground-truth simulation state: the real-time axis, the clock model, and
/// the machine state observed by scheduler and jobs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub alpha: GroundTime,
    pub drift: DriftSource,
    pub state: State,
}

impl World {
    /// Fresh world at ground time zero with an empty active map. The initial
    /// clock read already includes drift.
    pub fn new(drift: DriftSource) -> Self {
        Self {
            alpha: GroundTime::ZERO,
            drift,
            state: State::new(drift.clock_at(GroundTime::ZERO)),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimeError {
    /// A zero-length step signals a stalled event loop rather than a no-op.
    #[error("time step of zero quanta (stalled event loop)")]
    ZeroStep,
}

/// The autonomous passage-of-time step.
///
/// Advances ground truth by `dt`, re-reads the clock, and accrues exactly
/// `dt` of execution time to every job whose `run` flag is set. Never
/// touches run flags, job info, or the domain of the active map; arrivals
/// and completions are separate discrete events, so no discrete event may
/// be scheduled strictly inside the interval.
pub fn advance_world(world: &World, dt: Duration, band: &TimeBand) -> Result<World, TimeError> {
    if dt == Duration::ZERO {
        return Err(TimeError::ZeroStep);
    }
    debug_assert!(
        world.drift.bound() <= band.precision,
        "drift bound must stay within band precision"
    );
    let alpha = world.alpha + dt;
    let mut state = world.state.clone();
    state.t = world.drift.clock_at(alpha);
    for job in state.active.values_mut() {
        if job.run {
            job.exec += dt;
        }
    }
    Ok(World {
        alpha,
        drift: world.drift,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobs::{Criticality, JobId};

    fn band(precision: u64) -> TimeBand {
        TimeBand::new("1ms", Duration::new(precision))
    }

    fn world_with_job(id: &str, run: bool, exec: u64) -> World {
        let mut w = World::new(DriftSource::none());
        w.state = w
            .state
            .arrive(
                JobId::new(id).unwrap(),
                Duration::new(100),
                Duration::new(50),
                Criticality::Lo,
            )
            .unwrap();
        let job = w.state.active.get_mut(&JobId::new(id).unwrap()).unwrap();
        job.run = run;
        job.exec = Duration::new(exec);
        w
    }

    #[test]
    fn rho_eq_examples() {
        assert!(rho_eq(10, 10, Duration::ZERO));
        assert!(rho_eq(52, 53, Duration::ONE));
        assert!(!rho_eq(10, 12, Duration::ONE));
    }

    #[test]
    fn running_job_accrues_exactly_dt() {
        let w = world_with_job("a", true, 0);
        let w2 = advance_world(&w, Duration::new(5), &band(0)).unwrap();
        assert_eq!(w2.alpha, GroundTime::new(5));
        assert_eq!(w2.state.t, ClockValue::new(5));
        assert_eq!(
            w2.state.active[&JobId::new("a").unwrap()].exec,
            Duration::new(5)
        );
    }

    #[test]
    fn idle_job_accrues_nothing() {
        let w = world_with_job("b", false, 3);
        let w2 = advance_world(&w, Duration::new(7), &band(0)).unwrap();
        assert_eq!(
            w2.state.active[&JobId::new("b").unwrap()].exec,
            Duration::new(3)
        );
    }

    #[test]
    fn drifting_clock_stays_within_precision() {
        // Seeded drift with bound 1: after advancing from alpha=10 by 5, the
        // clock must land in {14, 15, 16} while exec accrues exactly.
        let mut w = world_with_job("a", true, 0);
        w.drift = DriftSource::bounded(42, Duration::ONE);
        w.alpha = GroundTime::new(10);
        let w2 = advance_world(&w, Duration::new(5), &band(1)).unwrap();
        assert_eq!(w2.alpha, GroundTime::new(15));
        assert!((14..=16).contains(&w2.state.t.quanta()), "t={}", w2.state.t);
        assert_eq!(
            w2.state.active[&JobId::new("a").unwrap()].exec,
            Duration::new(5)
        );
    }

    #[test]
    fn bounded_drift_never_exceeds_bound() {
        for seed in [0u64, 1, 42, 0xdead_beef] {
            for bound in 0..4u64 {
                let drift = DriftSource::bounded(seed, Duration::new(bound));
                for alpha in 0..2000u64 {
                    let delta = drift.offset_at(GroundTime::new(alpha));
                    assert!(delta.unsigned_abs() <= bound);
                    // Memoryless: re-sampling gives the same offset.
                    assert_eq!(delta, drift.offset_at(GroundTime::new(alpha)));
                }
            }
        }
    }

    #[test]
    fn zero_step_is_rejected() {
        let w = World::new(DriftSource::none());
        assert_eq!(
            advance_world(&w, Duration::ZERO, &band(0)),
            Err(TimeError::ZeroStep)
        );
    }

    #[test]
    fn advance_preserves_run_info_and_domain() {
        let w = world_with_job("a", true, 2);
        let w2 = advance_world(&w, Duration::ONE, &band(0)).unwrap();
        let id = JobId::new("a").unwrap();
        assert_eq!(w.state.active.len(), w2.state.active.len());
        assert_eq!(w.state.active[&id].run, w2.state.active[&id].run);
        assert_eq!(w.state.active[&id].info, w2.state.active[&id].info);
    }

    #[test]
    fn advance_is_deterministic() {
        let mut w = world_with_job("a", true, 0);
        w.drift = DriftSource::bounded(7, Duration::ONE);
        let a = advance_world(&w, Duration::new(3), &band(1)).unwrap();
        let b = advance_world(&w, Duration::new(3), &band(1)).unwrap();
        assert_eq!(a, b);
    }
}
