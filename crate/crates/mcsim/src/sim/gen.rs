//! Seeded workload generation for property suites and sweeps.
//!
//! Every workload is derived from `(seed, index)` alone, so corpora are
//! reproducible, prefix-stable, and safe to generate in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{CritLevel, JobSpec, WorkloadSpec};
use crate::jobs::JobId;
use crate::timebase::{mix64, DriftSource, Duration, GroundTime, TimeBand};

/// Parameter ranges for generated workloads. Relative deadlines are drawn
/// from `[C, deadline_max]`, which keeps every job non-degenerate by
/// construction, and arrivals from `[0, horizon - D]`, which keeps every
/// deadline inside the horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenBounds {
    /// Jobs per workload, drawn from `[1, max_jobs]`.
    pub max_jobs: usize,
    pub horizon: u64,
    /// Inclusive range for the expected budget C; minimum must be >= 1.
    pub wcet: (u64, u64),
    /// Upper bound for the relative deadline; must be >= the largest C.
    pub deadline_max: u64,
    /// Upper bound for the hi-crit extra allowance X.
    pub extra_max: u64,
    /// Chance (percent) that a job is hi-crit.
    pub hi_percent: u8,
    /// Band precision choices; one is picked per workload, and a drift
    /// bound within it is seeded whenever it is non-zero.
    pub precisions: Vec<u64>,
}

impl Default for GenBounds {
    fn default() -> Self {
        GenBounds {
            max_jobs: 3,
            horizon: 32,
            wcet: (1, 6),
            deadline_max: 16,
            extra_max: 3,
            hi_percent: 50,
            precisions: vec![0],
        }
    }
}

impl GenBounds {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.max_jobs == 0 {
            return Err(GenError::Invalid("max_jobs must be at least 1"));
        }
        if self.wcet.0 == 0 || self.wcet.1 < self.wcet.0 {
            return Err(GenError::Invalid("wcet range must be non-empty with min >= 1"));
        }
        if self.deadline_max < self.wcet.1 {
            return Err(GenError::DeadlineBelowWcet {
                deadline_max: self.deadline_max,
                wcet_max: self.wcet.1,
            });
        }
        if self.horizon < self.deadline_max {
            return Err(GenError::HorizonTooShort {
                horizon: self.horizon,
                deadline_max: self.deadline_max,
            });
        }
        if self.hi_percent > 100 {
            return Err(GenError::Invalid("hi_percent must be within 0..=100"));
        }
        if self.precisions.is_empty() {
            return Err(GenError::Invalid("at least one precision choice is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    /// A deadline bound below the budget bound would permit D < C.
    #[error("bounds permit D < C: deadline_max {deadline_max} < wcet_max {wcet_max}")]
    DeadlineBelowWcet { deadline_max: u64, wcet_max: u64 },
    #[error("horizon {horizon} cannot contain a relative deadline of {deadline_max}")]
    HorizonTooShort { horizon: u64, deadline_max: u64 },
    #[error("invalid generation bounds: {0}")]
    Invalid(&'static str),
}

/// Generates `count` workloads deterministically from `seed`. Every
/// produced spec satisfies the workload invariants.
pub fn generate_workloads(
    seed: u64,
    count: usize,
    bounds: &GenBounds,
) -> Result<Vec<WorkloadSpec>, GenError> {
    bounds.validate()?;
    Ok((0..count)
        .map(|index| generate_one(seed, index as u64, bounds))
        .collect())
}

fn generate_one(seed: u64, index: u64, bounds: &GenBounds) -> WorkloadSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(index)));
    let precision = bounds.precisions[rng.gen_range(0..bounds.precisions.len())];
    let drift = if precision == 0 {
        DriftSource::none()
    } else {
        DriftSource::bounded(rng.gen(), Duration::new(rng.gen_range(1..=precision)))
    };
    let job_count = rng.gen_range(1..=bounds.max_jobs);
    let jobs = (0..job_count)
        .map(|i| {
            let wcet = rng.gen_range(bounds.wcet.0..=bounds.wcet.1);
            let deadline_rel = rng.gen_range(wcet..=bounds.deadline_max);
            let arrival = rng.gen_range(0..=bounds.horizon - deadline_rel);
            let hi = rng.gen_range(0..100u8) < bounds.hi_percent;
            JobSpec {
                id: JobId::new(format!("j{i}")).unwrap(),
                arrival: GroundTime::new(arrival),
                deadline_rel: Duration::new(deadline_rel),
                wcet: Duration::new(wcet),
                wcet_extra: hi.then(|| Duration::new(rng.gen_range(0..=bounds.extra_max))),
                crit: if hi { CritLevel::Hi } else { CritLevel::Lo },
            }
        })
        .collect();
    WorkloadSpec {
        band: TimeBand::new("1ms", Duration::new(precision)),
        horizon: Duration::new(bounds.horizon),
        seed: rng.gen(),
        drift,
        jobs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_prefix_stable() {
        let bounds = GenBounds::default();
        let a = generate_workloads(1, 8, &bounds).unwrap();
        let b = generate_workloads(1, 8, &bounds).unwrap();
        assert_eq!(a, b);
        let prefix = generate_workloads(1, 3, &bounds).unwrap();
        assert_eq!(&a[..3], &prefix[..]);
    }

    #[test]
    fn zero_count_yields_nothing() {
        assert!(generate_workloads(1, 0, &GenBounds::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn generated_specs_always_validate() {
        let bounds = GenBounds {
            max_jobs: 3,
            horizon: 24,
            wcet: (1, 12),
            deadline_max: 20,
            extra_max: 4,
            hi_percent: 60,
            precisions: vec![0, 1, 2],
        };
        for w in generate_workloads(99, 10_000, &bounds).unwrap() {
            w.validate().unwrap();
            for job in &w.jobs {
                assert!(job.deadline_rel >= job.wcet);
            }
        }
    }

    #[test]
    fn degenerate_bounds_are_rejected() {
        let mut bounds = GenBounds::default();
        bounds.deadline_max = 3;
        bounds.wcet = (1, 6);
        assert_eq!(
            generate_workloads(0, 1, &bounds),
            Err(GenError::DeadlineBelowWcet {
                deadline_max: 3,
                wcet_max: 6
            })
        );
    }
}
