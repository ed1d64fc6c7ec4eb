//! Batch evaluation over independent inputs: simulation corpora, trace
//! checks, and per-workload scenario analyses.
//!
//! Each entry point comes in two flavours. The plain one is data-parallel
//! via rayon when the `parallel` feature (default) is enabled; the `_seq`
//! one is always sequential. Results are collected in input order either
//! way, so the two are observably identical — the benches compare their
//! throughput.

use crate::analysis::{scenario_analysis_mc, AnalysisError, FeasibilityVerdict, WorkloadSpec};
use crate::monitors::{check_p_e, check_p_t, Verdict};
use crate::schedulers::PolicyId;
use crate::sim::{run, RunConfig, SimError, Trace};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs every configuration, in parallel when enabled.
pub fn run_corpus(configs: &[RunConfig]) -> Vec<Result<Trace, SimError>> {
    map_collect(configs, run)
}

/// Sequential twin of [`run_corpus`].
pub fn run_corpus_seq(configs: &[RunConfig]) -> Vec<Result<Trace, SimError>> {
    configs.iter().map(run).collect()
}

/// Scenario-analyses every workload under one policy, in parallel when
/// enabled.
pub fn analyze_corpus(
    workloads: &[WorkloadSpec],
    policy: PolicyId,
) -> Vec<Result<FeasibilityVerdict, AnalysisError>> {
    map_collect(workloads, |w| scenario_analysis_mc(w, policy))
}

/// Sequential twin of [`analyze_corpus`].
pub fn analyze_corpus_seq(
    workloads: &[WorkloadSpec],
    policy: PolicyId,
) -> Vec<Result<FeasibilityVerdict, AnalysisError>> {
    workloads
        .iter()
        .map(|w| scenario_analysis_mc(w, policy))
        .collect()
}

/// Checks clock precision and execution accounting on every trace, in
/// parallel when enabled.
pub fn check_corpus(traces: &[Trace]) -> Vec<Verdict> {
    map_collect(traces, |t| {
        Verdict::merge([check_p_t(t, &t.band), check_p_e(t, &t.band)])
    })
}

/// Sequential twin of [`check_corpus`].
pub fn check_corpus_seq(traces: &[Trace]) -> Vec<Verdict> {
    traces
        .iter()
        .map(|t| Verdict::merge([check_p_t(t, &t.band), check_p_e(t, &t.band)]))
        .collect()
}
