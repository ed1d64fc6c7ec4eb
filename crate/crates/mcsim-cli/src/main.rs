//! `mcsim` — simulate, check, and analyze mixed-criticality job workloads.
//!
//! Exit codes: 0 when the command ran and everything passed, 2 when checks
//! ran and found violations (or an analysis verdict is infeasible), 1 on
//! usage or configuration errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mcsim::analysis::{
    capacity_violation, exhaustive_feasibility, necessary_condition, scenario_analysis_mc,
    AnalysisError, FeasibilityVerdict, Scenario, WorkloadSpec,
};
use mcsim::monitors::{
    check_guar_all, check_inv_optimistic, check_inv_resilient, check_p_e, check_p_t,
    check_rely_recorded, Mode, Verdict,
};
use mcsim::schedulers::PolicyId;
use mcsim::sim::{self, tracefile, DemandModel, Outcome, RunConfig, Trace};

#[derive(Parser)]
#[command(name = "mcsim", version, about = "Mixed-criticality scheduling simulator and trace checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a workload under a policy and record the trace
    Sim(SimArgs),
    /// Check a recorded trace against the runtime-verification monitors
    Check(CheckArgs),
    /// Offline schedulability analysis of a workload
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SimArgs {
    /// Workload specification (JSON)
    #[arg(long)]
    workload: PathBuf,
    /// Scheduling policy: edf, cr-edf, edf-ab or naive-rr
    #[arg(long)]
    policy: PolicyId,
    /// Fixed demand scenario (JSON); mutually exclusive with --demand-seed
    #[arg(long, conflicts_with = "demand_seed")]
    scenario: Option<PathBuf>,
    /// Seed for random demands within the criticality bounds
    #[arg(long)]
    demand_seed: Option<u64>,
    /// Output trace file (JSON Lines)
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct CheckArgs {
    /// Trace file produced by `mcsim sim`
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated checks to run (default: all)
    #[arg(long, value_delimiter = ',', default_values_t = CheckKind::all())]
    checks: Vec<CheckKind>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Workload specification (JSON)
    #[arg(long)]
    workload: PathBuf,
    /// Policy the scenario oracle simulates
    #[arg(long)]
    policy: PolicyId,
    /// Which oracle to consult
    #[arg(long, value_enum, default_value_t = Oracle::Scenarios)]
    oracle: Oracle,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Oracle {
    /// Exhaustive schedule search with every demand at C
    Exhaustive,
    /// Boundary demand scenarios simulated under the given policy
    Scenarios,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckKind {
    #[value(name = "p_t")]
    PT,
    #[value(name = "p_e")]
    PE,
    #[value(name = "inv_o")]
    InvO,
    #[value(name = "inv_r")]
    InvR,
    #[value(name = "guar")]
    Guar,
    #[value(name = "rely")]
    Rely,
}

impl CheckKind {
    fn all() -> Vec<CheckKind> {
        vec![
            CheckKind::PT,
            CheckKind::PE,
            CheckKind::InvO,
            CheckKind::InvR,
            CheckKind::Guar,
            CheckKind::Rely,
        ]
    }
}

impl std::fmt::Display for CheckKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            CheckKind::PT => "p_t",
            CheckKind::PE => "p_e",
            CheckKind::InvO => "inv_o",
            CheckKind::InvR => "inv_r",
            CheckKind::Guar => "guar",
            CheckKind::Rely => "rely",
        };
        f.write_str(name)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version print to stdout and succeed; usage errors
            // are configuration errors and exit 1.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Sim(args) => cmd_sim(args),
        Command::Check(args) => cmd_check(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_workload(path: &PathBuf) -> Result<WorkloadSpec> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read workload file {}", path.display()))?;
    let workload: WorkloadSpec = serde_json::from_str(&text)
        .with_context(|| format!("invalid workload JSON in {}", path.display()))?;
    workload.validate().context("invalid workload")?;
    Ok(workload)
}

fn cmd_sim(args: SimArgs) -> Result<u8> {
    let workload = load_workload(&args.workload)?;
    let demands = if let Some(path) = &args.scenario {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario file {}", path.display()))?;
        let scenario: Scenario = serde_json::from_str(&text)
            .with_context(|| format!("invalid scenario JSON in {}", path.display()))?;
        DemandModel::Scenario(scenario)
    } else {
        DemandModel::Seeded(args.demand_seed.unwrap_or(workload.seed))
    };
    let config = RunConfig {
        workload: workload.clone(),
        policy: args.policy,
        demands,
        trace_path: Some(args.trace.clone()),
    };
    let trace = sim::run(&config).context("simulation failed")?;

    match args.format {
        Format::Text => {
            for (id, outcome) in &trace.outcome {
                println!("job {id}: {}", outcome_name(*outcome));
            }
            println!("final mode: {}", trace.final_mode().as_str());
            println!("trace written to {}", args.trace.display());
        }
        Format::Json => {
            let report = serde_json::json!({
                "outcomes": trace.outcome,
                "final_mode": trace.final_mode().as_str(),
                "trace": args.trace.display().to_string(),
            });
            println!("{report}");
        }
    }
    Ok(if run_acceptable(&trace) { 0 } else { 2 })
}

/// Whether the run met the guarantee of the mode it ended in: every
/// deadline if it stayed optimistic, every hi-crit deadline if it went
/// resilient.
fn run_acceptable(trace: &Trace) -> bool {
    let hi_ids: Vec<_> = trace
        .entries
        .iter()
        .flat_map(|e| e.state.active.iter())
        .filter(|(_, job)| job.info.crit.is_hi())
        .map(|(id, _)| id.clone())
        .collect();
    match trace.final_mode() {
        Mode::Optimistic => trace
            .outcome
            .values()
            .all(|o| *o == Outcome::CompletedByDeadline),
        Mode::Resilient => trace
            .outcome
            .iter()
            .filter(|(id, _)| hi_ids.contains(id))
            .all(|(_, o)| *o == Outcome::CompletedByDeadline),
    }
}

fn outcome_name(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::CompletedByDeadline => "completed-by-deadline",
        Outcome::Missed => "missed",
        Outcome::Abandoned => "abandoned",
    }
}

fn cmd_check(args: CheckArgs) -> Result<u8> {
    let trace = tracefile::read_trace_file(&args.trace)
        .with_context(|| format!("cannot load trace {}", args.trace.display()))?;
    let band = trace.band.clone();

    let mut verdicts = Vec::new();
    for check in &args.checks {
        let verdict = match check {
            CheckKind::PT => check_p_t(&trace, &band),
            CheckKind::PE => check_p_e(&trace, &band),
            CheckKind::InvO => check_inv_optimistic(&trace),
            CheckKind::InvR => check_inv_resilient(&trace),
            CheckKind::Guar => check_guar_all(&trace),
            CheckKind::Rely => check_rely_recorded(&trace)
                .context("rely check needs an actor-labelled trace")?,
        };
        verdicts.push(verdict);
    }
    let verdict = Verdict::merge(verdicts);

    match args.format {
        Format::Text => {
            for finding in &verdict.findings {
                println!(
                    "FINDING {} at alpha={} (entry {}): {}",
                    finding.predicate, finding.at, finding.index, finding.detail
                );
            }
            println!(
                "{}: {} finding(s)",
                if verdict.pass { "PASS" } else { "FAIL" },
                verdict.findings.len()
            );
        }
        Format::Json => println!("{}", serde_json::to_string(&verdict)?),
    }
    Ok(if verdict.pass { 0 } else { 2 })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<u8> {
    let workload = load_workload(&args.workload)?;
    let desk_scale = |err: AnalysisError| match err {
        AnalysisError::DeskScaleExceeded { .. } => {
            anyhow::Error::from(err).context("instance too large for the exact oracle")
        }
        other => other.into(),
    };

    match args.oracle {
        Oracle::Exhaustive => {
            let feasible = exhaustive_feasibility(&workload).map_err(desk_scale)?;
            let witness = capacity_violation(&workload);
            match args.format {
                Format::Text => {
                    println!(
                        "optimistic feasibility (all demands = C): {}",
                        if feasible { "feasible" } else { "infeasible" }
                    );
                    println!(
                        "necessary capacity condition: {}",
                        if witness.is_none() { "satisfied" } else { "violated" }
                    );
                    if let Some(cw) = witness {
                        println!(
                            "  capacity witness: window [{}, {}] holds {} quanta of demand but only {} of time",
                            cw.window_start,
                            cw.window_end,
                            cw.demand,
                            cw.window_end - cw.window_start
                        );
                    }
                }
                Format::Json => {
                    let report = serde_json::json!({
                        "oracle": "exhaustive",
                        "optimistic_feasible": feasible,
                        "necessary_condition": necessary_condition(&workload),
                        "capacity_witness": witness,
                    });
                    println!("{report}");
                }
            }
            Ok(if feasible { 0 } else { 2 })
        }
        Oracle::Scenarios => {
            let verdict = scenario_analysis_mc(&workload, args.policy).map_err(desk_scale)?;
            match args.format {
                Format::Text => print_scenario_verdict(&workload, &verdict),
                Format::Json => {
                    let report = serde_json::json!({
                        "oracle": "scenarios",
                        "policy": args.policy.as_str(),
                        "verdict": verdict,
                    });
                    println!("{report}");
                }
            }
            Ok(if verdict.mc_feasible { 0 } else { 2 })
        }
    }
}

fn print_scenario_verdict(workload: &WorkloadSpec, verdict: &FeasibilityVerdict) {
    println!(
        "optimistic feasibility (all demands = C): {}",
        if verdict.optimistic_feasible { "feasible" } else { "infeasible" }
    );
    println!(
        "mixed-criticality feasibility (hi deadlines under every overrun): {}",
        if verdict.mc_feasible { "feasible" } else { "infeasible" }
    );
    if let Some(cw) = capacity_violation(workload) {
        println!(
            "  capacity witness: window [{}, {}] holds {} quanta of demand but only {} of time",
            cw.window_start,
            cw.window_end,
            cw.demand,
            cw.window_end - cw.window_start
        );
    }
    for witness in &verdict.witnesses {
        let demands: Vec<String> = witness
            .scenario
            .demand
            .iter()
            .map(|(id, d)| format!("{id}={d}"))
            .collect();
        println!("  witness [{}]: {}", demands.join(", "), witness.detail);
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}
