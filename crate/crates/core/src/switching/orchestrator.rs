use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::case_io::NetworkCase;
use crate::network::{classify_buses, BusType, BusTypeAssignment, Network};
use crate::solver::{nr_solve, PowerFlowState, SolveOptions, SolveOutcome, SolveStatus};
use crate::switching::paths::{build_path_catalog_from, select_ppqv_pairs};
use crate::switching::violations::{check_violations_with, generator_q, ViolationReport, ViolationRules};
use crate::switching::{apply_ppqv_switch, enforce_q_limits, SwitchingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchVariant {
    /// A single power flow, no switching.
    Baseline,
    /// Generator reactive limits only.
    Qlim,
    /// Reactive limits, then every selected P/PQV pair before re-solving.
    PpqvBatch,
    /// Reactive limits, then one P/PQV pair per re-solve.
    PpqvIncremental,
}

impl SwitchVariant {
    pub const ALL: [SwitchVariant; 4] = [
        SwitchVariant::Baseline,
        SwitchVariant::Qlim,
        SwitchVariant::PpqvBatch,
        SwitchVariant::PpqvIncremental,
    ];

    /// Short name used in reports and on the command line.
    pub fn label(self) -> &'static str {
        match self {
            SwitchVariant::Baseline => "baseline",
            SwitchVariant::Qlim => "qlim",
            SwitchVariant::PpqvBatch => "ppqv",
            SwitchVariant::PpqvIncremental => "ppqv_prime",
        }
    }

    fn q_switching(self) -> bool {
        self != SwitchVariant::Baseline
    }

    fn ppqv_switching(self) -> bool {
        matches!(self, SwitchVariant::PpqvBatch | SwitchVariant::PpqvIncremental)
    }
}

impl std::fmt::Display for SwitchVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingOptions {
    pub solve: SolveOptions,
    pub max_hops: usize,
    /// Upper bound on the number of power-flow runs.
    pub outer_cap: usize,
    pub rules: ViolationRules,
    pub ranking: Ranking,
}

/// How the P/PQV variants pick the iterate they return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// Fewest violations overall, then generator voltage, generator
    /// reactive power and load voltage counts, then magnitude.
    TotalFirst,
    /// Generator voltage, generator reactive power, load voltage counts,
    /// then magnitude, among iterates with no more violations than the
    /// first run.
    Priority,
}

impl Default for SwitchingOptions {
    fn default() -> Self {
        SwitchingOptions {
            solve: SolveOptions::default(),
            max_hops: 8,
            outer_cap: 20,
            rules: ViolationRules::default(),
            ranking: Ranking::TotalFirst,
        }
    }
}

/// One power-flow run of the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub assignment: BusTypeAssignment,
    pub outcome: SolveOutcome,
    /// Present when the run converged.
    pub report: Option<ViolationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingResult {
    pub variant: SwitchVariant,
    pub final_state: PowerFlowState,
    pub final_report: ViolationReport,
    pub final_assignment: BusTypeAssignment,
    /// Index into `history` of the returned iterate.
    pub chosen_iteration: usize,
    pub outer_iterations: usize,
    /// P/PQV exchanges present in the returned assignment.
    pub ppqv_switches: usize,
    /// PV -> PQ switches present in the returned assignment.
    pub q_switches: usize,
    /// Load-voltage violations of the first run minus those of the returned
    /// iterate, floored at zero.
    pub resolved_v_violations: usize,
    /// The first power flow did not converge; the state carries no
    /// guarantee and the report is empty.
    pub divergent: bool,
    pub history: Vec<OuterIteration>,
    /// Seconds spent in the whole run. Not serialized, so that reports of
    /// the same run compare equal.
    #[serde(skip)]
    pub wall_time: f64,
}

impl SwitchingResult {
    pub fn is_feasible(&self) -> bool {
        !self.divergent && self.final_report.is_feasible()
    }

    /// Report of the first run, if it converged.
    pub fn baseline_report(&self) -> Option<&ViolationReport> {
        self.history.first().and_then(|h| h.report.as_ref())
    }
}

/// Builds the network from `case` and runs the loop from its initial types.
pub fn run_with_switching(
    case: &NetworkCase,
    variant: SwitchVariant,
    options: &SwitchingOptions,
) -> Result<SwitchingResult, SwitchingError> {
    let network = Network::from_case(case)?;
    let assignment = classify_buses(case)?;
    run_on_network(&network, &assignment, variant, options)
}

/// The outer loop: solve, check, switch, re-solve.
///
/// Q-limit switching runs first whenever a PV bus violates its reactive
/// limits. Once none remain, violated load voltages are paired with
/// generator buses through a catalog rebuilt for the current types. The
/// loop stops at a feasible point, when no further switch is possible, at a
/// divergent run or at the iteration cap.
///
/// The returned iterate is the last converged one for [`SwitchVariant::Qlim`]
/// and the best-ranked converged one for the P/PQV variants, so those never
/// end with more violations than the first run.
pub fn run_on_network(
    network: &Network,
    initial: &BusTypeAssignment,
    variant: SwitchVariant,
    options: &SwitchingOptions,
) -> Result<SwitchingResult, SwitchingError> {
    let started = Instant::now();
    let mut history: Vec<OuterIteration> = Vec::new();
    let mut assignment = initial.clone();

    loop {
        let outcome = nr_solve(network, &assignment, &options.solve)?;
        let converged = outcome.status == SolveStatus::Converged;
        let report = converged.then(|| check_violations_with(&outcome.state, network, &assignment, &options.rules));
        history.push(OuterIteration {
            assignment: assignment.clone(),
            outcome,
            report,
        });
        if !converged {
            log::debug!("{}: run {} did not converge", variant, history.len());
            break;
        }
        let report = history.last().and_then(|h| h.report.as_ref()).expect("converged run has a report");
        if report.is_feasible() || history.len() >= options.outer_cap {
            break;
        }

        if variant.q_switching() && report.gen_q.iter().any(|v| assignment.bus_type(v.bus) == BusType::PV) {
            assignment = enforce_q_limits(report, &assignment, network).assignment;
            continue;
        }

        if variant.ppqv_switching() && !report.load_v.is_empty() {
            let sources: Vec<usize> = report.load_v.iter().map(|v| v.bus).collect();
            let catalog = build_path_catalog_from(&network.topology, &assignment, options.max_hops, &sources);
            let pairs = select_ppqv_pairs(report, &catalog);
            let take = match variant {
                SwitchVariant::PpqvIncremental => pairs.len().min(1),
                _ => pairs.len(),
            };
            if take > 0 {
                for pair in &pairs[..take] {
                    assignment = apply_ppqv_switch(pair, &assignment, network)?;
                }
                continue;
            }
        }
        break;
    }

    let chosen = choose(&history, variant, options.ranking);
    Ok(finish(variant, network, initial, history, chosen, started))
}

fn choose(history: &[OuterIteration], variant: SwitchVariant, ranking: Ranking) -> Option<usize> {
    let first_total = history[0].report.as_ref().map(|r| r.total_count());
    let converged = history
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.report.as_ref().map(|r| (i, r)))
        .filter(|(_, r)| ranking == Ranking::TotalFirst || first_total.is_none_or(|t| r.total_count() <= t));
    let better = |a: &ViolationReport, b: &ViolationReport| match ranking {
        Ranking::TotalFirst => a.better_than(b),
        Ranking::Priority => a.priority_better_than(b),
    };
    let last_converged = history.last().filter(|h| h.report.is_some()).map(|_| history.len() - 1);
    match variant {
        SwitchVariant::Baseline | SwitchVariant::Qlim if last_converged.is_some() => last_converged,
        _ => converged
            .reduce(|best, cur| if better(cur.1, best.1) { cur } else { best })
            .map(|(i, _)| i),
    }
}

fn finish(
    variant: SwitchVariant,
    network: &Network,
    initial: &BusTypeAssignment,
    history: Vec<OuterIteration>,
    chosen: Option<usize>,
    started: Instant,
) -> SwitchingResult {
    let outer_iterations = history.len();
    let (idx, divergent) = match chosen {
        Some(i) => (i, false),
        None => (history.len() - 1, true),
    };
    let picked = &history[idx];
    let final_assignment = picked.assignment.clone();
    let final_state = picked.outcome.state.clone();
    let final_report = picked.report.clone().unwrap_or_default();

    let n = network.n();
    let ppqv_switches = (0..n).filter(|&k| final_assignment.bus_type(k) == BusType::PQV).count();
    let q_switches = (0..n)
        .filter(|&k| initial.bus_type(k) == BusType::PV && final_assignment.bus_type(k) == BusType::PQ)
        .count();
    let resolved_v_violations = match (&history[0].report, divergent) {
        (Some(first), false) => first.load_v.len().saturating_sub(final_report.load_v.len()),
        _ => 0,
    };

    SwitchingResult {
        variant,
        final_state,
        final_report,
        final_assignment,
        chosen_iteration: idx,
        outer_iterations,
        ppqv_switches,
        q_switches,
        resolved_v_violations,
        divergent,
        history,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

/// Re-checks a finished run against the switching invariants: a valid
/// assignment, pinned voltages exactly on a bound, clamped reactive outputs
/// on a limit, a report that matches the state, and no regression against
/// the first run for the P/PQV variants.
pub fn verify_result(
    result: &SwitchingResult,
    network: &Network,
    initial: &BusTypeAssignment,
    options: &SwitchingOptions,
) -> Result<(), String> {
    for h in &result.history {
        h.assignment.validate()?;
    }
    if result.divergent {
        return Ok(());
    }
    let a = &result.final_assignment;
    let s = &result.final_state;
    for k in 0..network.n() {
        let id = network.bus_id(k);
        match (initial.bus_type(k), a.bus_type(k)) {
            (BusType::PQ, BusType::PQV) => {
                if s.v[k] != network.vmin[k] && s.v[k] != network.vmax[k] {
                    return Err(format!("bus {id}: pinned voltage {} is not on a bound", s.v[k]));
                }
            }
            (BusType::PV, BusType::PQ) => {
                let (qmin, qmax) = network.gen_q_limits[k].ok_or(format!("bus {id}: no generator"))?;
                let q = generator_q(s, network, k);
                let tol = 4.0 * f64::EPSILON * qmin.abs().max(qmax.abs()).max(network.qd[k].abs()).max(1.0);
                if (q - qmin).abs() > tol && (q - qmax).abs() > tol {
                    return Err(format!("bus {id}: clamped reactive output {q} is not on a limit"));
                }
            }
            (from, to) if from != to && !matches!((from, to), (BusType::PV, BusType::P)) => {
                return Err(format!("bus {id}: unexpected switch {from} -> {to}"));
            }
            _ => {}
        }
    }
    let recheck = check_violations_with(s, network, a, &options.rules);
    if recheck != result.final_report {
        return Err("final report does not match the final state".into());
    }
    if matches!(result.variant, SwitchVariant::PpqvBatch | SwitchVariant::PpqvIncremental) {
        if let Some(first) = result.baseline_report() {
            if result.final_report.total_count() > first.total_count() {
                return Err(format!(
                    "{} violations after switching, {} before",
                    result.final_report.total_count(),
                    first.total_count()
                ));
            }
        }
    }
    Ok(())
}
