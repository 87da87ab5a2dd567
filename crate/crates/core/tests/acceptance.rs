//! Acceptance suite. Each test checks one criterion and prints a single
//! `PASS`/`FAIL` line before asserting, so a plain `cargo test` log shows
//! the outcome of every criterion.

mod common;

use std::io::Write;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use common::*;
use ppqv_core::case_io::write_batch_csv;
use ppqv_core::experiments::{
    build_sample_case, run_batch, run_batch_with, sample_seed, BatchConfig, BatchOutput, ProportionalDispatch,
    SampleContext,
};
use ppqv_core::network::{adjacency, classify_buses};
use ppqv_core::solver::{jacobian, nr_solve};
use ppqv_core::switching::{build_path_catalog, generator_q, run_on_network};
use ppqv_core::{BusType, Network, PowerFlowState, SolveOptions, SwitchVariant, SwitchingOptions, SwitchingResult};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: [&str; 3] = ["case14", "case57", "case300"];

/// Writes straight to the process stdout so the line shows up even when the
/// test harness captures output.
fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2} {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn stock(name: &str) -> (Network, ppqv_core::BusTypeAssignment) {
    let case = load_case(name);
    (Network::from_case(&case).unwrap(), classify_buses(&case).unwrap())
}

#[test]
fn criterion_01_oracle_solve_equivalence() {
    let mut pass = true;
    let mut details = Vec::new();
    for name in CASES {
        let (net, types) = stock(name);
        let started = Instant::now();
        let out = nr_solve(&net, &types, &SolveOptions::default()).unwrap();
        let secs = started.elapsed().as_secs_f64();
        let r = reference(name);
        let slack = types.slack();
        let shift = r.va_rad[slack] - out.state.theta[slack];
        let dv = (0..net.n()).map(|k| (out.state.v[k] - r.vm[k]).abs()).fold(0.0, f64::max);
        let da = (0..net.n())
            .map(|k| (out.state.theta[k] + shift - r.va_rad[k]).abs())
            .fold(0.0, f64::max);
        let ok = out.converged() && out.max_mismatch <= 1e-8 && dv < 1e-5 && da < 1e-5 && secs < 1.0;
        pass &= ok;
        details.push(format!("{name} mismatch {:.1e} dV {dv:.1e} dθ {da:.1e} {secs:.3}s", out.max_mismatch));
    }
    verdict(1, "oracle solve equivalence", pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_02_jacobian_correctness() {
    let mut pass = true;
    let mut details = Vec::new();
    for name in CASES {
        let (net, types) = stock(name);
        let mut rng = ChaCha8Rng::seed_from_u64(0x1ac0b1a2);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let n = net.n();
            let state = PowerFlowState {
                v: (0..n).map(|_| rng.random_range(0.9..1.1)).collect(),
                theta: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
                p: vec![0.0; n],
                q: vec![0.0; n],
            };
            let j = jacobian(&state, &types, &net.ybus).unwrap();
            let fd = fd_jacobian(&net, &types, &state, 1e-6);
            worst = worst.max(max_relative_error(&j, &fd));
        }
        pass &= worst < 1e-5;
        details.push(format!("{name} max rel err {worst:.1e}"));
    }
    verdict(2, "jacobian correctness", pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_03_degree_of_freedom_invariant() {
    let (net, initial) = stock("case14");
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let ops = prop::collection::vec((any::<bool>(), 0usize..64, 0usize..64, any::<bool>()), 0..16);
    let outcome = runner.run(&ops, |ops| {
        let mut types = initial.clone();
        for (q, a, b, upper) in ops {
            let m = if q { Mutation::QLimit { pv: a } } else { Mutation::Pair { pq: a, pv: b, upper } };
            apply_mutation(&net, &mut types, m);
            prop_assert_eq!(types.count(BusType::PQV), types.count(BusType::P));
            prop_assert_eq!(types.count(BusType::Vtheta), 1);
            let j = jacobian(&ppqv_core::solver::flat_start(&types), &types, &net.ybus).unwrap();
            prop_assert!(j.is_square() && j.nrows() == types.n_unknowns());
        }
        Ok(())
    });
    let detail = match &outcome {
        Ok(()) => "0 failures in 10000 sequences".to_string(),
        Err(e) => e.to_string(),
    };
    verdict(3, "degree-of-freedom invariant", outcome.is_ok(), &detail);
    assert!(outcome.is_ok());
}

#[test]
fn criterion_04_q_limit_contract() {
    let case = load_case("case14");
    let options = SwitchingOptions::default();
    let (mut converged, mut offending) = (0, Vec::new());
    for i in 0..200 {
        let seed = sample_seed(4, i);
        let (_, sample) = build_sample_case(&case, seed, &ProportionalDispatch::default()).unwrap();
        let r = ppqv_core::run_with_switching(&sample, SwitchVariant::Qlim, &options).unwrap();
        let terminal_converged = r.history.last().is_some_and(|h| h.report.is_some());
        if terminal_converged {
            converged += 1;
            if r.final_report.q_count() > 0 {
                offending.push(i);
            }
        }
    }
    let pass = offending.is_empty() && converged > 0;
    verdict(
        4,
        "q-limit contract",
        pass,
        &format!("{converged}/200 converged, {} with generator-Q violations {offending:?}", offending.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_05_monotone_improvement() {
    let options = SwitchingOptions::default();
    let mut pass = true;
    let mut details = Vec::new();
    for name in CASES {
        let case = load_case(name);
        let (mut checked, mut drawn, mut worse) = (0, 0u64, 0);
        while checked < 500 {
            let (_, sample) = build_sample_case(&case, sample_seed(5, drawn), &ProportionalDispatch::default()).unwrap();
            drawn += 1;
            let net = Network::from_case(&sample).unwrap();
            let types = classify_buses(&sample).unwrap();
            let base = run_on_network(&net, &types, SwitchVariant::Baseline, &options).unwrap();
            if base.divergent {
                continue;
            }
            checked += 1;
            for v in [SwitchVariant::PpqvBatch, SwitchVariant::PpqvIncremental] {
                let r = run_on_network(&net, &types, v, &options).unwrap();
                if r.divergent || r.final_report.total_count() > base.final_report.total_count() {
                    worse += 1;
                }
            }
        }
        pass &= worse == 0;
        details.push(format!("{name} {worse} worse of {checked} ({drawn} drawn)"));
    }
    verdict(5, "monotone improvement", pass, &details.join("; "));
    assert!(pass);
}

/// The 14-bus batch shared by criteria 6, 7, 8 and 10, with the clamp
/// checks of criterion 8 collected along the way.
struct Case14Batch {
    output: BatchOutput,
    seconds: f64,
    switched_samples: usize,
    clamp_failures: Vec<String>,
}

fn case14_config(jobs: usize) -> BatchConfig {
    BatchConfig {
        n_samples: 2000,
        jobs: Some(jobs),
        ..BatchConfig::default()
    }
}

fn clamp_check(ctx: &SampleContext<'_>, r: &SwitchingResult) -> Vec<String> {
    let (net, s, a) = (ctx.network, &r.final_state, &r.final_assignment);
    let mut bad = Vec::new();
    for k in 0..net.n() {
        match (ctx.initial.bus_type(k), a.bus_type(k)) {
            (BusType::PQ, BusType::PQV) => {
                if s.v[k] != net.vmin[k] && s.v[k] != net.vmax[k] {
                    bad.push(format!("sample {} bus {}: V {} off bound", ctx.index, net.bus_id(k), s.v[k]));
                }
            }
            (BusType::PV, BusType::PQ) => {
                let (lo, hi) = net.gen_q_limits[k].unwrap();
                let q = generator_q(s, net, k);
                let tol = 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(net.qd[k].abs()).max(1.0);
                if (q - lo).abs() > tol && (q - hi).abs() > tol {
                    bad.push(format!("sample {} bus {}: Q {q} off limit", ctx.index, net.bus_id(k)));
                }
            }
            _ => {}
        }
    }
    bad
}

fn case14_batch() -> &'static Case14Batch {
    static BATCH: OnceLock<Case14Batch> = OnceLock::new();
    BATCH.get_or_init(|| {
        let case = load_case("case14");
        let failures = Mutex::new(Vec::new());
        let switched = Mutex::new(std::collections::BTreeSet::new());
        let inspector = |ctx: &SampleContext<'_>, r: &SwitchingResult| {
            if r.ppqv_switches > 0 {
                switched.lock().unwrap().insert(ctx.index);
                failures.lock().unwrap().extend(clamp_check(ctx, r));
            }
        };
        let started = Instant::now();
        let output = run_batch_with(&case, &case14_config(8), &ProportionalDispatch::default(), &inspector).unwrap();
        Case14Batch {
            output,
            seconds: started.elapsed().as_secs_f64(),
            switched_samples: switched.into_inner().unwrap().len(),
            clamp_failures: failures.into_inner().unwrap(),
        }
    })
}

#[test]
fn criterion_06_directional_table_reproduction() {
    let b = case14_batch();
    let stats = &b.output.statistics;
    let f = |v| stats.mode(v).unwrap().feasible_pct;
    let (base, qlim, ppqv) = (f(SwitchVariant::Baseline), f(SwitchVariant::Qlim), f(SwitchVariant::PpqvBatch));
    let m_base = stats.mode(SwitchVariant::Baseline).unwrap().avg_v_magnitude;
    let m_ppqv = stats.mode(SwitchVariant::PpqvBatch).unwrap().avg_v_magnitude;
    let reduction = if m_base > 0.0 { 100.0 * (m_base - m_ppqv) / m_base } else { 0.0 };
    let pass = ppqv > qlim && qlim > base && reduction >= 20.0 && b.seconds < 120.0;
    verdict(
        6,
        "directional table reproduction",
        pass,
        &format!(
            "feasible ppqv {ppqv:.2}% qlim {qlim:.2}% baseline {base:.2}%; mean sum|V| baseline {m_base:.5} ppqv {m_ppqv:.5} ({reduction:.1}% reduction); {:.1}s",
            b.seconds
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_switch_ratio() {
    let stats = &case14_batch().output.statistics;
    let ratio = stats.mode(SwitchVariant::PpqvBatch).unwrap().switch_ratio;
    let pass = ratio.is_some_and(|r| r > 1.0);
    verdict(7, "switch ratio", pass, &format!("resolved per switch {ratio:?}"));
    assert!(pass);
}

#[test]
fn criterion_08_clamp_exactness() {
    let b = case14_batch();
    let pass = b.clamp_failures.is_empty() && b.switched_samples > 0;
    verdict(
        8,
        "clamp exactness",
        pass,
        &format!(
            "{} mode runs with P/PQV switches over {} samples, {} off-bound values {:?}",
            b.output.samples.iter().flat_map(|s| &s.modes).filter(|m| m.ppqv_switches > 0).count(),
            b.switched_samples,
            b.clamp_failures.len(),
            b.clamp_failures.iter().take(3).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_path_catalog_soundness() {
    let mut pass = true;
    let mut details = Vec::new();
    for name in ["case14", "case57"] {
        let case = load_case(name);
        let net = Network::from_case(&case).unwrap();
        let mut types = classify_buses(&case).unwrap();
        let edges: Vec<(usize, usize)> = case
            .in_service_branches()
            .map(|b| (case.bus_index(b.from_bus).unwrap(), case.bus_index(b.to_bus).unwrap()))
            .collect();
        assert_eq!(adjacency(&case), net.topology);
        let mut snapshots = 0;
        let mut stored = 0;
        // initial types, then after each of a few reactive-limit switches
        for step in 0..4 {
            let catalog = build_path_catalog(&net.topology, &types, 8);
            let oracle = brute_force_unique_paths(net.n(), &edges, types.types(), 8);
            pass &= catalog.pairs == oracle;
            stored += catalog.len();
            snapshots += 1;
            if !apply_mutation(&net, &mut types, Mutation::QLimit { pv: step }) {
                break;
            }
        }
        details.push(format!("{name} {stored} stored paths over {snapshots} type snapshots"));
    }
    verdict(9, "path-catalog soundness", pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_10_histogram_shape() {
    let stats = &case14_batch().output.statistics;
    let base = stats.mode(SwitchVariant::Baseline).unwrap();
    let ppqv = stats.mode(SwitchVariant::PpqvBatch).unwrap();
    let pass = ppqv.avg_v_magnitude < base.avg_v_magnitude && ppqv.p90_v_magnitude < base.p90_v_magnitude;
    verdict(
        10,
        "histogram shape",
        pass,
        &format!(
            "sum|V| mean ppqv {:.5} vs baseline {:.5}; p90 ppqv {:.5} vs baseline {:.5}",
            ppqv.avg_v_magnitude, base.avg_v_magnitude, ppqv.p90_v_magnitude, base.p90_v_magnitude
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_determinism() {
    let case = load_case("case14");
    let csv = |jobs| {
        let out = run_batch(&case, &case14_config(jobs)).unwrap();
        let mut buf = Vec::new();
        write_batch_csv(&mut buf, &out.statistics, None).unwrap();
        buf
    };
    let (one, eight) = (csv(1), csv(8));
    let pass = one == eight;
    verdict(11, "determinism", pass, &format!("jobs=1 and jobs=8 CSV {} bytes, identical: {pass}", one.len()));
    assert!(pass);
}
