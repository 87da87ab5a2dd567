#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use num_complex::Complex64;
use ppqv_core::network::BusType;
use ppqv_core::sparse::CscMatrix;
use ppqv_core::switching::{apply_ppqv_switch, enforce_q_limits, Bound, PpqvPair, Violation, ViolationReport};
use ppqv_core::{read_matpower_case, BusTypeAssignment, Network, NetworkCase, PowerFlowState};
use serde::Deserialize;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load_case(name: &str) -> NetworkCase {
    read_matpower_case(data_dir().join(format!("{name}.m"))).unwrap()
}

/// Solved operating point produced by an independent power-flow tool.
#[derive(Debug, Deserialize)]
pub struct Reference {
    pub bus_ids: Vec<u32>,
    pub vm: Vec<f64>,
    pub va_rad: Vec<f64>,
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    #[serde(default)]
    pub ybus_g: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub ybus_b: Option<Vec<Vec<f64>>>,
}

pub fn reference(name: &str) -> Reference {
    let path = data_dir().join("reference").join(format!("{name}_pf.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Complex power `S = V conj(Y V)`, summed over the stored admittances.
pub fn complex_injections(net: &Network, v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = net.n();
    let volts: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(v[k], theta[k])).collect();
    let s: Vec<Complex64> = (0..n)
        .map(|k| {
            let i: Complex64 = net.ybus.row(k).map(|(j, g, b)| Complex64::new(g, b) * volts[j]).sum();
            volts[k] * i.conj()
        })
        .collect();
    (s.iter().map(|x| x.re).collect(), s.iter().map(|x| x.im).collect())
}

/// Central-difference derivative of `[P_k for P-specified buses; Q_k for
/// Q-specified buses]` with respect to `[angles of non-slack buses;
/// magnitudes of buses with free voltage]`, all in bus order.
pub fn fd_jacobian(net: &Network, types: &BusTypeAssignment, state: &PowerFlowState, h: f64) -> Vec<Vec<f64>> {
    let n = net.n();
    let t = types.types();
    let p_rows: Vec<usize> = (0..n).filter(|&k| t[k] != BusType::Vtheta).collect();
    let q_rows: Vec<usize> = (0..n).filter(|&k| matches!(t[k], BusType::PQ | BusType::PQV)).collect();
    let th_cols: Vec<usize> = (0..n).filter(|&k| t[k] != BusType::Vtheta).collect();
    let v_cols: Vec<usize> = (0..n).filter(|&k| matches!(t[k], BusType::PQ | BusType::P)).collect();
    let f = |v: &[f64], th: &[f64]| {
        let (p, q) = complex_injections(net, v, th);
        p_rows.iter().map(|&k| p[k]).chain(q_rows.iter().map(|&k| q[k])).collect::<Vec<f64>>()
    };
    let cols = th_cols.len() + v_cols.len();
    let mut jac = vec![vec![0.0; cols]; p_rows.len() + q_rows.len()];
    for c in 0..cols {
        let (mut v_hi, mut th_hi) = (state.v.clone(), state.theta.clone());
        let (mut v_lo, mut th_lo) = (state.v.clone(), state.theta.clone());
        if c < th_cols.len() {
            th_hi[th_cols[c]] += h;
            th_lo[th_cols[c]] -= h;
        } else {
            let k = v_cols[c - th_cols.len()];
            v_hi[k] += h;
            v_lo[k] -= h;
        }
        let (hi, lo) = (f(&v_hi, &th_hi), f(&v_lo, &th_lo));
        for r in 0..jac.len() {
            jac[r][c] = (hi[r] - lo[r]) / (2.0 * h);
        }
    }
    jac
}

/// Largest entrywise error, relative to the reference entry where that is
/// larger than one and absolute otherwise.
pub fn max_relative_error(j: &CscMatrix, reference: &[Vec<f64>]) -> f64 {
    assert_eq!(j.nrows(), reference.len());
    let mut worst: f64 = 0.0;
    for (r, row) in reference.iter().enumerate() {
        assert_eq!(j.ncols(), row.len());
        for (c, &x) in row.iter().enumerate() {
            worst = worst.max((j.get(r, c) - x).abs() / x.abs().max(1.0));
        }
    }
    worst
}

/// Every simple path from each PQ bus to a PV bus whose interior buses are
/// all PQ and whose length is at most `max_hops` branches, found by
/// exhaustive search over an explicit stack. Keeps the pairs joined by
/// exactly one such path.
pub fn brute_force_unique_paths(
    n: usize,
    edges: &[(usize, usize)],
    types: &[BusType],
    max_hops: usize,
) -> BTreeMap<(usize, usize), Vec<usize>> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    let mut all: BTreeMap<(usize, usize), Vec<Vec<usize>>> = BTreeMap::new();
    for src in (0..n).filter(|&k| types[k] == BusType::PQ) {
        let mut stack = vec![vec![src]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            if path.len() > 1 && types[last] == BusType::PV {
                all.entry((src, last)).or_default().push(path);
                continue;
            }
            if path.len() > max_hops {
                continue;
            }
            for &next in &adj[last] {
                if path.contains(&next) || !matches!(types[next], BusType::PQ | BusType::PV) {
                    continue;
                }
                let mut p = path.clone();
                p.push(next);
                stack.push(p);
            }
        }
    }
    all.into_iter()
        .filter(|(_, paths)| paths.len() == 1)
        .map(|(k, mut paths)| (k, paths.pop().unwrap()))
        .collect()
}

/// One random type change, interpreted against the current types: either a
/// PV bus hitting a reactive limit, or a PQ bus paired with a PV bus.
#[derive(Debug, Clone, Copy)]
pub enum Mutation {
    QLimit { pv: usize },
    Pair { pq: usize, pv: usize, upper: bool },
}

/// Applies `m`, choosing buses by position among the current PQ and PV
/// buses. Returns `false` when no bus of the required type is left.
pub fn apply_mutation(net: &Network, types: &mut BusTypeAssignment, m: Mutation) -> bool {
    let pvs: Vec<usize> = types.buses_of(BusType::PV).collect();
    let pqs: Vec<usize> = types.buses_of(BusType::PQ).collect();
    match m {
        Mutation::QLimit { pv } => {
            let Some(&bus) = pvs.get(pv % pvs.len().max(1)) else { return false };
            let report = ViolationReport {
                gen_q: vec![Violation {
                    bus,
                    bus_id: net.bus_id(bus),
                    bound: Bound::Upper,
                    value: 1.0,
                    limit: 0.5,
                    magnitude: 0.5,
                }],
                ..Default::default()
            };
            *types = enforce_q_limits(&report, types, net).assignment;
            true
        }
        Mutation::Pair { pq, pv, upper } => {
            let (Some(&pq_bus), Some(&pv_bus)) = (pqs.get(pq % pqs.len().max(1)), pvs.get(pv % pvs.len().max(1))) else {
                return false;
            };
            let pair = PpqvPair {
                pqv_bus: pq_bus,
                p_bus: pv_bus,
                path: vec![pq_bus, pv_bus],
                bound: if upper { Bound::Upper } else { Bound::Lower },
                target_v: if upper { net.vmax[pq_bus] } else { net.vmin[pq_bus] },
            };
            *types = apply_ppqv_switch(&pair, types, net).expect("types checked above");
            true
        }
    }
}
