//! Per-unit electrical model: admittance matrix, topology and bus types.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_io::{NetworkCase, PV, REF};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("in-service branch {from}-{to} has zero impedance")]
    ZeroImpedance { from: u32, to: u32 },
    #[error("reference bus {0} has no in-service generator")]
    NoSlackGenerator(u32),
    #[error("case has {0} reference buses, exactly one required")]
    SlackCount(usize),
    #[error("bus {bus} is {found}, expected {expected}")]
    TypeMismatch {
        bus: u32,
        expected: BusType,
        found: BusType,
    },
    #[error("unbalanced bus types: {pqv} PQV buses but {p} P buses")]
    Unbalanced { pqv: usize, p: usize },
    #[error("assignment has {found} buses, network has {expected}")]
    SizeMismatch { expected: usize, found: usize },
}

/// The five bus types of the extended power-flow formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BusType {
    PQ,
    PV,
    Vtheta,
    P,
    PQV,
}

impl fmt::Display for BusType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BusType::PQ => "PQ",
            BusType::PV => "PV",
            BusType::Vtheta => "Vtheta",
            BusType::P => "P",
            BusType::PQV => "PQV",
        })
    }
}

impl BusType {
    /// Whether P is specified (every type except the slack).
    pub fn has_p(self) -> bool {
        !matches!(self, BusType::Vtheta)
    }

    pub fn has_q(self) -> bool {
        matches!(self, BusType::PQ | BusType::PQV)
    }

    pub fn has_v(self) -> bool {
        matches!(self, BusType::PV | BusType::Vtheta | BusType::PQV)
    }
}

/// Sparse bus admittance matrix split into conductance `g` and susceptance
/// `b`, stored row-compressed with a shared pattern. Every row holds its
/// diagonal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    g: Vec<f64>,
    b: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl AdmittanceMatrix {
    fn from_rows(rows: Vec<BTreeMap<usize, Complex64>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut g = Vec::new();
        let mut b = Vec::new();
        let mut diag_pos = vec![0; n];
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, y) in row {
                if j == i {
                    diag_pos[i] = col_idx.len();
                }
                col_idx.push(j);
                g.push(y.re);
                b.push(y.im);
            }
            row_ptr.push(col_idx.len());
        }
        AdmittanceMatrix {
            n,
            row_ptr,
            col_idx,
            g,
            b,
            diag_pos,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Entries `(j, G_ij, B_ij)` of row `i`, ascending in `j`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        range.map(move |k| (self.col_idx[k], self.g[k], self.b[k]))
    }

    /// `(G_ii, B_ii)`.
    pub fn diag(&self, i: usize) -> (f64, f64) {
        let k = self.diag_pos[i];
        (self.g[k], self.b[k])
    }

    /// `(G_ij, B_ij)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => {
                let k = self.row_ptr[i] + k;
                (self.g[k], self.b[k])
            }
            Err(_) => (0.0, 0.0),
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
            .binary_search(&j)
            .is_ok()
    }

    /// Dense `(G, B)` copies, row-major.
    pub fn to_dense(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut g = vec![vec![0.0; self.n]; self.n];
        let mut b = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for (j, gij, bij) in self.row(i) {
                g[i][j] = gij;
                b[i][j] = bij;
            }
        }
        (g, b)
    }
}

/// Builds the bus admittance matrix from the in-service branches and bus
/// shunts using the standard pi model with off-nominal tap and phase shift.
pub fn build_ybus(case: &NetworkCase) -> Result<AdmittanceMatrix, NetworkError> {
    let n = case.n_buses();
    let mut rows: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); n];
    for (i, bus) in case.buses.iter().enumerate() {
        rows[i].insert(i, Complex64::new(bus.gs, bus.bs) / case.base_mva);
    }
    for br in &case.branches {
        let f = case.bus_index(br.from_bus).expect("validated case");
        let t = case.bus_index(br.to_bus).expect("validated case");
        if !br.status {
            // keep the pattern independent of branch status
            rows[f].entry(t).or_default();
            rows[t].entry(f).or_default();
            continue;
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(NetworkError::ZeroImpedance {
                from: br.from_bus,
                to: br.to_bus,
            });
        }
        let ys = Complex64::new(br.r, br.x).inv();
        let half_charge = Complex64::new(0.0, br.b_charge / 2.0);
        let ratio = Complex64::from_polar(br.tap, br.shift.to_radians());
        let ytt = ys + half_charge;
        let yff = ytt / (br.tap * br.tap);
        let yft = -ys / ratio.conj();
        let ytf = -ys / ratio;
        *rows[f].entry(f).or_default() += yff;
        *rows[t].entry(t).or_default() += ytt;
        *rows[f].entry(t).or_default() += yft;
        *rows[t].entry(f).or_default() += ytf;
    }
    Ok(AdmittanceMatrix::from_rows(rows))
}

/// Undirected bus adjacency over in-service branches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Topology { neighbors }
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, bus: usize) -> &[usize] {
        &self.neighbors[bus]
    }

    pub fn degree(&self, bus: usize) -> usize {
        self.neighbors[bus].len()
    }
}

pub fn adjacency(case: &NetworkCase) -> Topology {
    let edges = case.in_service_branches().map(|br| {
        (
            case.bus_index(br.from_bus).expect("validated case"),
            case.bus_index(br.to_bus).expect("validated case"),
        )
    });
    Topology::from_edges(case.n_buses(), edges)
}

/// Per-bus type labels and the quantities each type pins down (p.u.).
///
/// Alongside the current labels the assignment remembers each bus's
/// original label, which decides how its voltage bound violations are
/// classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusTypeAssignment {
    types: Vec<BusType>,
    origin: Vec<BusType>,
    spec_p: Vec<Option<f64>>,
    spec_q: Vec<Option<f64>>,
    spec_v: Vec<Option<f64>>,
}

impl BusTypeAssignment {
    /// Assignment with the given labels as both current and original types,
    /// zero specified injections and unit specified voltages.
    pub fn from_types(types: &[BusType]) -> Self {
        BusTypeAssignment {
            types: types.to_vec(),
            origin: types.to_vec(),
            spec_p: types.iter().map(|t| t.has_p().then_some(0.0)).collect(),
            spec_q: types.iter().map(|t| t.has_q().then_some(0.0)).collect(),
            spec_v: types.iter().map(|t| t.has_v().then_some(1.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn types(&self) -> &[BusType] {
        &self.types
    }

    pub fn bus_type(&self, bus: usize) -> BusType {
        self.types[bus]
    }

    /// Label given at classification time.
    pub fn origin(&self, bus: usize) -> BusType {
        self.origin[bus]
    }

    pub fn spec_p(&self, bus: usize) -> Option<f64> {
        self.spec_p[bus]
    }

    pub fn spec_q(&self, bus: usize) -> Option<f64> {
        self.spec_q[bus]
    }

    pub fn spec_v(&self, bus: usize) -> Option<f64> {
        self.spec_v[bus]
    }

    pub fn count(&self, kind: BusType) -> usize {
        self.types.iter().filter(|&&t| t == kind).count()
    }

    pub fn buses_of(&self, kind: BusType) -> impl Iterator<Item = usize> + '_ {
        self.types
            .iter()
            .enumerate()
            .filter(move |(_, &t)| t == kind)
            .map(|(i, _)| i)
    }

    pub fn slack(&self) -> usize {
        self.types
            .iter()
            .position(|&t| t == BusType::Vtheta)
            .expect("assignment always has a slack bus")
    }

    pub fn is_balanced(&self) -> bool {
        self.count(BusType::PQV) == self.count(BusType::P)
    }

    pub fn check_balanced(&self) -> Result<(), NetworkError> {
        let (pqv, p) = (self.count(BusType::PQV), self.count(BusType::P));
        if pqv == p {
            Ok(())
        } else {
            Err(NetworkError::Unbalanced { pqv, p })
        }
    }

    /// Checks every structural invariant: one slack, balanced P/PQV counts
    /// and specified-quantity presence matching each type.
    pub fn validate(&self) -> Result<(), String> {
        let n_slack = self.count(BusType::Vtheta);
        if n_slack != 1 {
            return Err(format!("{n_slack} slack buses"));
        }
        self.check_balanced().map_err(|e| e.to_string())?;
        for (i, &t) in self.types.iter().enumerate() {
            if self.spec_p[i].is_some() != t.has_p()
                || self.spec_q[i].is_some() != t.has_q()
                || self.spec_v[i].is_some() != t.has_v()
            {
                return Err(format!("bus index {i} ({t}) has inconsistent specified quantities"));
            }
        }
        Ok(())
    }

    /// Number of power-flow equations (= unknowns when balanced).
    pub fn n_equations(&self) -> usize {
        let n_p = self.types.iter().filter(|t| t.has_p()).count();
        let n_q = self.types.iter().filter(|t| t.has_q()).count();
        n_p + n_q
    }

    pub fn n_unknowns(&self) -> usize {
        let n_theta = self.types.iter().filter(|&&t| t != BusType::Vtheta).count();
        let n_v = self
            .types
            .iter()
            .filter(|&&t| matches!(t, BusType::PQ | BusType::P))
            .count();
        n_theta + n_v
    }

    /// PV -> PQ with the net reactive injection fixed.
    pub(crate) fn make_pq(&mut self, bus: usize, spec_q: f64) {
        debug_assert_eq!(self.types[bus], BusType::PV);
        self.types[bus] = BusType::PQ;
        self.spec_q[bus] = Some(spec_q);
        self.spec_v[bus] = None;
    }

    /// PQ -> PQV with the voltage magnitude fixed.
    pub(crate) fn make_pqv(&mut self, bus: usize, spec_v: f64) {
        debug_assert_eq!(self.types[bus], BusType::PQ);
        self.types[bus] = BusType::PQV;
        self.spec_v[bus] = Some(spec_v);
    }

    /// PV -> P, releasing the voltage setpoint.
    pub(crate) fn make_p(&mut self, bus: usize) {
        debug_assert_eq!(self.types[bus], BusType::PV);
        self.types[bus] = BusType::P;
        self.spec_v[bus] = None;
    }
}

/// Labels every bus from the case: the reference bus becomes Vtheta, type-2
/// buses with an in-service generator become PV, everything else PQ.
pub fn classify_buses(case: &NetworkCase) -> Result<BusTypeAssignment, NetworkError> {
    let n = case.n_buses();
    let base = case.base_mva;
    let mut pg = vec![0.0; n];
    let mut qg = vec![0.0; n];
    let mut vg: Vec<Option<f64>> = vec![None; n];
    for gen in case.in_service_gens() {
        let i = case.bus_index(gen.bus).expect("validated case");
        pg[i] += gen.pg;
        qg[i] += gen.qg;
        vg[i].get_or_insert(gen.vg);
    }
    let n_ref = case.buses.iter().filter(|b| b.matpower_type == REF).count();
    if n_ref != 1 {
        return Err(NetworkError::SlackCount(n_ref));
    }

    let mut a = BusTypeAssignment {
        types: Vec::with_capacity(n),
        origin: Vec::with_capacity(n),
        spec_p: Vec::with_capacity(n),
        spec_q: Vec::with_capacity(n),
        spec_v: Vec::with_capacity(n),
    };
    for (i, bus) in case.buses.iter().enumerate() {
        let p_net = (pg[i] - bus.pd) / base;
        let (t, p, q, v) = match (bus.matpower_type, vg[i]) {
            (REF, Some(v)) => (BusType::Vtheta, None, None, Some(v)),
            (REF, None) => return Err(NetworkError::NoSlackGenerator(bus.id)),
            (PV, Some(v)) => (BusType::PV, Some(p_net), None, Some(v)),
            _ => (BusType::PQ, Some(p_net), Some((qg[i] - bus.qd) / base), None),
        };
        a.types.push(t);
        a.origin.push(t);
        a.spec_p.push(p);
        a.spec_q.push(q);
        a.spec_v.push(v);
    }
    Ok(a)
}

/// Everything the solver and the switching logic need from a case, in
/// per-unit: admittances, topology, demand and bound data.
#[derive(Debug, Clone)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub bus_ids: Vec<u32>,
    pub ybus: AdmittanceMatrix,
    pub topology: Topology,
    pub vmin: Vec<f64>,
    pub vmax: Vec<f64>,
    /// Local demand (p.u.).
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
    /// Summed reactive limits of the in-service generators at each bus
    /// (p.u.); `None` where no generator is in service.
    pub gen_q_limits: Vec<Option<(f64, f64)>>,
    /// Initial voltage guess from the case file (p.u., radians).
    pub vm0: Vec<f64>,
    pub va0: Vec<f64>,
}

impl Network {
    pub fn from_case(case: &NetworkCase) -> Result<Network, NetworkError> {
        let base = case.base_mva;
        let mut gen_q_limits: Vec<Option<(f64, f64)>> = vec![None; case.n_buses()];
        for gen in case.in_service_gens() {
            let i = case.bus_index(gen.bus).expect("validated case");
            let entry = gen_q_limits[i].get_or_insert((0.0, 0.0));
            entry.0 += gen.qmin / base;
            entry.1 += gen.qmax / base;
        }
        Ok(Network {
            name: case.name.clone(),
            base_mva: base,
            bus_ids: case.buses.iter().map(|b| b.id).collect(),
            ybus: build_ybus(case)?,
            topology: adjacency(case),
            vmin: case.buses.iter().map(|b| b.vmin).collect(),
            vmax: case.buses.iter().map(|b| b.vmax).collect(),
            pd: case.buses.iter().map(|b| b.pd / base).collect(),
            qd: case.buses.iter().map(|b| b.qd / base).collect(),
            gen_q_limits,
            vm0: case.buses.iter().map(|b| b.vm).collect(),
            va0: case.buses.iter().map(|b| b.va.to_radians()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn bus_id(&self, bus: usize) -> u32 {
        self.bus_ids[bus]
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }
}
