//! MATPOWER case input and machine-readable report output.
//!
//! Physical units are kept as they appear in the case file (MW, MVAr,
//! degrees); conversion to per-unit happens when a [`crate::network::Network`]
//! is built.

mod parse;
mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_matpower_case, read_matpower_case};
pub use report::{
    write_batch_csv, write_histogram_csv, write_report, write_report_to, Report, ReportFormat,
    ReportOptions,
};

/// MATPOWER bus type code for load buses.
pub const PQ: u8 = 1;
/// MATPOWER bus type code for generator buses.
pub const PV: u8 = 2;
/// MATPOWER bus type code for the reference bus.
pub const REF: u8 = 3;
/// MATPOWER bus type code for isolated buses.
pub const NONE: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: u32,
    pub matpower_type: u8,
    /// Real demand (MW).
    pub pd: f64,
    /// Reactive demand (MVAr).
    pub qd: f64,
    /// Shunt conductance (MW at V = 1 p.u.).
    pub gs: f64,
    /// Shunt susceptance (MVAr at V = 1 p.u.).
    pub bs: f64,
    pub vm: f64,
    /// Voltage angle (degrees).
    pub va: f64,
    pub base_kv: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRecord {
    pub bus: u32,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub pmax: f64,
    pub pmin: f64,
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance (p.u.).
    pub b_charge: f64,
    /// Off-nominal turns ratio; a file value of 0 is stored as 1.0.
    pub tap: f64,
    /// Phase shift (degrees).
    pub shift: f64,
    pub status: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing required matrix `mpc.{0}`")]
    MissingMatrix(&'static str),
    #[error("`mpc.{matrix}` row {row} has {found} columns, at least {required} required")]
    ShortRow {
        matrix: &'static str,
        row: usize,
        found: usize,
        required: usize,
    },
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("invalid bus id {0}")]
    InvalidBusId(f64),
    #[error("baseMVA must be positive, got {0}")]
    BadBaseMva(f64),
    #[error("{what} references bus {bus}, which is not in mpc.bus")]
    DanglingBus { what: String, bus: u32 },
    #[error("case has no reference bus")]
    NoReferenceBus,
    #[error("case has {0} reference buses, exactly one required")]
    MultipleReferenceBuses(usize),
    #[error("bus {bus}: voltage bounds require 0 < vmin <= vmax (vmin = {vmin}, vmax = {vmax})")]
    BadVoltageBounds { bus: u32, vmin: f64, vmax: f64 },
    #[error("generator at bus {bus}: {message}")]
    BadGenerator { bus: u32, message: String },
    #[error("cannot read case: {0}")]
    Io(String),
}

/// A validated power-system case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCase", into = "RawCase")]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub gens: Vec<GenRecord>,
    pub branches: Vec<BranchRecord>,
    index: HashMap<u32, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawCase {
    name: String,
    base_mva: f64,
    buses: Vec<BusRecord>,
    gens: Vec<GenRecord>,
    branches: Vec<BranchRecord>,
}

impl TryFrom<RawCase> for NetworkCase {
    type Error = CaseError;

    fn try_from(raw: RawCase) -> Result<Self, CaseError> {
        NetworkCase::new(raw.name, raw.base_mva, raw.buses, raw.gens, raw.branches)
    }
}

impl From<NetworkCase> for RawCase {
    fn from(case: NetworkCase) -> Self {
        RawCase {
            name: case.name,
            base_mva: case.base_mva,
            buses: case.buses,
            gens: case.gens,
            branches: case.branches,
        }
    }
}

impl NetworkCase {
    /// Validates the records and builds the bus-id index.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<BusRecord>,
        gens: Vec<GenRecord>,
        branches: Vec<BranchRecord>,
    ) -> Result<Self, CaseError> {
        if base_mva.is_nan() || base_mva <= 0.0 || base_mva.is_infinite() {
            return Err(CaseError::BadBaseMva(base_mva));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (i, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(CaseError::DuplicateBus(bus.id));
            }
            if !(bus.vmin > 0.0 && bus.vmin <= bus.vmax) {
                return Err(CaseError::BadVoltageBounds {
                    bus: bus.id,
                    vmin: bus.vmin,
                    vmax: bus.vmax,
                });
            }
        }
        match buses.iter().filter(|b| b.matpower_type == REF).count() {
            0 => return Err(CaseError::NoReferenceBus),
            1 => {}
            n => return Err(CaseError::MultipleReferenceBuses(n)),
        }
        for gen in &gens {
            if !index.contains_key(&gen.bus) {
                return Err(CaseError::DanglingBus {
                    what: "generator".into(),
                    bus: gen.bus,
                });
            }
            if gen.qmin > gen.qmax {
                return Err(CaseError::BadGenerator {
                    bus: gen.bus,
                    message: format!("qmin {} exceeds qmax {}", gen.qmin, gen.qmax),
                });
            }
            if gen.pmin > gen.pmax {
                return Err(CaseError::BadGenerator {
                    bus: gen.bus,
                    message: format!("pmin {} exceeds pmax {}", gen.pmin, gen.pmax),
                });
            }
        }
        for br in &branches {
            for bus in [br.from_bus, br.to_bus] {
                if !index.contains_key(&bus) {
                    return Err(CaseError::DanglingBus {
                        what: format!("branch {}-{}", br.from_bus, br.to_bus),
                        bus,
                    });
                }
            }
        }
        Ok(NetworkCase {
            name: name.into(),
            base_mva,
            buses,
            gens,
            branches,
            index,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Dense internal index of an external bus id.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn in_service_gens(&self) -> impl Iterator<Item = &GenRecord> {
        self.gens.iter().filter(|g| g.status)
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = &BranchRecord> {
        self.branches.iter().filter(|b| b.status)
    }

    /// Total real power capacity of in-service generators (MW).
    pub fn total_pmax(&self) -> f64 {
        self.in_service_gens().map(|g| g.pmax).sum()
    }

    pub fn total_pd(&self) -> f64 {
        self.buses.iter().map(|b| b.pd).sum()
    }

    /// Copy of the case with per-bus demand replaced (MW / MVAr, bus order).
    pub fn with_loads(&self, pd: &[f64], qd: &[f64]) -> NetworkCase {
        assert_eq!(pd.len(), self.buses.len());
        assert_eq!(qd.len(), self.buses.len());
        let mut case = self.clone();
        for ((bus, &p), &q) in case.buses.iter_mut().zip(pd).zip(qd) {
            bus.pd = p;
            bus.qd = q;
        }
        case
    }

    /// Copy of the case with generator real outputs replaced (MW, generator order).
    pub fn with_dispatch(&self, pg: &[f64]) -> NetworkCase {
        assert_eq!(pg.len(), self.gens.len());
        let mut case = self.clone();
        for (gen, &p) in case.gens.iter_mut().zip(pg) {
            gen.pg = p;
        }
        case
    }
}
