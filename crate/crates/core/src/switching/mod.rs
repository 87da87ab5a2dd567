//! Violation checks and the bus-type switching loop.
//!
//! Two repairs are available. A generator whose reactive output leaves its
//! limits is switched PV -> PQ with the output clamped to the violated
//! limit. A load bus whose voltage leaves its bounds can be paired with a
//! generator bus: the load bus becomes PQV with its voltage pinned at the
//! bound, the generator bus becomes P. A pair is only used when the two buses
//! are joined by exactly one path through PQ buses.

mod orchestrator;
mod paths;
mod violations;

use thiserror::Error;

use crate::network::{BusType, BusTypeAssignment, Network, NetworkError};
use crate::solver::SolverError;

pub use orchestrator::{
    run_on_network, run_with_switching, verify_result, OuterIteration, Ranking, SwitchVariant,
    SwitchingOptions, SwitchingResult,
};
pub use paths::{
    build_path_catalog, build_path_catalog_from, select_ppqv_pairs, PathCatalog, PpqvPair,
};
pub use violations::{
    check_violations, check_violations_with, generator_q, Bound, Violation, ViolationReport,
    ViolationRules,
};

#[derive(Debug, Error, PartialEq)]
pub enum SwitchingError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("bus {bus_id} is {found}, expected {expected}")]
    TypeMismatch {
        bus_id: u32,
        expected: BusType,
        found: BusType,
    },
}

/// Result of one Q-limit pass.
#[derive(Debug, Clone, PartialEq)]
pub struct QLimitSwitch {
    pub assignment: BusTypeAssignment,
    /// Buses switched PV -> PQ.
    pub switched: Vec<usize>,
    /// Violated buses that cannot be switched (slack or P buses).
    pub skipped: Vec<usize>,
}

/// Switches every PV bus listed in `report.gen_q` to PQ in one pass, with
/// its net reactive injection fixed so the generator sits on the violated
/// limit.
pub fn enforce_q_limits(
    report: &ViolationReport,
    assignment: &BusTypeAssignment,
    network: &Network,
) -> QLimitSwitch {
    let mut next = assignment.clone();
    let mut switched = Vec::new();
    let mut skipped = Vec::new();
    for v in &report.gen_q {
        if assignment.bus_type(v.bus) == BusType::PV {
            next.make_pq(v.bus, v.limit - network.qd[v.bus]);
            switched.push(v.bus);
        } else {
            log::debug!("bus {}: reactive limit violated on a {} bus, not switched", v.bus_id, assignment.bus_type(v.bus));
            skipped.push(v.bus);
        }
    }
    QLimitSwitch {
        assignment: next,
        switched,
        skipped,
    }
}

/// Applies one P/PQV exchange.
pub fn apply_ppqv_switch(
    pair: &PpqvPair,
    assignment: &BusTypeAssignment,
    network: &Network,
) -> Result<BusTypeAssignment, SwitchingError> {
    let expect = |bus: usize, expected: BusType| {
        let found = assignment.bus_type(bus);
        if found == expected {
            Ok(())
        } else {
            Err(SwitchingError::TypeMismatch {
                bus_id: network.bus_id(bus),
                expected,
                found,
            })
        }
    };
    expect(pair.pqv_bus, BusType::PQ)?;
    expect(pair.p_bus, BusType::PV)?;
    let mut next = assignment.clone();
    next.make_pqv(pair.pqv_bus, pair.target_v);
    next.make_p(pair.p_bus);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_matpower_case;
    use crate::network::classify_buses;
    use crate::solver::{nr_solve, SolveOptions};

    const THREE_BUS: &str = "mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 0 1 1.06 0.94;
 2 2 0 0 0 0 1 1 0 0 1 1.06 0.94;
 3 1 80 30 0 0 1 1 0 0 1 1.06 0.94;
];
mpc.gen = [
 1 0 0 100 -100 1.0 100 1 200 0;
 2 40 0 5 -5 1.05 100 1 100 0;
];
mpc.branch = [
 1 3 0.01 0.1 0 0 0 0 0 0 1;
 2 3 0.01 0.1 0 0 0 0 0 0 1;
];
";

    fn setup() -> (Network, BusTypeAssignment) {
        let case = parse_matpower_case(THREE_BUS).unwrap();
        (Network::from_case(&case).unwrap(), classify_buses(&case).unwrap())
    }

    #[test]
    fn tight_generator_limit_is_reported_and_clamped() {
        let (net, a) = setup();
        let out = nr_solve(&net, &a, &SolveOptions::default()).unwrap();
        assert!(out.converged());
        let report = check_violations(&out.state, &net, &a);
        assert_eq!(report.gen_q.len(), 1);
        let v = &report.gen_q[0];
        assert_eq!((v.bus_id, v.bound, v.limit), (2, Bound::Upper, 0.05));

        let q = enforce_q_limits(&report, &a, &net);
        assert_eq!(q.switched, vec![1]);
        assert_eq!(q.assignment.bus_type(1), BusType::PQ);
        assert!(q.assignment.validate().is_ok());
        let out = nr_solve(&net, &q.assignment, &SolveOptions::default()).unwrap();
        assert!(out.converged());
        assert!((generator_q(&out.state, &net, 1) - 0.05).abs() < 1e-15);
        let after = check_violations(&out.state, &net, &q.assignment);
        assert!(after.gen_q.is_empty());
    }

    #[test]
    fn no_gen_q_violations_means_no_switch() {
        let (net, a) = setup();
        let q = enforce_q_limits(&ViolationReport::default(), &a, &net);
        assert_eq!(q.assignment, a);
        assert!(q.switched.is_empty());
    }

    #[test]
    fn load_voltage_magnitude_is_distance_to_bound() {
        let (net, a) = setup();
        let mut state = nr_solve(&net, &a, &SolveOptions::default()).unwrap().state;
        state.v[2] = 1.078;
        state.q[1] = 0.0;
        let report = check_violations(&state, &net, &a);
        assert_eq!(report.load_v.len(), 1);
        assert!((report.load_v[0].magnitude - 0.018).abs() < 1e-12);
        // exactly on the bound is not a violation
        state.v[2] = 1.06;
        assert!(check_violations(&state, &net, &a).is_feasible());
    }

    #[test]
    fn ppqv_switch_balances_and_pins_voltage() {
        let (net, a) = setup();
        let pair = PpqvPair {
            pqv_bus: 2,
            p_bus: 1,
            path: vec![2, 1],
            bound: Bound::Lower,
            target_v: 0.94,
        };
        let next = apply_ppqv_switch(&pair, &a, &net).unwrap();
        assert_eq!(next.count(BusType::PQV), 1);
        assert_eq!(next.count(BusType::P), 1);
        assert!(next.validate().is_ok());
        let out = nr_solve(&net, &next, &SolveOptions::default()).unwrap();
        assert!(out.converged());
        assert_eq!(out.state.v[2], 0.94);

        let err = apply_ppqv_switch(&pair, &next, &net).unwrap_err();
        assert!(matches!(err, SwitchingError::TypeMismatch { bus_id: 3, .. }));
    }
}
