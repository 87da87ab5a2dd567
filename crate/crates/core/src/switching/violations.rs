use serde::{Deserialize, Serialize};

use crate::network::{BusType, BusTypeAssignment, Network};
use crate::solver::PowerFlowState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Internal bus index.
    pub bus: usize,
    pub bus_id: u32,
    pub bound: Bound,
    /// Observed value (p.u.).
    pub value: f64,
    /// The bound that was crossed (p.u.).
    pub limit: f64,
    /// Distance past the bound, always positive.
    pub magnitude: f64,
}

/// Which buses take part in the generator reactive-power check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationRules {
    /// Check the slack generator's reactive limits as well.
    pub slack_q_limits: bool,
    /// Check generators whose bus has been switched to P.
    pub p_bus_q_limits: bool,
}


/// Bound violations of one solved state, split by class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "ReportRepr", into = "ReportRepr")]
pub struct ViolationReport {
    pub gen_q: Vec<Violation>,
    pub gen_v: Vec<Violation>,
    pub load_v: Vec<Violation>,
}

#[derive(Serialize, Deserialize)]
struct ReportRepr {
    #[serde(default)]
    feasible: bool,
    #[serde(default)]
    total_count: usize,
    #[serde(default)]
    total_magnitude: f64,
    gen_q: Vec<Violation>,
    gen_v: Vec<Violation>,
    load_v: Vec<Violation>,
}

impl From<ReportRepr> for ViolationReport {
    fn from(r: ReportRepr) -> Self {
        ViolationReport {
            gen_q: r.gen_q,
            gen_v: r.gen_v,
            load_v: r.load_v,
        }
    }
}

impl From<ViolationReport> for ReportRepr {
    fn from(r: ViolationReport) -> Self {
        ReportRepr {
            feasible: r.is_feasible(),
            total_count: r.total_count(),
            total_magnitude: r.total_magnitude(),
            gen_q: r.gen_q,
            gen_v: r.gen_v,
            load_v: r.load_v,
        }
    }
}

fn sum(vs: &[Violation]) -> f64 {
    vs.iter().map(|v| v.magnitude).sum()
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.total_count() == 0
    }

    pub fn total_count(&self) -> usize {
        self.gen_q.len() + self.gen_v.len() + self.load_v.len()
    }

    pub fn total_magnitude(&self) -> f64 {
        sum(&self.gen_q) + sum(&self.gen_v) + sum(&self.load_v)
    }

    pub fn q_count(&self) -> usize {
        self.gen_q.len()
    }

    /// Voltage violations of both classes.
    pub fn v_count(&self) -> usize {
        self.gen_v.len() + self.load_v.len()
    }

    /// Summed voltage violation magnitude of both classes (p.u.).
    pub fn v_magnitude(&self) -> f64 {
        sum(&self.gen_v) + sum(&self.load_v)
    }

    /// Sort key used to pick the best of several solved iterates; smaller is
    /// better. The total count comes first, then generator voltage,
    /// generator reactive power and load voltage counts, then magnitude.
    pub fn rank_key(&self) -> (usize, usize, usize, usize, f64) {
        (
            self.total_count(),
            self.gen_v.len(),
            self.gen_q.len(),
            self.load_v.len(),
            self.total_magnitude(),
        )
    }

    /// Generator voltage, generator reactive power and load voltage counts,
    /// then total magnitude; strictly better.
    pub fn priority_better_than(&self, other: &ViolationReport) -> bool {
        let key = |r: &ViolationReport| (r.gen_v.len(), r.gen_q.len(), r.load_v.len());
        key(self).cmp(&key(other)).then(self.total_magnitude().total_cmp(&other.total_magnitude())).is_lt()
    }

    /// True if `self` ranks strictly better than `other`.
    pub fn better_than(&self, other: &ViolationReport) -> bool {
        let (a, b) = (self.rank_key(), other.rank_key());
        (a.0, a.1, a.2, a.3)
            .cmp(&(b.0, b.1, b.2, b.3))
            .then(a.4.total_cmp(&b.4))
            .is_lt()
    }
}

fn check(bus: usize, network: &Network, value: f64, lo: f64, hi: f64) -> Option<Violation> {
    let (bound, limit) = if value > hi {
        (Bound::Upper, hi)
    } else if value < lo {
        (Bound::Lower, lo)
    } else {
        return None;
    };
    Some(Violation {
        bus,
        bus_id: network.bus_id(bus),
        bound,
        value,
        limit,
        magnitude: (value - limit).abs(),
    })
}

/// Generator reactive output at a bus: net injection plus local demand.
pub fn generator_q(state: &PowerFlowState, network: &Network, bus: usize) -> f64 {
    state.q[bus] + network.qd[bus]
}

/// Classifies the bound violations of a completed state with the default
/// rules.
pub fn check_violations(
    state: &PowerFlowState,
    network: &Network,
    assignment: &BusTypeAssignment,
) -> ViolationReport {
    check_violations_with(state, network, assignment, &ViolationRules::default())
}

pub fn check_violations_with(
    state: &PowerFlowState,
    network: &Network,
    assignment: &BusTypeAssignment,
    rules: &ViolationRules,
) -> ViolationReport {
    let mut report = ViolationReport::default();
    for k in 0..network.n() {
        let t = assignment.bus_type(k);
        let q_checked = match t {
            BusType::PV => true,
            BusType::Vtheta => rules.slack_q_limits,
            BusType::P => rules.p_bus_q_limits,
            _ => false,
        };
        if q_checked {
            if let Some((qmin, qmax)) = network.gen_q_limits[k] {
                let q = generator_q(state, network, k);
                report.gen_q.extend(check(k, network, q, qmin, qmax));
            }
        }
        let v = check(k, network, state.v[k], network.vmin[k], network.vmax[k]);
        match assignment.origin(k) {
            BusType::PV if !t.has_v() => report.gen_v.extend(v),
            BusType::PQ if t != BusType::PQV => report.load_v.extend(v),
            _ => {}
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn viol(bus: usize, magnitude: f64) -> Violation {
        Violation {
            bus,
            bus_id: bus as u32 + 1,
            bound: Bound::Upper,
            value: 1.0 + magnitude,
            limit: 1.0,
            magnitude,
        }
    }

    #[test]
    fn empty_report_is_feasible() {
        let r = ViolationReport::default();
        assert!(r.is_feasible());
        assert_eq!(r.total_count(), 0);
        assert_eq!(r.total_magnitude(), 0.0);
    }

    #[test]
    fn ranking_prefers_fewer_violations_then_generator_voltage() {
        let one_load = ViolationReport {
            load_v: vec![viol(0, 0.5)],
            ..Default::default()
        };
        let one_gen = ViolationReport {
            gen_v: vec![viol(0, 0.01)],
            ..Default::default()
        };
        let two_load = ViolationReport {
            load_v: vec![viol(0, 0.01), viol(1, 0.01)],
            ..Default::default()
        };
        assert!(one_load.better_than(&one_gen));
        assert!(one_gen.better_than(&two_load));
        assert!(!one_load.better_than(&one_load));
    }

    #[test]
    fn json_round_trip_keeps_lists() {
        let r = ViolationReport {
            gen_q: vec![viol(2, 0.25)],
            load_v: vec![viol(8, 0.018)],
            ..Default::default()
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"feasible\":false"));
        let back: ViolationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
