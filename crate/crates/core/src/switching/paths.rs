use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::network::{BusType, BusTypeAssignment, Topology};
use crate::switching::violations::{Bound, ViolationReport};

/// PQ-to-PV pairs joined by exactly one simple path whose interior buses
/// are all PQ, for one snapshot of bus types.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathCatalog {
    pub max_hops: usize,
    /// `(pq_bus, pv_bus)` -> path from the PQ bus to the PV bus, inclusive.
    pub pairs: BTreeMap<(usize, usize), Vec<usize>>,
}

impl PathCatalog {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, pq_bus: usize, pv_bus: usize) -> Option<&[usize]> {
        self.pairs.get(&(pq_bus, pv_bus)).map(Vec::as_slice)
    }

    /// Entries whose PQ endpoint is `pq_bus`, ordered by PV bus.
    pub fn from_source(&self, pq_bus: usize) -> impl Iterator<Item = (usize, &[usize])> + '_ {
        self.pairs
            .range((pq_bus, 0)..=(pq_bus, usize::MAX))
            .map(|(&(_, pv), path)| (pv, path.as_slice()))
    }
}

/// Catalog over every PQ bus of the assignment.
pub fn build_path_catalog(
    topology: &Topology,
    assignment: &BusTypeAssignment,
    max_hops: usize,
) -> PathCatalog {
    let sources: Vec<usize> = assignment.buses_of(BusType::PQ).collect();
    build_path_catalog_from(topology, assignment, max_hops, &sources)
}

/// Catalog restricted to the given PQ source buses. Non-PQ sources are
/// ignored.
pub fn build_path_catalog_from(
    topology: &Topology,
    assignment: &BusTypeAssignment,
    max_hops: usize,
    sources: &[usize],
) -> PathCatalog {
    let mut catalog = PathCatalog {
        max_hops,
        pairs: BTreeMap::new(),
    };
    let mut found: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    let mut on_path = vec![false; topology.n()];
    for &src in sources {
        if assignment.bus_type(src) != BusType::PQ {
            continue;
        }
        found.clear();
        let mut path = vec![src];
        on_path[src] = true;
        search(topology, assignment, max_hops, &mut path, &mut on_path, &mut found);
        on_path[src] = false;
        for (pv, (count, p)) in std::mem::take(&mut found) {
            if count == 1 {
                catalog.pairs.insert((src, pv), p);
            }
        }
    }
    catalog
}

/// Depth-first enumeration of simple paths that leave `path`'s last bus
/// through PQ buses and end at a PV bus. Counts per endpoint saturate at 2.
fn search(
    topology: &Topology,
    assignment: &BusTypeAssignment,
    max_hops: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    found: &mut BTreeMap<usize, (usize, Vec<usize>)>,
) {
    if path.len() > max_hops {
        return;
    }
    let here = *path.last().expect("path starts at the source");
    for &next in topology.neighbors(here) {
        if on_path[next] {
            continue;
        }
        match assignment.bus_type(next) {
            BusType::PV => {
                let entry = found.entry(next).or_insert((0, Vec::new()));
                entry.0 = (entry.0 + 1).min(2);
                if entry.0 == 1 {
                    entry.1 = path.clone();
                    entry.1.push(next);
                }
            }
            BusType::PQ => {
                path.push(next);
                on_path[next] = true;
                search(topology, assignment, max_hops, path, on_path, found);
                on_path[next] = false;
                path.pop();
            }
            _ => {}
        }
    }
}

/// A chosen exchange: `pqv_bus` gets its voltage pinned at `target_v`,
/// `p_bus` gives up its setpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpqvPair {
    pub pqv_bus: usize,
    pub p_bus: usize,
    pub path: Vec<usize>,
    pub bound: Bound,
    pub target_v: f64,
}

/// Chooses pairs for the load-voltage violations of `report`, smallest
/// violation first. Each takes the PV bus with the shortest catalog path
/// (ties to the lower bus index); the buses of a chosen path are then
/// unavailable to every later pair.
pub fn select_ppqv_pairs(report: &ViolationReport, catalog: &PathCatalog) -> Vec<PpqvPair> {
    let mut violated: Vec<_> = report.load_v.iter().collect();
    violated.sort_by(|a, b| a.magnitude.total_cmp(&b.magnitude).then(a.bus.cmp(&b.bus)));

    let mut used: HashSet<usize> = HashSet::new();
    let mut chosen = Vec::new();
    for v in violated {
        if used.contains(&v.bus) {
            continue;
        }
        let best = catalog
            .from_source(v.bus)
            .filter(|(_, path)| path.iter().all(|b| !used.contains(b)))
            .min_by_key(|&(pv, path)| (path.len(), pv));
        if let Some((pv, path)) = best {
            used.extend(path.iter().copied());
            chosen.push(PpqvPair {
                pqv_bus: v.bus,
                p_bus: pv,
                path: path.to_vec(),
                bound: v.bound,
                target_v: v.limit,
            });
        }
    }
    chosen
}
