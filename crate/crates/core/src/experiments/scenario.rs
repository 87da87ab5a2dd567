use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case_io::NetworkCase;
use crate::experiments::ExperimentError;

/// Lower and upper end of the total-demand draw, as fractions of the
/// installed generation capacity.
pub const DEMAND_FRACTION_RANGE: (f64, f64) = (0.3, 0.85);
/// Per-bus multiplicative jitter applied before rescaling.
pub const BUS_JITTER_RANGE: (f64, f64) = (0.8, 1.2);

/// Perturbed demand for one sample (MW / MVAr, bus order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadScenario {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
    pub seed: u64,
    /// Total demand over total in-service `pmax`.
    pub scale_fraction: f64,
}

impl LoadScenario {
    pub fn total_pd(&self) -> f64 {
        self.pd.iter().sum()
    }

    /// The case with its demand replaced by this scenario.
    pub fn apply(&self, case: &NetworkCase) -> NetworkCase {
        case.with_loads(&self.pd, &self.qd)
    }
}

/// Draws a total demand uniformly in the configured fraction of capacity,
/// jitters each bus's baseline demand, rescales to hit the total and keeps
/// each bus's reactive-to-real ratio. Buses without real demand scale their
/// reactive demand by the global factor.
pub fn sample_scenario(case: &NetworkCase, seed: u64) -> Result<LoadScenario, ExperimentError> {
    let base_total: f64 = case.total_pd();
    if base_total <= 0.0 {
        return Err(ExperimentError::NoLoad);
    }
    let capacity = case.total_pmax();
    if capacity <= 0.0 {
        return Err(ExperimentError::NoCapacity);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fraction = rng.random_range(DEMAND_FRACTION_RANGE.0..DEMAND_FRACTION_RANGE.1);
    let target = fraction * capacity;

    let jittered: Vec<f64> = case
        .buses
        .iter()
        .map(|b| b.pd * rng.random_range(BUS_JITTER_RANGE.0..BUS_JITTER_RANGE.1))
        .collect();
    let jitter_total: f64 = jittered.iter().sum();
    let scale = target / jitter_total;
    let global = target / base_total;

    let pd: Vec<f64> = jittered.iter().map(|p| p * scale).collect();
    let qd = case
        .buses
        .iter()
        .zip(&pd)
        .map(|(b, &p)| if b.pd != 0.0 { p * b.qd / b.pd } else { b.qd * global })
        .collect();
    Ok(LoadScenario {
        pd,
        qd,
        seed,
        scale_fraction: fraction,
    })
}

/// Seed of sample `index` in a batch seeded with `base_seed`.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::{tests::bus, GenRecord, PQ, REF};

    fn small_case() -> NetworkCase {
        let gen = GenRecord {
            bus: 1,
            pg: 0.0,
            qg: 0.0,
            qmax: 100.0,
            qmin: -100.0,
            vg: 1.0,
            pmax: 300.0,
            pmin: 0.0,
            status: true,
        };
        NetworkCase::new(
            "s",
            100.0,
            vec![bus(1, REF, 0.0, 5.0), bus(2, PQ, 60.0, 20.0), bus(3, PQ, 40.0, 0.0)],
            vec![gen],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn total_hits_the_drawn_fraction() {
        let case = small_case();
        for seed in 0..200 {
            let s = sample_scenario(&case, seed).unwrap();
            assert!((s.total_pd() - s.scale_fraction * 300.0).abs() < 1e-9);
            assert!(s.scale_fraction >= 0.3 && s.scale_fraction < 0.85);
        }
    }

    #[test]
    fn power_factor_is_kept() {
        let s = sample_scenario(&small_case(), 7).unwrap();
        assert!((s.qd[1] / s.pd[1] - 20.0 / 60.0).abs() < 1e-12);
        assert_eq!(s.qd[2], 0.0);
        let global = s.total_pd() / 100.0;
        assert!((s.qd[0] - 5.0 * global).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_scenario() {
        let case = small_case();
        assert_eq!(sample_scenario(&case, 99).unwrap(), sample_scenario(&case, 99).unwrap());
        assert_ne!(sample_scenario(&case, 99).unwrap(), sample_scenario(&case, 100).unwrap());
    }

    #[test]
    fn zero_baseline_load_is_rejected() {
        let mut case = small_case();
        for b in &mut case.buses {
            b.pd = 0.0;
        }
        assert_eq!(sample_scenario(&case, 1), Err(ExperimentError::NoLoad));
    }

    #[test]
    fn sample_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| sample_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
