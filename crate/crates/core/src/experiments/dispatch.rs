use crate::case_io::NetworkCase;
use crate::experiments::ExperimentError;

/// Turns a total demand into per-generator real outputs (MW, generator
/// order). Out-of-service units get zero.
pub trait Dispatcher: Sync {
    fn dispatch(&self, case: &NetworkCase, total_demand: f64) -> Result<Vec<f64>, ExperimentError>;
}

/// Every in-service unit at `pmin + λ (pmax - pmin)` with one shared λ,
/// chosen so total output covers demand plus a loss margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionalDispatch {
    pub loss_margin: f64,
}

impl Default for ProportionalDispatch {
    fn default() -> Self {
        ProportionalDispatch { loss_margin: 0.02 }
    }
}

impl ProportionalDispatch {
    /// The shared loading factor for a demand, in [0, 1].
    pub fn lambda(&self, case: &NetworkCase, total_demand: f64) -> Result<f64, ExperimentError> {
        let required = total_demand * (1.0 + self.loss_margin);
        let pmin: f64 = case.in_service_gens().map(|g| g.pmin).sum();
        let pmax: f64 = case.in_service_gens().map(|g| g.pmax).sum();
        let slack = 1e-9 * pmax.abs().max(1.0);
        if required > pmax + slack {
            return Err(ExperimentError::InsufficientCapacity { required, available: pmax });
        }
        if required < pmin - slack {
            return Err(ExperimentError::BelowMinimum { required, minimum: pmin });
        }
        if pmax <= pmin {
            return Ok(0.0);
        }
        Ok(((required - pmin) / (pmax - pmin)).clamp(0.0, 1.0))
    }
}

impl Dispatcher for ProportionalDispatch {
    fn dispatch(&self, case: &NetworkCase, total_demand: f64) -> Result<Vec<f64>, ExperimentError> {
        let lambda = self.lambda(case, total_demand)?;
        Ok(case
            .gens
            .iter()
            .map(|g| if g.status { g.pmin + (g.pmax - g.pmin) * lambda } else { 0.0 })
            .collect())
    }
}
