//! Load-override files for `solve`.
//!
//! ```json
//! {
//!   "seed": 1234,
//!   "buses": [{ "id": 9, "pd": 41.3, "qd": 23.2 }],
//!   "gens": [{ "bus": 2, "pg": 60.0 }]
//! }
//! ```
//!
//! Every field is optional. `seed` replays the batch sample with that seed
//! (perturbed demand plus proportional dispatch); `buses` and `gens` are then
//! applied on top, in MW and MVAr.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ppqv_core::experiments::{build_sample_case, ProportionalDispatch};
use ppqv_core::NetworkCase;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadOverride {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub buses: Vec<BusLoad>,
    #[serde(default)]
    pub gens: Vec<GenOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusLoad {
    pub id: u32,
    pub pd: Option<f64>,
    pub qd: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenOutput {
    pub bus: u32,
    pub pg: f64,
}

pub fn read(path: &Path) -> Result<LoadOverride> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid load-override file {}", path.display()))
}

impl LoadOverride {
    pub fn apply(&self, case: &NetworkCase) -> Result<NetworkCase> {
        let mut case = match self.seed {
            Some(seed) => build_sample_case(case, seed, &ProportionalDispatch::default())?.1,
            None => case.clone(),
        };
        let mut pd: Vec<f64> = case.buses.iter().map(|b| b.pd).collect();
        let mut qd: Vec<f64> = case.buses.iter().map(|b| b.qd).collect();
        for b in &self.buses {
            let Some(k) = case.bus_index(b.id) else {
                bail!("load override names bus {}, which is not in the case", b.id)
            };
            pd[k] = b.pd.unwrap_or(pd[k]);
            qd[k] = b.qd.unwrap_or(qd[k]);
        }
        case = case.with_loads(&pd, &qd);

        let mut pg: Vec<f64> = case.gens.iter().map(|g| g.pg).collect();
        for g in &self.gens {
            let mut hits = case.gens.iter().enumerate().filter(|(_, x)| x.bus == g.bus);
            match (hits.next(), hits.next()) {
                (Some((i, _)), None) => pg[i] = g.pg,
                (None, _) => bail!("load override names a generator at bus {}, which has none", g.bus),
                (Some(_), Some(_)) => bail!("bus {} has several generators; cannot override one by bus", g.bus),
            }
        }
        Ok(case.with_dispatch(&pg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE: &str = "mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;
 2 1 50 20 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 100 -100 1.0 100 1 200 0; ];
mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1; ];
";

    #[test]
    fn partial_override_keeps_other_fields() {
        let case = ppqv_core::parse_matpower_case(CASE).unwrap();
        let o: LoadOverride = serde_json::from_str(r#"{"buses":[{"id":2,"pd":70}],"gens":[{"bus":1,"pg":71}]}"#).unwrap();
        let out = o.apply(&case).unwrap();
        assert_eq!((out.buses[1].pd, out.buses[1].qd), (70.0, 20.0));
        assert_eq!(out.gens[0].pg, 71.0);
    }

    #[test]
    fn unknown_bus_and_field_are_rejected() {
        let case = ppqv_core::parse_matpower_case(CASE).unwrap();
        let o: LoadOverride = serde_json::from_str(r#"{"buses":[{"id":7,"pd":1}]}"#).unwrap();
        assert!(o.apply(&case).is_err());
        assert!(serde_json::from_str::<LoadOverride>(r#"{"loads":[]}"#).is_err());
    }
}
