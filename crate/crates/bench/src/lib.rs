//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use ppqv_core::{read_matpower_case, NetworkCase};

/// Path of a case file shipped in the repository's `data/` directory.
pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(format!("{name}.m"))
}

pub fn load_case(name: &str) -> NetworkCase {
    read_matpower_case(case_path(name)).unwrap_or_else(|e| panic!("loading {name}: {e}"))
}
