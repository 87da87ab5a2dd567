//! Monte-Carlo load scenarios, generator dispatch and batch statistics.

mod batch;
mod dispatch;
mod histogram;
mod scenario;

use thiserror::Error;

use crate::network::NetworkError;
use crate::switching::SwitchingError;

pub use batch::{
    aggregate, build_sample_case, run_batch, run_batch_with, BatchConfig, BatchOutput, BatchStatistics, BatchTiming, Inspector,
    ModeRecord, ModeStatistics, SampleContext, SampleRecord, Verification,
};
pub use dispatch::{Dispatcher, ProportionalDispatch};
pub use histogram::{quantile, shared_histogram, HistogramBin, ModeHistogram};
pub use scenario::{sample_scenario, sample_seed, LoadScenario, BUS_JITTER_RANGE, DEMAND_FRACTION_RANGE};

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("case has no real-power demand to perturb")]
    NoLoad,
    #[error("case has no in-service generation capacity")]
    NoCapacity,
    #[error("dispatch needs {required} MW but only {available} MW is available")]
    InsufficientCapacity { required: f64, available: f64 },
    #[error("dispatch needs {required} MW, below the {minimum} MW minimum output")]
    BelowMinimum { required: f64, minimum: f64 },
    #[error("invalid batch configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Switching(#[from] SwitchingError),
}
