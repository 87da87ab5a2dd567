use std::collections::HashSet;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case_io::NetworkCase;
use crate::experiments::dispatch::{Dispatcher, ProportionalDispatch};
use crate::experiments::histogram::{quantile, shared_histogram, ModeHistogram};
use crate::experiments::scenario::{sample_scenario, sample_seed, LoadScenario};
use crate::experiments::ExperimentError;
use crate::network::{classify_buses, BusTypeAssignment, Network};
use crate::switching::{run_on_network, verify_result, SwitchVariant, SwitchingOptions, SwitchingResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub n_samples: usize,
    pub base_seed: u64,
    pub modes: Vec<SwitchVariant>,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    pub switching: SwitchingOptions,
    pub histogram_bins: usize,
    /// Share of samples re-checked against the switching invariants.
    pub verify_fraction: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            n_samples: 10_000,
            base_seed: 42,
            modes: SwitchVariant::ALL.to_vec(),
            jobs: None,
            switching: SwitchingOptions::default(),
            histogram_bins: 20,
            verify_fraction: 0.01,
        }
    }
}

/// Per-sample outcome of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub variant: SwitchVariant,
    pub divergent: bool,
    pub feasible: bool,
    pub q_count: usize,
    pub v_count: usize,
    pub v_magnitude: f64,
    pub total_count: usize,
    /// Voltage violations of the first, unswitched run.
    pub baseline_v_count: usize,
    pub baseline_v_magnitude: f64,
    pub outer_iterations: usize,
    pub ppqv_switches: usize,
    pub q_switches: usize,
    pub resolved_v_violations: usize,
    pub wall_time: f64,
}

impl ModeRecord {
    fn from_result(r: &SwitchingResult) -> ModeRecord {
        let base = r.baseline_report();
        ModeRecord {
            variant: r.variant,
            divergent: r.divergent,
            feasible: r.is_feasible(),
            q_count: r.final_report.q_count(),
            v_count: r.final_report.v_count(),
            v_magnitude: r.final_report.v_magnitude(),
            total_count: r.final_report.total_count(),
            baseline_v_count: base.map_or(0, |b| b.v_count()),
            baseline_v_magnitude: base.map_or(0.0, |b| b.v_magnitude()),
            outer_iterations: r.outer_iterations,
            ppqv_switches: r.ppqv_switches,
            q_switches: r.q_switches,
            resolved_v_violations: r.resolved_v_violations,
            wall_time: r.wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub seed: u64,
    pub scale_fraction: f64,
    pub baseline_converged: bool,
    pub modes: Vec<ModeRecord>,
}

/// Aggregates for one mode. Violation averages, improvements and the
/// switch ratio cover the samples whose first power flow converged;
/// `feasible_pct` covers every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStatistics {
    pub mode: String,
    pub n_converged: usize,
    pub feasible_pct: f64,
    pub avg_q_violations: f64,
    pub avg_v_violations: f64,
    pub avg_v_magnitude: f64,
    pub p90_v_magnitude: f64,
    pub pct_v_count_improvement: Option<f64>,
    pub pct_v_magnitude_improvement: Option<f64>,
    /// Resolved load-voltage violations per P/PQV switch, over samples with
    /// at least one switch.
    pub switch_ratio: Option<f64>,
    pub avg_outer_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStatistics {
    pub case: String,
    pub n_samples: usize,
    pub n_diverged: usize,
    pub base_seed: u64,
    pub modes: Vec<ModeStatistics>,
    pub histogram: Vec<ModeHistogram>,
}

impl BatchStatistics {
    pub fn mode(&self, variant: SwitchVariant) -> Option<&ModeStatistics> {
        self.modes.iter().find(|m| m.mode == variant.label())
    }
}

/// Wall-clock figures, kept apart from the statistics so those stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTiming {
    /// `(mode, mean seconds per sample)`.
    pub avg_time: Vec<(String, f64)>,
    pub total_seconds: f64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Verification {
    pub checked: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutput {
    pub statistics: BatchStatistics,
    pub timing: BatchTiming,
    pub samples: Vec<SampleRecord>,
    pub verification: Verification,
}

/// What an inspector sees alongside each mode's result.
pub struct SampleContext<'a> {
    pub index: usize,
    pub seed: u64,
    pub case: &'a NetworkCase,
    pub network: &'a Network,
    pub initial: &'a BusTypeAssignment,
}

pub type Inspector<'a> = dyn Fn(&SampleContext<'_>, &SwitchingResult) + Sync + 'a;

pub fn run_batch(case: &NetworkCase, config: &BatchConfig) -> Result<BatchOutput, ExperimentError> {
    run_batch_with(case, config, &ProportionalDispatch::default(), &|_, _| {})
}

/// Runs every configured mode on `n_samples` perturbed copies of `case`.
/// Each sample is seeded from `base_seed` and its index, so the output does
/// not depend on the number of workers.
pub fn run_batch_with(
    case: &NetworkCase,
    config: &BatchConfig,
    dispatcher: &dyn Dispatcher,
    inspector: &Inspector<'_>,
) -> Result<BatchOutput, ExperimentError> {
    if config.n_samples == 0 {
        return Err(ExperimentError::InvalidConfig("n_samples must be at least 1".into()));
    }
    if config.modes.is_empty() {
        return Err(ExperimentError::InvalidConfig("no modes requested".into()));
    }
    config.switching.solve.validate().map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;

    let jobs = config.jobs.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;
    let to_verify = verify_indices(config);

    let started = Instant::now();
    let results: Vec<(SampleRecord, Vec<String>)> = pool.install(|| {
        (0..config.n_samples)
            .into_par_iter()
            .map(|i| run_sample(case, config, dispatcher, inspector, i, to_verify.contains(&i)))
            .collect::<Result<_, _>>()
    })?;
    let total_seconds = started.elapsed().as_secs_f64();

    let mut verification = Verification {
        checked: to_verify.len(),
        failures: Vec::new(),
    };
    let mut samples = Vec::with_capacity(results.len());
    for (record, failures) in results {
        for f in &failures {
            log::error!("sample {}: {f}", record.index);
        }
        verification.failures.extend(failures.into_iter().map(|f| format!("sample {}: {f}", record.index)));
        samples.push(record);
    }

    let statistics = aggregate(&case.name, config, &samples);
    let timing = BatchTiming {
        avg_time: config
            .modes
            .iter()
            .enumerate()
            .map(|(m, v)| {
                let t: f64 = samples.iter().map(|s| s.modes[m].wall_time).sum();
                (v.label().to_string(), t / samples.len() as f64)
            })
            .collect(),
        total_seconds,
        jobs,
    };
    Ok(BatchOutput {
        statistics,
        timing,
        samples,
        verification,
    })
}

/// The perturbed and re-dispatched copy of `case` for one sample seed, as
/// used inside a batch. Lets a single sample be replayed on its own.
pub fn build_sample_case(
    case: &NetworkCase,
    seed: u64,
    dispatcher: &dyn Dispatcher,
) -> Result<(LoadScenario, NetworkCase), ExperimentError> {
    let scenario = sample_scenario(case, seed)?;
    let pg = dispatcher.dispatch(case, scenario.total_pd())?;
    let sample_case = scenario.apply(case).with_dispatch(&pg);
    Ok((scenario, sample_case))
}

fn verify_indices(config: &BatchConfig) -> HashSet<usize> {
    let n = config.n_samples;
    let k = ((n as f64 * config.verify_fraction).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed);
    rand::seq::index::sample(&mut rng, n, k).into_iter().collect()
}

fn run_sample(
    case: &NetworkCase,
    config: &BatchConfig,
    dispatcher: &dyn Dispatcher,
    inspector: &Inspector<'_>,
    index: usize,
    verify: bool,
) -> Result<(SampleRecord, Vec<String>), ExperimentError> {
    let seed = sample_seed(config.base_seed, index as u64);
    let (scenario, sample_case) = build_sample_case(case, seed, dispatcher)?;
    let network = Network::from_case(&sample_case)?;
    let initial = classify_buses(&sample_case)?;
    let ctx = SampleContext {
        index,
        seed,
        case: &sample_case,
        network: &network,
        initial: &initial,
    };

    let mut modes = Vec::with_capacity(config.modes.len());
    let mut failures = Vec::new();
    let mut baseline_converged = true;
    for &variant in &config.modes {
        let result = run_on_network(&network, &initial, variant, &config.switching)?;
        baseline_converged = result.baseline_report().is_some();
        if verify {
            if let Err(e) = verify_result(&result, &network, &initial, &config.switching) {
                failures.push(format!("{variant}: {e}"));
            }
        }
        inspector(&ctx, &result);
        modes.push(ModeRecord::from_result(&result));
    }
    Ok((
        SampleRecord {
            index,
            seed,
            scale_fraction: scenario.scale_fraction,
            baseline_converged,
            modes,
        },
        failures,
    ))
}

fn pct_drop(before: f64, after: f64) -> Option<f64> {
    (before > 0.0).then(|| 100.0 * (before - after) / before)
}

/// Table-style aggregates and the shared-edge histogram of summed voltage
/// violation per sample.
pub fn aggregate(case_name: &str, config: &BatchConfig, samples: &[SampleRecord]) -> BatchStatistics {
    let n = samples.len();
    let converged: Vec<&SampleRecord> = samples.iter().filter(|s| s.baseline_converged).collect();
    let nc = converged.len();
    let mean = |total: f64| if nc > 0 { total / nc as f64 } else { 0.0 };

    let mut series = Vec::with_capacity(config.modes.len());
    let modes = config
        .modes
        .iter()
        .enumerate()
        .map(|(m, variant)| {
            let recs: Vec<&ModeRecord> = converged.iter().map(|s| &s.modes[m]).collect();
            let feasible = samples.iter().filter(|s| s.modes[m].feasible).count();
            let q: usize = recs.iter().map(|r| r.q_count).sum();
            let v: usize = recs.iter().map(|r| r.v_count).sum();
            let base_v: usize = recs.iter().map(|r| r.baseline_v_count).sum();
            let mags: Vec<f64> = recs.iter().map(|r| r.v_magnitude).collect();
            let mag: f64 = mags.iter().sum();
            let base_mag: f64 = recs.iter().map(|r| r.baseline_v_magnitude).sum();
            let switched: Vec<&&ModeRecord> = recs.iter().filter(|r| r.ppqv_switches > 0).collect();
            let n_switches: usize = switched.iter().map(|r| r.ppqv_switches).sum();
            let resolved: usize = switched.iter().map(|r| r.resolved_v_violations).sum();
            let outer: usize = recs.iter().map(|r| r.outer_iterations).sum();
            let p90 = quantile(&mags, 0.9).unwrap_or(0.0);
            series.push((variant.label().to_string(), mags));
            ModeStatistics {
                mode: variant.label().to_string(),
                n_converged: nc,
                feasible_pct: if n > 0 { 100.0 * feasible as f64 / n as f64 } else { 0.0 },
                avg_q_violations: mean(q as f64),
                avg_v_violations: mean(v as f64),
                avg_v_magnitude: mean(mag),
                p90_v_magnitude: p90,
                pct_v_count_improvement: pct_drop(base_v as f64, v as f64),
                pct_v_magnitude_improvement: pct_drop(base_mag, mag),
                switch_ratio: (n_switches > 0).then(|| resolved as f64 / n_switches as f64),
                avg_outer_iterations: mean(outer as f64),
            }
        })
        .collect();
    BatchStatistics {
        case: case_name.to_string(),
        n_samples: n,
        n_diverged: n - nc,
        base_seed: config.base_seed,
        modes,
        histogram: shared_histogram(&series, config.histogram_bins),
    }
}
