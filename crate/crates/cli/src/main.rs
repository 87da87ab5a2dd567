//! `ppqv`: single-case solves, batch studies and path catalogs from the
//! command line.
//!
//! Exit status is 0 on success, 1 when `solve` ends without a converged
//! power flow and 2 on any input or usage error. Reports go to stdout or
//! `--output`; diagnostics go to stderr.

mod args;
mod overrides;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use ppqv_core::case_io::{write_batch_csv, write_histogram_csv, write_report_to, Report, ReportFormat, ReportOptions};
use ppqv_core::experiments::{run_batch, BatchConfig};
use ppqv_core::network::classify_buses;
use ppqv_core::switching::{build_path_catalog, run_on_network, ViolationRules};
use ppqv_core::{read_matpower_case, Network, NetworkCase, SolveOptions, SwitchVariant, SwitchingOptions};
use serde::Serialize;
use serde_json::json;

use args::{BatchArgs, Cli, Command, Common, Engine, Format, PathsArgs, SolveArgs, CASE_DIR_VAR};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => solve(&a),
        Command::Batch(a) => batch(&a),
        Command::Paths(a) => paths(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Finds the case file: the path as given, else under `$PPQV_CASE_DIR`,
/// trying the `.m` suffix in both places.
fn resolve_case(path: &Path) -> Result<PathBuf> {
    let mut candidates = vec![path.to_path_buf(), path.with_extension("m")];
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(CASE_DIR_VAR) {
            let dir = PathBuf::from(dir);
            candidates.push(dir.join(path));
            candidates.push(dir.join(path).with_extension("m"));
        }
    }
    candidates
        .into_iter()
        .find(|p| p.is_file())
        .with_context(|| format!("case file {} not found (also searched ${CASE_DIR_VAR})", path.display()))
}

fn load_case(common: &Common) -> Result<(PathBuf, NetworkCase)> {
    let path = resolve_case(&common.case)?;
    let case = read_matpower_case(&path).with_context(|| format!("cannot load {}", path.display()))?;
    Ok((path, case))
}

fn switching_options(common: &Common, engine: &Engine) -> SwitchingOptions {
    SwitchingOptions {
        solve: SolveOptions {
            tolerance: engine.tolerance,
            max_iterations: engine.max_iter,
            ..SolveOptions::default()
        },
        max_hops: common.max_hops,
        outer_cap: engine.outer_cap,
        rules: ViolationRules {
            slack_q_limits: engine.slack_q_limits,
            ..ViolationRules::default()
        },
        ranking: engine.ranking.into(),
    }
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    }
}

/// The effective configuration, echoed at the top of JSON reports.
fn config_echo(subcommand: &str, case_path: &Path, args: &impl Serialize, extra: serde_json::Value) -> serde_json::Value {
    let mut v = json!({ "subcommand": subcommand, "case_path": case_path.display().to_string() });
    let map = v.as_object_mut().expect("object");
    if let serde_json::Value::Object(fields) = serde_json::to_value(args).expect("arguments serialize") {
        map.extend(fields.into_iter().filter(|(k, _)| k != "case"));
    }
    if let serde_json::Value::Object(fields) = extra {
        map.extend(fields);
    }
    v
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn solve(a: &SolveArgs) -> Result<ExitCode> {
    if a.engine.tolerance.is_nan() || a.engine.tolerance <= 0.0 {
        anyhow::bail!("--tol must be positive");
    }
    let (path, mut case) = load_case(&a.common)?;
    if let Some(file) = &a.loads {
        case = overrides::read(file)?.apply(&case)?;
    }
    let network = Network::from_case(&case)?;
    let initial = classify_buses(&case)?;
    let options = switching_options(&a.common, &a.engine);
    let variant = SwitchVariant::from(a.mode);
    let result = run_on_network(&network, &initial, variant, &options)?;

    let extra = json!({ "loads": a.loads.as_ref().map(|p| p.display().to_string()) });
    let opts = ReportOptions {
        timing: a.engine.timing,
        config: Some(config_echo("solve", &path, a, extra)),
    };
    let mut out = open_output(a.common.output.as_deref())?;
    write_report_to(&mut out, &Report::Solve { network: &network, result: &result }, report_format(a.common.format), &opts)?;
    out.flush()?;

    if result.divergent {
        eprintln!("power flow did not converge: {}", result.history[0].outcome.diagnostic.as_deref().unwrap_or("no diagnostic"));
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn batch(a: &BatchArgs) -> Result<ExitCode> {
    let (path, case) = load_case(&a.common)?;
    if a.jobs == Some(0) {
        anyhow::bail!("--jobs must be at least 1");
    }
    let jobs = a.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let mut modes: Vec<SwitchVariant> = a.modes.iter().map(|&m| m.into()).collect();
    modes.dedup();
    let config = BatchConfig {
        n_samples: a.samples,
        base_seed: a.seed,
        modes,
        jobs: Some(jobs),
        switching: switching_options(&a.common, &a.engine),
        histogram_bins: a.bins,
        ..BatchConfig::default()
    };
    if config.histogram_bins == 0 {
        anyhow::bail!("--bins must be at least 1");
    }
    let output = run_batch(&case, &config)?;
    if !output.verification.failures.is_empty() {
        eprintln!(
            "warning: {} of {} spot-checked samples failed verification",
            output.verification.failures.len(),
            output.verification.checked
        );
    }
    let timing = a.engine.timing.then_some(&output.timing);

    let mut out = open_output(a.common.output.as_deref())?;
    match a.common.format {
        Format::Json => {
            let opts = ReportOptions {
                timing: a.engine.timing,
                config: Some(config_echo("batch", &path, a, json!({ "jobs": jobs }))),
            };
            write_report_to(
                &mut out,
                &Report::Batch { statistics: &output.statistics, timing },
                ReportFormat::Json,
                &opts,
            )?;
        }
        Format::Csv => write_batch_csv(&mut out, &output.statistics, timing)?,
    }
    out.flush()?;

    if let Some(hist) = &a.histogram {
        let mut w = open_output(Some(hist))?;
        write_histogram_csv(&mut w, &output.statistics)?;
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PathEntry {
    pq_bus: u32,
    pv_bus: u32,
    hops: usize,
    path: Vec<u32>,
}

fn paths(a: &PathsArgs) -> Result<ExitCode> {
    let (path, case) = load_case(&a.common)?;
    let network = Network::from_case(&case)?;
    let initial = classify_buses(&case)?;
    let catalog = build_path_catalog(&network.topology, &initial, a.common.max_hops);
    let entries: Vec<PathEntry> = catalog
        .pairs
        .iter()
        .map(|(&(pq, pv), p)| PathEntry {
            pq_bus: network.bus_id(pq),
            pv_bus: network.bus_id(pv),
            hops: p.len() - 1,
            path: p.iter().map(|&k| network.bus_id(k)).collect(),
        })
        .collect();

    let mut out = open_output(a.common.output.as_deref())?;
    match a.common.format {
        Format::Json => {
            let doc = json!({
                "config": config_echo("paths", &path, a, json!({})),
                "case": network.name,
                "max_hops": catalog.max_hops,
                "pairs": entries,
            });
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "pq_bus,pv_bus,hops,path")?;
            for e in &entries {
                let p: Vec<String> = e.path.iter().map(u32::to_string).collect();
                writeln!(out, "{},{},{},{}", e.pq_bus, e.pv_bus, e.hops, p.join("-"))?;
            }
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
