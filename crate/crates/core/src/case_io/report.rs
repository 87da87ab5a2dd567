use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::experiments::{BatchStatistics, BatchTiming};
use crate::network::Network;
use crate::switching::{SwitchVariant, SwitchingResult, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportOptions {
    /// Include wall-clock figures. Off by default so repeated runs produce
    /// identical output.
    pub timing: bool,
    /// Effective configuration, echoed at the top of JSON output.
    pub config: Option<serde_json::Value>,
}

/// Something that can be written as a report.
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Solve {
        network: &'a Network,
        result: &'a SwitchingResult,
    },
    Batch {
        statistics: &'a BatchStatistics,
        timing: Option<&'a BatchTiming>,
    },
}

/// JSON form of a single-case run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub case: String,
    pub mode: SwitchVariant,
    pub feasible: bool,
    pub bus_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
    pub result: SwitchingResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub statistics: BatchStatistics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<BatchTiming>,
}

pub fn write_report(report: &Report<'_>, format: ReportFormat, options: &ReportOptions) -> std::io::Result<String> {
    let mut buf = Vec::new();
    write_report_to(&mut buf, report, format, options)?;
    Ok(String::from_utf8(buf).expect("reports are UTF-8"))
}

pub fn write_report_to<W: Write>(
    mut out: W,
    report: &Report<'_>,
    format: ReportFormat,
    options: &ReportOptions,
) -> std::io::Result<()> {
    match (report, format) {
        (Report::Solve { network, result }, ReportFormat::Json) => {
            let doc = SolveReport {
                config: options.config.clone(),
                case: network.name.clone(),
                mode: result.variant,
                feasible: result.is_feasible(),
                bus_ids: network.bus_ids.clone(),
                wall_time: options.timing.then_some(result.wall_time),
                result: (*result).clone(),
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            out.write_all(b"\n")
        }
        (Report::Solve { network, result }, ReportFormat::Csv) => write_solve_csv(out, network, result),
        (Report::Batch { statistics, timing }, ReportFormat::Json) => {
            let doc = BatchReport {
                config: options.config.clone(),
                statistics: (*statistics).clone(),
                timing: timing.filter(|_| options.timing).cloned(),
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            out.write_all(b"\n")
        }
        (Report::Batch { statistics, timing }, ReportFormat::Csv) => {
            write_batch_csv(out, statistics, timing.filter(|_| options.timing))
        }
    }
}

/// Renders `x` with at least nine significant digits, without exponent for
/// ordinary magnitudes.
pub(crate) fn fmt_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let shortest = format!("{x}");
    let digits = shortest
        .trim_start_matches('-')
        .trim_start_matches(['0', '.'])
        .chars()
        .filter(char::is_ascii_digit)
        .count();
    if digits >= 9 || shortest.contains('e') {
        return shortest;
    }
    let decimals = (8 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// One row per mode with the aggregate violation statistics.
pub fn write_batch_csv<W: Write>(out: W, stats: &BatchStatistics, timing: Option<&BatchTiming>) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec![
        "case",
        "mode",
        "n_samples",
        "n_converged",
        "feasible_pct",
        "avg_q_violations",
        "avg_v_violations",
        "avg_v_magnitude",
        "p90_v_magnitude",
        "pct_v_count_improvement",
        "pct_v_magnitude_improvement",
        "switch_ratio",
        "avg_outer_iterations",
    ];
    if timing.is_some() {
        header.push("avg_time");
    }
    w.write_record(&header).map_err(csv_err)?;
    for m in &stats.modes {
        let mut row = vec![
            stats.case.clone(),
            m.mode.clone(),
            stats.n_samples.to_string(),
            m.n_converged.to_string(),
            fmt_float(m.feasible_pct),
            fmt_float(m.avg_q_violations),
            fmt_float(m.avg_v_violations),
            fmt_float(m.avg_v_magnitude),
            fmt_float(m.p90_v_magnitude),
            opt(m.pct_v_count_improvement),
            opt(m.pct_v_magnitude_improvement),
            opt(m.switch_ratio),
            fmt_float(m.avg_outer_iterations),
        ];
        if let Some(t) = timing {
            let avg = t.avg_time.iter().find(|(mode, _)| *mode == m.mode).map(|(_, s)| *s);
            row.push(opt(avg));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
}

/// `mode,bin_low,bin_high,count` rows for every mode and bin.
pub fn write_histogram_csv<W: Write>(out: W, stats: &BatchStatistics) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["mode", "bin_low", "bin_high", "count"]).map_err(csv_err)?;
    for h in &stats.histogram {
        for b in &h.bins {
            w.write_record([h.mode.clone(), fmt_float(b.low), fmt_float(b.high), b.count.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()
}

fn describe(vs: &[Violation], bus: usize, class: &str) -> Option<String> {
    vs.iter()
        .find(|v| v.bus == bus)
        .map(|v| format!("{class}:{:?}:{}", v.bound, fmt_float(v.magnitude)).to_lowercase())
}

fn write_solve_csv<W: Write>(out: W, network: &Network, result: &SwitchingResult) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["bus_id", "type", "origin", "vm", "va_rad", "p", "q", "violations"])
        .map_err(csv_err)?;
    let s = &result.final_state;
    let a = &result.final_assignment;
    let r = &result.final_report;
    for k in 0..network.n() {
        let viol: Vec<String> = [
            describe(&r.gen_q, k, "gen_q"),
            describe(&r.gen_v, k, "gen_v"),
            describe(&r.load_v, k, "load_v"),
        ]
        .into_iter()
        .flatten()
        .collect();
        w.write_record([
            network.bus_id(k).to_string(),
            a.bus_type(k).to_string(),
            a.origin(k).to_string(),
            fmt_float(s.v[k]),
            fmt_float(s.theta[k]),
            fmt_float(s.p[k]),
            fmt_float(s.q[k]),
            viol.join(";"),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_matpower_case;
    use crate::experiments::{aggregate, BatchConfig, ModeRecord, SampleRecord};
    use crate::switching::{run_on_network, SwitchingOptions};

    const TWO_BUS: &str = "mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;
 2 1 50 20 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 100 -100 1.0 100 1 200 0; ];
mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1; ];
";

    fn solved() -> (Network, SwitchingResult) {
        let case = parse_matpower_case(TWO_BUS).unwrap();
        let net = Network::from_case(&case).unwrap();
        let a = crate::network::classify_buses(&case).unwrap();
        let r = run_on_network(&net, &a, SwitchVariant::PpqvBatch, &SwitchingOptions::default()).unwrap();
        (net, r)
    }

    #[test]
    fn fmt_float_keeps_nine_significant_digits() {
        assert_eq!(fmt_float(54.2), "54.2000000");
        assert_eq!(fmt_float(0.007), "0.00700000000");
        assert_eq!(fmt_float(0.1234567891234), "0.1234567891234");
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(-1.5), "-1.50000000");
        assert_eq!(fmt_float(100.0), "100.000000");
    }

    #[test]
    fn feasible_solve_json_has_empty_violation_lists() {
        let (net, r) = solved();
        let text = write_report(&Report::Solve { network: &net, result: &r }, ReportFormat::Json, &ReportOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["feasible"], true);
        assert_eq!(v["result"]["final_report"]["gen_q"], serde_json::json!([]));
        assert_eq!(v["result"]["final_report"]["load_v"], serde_json::json!([]));
        assert!(v.get("wall_time").is_none());
    }

    #[test]
    fn solve_json_round_trips() {
        let (net, mut r) = solved();
        let text = write_report(&Report::Solve { network: &net, result: &r }, ReportFormat::Json, &ReportOptions::default()).unwrap();
        let back: SolveReport = serde_json::from_str(&text).unwrap();
        r.wall_time = 0.0;
        assert_eq!(back.result, r);
        assert_eq!(back.bus_ids, vec![1, 2]);
    }

    #[test]
    fn batch_csv_has_one_row_per_mode() {
        let config = BatchConfig {
            n_samples: 2,
            ..BatchConfig::default()
        };
        let record = |variant| ModeRecord {
            variant,
            divergent: false,
            feasible: true,
            q_count: 0,
            v_count: 0,
            v_magnitude: 0.0,
            total_count: 0,
            baseline_v_count: 0,
            baseline_v_magnitude: 0.0,
            outer_iterations: 1,
            ppqv_switches: 0,
            q_switches: 0,
            resolved_v_violations: 0,
            wall_time: 0.0,
        };
        let samples: Vec<SampleRecord> = (0..2)
            .map(|i| SampleRecord {
                index: i,
                seed: i as u64,
                scale_fraction: 0.5,
                baseline_converged: true,
                modes: SwitchVariant::ALL.iter().map(|&v| record(v)).collect(),
            })
            .collect();
        let stats = aggregate("t", &config, &samples);
        let mut buf = Vec::new();
        write_batch_csv(&mut buf, &stats, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("case,mode,n_samples"));
        let modes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(modes, ["baseline", "qlim", "ppqv", "ppqv_prime"]);
        assert!(!text.contains("\r\n"));
        assert!(!lines[0].contains("avg_time"));

        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &stats).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("mode,bin_low,bin_high,count\n"));
        assert_eq!(text.lines().count(), 1 + 4 * config.histogram_bins);
    }
}
