use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ppqv_core::switching::Ranking;
use ppqv_core::SwitchVariant;
use serde::Serialize;

/// Directory searched for case files given by bare name.
pub const CASE_DIR_VAR: &str = "PPQV_CASE_DIR";

#[derive(Debug, Parser)]
#[command(name = "ppqv", version, about = "AC power flow with P/PQV bus-type switching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one case under one switching mode.
    Solve(SolveArgs),
    /// Run the Monte-Carlo load study and print aggregate statistics.
    Batch(BatchArgs),
    /// Print the unique-path catalog for the case's initial bus types.
    Paths(PathsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Baseline,
    Qlim,
    Ppqv,
    PpqvPrime,
}

impl From<Mode> for SwitchVariant {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Baseline => SwitchVariant::Baseline,
            Mode::Qlim => SwitchVariant::Qlim,
            Mode::Ppqv => SwitchVariant::PpqvBatch,
            Mode::PpqvPrime => SwitchVariant::PpqvIncremental,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingArg {
    Total,
    Priority,
}

impl From<RankingArg> for Ranking {
    fn from(r: RankingArg) -> Self {
        match r {
            RankingArg::Total => Ranking::TotalFirst,
            RankingArg::Priority => Ranking::Priority,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// MATPOWER case file. Bare names are also looked up in $PPQV_CASE_DIR,
    /// with or without the `.m` suffix.
    pub case: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[arg(short, long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Longest path, in branches, considered when pairing buses.
    #[arg(long, default_value_t = 8)]
    pub max_hops: usize,
}

/// Power-flow and switching-loop settings.
#[derive(Debug, Args, Serialize)]
pub struct Engine {
    /// Mismatch tolerance (p.u.).
    #[arg(long = "tol", default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Newton iterations per power flow.
    #[arg(long, default_value_t = 30)]
    pub max_iter: usize,
    /// Power-flow runs per switching loop.
    #[arg(long, default_value_t = 20)]
    pub outer_cap: usize,
    /// Rule used to pick the returned iterate of the P/PQV modes.
    #[arg(long, value_enum, default_value_t = RankingArg::Total)]
    pub ranking: RankingArg,
    /// Also report reactive-limit violations of the slack generator.
    #[arg(long)]
    pub slack_q_limits: bool,
    /// Include wall-clock times in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub engine: Engine,
    #[arg(short, long, value_enum, default_value_t = Mode::Ppqv)]
    pub mode: Mode,
    /// JSON file replacing bus demands and generator outputs before solving.
    #[arg(long)]
    pub loads: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BatchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub engine: Engine,
    #[arg(short = 'n', long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(short, long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads; defaults to the number of available cores.
    #[arg(short, long)]
    pub jobs: Option<usize>,
    /// Modes to run, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Mode::Baseline, Mode::Qlim, Mode::Ppqv, Mode::PpqvPrime])]
    pub modes: Vec<Mode>,
    /// Bins of the summed voltage-violation histogram.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Also write the histogram as CSV to this file.
    #[arg(long)]
    #[serde(skip)]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PathsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn batch_defaults() {
        let cli = Cli::try_parse_from(["ppqv", "batch", "case14.m"]).unwrap();
        let Command::Batch(b) = cli.command else { panic!() };
        assert_eq!(b.samples, 10_000);
        assert_eq!(b.seed, 42);
        assert_eq!(b.common.max_hops, 8);
        assert_eq!(b.engine.tolerance, 1e-8);
        assert_eq!(b.engine.max_iter, 30);
        assert_eq!(b.engine.outer_cap, 20);
        assert_eq!(b.modes.len(), 4);
        assert_eq!(b.common.format, Format::Json);
    }

    #[test]
    fn solve_mode_names() {
        let cli = Cli::try_parse_from(["ppqv", "solve", "c.m", "--mode", "ppqv-prime"]).unwrap();
        let Command::Solve(s) = cli.command else { panic!() };
        assert_eq!(SwitchVariant::from(s.mode), SwitchVariant::PpqvIncremental);
        assert!(Cli::try_parse_from(["ppqv", "solve", "c.m", "--mode", "ppqv_prime"]).is_err());
    }
}
