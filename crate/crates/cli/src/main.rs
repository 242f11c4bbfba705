mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Lower bounds on adversarial cross-entropy and 0-1 loss for labeled data.
#[derive(Debug, Parser)]
#[command(name = "advbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal loss bound for one dataset at one budget (JSON).
    Bound(BoundArgs),
    /// Bound over an eps grid and nested subsample sizes (TSV).
    Sweep(SweepArgs),
    /// Closed-form loss for a two-Gaussian mixture, optionally against sampled data (TSV).
    Gaussian(GaussianArgs),
    /// Wall time of the exact solver against the Frank-Wolfe reference (TSV).
    Bench(BenchArgs),
    /// Edge counts and collision probability per eps (TSV).
    GraphStats(GraphStatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    L2,
    Linf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file (CSV, or the RBND1 binary format).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input format; inferred from the extension when omitted (`.bin` means binary).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Zero-based CSV column holding the label.
    #[arg(long, default_value_t = 0)]
    pub label_col: usize,
    /// Two raw label values mapped to classes +1 and -1; other rows are dropped.
    #[arg(long, value_parser = parse_classes)]
    pub classes: Option<(String, String)>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum, default_value = "l2")]
    pub norm: NormArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Per-solve time limit in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Omit wall-clock timings so output is byte-reproducible.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Args)]
pub struct EpsArgs {
    /// Comma-separated budgets.
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Inclusive grid `start:stop:step`.
    #[arg(long, value_parser = parse_grid)]
    pub eps_grid: Option<EpsGrid>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub eps: f64,
    /// Subsample this many units per class first.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Check the certificate in exact arithmetic; exit 5 if it fails.
    #[arg(long)]
    pub verify: bool,
    /// With --verify, also run Frank-Wolfe to this duality gap.
    #[arg(long)]
    pub fw_tol: Option<f64>,
    /// Include per-point probabilities in the output.
    #[arg(long)]
    pub emit_q: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: EpsArgs,
    /// Comma-separated per-class sample sizes; samples for one seed are nested.
    #[arg(long, value_delimiter = ',')]
    pub samples: Vec<u64>,
    /// Independent seeds derived from --seed.
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
}

#[derive(Debug, Args)]
pub struct GaussianArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: EpsArgs,
    /// Class +1 mean; class -1 has the negated mean. Omit to use the random diagonal preset.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu: Vec<f64>,
    /// Diagonal covariance entries for --mu (default all ones).
    #[arg(long, value_delimiter = ',')]
    pub var: Vec<f64>,
    /// Preset dimension.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Preset mean scale C in `mu_i = C * S_ii / sqrt(d)`.
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.5)]
    pub prior: f64,
    /// Also bound a sample with this many points per class.
    #[arg(long)]
    pub empirical: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: EpsArgs,
    /// Per-class sizes; synthetic two-dimensional preset data unless --input is given.
    #[arg(long, value_delimiter = ',', default_values_t = vec![250u64, 500, 1000])]
    pub samples: Vec<u64>,
    #[arg(long, default_value_t = 3)]
    pub repeats: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub fw_tol: f64,
}

#[derive(Debug, Args)]
pub struct GraphStatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: EpsArgs,
    #[arg(long)]
    pub samples: Option<u64>,
}

fn parse_classes(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() && a.trim() != b.trim() => {
            Ok((a.trim().to_string(), b.trim().to_string()))
        }
        _ => Err(format!("expected two distinct values `a,b`, got {s:?}")),
    }
}

/// Points of an inclusive `start:stop:step` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsGrid(pub Vec<f64>);

fn parse_grid(s: &str) -> Result<EpsGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, step] = parts[..] else {
        return Err(format!("expected start:stop:step, got {s:?}"));
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(format!("empty eps grid {s:?}"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok(EpsGrid((0..=n).map(|i| start + i as f64 * step).collect()))
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        CliError { code: 5, message: message.into() }
    }
}

impl From<advbound::Error> for CliError {
    fn from(e: advbound::Error) -> Self {
        use advbound::Error as E;
        let code = match e {
            E::Io { .. }
            | E::Parse { .. }
            | E::EmptyDataset
            | E::Format(_)
            | E::Truncated { .. }
            | E::DimensionMismatch { .. } => 3,
            E::InsufficientClassMass { .. } | E::Invalid(_) | E::Unsupported(_) => 2,
            E::IndexMismatch(_) => 5,
            E::Overflow(_) | E::UndefinedStatistic(_) | E::Internal(_) | E::Timeout => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bound(a) => commands::bound(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Gaussian(a) => commands::gaussian(a),
        Command::Bench(a) => commands::bench(a),
        Command::GraphStats(a) => commands::graph_stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("advbound: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        assert_eq!(parse_grid("0:1:0.25").unwrap().0, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("0.1:0.3:0.1").unwrap().0.len(), 3);
        assert_eq!(parse_grid("2:2:1").unwrap().0, vec![2.0]);
    }

    #[test]
    fn empty_grids_rejected() {
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn class_pair_parsing() {
        assert_eq!(parse_classes("3, 8").unwrap(), ("3".into(), "8".into()));
        assert!(parse_classes("3,3").is_err());
        assert!(parse_classes("3").is_err());
    }
}
