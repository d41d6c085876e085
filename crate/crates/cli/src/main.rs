use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use prau_core::harness::{self, emit_csv, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "prau-lab", version, about = "Auction reporting linkage experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Numeric and Monte Carlo prediction accuracy over an (epsilon, u, n) grid.
    AccuracyCurve(Opts),
    /// Colluding buyers needed for PPV above 0.99.
    CollusionTable(Opts),
    /// False positive rate against the number of accusations.
    FprCurve(Opts),
    /// Single tracked user: linkage by report arrival.
    Scenario1(Opts),
    /// Known candidate list: predict which candidate visited.
    Scenario2(Opts),
    /// Unknown visitors: Bloom filter reporting and accusation.
    Scenario3(Opts),
    /// One accuracy evaluation with its case terms.
    Theorem(Opts),
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// key = value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated privacy parameters.
    #[arg(long)]
    epsilon: Option<String>,
    /// Comma-separated colluding buyer counts.
    #[arg(long)]
    buyers: Option<String>,
    /// Comma-separated candidate pool sizes.
    #[arg(long)]
    pool: Option<String>,
    #[arg(long)]
    visitors: Option<String>,
    /// Comma-separated accusation counts.
    #[arg(long)]
    accusations: Option<String>,
    #[arg(long)]
    hashes: Option<String>,
    #[arg(long = "bloom-bits")]
    bloom_bits: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Monte Carlo trials per accuracy cell.
    #[arg(long)]
    trials: Option<String>,
    /// Users sharing an ad inventory (scenario 2).
    #[arg(long)]
    segment: Option<String>,
    /// Give up the collusion search past this many buyers.
    #[arg(long = "max-buyers")]
    max_buyers: Option<String>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also emit per-replica rows.
    #[arg(long)]
    raw: bool,
    /// Disable aggregation noise (diagnostics only).
    #[arg(long)]
    noiseless: bool,
    /// Scenario 1: the target never reaches the secondary site.
    #[arg(long = "no-visit")]
    no_visit: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, Opts) {
        match self {
            Command::AccuracyCurve(o) => (ExperimentKind::AccuracyCurve, o),
            Command::CollusionTable(o) => (ExperimentKind::CollusionTable, o),
            Command::FprCurve(o) => (ExperimentKind::FprCurve, o),
            Command::Scenario1(o) => (ExperimentKind::Scenario1, o),
            Command::Scenario2(o) => (ExperimentKind::Scenario2, o),
            Command::Scenario3(o) => (ExperimentKind::Scenario3, o),
            Command::Theorem(o) => (ExperimentKind::Theorem, o),
        }
    }
}

fn build_config(kind: ExperimentKind, opts: &Opts) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::defaults(kind);
    if let Some(path) = &opts.config {
        cfg.apply_file(path)?;
    }
    let pairs = [
        ("epsilon", &opts.epsilon),
        ("buyers", &opts.buyers),
        ("pool", &opts.pool),
        ("visitors", &opts.visitors),
        ("accusations", &opts.accusations),
        ("hashes", &opts.hashes),
        ("bloom-bits", &opts.bloom_bits),
        ("replicas", &opts.replicas),
        ("seed", &opts.seed),
        ("trials", &opts.trials),
        ("segment", &opts.segment),
        ("max-buyers", &opts.max_buyers),
        ("jobs", &opts.jobs),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if opts.raw {
        cfg.raw = true;
    }
    if opts.noiseless {
        cfg.noiseless = true;
    }
    if opts.no_visit {
        cfg.target_visits = false;
    }
    if let Some(out) = &opts.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn raw_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.raw.csv"))
}

fn run(cli: Cli) -> Result<()> {
    let (kind, opts) = cli.command.split();
    let cfg = build_config(kind, &opts)?;
    let result = harness::run(&cfg).with_context(|| format!("{kind} failed"))?;
    match &cfg.out {
        Some(out) => {
            emit_csv(&result.table, out)?;
            if cfg.raw {
                emit_csv(&result.raw, &raw_path(out))?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&result.table.to_csv())?;
            if cfg.raw {
                writeln!(stdout)?;
                stdout.write_all(&result.raw.to_csv())?;
            }
        }
    }
    eprintln!("{}", result.summary);
    eprintln!("elapsed {:.2} s", result.elapsed.as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(args: &[&str]) -> Result<ExperimentConfig> {
        let cli = Cli::try_parse_from(std::iter::once("prau-lab").chain(args.iter().copied()))?;
        let (kind, opts) = cli.command.split();
        build_config(kind, &opts)
    }

    #[test]
    fn flags_override_defaults() {
        let cfg = config(&["fpr-curve", "--epsilon", "1,10", "--pool", "10000", "--seed", "9", "--raw"]).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::FprCurve);
        assert_eq!(cfg.epsilons, vec![1.0, 10.0]);
        assert_eq!(cfg.pools, vec![10_000]);
        assert_eq!(cfg.seed, 9);
        assert!(cfg.raw);
    }

    #[test]
    fn flags_override_config_file() {
        let path = std::env::temp_dir().join(format!("prau-lab-unit-{}.conf", std::process::id()));
        std::fs::write(&path, "seed = 4\nreplicas = 3\n").unwrap();
        let cfg = config(&["collusion-table", "--config", path.to_str().unwrap(), "--seed", "5"]).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!((cfg.seed, cfg.replicas), (5, 3));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(config(&["theorem", "--epsilon", "99"]).is_err());
        assert!(config(&["scenario2", "--buyers", "0"]).is_err());
        assert!(config(&["theorem", "--seed", "x"]).is_err());
        assert!(config(&["theorem", "--bogus"]).is_err());
    }

    #[test]
    fn no_visit_clears_the_visit() {
        assert!(!config(&["scenario1", "--no-visit"]).unwrap().target_visits);
        assert!(config(&["scenario1"]).unwrap().target_visits);
    }

    #[test]
    fn raw_file_sits_next_to_output() {
        assert_eq!(raw_path(Path::new("/tmp/out/table.csv")), PathBuf::from("/tmp/out/table.raw.csv"));
    }
}
