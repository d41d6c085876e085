//! Experiment driver: configuration, seeding, parallel replicas and CSV
//! output for every experiment the command-line tool exposes.

mod accuracy;
mod bloom_sim;
mod config;
mod output;
mod scenarios;

use std::time::{Duration, Instant};

pub use accuracy::{run_accuracy_curve, run_theorem};
pub use bloom_sim::{min_colluders_for_ppv, run_collusion_table, run_fpr_curve, sample_visitors, BloomReplica, Evaluation};
pub use config::{ExperimentConfig, ExperimentKind};
pub use output::{emit_csv, num, Table};
pub use scenarios::{
    run_scenario, simulate_scenario1, simulate_scenario2, simulate_scenario3, Event, Scenario1Run, Scenario2Run,
    Scenario3Run,
};

use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct RunResult {
    pub table: Table,
    /// Per-replica rows behind `table`.
    pub raw: Table,
    pub summary: String,
    pub elapsed: Duration,
}

/// SplitMix64 output for `i`.
pub fn splitmix64(i: u64) -> u64 {
    let mut z = i.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for replica `i`; independent of how many replicas run.
pub fn replica_seed(seed: u64, i: u64) -> u64 {
    seed ^ splitmix64(i)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_stddev(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Runs the configured experiment, on a pool of `jobs` threads if set.
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let go = || match cfg.kind {
        ExperimentKind::AccuracyCurve => run_accuracy_curve(cfg),
        ExperimentKind::Theorem => run_theorem(cfg),
        ExperimentKind::CollusionTable => run_collusion_table(cfg),
        ExperimentKind::FprCurve => run_fpr_curve(cfg),
        ExperimentKind::Scenario1 | ExperimentKind::Scenario2 | ExperimentKind::Scenario3 => run_scenario(cfg),
    };
    let mut result = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| invalid(format!("cannot start {jobs} worker threads: {e}")))?
            .install(go)?,
        None => go()?,
    };
    result.elapsed = start.elapsed();
    Ok(result)
}
