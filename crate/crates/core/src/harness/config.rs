use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::aggregation::MAX_EPSILON;
use crate::error::{invalid, Error, Result};
use crate::model::{Uid, MAX_CONTRIBUTIONS_PER_REPORT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    AccuracyCurve,
    CollusionTable,
    FprCurve,
    Scenario1,
    Scenario2,
    Scenario3,
    Theorem,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::AccuracyCurve,
        ExperimentKind::CollusionTable,
        ExperimentKind::FprCurve,
        ExperimentKind::Scenario1,
        ExperimentKind::Scenario2,
        ExperimentKind::Scenario3,
        ExperimentKind::Theorem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AccuracyCurve => "accuracy-curve",
            ExperimentKind::CollusionTable => "collusion-table",
            ExperimentKind::FprCurve => "fpr-curve",
            ExperimentKind::Scenario1 => "scenario1",
            ExperimentKind::Scenario2 => "scenario2",
            ExperimentKind::Scenario3 => "scenario3",
            ExperimentKind::Theorem => "theorem",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub epsilons: Vec<f64>,
    /// Colluding buyer counts.
    pub colluders: Vec<u32>,
    /// Candidate pool sizes (the target list size `u` for accuracy runs).
    pub pools: Vec<u64>,
    pub visitors: u64,
    pub accusations: Vec<u64>,
    pub hashes: u32,
    pub bloom_bits: u64,
    pub replicas: usize,
    pub seed: u64,
    /// Monte Carlo trials per accuracy cell.
    pub trials: u64,
    /// Users sharing one ad inventory in scenario 2.
    pub segment: u64,
    /// Scenario 1: whether the target reaches the secondary site.
    pub target_visits: bool,
    /// Collusion search gives up past this many buyers.
    pub max_colluders: u32,
    pub noiseless: bool,
    pub raw: bool,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            kind,
            epsilons: vec![10.0],
            colluders: vec![20],
            pools: vec![100_000],
            visitors: 10_000,
            accusations: vec![10_000],
            hashes: 20,
            bloom_bits: 201_000,
            replicas: 5,
            seed: 1,
            trials: 100_000,
            segment: 100,
            target_visits: true,
            max_colluders: 300,
            noiseless: false,
            raw: false,
            jobs: None,
            out: None,
        };
        match kind {
            ExperimentKind::AccuracyCurve => ExperimentConfig {
                epsilons: vec![1.0, 10.0],
                colluders: (1..=20).collect(),
                pools: vec![1_000, 1_000_000],
                ..base
            },
            ExperimentKind::Theorem => {
                ExperimentConfig { colluders: vec![2], pools: vec![1_000_000], replicas: 1, ..base }
            }
            ExperimentKind::CollusionTable => {
                ExperimentConfig { epsilons: vec![10.0, 1.0], accusations: vec![1_000, 10_000], ..base }
            }
            ExperimentKind::FprCurve => ExperimentConfig {
                epsilons: vec![1.0, 10.0],
                pools: vec![10_000, 100_000],
                accusations: vec![100, 1_000, 10_000],
                ..base
            },
            ExperimentKind::Scenario1 => ExperimentConfig { colluders: vec![1], replicas: 5, ..base },
            ExperimentKind::Scenario2 => {
                ExperimentConfig { colluders: vec![15], pools: vec![10_000], replicas: 100, ..base }
            }
            ExperimentKind::Scenario3 => ExperimentConfig { colluders: vec![21], ..base },
        }
    }

    /// Sets one option by its command-line name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| invalid(format!("bad value {value:?} for {key}: expected {what}"));
        match key {
            "epsilon" => self.epsilons = parse_list(value).map_err(|_| bad("numbers"))?,
            "buyers" => self.colluders = parse_list(value).map_err(|_| bad("integers"))?,
            "pool" => self.pools = parse_list(value).map_err(|_| bad("integers"))?,
            "accusations" => self.accusations = parse_list(value).map_err(|_| bad("integers"))?,
            "visitors" => self.visitors = value.parse().map_err(|_| bad("an integer"))?,
            "hashes" => self.hashes = value.parse().map_err(|_| bad("an integer"))?,
            "bloom-bits" => self.bloom_bits = value.parse().map_err(|_| bad("an integer"))?,
            "replicas" => self.replicas = value.parse().map_err(|_| bad("an integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("an integer"))?,
            "trials" => self.trials = value.parse().map_err(|_| bad("an integer"))?,
            "segment" => self.segment = value.parse().map_err(|_| bad("an integer"))?,
            "max-buyers" => self.max_colluders = value.parse().map_err(|_| bad("an integer"))?,
            "jobs" => self.jobs = Some(value.parse().map_err(|_| bad("an integer"))?),
            "target-visits" => self.target_visits = parse_bool(value).ok_or_else(|| bad("true or false"))?,
            "noiseless" => self.noiseless = parse_bool(value).ok_or_else(|| bad("true or false"))?,
            "raw" => self.raw = parse_bool(value).ok_or_else(|| bad("true or false"))?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(invalid(format!("unknown option {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", no + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| invalid(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |len: usize, what: &str| {
            if len == 0 {
                Err(invalid(format!("{what} list is empty")))
            } else {
                Ok(())
            }
        };
        nonempty(self.epsilons.len(), "epsilon")?;
        nonempty(self.colluders.len(), "buyers")?;
        nonempty(self.pools.len(), "pool")?;
        nonempty(self.accusations.len(), "accusations")?;
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e <= MAX_EPSILON)) {
            return Err(invalid(format!("epsilon {e} outside (0, {MAX_EPSILON}]")));
        }
        if self.replicas == 0 {
            return Err(invalid("replicas must be at least 1"));
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.hashes == 0 || self.hashes as usize > MAX_CONTRIBUTIONS_PER_REPORT {
            return Err(invalid("hashes must be in 1..=20"));
        }
        if self.bloom_bits < self.hashes as u64 || self.bloom_bits > u32::MAX as u64 {
            return Err(invalid("bloom-bits must be at least the hash count and fit in 32 bits"));
        }
        if let Some(p) = self.pools.iter().find(|&&p| p > Uid::MAX as u64 + 1) {
            return Err(invalid(format!("pool {p} exceeds the uid space")));
        }
        match self.kind {
            ExperimentKind::AccuracyCurve | ExperimentKind::Theorem => {
                if self.pools.iter().any(|&p| p < 2) {
                    return Err(invalid("accuracy needs at least two candidates"));
                }
            }
            ExperimentKind::CollusionTable | ExperimentKind::FprCurve | ExperimentKind::Scenario3 => {
                if self.colluders.contains(&0) {
                    return Err(invalid("buyers must be at least 1"));
                }
                for &pool in &self.pools {
                    if self.visitors == 0 || self.visitors > pool {
                        return Err(invalid(format!("visitors must be in 1..={pool}")));
                    }
                    if let Some(a) = self.accusations.iter().find(|&&a| a == 0 || a > pool) {
                        return Err(invalid(format!("accusations {a} must be in 1..={pool}")));
                    }
                }
                if self.kind == ExperimentKind::Scenario3 && self.colluders.iter().any(|&n| n > 200) {
                    return Err(invalid("buyers must be in 1..=200"));
                }
            }
            ExperimentKind::Scenario1 | ExperimentKind::Scenario2 => {
                if self.colluders.iter().any(|&n| n == 0 || n > 200) {
                    return Err(invalid("buyers must be in 1..=200"));
                }
            }
        }
        Ok(())
    }
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value.split(',').map(|v| v.trim().parse()).collect()
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("scenario4".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn text_overrides_defaults() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::CollusionTable);
        cfg.apply_text("# table\nepsilon = 1, 10\n\naccusations=500 # small\nnoiseless = yes\n").unwrap();
        assert_eq!(cfg.epsilons, vec![1.0, 10.0]);
        assert_eq!(cfg.accusations, vec![500]);
        assert!(cfg.noiseless);
        assert!(cfg.apply_text("epsilon 1").is_err());
        assert!(cfg.apply_text("colour = red").is_err());
        assert!(cfg.apply_text("replicas = many").is_err());
    }

    #[test]
    fn validation() {
        for k in ExperimentKind::ALL {
            ExperimentConfig::defaults(k).validate().unwrap();
        }
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Scenario3);
        cfg.visitors = 100_001;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Theorem);
        cfg.epsilons = vec![65.0];
        assert!(cfg.validate().is_err());
        cfg.epsilons = vec![];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::FprCurve);
        cfg.replicas = 0;
        assert!(cfg.validate().is_err());
    }
}
