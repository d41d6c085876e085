//! Histogram-level replay of scenario 3. A replica fixes the visitor sample,
//! the hash family and one unit-scale Laplace draw per bucket; any
//! (n, epsilon, accusations) cell is then evaluated on the exact pre-noise
//! bucket sums the full pipeline would produce, with the stored draws scaled
//! to `l1 / epsilon`.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rayon::prelude::*;

use super::{mean, num, replica_seed, sample_stddev, sample_variance, ExperimentConfig, RunResult, Table};
use crate::adversary::{bloom_position, AttackConfig};
use crate::aggregation::sample_laplace_unchecked;
use crate::analytics::log_posterior_nonzero;
use crate::error::{invalid, Result};
use crate::model::{Uid, CONTRIBUTION_BUDGET};
use crate::SimRng;

/// PPV a cell must exceed.
pub const PPV_TARGET: f64 = 0.99;

/// `count` distinct uids from `0..pool`, ascending.
pub fn sample_visitors(rng: &mut SimRng, pool: u64, count: u64) -> Result<Vec<Uid>> {
    if count > pool || pool > Uid::MAX as u64 + 1 {
        return Err(invalid(format!("cannot draw {count} visitors from a pool of {pool}")));
    }
    let mut v: Vec<Uid> = sample(rng, pool as usize, count as usize)
        .into_iter()
        .map(|i| Uid::new(i as u32).expect("pool fits the uid space"))
        .collect();
    v.sort_unstable();
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub correct: u64,
    pub ppv: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone)]
pub struct BloomReplica {
    pool: u64,
    hashes: u32,
    bloom_bits: u64,
    hash_key: u64,
    visitors: Vec<Uid>,
    is_visitor: Vec<bool>,
    /// `hashes` positions per pool member, row-major.
    positions: Vec<u32>,
    /// Visitor hits per bucket, collisions counted.
    hits: Vec<u32>,
    unit_noise: Vec<f64>,
}

impl BloomReplica {
    /// Builds the replica for `seed`. The visitor sample is the first use of
    /// the seeded generator, matching the full pipeline.
    pub fn new(pool: u64, visitors: u64, hashes: u32, bloom_bits: u64, seed: u64) -> Result<Self> {
        if hashes == 0 || bloom_bits < hashes as u64 || bloom_bits > u32::MAX as u64 {
            return Err(invalid("bloom parameters out of range"));
        }
        let mut rng = SimRng::seed_from_u64(seed);
        let visitors = sample_visitors(&mut rng, pool, visitors)?;
        let hash_key = seed;
        let mut positions = Vec::with_capacity(pool as usize * hashes as usize);
        for u in 0..pool as u32 {
            let uid = Uid::new(u)?;
            positions.extend((0..hashes).map(|i| bloom_position(hash_key, i, uid, bloom_bits) as u32));
        }
        let mut is_visitor = vec![false; pool as usize];
        let mut hits = vec![0u32; bloom_bits as usize];
        for v in &visitors {
            is_visitor[v.value() as usize] = true;
            for &b in row(&positions, hashes, v.value()) {
                hits[b as usize] += 1;
            }
        }
        let unit_noise = (0..bloom_bits).map(|_| sample_laplace_unchecked(1.0, &mut rng)).collect();
        Ok(BloomReplica { pool, hashes, bloom_bits, hash_key, visitors, is_visitor, positions, hits, unit_noise })
    }

    pub fn visitors(&self) -> &[Uid] {
        &self.visitors
    }

    pub fn hash_key(&self) -> u64 {
        self.hash_key
    }

    /// Attack parameters matching this replica for `n` colluders.
    pub fn attack_config(&self, n: u32, epsilon: f64, accusations: u64) -> AttackConfig {
        AttackConfig {
            epsilon,
            colluders: n,
            pool: self.pool,
            hashes: self.hashes,
            bloom_bits: self.bloom_bits,
            accusations,
            l1: CONTRIBUTION_BUDGET,
            hash_key: self.hash_key,
        }
    }

    /// Noiseless bucket sums after `n` colluders each report every visitor.
    pub fn bucket_sums(&self, n: u32) -> Vec<u64> {
        let v = self.attack_config(n, 1.0, 0).per_hash_value() as u64;
        self.hits.iter().map(|&h| n as u64 * v * h as u64).collect()
    }

    /// Released bucket values for a cell.
    pub fn released(&self, n: u32, epsilon: f64, noiseless: bool) -> Vec<f64> {
        let cfg = self.attack_config(n, epsilon, 0);
        let scale = if noiseless { 0.0 } else { cfg.noise_scale() };
        let c = cfg.expected_count();
        self.hits.iter().zip(&self.unit_noise).map(|(&h, &z)| c * h as f64 + scale * z).collect()
    }

    /// Scores every pool member and accuses the top `accusations`.
    pub fn evaluate(&self, n: u32, epsilon: f64, accusations: u64, noiseless: bool) -> Result<Evaluation> {
        let cfg = self.attack_config(n, epsilon, accusations);
        cfg.validate()?;
        if accusations == 0 {
            return Err(invalid("need at least one accusation"));
        }
        let (c, s) = (cfg.expected_count(), cfg.noise_scale());
        let lp: Vec<f64> =
            self.released(n, epsilon, noiseless).into_iter().map(|x| log_posterior_nonzero(x, c, s)).collect::<Result<_>>()?;
        let mut scores: Vec<(Uid, f64)> = (0..self.pool as u32)
            .map(|u| (Uid::new(u).expect("in pool"), row(&self.positions, self.hashes, u).iter().map(|&b| lp[b as usize]).sum()))
            .collect();
        let k = accusations as usize;
        scores.select_nth_unstable_by(k - 1, crate::adversary::rank);
        let correct = scores[..k].iter().filter(|(u, _)| self.is_visitor[u.value() as usize]).count() as u64;
        let negatives = self.pool - self.visitors.len() as u64;
        Ok(Evaluation {
            correct,
            ppv: correct as f64 / k as f64,
            fpr: if negatives == 0 { 0.0 } else { (accusations - correct) as f64 / negatives as f64 },
        })
    }

    /// Non-visitors whose every position is hit by some visitor.
    pub fn filter_false_positives(&self) -> u64 {
        (0..self.pool as u32)
            .filter(|&u| !self.is_visitor[u as usize])
            .filter(|&u| row(&self.positions, self.hashes, u).iter().all(|&b| self.hits[b as usize] > 0))
            .count() as u64
    }
}

fn row(positions: &[u32], hashes: u32, uid: u32) -> &[u32] {
    let a = hashes as usize;
    &positions[uid as usize * a..(uid as usize + 1) * a]
}

/// Fewest colluders whose PPV exceeds the target on this replica, found by
/// doubling from 1 and then bisecting. `None` when even `cap` falls short.
pub fn min_colluders_for_ppv(
    replica: &BloomReplica,
    epsilon: f64,
    accusations: u64,
    noiseless: bool,
    cap: u32,
) -> Result<Option<(u32, f64)>> {
    let mut seen: HashMap<u32, f64> = HashMap::new();
    let mut ppv_at = |n: u32| -> Result<f64> {
        if let Some(&p) = seen.get(&n) {
            return Ok(p);
        }
        let p = replica.evaluate(n, epsilon, accusations, noiseless)?.ppv;
        seen.insert(n, p);
        Ok(p)
    };
    if cap == 0 {
        return Ok(None);
    }
    let (mut fail, mut pass) = (0u32, 1u32);
    loop {
        if ppv_at(pass)? > PPV_TARGET {
            break;
        }
        if pass >= cap {
            return Ok(None);
        }
        fail = pass;
        pass = (pass * 2).min(cap);
    }
    while pass - fail > 1 {
        let mid = fail + (pass - fail) / 2;
        if ppv_at(mid)? > PPV_TARGET {
            pass = mid;
        } else {
            fail = mid;
        }
    }
    Ok(Some((pass, ppv_at(pass)?)))
}

fn replicas(cfg: &ExperimentConfig, pool: u64) -> Result<Vec<(u64, BloomReplica)>> {
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|i| {
            let seed = replica_seed(cfg.seed, i);
            Ok((seed, BloomReplica::new(pool, cfg.visitors, cfg.hashes, cfg.bloom_bits, seed)?))
        })
        .collect()
}

/// Colluders needed for PPV above 0.99, per (epsilon, accusations) cell,
/// as mean and sample standard deviation over replicas.
pub fn run_collusion_table(cfg: &ExperimentConfig) -> Result<RunResult> {
    let pool = cfg.pools[0];
    let worlds = replicas(cfg, pool)?;
    let mut cells = Vec::new();
    for &e in &cfg.epsilons {
        for &k in &cfg.accusations {
            cells.push((e, k));
        }
    }
    let per_cell: Vec<Vec<Option<(u32, f64)>>> = cells
        .iter()
        .map(|&(e, k)| {
            worlds
                .par_iter()
                .map(|(_, w)| min_colluders_for_ppv(w, e, k, cfg.noiseless, cfg.max_colluders))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&["epsilon", "accusations", "mean_n", "stddev_n"]);
    let mut raw = Table::new(&["epsilon", "accusations", "replica", "seed", "n", "ppv_at_n"]);
    let mut lines = vec![format!("pool={pool} visitors={} replicas={}", cfg.visitors, cfg.replicas)];
    for (&(e, k), found) in cells.iter().zip(&per_cell) {
        for (i, (f, (seed, _))) in found.iter().zip(&worlds).enumerate() {
            let (n, p) = match f {
                Some((n, p)) => (n.to_string(), num(*p)),
                None => ("unreached".to_string(), String::new()),
            };
            raw.push(vec![num(e), k.to_string(), i.to_string(), seed.to_string(), n, p]);
        }
        let ns: Option<Vec<f64>> = found.iter().map(|f| f.map(|(n, _)| n as f64)).collect();
        match ns {
            Some(ns) => {
                let (m, sd) = (mean(&ns), sample_stddev(&ns));
                table.push(vec![num(e), k.to_string(), num(m), num(sd)]);
                lines.push(format!("epsilon={e} accusations={k}: n = {m:.1} +/- {sd:.1}"));
            }
            None => {
                table.push(vec![num(e), k.to_string(), "unreached".into(), String::new()]);
                lines.push(format!("epsilon={e} accusations={k}: unreached within {} buyers", cfg.max_colluders));
            }
        }
    }
    Ok(RunResult { table, raw, summary: lines.join("\n"), elapsed: Default::default() })
}

/// False positive rate for a fixed colluder count across pools and
/// accusation counts.
pub fn run_fpr_curve(cfg: &ExperimentConfig) -> Result<RunResult> {
    let n = cfg.colluders[0];
    let mut results: HashMap<(u64, usize, usize), Vec<Evaluation>> = HashMap::new();
    for &pool in &cfg.pools {
        let worlds = replicas(cfg, pool)?;
        for (ei, &e) in cfg.epsilons.iter().enumerate() {
            for (ki, &k) in cfg.accusations.iter().enumerate() {
                let evals = worlds
                    .par_iter()
                    .map(|(_, w)| w.evaluate(n, e, k, cfg.noiseless))
                    .collect::<Result<Vec<_>>>()?;
                results.insert((pool, ei, ki), evals);
            }
        }
    }
    let mut table = Table::new(&["epsilon", "pool_size", "accusations", "fpr_mean", "fpr_var"]);
    let mut raw = Table::new(&["epsilon", "pool_size", "accusations", "replica", "fpr", "ppv"]);
    let mut worst: f64 = 0.0;
    for (ei, &e) in cfg.epsilons.iter().enumerate() {
        for &pool in &cfg.pools {
            for (ki, &k) in cfg.accusations.iter().enumerate() {
                let evals = &results[&(pool, ei, ki)];
                let fprs: Vec<f64> = evals.iter().map(|v| v.fpr).collect();
                for (i, v) in evals.iter().enumerate() {
                    raw.push(vec![num(e), pool.to_string(), k.to_string(), i.to_string(), num(v.fpr), num(v.ppv)]);
                }
                let m = mean(&fprs);
                worst = worst.max(m);
                table.push(vec![num(e), pool.to_string(), k.to_string(), num(m), num(sample_variance(&fprs))]);
            }
        }
    }
    let summary = format!("buyers={n} visitors={}: largest mean false positive rate {worst:e}", cfg.visitors);
    Ok(RunResult { table, raw, summary, elapsed: Default::default() })
}
