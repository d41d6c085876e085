//! Bloom-filter reporting: each visit spreads the budget over `a` hashed
//! buckets, and candidates are ranked by how well the noisy counts at their
//! positions fit the "visited" hypothesis.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::hash::Hasher;

use siphasher::sip::SipHasher13;

use super::AttackConfig;
use crate::aggregation::Histogram;
use crate::analytics::log_posterior_nonzero;
use crate::error::{invalid, Result};
use crate::model::{BucketKey, Contribution, Uid};

/// Position of `uid` under the `index`-th hash, in `[0, m)`.
pub fn bloom_position(key: u64, index: u32, uid: Uid, m: u64) -> u64 {
    let mut h = SipHasher13::new_with_keys(key, index as u64);
    h.write_u32(uid.value());
    h.finish() % m
}

/// All `a` positions of `uid`, collisions included.
pub fn bloom_positions(cfg: &AttackConfig, uid: Uid) -> impl Iterator<Item = u64> + '_ {
    (0..cfg.hashes).map(move |i| bloom_position(cfg.hash_key, i, uid, cfg.bloom_bits))
}

pub fn scenario3_report_strategy(uid: Uid, cfg: &AttackConfig) -> Vec<Contribution> {
    let value = cfg.per_hash_value();
    bloom_positions(cfg, uid)
        .map(|b| Contribution::new(BucketKey(b as u128), value).expect("share of the budget"))
        .collect()
}

/// Dense view of a histogram that must list buckets `0..m` in order.
pub fn dense_histogram(histogram: &Histogram, m: u64) -> Result<Vec<f64>> {
    if histogram.entries.len() as u64 != m
        || histogram.entries.iter().enumerate().any(|(i, (b, _))| b.0 != i as u128)
    {
        return Err(invalid(format!("histogram must cover buckets 0..{m} in order")));
    }
    Ok(histogram.values().collect())
}

/// Per-bucket log posterior that the bucket holds `c`.
pub fn bucket_log_posteriors(values: &[f64], cfg: &AttackConfig) -> Result<Vec<f64>> {
    let (c, scale) = (cfg.expected_count(), cfg.noise_scale());
    values.iter().map(|&x| log_posterior_nonzero(x, c, scale)).collect()
}

/// Log-likelihood of the visited hypothesis for each candidate.
pub fn scenario3_score(values: &[f64], candidates: &[Uid], cfg: &AttackConfig) -> Result<Vec<(Uid, f64)>> {
    if values.len() as u64 != cfg.bloom_bits {
        return Err(invalid("histogram width differs from the filter width"));
    }
    let lp = bucket_log_posteriors(values, cfg)?;
    Ok(candidates
        .iter()
        .map(|&uid| (uid, bloom_positions(cfg, uid).map(|b| lp[b as usize]).sum()))
        .collect())
}

/// Higher score first, then lower uid.
pub(crate) fn rank(a: &(Uid, f64), b: &(Uid, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `count` best-scoring candidates, ties going to the lower uid.
pub fn scenario3_accuse(scores: &[(Uid, f64)], count: usize) -> Result<HashSet<Uid>> {
    if count > scores.len() {
        return Err(invalid(format!("cannot accuse {count} of {} candidates", scores.len())));
    }
    if count == 0 {
        return Ok(HashSet::new());
    }
    let mut ranked = scores.to_vec();
    ranked.select_nth_unstable_by(count - 1, rank);
    Ok(ranked[..count].iter().map(|s| s.0).collect())
}
