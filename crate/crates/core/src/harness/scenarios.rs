//! End-to-end runs through browsers, the k-anonymity service, auctions, the
//! delivery queue and the aggregation service.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::{mean, num, replica_seed, sample_visitors, ExperimentConfig, ExperimentKind, RunResult, Table};
use crate::adversary::{
    collection_round, dense_histogram, scenario2_predict, scenario3_score, tag_visit, AttackConfig, Channel,
    ColluderBuyer, ColluderNetwork, Inventory, LinkageResult, ReportStrategy, TrackerState,
};
use crate::aggregation::{AggregationQuery, AggregationService, NoiseMode};
use crate::browser::{BrowserProfile, ProfileId, ReportQueue};
use crate::error::{invalid, Error, Result};
use crate::kanon::{BrowserIdentifier, KAnonConfig, KAnonService};
use crate::model::{Ad, BucketKey, InterestGroup, ObjectHasher, Origin, SimClock, SimTime, Uid, ONE_DAY, ONE_HOUR, THIRTY_DAYS};
use crate::SimRng;

const HASHER_SALT: u64 = 0;
const IDENTIFIER_BITS: u32 = 16;

fn kanon_service() -> Result<KAnonService> {
    KAnonService::new(KAnonConfig::unlimited())
}

fn flush(profile: &mut BrowserProfile, kanon: &mut KAnonService) -> Result<()> {
    match profile.flush_kanon_joins(kanon).into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn noise_mode(noiseless: bool) -> NoiseMode {
    if noiseless {
        NoiseMode::Disabled
    } else {
        NoiseMode::Laplace
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Tagged { at: SimTime, profile: ProfileId },
    Visited { at: SimTime, profile: ProfileId, site: Origin },
    ReportReceived { at: SimTime, destination: Origin },
}

#[derive(Debug, Clone)]
pub struct Scenario1Run {
    pub linked: bool,
    pub visit_at: Option<SimTime>,
    pub detection_latency: Option<SimTime>,
    pub events: Vec<Event>,
}

/// One target tagged on the primary site, plus `k` adversary-run browsers
/// that join the same ad under other names so it passes the eligibility
/// check. The target may then visit the secondary site.
pub fn simulate_scenario1(colluders: usize, target_visits: bool, seed: u64) -> Result<Scenario1Run> {
    let mut rng = SimRng::seed_from_u64(seed);
    let network = ColluderNetwork::with_colluders(colluders)?;
    let mut kanon = kanon_service()?;
    let k = kanon.config().k;
    let hasher = ObjectHasher::new(HASHER_SALT);
    let mut events = Vec::new();

    let target_uid = Uid::new(rng.random_range(0..=Uid::MAX))?;
    let mut target = BrowserProfile::new(ProfileId(0), BrowserIdentifier(0), IDENTIFIER_BITS, hasher.clone())?;
    tag_visit(&network, &mut target, target_uid, &Inventory::Shared, 0)?;
    events.push(Event::Tagged { at: 0, profile: target.id() });
    flush(&mut target, &mut kanon)?;
    for i in 1..=k as u64 {
        let mut sybil = BrowserProfile::new(ProfileId(i), BrowserIdentifier(i as u16), IDENTIFIER_BITS, hasher.clone())?;
        for owner in &network.colluding_buyers {
            sybil.join_ad_interest_group(
                InterestGroup {
                    name: format!("cohort-{i}"),
                    owner: owner.clone(),
                    bidding_url: format!("https://{owner}/bid.js"),
                    update_url: format!("https://{owner}/update"),
                    ads: vec![Ad::new(format!("https://{owner}/ad/generic"), "")],
                    joined_at: 0,
                    lifetime: THIRTY_DAYS,
                },
                0,
            )?;
        }
        flush(&mut sybil, &mut kanon)?;
    }

    let buyer = ColluderBuyer {
        channel: Channel::BidScore,
        strategy: ReportStrategy::Presence,
        config: AttackConfig { colluders: colluders as u32, ..AttackConfig::default() },
    };
    let mut state = TrackerState::default();
    let mut queue = ReportQueue::new();
    let visit_at = target_visits.then(|| rng.random_range(ONE_HOUR..ONE_DAY));
    if let Some(at) = visit_at {
        events.push(Event::Visited { at, profile: target.id(), site: network.secondary_site.clone() });
        let wins = crate::adversary::run_linkage_auctions(
            &network, &state, &mut target, &kanon, &buyer, &BTreeMap::new(), &mut rng, at,
        );
        queue.extend(wins.into_iter().flat_map(|w| w.reports));
    }
    let mut clock = SimClock::new(0);
    let batch = collection_round(&network, &mut state, colluders, &mut clock, &mut queue)?;
    for r in &batch.reports {
        events.push(Event::ReportReceived { at: r.deliver_at(), destination: r.destination().clone() });
    }
    let linked = !batch.reports.is_empty();
    let detection_latency = match (batch.opened_at, visit_at) {
        (Some(seen), Some(at)) => Some(seen - at),
        _ => None,
    };
    Ok(Scenario1Run { linked, visit_at, detection_latency, events })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario2Run {
    pub target: Uid,
    pub predicted: Uid,
    pub reports: usize,
}

impl Scenario2Run {
    pub fn correct(&self) -> bool {
        self.target == self.predicted
    }
}

/// Every candidate in `0..pool` is tagged; the target's segment of
/// `segment` users shares one ad inventory and is materialised. Only the
/// target visits the secondary site; the adversary aggregates all candidate
/// buckets and predicts the largest.
pub fn simulate_scenario2(
    pool: u64,
    colluders: usize,
    epsilon: f64,
    segment: u64,
    noiseless: bool,
    seed: u64,
) -> Result<Scenario2Run> {
    let mut kanon = kanon_service()?;
    let k = kanon.config().k as u64;
    if segment < k || segment > pool {
        return Err(invalid(format!("segment must hold between {k} and {pool} users")));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let network = ColluderNetwork::with_colluders(colluders)?;
    let target = rng.random_range(0..pool);
    let start = (target / segment * segment).min(pool - segment);
    let members: Vec<Uid> = (start..start + segment).map(|u| Uid::new(u as u32)).collect::<Result<_>>()?;
    let inventory = Inventory::Segmented(members.clone());
    let hasher = ObjectHasher::new(HASHER_SALT);
    let mut target_profile = None;
    for (i, &uid) in members.iter().enumerate() {
        let mut p = BrowserProfile::new(ProfileId(i as u64), BrowserIdentifier(i as u16), IDENTIFIER_BITS, hasher.clone())?;
        tag_visit(&network, &mut p, uid, &inventory, 0)?;
        flush(&mut p, &mut kanon)?;
        if uid.value() as u64 == target {
            target_profile = Some(p);
        }
    }
    let mut profile = target_profile.expect("target lies in its segment");

    let buyer = ColluderBuyer {
        channel: Channel::CreativeUrl,
        strategy: ReportStrategy::UidBucket,
        config: AttackConfig { colluders: colluders as u32, epsilon, pool, ..AttackConfig::default() },
    };
    let mut state = TrackerState::default();
    let mut queue = ReportQueue::new();
    let visit_at = rng.random_range(ONE_HOUR..ONE_DAY);
    let wins = crate::adversary::run_linkage_auctions(
        &network, &state, &mut profile, &kanon, &buyer, &BTreeMap::new(), &mut rng, visit_at,
    );
    queue.extend(wins.into_iter().flat_map(|w| w.reports));
    let mut clock = SimClock::new(visit_at);
    let batch = collection_round(&network, &mut state, colluders, &mut clock, &mut queue)?;
    let reports = batch.reports.len();
    let query = AggregationQuery {
        reports: batch.reports,
        buckets: (0..pool).map(|u| BucketKey(u as u128)).collect(),
        epsilon,
    };
    let histogram = AggregationService::new(noise_mode(noiseless)).aggregate(&query, &mut rng)?;
    Ok(Scenario2Run { target: Uid::new(target as u32)?, predicted: scenario2_predict(&histogram)?, reports })
}

#[derive(Debug, Clone)]
pub struct Scenario3Run {
    pub result: LinkageResult,
    /// Released bucket values `0..m`.
    pub released: Vec<f64>,
    pub reports: usize,
    pub expected_reports: usize,
    pub short: bool,
    pub dropped_contributions: usize,
}

/// Visitors drawn from the pool each visit both sites at time zero; every
/// colluder wins once per visitor and reports through the Bloom strategy;
/// the adversary scores the whole pool.
pub fn simulate_scenario3(cfg: &AttackConfig, visitors: u64, noiseless: bool, seed: u64) -> Result<Scenario3Run> {
    let mut cfg = *cfg;
    cfg.hash_key = seed;
    cfg.validate()?;
    let mut rng = SimRng::seed_from_u64(seed);
    let truth_list = sample_visitors(&mut rng, cfg.pool, visitors)?;
    let network = ColluderNetwork::with_colluders(cfg.colluders as usize)?;
    let mut kanon = kanon_service()?;
    let hasher = ObjectHasher::new(HASHER_SALT);

    let mut profiles = Vec::with_capacity(truth_list.len());
    for (i, &uid) in truth_list.iter().enumerate() {
        let mut p = BrowserProfile::with_random_identifier(ProfileId(i as u64), IDENTIFIER_BITS, hasher.clone(), &mut rng)?;
        tag_visit(&network, &mut p, uid, &Inventory::Shared, 0)?;
        flush(&mut p, &mut kanon)?;
        profiles.push(p);
    }

    let buyer = ColluderBuyer { channel: Channel::BidScore, strategy: ReportStrategy::Bloom, config: cfg };
    let mut state = TrackerState::default();
    let mut queue = ReportQueue::new();
    let mut dropped = 0;
    for mut p in profiles {
        let wins = crate::adversary::run_linkage_auctions(
            &network, &state, &mut p, &kanon, &buyer, &BTreeMap::new(), &mut rng, 0,
        );
        queue.extend(wins.into_iter().flat_map(|w| w.reports));
        dropped += p.drop_log().len();
    }
    let expected = network.len() * truth_list.len();
    let mut clock = SimClock::new(0);
    let batch = collection_round(&network, &mut state, expected, &mut clock, &mut queue)?;
    let (reports, short) = (batch.reports.len(), batch.short);

    let query = AggregationQuery {
        reports: batch.reports,
        buckets: (0..cfg.bloom_bits).map(|b| BucketKey(b as u128)).collect(),
        epsilon: cfg.epsilon,
    };
    let histogram = AggregationService::new(noise_mode(noiseless)).aggregate(&query, &mut rng)?;
    drop(query);
    let released = dense_histogram(&histogram, cfg.bloom_bits)?;
    let candidates: Vec<Uid> = (0..cfg.pool).map(|u| Uid::new(u as u32)).collect::<Result<_>>()?;
    let scores = scenario3_score(&released, &candidates, &cfg)?;
    let truth: HashSet<Uid> = truth_list.into_iter().collect();
    let result = LinkageResult::evaluate(scores, truth, cfg.accusations as usize, cfg.pool)?;
    Ok(Scenario3Run { result, released, reports, expected_reports: expected, short, dropped_contributions: dropped })
}

pub fn run_scenario(cfg: &ExperimentConfig) -> Result<RunResult> {
    let seeds: Vec<(usize, u64)> = (0..cfg.replicas).map(|i| (i, replica_seed(cfg.seed, i as u64))).collect();
    let n = cfg.colluders[0];
    let epsilon = cfg.epsilons[0];
    let pool = cfg.pools[0];
    match cfg.kind {
        ExperimentKind::Scenario1 => {
            let runs: Vec<Scenario1Run> = seeds
                .par_iter()
                .map(|&(_, s)| simulate_scenario1(n as usize, cfg.target_visits, s))
                .collect::<Result<_>>()?;
            let mut table = Table::new(&["replica", "linked", "detection_latency_s"]);
            for (i, r) in runs.iter().enumerate() {
                let latency = r.detection_latency.map(|l| l.to_string()).unwrap_or_default();
                table.push(vec![i.to_string(), yes_no(r.linked).into(), latency]);
            }
            let linked = runs.iter().filter(|r| r.linked).count();
            let worst = runs.iter().filter_map(|r| r.detection_latency).max();
            let summary = format!(
                "linked {linked} of {} runs; slowest detection {}",
                runs.len(),
                worst.map_or("n/a".to_string(), |w| format!("{w} s"))
            );
            Ok(RunResult { raw: table.clone(), table, summary, elapsed: Default::default() })
        }
        ExperimentKind::Scenario2 => {
            let runs: Vec<Scenario2Run> = seeds
                .par_iter()
                .map(|&(_, s)| simulate_scenario2(pool, n as usize, epsilon, cfg.segment, cfg.noiseless, s))
                .collect::<Result<_>>()?;
            let mut table = Table::new(&["replica", "target_uid", "predicted_uid", "correct"]);
            for (i, r) in runs.iter().enumerate() {
                table.push(vec![i.to_string(), r.target.to_string(), r.predicted.to_string(), yes_no(r.correct()).into()]);
            }
            let rate = runs.iter().filter(|r| r.correct()).count() as f64 / runs.len() as f64;
            let summary = format!("epsilon={epsilon} u={pool} buyers={n}: correct in {:.4} of {} runs", rate, runs.len());
            Ok(RunResult { raw: table.clone(), table, summary, elapsed: Default::default() })
        }
        ExperimentKind::Scenario3 => {
            let k = cfg.accusations[0];
            let attack = AttackConfig {
                epsilon,
                colluders: n,
                pool,
                hashes: cfg.hashes,
                bloom_bits: cfg.bloom_bits,
                accusations: k,
                ..AttackConfig::default()
            };
            // Full worlds are memory-heavy; replicas run one after another.
            let mut table =
                Table::new(&["replica", "seed", "accusations", "correct", "ppv", "fpr", "reports", "short_batch"]);
            let mut correct = Vec::new();
            for &(i, s) in &seeds {
                let run = simulate_scenario3(&attack, cfg.visitors, cfg.noiseless, s)?;
                correct.push(run.result.correct() as f64);
                table.push(vec![
                    i.to_string(),
                    s.to_string(),
                    k.to_string(),
                    run.result.correct().to_string(),
                    num(run.result.ppv),
                    num(run.result.fpr),
                    run.reports.to_string(),
                    yes_no(run.short).into(),
                ]);
            }
            let summary = format!(
                "epsilon={epsilon} buyers={n} visitors={} pool={pool}: {:.1} of {k} accusations correct on average",
                cfg.visitors,
                mean(&correct)
            );
            Ok(RunResult { raw: table.clone(), table, summary, elapsed: Default::default() })
        }
        other => Err(Error::InvalidArgument(format!("{other} is not a scenario"))),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}
