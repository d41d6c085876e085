//! The tracker: a primary site that tags visitors with uid-named interest
//! groups for a network of colluding buyers, and a secondary site whose
//! auctions let each colluder win once and report back.

mod bloom;
mod collection;
mod covert;

use std::collections::{BTreeMap, HashSet};

use rand::RngCore;

pub use bloom::{
    bloom_position, bloom_positions, bucket_log_posteriors, dense_histogram, scenario3_accuse, scenario3_report_strategy,
    scenario3_score,
};
pub(crate) use bloom::rank;
pub use collection::{collection_round, CollectedBatch};
pub use covert::{covert_ad_select, covert_decode, covert_encode_bid, covert_encode_score};

use crate::aggregation::{Histogram, DEFAULT_EPSILON, MAX_EPSILON};
use crate::analytics::{fpr, ppv};
use crate::browser::{
    AuctionConfig, AuctionOutcome, BidInput, BidOutput, BrowserProfile, Buyer, BuyerHooks, ContributionSink,
    ReportInput, ScoreInput, Seller,
};
use crate::error::{invalid, Result};
use crate::kanon::KAnonService;
use crate::model::{
    Ad, BucketKey, Contribution, InterestGroup, Origin, SealedReport, SimTime, Uid, CONTRIBUTION_BUDGET,
    MAX_CONTRIBUTIONS_PER_REPORT, THIRTY_DAYS,
};

pub const MAX_COLLUDERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColluderNetwork {
    pub primary_site: Origin,
    pub colluding_buyers: Vec<Origin>,
    pub secondary_site: Origin,
}

impl ColluderNetwork {
    pub fn new(primary_site: Origin, colluding_buyers: Vec<Origin>, secondary_site: Origin) -> Result<Self> {
        let n = colluding_buyers.len();
        if n == 0 || n > MAX_COLLUDERS {
            return Err(invalid(format!("colluder count must be in 1..={MAX_COLLUDERS}, got {n}")));
        }
        let mut seen: HashSet<&Origin> = HashSet::from([&primary_site, &secondary_site]);
        if seen.len() != 2 || !colluding_buyers.iter().all(|o| seen.insert(o)) {
            return Err(invalid("network origins must be distinct"));
        }
        Ok(ColluderNetwork { primary_site, colluding_buyers, secondary_site })
    }

    /// `n` colluders named `buyer-000.example` and up.
    pub fn with_colluders(n: usize) -> Result<Self> {
        let buyers = (0..n).map(|i| Origin::new(format!("buyer-{i:03}.example"))).collect::<Result<_>>()?;
        Self::new(Origin::new("primary.example")?, buyers, Origin::new("secondary.example")?)
    }

    pub fn len(&self) -> usize {
        self.colluding_buyers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colluding_buyers.is_empty()
    }

    pub fn is_colluder(&self, origin: &Origin) -> bool {
        self.colluding_buyers.contains(origin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub colluders: u32,
    pub pool: u64,
    /// Hash functions per visit.
    pub hashes: u32,
    /// Bloom filter width.
    pub bloom_bits: u64,
    pub accusations: u64,
    pub l1: u32,
    /// Key shared by the colluders' hash family.
    pub hash_key: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: DEFAULT_EPSILON,
            colluders: 20,
            pool: 100_000,
            hashes: 20,
            bloom_bits: 201_000,
            accusations: 10_000,
            l1: CONTRIBUTION_BUDGET,
            hash_key: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= MAX_EPSILON) {
            return Err(invalid(format!("epsilon must lie in (0, {MAX_EPSILON}]")));
        }
        if self.hashes == 0 || self.hashes as usize > MAX_CONTRIBUTIONS_PER_REPORT {
            return Err(invalid("hash count must be in 1..=20"));
        }
        if self.bloom_bits < self.hashes as u64 {
            return Err(invalid("bloom width must be at least the hash count"));
        }
        if self.accusations > self.pool {
            return Err(invalid("cannot accuse more users than the pool holds"));
        }
        if self.colluders == 0 {
            return Err(invalid("need at least one colluder"));
        }
        if self.l1 == 0 || self.l1 > CONTRIBUTION_BUDGET {
            return Err(invalid("l1 must be in 1..=65536"));
        }
        Ok(())
    }

    /// Integer value each hashed bucket receives per report.
    pub fn per_hash_value(&self) -> u32 {
        self.l1 / self.hashes
    }

    /// Noiseless count at a visitor's bucket when no other visitor collides.
    pub fn expected_count(&self) -> f64 {
        self.colluders as f64 * self.per_hash_value() as f64
    }

    pub fn noise_scale(&self) -> f64 {
        self.l1 as f64 / self.epsilon
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrackerState {
    /// Reports received per collection round.
    pub received: BTreeMap<u64, usize>,
    pub suspended_until: SimTime,
    rounds: u64,
}

impl TrackerState {
    pub fn is_suspended(&self, now: SimTime) -> bool {
        now < self.suspended_until
    }

    pub fn suspend_until(&mut self, t: SimTime) {
        self.suspended_until = self.suspended_until.max(t);
    }

    fn next_round(&mut self) -> u64 {
        self.rounds += 1;
        self.rounds
    }
}

#[derive(Debug, Clone)]
pub struct LinkageResult {
    pub scores: Vec<(Uid, f64)>,
    pub accused: HashSet<Uid>,
    /// Simulator-side ground truth.
    pub truth: HashSet<Uid>,
    pub ppv: f64,
    pub fpr: f64,
}

impl LinkageResult {
    pub fn evaluate(scores: Vec<(Uid, f64)>, truth: HashSet<Uid>, accusations: usize, pool: u64) -> Result<Self> {
        let accused = scenario3_accuse(&scores, accusations)?;
        let ppv = ppv(&accused, &truth)?;
        let fpr = fpr(&accused, &truth, pool as usize)?;
        Ok(LinkageResult { scores, accused, truth, ppv, fpr })
    }

    pub fn correct(&self) -> usize {
        self.accused.intersection(&self.truth).count()
    }
}

/// Ads placed in each tracking group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inventory {
    /// One generic ad shared by every tagged user.
    Shared,
    /// One ad per segment member, uid embedded in the creative URL. Every
    /// member's group carries the whole segment's ads.
    Segmented(Vec<Uid>),
}

impl Inventory {
    fn ads(&self, owner: &Origin, uid: Uid) -> Result<Vec<Ad>> {
        match self {
            Inventory::Shared => Ok(vec![Ad::new(format!("https://{owner}/ad/generic"), "")]),
            Inventory::Segmented(members) => {
                if !members.contains(&uid) {
                    return Err(crate::Error::InventoryMismatch(uid.value()));
                }
                Ok(members
                    .iter()
                    .map(|m| Ad::new(format!("https://{owner}/ad/{}", m.label()), ""))
                    .collect())
            }
        }
    }
}

pub fn tracking_group_name(uid: Uid) -> String {
    format!("track-{}", uid.label())
}

/// Joins one uid-named group per colluder.
pub fn tag_visit(
    network: &ColluderNetwork,
    profile: &mut BrowserProfile,
    uid: Uid,
    inventory: &Inventory,
    now: SimTime,
) -> Result<()> {
    for owner in &network.colluding_buyers {
        let group = InterestGroup {
            name: tracking_group_name(uid),
            owner: owner.clone(),
            bidding_url: format!("https://{owner}/bid.js"),
            update_url: format!("https://{owner}/update"),
            ads: inventory.ads(owner, uid)?,
            joined_at: now,
            lifetime: THIRTY_DAYS,
        };
        profile.join_ad_interest_group(group, now)?;
    }
    Ok(())
}

/// How the uid leaves the auction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    CreativeUrl,
    BidScore,
}

/// What each colluder reports once it knows the uid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStrategy {
    /// A single unit in the uid's bucket; arrival is the signal.
    Presence,
    /// The whole budget in the uid's bucket.
    UidBucket,
    /// The budget spread over the uid's Bloom positions.
    Bloom,
}

pub fn scenario2_report_strategy(uid: Uid) -> Contribution {
    Contribution::new(BucketKey::from(uid), CONTRIBUTION_BUDGET).expect("full budget")
}

/// Candidate whose bucket holds the largest value, ties to the lower uid.
pub fn scenario2_predict(histogram: &Histogram) -> Result<Uid> {
    let mut best: Option<(Uid, f64)> = None;
    for &(bucket, value) in &histogram.entries {
        let uid = u32::try_from(bucket.0).map_err(|_| invalid("bucket is not a uid")).and_then(Uid::new)?;
        if best.is_none_or(|(b, v)| value > v || (value == v && uid < b)) {
            best = Some((uid, value));
        }
    }
    best.map(|b| b.0).ok_or_else(|| invalid("empty histogram"))
}

/// Bidding and reporting logic shared by every colluding buyer.
#[derive(Debug, Clone, Copy)]
pub struct ColluderBuyer {
    pub channel: Channel,
    pub strategy: ReportStrategy,
    pub config: AttackConfig,
}

impl ColluderBuyer {
    fn recover_uid(&self, input: &ReportInput<'_>) -> Option<Uid> {
        match self.channel {
            Channel::CreativeUrl => Uid::find_in(input.creative_url),
            Channel::BidScore => covert_decode(input.bid, input.score).ok(),
        }
    }
}

impl Buyer for ColluderBuyer {
    fn generate_bid(&self, input: &BidInput<'_>, _rng: &mut dyn RngCore) -> Option<BidOutput> {
        let group = input.interest_group;
        let uid = Uid::find_in(&group.name)?;
        match self.channel {
            Channel::CreativeUrl => {
                let ad = covert_ad_select(group, uid).ok()?;
                Some(BidOutput { bid: 1.0, ad, ad_description: uid.label() })
            }
            Channel::BidScore => {
                let (bid, ad_description) = covert_encode_bid(uid);
                Some(BidOutput { bid, ad: group.ads.first()?.clone(), ad_description })
            }
        }
    }

    fn report_win(&self, input: &ReportInput<'_>, sink: &mut ContributionSink) {
        let Some(uid) = self.recover_uid(input) else {
            return;
        };
        let contributions = match self.strategy {
            ReportStrategy::Presence => vec![Contribution::new(BucketKey::from(uid), 1).expect("unit")],
            ReportStrategy::UidBucket => vec![scenario2_report_strategy(uid)],
            ReportStrategy::Bloom => scenario3_report_strategy(uid, &self.config),
        };
        for c in contributions {
            sink.contribute_to_histogram(c.bucket(), c.value());
        }
    }
}

/// Seller for one linkage auction: only `winner` gets a positive score.
#[derive(Debug, Clone)]
pub struct LinkageSeller {
    pub winner: Origin,
    pub channel: Channel,
}

impl Seller for LinkageSeller {
    fn score_ad(&self, input: &ScoreInput<'_>) -> f64 {
        if *input.interest_group_owner != self.winner {
            return -1.0;
        }
        match self.channel {
            Channel::CreativeUrl => 1.0,
            Channel::BidScore => Uid::find_in(input.ad_description).map_or(-1.0, covert_encode_score),
        }
    }
}

/// One finished linkage auction and the reports it produced.
#[derive(Debug)]
pub struct LinkageWin {
    pub outcome: AuctionOutcome,
    pub reports: Vec<SealedReport>,
}

/// Runs one auction per colluder on the secondary site, each rigged for that
/// colluder, and files the winners' reports. `others` may add honest buyers.
/// Nothing runs while the tracker is suspended.
#[allow(clippy::too_many_arguments)]
pub fn run_linkage_auctions(
    network: &ColluderNetwork,
    state: &TrackerState,
    profile: &mut BrowserProfile,
    kanon: &KAnonService,
    colluder: &ColluderBuyer,
    others: &BuyerHooks<'_>,
    rng: &mut dyn RngCore,
    now: SimTime,
) -> Vec<LinkageWin> {
    if state.is_suspended(now) {
        return Vec::new();
    }
    let mut hooks: BuyerHooks<'_> = others.clone();
    for owner in &network.colluding_buyers {
        hooks.insert(owner.clone(), colluder as &dyn Buyer);
    }
    let buyers: Vec<Origin> = hooks.keys().cloned().collect();
    let mut wins = Vec::with_capacity(network.len());
    for (i, target) in network.colluding_buyers.iter().enumerate() {
        let config = AuctionConfig {
            seller: network.secondary_site.clone(),
            buyers: buyers.clone(),
            auction_signals: format!("round-{i}"),
        };
        let seller = LinkageSeller { winner: target.clone(), channel: colluder.channel };
        let outcome = profile.run_ad_auction(kanon, &config, &hooks, &seller, rng, now);
        let reports = match outcome.winner.as_ref().and_then(|w| hooks.get(w)) {
            Some(buyer) => profile.report_win(&outcome, *buyer, &seller, rng, now),
            None => Vec::new(),
        };
        wins.push(LinkageWin { outcome, reports });
    }
    wins
}

/// Reports' opened contents, for checks that bypass the aggregation service.
#[cfg(test)]
pub(crate) fn opened(report: &SealedReport) -> Vec<Contribution> {
    report.contributions(&crate::model::OpeningKey::new()).to_vec()
}
