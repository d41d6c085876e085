//! The trusted browser: interest group storage, on-device auctions run
//! against injected buyer and seller logic, k-anonymity gating, and the
//! budgeted, delayed private aggregation reports that follow a win.

mod auction;
mod budget;
mod queue;
mod rounding;

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

pub use auction::{
    AuctionConfig, AuctionOutcome, BidInput, BidOutput, Buyer, BuyerHooks, ContributionSink,
    DropReason, DroppedContribution, ReportInput, ScoreInput, Seller,
};
pub use budget::BudgetLedger;
pub use queue::ReportQueue;
pub use rounding::{is_representable, max_representable, stochastic_round, MAX_EXPONENT, MIN_EXPONENT};
pub(crate) use rounding::frexp;

use crate::error::{invalid, Error, Result};
use crate::kanon::{AccountId, BrowserIdentifier, KAnonService};
use crate::model::{
    validate_interest_group, Digest, InterestGroup, ObjectHasher, ObjectType, Origin, SimTime, ONE_DAY,
    ONE_HOUR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProfileId(pub u64);

#[derive(Debug, Clone)]
struct StoredGroup {
    group: InterestGroup,
    expires_at: SimTime,
    last_updated: SimTime,
}

#[derive(Debug, Clone, Copy)]
struct CachedAnswer {
    passed: bool,
    fetched_at: SimTime,
}

/// A k-anonymity Join waiting to be sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingJoin {
    pub kind: ObjectType,
    pub digest: Digest,
    pub at: SimTime,
}

/// Owner-supplied replacement fields fetched during the daily update.
pub trait UpdateSource {
    fn fetch_update(&self, current: &InterestGroup) -> Option<InterestGroup>;
}

#[derive(Debug, Clone)]
pub struct BrowserProfile {
    id: ProfileId,
    account: AccountId,
    identifier: BrowserIdentifier,
    hasher: ObjectHasher,
    groups: BTreeMap<(Origin, String), StoredGroup>,
    budget: BudgetLedger,
    kanon_cache: HashMap<(ObjectType, Digest), CachedAnswer>,
    kanon_refresh: SimTime,
    pending_joins: Vec<PendingJoin>,
    next_report_seq: u64,
    drop_log: Vec<DroppedContribution>,
}

impl BrowserProfile {
    pub fn new(id: ProfileId, identifier: BrowserIdentifier, identifier_bits: u32, hasher: ObjectHasher) -> Result<Self> {
        if !(8..=16).contains(&identifier_bits) || (identifier.0 as u32) >> identifier_bits != 0 {
            return Err(invalid(format!(
                "browser identifier {} does not fit in {identifier_bits} bits",
                identifier.0
            )));
        }
        Ok(BrowserProfile {
            id,
            account: AccountId(id.0),
            identifier,
            hasher,
            groups: BTreeMap::new(),
            budget: BudgetLedger::new(),
            kanon_cache: HashMap::new(),
            kanon_refresh: ONE_HOUR,
            pending_joins: Vec::new(),
            next_report_seq: 0,
            drop_log: Vec::new(),
        })
    }

    /// Profile with an identifier drawn uniformly from `[0, 2^bits)`.
    pub fn with_random_identifier<R: Rng + ?Sized>(
        id: ProfileId,
        identifier_bits: u32,
        hasher: ObjectHasher,
        rng: &mut R,
    ) -> Result<Self> {
        if !(8..=16).contains(&identifier_bits) {
            return Err(invalid("identifier width must be between 8 and 16 bits"));
        }
        let identifier = BrowserIdentifier(rng.random_range(0..(1u32 << identifier_bits)) as u16);
        Self::new(id, identifier, identifier_bits, hasher)
    }

    pub fn id(&self) -> ProfileId {
        self.id
    }

    pub fn identifier(&self) -> BrowserIdentifier {
        self.identifier
    }

    pub fn account(&self) -> AccountId {
        self.account
    }

    pub fn set_kanon_refresh(&mut self, refresh: SimTime) {
        self.kanon_refresh = refresh;
    }

    pub fn hasher(&self) -> &ObjectHasher {
        &self.hasher
    }

    pub fn join_ad_interest_group(&mut self, mut group: InterestGroup, now: SimTime) -> Result<()> {
        validate_interest_group(&group).map_err(Error::InvalidInterestGroup)?;
        group.joined_at = now;
        self.enqueue_joins(&group, now);
        let expires_at = now + group.lifetime;
        let key = (group.owner.clone(), group.name.clone());
        self.groups.insert(key, StoredGroup { group, expires_at, last_updated: now });
        Ok(())
    }

    fn enqueue_joins(&mut self, group: &InterestGroup, now: SimTime) {
        for ad in &group.ads {
            self.pending_joins.push(PendingJoin {
                kind: ObjectType::AuctionEligibility,
                digest: self.hasher.eligibility_digest(&group.owner, &group.bidding_url, ad),
                at: now,
            });
            self.pending_joins.push(PendingJoin {
                kind: ObjectType::Reporting,
                digest: self.hasher.reporting_digest(&group.owner, &group.bidding_url, ad, &group.name),
                at: now,
            });
        }
    }

    pub fn pending_joins(&self) -> &[PendingJoin] {
        &self.pending_joins
    }

    /// Sends queued Join events. Joins refused by the service (rate limits)
    /// are returned and not retried.
    pub fn flush_kanon_joins(&mut self, service: &mut KAnonService) -> Vec<Error> {
        let mut refused = Vec::new();
        for join in std::mem::take(&mut self.pending_joins) {
            if let Err(e) = service.join(self.account, self.identifier, join.kind, join.digest, join.at) {
                refused.push(e);
            }
        }
        refused
    }

    /// Stored, unexpired group.
    pub fn group(&self, owner: &Origin, name: &str, now: SimTime) -> Option<&InterestGroup> {
        self.groups
            .get(&(owner.clone(), name.to_string()))
            .filter(|g| now < g.expires_at)
            .map(|g| &g.group)
    }

    pub fn groups(&self, now: SimTime) -> impl Iterator<Item = &InterestGroup> {
        self.groups.values().filter(move |g| now < g.expires_at).map(|g| &g.group)
    }

    pub fn expires_at(&self, owner: &Origin, name: &str) -> Option<SimTime> {
        self.groups.get(&(owner.clone(), name.to_string())).map(|g| g.expires_at)
    }

    /// Applies owner updates to every live group last refreshed at least a
    /// day ago. Name and owner are never changed. Returns the number updated.
    pub fn daily_update(&mut self, source: &dyn UpdateSource, now: SimTime) -> usize {
        let mut updated = Vec::new();
        for stored in self.groups.values_mut() {
            if now >= stored.expires_at || now < stored.last_updated + ONE_DAY {
                continue;
            }
            stored.last_updated = now;
            let Some(record) = source.fetch_update(&stored.group) else {
                continue;
            };
            let mut next = stored.group.clone();
            next.bidding_url = record.bidding_url;
            next.update_url = record.update_url;
            next.ads = record.ads;
            if validate_interest_group(&next).is_err() {
                continue;
            }
            stored.group = next;
            updated.push(stored.group.clone());
        }
        for group in &updated {
            self.enqueue_joins(group, now);
        }
        updated.len()
    }

    pub fn budget(&self) -> &BudgetLedger {
        &self.budget
    }

    /// Simulator-side log of contributions dropped without telling any hook.
    pub fn drop_log(&self) -> &[DroppedContribution] {
        &self.drop_log
    }

    fn next_report_id(&mut self) -> crate::model::ReportId {
        self.next_report_seq += 1;
        crate::model::ReportId((self.id.0 << 32) | self.next_report_seq)
    }
}
