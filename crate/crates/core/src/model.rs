//! Domain types shared by every protocol party: identifiers, interest groups,
//! aggregatable contributions, sealed reports, simulation time and the salted
//! object digest used by the k-anonymity service.

use std::fmt;
use std::hash::Hasher;

use siphasher::sip128::{Hasher128, SipHasher13};

use crate::error::{invalid, Error, Result};

/// Simulation time in whole seconds.
pub type SimTime = u64;

pub const TEN_MINUTES: SimTime = 600;
pub const ONE_HOUR: SimTime = 3_600;
pub const ONE_DAY: SimTime = 86_400;
pub const THIRTY_DAYS: SimTime = 2_592_000;

/// Longest lifetime an interest group may request.
pub const MAX_GROUP_LIFETIME: SimTime = THIRTY_DAYS;

/// Per-site budget for one rolling ten-minute window, also the L1 sensitivity
/// of a single report.
pub const CONTRIBUTION_BUDGET: u32 = 1 << 16;

/// Per-site budget for one rolling day.
pub const DAILY_CONTRIBUTION_BUDGET: u64 = 1 << 20;

/// Upper bound on report delivery delay.
pub const MAX_REPORT_DELAY: SimTime = ONE_HOUR;

/// Maximum number of contributions packed into a single report.
pub const MAX_CONTRIBUTIONS_PER_REPORT: usize = 20;

/// 30-bit user identifier the adversary embeds in group names, ads and buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Uid(u32);

impl Uid {
    pub const BITS: u32 = 30;
    pub const MAX: u32 = (1 << Self::BITS) - 1;

    pub fn new(value: u32) -> Result<Self> {
        if value > Self::MAX {
            return Err(invalid(format!("uid {value} does not fit in 30 bits")));
        }
        Ok(Uid(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// Upper 15 bits.
    pub fn high(self) -> u16 {
        (self.0 >> 15) as u16
    }

    /// Lower 15 bits.
    pub fn low(self) -> u16 {
        (self.0 & 0x7fff) as u16
    }

    pub fn from_halves(high: u16, low: u16) -> Result<Self> {
        if high > 0x7fff || low > 0x7fff {
            return Err(invalid("uid halves must be 15-bit values"));
        }
        Ok(Uid(((high as u32) << 15) | low as u32))
    }

    /// Fixed-width textual form embedded into names and URLs.
    pub fn label(self) -> String {
        format!("uid-{:08x}", self.0)
    }

    pub fn from_label(label: &str) -> Result<Self> {
        let hex = label
            .strip_prefix("uid-")
            .filter(|h| h.len() == 8)
            .ok_or_else(|| invalid(format!("not a uid label: {label:?}")))?;
        let value = u32::from_str_radix(hex, 16)
            .map_err(|_| invalid(format!("not a uid label: {label:?}")))?;
        Uid::new(value)
    }

    /// Finds the first uid label embedded anywhere in `text`.
    pub fn find_in(text: &str) -> Option<Self> {
        text.match_indices("uid-")
            .filter_map(|(at, _)| text.get(at..at + 12))
            .find_map(|candidate| Uid::from_label(candidate).ok())
    }
}

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A buyer or seller site.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Origin(String);

impl Origin {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(invalid("origin name must be non-empty"));
        }
        Ok(Origin(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ad {
    pub creative_url: String,
    pub metadata: String,
    pub size: (u32, u32),
}

impl Ad {
    pub fn new(creative_url: impl Into<String>, metadata: impl Into<String>) -> Self {
        Ad {
            creative_url: creative_url.into(),
            metadata: metadata.into(),
            size: (300, 250),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterestGroup {
    pub name: String,
    pub owner: Origin,
    pub bidding_url: String,
    pub update_url: String,
    pub ads: Vec<Ad>,
    pub joined_at: SimTime,
    pub lifetime: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyName,
    NoAds,
    EmptyCreativeUrl { index: usize },
    LifetimeTooLong { lifetime: SimTime },
}

/// Checks the browser-enforced limits on an interest group.
pub fn validate_interest_group(group: &InterestGroup) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if group.name.is_empty() {
        violations.push(Violation::EmptyName);
    }
    if group.ads.is_empty() {
        violations.push(Violation::NoAds);
    }
    for (index, ad) in group.ads.iter().enumerate() {
        if ad.creative_url.is_empty() {
            violations.push(Violation::EmptyCreativeUrl { index });
        }
    }
    if group.lifetime > MAX_GROUP_LIFETIME {
        violations.push(Violation::LifetimeTooLong { lifetime: group.lifetime });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// 128-bit aggregatable bucket index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BucketKey(pub u128);

impl From<Uid> for BucketKey {
    fn from(uid: Uid) -> Self {
        BucketKey(uid.value() as u128)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Contribution {
    bucket: BucketKey,
    value: u32,
}

impl Contribution {
    pub fn new(bucket: BucketKey, value: u32) -> Result<Self> {
        if value > CONTRIBUTION_BUDGET {
            return Err(invalid(format!(
                "contribution value {value} exceeds the per-report total {CONTRIBUTION_BUDGET}"
            )));
        }
        Ok(Contribution { bucket, value })
    }

    pub fn bucket(&self) -> BucketKey {
        self.bucket
    }

    pub fn value(&self) -> u32 {
        self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReportId(pub u64);

impl fmt::Display for ReportId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Capability to read the payload of a [`SealedReport`]. Only the aggregation
/// service can mint one.
#[derive(Debug)]
pub struct OpeningKey(());

impl OpeningKey {
    pub(crate) fn new() -> Self {
        OpeningKey(())
    }
}

/// Report whose contributions are visible only through an [`OpeningKey`].
#[derive(Debug, Clone, PartialEq)]
pub struct SealedReport {
    id: ReportId,
    destination: Origin,
    contributions: Vec<Contribution>,
    created_at: SimTime,
    deliver_at: SimTime,
}

impl SealedReport {
    pub fn seal(
        id: ReportId,
        destination: Origin,
        contributions: Vec<Contribution>,
        created_at: SimTime,
        deliver_at: SimTime,
    ) -> Result<Self> {
        let total: u64 = contributions.iter().map(|c| c.value as u64).sum();
        if total > CONTRIBUTION_BUDGET as u64 {
            return Err(invalid(format!("report total {total} exceeds {CONTRIBUTION_BUDGET}")));
        }
        if contributions.len() > MAX_CONTRIBUTIONS_PER_REPORT {
            return Err(invalid(format!(
                "report holds {} contributions, limit is {MAX_CONTRIBUTIONS_PER_REPORT}",
                contributions.len()
            )));
        }
        match deliver_at.checked_sub(created_at) {
            Some(delay) if delay <= MAX_REPORT_DELAY => {}
            _ => return Err(invalid("report delay must lie in [0, 3600] seconds")),
        }
        Ok(SealedReport { id, destination, contributions, created_at, deliver_at })
    }

    pub fn id(&self) -> ReportId {
        self.id
    }

    pub fn destination(&self) -> &Origin {
        &self.destination
    }

    pub fn deliver_at(&self) -> SimTime {
        self.deliver_at
    }

    pub fn contributions(&self, _key: &OpeningKey) -> &[Contribution] {
        &self.contributions
    }

    /// Creation time. Recipients only learn this through the simulator's event
    /// log, never from the report itself.
    pub fn created_at(&self) -> SimTime {
        self.created_at
    }
}

/// Monotone simulation clock.
#[derive(Debug, Clone, Default)]
pub struct SimClock {
    now: SimTime,
}

impl SimClock {
    pub fn new(start: SimTime) -> Self {
        SimClock { now: start }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn advance(&mut self, seconds: SimTime) -> SimTime {
        self.now += seconds;
        self.now
    }

    pub fn advance_to(&mut self, t: SimTime) -> Result<SimTime> {
        if t < self.now {
            return Err(Error::ClockRegression { now: self.now, requested: t });
        }
        self.now = t;
        Ok(t)
    }
}

/// Object kinds tracked by the k-anonymity service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectType {
    /// owner, bidding url, creative url, size.
    AuctionEligibility,
    /// The eligibility tuple plus the interest group name.
    Reporting,
}

impl ObjectType {
    fn tag(self) -> &'static [u8] {
        match self {
            ObjectType::AuctionEligibility => b"kanon/eligibility",
            ObjectType::Reporting => b"kanon/reporting",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub u128);

/// Keyed 128-bit hash over length-prefixed parts. The salt is fixed per
/// simulation so digests are reproducible for a given seed.
#[derive(Debug, Clone)]
pub struct ObjectHasher {
    k0: u64,
    k1: u64,
}

impl ObjectHasher {
    pub fn new(salt: u64) -> Self {
        ObjectHasher {
            k0: salt,
            k1: salt.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15,
        }
    }

    pub fn hash_object<S: AsRef<str>>(&self, kind: ObjectType, parts: &[S]) -> Result<Digest> {
        if parts.is_empty() {
            return Err(invalid("hash_object needs at least one part"));
        }
        let mut hasher = SipHasher13::new_with_keys(self.k0, self.k1);
        let tag = kind.tag();
        hasher.write(&(tag.len() as u64).to_le_bytes());
        hasher.write(tag);
        for part in parts {
            let bytes = part.as_ref().as_bytes();
            hasher.write(&(bytes.len() as u64).to_le_bytes());
            hasher.write(bytes);
        }
        Ok(Digest(hasher.finish128().as_u128()))
    }

    pub fn eligibility_digest(&self, owner: &Origin, bidding_url: &str, ad: &Ad) -> Digest {
        let size = format!("{}x{}", ad.size.0, ad.size.1);
        self.hash_object(
            ObjectType::AuctionEligibility,
            &[owner.as_str(), bidding_url, &ad.creative_url, &size],
        )
        .expect("parts are non-empty")
    }

    pub fn reporting_digest(
        &self,
        owner: &Origin,
        bidding_url: &str,
        ad: &Ad,
        group_name: &str,
    ) -> Digest {
        let size = format!("{}x{}", ad.size.0, ad.size.1);
        self.hash_object(
            ObjectType::Reporting,
            &[owner.as_str(), bidding_url, &ad.creative_url, &size, group_name],
        )
        .expect("parts are non-empty")
    }
}
