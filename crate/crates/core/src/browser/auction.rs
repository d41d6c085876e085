use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use rand::{Rng, RngCore};

use super::rounding::stochastic_round;
use super::{BrowserProfile, CachedAnswer};
use crate::kanon::KAnonService;
use crate::model::{
    Ad, BucketKey, Contribution, Digest, InterestGroup, ObjectType, Origin, SealedReport, SimTime,
    CONTRIBUTION_BUDGET, MAX_CONTRIBUTIONS_PER_REPORT, MAX_REPORT_DELAY,
};

#[derive(Debug, Clone)]
pub struct AuctionConfig {
    pub seller: Origin,
    /// Buyers allowed to bid in this auction.
    pub buyers: Vec<Origin>,
    pub auction_signals: String,
}

/// Everything a buyer's bidding logic may see: its own group (restricted to
/// ads that passed the k-anonymity check) and the auction signals.
#[derive(Debug)]
pub struct BidInput<'a> {
    pub interest_group: &'a InterestGroup,
    pub auction_signals: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BidOutput {
    pub bid: f64,
    pub ad: Ad,
    pub ad_description: String,
}

#[derive(Debug)]
pub struct ScoreInput<'a> {
    /// Bid after precision limiting.
    pub bid: f64,
    pub ad: &'a Ad,
    pub ad_description: &'a str,
    pub interest_group_owner: &'a Origin,
    pub auction_signals: &'a str,
}

/// What reporting logic sees after a win. The group name is present only
/// when the reporting tuple passed the k-anonymity check.
#[derive(Debug)]
pub struct ReportInput<'a> {
    pub seller: &'a Origin,
    pub interest_group_owner: &'a Origin,
    pub interest_group_name: Option<&'a str>,
    pub creative_url: &'a str,
    pub bid: f64,
    pub score: f64,
    pub auction_signals: &'a str,
}

/// Collects private aggregation contributions requested by a reporting hook.
#[derive(Debug, Default)]
pub struct ContributionSink {
    requested: Vec<(BucketKey, u32)>,
}

impl ContributionSink {
    pub fn contribute_to_histogram(&mut self, bucket: BucketKey, value: u32) {
        self.requested.push((bucket, value));
    }
}

pub trait Buyer {
    fn generate_bid(&self, input: &BidInput<'_>, rng: &mut dyn RngCore) -> Option<BidOutput>;

    fn report_win(&self, _input: &ReportInput<'_>, _sink: &mut ContributionSink) {}
}

pub trait Seller {
    /// Scores a bid; anything not strictly positive rejects it.
    fn score_ad(&self, input: &ScoreInput<'_>) -> f64;

    fn report_result(&self, _input: &ReportInput<'_>, _sink: &mut ContributionSink) {}
}

pub type BuyerHooks<'a> = BTreeMap<Origin, &'a dyn Buyer>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    TooManyContributions,
    BudgetExceeded,
    ValueTooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedContribution {
    pub site: Origin,
    pub bucket: BucketKey,
    pub value: u32,
    pub at: SimTime,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq)]
struct Winning {
    name: String,
    ad: Ad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    pub seller: Origin,
    pub winner: Option<Origin>,
    pub winning_ig_name_visible: bool,
    pub winning_creative_url: String,
    pub rounded_bid: f64,
    pub rounded_score: f64,
    /// Groups whose bidding logic ran.
    pub bidders: usize,
    auction_signals: String,
    winning: Option<Winning>,
}

impl AuctionOutcome {
    fn empty(config: &AuctionConfig, bidders: usize) -> Self {
        AuctionOutcome {
            seller: config.seller.clone(),
            winner: None,
            winning_ig_name_visible: false,
            winning_creative_url: String::new(),
            rounded_bid: 0.0,
            rounded_score: 0.0,
            bidders,
            auction_signals: config.auction_signals.clone(),
            winning: None,
        }
    }

    /// Name of the winning group. Simulator-side only; hooks never get this
    /// unless the reporting check passes.
    pub fn winning_group_name(&self) -> Option<&str> {
        self.winning.as_ref().map(|w| w.name.as_str())
    }
}

fn cached_query(
    cache: &mut HashMap<(ObjectType, Digest), CachedAnswer>,
    refresh: SimTime,
    service: &KAnonService,
    kind: ObjectType,
    digest: Digest,
    now: SimTime,
) -> bool {
    match cache.get(&(kind, digest)) {
        Some(c) if now >= c.fetched_at && now < c.fetched_at + refresh => c.passed,
        _ => {
            let passed = service.query(kind, digest, now);
            cache.insert((kind, digest), CachedAnswer { passed, fetched_at: now });
            passed
        }
    }
}

struct Candidate {
    owner: Origin,
    name: String,
    bidding_url: String,
    ad: Ad,
    bid: f64,
    score: f64,
}

impl BrowserProfile {
    /// Runs one on-device auction. Every live group of a permitted buyer that
    /// has at least one ad passing the eligibility check gets a bidding call;
    /// the highest strictly positive score wins, ties going to the smallest
    /// (owner, name).
    pub fn run_ad_auction(
        &mut self,
        kanon: &KAnonService,
        config: &AuctionConfig,
        buyers: &BuyerHooks<'_>,
        seller: &dyn Seller,
        rng: &mut dyn RngCore,
        now: SimTime,
    ) -> AuctionOutcome {
        let mut best: Option<Candidate> = None;
        let mut bidders = 0;
        let refresh = self.kanon_refresh;
        for stored in self.groups.values() {
            let group = &stored.group;
            if now >= stored.expires_at || !config.buyers.contains(&group.owner) {
                continue;
            }
            let Some(hook) = buyers.get(&group.owner) else {
                continue;
            };
            let eligible: Vec<bool> = group
                .ads
                .iter()
                .map(|ad| {
                    let digest = self.hasher.eligibility_digest(&group.owner, &group.bidding_url, ad);
                    cached_query(&mut self.kanon_cache, refresh, kanon, ObjectType::AuctionEligibility, digest, now)
                })
                .collect();
            if !eligible.iter().any(|&e| e) {
                continue;
            }
            let visible: Cow<'_, InterestGroup> = if eligible.iter().all(|&e| e) {
                Cow::Borrowed(group)
            } else {
                let mut restricted = group.clone();
                restricted.ads = group.ads.iter().zip(&eligible).filter(|(_, &e)| e).map(|(a, _)| a.clone()).collect();
                Cow::Owned(restricted)
            };
            bidders += 1;
            let input = BidInput { interest_group: &visible, auction_signals: &config.auction_signals };
            let Some(out) = hook.generate_bid(&input, rng) else {
                continue;
            };
            if !(out.bid > 0.0 && out.bid.is_finite()) {
                continue;
            }
            if !visible.ads.iter().any(|a| a.creative_url == out.ad.creative_url) {
                continue;
            }
            let bid = stochastic_round(out.bid, rng).expect("finite bid");
            let score = seller.score_ad(&ScoreInput {
                bid,
                ad: &out.ad,
                ad_description: &out.ad_description,
                interest_group_owner: &group.owner,
                auction_signals: &config.auction_signals,
            });
            if !(score > 0.0 && score.is_finite()) {
                continue;
            }
            // Groups are visited in (owner, name) order, so a strict comparison
            // keeps the smallest key among equal scores.
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Candidate {
                    owner: group.owner.clone(),
                    name: group.name.clone(),
                    bidding_url: group.bidding_url.clone(),
                    ad: out.ad,
                    bid,
                    score,
                });
            }
        }

        let Some(win) = best else {
            return AuctionOutcome::empty(config, bidders);
        };
        let reporting = self.hasher.reporting_digest(&win.owner, &win.bidding_url, &win.ad, &win.name);
        let name_visible = cached_query(&mut self.kanon_cache, refresh, kanon, ObjectType::Reporting, reporting, now);
        let rounded_score = stochastic_round(win.score, rng).expect("finite score");
        AuctionOutcome {
            seller: config.seller.clone(),
            winner: Some(win.owner),
            winning_ig_name_visible: name_visible,
            winning_creative_url: win.ad.creative_url.clone(),
            rounded_bid: win.bid,
            rounded_score,
            bidders,
            auction_signals: config.auction_signals.clone(),
            winning: Some(Winning { name: win.name, ad: win.ad }),
        }
    }

    /// Runs the winner's and seller's reporting logic and seals whatever
    /// contributions survive the per-report cap and the budget ledger, one
    /// report per destination, each scheduled up to an hour out.
    pub fn report_win(
        &mut self,
        outcome: &AuctionOutcome,
        buyer: &dyn Buyer,
        seller: &dyn Seller,
        rng: &mut dyn RngCore,
        now: SimTime,
    ) -> Vec<SealedReport> {
        let (Some(owner), Some(winning)) = (outcome.winner.as_ref(), outcome.winning.as_ref()) else {
            return Vec::new();
        };
        let input = ReportInput {
            seller: &outcome.seller,
            interest_group_owner: owner,
            interest_group_name: outcome.winning_ig_name_visible.then_some(winning.name.as_str()),
            creative_url: &outcome.winning_creative_url,
            bid: outcome.rounded_bid,
            score: outcome.rounded_score,
            auction_signals: &outcome.auction_signals,
        };
        let mut buyer_sink = ContributionSink::default();
        buyer.report_win(&input, &mut buyer_sink);
        let mut seller_sink = ContributionSink::default();
        seller.report_result(&input, &mut seller_sink);

        let mut reports = Vec::new();
        for (site, sink) in [(owner.clone(), buyer_sink), (outcome.seller.clone(), seller_sink)] {
            if let Some(report) = self.seal_contributions(&site, sink, rng, now) {
                reports.push(report);
            }
        }
        reports
    }

    fn seal_contributions(
        &mut self,
        site: &Origin,
        sink: ContributionSink,
        rng: &mut dyn RngCore,
        now: SimTime,
    ) -> Option<SealedReport> {
        let mut accepted = Vec::new();
        for (i, (bucket, value)) in sink.requested.into_iter().enumerate() {
            let reason = if i >= MAX_CONTRIBUTIONS_PER_REPORT {
                Some(DropReason::TooManyContributions)
            } else if value > CONTRIBUTION_BUDGET {
                Some(DropReason::ValueTooLarge)
            } else if !self.budget.try_consume(site, value, now) {
                Some(DropReason::BudgetExceeded)
            } else {
                None
            };
            match reason {
                Some(reason) => self.drop_log.push(DroppedContribution { site: site.clone(), bucket, value, at: now, reason }),
                None => accepted.push(Contribution::new(bucket, value).expect("value within budget")),
            }
        }
        if accepted.is_empty() {
            return None;
        }
        let delay = rng.random_range(0..=MAX_REPORT_DELAY);
        let id = self.next_report_id();
        Some(
            SealedReport::seal(id, site.clone(), accepted, now, now + delay)
                .expect("ledger keeps a single report within budget"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::browser::ProfileId;
    use crate::kanon::{AccountId, BrowserIdentifier, KAnonConfig};
    use crate::model::ObjectHasher;
    use crate::SimRng;
    use rand::SeedableRng;
    use std::cell::RefCell;

    fn origin(s: &str) -> Origin {
        Origin::new(s).unwrap()
    }

    fn group(owner: &str, name: &str, ads: &[&str]) -> InterestGroup {
        InterestGroup {
            name: name.into(),
            owner: origin(owner),
            bidding_url: format!("https://{owner}/bid.js"),
            update_url: format!("https://{owner}/update"),
            ads: ads.iter().map(|u| Ad::new(*u, "meta")).collect(),
            joined_at: 0,
            lifetime: 86_400,
        }
    }

    struct Fixed {
        bid: f64,
        seen: RefCell<Vec<String>>,
        reports: RefCell<Vec<Option<String>>>,
        contributions: Vec<(u128, u32)>,
    }

    impl Fixed {
        fn new(bid: f64) -> Self {
            Fixed { bid, seen: RefCell::default(), reports: RefCell::default(), contributions: vec![] }
        }
    }

    impl Buyer for Fixed {
        fn generate_bid(&self, input: &BidInput<'_>, _rng: &mut dyn RngCore) -> Option<BidOutput> {
            let g = input.interest_group;
            self.seen.borrow_mut().push(format!("{}/{}/{}", g.owner, g.name, g.ads.len()));
            Some(BidOutput { bid: self.bid, ad: g.ads[0].clone(), ad_description: String::new() })
        }
        fn report_win(&self, input: &ReportInput<'_>, sink: &mut ContributionSink) {
            self.reports.borrow_mut().push(input.interest_group_name.map(str::to_string));
            for &(b, v) in &self.contributions {
                sink.contribute_to_histogram(BucketKey(b), v);
            }
        }
    }

    struct BidIsScore;
    impl Seller for BidIsScore {
        fn score_ad(&self, input: &ScoreInput<'_>) -> f64 {
            input.bid
        }
    }

    struct World {
        profile: BrowserProfile,
        kanon: KAnonService,
        rng: SimRng,
    }

    fn world(k: usize) -> World {
        let profile = BrowserProfile::new(ProfileId(1), BrowserIdentifier(1), 16, ObjectHasher::new(9)).unwrap();
        let kanon = KAnonService::new(KAnonConfig { k, ..KAnonConfig::unlimited() }).unwrap();
        World { profile, kanon, rng: SimRng::seed_from_u64(1) }
    }

    impl World {
        fn join(&mut self, g: InterestGroup) {
            self.profile.join_ad_interest_group(g, 0).unwrap();
            self.profile.flush_kanon_joins(&mut self.kanon);
        }

        /// Makes an object k-anonymous by joining it from other browsers.
        fn boost(&mut self, kind: ObjectType, digest: Digest) {
            for b in 100..100 + self.kanon.config().k as u16 {
                self.kanon.join(AccountId(b as u64), BrowserIdentifier(b), kind, digest, 0).unwrap();
            }
        }

        fn boost_eligibility(&mut self, g: &InterestGroup) {
            for ad in &g.ads {
                let d = self.profile.hasher().eligibility_digest(&g.owner, &g.bidding_url, ad);
                self.boost(ObjectType::AuctionEligibility, d);
            }
        }

        fn run(&mut self, buyers: &BuyerHooks<'_>, seller: &dyn Seller) -> AuctionOutcome {
            let config = AuctionConfig {
                seller: origin("seller.example"),
                buyers: buyers.keys().cloned().collect(),
                auction_signals: "signals".into(),
            };
            self.profile.run_ad_auction(&self.kanon, &config, buyers, seller, &mut self.rng, 10)
        }
    }

    #[test]
    fn single_eligible_buyer_wins() {
        let mut w = world(1);
        w.join(group("a.example", "g", &["https://a.example/ad"]));
        let a = Fixed::new(2.0);
        let buyers: BuyerHooks = [(origin("a.example"), &a as &dyn Buyer)].into();
        let out = w.run(&buyers, &BidIsScore);
        assert_eq!(out.winner, Some(origin("a.example")));
        assert_eq!(out.rounded_bid, 2.0);
        assert_eq!(out.winning_creative_url, "https://a.example/ad");
    }

    #[test]
    fn ineligible_group_never_bids() {
        let mut w = world(50);
        w.join(group("a.example", "g", &["https://a.example/ad"]));
        let a = Fixed::new(2.0);
        let buyers: BuyerHooks = [(origin("a.example"), &a as &dyn Buyer)].into();
        let out = w.run(&buyers, &BidIsScore);
        assert!(out.winner.is_none());
        assert!(a.seen.borrow().is_empty());
    }

    #[test]
    fn only_eligible_ads_are_shown() {
        let mut w = world(50);
        let g = group("a.example", "g", &["https://a.example/ok", "https://a.example/rare"]);
        w.join(g.clone());
        let ok = g.ads[0].clone();
        let d = w.profile.hasher().eligibility_digest(&g.owner, &g.bidding_url, &ok);
        w.boost(ObjectType::AuctionEligibility, d);
        let a = Fixed::new(2.0);
        let buyers: BuyerHooks = [(origin("a.example"), &a as &dyn Buyer)].into();
        let out = w.run(&buyers, &BidIsScore);
        assert_eq!(out.winning_creative_url, "https://a.example/ok");
        assert_eq!(a.seen.borrow().as_slice(), ["a.example/g/1"]);
    }

    #[test]
    fn equal_scores_go_to_smallest_owner_every_time() {
        for _ in 0..100 {
            let mut w = world(1);
            w.join(group("b.example", "g", &["https://b.example/ad"]));
            w.join(group("a.example", "g", &["https://a.example/ad"]));
            let (a, b) = (Fixed::new(3.0), Fixed::new(3.0));
            let buyers: BuyerHooks =
                [(origin("b.example"), &b as &dyn Buyer), (origin("a.example"), &a as &dyn Buyer)].into();
            assert_eq!(w.run(&buyers, &BidIsScore).winner, Some(origin("a.example")));
        }
    }

    #[test]
    fn buyers_see_only_their_own_group() {
        let mut w = world(1);
        w.join(group("a.example", "ga", &["https://a.example/ad"]));
        w.join(group("b.example", "gb", &["https://b.example/ad"]));
        w.join(group("c.example", "gc", &["https://c.example/ad"]));
        let (a, b) = (Fixed::new(1.0), Fixed::new(2.0));
        // c.example is not a permitted buyer.
        let buyers: BuyerHooks = [(origin("a.example"), &a as &dyn Buyer), (origin("b.example"), &b as &dyn Buyer)].into();
        w.run(&buyers, &BidIsScore);
        assert_eq!(a.seen.borrow().as_slice(), ["a.example/ga/1"]);
        assert_eq!(b.seen.borrow().as_slice(), ["b.example/gb/1"]);
    }

    #[test]
    fn name_hidden_unless_reporting_tuple_is_k_anonymous() {
        let mut w = world(50);
        let g = group("a.example", "uid-00000001", &["https://a.example/ad"]);
        w.join(g.clone());
        w.boost_eligibility(&g);
        let a = Fixed::new(1.0);
        let buyers: BuyerHooks = [(origin("a.example"), &a as &dyn Buyer)].into();
        let out = w.run(&buyers, &BidIsScore);
        assert!(!out.winning_ig_name_visible);
        w.profile.report_win(&out, &a, &BidIsScore, &mut w.rng, 10);
        assert_eq!(a.reports.borrow().as_slice(), [None]);

        let d = w.profile.hasher().reporting_digest(&g.owner, &g.bidding_url, &g.ads[0], &g.name);
        w.boost(ObjectType::Reporting, d);
        // Cached answers are reused until the refresh interval passes.
        let config = AuctionConfig { seller: origin("s.example"), buyers: vec![origin("a.example")], auction_signals: String::new() };
        let out = w.profile.run_ad_auction(&w.kanon, &config, &buyers, &BidIsScore, &mut w.rng, 20);
        assert!(!out.winning_ig_name_visible);
        let out = w.profile.run_ad_auction(&w.kanon, &config, &buyers, &BidIsScore, &mut w.rng, 10 + 3600);
        assert!(out.winning_ig_name_visible);
        w.profile.report_win(&out, &a, &BidIsScore, &mut w.rng, 3610);
        assert_eq!(a.reports.borrow()[1].as_deref(), Some("uid-00000001"));
    }

    #[test]
    fn contribution_cap_and_budget() {
        let mut w = world(1);
        w.join(group("a.example", "g", &["https://a.example/ad"]));
        let mut a = Fixed::new(1.0);
        a.contributions = (0..21).map(|i| (i, 1)).collect();
        let buyers: BuyerHooks = [(origin("a.example"), &a as &dyn Buyer)].into();
        let out = w.run(&buyers, &BidIsScore);
        let reports = w.profile.report_win(&out, &a, &BidIsScore, &mut w.rng, 10);
        assert_eq!(reports.len(), 1);
        assert_eq!(w.profile.drop_log().len(), 1);
        assert_eq!(w.profile.drop_log()[0].reason, DropReason::TooManyContributions);
        let delay = reports[0].deliver_at() - 10;
        assert!(delay <= 3600);

        let mut full = Fixed::new(1.0);
        full.contributions = vec![(1, 1 << 15), (2, (1 << 15) - 20)];
        let buyers: BuyerHooks = [(origin("a.example"), &full as &dyn Buyer)].into();
        let out = w.run(&buyers, &BidIsScore);
        let reports = w.profile.report_win(&out, &full, &BidIsScore, &mut w.rng, 10);
        assert_eq!(reports.len(), 1);
        // 20 units were already spent above; the window now holds exactly 2^16.
        assert_eq!(w.profile.drop_log().len(), 1);
        let reports = w.profile.report_win(&out, &full, &BidIsScore, &mut w.rng, 11);
        assert!(reports.is_empty());
        assert_eq!(w.profile.drop_log().len(), 3);
        assert!(w.profile.drop_log()[1..].iter().all(|d| d.reason == DropReason::BudgetExceeded));
    }

    #[test]
    fn negative_scores_reject() {
        struct Reject;
        impl Seller for Reject {
            fn score_ad(&self, _: &ScoreInput<'_>) -> f64 {
                -1.0
            }
        }
        let mut w = world(1);
        w.join(group("a.example", "g", &["https://a.example/ad"]));
        let a = Fixed::new(1.0);
        let buyers: BuyerHooks = [(origin("a.example"), &a as &dyn Buyer)].into();
        let out = w.run(&buyers, &Reject);
        assert!(out.winner.is_none());
        assert_eq!(out.bidders, 1);
        assert!(w.profile.report_win(&out, &a, &Reject, &mut w.rng, 10).is_empty());
    }
}
