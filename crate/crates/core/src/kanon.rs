//! k-anonymity server: Join events insert a browser identifier into the set
//! tracked for an object digest, Query answers whether at least `k` distinct
//! identifiers were seen inside the sliding window.

use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::model::{Digest, ObjectType, SimTime, ONE_HOUR, THIRTY_DAYS};

#[derive(Debug, Clone, PartialEq)]
pub struct KAnonConfig {
    pub k: usize,
    pub window: SimTime,
    /// How long a browser may reuse a cached Query answer.
    pub refresh: SimTime,
    /// Browser identifier width in bits.
    pub identifier_bits: u32,
    /// One-use join tokens granted to each account per token period. `None`
    /// disables rate limiting.
    pub tokens_per_period: Option<u32>,
    pub token_period: SimTime,
}

impl Default for KAnonConfig {
    fn default() -> Self {
        KAnonConfig {
            k: 50,
            window: THIRTY_DAYS,
            refresh: ONE_HOUR,
            identifier_bits: 16,
            tokens_per_period: Some(10),
            token_period: THIRTY_DAYS,
        }
    }
}

impl KAnonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(8..=16).contains(&self.identifier_bits) {
            return Err(invalid("browser identifier width must be between 8 and 16 bits"));
        }
        if self.token_period == 0 {
            return Err(invalid("token period must be positive"));
        }
        Ok(())
    }

    /// Configuration used by simulated honest browsers, which are not limited
    /// by join tokens.
    pub fn unlimited() -> Self {
        KAnonConfig { tokens_per_period: None, ..Default::default() }
    }
}

/// j-bit identifier shared by many browsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BrowserIdentifier(pub u16);

/// Account that redeems join tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId(pub u64);

#[derive(Debug, Default, Clone)]
struct TokenUsage {
    period: u64,
    spent: u32,
}

#[derive(Debug, Clone)]
pub struct KAnonService {
    config: KAnonConfig,
    table: HashMap<(ObjectType, Digest), HashMap<BrowserIdentifier, SimTime>>,
    tokens: HashMap<AccountId, TokenUsage>,
}

impl KAnonService {
    pub fn new(config: KAnonConfig) -> Result<Self> {
        config.validate()?;
        Ok(KAnonService { config, table: HashMap::new(), tokens: HashMap::new() })
    }

    pub fn config(&self) -> &KAnonConfig {
        &self.config
    }

    /// Records `browser` under `object`, refreshing its last-seen time on a re-join.
    pub fn join(
        &mut self,
        account: AccountId,
        browser: BrowserIdentifier,
        kind: ObjectType,
        object: Digest,
        now: SimTime,
    ) -> Result<()> {
        if (browser.0 as u32) >> self.config.identifier_bits != 0 {
            return Err(invalid(format!(
                "browser identifier {} exceeds {} bits",
                browser.0, self.config.identifier_bits
            )));
        }
        if let Some(limit) = self.config.tokens_per_period {
            let period = now / self.config.token_period;
            let usage = self.tokens.entry(account).or_default();
            if usage.period != period {
                *usage = TokenUsage { period, spent: 0 };
            }
            if usage.spent >= limit {
                return Err(Error::RateLimited(account.0));
            }
            usage.spent += 1;
        }
        let seen = self.table.entry((kind, object)).or_default();
        let last = seen.entry(browser).or_insert(now);
        *last = (*last).max(now);
        Ok(())
    }

    /// Number of identifiers seen for `object` within the window ending at `now`.
    pub fn count(&self, kind: ObjectType, object: Digest, now: SimTime) -> usize {
        let cutoff = now.saturating_sub(self.config.window);
        self.table
            .get(&(kind, object))
            .map(|seen| seen.values().filter(|&&t| t >= cutoff && t <= now).count())
            .unwrap_or(0)
    }

    pub fn query(&self, kind: ObjectType, object: Digest, now: SimTime) -> bool {
        self.count(kind, object, now) >= self.config.k
    }
}

/// Accounts an adversary needs to push `users` distinct objects past the
/// threshold `k` when each account holds `tokens` joins per period: every
/// block of `k` accounts covers `tokens` users.
pub fn accounts_needed(users: u64, tokens: u64, k: u64) -> Result<u64> {
    if users == 0 || tokens == 0 || k == 0 {
        return Err(invalid("users, tokens and k must all be at least 1"));
    }
    Ok(users.div_ceil(tokens) * k)
}

/// Information-theoretic minimum for the same problem when accounts may mix
/// users freely: enough tokens for `users * k` joins and at least `k` accounts.
pub fn accounts_lower_bound(users: u64, tokens: u64, k: u64) -> Result<u64> {
    if users == 0 || tokens == 0 || k == 0 {
        return Err(invalid("users, tokens and k must all be at least 1"));
    }
    Ok((users * k).div_ceil(tokens).max(k))
}
