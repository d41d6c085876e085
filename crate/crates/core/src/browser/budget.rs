use std::collections::HashMap;

use crate::model::{Origin, SimTime, CONTRIBUTION_BUDGET, DAILY_CONTRIBUTION_BUDGET, ONE_DAY, TEN_MINUTES};

/// Accepted contribution history per reporting site. A contribution is
/// accepted only if, together with everything accepted in the trailing ten
/// minutes and the trailing day, it stays within both caps.
#[derive(Debug, Clone, Default)]
pub struct BudgetLedger {
    events: HashMap<Origin, Vec<(SimTime, u64)>>,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `value` against `site` at `now` if both windows allow it.
    /// Calls must arrive in non-decreasing time order per site.
    pub fn try_consume(&mut self, site: &Origin, value: u32, now: SimTime) -> bool {
        let events = self.events.entry(site.clone()).or_default();
        events.retain(|&(t, _)| t + ONE_DAY > now);
        let (mut window, mut day) = (0u64, 0u64);
        for &(t, v) in events.iter() {
            day += v;
            if t + TEN_MINUTES > now {
                window += v;
            }
        }
        let value = value as u64;
        if window + value > CONTRIBUTION_BUDGET as u64 || day + value > DAILY_CONTRIBUTION_BUDGET {
            return false;
        }
        events.push((now, value));
        true
    }

    /// Budget still available to `site` in the current ten-minute window.
    pub fn remaining(&self, site: &Origin, now: SimTime) -> u64 {
        let Some(events) = self.events.get(site) else {
            return CONTRIBUTION_BUDGET as u64;
        };
        let window: u64 = events.iter().filter(|(t, _)| t + TEN_MINUTES > now).map(|e| e.1).sum();
        let day: u64 = events.iter().filter(|(t, _)| t + ONE_DAY > now).map(|e| e.1).sum();
        (CONTRIBUTION_BUDGET as u64 - window.min(CONTRIBUTION_BUDGET as u64))
            .min(DAILY_CONTRIBUTION_BUDGET - day.min(DAILY_CONTRIBUTION_BUDGET))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn site(name: &str) -> Origin {
        Origin::new(name).unwrap()
    }

    #[test]
    fn full_window_then_drop() {
        let mut ledger = BudgetLedger::new();
        let s = site("buyer.example");
        assert!(ledger.try_consume(&s, 1 << 15, 0));
        assert!(ledger.try_consume(&s, 1 << 15, 10));
        assert!(!ledger.try_consume(&s, 1, 20));
        assert!(ledger.try_consume(&site("other.example"), 1, 20));
        assert!(!ledger.try_consume(&s, 1, 599));
        assert!(ledger.try_consume(&s, 1 << 15, 600));
        assert_eq!(ledger.remaining(&s, 600), 0);
    }

    #[test]
    fn daily_cap() {
        let mut ledger = BudgetLedger::new();
        let s = site("buyer.example");
        for i in 0..16 {
            assert!(ledger.try_consume(&s, 1 << 16, i * 600));
        }
        assert!(!ledger.try_consume(&s, 1, 16 * 600));
        assert!(ledger.try_consume(&s, 1 << 16, ONE_DAY));
    }

    /// Checks every ten-minute and one-day window over the accepted stream.
    fn windows_respected(accepted: &[(SimTime, u64)]) -> bool {
        accepted.iter().all(|&(start, _)| {
            let sum = |len: SimTime| -> u64 {
                accepted.iter().filter(|(t, _)| *t >= start && *t < start + len).map(|e| e.1).sum()
            };
            sum(TEN_MINUTES) <= CONTRIBUTION_BUDGET as u64 && sum(ONE_DAY) <= DAILY_CONTRIBUTION_BUDGET
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn accepted_stream_fits_every_window(
            gaps in proptest::collection::vec((0u64..900, 0u32..=(1 << 16)), 1..120)
        ) {
            let mut ledger = BudgetLedger::new();
            let s = site("buyer.example");
            let mut t = 0;
            let mut accepted = Vec::new();
            for (gap, value) in gaps {
                t += gap;
                if ledger.try_consume(&s, value, t) {
                    accepted.push((t, value as u64));
                }
            }
            prop_assert!(windows_respected(&accepted));
        }
    }
}
