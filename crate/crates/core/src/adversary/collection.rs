use super::{ColluderNetwork, TrackerState};
use crate::browser::ReportQueue;
use crate::error::Result;
use crate::model::{SealedReport, SimClock, SimTime, ONE_HOUR};

/// Reports gathered in one collection round.
#[derive(Debug)]
pub struct CollectedBatch {
    pub round: u64,
    pub reports: Vec<SealedReport>,
    pub expected: usize,
    /// Set when the window closed before `expected` reports arrived.
    pub short: bool,
    pub opened_at: Option<SimTime>,
    pub closed_at: SimTime,
    /// Reports for other destinations delivered during the round.
    pub ignored: usize,
}

/// Advances the clock through the delivery queue collecting reports for the
/// colluding buyers. The first arrival suspends the colluders for an hour;
/// the round ends when `expected` reports are in, the hour is over, or
/// nothing else is queued.
pub fn collection_round(
    network: &ColluderNetwork,
    state: &mut TrackerState,
    expected: usize,
    clock: &mut SimClock,
    queue: &mut ReportQueue,
) -> Result<CollectedBatch> {
    let round = state.next_round();
    let mut reports = Vec::new();
    let mut ignored = 0;
    let mut opened_at: Option<SimTime> = None;
    while reports.len() < expected {
        let Some(next) = queue.next_delivery() else {
            break;
        };
        if let Some(open) = opened_at {
            if next > open + ONE_HOUR {
                clock.advance_to((open + ONE_HOUR).max(clock.now()))?;
                break;
            }
        }
        let now = clock.advance_to(next.max(clock.now()))?;
        for report in queue.deliver_due_reports(now) {
            if !network.is_colluder(report.destination()) {
                ignored += 1;
                continue;
            }
            if opened_at.is_none() {
                opened_at = Some(now);
                state.suspend_until(now + ONE_HOUR);
            }
            reports.push(report);
        }
    }
    state.received.insert(round, reports.len());
    Ok(CollectedBatch {
        round,
        short: reports.len() < expected,
        reports,
        expected,
        opened_at,
        closed_at: clock.now(),
        ignored,
    })
}
