use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::model::{SealedReport, SimTime};

/// Reports waiting for their delivery time, released in `deliver_at` order
/// (ties in scheduling order).
#[derive(Debug, Default)]
pub struct ReportQueue {
    heap: BinaryHeap<Reverse<Pending>>,
    seq: u64,
}

#[derive(Debug)]
struct Pending {
    deliver_at: SimTime,
    seq: u64,
    report: SealedReport,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.deliver_at, self.seq) == (other.deliver_at, other.seq)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_at, self.seq).cmp(&(other.deliver_at, other.seq))
    }
}

impl ReportQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, report: SealedReport) {
        self.seq += 1;
        self.heap.push(Reverse(Pending { deliver_at: report.deliver_at(), seq: self.seq, report }));
    }

    pub fn extend(&mut self, reports: impl IntoIterator<Item = SealedReport>) {
        for r in reports {
            self.schedule(r);
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn next_delivery(&self) -> Option<SimTime> {
        self.heap.peek().map(|p| p.0.deliver_at)
    }

    /// Removes and returns every report due at or before `now`.
    pub fn deliver_due_reports(&mut self, now: SimTime) -> Vec<SealedReport> {
        let mut due = Vec::new();
        while self.heap.peek().is_some_and(|p| p.0.deliver_at <= now) {
            due.push(self.heap.pop().expect("peeked").0.report);
        }
        due
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Origin, ReportId};

    fn report(id: u64, created: SimTime, deliver: SimTime) -> SealedReport {
        SealedReport::seal(ReportId(id), Origin::new("b.example").unwrap(), vec![], created, deliver).unwrap()
    }

    #[test]
    fn delivers_in_time_order() {
        let mut q = ReportQueue::new();
        q.schedule(report(1, 0, 900));
        q.schedule(report(2, 10, 300));
        assert!(q.deliver_due_reports(299).is_empty());
        let ids: Vec<u64> = q.deliver_due_reports(1000).iter().map(|r| r.id().0).collect();
        assert_eq!(ids, vec![2, 1]);
        assert!(q.is_empty());
    }

    #[test]
    fn first_poll_at_or_after_due_time() {
        let mut q = ReportQueue::new();
        q.schedule(report(1, 100, 150));
        assert!(q.deliver_due_reports(149).is_empty());
        assert_eq!(q.deliver_due_reports(150).len(), 1);
        assert!(q.deliver_due_reports(151).is_empty());
    }
}
