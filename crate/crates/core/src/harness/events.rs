//! Deterministic event queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::pose::Timestamp;

/// Simulation actions. The declaration order is the priority among events
/// at the same instant: inputs are absorbed before anything samples state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Action {
    Hand,
    UplinkDelivery,
    DownlinkDelivery,
    Control,
    Encoder,
    Talker,
    /// τ₁ activation `job` starts: the frame's inputs are sampled.
    FrameSnapshot { job: usize },
    /// Final-stage job `entry` completes and its frame is shown.
    FrameDisplay { entry: usize },
}

impl Action {
    fn rank(&self) -> u8 {
        match self {
            Action::Hand => 0,
            Action::UplinkDelivery => 1,
            Action::DownlinkDelivery => 2,
            Action::Control => 3,
            Action::Encoder => 4,
            Action::Talker => 5,
            Action::FrameSnapshot { .. } => 6,
            Action::FrameDisplay { .. } => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: Timestamp,
    pub seq: u64,
    pub action: Action,
}

impl Ord for Event {
    // reversed so the max-heap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.action.rank(), other.seq).cmp(&(self.time, self.action.rank(), self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pops in (time, action rank, insertion sequence) order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Timestamp, action: Action) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, action });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_by_time_then_rank_then_sequence() {
        let mut q = EventQueue::new();
        q.push(Timestamp(5), Action::Talker);
        q.push(Timestamp(5), Action::Hand);
        q.push(Timestamp(1), Action::FrameDisplay { entry: 0 });
        q.push(Timestamp(5), Action::Hand);
        let got: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| (e.time.0, e.action, e.seq)).collect();
        assert_eq!(
            got,
            vec![
                (1, Action::FrameDisplay { entry: 0 }, 2),
                (5, Action::Hand, 1),
                (5, Action::Hand, 3),
                (5, Action::Talker, 0),
            ]
        );
    }
}
