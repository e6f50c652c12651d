//! Virtual clock with one-shot events and fixed-period tasks.
//!
//! Ordering is by time, then priority (lower runs first), then insertion
//! order. Periodic tasks are not stored in the heap; each keeps its next
//! tick index, so a four-hour run at 16 kHz never materializes its ticks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::time::SimTime;

struct Queued<E> {
    time: SimTime,
    priority: u8,
    seq: u64,
    event: E,
}

impl<E> Queued<E> {
    fn key(&self) -> (SimTime, u8, u64) {
        (self.time, self.priority, self.seq)
    }
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<E> Eq for Queued<E> {}
impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Queued<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

#[derive(Debug, Clone)]
struct PeriodicTask {
    period: u64,
    next: u64,
    count: u64,
    priority: u8,
}

impl PeriodicTask {
    fn next_time(&self) -> Option<SimTime> {
        (self.next < self.count).then(|| SimTime(self.next * self.period))
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum Next<E> {
    Event(E),
    Tick { task: usize, index: u64 },
}

pub struct Scheduler<E> {
    now: SimTime,
    heap: BinaryHeap<Queued<E>>,
    seq: u64,
    tasks: Vec<PeriodicTask>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            heap: BinaryHeap::new(),
            seq: 0,
            tasks: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Registers a task ticking at `k * period` for `k in 0..count`.
    pub fn add_periodic(&mut self, period: SimTime, count: u64, priority: u8) -> usize {
        assert!(period.0 > 0, "period must be positive");
        self.tasks.push(PeriodicTask {
            period: period.0,
            next: 0,
            count,
            priority,
        });
        self.tasks.len() - 1
    }

    pub fn schedule(&mut self, time: SimTime, priority: u8, event: E) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.heap.push(Queued {
            time,
            priority,
            seq: self.seq,
            event,
        });
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(SimTime, Next<E>)> {
        let mut best: Option<(SimTime, u8, usize)> = None;
        for (i, task) in self.tasks.iter().enumerate() {
            if let Some(t) = task.next_time() {
                if best.is_none_or(|(bt, bp, _)| (t, task.priority) < (bt, bp)) {
                    best = Some((t, task.priority, i));
                }
            }
        }
        let take_event = match (self.heap.peek(), best) {
            (None, None) => return None,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(q), Some((t, p, _))) => (q.time, q.priority) <= (t, p),
        };
        if take_event {
            let q = self.heap.pop().expect("peeked");
            self.now = q.time;
            Some((q.time, Next::Event(q.event)))
        } else {
            let (t, _, i) = best.expect("checked");
            let index = self.tasks[i].next;
            self.tasks[i].next += 1;
            self.now = t;
            Some((t, Next::Tick { task: i, index }))
        }
    }
}
