//! Double buffer with DMA hand-off.

use thiserror::Error;

/// A full buffer handed to the DMA engine.
#[derive(Debug, Clone, PartialEq)]
pub struct DmaRequest<T> {
    /// Which of the two buffers is being drained (0 = ping, 1 = pong).
    pub buffer: usize,
    /// Stream index of `data[0]`.
    pub first_sample: u64,
    pub data: Vec<T>,
}

impl<T> DmaRequest<T> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("buffer overrun at sample {sample_index}: active buffer full while the other is still under DMA")]
pub struct Overrun {
    pub sample_index: u64,
}

/// Ping-pong buffer.
///
/// Samples go into the active buffer only. When it reaches capacity the
/// buffers swap and the full one is handed out as a [`DmaRequest`]; it stays
/// DMA-busy until [`PingPongBuffer::complete`] is called for it. If the
/// other buffer is still busy at swap time the swap is deferred to that
/// buffer's completion; a push arriving before then is an [`Overrun`].
#[derive(Debug, Clone)]
pub struct PingPongBuffer<T> {
    capacity: usize,
    buffers: [Vec<T>; 2],
    busy: [bool; 2],
    start: [u64; 2],
    active: usize,
    next_sample: u64,
    pending_swap: bool,
    in_flight: usize,
    high_water: usize,
}

impl<T: Copy> PingPongBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            buffers: [Vec::with_capacity(capacity), Vec::with_capacity(capacity)],
            busy: [false; 2],
            start: [0; 2],
            active: 0,
            next_sample: 0,
            pending_swap: false,
            in_flight: 0,
            high_water: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn fill_level(&self) -> usize {
        self.buffers[self.active].len()
    }

    pub fn is_busy(&self, buffer: usize) -> bool {
        self.busy[buffer]
    }

    /// Samples held in memory: active fill plus buffers awaiting DMA completion.
    pub fn occupancy(&self) -> usize {
        self.fill_level() + self.in_flight
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn push(&mut self, sample: T) -> Result<Option<DmaRequest<T>>, Overrun> {
        if self.pending_swap {
            return Err(Overrun {
                sample_index: self.next_sample,
            });
        }
        let active = self.active;
        if self.buffers[active].is_empty() {
            self.start[active] = self.next_sample;
        }
        self.buffers[active].push(sample);
        self.next_sample += 1;
        self.high_water = self.high_water.max(self.occupancy());
        if self.buffers[active].len() < self.capacity {
            return Ok(None);
        }
        if self.busy[1 - active] {
            self.pending_swap = true;
            Ok(None)
        } else {
            Ok(Some(self.swap()))
        }
    }

    fn swap(&mut self) -> DmaRequest<T> {
        let full = self.active;
        self.active = 1 - full;
        self.pending_swap = false;
        self.busy[full] = true;
        let data = std::mem::replace(&mut self.buffers[full], Vec::with_capacity(self.capacity));
        self.in_flight += data.len();
        DmaRequest {
            buffer: full,
            first_sample: self.start[full],
            data,
        }
    }

    /// Marks `buffer` writable again. Returns the deferred request if a swap
    /// was waiting on this buffer.
    pub fn complete(&mut self, buffer: usize, transferred: usize) -> Option<DmaRequest<T>> {
        debug_assert!(self.busy[buffer], "completion for idle buffer {buffer}");
        self.busy[buffer] = false;
        self.in_flight -= transferred;
        if self.pending_swap && buffer != self.active {
            Some(self.swap())
        } else {
            None
        }
    }

    /// Hands out a partially filled active buffer at end of acquisition.
    pub fn flush(&mut self) -> Option<DmaRequest<T>> {
        // A full buffer waiting on its partner goes out via `complete`; call
        // again after the partner's completion.
        if self.pending_swap || self.busy[1 - self.active] {
            return None;
        }
        if self.buffers[self.active].is_empty() {
            return None;
        }
        Some(self.swap())
    }

    /// True when a full buffer is waiting on the other buffer's DMA.
    pub fn has_pending_swap(&self) -> bool {
        self.pending_swap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_then_swaps() {
        let mut pp = PingPongBuffer::new(4);
        for s in 0..3 {
            assert_eq!(pp.push(s).unwrap(), None);
        }
        let req = pp.push(3).unwrap().expect("dma request on fill");
        assert_eq!(req.data, vec![0, 1, 2, 3]);
        assert_eq!(req.buffer, 0);
        assert_eq!(req.first_sample, 0);
        assert_eq!(pp.active_index(), 1);
        assert!(pp.is_busy(0));
    }

    #[test]
    fn eight_samples_two_requests_in_order() {
        let mut pp = PingPongBuffer::new(4);
        let mut reqs = Vec::new();
        for s in 0..8u32 {
            if let Some(r) = pp.push(s).unwrap() {
                reqs.push(r.clone());
                pp.complete(r.buffer, r.len());
            }
        }
        assert_eq!(reqs.len(), 2);
        assert_eq!(reqs[0].data, vec![0, 1, 2, 3]);
        assert_eq!(reqs[1].data, vec![4, 5, 6, 7]);
        assert_eq!(reqs[1].first_sample, 4);
    }

    #[test]
    fn push_while_both_unavailable_is_overrun() {
        let mut pp = PingPongBuffer::new(2);
        pp.push(0).unwrap();
        let first = pp.push(1).unwrap().unwrap();
        pp.push(2).unwrap();
        assert_eq!(pp.push(3).unwrap(), None, "swap deferred");
        assert!(pp.has_pending_swap());
        assert_eq!(pp.push(4), Err(Overrun { sample_index: 4 }));
        // completion of the busy buffer releases the deferred swap
        let deferred = pp.complete(first.buffer, first.len()).unwrap();
        assert_eq!(deferred.data, vec![2, 3]);
        assert!(pp.push(4).unwrap().is_none());
    }

    #[test]
    fn occupancy_counts_in_flight() {
        let mut pp = PingPongBuffer::new(3);
        for s in 0..4 {
            pp.push(s).unwrap();
        }
        assert_eq!(pp.occupancy(), 4);
        pp.complete(0, 3);
        assert_eq!(pp.occupancy(), 1);
        assert_eq!(pp.high_water(), 4);
        let tail = pp.flush().unwrap();
        assert_eq!(tail.data, vec![3]);
        assert_eq!(tail.first_sample, 3);
    }
}
