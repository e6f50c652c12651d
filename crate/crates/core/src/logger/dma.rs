//! Storage writer model: a single SPI-attached card serving DMA requests in
//! FIFO order at a fixed byte rate.

use crate::time::SimTime;

#[derive(Debug, Clone)]
pub struct WriterModel {
    bytes_per_s: f64,
    free_at: SimTime,
    transfers: u64,
    bytes: u64,
    max_backlog: SimTime,
}

impl WriterModel {
    pub fn new(bytes_per_s: f64) -> Self {
        assert!(bytes_per_s > 0.0 && bytes_per_s.is_finite(), "writer throughput must be positive");
        Self {
            bytes_per_s,
            free_at: SimTime::ZERO,
            transfers: 0,
            bytes: 0,
            max_backlog: SimTime::ZERO,
        }
    }

    pub fn bytes_per_s(&self) -> f64 {
        self.bytes_per_s
    }

    /// Time the card needs for `bytes`, rounded up to whole nanoseconds.
    pub fn duration(&self, bytes: usize) -> SimTime {
        SimTime((bytes as f64 * 1e9 / self.bytes_per_s).ceil() as u64)
    }

    pub fn transfers(&self) -> u64 {
        self.transfers
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes
    }

    /// Longest wait between a request and the start of its transfer.
    pub fn max_backlog(&self) -> SimTime {
        self.max_backlog
    }
}

/// Queues a transfer of `bytes` issued at `now`; returns its completion time.
/// A zero-length request completes immediately.
pub fn dma_transfer(writer: &mut WriterModel, now: SimTime, bytes: usize) -> SimTime {
    if bytes == 0 {
        return now;
    }
    let start = now.max(writer.free_at);
    writer.max_backlog = writer.max_backlog.max(start - now);
    let done = start + writer.duration(bytes);
    writer.free_at = done;
    writer.transfers += 1;
    writer.bytes += bytes as u64;
    done
}
