//! Windowing and backpressure for one live stream, independent of the
//! transport. PCM goes in through [`StreamState::push_pcm`]; complete
//! windows and drop notices come out of [`StreamState::next_item`] in
//! stream order.

use std::collections::VecDeque;

use earshot_core::audio::SAMPLE_RATE;
use serde::{Deserialize, Serialize};

/// Seconds of audio per prediction window.
pub const WINDOW_S: usize = 4;
/// Seconds of unprocessed audio held before the oldest is dropped.
pub const BUFFER_S: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum StreamItem {
    /// A complete window. `sequence` is the window's index since the stream
    /// started, so its span is `[sequence · W, (sequence + 1) · W)` seconds.
    Window { sequence: u64, samples: Vec<f32> },
    /// Windows `first..=last` were discarded unprocessed.
    Dropped { first: u64, last: u64 },
}

/// Server-to-client messages on the stream socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    Ready {
        stream: u64,
        model_version: String,
        class_names: Vec<String>,
        window_s: f64,
        buffer_s: f64,
    },
    Prediction {
        stream: u64,
        sequence: u64,
        /// Seconds since the stream started.
        window_span: [f64; 2],
        /// `class`, `unknown` or `quiet`.
        verdict: String,
        /// The class, or `unknown` / `quiet`.
        class_name: String,
        class_index: Option<usize>,
        /// Mean class probabilities over accepted seconds, aligned with the
        /// model's class names; null when no second was accepted.
        probabilities: Option<Vec<f64>>,
        model_version: String,
    },
    Dropped {
        stream: u64,
        first_sequence: u64,
        last_sequence: u64,
        window_span: [f64; 2],
    },
    End {
        stream: u64,
        predictions: u64,
        dropped_windows: u64,
        discarded_samples: usize,
    },
    Error {
        kind: String,
        message: String,
    },
}

#[derive(Debug)]
pub struct StreamState {
    window_len: usize,
    capacity: usize,
    /// Accumulates the window currently being received.
    partial: Vec<f32>,
    queue: VecDeque<StreamItem>,
    next_sequence: u64,
    /// Odd trailing byte of the last PCM chunk.
    carry: Option<u8>,
    received: u64,
}

impl Default for StreamState {
    fn default() -> Self {
        Self::new(WINDOW_S * SAMPLE_RATE as usize, BUFFER_S * SAMPLE_RATE as usize)
    }
}

impl StreamState {
    /// `capacity` must be at least one window.
    pub fn new(window_len: usize, capacity: usize) -> Self {
        assert!(window_len > 0 && capacity >= window_len, "capacity below one window");
        Self {
            window_len,
            capacity,
            partial: Vec::with_capacity(window_len),
            queue: VecDeque::new(),
            next_sequence: 0,
            carry: None,
            received: 0,
        }
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Samples held: queued windows plus the partial one.
    pub fn buffered(&self) -> usize {
        let queued = self
            .queue
            .iter()
            .filter(|i| matches!(i, StreamItem::Window { .. }))
            .count();
        queued * self.window_len + self.partial.len()
    }

    pub fn samples_received(&self) -> u64 {
        self.received
    }

    /// Appends 16-bit little-endian PCM. Chunks may split a sample.
    pub fn push_pcm(&mut self, bytes: &[u8]) {
        let mut samples = Vec::with_capacity(bytes.len() / 2 + 1);
        let mut rest = bytes;
        if let Some(lo) = self.carry.take() {
            match rest.split_first() {
                Some((&hi, tail)) => {
                    samples.push(i16::from_le_bytes([lo, hi]) as f32 / 32768.0);
                    rest = tail;
                }
                None => {
                    self.carry = Some(lo);
                    return;
                }
            }
        }
        let mut chunks = rest.chunks_exact(2);
        samples.extend(chunks.by_ref().map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0));
        self.carry = chunks.remainder().first().copied();
        self.push_samples(&samples);
    }

    pub fn push_samples(&mut self, mut samples: &[f32]) {
        self.received += samples.len() as u64;
        while !samples.is_empty() {
            let take = (self.window_len - self.partial.len()).min(samples.len());
            self.partial.extend_from_slice(&samples[..take]);
            samples = &samples[take..];
            if self.partial.len() == self.window_len {
                let full = std::mem::replace(&mut self.partial, Vec::with_capacity(self.window_len));
                self.queue.push_back(StreamItem::Window {
                    sequence: self.next_sequence,
                    samples: full,
                });
                self.next_sequence += 1;
            }
            self.enforce_capacity();
        }
    }

    fn enforce_capacity(&mut self) {
        while self.buffered() > self.capacity {
            let Some(pos) = self.queue.iter().position(|i| matches!(i, StreamItem::Window { .. })) else {
                break;
            };
            let StreamItem::Window { sequence, .. } = self.queue[pos] else { unreachable!() };
            // Merge with an adjacent earlier notice.
            if pos > 0 {
                if let StreamItem::Dropped { last, .. } = &mut self.queue[pos - 1] {
                    if *last + 1 == sequence {
                        *last = sequence;
                        self.queue.remove(pos);
                        continue;
                    }
                }
            }
            self.queue[pos] = StreamItem::Dropped {
                first: sequence,
                last: sequence,
            };
        }
    }

    pub fn next_item(&mut self) -> Option<StreamItem> {
        self.queue.pop_front()
    }

    /// Audio of an incomplete final window, discarded at end of stream.
    pub fn pending_partial(&self) -> usize {
        self.partial.len()
    }
}
