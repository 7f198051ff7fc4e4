//! Deterministic discrete-event engine.
//!
//! Events are ordered by `(fire_at, sequence)`, where `sequence` is the
//! insertion order, so equal-time events dispatch first-in first-out.
//! Randomness comes from [`RandomStream`], a ChaCha8 generator keyed by a
//! 64-bit seed plus a 64-bit stream id. Each simulation component draws from
//! its own stream id, so adding a flow never shifts another flow's draws.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Simulated time in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input.
    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "simulated time must be finite and non-negative, got {secs}"
        );
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn after(self, delay: f64) -> Self {
        SimTime::from_secs(self.0 + delay)
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("event scheduled in the past: fire_at={fire_at} < now={now}")]
    ScheduledInPast { fire_at: SimTime, now: SimTime },
}

/// A queued event. Ordering ignores the payload.
#[derive(Debug)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub action: E,
}

impl<E> PartialEq for Event<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl<E> Eq for Event<E> {}

impl<E> PartialOrd for Event<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Event<E> {
    // Reversed so the max-heap pops the earliest (fire_at, sequence).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Clock plus pending-event queue. Handlers receive `&mut Scheduler` so they
/// can schedule follow-up events while the engine is dispatching.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Event<E>>,
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
            next_sequence: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Queues `action` at `fire_at` and returns its sequence number.
    pub fn schedule(&mut self, fire_at: SimTime, action: E) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduledInPast {
                fire_at,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Event {
            fire_at,
            sequence,
            action,
        });
        Ok(sequence)
    }

    /// Schedules `delay` seconds from now. A negative delay panics.
    pub fn schedule_in(&mut self, delay: f64, action: E) -> u64 {
        let at = self.now.after(delay);
        self.schedule(at, action)
            .expect("non-negative delay cannot land in the past")
    }

    /// Dispatches every event with `fire_at <= t_end` in `(fire_at, sequence)`
    /// order, then advances the clock to `t_end`. Returns the dispatch count.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler<E>, Event<E>),
    {
        let mut dispatched = 0;
        while self.queue.peek().is_some_and(|ev| ev.fire_at <= t_end) {
            let ev = self.queue.pop().expect("peeked");
            self.now = ev.fire_at;
            handler(self, ev);
            dispatched += 1;
        }
        if t_end > self.now {
            self.now = t_end;
        }
        dispatched
    }

    /// Dispatches until the queue is empty. The clock stops at the last event.
    pub fn run_to_completion<F>(&mut self, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler<E>, Event<E>),
    {
        let mut dispatched = 0;
        while let Some(ev) = self.queue.pop() {
            self.now = ev.fire_at;
            handler(self, ev);
            dispatched += 1;
        }
        dispatched
    }
}

/// Seeded pseudo-random stream (ChaCha8, 64-bit stream id).
///
/// The output for a given `(seed, stream)` pair is fixed across runs and
/// platforms.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform real in `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }
}
