//! RED drop-decision state machines over a byte-measured queue.
//!
//! All five variants share the EWMA average and the linear temporary drop
//! probability `p_b`. They differ in where the packet size enters:
//!
//! | variant | size weighting            | count increment | count phase      |
//! |---------|---------------------------|-----------------|------------------|
//! | RED1    | none                      | 1               | before decision  |
//! | RED2    | `p_b * L/M` (temporary)   | 1               | before decision  |
//! | RED3    | `(L/M) * p_a` (final)     | 1               | before decision  |
//! | RED4    | `(L/M) * p_a` (final)     | `L/M`           | after accept     |
//! | RED5    | `(L/M)^2 * p_a` (final)   | `(L/M)^2`       | after accept     |
//!
//! `count` is the accepted traffic since the last drop, not counting the
//! packet being decided. Before-decision variants do their unit increment
//! when the packet arrives, but `p_a` is computed from the value seen just
//! before that increment. A drop resets `count` to zero for every variant.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AqmError {
    #[error("invalid RED parameter {field}: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("unknown RED variant {0:?} (expected RED1..RED5)")]
    UnknownVariant(String),
    #[error("count update for {variant} called in phase {phase:?}")]
    WrongPhase { variant: RedVariant, phase: CountPhase },
    #[error("packet length {len} outside (0, {max}]")]
    BadLength { len: u32, max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RedVariant {
    Red1,
    Red2,
    Red3,
    Red4,
    Red5,
}

impl RedVariant {
    pub const ALL: [RedVariant; 5] = [
        RedVariant::Red1,
        RedVariant::Red2,
        RedVariant::Red3,
        RedVariant::Red4,
        RedVariant::Red5,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RedVariant::Red1 => "RED1",
            RedVariant::Red2 => "RED2",
            RedVariant::Red3 => "RED3",
            RedVariant::Red4 => "RED4",
            RedVariant::Red5 => "RED5",
        }
    }

    /// Phase in which the variant advances `count`.
    pub fn count_phase(self) -> CountPhase {
        match self {
            RedVariant::Red1 | RedVariant::Red2 | RedVariant::Red3 => CountPhase::BeforeDecision,
            RedVariant::Red4 | RedVariant::Red5 => CountPhase::AfterAccept,
        }
    }

    /// Amount added to `count` for a packet of `len` bytes.
    pub fn count_increment(self, len: u32, max_len: u32) -> f64 {
        let ratio = f64::from(len) / f64::from(max_len);
        match self {
            RedVariant::Red1 | RedVariant::Red2 | RedVariant::Red3 => 1.0,
            RedVariant::Red4 => ratio,
            RedVariant::Red5 => ratio * ratio,
        }
    }
}

impl fmt::Display for RedVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RedVariant {
    type Err = AqmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('_', "").as_str() {
            "RED1" => Ok(RedVariant::Red1),
            "RED2" => Ok(RedVariant::Red2),
            "RED3" => Ok(RedVariant::Red3),
            "RED4" => Ok(RedVariant::Red4),
            "RED5" => Ok(RedVariant::Red5),
            _ => Err(AqmError::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountPhase {
    BeforeDecision,
    AfterAccept,
}

/// RED configuration. Queue sizes and thresholds are in bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RedParams {
    pub w_q: f64,
    pub min_th: f64,
    pub max_th: f64,
    pub max_p: f64,
    /// Maximum packet size `M`.
    pub max_packet: u32,
    /// Hard buffer limit.
    pub capacity: f64,
}

impl Default for RedParams {
    fn default() -> Self {
        Self {
            w_q: 0.002,
            min_th: 30_000.0,
            max_th: 90_000.0,
            max_p: 0.1,
            max_packet: 1500,
            capacity: 180_000.0,
        }
    }
}

impl RedParams {
    pub fn validate(&self) -> Result<(), AqmError> {
        let bad = |field, reason: &str| {
            Err(AqmError::InvalidParam {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.w_q > 0.0 && self.w_q <= 1.0) {
            return bad("w_q", "must lie in (0, 1]");
        }
        if !(self.max_p > 0.0 && self.max_p <= 1.0) {
            return bad("max_p", "must lie in (0, 1]");
        }
        if !(self.min_th > 0.0) {
            return bad("min_th", "must be positive");
        }
        if !(self.min_th < self.max_th) {
            return bad("max_th", "must exceed min_th");
        }
        if !(self.max_th <= self.capacity) {
            return bad("capacity", "must be at least max_th");
        }
        if self.max_packet == 0 {
            return bad("max_packet", "must be positive");
        }
        Ok(())
    }

    /// Drop-tail equivalent: the probabilistic region is squeezed to the
    /// buffer edge, so only overflow drops remain.
    pub fn drop_tail(capacity: f64, max_packet: u32) -> Self {
        Self {
            w_q: 1.0,
            min_th: capacity - 1e-9,
            max_th: capacity,
            max_p: 1.0,
            max_packet,
            capacity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accept,
    RandomDrop,
    ForcedDrop,
}

impl Outcome {
    pub fn is_drop(self) -> bool {
        !matches!(self, Outcome::Accept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropDecision {
    pub outcome: Outcome,
    /// Final drop probability the decision was drawn against.
    pub p_a_used: f64,
}

/// Mutable RED state for one queue.
#[derive(Debug, Clone, PartialEq)]
pub struct RedState {
    pub variant: RedVariant,
    pub avg: f64,
    pub count: f64,
}

/// EWMA step, `(1 - w_q) * avg + w_q * q`.
pub fn ewma(avg: f64, q: f64, w_q: f64) -> f64 {
    (1.0 - w_q) * avg + w_q * q
}

/// Linear temporary drop probability, clamped to `[0, max_p]`.
pub fn temp_drop_prob(avg: f64, params: &RedParams) -> f64 {
    let p = params.max_p * (avg - params.min_th) / (params.max_th - params.min_th);
    p.clamp(0.0, params.max_p)
}

/// RED2's size-weighted temporary probability, `p_b * L/M`.
pub fn size_weight_temp(p_b: f64, len: u32, max_len: u32) -> f64 {
    p_b * f64::from(len) / f64::from(max_len)
}

/// Final drop probability for `variant` given the accumulated `count`.
///
/// `p_b` is the (possibly RED2-weighted) temporary probability. Returns 1 when
/// `1 - count * p_b <= 0` or when the expression exceeds 1.
pub fn final_drop_prob(variant: RedVariant, count: f64, p_b: f64, len: u32, max_len: u32) -> f64 {
    let ratio = f64::from(len) / f64::from(max_len);
    let numerator = match variant {
        RedVariant::Red1 | RedVariant::Red2 => p_b,
        RedVariant::Red3 | RedVariant::Red4 => ratio * p_b,
        RedVariant::Red5 => ratio * ratio * p_b,
    };
    let denom = 1.0 - count * p_b;
    if denom <= 0.0 {
        return 1.0;
    }
    (numerator / denom).min(1.0)
}

impl RedState {
    pub fn new(variant: RedVariant) -> Self {
        Self {
            variant,
            avg: 0.0,
            count: 0.0,
        }
    }

    pub fn update_average(&mut self, params: &RedParams, q: f64) -> f64 {
        self.avg = ewma(self.avg, q, params.w_q);
        self.avg
    }

    /// Advances `count` for one packet. Fails when `phase` is not the
    /// variant's count phase.
    pub fn update_count(&mut self, len: u32, max_len: u32, phase: CountPhase) -> Result<(), AqmError> {
        if phase != self.variant.count_phase() {
            return Err(AqmError::WrongPhase {
                variant: self.variant,
                phase,
            });
        }
        self.count += self.variant.count_increment(len, max_len);
        Ok(())
    }

    /// Per-packet pipeline for the probabilistic region with `p_b` already
    /// known. Draws a drop iff `u < p_a` and applies the count rules.
    ///
    /// This is the part of [`RedState::on_arrival`] that the drop-law
    /// oracles replay with a frozen `p_b`.
    pub fn decide_in_region(&mut self, p_b: f64, len: u32, max_len: u32, u: f64) -> DropDecision {
        let p_a = self.drop_probability(p_b, len, max_len);
        let phase = self.variant.count_phase();
        if phase == CountPhase::BeforeDecision {
            self.count += self.variant.count_increment(len, max_len);
        }
        if u < p_a {
            self.count = 0.0;
            DropDecision {
                outcome: Outcome::RandomDrop,
                p_a_used: p_a,
            }
        } else {
            if phase == CountPhase::AfterAccept {
                self.count += self.variant.count_increment(len, max_len);
            }
            DropDecision {
                outcome: Outcome::Accept,
                p_a_used: p_a,
            }
        }
    }

    /// Final drop probability the next packet of `len` bytes would face under
    /// a temporary probability `p_b`. Does not mutate state.
    pub fn drop_probability(&self, p_b: f64, len: u32, max_len: u32) -> f64 {
        let p_b = match self.variant {
            RedVariant::Red2 => size_weight_temp(p_b, len, max_len),
            _ => p_b,
        };
        final_drop_prob(self.variant, self.count, p_b, len, max_len)
    }

    /// Full decision for an arriving packet of `len` bytes when `q_now` bytes
    /// are already queued. `u` is a uniform draw in `[0, 1)`.
    ///
    /// The average is updated on every arrival, dropped or not, using the
    /// pre-enqueue queue size.
    pub fn on_arrival(&mut self, params: &RedParams, len: u32, q_now: f64, u: f64) -> DropDecision {
        debug_assert!(len > 0 && len <= params.max_packet, "packet length {len}");
        self.update_average(params, q_now);
        if self.avg < params.min_th {
            self.count = 0.0;
            return DropDecision {
                outcome: Outcome::Accept,
                p_a_used: 0.0,
            };
        }
        if self.avg >= params.max_th || q_now + f64::from(len) > params.capacity {
            self.count = 0.0;
            return DropDecision {
                outcome: Outcome::ForcedDrop,
                p_a_used: 1.0,
            };
        }
        let p_b = temp_drop_prob(self.avg, params);
        self.decide_in_region(p_b, len, params.max_packet, u)
    }
}
