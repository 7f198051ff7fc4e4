//! Bulk-transfer TCP: a SACK-aware Reno sender and a cumulative/SACK receiver.
//!
//! Sequence numbers are byte offsets starting at 0, and every data segment
//! carries exactly one MSS of payload (the source is greedy). The sender
//! follows slow start and congestion avoidance, enters fast retransmit and
//! fast recovery on the third duplicate ack, and retransmits at most one
//! SACK-identified hole per incoming ack. Retransmission timers are whole
//! multiples of the 200 ms timer tick.

use std::collections::BTreeMap;

use arrayvec::ArrayVec;

/// IP + TCP header bytes carried by every packet (no options).
pub const HEADER_BYTES: u32 = 40;
/// Wire length of a pure ack.
pub const ACK_BYTES: u32 = HEADER_BYTES;
/// Retransmission-timer granularity in seconds.
pub const RTO_TICK: f64 = 0.2;
pub const INITIAL_RTO_TICKS: u32 = 5;
pub const MAX_RTO_TICKS: u32 = 300;
pub const INITIAL_SSTHRESH_SEGMENTS: u32 = 64;
/// Receiver window in segments; large enough that it never binds.
pub const DEFAULT_RWND_SEGMENTS: u32 = 1 << 16;
pub const MAX_SACK_BLOCKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId(pub u32);

impl FlowId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Half-open byte range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeqRange {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub flow: FlowId,
    pub seq_start: u64,
    pub seq_end: u64,
    pub wire_len: u32,
    pub is_retransmit: bool,
}

impl Segment {
    pub fn payload(&self) -> u64 {
        self.seq_end - self.seq_start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckPacket {
    pub flow: FlowId,
    pub cum_ack: u64,
    pub sack_blocks: ArrayVec<SeqRange, MAX_SACK_BLOCKS>,
}

impl AckPacket {
    pub fn wire_len(&self) -> u32 {
        ACK_BYTES
    }
}

/// Disjoint, non-adjacent byte ranges keyed by start.
#[derive(Debug, Clone, Default, PartialEq)]
struct RangeSet {
    ranges: BTreeMap<u64, u64>,
}

impl RangeSet {
    fn insert(&mut self, mut start: u64, mut end: u64) {
        if start >= end {
            return;
        }
        // Absorb a range that begins at or before `start` and reaches it.
        if let Some((&s, &e)) = self.ranges.range(..=start).next_back() {
            if e >= start {
                start = s;
                end = end.max(e);
                self.ranges.remove(&s);
            }
        }
        // Absorb ranges beginning inside [start, end].
        while let Some((&s, &e)) = self.ranges.range(start..=end).next() {
            end = end.max(e);
            self.ranges.remove(&s);
        }
        self.ranges.insert(start, end);
    }

    /// End of the range covering `pos`, if any.
    fn covering_end(&self, pos: u64) -> Option<u64> {
        self.ranges
            .range(..=pos)
            .next_back()
            .and_then(|(_, &e)| (e > pos).then_some(e))
    }

    fn remove_below(&mut self, pos: u64) {
        let below: Vec<u64> = self.ranges.range(..pos).map(|(&s, _)| s).collect();
        for s in below {
            let e = self.ranges.remove(&s).expect("present");
            if e > pos {
                self.ranges.insert(pos, e);
            }
        }
    }

    fn highest_end(&self) -> Option<u64> {
        self.ranges.values().next_back().copied()
    }

    fn iter(&self) -> impl DoubleEndedIterator<Item = SeqRange> + '_ {
        self.ranges.iter().map(|(&start, &end)| SeqRange { start, end })
    }

    fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    fn total_len(&self) -> u64 {
        self.ranges.iter().map(|(&s, &e)| e - s).sum()
    }
}

/// Pending retransmission timer. Stale generations are ignored on fire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtoTimer {
    pub deadline: f64,
    pub generation: u64,
}

/// Sender-side state for one bulk-transfer connection.
#[derive(Debug, Clone)]
pub struct TcpSender {
    flow: FlowId,
    mss: u32,
    rwnd: f64,
    cwnd: f64,
    ssthresh: f64,
    /// Oldest unacknowledged byte (cumulative ack point).
    snd_una: u64,
    /// Next byte to send; pulled back to `snd_una` after a timeout.
    snd_nxt: u64,
    /// Highest byte ever sent.
    snd_max: u64,
    scoreboard: RangeSet,
    dup_acks: u32,
    in_recovery: bool,
    recover: u64,
    /// Holes below this point were already retransmitted in this recovery.
    rexmit_next: u64,
    /// `snd_max` at the last timeout. Dup acks do not start a fast
    /// retransmit until the cumulative ack passes it.
    timeout_recover: Option<u64>,
    srtt: Option<f64>,
    rttvar: f64,
    rto_ticks: u32,
    rtt_probe: Option<(u64, f64)>,
    timer: Option<RtoTimer>,
    timer_generation: u64,
    stopped: bool,
    retransmits: u64,
    timeouts: u64,
    fast_recoveries: u64,
}

impl TcpSender {
    pub fn new(flow: FlowId, mss: u32) -> Self {
        Self::with_rwnd(flow, mss, DEFAULT_RWND_SEGMENTS)
    }

    pub fn with_rwnd(flow: FlowId, mss: u32, rwnd_segments: u32) -> Self {
        assert!(mss > 0, "mss must be positive");
        let m = f64::from(mss);
        Self {
            flow,
            mss,
            rwnd: m * f64::from(rwnd_segments),
            cwnd: m,
            ssthresh: m * f64::from(INITIAL_SSTHRESH_SEGMENTS),
            snd_una: 0,
            snd_nxt: 0,
            snd_max: 0,
            scoreboard: RangeSet::default(),
            dup_acks: 0,
            in_recovery: false,
            recover: 0,
            rexmit_next: 0,
            timeout_recover: None,
            srtt: None,
            rttvar: 0.0,
            rto_ticks: INITIAL_RTO_TICKS,
            rtt_probe: None,
            timer: None,
            timer_generation: 0,
            stopped: false,
            retransmits: 0,
            timeouts: 0,
            fast_recoveries: 0,
        }
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }
    pub fn mss(&self) -> u32 {
        self.mss
    }
    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }
    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }
    pub fn cum_acked(&self) -> u64 {
        self.snd_una
    }
    pub fn highest_sent(&self) -> u64 {
        self.snd_max
    }
    pub fn dup_ack_count(&self) -> u32 {
        self.dup_acks
    }
    pub fn in_fast_recovery(&self) -> bool {
        self.in_recovery
    }
    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }
    pub fn rttvar(&self) -> f64 {
        self.rttvar
    }
    pub fn retransmits(&self) -> u64 {
        self.retransmits
    }
    pub fn timeouts(&self) -> u64 {
        self.timeouts
    }
    pub fn fast_recoveries(&self) -> u64 {
        self.fast_recoveries
    }
    pub fn timer(&self) -> Option<RtoTimer> {
        self.timer
    }
    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Current retransmission timeout in seconds.
    pub fn rto(&self) -> f64 {
        f64::from(self.rto_ticks) * RTO_TICK
    }

    /// Bytes sent but not cumulatively acknowledged.
    pub fn flight_size(&self) -> u64 {
        self.snd_max - self.snd_una
    }

    /// Outstanding bytes not yet SACKed by the receiver.
    pub fn unsacked_flight(&self) -> u64 {
        self.flight_size() - self.scoreboard.total_len()
    }

    /// Starts the bulk transfer: one-segment window, ssthresh at 64 segments.
    pub fn on_app_start(&mut self, now: f64) -> Vec<Segment> {
        let m = f64::from(self.mss);
        self.cwnd = m;
        self.ssthresh = m * f64::from(INITIAL_SSTHRESH_SEGMENTS);
        self.send_allowed(now)
    }

    /// Stops the source: no further transmissions and no timer.
    pub fn stop(&mut self) {
        self.stopped = true;
        self.timer = None;
    }

    /// Processes an ack and returns the segments it releases.
    ///
    /// Panics if the ack covers data that was never sent.
    pub fn on_ack(&mut self, ack: &AckPacket, now: f64) -> Vec<Segment> {
        assert_eq!(ack.flow, self.flow, "ack delivered to the wrong flow");
        assert!(
            ack.cum_ack <= self.snd_max,
            "{:?}: ack {} beyond highest sent {}",
            self.flow,
            ack.cum_ack,
            self.snd_max
        );
        for b in &ack.sack_blocks {
            assert!(b.end <= self.snd_max, "SACK block beyond highest sent");
            if b.end > ack.cum_ack {
                self.scoreboard.insert(b.start.max(ack.cum_ack), b.end);
            }
        }

        let mut out = Vec::new();
        let mut hole_sent = false;
        if ack.cum_ack > self.snd_una {
            let newly = ack.cum_ack - self.snd_una;
            self.take_rtt_sample(ack.cum_ack, now);
            self.snd_una = ack.cum_ack;
            self.scoreboard.remove_below(self.snd_una);
            if self.timeout_recover.is_some_and(|r| self.snd_una > r) {
                self.timeout_recover = None;
            }
            if self.snd_nxt < self.snd_una {
                self.snd_nxt = self.snd_una;
            }
            let m = f64::from(self.mss);
            if self.in_recovery {
                if self.snd_una >= self.recover {
                    self.cwnd = self.ssthresh;
                    self.in_recovery = false;
                    self.dup_acks = 0;
                } else {
                    // Partial ack: deflate by what left the network, then
                    // repair the next hole.
                    self.cwnd = (self.cwnd - newly as f64 + m).max(m);
                    if let Some(seg) = self.next_hole(now) {
                        out.push(seg);
                        hole_sent = true;
                    }
                }
            } else {
                self.dup_acks = 0;
                if self.cwnd < self.ssthresh {
                    self.cwnd += (newly as f64).min(m);
                } else {
                    self.cwnd += m * m / self.cwnd;
                }
            }
            self.cwnd = self.cwnd.min(self.rwnd);
            if self.snd_una == self.snd_max {
                self.timer = None;
            } else {
                self.arm_timer(now);
            }
        } else if ack.cum_ack == self.snd_una && self.snd_max > self.snd_una {
            self.dup_acks += 1;
            let m = f64::from(self.mss);
            if self.in_recovery {
                self.cwnd += m;
                if let Some(seg) = self.next_hole(now) {
                    out.push(seg);
                    hole_sent = true;
                }
            } else if self.dup_acks == 3 && self.timeout_recover.is_none() {
                self.fast_recoveries += 1;
                self.ssthresh = (self.flight_size() as f64 / 2.0).max(2.0 * m);
                self.in_recovery = true;
                self.recover = self.snd_max;
                self.rexmit_next = self.snd_una;
                if let Some(seg) = self.next_hole(now) {
                    out.push(seg);
                    hole_sent = true;
                }
                self.cwnd = self.ssthresh + 3.0 * m;
            }
        }

        if self.stopped {
            return Vec::new();
        }
        if !hole_sent {
            out.extend(self.send_allowed(now));
        } else if self.timer.is_none() {
            self.arm_timer(now);
        }
        out
    }

    /// Retransmission-timer expiry: collapse to one segment, back off, and
    /// restart from the cumulative ack point.
    pub fn on_timeout(&mut self, now: f64) -> Vec<Segment> {
        if self.stopped {
            return Vec::new();
        }
        self.timeouts += 1;
        let m = f64::from(self.mss);
        self.ssthresh = (self.unsacked_flight() as f64 / 2.0).max(2.0 * m);
        self.cwnd = m;
        self.in_recovery = false;
        self.dup_acks = 0;
        self.rtt_probe = None;
        self.rto_ticks = (self.rto_ticks * 2).min(MAX_RTO_TICKS);
        self.snd_nxt = self.snd_una;
        self.timeout_recover = Some(self.snd_max);
        self.timer = None;
        let out = self.send_allowed(now);
        if self.timer.is_none() && self.snd_max > self.snd_una {
            self.arm_timer(now);
        }
        out
    }

    /// Applies one RTT measurement to the Jacobson estimator and recomputes
    /// the timeout.
    pub fn record_rtt_sample(&mut self, sample: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - sample).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
        }
        self.rto_ticks = rto_ticks(self.srtt, self.rttvar);
    }

    /// Timeout implied by the current estimator, ignoring backoff.
    pub fn compute_rto(&self) -> f64 {
        f64::from(rto_ticks(self.srtt, self.rttvar)) * RTO_TICK
    }

    fn take_rtt_sample(&mut self, cum_ack: u64, now: f64) {
        if let Some((seq_end, sent_at)) = self.rtt_probe {
            if cum_ack >= seq_end {
                self.rtt_probe = None;
                self.record_rtt_sample(now - sent_at);
            }
        }
    }

    fn arm_timer(&mut self, now: f64) {
        self.timer_generation += 1;
        self.timer = Some(RtoTimer {
            deadline: now + self.rto(),
            generation: self.timer_generation,
        });
    }

    fn segment_at(&mut self, start: u64, now: f64) -> Segment {
        let end = start + u64::from(self.mss);
        let is_retransmit = start < self.snd_max;
        if is_retransmit {
            self.retransmits += 1;
            // Karn: a retransmission makes any outstanding probe ambiguous.
            self.rtt_probe = None;
        } else if self.rtt_probe.is_none() {
            self.rtt_probe = Some((end, now));
        }
        self.snd_max = self.snd_max.max(end);
        Segment {
            flow: self.flow,
            seq_start: start,
            seq_end: end,
            wire_len: self.mss + HEADER_BYTES,
            is_retransmit,
        }
    }

    /// First unsacked segment at or after `rexmit_next` and below the highest
    /// SACKed byte, retransmitted now.
    fn next_hole(&mut self, now: f64) -> Option<Segment> {
        let mut pos = self.rexmit_next.max(self.snd_una);
        let limit = match self.scoreboard.highest_end() {
            Some(h) => h,
            // No SACK information: only the segment at the ack point is
            // known to be missing.
            None if pos == self.snd_una => self.snd_una + 1,
            None => return None,
        };
        while pos < limit {
            match self.scoreboard.covering_end(pos) {
                Some(end) => pos = end,
                None => {
                    let seg = self.segment_at(pos, now);
                    self.rexmit_next = seg.seq_end;
                    return Some(seg);
                }
            }
        }
        None
    }

    /// Sends as many segments as the window allows, skipping SACKed data.
    fn send_allowed(&mut self, now: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        if self.stopped {
            return out;
        }
        let m = u64::from(self.mss);
        let window = self.cwnd.min(self.rwnd);
        loop {
            if let Some(end) = self.scoreboard.covering_end(self.snd_nxt) {
                self.snd_nxt = end;
                continue;
            }
            let outstanding = self.snd_nxt - self.snd_una;
            if (outstanding + m) as f64 > window + 1e-9 {
                break;
            }
            let start = self.snd_nxt;
            let seg = self.segment_at(start, now);
            self.snd_nxt = seg.seq_end;
            out.push(seg);
        }
        if !out.is_empty() && self.timer.is_none() {
            self.arm_timer(now);
        }
        out
    }

    /// True when no SACK state is held above the ack point.
    pub fn scoreboard_is_empty(&self) -> bool {
        self.scoreboard.is_empty()
    }
}

/// `ceil((srtt + 4 * rttvar) / tick)` ticks, at least one tick and at most
/// 60 s; five ticks (1 s) before the first sample.
pub fn rto_ticks(srtt: Option<f64>, rttvar: f64) -> u32 {
    match srtt {
        None => INITIAL_RTO_TICKS,
        Some(srtt) => {
            let raw = (srtt + 4.0 * rttvar) / RTO_TICK;
            let ticks = (raw - 1e-9).ceil().max(1.0);
            (ticks as u32).min(MAX_RTO_TICKS)
        }
    }
}

/// Receiver side: cumulative ack plus up to three SACK blocks per ack, one
/// ack per arriving segment.
#[derive(Debug, Clone)]
pub struct TcpReceiver {
    flow: FlowId,
    rcv_nxt: u64,
    out_of_order: RangeSet,
}

impl TcpReceiver {
    pub fn new(flow: FlowId) -> Self {
        Self {
            flow,
            rcv_nxt: 0,
            out_of_order: RangeSet::default(),
        }
    }

    /// Bytes delivered in order to the application.
    pub fn delivered(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn on_segment_received(&mut self, seg: &Segment) -> AckPacket {
        assert_eq!(seg.flow, self.flow, "segment delivered to the wrong flow");
        let mut latest = None;
        if seg.seq_end > self.rcv_nxt {
            if seg.seq_start <= self.rcv_nxt {
                self.rcv_nxt = seg.seq_end;
                if let Some(end) = self.out_of_order.covering_end(self.rcv_nxt) {
                    self.rcv_nxt = end;
                }
                self.out_of_order.remove_below(self.rcv_nxt);
            } else {
                self.out_of_order.insert(seg.seq_start, seg.seq_end);
                latest = Some(seg.seq_start);
            }
        }

        let mut sack_blocks = ArrayVec::new();
        // The block holding the segment just received goes first, then the
        // highest remaining blocks.
        let mut first = None;
        if let Some(pos) = latest {
            if let Some(b) = self.out_of_order.iter().find(|b| b.start <= pos && pos < b.end) {
                sack_blocks.push(b);
                first = Some(b.start);
            }
        }
        for b in self.out_of_order.iter().rev() {
            if sack_blocks.is_full() {
                break;
            }
            if Some(b.start) != first {
                sack_blocks.push(b);
            }
        }
        AckPacket {
            flow: self.flow,
            cum_ack: self.rcv_nxt,
            sack_blocks,
        }
    }
}
