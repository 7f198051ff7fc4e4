//! Dumbbell topology: per-flow access links into router R1, the RED-managed
//! R1→R2 bottleneck, and a delay-only reverse path for acks.
//!
//! A run has three phases. Sources start at staggered times and are greedy
//! until `duration`. The measurement window is `[warmup, duration)`. After
//! `duration` the sources stop and the engine drains every packet still in
//! the network, so the per-flow packet ledgers balance.

use std::collections::VecDeque;

use thiserror::Error;

use crate::aqm::{AqmError, Outcome, RedParams, RedState, RedVariant};
use crate::metrics::{FlowLedger, GroupStats, MetricsError, QueueTrace, RunSummary};
use crate::simkernel::{RandomStream, Scheduler, SimTime};
use crate::transport::{
    AckPacket, FlowId, Segment, TcpReceiver, TcpSender, DEFAULT_RWND_SEGMENTS, HEADER_BYTES,
};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario field {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Red(#[from] AqmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSpec {
    pub flow_count: u32,
    pub mtu: u32,
}

impl GroupSpec {
    pub fn mss(&self) -> u32 {
        self.mtu - HEADER_BYTES
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub groups: Vec<GroupSpec>,
    /// Bits per second.
    pub bottleneck_rate: f64,
    /// One-way propagation delay of the bottleneck, seconds.
    pub bottleneck_delay: f64,
    pub access_rate: f64,
    /// Per-flow access propagation delay is uniform in `[0, jitter]`.
    pub access_delay_jitter: f64,
    /// Flow start times are uniform in `[0, start_spread]`.
    pub start_spread: f64,
    pub variant: RedVariant,
    pub red: RedParams,
    pub duration: f64,
    pub warmup: f64,
    pub seed: u64,
    pub rwnd_segments: u32,
    /// Queue sampling period in seconds; `None` disables tracing.
    pub trace_interval: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            groups: vec![
                GroupSpec { flow_count: 20, mtu: 1500 },
                GroupSpec { flow_count: 20, mtu: 750 },
                GroupSpec { flow_count: 20, mtu: 375 },
            ],
            bottleneck_rate: 30e6,
            bottleneck_delay: 0.015,
            access_rate: 100e6,
            access_delay_jitter: 0.001,
            start_spread: 1.0,
            variant: RedVariant::Red1,
            red: RedParams::default(),
            duration: 200.0,
            warmup: 20.0,
            seed: 1,
            rwnd_segments: DEFAULT_RWND_SEGMENTS,
            trace_interval: None,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        fn invalid(field: &'static str, reason: impl Into<String>) -> Result<(), ScenarioError> {
            Err(ScenarioError::Invalid {
                field,
                reason: reason.into(),
            })
        }
        if self.groups.is_empty() || self.total_flows() == 0 {
            return invalid("groups", "at least one flow is required");
        }
        for g in &self.groups {
            if g.mtu <= HEADER_BYTES {
                return invalid("groups", format!("MTU {} does not exceed the 40 B header", g.mtu));
            }
            if g.mtu > self.red.max_packet {
                return invalid(
                    "groups",
                    format!("MTU {} exceeds the RED maximum packet size {}", g.mtu, self.red.max_packet),
                );
            }
        }
        for (field, v) in [
            ("bottleneck_rate", self.bottleneck_rate),
            ("bottleneck_delay", self.bottleneck_delay),
            ("access_rate", self.access_rate),
            ("duration", self.duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(field, "must be positive");
            }
        }
        for (field, v) in [
            ("access_delay_jitter", self.access_delay_jitter),
            ("start_spread", self.start_spread),
            ("warmup", self.warmup),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(field, "must be non-negative");
            }
        }
        if self.warmup >= self.duration {
            return invalid("warmup", "must be less than duration");
        }
        if self.rwnd_segments == 0 {
            return invalid("rwnd_segments", "must be positive");
        }
        if let Some(iv) = self.trace_interval {
            if !(iv > 0.0) {
                return invalid("trace_interval", "must be positive");
            }
        }
        self.red.validate()?;
        Ok(())
    }

    pub fn total_flows(&self) -> u32 {
        self.groups.iter().map(|g| g.flow_count).sum()
    }

    /// Label such as `15ms`.
    pub fn delay_profile(&self) -> String {
        format!("{}ms", (self.bottleneck_delay * 1000.0).round() as u64)
    }
}

/// The bottleneck's buffer and its RED state.
#[derive(Debug, Clone)]
pub struct RouterQueue {
    pub red_state: RedState,
    pub red_params: RedParams,
    fifo: VecDeque<Segment>,
    bytes_queued: u64,
}

impl RouterQueue {
    pub fn new(variant: RedVariant, params: RedParams) -> Self {
        Self {
            red_state: RedState::new(variant),
            red_params: params,
            fifo: VecDeque::new(),
            bytes_queued: 0,
        }
    }

    /// Bytes waiting (excluding the packet on the wire).
    pub fn bytes_queued(&self) -> u64 {
        self.bytes_queued
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    /// Runs the AQM for `seg` and enqueues it if accepted.
    pub fn offer(&mut self, seg: Segment, u: f64) -> Outcome {
        let decision = self.red_state.on_arrival(
            &self.red_params,
            seg.wire_len,
            self.bytes_queued as f64,
            u,
        );
        if decision.outcome == Outcome::Accept {
            self.bytes_queued += u64::from(seg.wire_len);
            self.fifo.push_back(seg);
        }
        decision.outcome
    }

    pub fn pop(&mut self) -> Option<Segment> {
        let seg = self.fifo.pop_front()?;
        self.bytes_queued -= u64::from(seg.wire_len);
        Some(seg)
    }
}

#[derive(Debug)]
enum Ev {
    Start(FlowId),
    ArriveR1(Segment),
    LinkDone,
    DeliverData(Segment),
    DeliverAck(AckPacket),
    Rto { flow: FlowId, generation: u64 },
    WindowStart,
    Stop,
    Sample,
}

#[derive(Debug)]
struct FlowSlot {
    sender: TcpSender,
    receiver: TcpReceiver,
    ledger: FlowLedger,
    access_busy_until: f64,
    access_delay: f64,
    start_at: f64,
    scheduled_timer: u64,
}

#[derive(Debug)]
struct World {
    scenario: Scenario,
    flows: Vec<FlowSlot>,
    queue: RouterQueue,
    in_service: Option<Segment>,
    aqm_rng: RandomStream,
    in_window: bool,
    stopped: bool,
    last_departure: Option<f64>,
    pacing_violations: u64,
    bottleneck_busy: f64,
    trace: QueueTrace,
}

/// Per-run outputs.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub ledgers: Vec<FlowLedger>,
    pub events: u64,
    pub end_time: f64,
    /// Departures closer together than one serialization time (must be 0).
    pub pacing_violations: u64,
    /// Seconds the bottleneck spent transmitting.
    pub bottleneck_busy: f64,
    pub trace: QueueTrace,
    pub final_red_state: RedState,
}

impl RunResult {
    /// Flows whose ledger does not balance `sent = delivered + dropped`.
    pub fn conservation_violations(&self) -> Vec<u32> {
        self.ledgers
            .iter()
            .filter(|l| l.in_flight() != 0)
            .map(|l| l.flow_id)
            .collect()
    }

    pub fn window_secs(&self) -> f64 {
        self.scenario.duration - self.scenario.warmup
    }

    /// Group observables ordered by ascending MTU.
    pub fn group_stats(&self) -> Result<Vec<GroupStats>, MetricsError> {
        let mut order: Vec<usize> = (0..self.scenario.groups.len()).collect();
        order.sort_by_key(|&g| (self.scenario.groups[g].mtu, g));
        order
            .into_iter()
            .map(|g| {
                let members: Vec<&FlowLedger> =
                    self.ledgers.iter().filter(|l| l.group_id == g).collect();
                GroupStats::from_ledgers(g, self.scenario.groups[g].mtu, &members, self.window_secs())
            })
            .collect()
    }

    pub fn summary(&self, scenario_id: &str) -> Result<RunSummary, MetricsError> {
        Ok(RunSummary {
            scenario_id: scenario_id.to_string(),
            seed: self.scenario.seed,
            variant: self.scenario.variant,
            delay_profile: self.scenario.delay_profile(),
            bottleneck_rate: self.scenario.bottleneck_rate,
            groups: self.group_stats()?,
        })
    }
}

/// One simulation instance. Single-threaded; independent instances can run
/// on separate threads.
pub struct Simulation {
    sched: Scheduler<Ev>,
    world: World,
}

/// AQM draws come from stream 0; flow `i` uses stream `i + 1`.
pub const AQM_STREAM: u64 = 0;

impl Simulation {
    /// Wires up hosts, links and the bottleneck queue for `scenario`.
    pub fn build(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let mut flows = Vec::with_capacity(scenario.total_flows() as usize);
        for (group_id, g) in scenario.groups.iter().enumerate() {
            for _ in 0..g.flow_count {
                let id = FlowId(flows.len() as u32);
                let mut rng = RandomStream::substream(scenario.seed, u64::from(id.0) + 1);
                let access_delay = rng.uniform_in(0.0, scenario.access_delay_jitter);
                let start_at = rng.uniform_in(0.0, scenario.start_spread);
                flows.push(FlowSlot {
                    sender: TcpSender::with_rwnd(id, g.mss(), scenario.rwnd_segments),
                    receiver: TcpReceiver::new(id),
                    ledger: FlowLedger::new(id.0, group_id),
                    access_busy_until: 0.0,
                    access_delay,
                    start_at,
                    scheduled_timer: 0,
                });
            }
        }
        let mut sched = Scheduler::new();
        sched.schedule(SimTime::from_secs(scenario.warmup), Ev::WindowStart)
            .expect("warmup is non-negative");
        sched.schedule(SimTime::from_secs(scenario.duration), Ev::Stop)
            .expect("duration is positive");
        for (i, f) in flows.iter().enumerate() {
            sched
                .schedule(SimTime::from_secs(f.start_at), Ev::Start(FlowId(i as u32)))
                .expect("start offsets are non-negative");
        }
        if scenario.trace_interval.is_some() {
            sched.schedule(SimTime::ZERO, Ev::Sample).expect("time zero");
        }
        let world = World {
            scenario: scenario.clone(),
            flows,
            queue: RouterQueue::new(scenario.variant, scenario.red.clone()),
            in_service: None,
            aqm_rng: RandomStream::substream(scenario.seed, AQM_STREAM),
            in_window: scenario.warmup == 0.0,
            stopped: false,
            last_departure: None,
            pacing_violations: 0,
            bottleneck_busy: 0.0,
            trace: QueueTrace::default(),
        };
        Ok(Self { sched, world })
    }

    pub fn flow_count(&self) -> usize {
        self.world.flows.len()
    }

    /// Runs to `duration`, then drains the network.
    pub fn run(mut self) -> RunResult {
        let world = &mut self.world;
        let mut events = self
            .sched
            .run_until(SimTime::from_secs(world.scenario.duration), |s, ev| {
                world.dispatch(s, ev.action)
            });
        events += self.sched.run_to_completion(|s, ev| world.dispatch(s, ev.action));
        let end_time = self.sched.now().secs();
        let World {
            scenario,
            flows,
            queue,
            pacing_violations,
            bottleneck_busy,
            trace,
            ..
        } = self.world;
        RunResult {
            scenario,
            ledgers: flows
                .into_iter()
                .map(|f| {
                    let mut l = f.ledger;
                    l.retransmits = f.sender.retransmits();
                    l.timeouts = f.sender.timeouts();
                    l.fast_recoveries = f.sender.fast_recoveries();
                    l
                })
                .collect(),
            events,
            end_time,
            pacing_violations,
            bottleneck_busy,
            trace,
            final_red_state: queue.red_state,
        }
    }
}

/// Builds and runs `scenario` in one call.
pub fn simulate(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    Ok(Simulation::build(scenario)?.run())
}

impl World {
    fn dispatch(&mut self, s: &mut Scheduler<Ev>, ev: Ev) {
        let now = s.now().secs();
        match ev {
            Ev::Start(id) => {
                if self.stopped {
                    return;
                }
                let segs = self.flows[id.index()].sender.on_app_start(now);
                self.emit(s, id, segs);
            }
            Ev::ArriveR1(seg) => self.forward(s, seg),
            Ev::LinkDone => self.link_done(s),
            Ev::DeliverData(seg) => self.deliver_data(s, seg),
            Ev::DeliverAck(ack) => {
                let id = ack.flow;
                let slot = self.flows.get_mut(id.index()).expect("unknown flow id");
                let segs = slot.sender.on_ack(&ack, now);
                slot.ledger.record_acked(slot.sender.cum_acked());
                self.emit(s, id, segs);
            }
            Ev::Rto { flow, generation } => {
                let slot = &mut self.flows[flow.index()];
                if slot.sender.timer().map(|t| t.generation) == Some(generation) {
                    let segs = slot.sender.on_timeout(now);
                    self.emit(s, flow, segs);
                }
            }
            Ev::WindowStart => {
                self.in_window = true;
                for f in &mut self.flows {
                    f.ledger.acked_at_window_start = f.sender.cum_acked();
                }
            }
            Ev::Stop => {
                self.in_window = false;
                self.stopped = true;
                for f in &mut self.flows {
                    f.ledger.acked_at_window_end = f.sender.cum_acked();
                    f.sender.stop();
                }
            }
            Ev::Sample => {
                if self.stopped {
                    return;
                }
                let q = self.queue.bytes_queued() as f64;
                self.trace.push(now, q, self.queue.red_state.avg);
                if let Some(iv) = self.scenario.trace_interval {
                    s.schedule_in(iv, Ev::Sample);
                }
            }
        }
    }

    /// Sends segments over the flow's access link and keeps its timer event
    /// in step with the sender.
    fn emit(&mut self, s: &mut Scheduler<Ev>, id: FlowId, segs: Vec<Segment>) {
        let now = s.now().secs();
        let access_rate = self.scenario.access_rate;
        let slot = &mut self.flows[id.index()];
        for seg in segs {
            let start = slot.access_busy_until.max(now);
            let depart = start + f64::from(seg.wire_len) * 8.0 / access_rate;
            slot.access_busy_until = depart;
            slot.ledger.pkts_sent += 1;
            s.schedule(SimTime::from_secs(depart + slot.access_delay), Ev::ArriveR1(seg))
                .expect("future arrival");
        }
        if let Some(t) = slot.sender.timer() {
            if t.generation != slot.scheduled_timer {
                slot.scheduled_timer = t.generation;
                s.schedule(
                    SimTime::from_secs(t.deadline.max(now)),
                    Ev::Rto {
                        flow: id,
                        generation: t.generation,
                    },
                )
                .expect("future timer");
            }
        }
    }

    /// Bottleneck arrival: consult RED, then queue or transmit.
    fn forward(&mut self, s: &mut Scheduler<Ev>, seg: Segment) {
        let u = self.aqm_rng.next_uniform();
        let outcome = self.queue.offer(seg, u);
        self.flows[seg.flow.index()]
            .ledger
            .record_arrival(outcome, self.in_window);
        if outcome == Outcome::Accept && self.in_service.is_none() {
            self.start_service(s);
        }
    }

    fn serialization(&self, wire_len: u32) -> f64 {
        f64::from(wire_len) * 8.0 / self.scenario.bottleneck_rate
    }

    fn start_service(&mut self, s: &mut Scheduler<Ev>) {
        if let Some(seg) = self.queue.pop() {
            let tx = self.serialization(seg.wire_len);
            self.in_service = Some(seg);
            self.bottleneck_busy += tx;
            s.schedule_in(tx, Ev::LinkDone);
        }
    }

    fn link_done(&mut self, s: &mut Scheduler<Ev>) {
        let now = s.now().secs();
        let seg = self.in_service.take().expect("link finished with nothing on it");
        let tx = self.serialization(seg.wire_len);
        if let Some(prev) = self.last_departure {
            if now - prev < tx * (1.0 - 1e-9) {
                self.pacing_violations += 1;
            }
        }
        self.last_departure = Some(now);
        let slot = &self.flows[seg.flow.index()];
        let egress = f64::from(seg.wire_len) * 8.0 / self.scenario.access_rate;
        s.schedule_in(
            self.scenario.bottleneck_delay + egress + slot.access_delay,
            Ev::DeliverData(seg),
        );
        self.start_service(s);
    }

    fn deliver_data(&mut self, s: &mut Scheduler<Ev>, seg: Segment) {
        let delay = self.scenario.bottleneck_delay;
        let slot = self.flows.get_mut(seg.flow.index()).expect("unknown flow id");
        slot.ledger.pkts_delivered += 1;
        let ack = slot.receiver.on_segment_received(&seg);
        // Reverse path: lossless, delay only.
        s.schedule_in(delay + 2.0 * slot.access_delay, Ev::DeliverAck(ack));
    }
}
